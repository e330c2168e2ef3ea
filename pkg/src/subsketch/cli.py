"""Command-line entry point: ``subsketch {preprocess,train,evaluate,oracle-check,bench,dump}``.

Settings are resolved as defaults < ``--config`` JSON file < ``SUBSKETCH_<KEY>``
environment variables < flags. ``SUBSKETCH_DATA_DIR`` is not a setting; it is
the directory searched for named datasets such as ``cora``.

Exit codes: 0 ok, 1 usage or configuration error, 2 data or artifact error,
3 a metric threshold from the config was missed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .config import ENV_PREFIX, RunConfig, load_config
from .errors import ConfigError, SubsketchError
from .metrics import (
    METRIC_COLUMNS,
    TIMING_COLUMNS,
    MetricReport,
    PhaseTimer,
    summarize,
    write_csv,
    write_json,
)
from .pipeline import (
    evaluate_buddy,
    evaluate_heuristic,
    load_seed,
    prepare_seed,
    resolve_dataset,
    run_benchmark,
    save_seed,
    seed_dir,
    split_for,
    threshold_misses,
    train_seed,
)
from .predictor import Predictor
from .propagation import load_table
from .structure import estimate_counts_batch, exact_counts_batch

log = logging.getLogger("subsketch")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_THRESHOLD = 0, 1, 2, 3
DATA_DIR_ENV = ENV_PREFIX + "DATA_DIR"

HITS_HELP = (
    "Hits@K counts a positive only when it scores strictly above the K-th highest "
    "negative (ties are misses). MRR ranks each positive among its own negatives and "
    "splits ties evenly between the optimistic and pessimistic rank."
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--dataset", help="fixture:<name>, synthetic:<kind>:k=v,..., a path, or a name under $" + DATA_DIR_ENV)
    p.add_argument("--model", choices=("buddy", "cn", "aa", "ra"))
    p.add_argument("--hops", type=int)
    p.add_argument("--hll-p", type=int, dest="hll_precision")
    p.add_argument("--minhash-perms", type=int)
    seeds = p.add_mutually_exclusive_group()
    seeds.add_argument("--seed", type=int)
    seeds.add_argument("--seeds", help="comma-separated seeds")
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--max-epochs", type=int)
    mask = p.add_mutually_exclusive_group()
    mask.add_argument("--mask-query-edges", dest="mask_query_edges", action="store_true", default=None,
                      help="describe each training edge as if it were absent (default)")
    mask.add_argument("--no-mask-query-edges", dest="mask_query_edges", action="store_false",
                      help="compute structure features on the message graph as is")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = _Parser(prog="subsketch", description=__doc__, epilog=HITS_HELP,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("preprocess", parents=[common], help="build sketches, propagated features and edge-feature caches")
    sub.add_parser("train", parents=[common], help="train the predictor on preprocessed artifacts")
    sub.add_parser("evaluate", parents=[common], help="score valid/test splits; cn/aa/ra need no artifacts",
                   epilog=HITS_HELP)
    oc = sub.add_parser("oracle-check", parents=[common], help="compare estimated structure features with exact counts")
    oc.add_argument("--num-pairs", type=int, default=200)
    oc.add_argument("--pair-seed", type=int, default=0)
    oc.add_argument("--report", help="CSV path (default <out>/oracle_check.csv)")
    sub.add_parser("bench", parents=[common], help="preprocess, train and evaluate every seed with timing",
                   epilog=HITS_HELP)
    dp = sub.add_parser("dump", parents=[common], help="print one node's propagated sketch as text")
    dp.add_argument("--node", type=int, required=True, help="dense node id")
    dp.add_argument("--hop", type=int, default=None)
    return parser


def _overrides(ns: argparse.Namespace) -> dict:
    keys = ("dataset", "model", "hops", "hll_precision", "minhash_perms", "threads", "out", "max_epochs",
            "mask_query_edges")
    out = {k: getattr(ns, k) for k in keys if getattr(ns, k, None) is not None}
    if ns.seed is not None:
        out["seeds"] = (ns.seed,)
    elif ns.seeds is not None:
        out["seeds"] = ns.seeds
    return out


def _resolve_named_dataset(cfg: RunConfig, environ) -> RunConfig:
    """Map a bare dataset name to a directory under the data dir when one exists."""
    spec = cfg.dataset
    if ":" in spec or Path(spec).exists():
        return cfg
    data_dir = environ.get(DATA_DIR_ENV)
    if data_dir:
        for cand in (Path(data_dir) / spec, Path(data_dir) / spec.lower()):
            if cand.exists():
                return replace(cfg, dataset=str(cand), dataset_name=cfg.dataset_name or spec.lower())
    return cfg


def resolve_config(ns: argparse.Namespace, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    cfg = load_config(ns.config, _overrides(ns), environ)
    return _resolve_named_dataset(cfg, environ)


# ------------------------------------------------------------------ commands


def _write_timing(timer: PhaseTimer, path: Path, dataset: str, seed: int) -> None:
    write_csv(timer.reports(dataset, seed), path, TIMING_COLUMNS)


def cmd_preprocess(cfg: RunConfig, stream=None) -> dict[int, str]:
    """Build per-seed artifacts; seeds whose manifest hash matches are skipped."""
    cfg = replace(cfg, use_structure_features=True)
    graph = name = None
    status = {}
    for seed in cfg.seeds:
        d = seed_dir(cfg.out, seed)
        manifest = d / "manifest.json"
        if manifest.exists():
            m = json.loads(manifest.read_text())
            if m.get("config_hash") == cfg.preprocess_digest() and m.get("seed") == seed:
                print(f"seed {seed}: up to date ({d})", file=stream)
                status[seed] = "up to date"
                continue
        if graph is None:
            graph, name = resolve_dataset(cfg)
        timer = PhaseTimer()
        t0 = time.perf_counter()
        sa = prepare_seed(graph, cfg, seed, name, timer)
        save_seed(sa, d, cfg, graph)
        wall = time.perf_counter() - t0
        _write_timing(timer, d / "preprocess_timing.csv", name, seed)
        phases = " + ".join(f"{r.phase} {r.seconds:.3f}s" for r in timer.reports(name, seed))
        print(f"seed {seed}: built {d}: {phases} = {timer.total():.3f}s "
              f"(plus {wall - timer.total():.3f}s splitting and I/O)", file=stream)
        status[seed] = "built"
    return status


def _history_rows(history):
    return [asdict(h) for h in history]


def cmd_train(cfg: RunConfig, stream=None) -> list[MetricReport]:
    if cfg.model != "buddy":
        raise ConfigError(f"model {cfg.model!r} has no trainable parameters; use `subsketch evaluate`")
    graph, name = resolve_dataset(cfg)
    reports = []
    for seed in cfg.seeds:
        d = seed_dir(cfg.out, seed)
        sa = load_seed(d, cfg, graph, seed)
        timer = PhaseTimer()
        model, history = train_seed(sa, cfg, timer)
        model.save(d / "checkpoint.bin", {"preprocess_hash": cfg.preprocess_digest(), "run_hash": cfg.digest()})
        write_csv(_history_rows(history), d / "history.csv", ["epoch", "loss", "val_metric", "seconds"])
        _write_timing(timer, d / "train_timing.csv", name, seed)
        best = max(history, key=lambda h: h.val_metric)
        print(f"seed {seed}: {len(history)} epochs, best valid hits@{cfg.eval_k} {best.val_metric:.4f} "
              f"at epoch {best.epoch}", file=stream)
        reports.append(MetricReport("hits", cfg.eval_k, best.val_metric, "valid", seed, "buddy", name,
                                    len(sa.split.valid_pos), len(sa.split.valid_neg)))
    return reports


def cmd_evaluate(cfg: RunConfig, stream=None) -> list[MetricReport]:
    graph, name = resolve_dataset(cfg)
    reports: list[MetricReport] = []
    for seed in cfg.seeds:
        if cfg.model == "buddy":
            d = seed_dir(cfg.out, seed)
            sa = load_seed(d, cfg, graph, seed)
            model, header = Predictor.load(d / "checkpoint.bin")
            if header.get("preprocess_hash") != cfg.preprocess_digest():
                raise ConfigError(f"{d / 'checkpoint.bin'} was trained on different artifacts; rerun `subsketch train`")
            reports += evaluate_buddy(model, sa, cfg, name)
        else:
            reports += evaluate_heuristic(split_for(graph, cfg, seed, name), cfg.model, cfg, seed, name)
    out = Path(cfg.out)
    write_csv(reports, out / f"metrics_{cfg.model}.csv", METRIC_COLUMNS)
    for r in reports:
        print(f"seed {r.seed} {r.split} {r.metric}{'@' + str(r.k) if r.metric == 'hits' else ''}: {r.value:.4f}",
              file=stream)
    return reports


def feature_names(k: int) -> list[str]:
    names = [f"A[{x},{y}]" for x in range(1, k + 1) for y in range(1, k + 1)]
    names += [f"B_u[{d}]" for d in range(1, k + 1)]
    names += [f"B_v[{d}]" for d in range(1, k + 1)]
    return names


ORACLE_COLUMNS = ["feature", "pairs", "mean_exact", "mae", "relative_error", "worst_abs_error",
                  "worst_u", "worst_v", "worst_exact", "worst_estimate"]


def oracle_report(table, graph, pairs: np.ndarray, k: int, mask_query_edges: bool = False) -> list[dict]:
    """Per-feature error statistics of the estimator against exact counts.

    The relative error is total absolute error over total exact count.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        return []
    est = estimate_counts_batch(table, graph, pairs, k, mask_query_edges=mask_query_edges)
    exact = exact_counts_batch(graph, pairs, k, mask_query_edges)
    err = np.abs(est - exact)
    rows = []
    for c, fname in enumerate(feature_names(k)):
        i = int(np.argmax(err[:, c]))
        total = float(exact[:, c].sum())
        rows.append({
            "feature": fname,
            "pairs": len(pairs),
            "mean_exact": float(exact[:, c].mean()),
            "mae": float(err[:, c].mean()),
            "relative_error": float(err[:, c].sum() / total) if total > 0 else 0.0,
            "worst_abs_error": float(err[i, c]),
            "worst_u": int(pairs[i, 0]),
            "worst_v": int(pairs[i, 1]),
            "worst_exact": float(exact[i, c]),
            "worst_estimate": float(est[i, c]),
        })
    return rows


def sample_check_pairs(graph, num_pairs: int, seed: int) -> np.ndarray:
    """Half existing edges, half uniformly random distinct node pairs."""
    rng = np.random.default_rng([seed, 0x4F43])
    if num_pairs <= 0:
        return np.zeros((0, 2), dtype=np.int64)
    edges = graph.edges()
    n_edge = min(num_pairs // 2, len(edges))
    picked = edges[rng.choice(len(edges), n_edge, replace=False)] if n_edge else np.zeros((0, 2), dtype=np.int64)
    n_rand = num_pairs - n_edge
    u = rng.integers(0, graph.num_nodes, n_rand)
    v = (u + rng.integers(1, graph.num_nodes, n_rand)) % graph.num_nodes
    return np.concatenate([picked, np.stack([u, v], axis=1)]).astype(np.int64)


def cmd_oracle_check(cfg: RunConfig, num_pairs: int, pair_seed: int = 0, report=None,
                     pairs: np.ndarray | None = None, stream=None) -> list[dict]:
    """Uses the training message graph of the first seed and its persisted sketches."""
    graph, _ = resolve_dataset(cfg)
    seed = cfg.seeds[0]
    sa = load_seed(seed_dir(cfg.out, seed), replace(cfg, model="cn", use_structure_features=False), graph, seed)
    art = sa.train
    if pairs is None:
        pairs = sample_check_pairs(art.graph, num_pairs, pair_seed)
    rows = oracle_report(art.table, art.graph, pairs, cfg.hops, cfg.mask_query_edges)
    path = Path(report) if report else Path(cfg.out) / "oracle_check.csv"
    write_csv(rows, path, ORACLE_COLUMNS)
    for r in rows:
        print(f"{r['feature']:>8}  mae {r['mae']:.4f}  rel {r['relative_error']:.4f}", file=stream)
    print(f"wrote {path}", file=stream)
    return rows


def cmd_bench(cfg: RunConfig, stream=None):
    """Returns (metric reports, timing reports, summary rows, threshold misses)."""
    results, name = run_benchmark(cfg)
    out = Path(cfg.out)
    metrics = [r for res in results for r in res.metrics]
    timings = [t for res in results for t in res.timer.reports(name, res.seed)]
    summary = summarize(metrics)
    write_csv(metrics, out / "metrics.csv", METRIC_COLUMNS)
    write_csv(timings, out / "timing.csv", TIMING_COLUMNS)
    write_csv(summary, out / "summary.csv", ["model", "split", "metric", "k", "mean", "std", "runs"])
    write_json({"dataset": name, "config": cfg.to_dict(), "config_hash": cfg.digest(), "summary": summary},
               out / "summary.json")
    for res in results:
        if res.history:
            d = seed_dir(out, res.seed)
            d.mkdir(parents=True, exist_ok=True)
            write_csv(_history_rows(res.history), d / "history.csv", ["epoch", "loss", "val_metric", "seconds"])
            res.model.save(d / "checkpoint.bin", {"preprocess_hash": cfg.preprocess_digest(), "run_hash": cfg.digest()})
    for row in summary:
        label = f"{row['split']} {row['metric']}" + (f"@{row['k']}" if row["metric"] == "hits" else "")
        print(f"{row['model']} {label}: {row['mean']:.4f} +/- {row['std']:.4f} ({row['runs']} runs)", file=stream)
    misses = threshold_misses(cfg, summary)
    for m in misses:
        print(f"threshold missed: {m}", file=stream)
    return metrics, timings, summary, misses


def cmd_dump(cfg: RunConfig, node: int, hop: int | None, stream=None) -> str:
    seed = cfg.seeds[0]
    table, _, _ = load_table(seed_dir(cfg.out, seed) / "train_graph", cfg.sketch_config(seed))
    hop = table.hops if hop is None else hop
    if not (0 <= node < table.num_nodes and 0 <= hop <= table.hops):
        raise ConfigError(f"node must be in [0, {table.num_nodes}) and hop in [0, {table.hops}]")
    text = f"node={node} hop={hop}\n" + table.node_sketch(node, hop).dump_text()
    print(text, file=stream)
    return text


# ------------------------------------------------------------------ entry point


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(ns)
        if ns.command == "preprocess":
            cmd_preprocess(cfg)
        elif ns.command == "train":
            cmd_train(cfg)
        elif ns.command == "evaluate":
            cmd_evaluate(cfg)
        elif ns.command == "oracle-check":
            cmd_oracle_check(cfg, ns.num_pairs, ns.pair_seed, ns.report)
        elif ns.command == "bench":
            if cmd_bench(cfg)[3]:
                return EXIT_THRESHOLD
        elif ns.command == "dump":
            cmd_dump(cfg, ns.node, ns.hop)
    except ConfigError as exc:
        print(f"subsketch: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SubsketchError, OSError, ValueError, csv.Error) as exc:
        print(f"subsketch: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
