"""Ranking metrics, report records, phase timing and CSV/JSON emitters."""

from __future__ import annotations

import csv
import json
import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

PHASES = ("hashing", "feature_propagation", "structure_features", "train_epoch", "inference")


def hits_at_k(pos_scores, neg_scores, k: int) -> float:
    """Fraction of positives scoring strictly above the k-th highest negative.

    Ties with the threshold count as misses.
    """
    pos = np.asarray(pos_scores, dtype=np.float64).ravel()
    neg = np.asarray(neg_scores, dtype=np.float64).ravel()
    if k < 1 or k > len(neg):
        raise ValueError(f"K={k} needs at least K negatives, got {len(neg)}")
    if len(pos) == 0:
        raise ValueError("no positive scores")
    threshold = np.partition(neg, len(neg) - k)[len(neg) - k]
    return float(np.mean(pos > threshold))


def mrr(pos_scores, per_pos_neg_scores) -> float:
    """Mean reciprocal rank of each positive among its own negatives.

    Ties are split evenly between the optimistic and pessimistic rank.
    """
    pos = np.asarray(pos_scores, dtype=np.float64).ravel()
    if isinstance(per_pos_neg_scores, np.ndarray) and per_pos_neg_scores.ndim == 2:
        negs = list(per_pos_neg_scores)
    else:
        negs = [np.asarray(n, dtype=np.float64).ravel() for n in per_pos_neg_scores]
    if len(negs) != len(pos) or len(pos) == 0:
        raise ValueError("need one negative list per positive")
    ranks = np.empty(len(pos))
    for i, (p, n) in enumerate(zip(pos, negs)):
        if len(n) == 0:
            raise ValueError(f"positive {i} has an empty negative list")
        ranks[i] = 0.5 * (np.sum(n > p) + np.sum(n >= p)) + 1.0
    return float(np.mean(1.0 / ranks))


@dataclass(frozen=True)
class MetricReport:
    metric: str
    k: int
    value: float
    split: str
    seed: int
    model: str = ""
    dataset: str = ""
    num_pos: int = 0
    num_neg: int = 0

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"metric value {self.value} outside [0, 1]")


@dataclass(frozen=True)
class TimingReport:
    phase: str
    seconds: float
    dataset: str = ""
    seed: int = 0
    items: int = 0

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase {self.phase!r}")
        if self.seconds < 0:
            raise ValueError("negative duration")


class PhaseTimer:
    """Accumulates wall time per phase."""

    def __init__(self):
        self.seconds: dict[str, float] = defaultdict(float)
        self.items: dict[str, int] = defaultdict(int)

    @contextmanager
    def phase(self, name: str, items: int = 0):
        if name not in PHASES:
            raise ValueError(f"unknown phase {name!r}")
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[name] += time.perf_counter() - t0
            self.items[name] += items

    def reports(self, dataset: str = "", seed: int = 0) -> list[TimingReport]:
        """One report per phase; ``train_epoch`` is the mean over epochs."""
        out = []
        for p in PHASES:
            if p not in self.seconds:
                continue
            secs = self.seconds[p]
            if p == "train_epoch" and self.items[p]:
                secs /= self.items[p]
            out.append(TimingReport(p, secs, dataset, seed, self.items[p]))
        return out

    def total(self) -> float:
        return float(sum(self.seconds.values()))


def summarize(reports: list[MetricReport]) -> list[dict]:
    """Mean and sample std per (model, split, metric, k) over seeds."""
    groups: dict[tuple, list[float]] = defaultdict(list)
    for r in reports:
        groups[(r.model, r.split, r.metric, r.k)].append(r.value)
    out = []
    for (model, split, metric, k), vals in sorted(groups.items()):
        v = np.asarray(vals)
        out.append(
            {
                "model": model,
                "split": split,
                "metric": metric,
                "k": k,
                "mean": float(v.mean()),
                "std": float(v.std(ddof=1)) if len(v) > 1 else 0.0,
                "runs": len(v),
            }
        )
    return out


def _fmt(v):
    return f"{v:.6f}" if isinstance(v, float) else v


def write_csv(rows, path, columns: list[str] | None = None) -> None:
    rows = [asdict(r) if hasattr(r, "__dataclass_fields__") else dict(r) for r in rows]
    if columns is None:
        columns = list(rows[0]) if rows else []
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])


def write_json(obj, path) -> None:
    def conv(o):
        if hasattr(o, "__dataclass_fields__"):
            return asdict(o)
        if isinstance(o, list):
            return [conv(x) for x in o]
        return o

    Path(path).write_text(json.dumps(conv(obj), indent=2, sort_keys=True))


METRIC_COLUMNS = [f.name for f in fields(MetricReport)]
TIMING_COLUMNS = [f.name for f in fields(TimingReport)]
