"""Run configuration: defaults < JSON file < SUBSKETCH_* environment < command-line flags."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .predictor import PredictorConfig
from .sketch import SketchConfig

ENV_PREFIX = "SUBSKETCH_"
MODELS = ("buddy", "cn", "aa", "ra")

# keys that decide preprocessing artifacts; anything else only affects training/eval
PREPROCESS_KEYS = (
    "dataset",
    "dataset_name",
    "largest_component",
    "fractions",
    "num_negatives",
    "valid_in_eval_graph",
    "split_seed",
    "hops",
    "hll_precision",
    "minhash_perms",
    "sketch_seed",
    "mask_query_edges",
    "use_node_features",
)


@dataclass(frozen=True)
class RunConfig:
    dataset: str = "fixture:c6"
    dataset_name: str | None = None
    largest_component: bool = False
    fractions: tuple[float, float, float] = (0.7, 0.1, 0.2)
    num_negatives: int = 1000
    valid_in_eval_graph: bool | None = None  # None: per-dataset default
    split_seed: int | None = None  # fixed split for every seed when set
    seeds: tuple[int, ...] = (0,)
    model: str = "buddy"
    hops: int = 2
    hll_precision: int = 8
    minhash_perms: int = 128
    sketch_seed: int | None = None  # None: follow the run seed
    hidden_dims: tuple[int, ...] = (256, 256)
    dropout: float = 0.5
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    batch_size: int = 1024
    max_epochs: int = 100
    patience: int = 20
    use_node_features: bool = True
    use_structure_features: bool = True
    mask_query_edges: bool = True  # describe a training edge as if it were absent from the graph
    eval_k: int = 100
    threads: int = 1
    out: str = "runs/default"
    thresholds: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.hops < 1:
            raise ConfigError("hops must be >= 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        self.sketch_config(self.seeds[0])
        if self.model == "buddy":
            self.predictor_config(self.seeds[0])

    def sketch_config(self, seed: int) -> SketchConfig:
        s = seed if self.sketch_seed is None else self.sketch_seed
        return SketchConfig(self.hll_precision, self.minhash_perms, s)

    def predictor_config(self, seed: int) -> PredictorConfig:
        return PredictorConfig(
            hidden_dims=self.hidden_dims,
            dropout=self.dropout,
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            use_node_features=self.use_node_features,
            use_structure_features=self.use_structure_features,
            eval_k=self.eval_k,
            seed=seed,
        )

    def split_seed_for(self, seed: int) -> int:
        return seed if self.split_seed is None else self.split_seed

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("fractions", "seeds", "hidden_dims"):
            d[k] = list(d[k])
        return d

    def digest(self, keys=None) -> str:
        d = self.to_dict()
        keys = keys or [k for k in d if k not in ("out", "threads")]
        payload = json.dumps({k: d[k] for k in sorted(keys)}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def preprocess_digest(self) -> str:
        return self.digest(PREPROCESS_KEYS)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(key: str, value):
    """Convert a string (from env or flags) or JSON value to the field's type."""
    default = _FIELDS[key].default
    if key == "thresholds":
        if isinstance(value, str):
            value = json.loads(value)
        if not isinstance(value, dict):
            raise ConfigError("thresholds must be a mapping of metric name to minimum value")
        return {str(k): float(v) for k, v in value.items()}
    if not isinstance(value, str):
        return value
    v = value.strip()
    if key in ("fractions", "seeds", "hidden_dims"):
        parts = [p for p in v.replace(",", " ").split() if p]
        conv = float if key == "fractions" else int
        return tuple(conv(p) for p in parts)
    if key in ("valid_in_eval_graph",) or isinstance(default, bool):
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        if key == "valid_in_eval_graph" and v.lower() in ("", "none", "auto"):
            return None
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if key in ("split_seed", "sketch_seed"):
        return None if v.lower() in ("", "none") else int(v)
    if isinstance(default, int):
        return int(v)
    if isinstance(default, float):
        return float(v)
    return v


def _check_keys(d: dict, source: str) -> None:
    unknown = sorted(set(d) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config keys in {source}: {', '.join(unknown)}")


def load_config(path=None, overrides: dict | None = None, environ=None) -> RunConfig:
    values: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        _check_keys(raw, str(path))
        values.update({k: _coerce(k, v) for k, v in raw.items()})
    env = os.environ if environ is None else environ
    env_values = {k[len(ENV_PREFIX) :].lower(): v for k, v in env.items() if k.startswith(ENV_PREFIX)}
    env_values.pop("data_dir", None)
    _check_keys(env_values, "environment")
    values.update({k: _coerce(k, v) for k, v in env_values.items()})
    if overrides:
        _check_keys(overrides, "command line")
        values.update({k: _coerce(k, v) for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    return replace(cfg, **kw)
