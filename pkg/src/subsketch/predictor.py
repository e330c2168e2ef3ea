"""MLP link predictor over Hadamard products of node features and pair structure features."""

from __future__ import annotations

import hashlib
import json
import logging
import struct
import time
from collections.abc import Callable
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    ArtifactError,
    ConfigError,
    DimensionError,
    IncompatibleError,
    TrainingDivergedError,
)
from .metrics import hits_at_k

log = logging.getLogger(__name__)

_CKPT_MAGIC = b"BDY1"


@dataclass(frozen=True)
class PredictorConfig:
    hidden_dims: tuple[int, ...] = (256, 256)
    dropout: float = 0.5
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    batch_size: int = 1024
    max_epochs: int = 100
    patience: int = 20
    use_node_features: bool = True
    use_structure_features: bool = True
    eval_k: int = 100
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if not (self.use_node_features or self.use_structure_features):
            raise ConfigError("enable node features, structure features or both")
        if any(h < 1 for h in self.hidden_dims):
            raise ConfigError("hidden widths must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("learning_rate, batch_size, max_epochs and patience must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class Predictor:
    """Weights ``weights[i]`` of shape (fan_in, fan_out); last layer has one output."""

    cfg: PredictorConfig
    node_dim: int
    sf_dim: int
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    sf_mean: np.ndarray = field(default_factory=lambda: np.zeros(0, np.float32))
    sf_std: np.ndarray = field(default_factory=lambda: np.zeros(0, np.float32))

    @classmethod
    def init(cls, cfg: PredictorConfig, node_dim: int, sf_dim: int, dtype=np.float32) -> Predictor:
        rng = np.random.default_rng([cfg.seed, 1])
        in_dim = (node_dim if cfg.use_node_features else 0) + (sf_dim if cfg.use_structure_features else 0)
        dims = [in_dim, *cfg.hidden_dims, 1]
        ws, bs = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(max(fan_in, 1))
            ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype))
            bs.append(np.zeros(fan_out, dtype=dtype))
        return cls(
            cfg,
            node_dim,
            sf_dim,
            ws,
            bs,
            np.zeros(sf_dim, np.float32),
            np.ones(sf_dim, np.float32),
        )

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def params(self) -> list[np.ndarray]:
        return [p for wb in zip(self.weights, self.biases) for p in wb]

    def astype(self, dtype) -> Predictor:
        return replace(
            self,
            weights=[w.astype(dtype) for w in self.weights],
            biases=[b.astype(dtype) for b in self.biases],
        )

    def copy(self) -> Predictor:
        return replace(self, weights=[w.copy() for w in self.weights], biases=[b.copy() for b in self.biases])

    # -------------------------------------------------------------- inputs

    def fit_normalizer(self, sf_rows: np.ndarray) -> None:
        if self.sf_dim == 0 or len(sf_rows) == 0:
            return
        mean = sf_rows.mean(axis=0)
        std = sf_rows.std(axis=0)
        self.sf_mean = mean.astype(np.float32)
        self.sf_std = np.where(std > 1e-6, std, 1.0).astype(np.float32)

    def assemble(self, zu: np.ndarray | None, zv: np.ndarray | None, sf: np.ndarray | None) -> np.ndarray:
        """Model input rows: [zu * zv] and/or standardized structure features."""
        parts = []
        dtype = self.weights[0].dtype
        if self.cfg.use_node_features:
            if zu is None or zv is None or zu.shape[-1] != self.node_dim or zv.shape != zu.shape:
                raise DimensionError(f"node feature rows must have width {self.node_dim}")
            parts.append((zu * zv).astype(dtype, copy=False))
        if self.cfg.use_structure_features:
            if sf is None or sf.shape[-1] != self.sf_dim:
                raise DimensionError(f"structure feature rows must have width {self.sf_dim}")
            parts.append(((sf - self.sf_mean) / self.sf_std).astype(dtype, copy=False))
        return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=1)

    # -------------------------------------------------------------- network

    def forward(self, x: np.ndarray, train: bool = False, rng: np.random.Generator | None = None, masks=None):
        """Logits for input rows ``x``; returns (logits, cache) for backprop."""
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise DimensionError(f"expected input width {self.input_dim}, got {x.shape}")
        acts = [x]
        used_masks = []
        h = x
        p = self.cfg.dropout
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < len(self.weights) - 1:
                h = np.maximum(h, 0)
                if train and p > 0:
                    if masks is not None:
                        mask = masks[i]
                    else:
                        mask = (rng.random(h.shape) >= p).astype(h.dtype) / h.dtype.type(1 - p)
                    h = h * mask
                    used_masks.append(mask)
                else:
                    used_masks.append(None)
                acts.append(h)
        return h[:, 0], (acts, used_masks)

    def backward(self, cache, dlogits: np.ndarray) -> list[np.ndarray]:
        """Gradients in ``params`` order for upstream gradient ``dlogits``."""
        acts, masks = cache
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        dh = dlogits[:, None].astype(self.weights[0].dtype)
        for i in range(len(self.weights) - 1, -1, -1):
            a = acts[i]
            grads_w[i] = a.T @ dh
            grads_b[i] = dh.sum(axis=0)
            if i > 0:
                dh = dh @ self.weights[i].T
                if masks[i - 1] is not None:
                    dh = dh * masks[i - 1]
                dh = dh * (acts[i] > 0)
        return [g for wb in zip(grads_w, grads_b) for g in wb]

    def logits(self, x: np.ndarray, chunk: int = 8192) -> np.ndarray:
        out = np.empty(len(x), dtype=np.float64)
        for s in range(0, len(x), chunk):
            out[s : s + chunk] = self.forward(x[s : s + chunk])[0]
        return out

    def forward_pair(self, zu, zv, sf) -> float:
        zu = None if zu is None else np.asarray(zu)[None, :]
        zv = None if zv is None else np.asarray(zv)[None, :]
        sf = None if sf is None else np.asarray(sf)[None, :]
        return float(self.forward(self.assemble(zu, zv, sf))[0][0])

    # -------------------------------------------------------------- persistence

    def save(self, path, extra: dict | None = None) -> None:
        header = {
            "config": self.cfg.to_dict(),
            "config_hash": self.cfg.digest(),
            "node_dim": self.node_dim,
            "sf_dim": self.sf_dim,
            "shapes": [list(p.shape) for p in self.params],
            "seed": self.cfg.seed,
            **(extra or {}),
        }
        blob = json.dumps(header, sort_keys=True).encode()
        p = Path(path)
        try:
            with open(p, "wb") as fh:
                fh.write(_CKPT_MAGIC + struct.pack("<I", len(blob)) + blob)
                fh.writelines(np.ascontiguousarray(arr, dtype="<f4").tobytes() for arr in self.params)
                fh.write(np.ascontiguousarray(self.sf_mean, dtype="<f4").tobytes())
                fh.write(np.ascontiguousarray(self.sf_std, dtype="<f4").tobytes())
        except OSError as exc:
            raise ArtifactError(f"failed writing checkpoint {p}: {exc}") from exc

    @classmethod
    def load(cls, path) -> tuple[Predictor, dict]:
        p = Path(path)
        try:
            raw = p.read_bytes()
        except OSError as exc:
            raise ArtifactError(f"cannot read checkpoint {p}: {exc}; run `subsketch train` first") from exc
        if raw[:4] != _CKPT_MAGIC:
            raise IncompatibleError(f"{p}: not a predictor checkpoint")
        (n,) = struct.unpack("<I", raw[4:8])
        header = json.loads(raw[8 : 8 + n])
        cfg_d = dict(header["config"])
        cfg = PredictorConfig(**cfg_d)
        if cfg.digest() != header["config_hash"]:
            raise IncompatibleError(f"{p}: config hash mismatch")
        off = 8 + n
        arrays = []
        for shape in header["shapes"] + [[header["sf_dim"]], [header["sf_dim"]]]:
            count = int(np.prod(shape))
            arrays.append(np.frombuffer(raw, "<f4", count, off).astype(np.float32).reshape(shape))
            off += 4 * count
        params, sf_mean, sf_std = arrays[:-2], arrays[-2], arrays[-1]
        model = cls(cfg, header["node_dim"], header["sf_dim"], params[0::2], params[1::2], sf_mean, sf_std)
        return model, header


# ------------------------------------------------------------------ loss / optimizer


def bce_with_logits(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient w.r.t. the logits."""
    x = logits.astype(np.float64)
    loss = np.maximum(x, 0) - x * labels + np.log1p(np.exp(-np.abs(x)))
    sig = 0.5 * (1.0 + np.tanh(0.5 * x))
    return float(loss.mean()), ((sig - labels) / len(x)).astype(logits.dtype)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float, weight_decay: float = 0.0, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.wd = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if self.wd:
                g = g + self.wd * p
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


# ------------------------------------------------------------------ training


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    val_metric: float
    seconds: float


@dataclass
class TrainingData:
    """Everything the training loop needs, as callbacks over pair arrays.

    ``train_inputs(pairs)`` returns (zu, zv, sf) for pairs on the training
    message graph; ``sample_negatives(count, rng)`` draws training negatives.
    """

    train_pos: np.ndarray
    train_inputs: Callable[[np.ndarray], tuple]
    sample_negatives: Callable[[int, np.random.Generator], np.ndarray]
    valid_pos_inputs: tuple
    valid_neg_inputs: tuple
    node_dim: int
    sf_dim: int


def train(data: TrainingData, cfg: PredictorConfig, timer=None) -> tuple[Predictor, list[EpochRecord]]:
    """Minibatch Adam on BCE with one fresh negative per positive each epoch.

    Early-stops on validation Hits@K and returns the best checkpoint.
    """
    model = Predictor.init(cfg, data.node_dim, data.sf_dim)
    rng = np.random.default_rng([cfg.seed, 2])
    pos_in = data.train_inputs(data.train_pos)
    if cfg.use_structure_features:
        norm_neg = data.sample_negatives(len(data.train_pos), np.random.default_rng([cfg.seed, 3]))
        norm_sf = np.concatenate([pos_in[2], data.train_inputs(norm_neg)[2]])
        model.fit_normalizer(norm_sf)
    x_pos = model.assemble(*pos_in)
    x_vpos = model.assemble(*data.valid_pos_inputs)
    x_vneg = model.assemble(*data.valid_neg_inputs)
    k_eval = min(cfg.eval_k, len(x_vneg))
    opt = Adam(model.params, cfg.learning_rate, cfg.weight_decay)
    best, best_val, stale = model.copy(), -1.0, 0
    history: list[EpochRecord] = []
    n_pos = len(x_pos)
    labels_all = np.concatenate([np.ones(n_pos), np.zeros(n_pos)]).astype(np.float32)
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        neg = data.sample_negatives(n_pos, rng)
        x = np.concatenate([x_pos, model.assemble(*data.train_inputs(neg))])
        order = rng.permutation(len(x))
        total, seen = 0.0, 0
        for b, s in enumerate(range(0, len(x), cfg.batch_size)):
            idx = order[s : s + cfg.batch_size]
            logits, cache = model.forward(x[idx], train=True, rng=rng)
            loss, dlog = bce_with_logits(logits, labels_all[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, b)
            opt.step(model.params, model.backward(cache, dlog))
            total += loss * len(idx)
            seen += len(idx)
        val = hits_at_k(model.logits(x_vpos), model.logits(x_vneg), k_eval)
        dt = time.perf_counter() - t0
        if timer is not None:
            timer.seconds["train_epoch"] += dt
            timer.items["train_epoch"] += 1
        history.append(EpochRecord(epoch, total / seen, val, dt))
        log.debug("epoch %d loss %.4f val@%d %.4f", epoch, total / seen, k_eval, val)
        if val > best_val:
            best, best_val, stale = model.copy(), val, 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return best, history


def gradient_check(model: Predictor, x: np.ndarray, labels: np.ndarray, eps: float = 1e-6) -> float:
    """Worst per-tensor relative error ||g - g_fd|| / (||g|| + ||g_fd||), float64, no dropout."""
    m = model.astype(np.float64)
    x = x.astype(np.float64)

    def loss_at():
        return bce_with_logits(m.forward(x)[0], labels)[0]

    logits, cache = m.forward(x)
    grads = m.backward(cache, bce_with_logits(logits, labels)[1])
    worst = 0.0
    for p, g in zip(m.params, grads):
        num = np.empty_like(p)
        flat, nflat = p.reshape(-1), num.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            lp = loss_at()
            flat[i] = old - eps
            lm = loss_at()
            flat[i] = old
            nflat[i] = (lp - lm) / (2 * eps)
        denom = np.linalg.norm(g) + np.linalg.norm(num)
        if denom > 0:
            worst = max(worst, float(np.linalg.norm(g - num) / denom))
    return worst
