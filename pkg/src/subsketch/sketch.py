"""HyperLogLog and MinHash sketches over integer node ids.

Both sketches are vectorised over numpy arrays so that whole tables of
per-node sketches (one row per node) can be built, merged and queried with
the same code paths as single sketches.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError, IncompatibleError

MERSENNE_61 = np.uint64((1 << 61) - 1)
EMPTY_SLOT = np.uint64(np.iinfo(np.uint64).max)
_U64 = np.uint64
_ITEM_CHUNK = 8192
_PAIR_MAGIC = b"SKP1"


def _fmix64(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> _U64(33))
    z = z * _U64(0xFF51AFD7ED558CCD)
    z = z ^ (z >> _U64(33))
    z = z * _U64(0xC4CEB9FE1A85EC53)
    return z ^ (z >> _U64(33))


def hash64(items, seed: int) -> np.ndarray:
    """Seeded 64-bit hash of non-negative integers (a bijection for fixed seed)."""
    x = np.asarray(items, dtype=np.int64).astype(_U64)
    with np.errstate(over="ignore"):
        key = _fmix64(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=_U64) ^ _U64(0x9E3779B97F4A7C15))
        return _fmix64(x + key[0])


def bit_length(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=_U64).copy()
    n = np.zeros(w.shape, dtype=np.int64)
    for s in (32, 16, 8, 4, 2, 1):
        big = w >= (_U64(1) << _U64(s))
        n += big * s
        w = np.where(big, w >> _U64(s), w)
    return n + (w > 0)


def mulmod61(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(a * b) mod (2^61 - 1) for a, b < 2^61, exact in uint64 arithmetic."""
    a = np.asarray(a, dtype=_U64)
    b = np.asarray(b, dtype=_U64)
    lo31 = _U64((1 << 31) - 1)
    lo30 = _U64((1 << 30) - 1)
    a_hi, a_lo = a >> _U64(31), a & lo31
    b_hi, b_lo = b >> _U64(31), b & lo31
    mid = a_hi * b_lo + a_lo * b_hi
    s = (a_lo * b_lo) + (mid >> _U64(30)) + ((mid & lo30) << _U64(31)) + _U64(2) * (a_hi * b_hi)
    r = (s & MERSENNE_61) + (s >> _U64(61))
    return np.where(r >= MERSENNE_61, r - MERSENNE_61, r)


def _alpha(m: int) -> float:
    if m == 16:
        return 0.673
    if m == 32:
        return 0.697
    if m == 64:
        return 0.709
    return 0.7213 / (1.0 + 1.079 / m)


@dataclass(frozen=True)
class SketchConfig:
    hll_precision: int = 8
    minhash_perms: int = 128
    seed: int = 0

    def __post_init__(self):
        if not 4 <= self.hll_precision <= 16:
            raise ConfigError(f"hll_precision must be in [4, 16], got {self.hll_precision}")
        if self.minhash_perms < 1:
            raise ConfigError("minhash_perms must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")

    @property
    def num_registers(self) -> int:
        return 1 << self.hll_precision

    @cached_property
    def alpha(self) -> float:
        return _alpha(self.num_registers)

    @cached_property
    def perm_params(self) -> tuple[np.ndarray, np.ndarray]:
        rng = np.random.default_rng([self.seed & 0xFFFFFFFF, self.seed >> 32, 0x4D48])
        a = rng.integers(1, int(MERSENNE_61), size=self.minhash_perms, dtype=np.int64).astype(_U64)
        b = rng.integers(0, int(MERSENNE_61), size=self.minhash_perms, dtype=np.int64).astype(_U64)
        return a, b

    def to_dict(self) -> dict:
        return {"hll_precision": self.hll_precision, "minhash_perms": self.minhash_perms, "seed": self.seed}

    def digest(self) -> str:
        return hashlib.sha256(repr(sorted(self.to_dict().items())).encode()).hexdigest()[:16]

    def check_same(self, other: SketchConfig) -> None:
        if self != other:
            raise IncompatibleError(f"sketch configs differ: {self} vs {other}")


# ------------------------------------------------------------------ row kernels


def hll_index_rank(items, cfg: SketchConfig) -> tuple[np.ndarray, np.ndarray]:
    """Register index (top p bits) and rank rho (leading zeros + 1 of the rest)."""
    h = hash64(items, cfg.seed)
    p = cfg.hll_precision
    idx = (h >> _U64(64 - p)).astype(np.int64)
    w = h & _U64((1 << (64 - p)) - 1)
    rho = (64 - p) - bit_length(w) + 1
    return idx, rho.astype(np.uint8)


def minhash_values(items, cfg: SketchConfig) -> np.ndarray:
    """Permuted hash values, shape (len(items), minhash_perms)."""
    h = hash64(items, cfg.seed) % MERSENNE_61
    a, b = cfg.perm_params
    ah = mulmod61(a[None, :], h[:, None])
    s = ah + b[None, :]
    return np.where(s >= MERSENNE_61, s - MERSENNE_61, s)


def singleton_registers(nodes, cfg: SketchConfig) -> np.ndarray:
    """HLL registers for the singleton sets {u}, one row per node."""
    nodes = np.asarray(nodes, dtype=np.int64)
    idx, rho = hll_index_rank(nodes, cfg)
    reg = np.zeros((len(nodes), cfg.num_registers), dtype=np.uint8)
    reg[np.arange(len(nodes)), idx] = rho
    return reg


def cardinality_rows(registers: np.ndarray, cfg: SketchConfig) -> np.ndarray:
    """HLL estimate for every row of an (n, m) register matrix."""
    reg = np.atleast_2d(registers)
    m = cfg.num_registers
    inv = np.ldexp(1.0, -reg.astype(np.int32)).sum(axis=1)
    raw = cfg.alpha * m * m / inv
    zeros = (reg == 0).sum(axis=1)
    with np.errstate(divide="ignore"):
        linear = m * np.log(m / np.maximum(zeros, 1))
    return np.where((raw <= 2.5 * m) & (zeros > 0), linear, raw)


def jaccard_rows(sig_a: np.ndarray, sig_b: np.ndarray) -> np.ndarray:
    """Row-wise fraction of equal signature slots."""
    a = np.atleast_2d(sig_a)
    b = np.atleast_2d(sig_b)
    return (a == b).mean(axis=1)


# ------------------------------------------------------------------ value types


@dataclass(frozen=True, eq=False)
class HllSketch:
    registers: np.ndarray
    cfg: SketchConfig

    @classmethod
    def empty(cls, cfg: SketchConfig) -> HllSketch:
        return cls(np.zeros(cfg.num_registers, dtype=np.uint8), cfg)

    @classmethod
    def from_items(cls, items, cfg: SketchConfig) -> HllSketch:
        items = np.asarray(list(items) if isinstance(items, (set, frozenset)) else items, dtype=np.int64)
        reg = np.zeros(cfg.num_registers, dtype=np.uint8)
        for start in range(0, len(items), 1 << 20):
            idx, rho = hll_index_rank(items[start : start + (1 << 20)], cfg)
            np.maximum.at(reg, idx, rho)
        return cls(reg, cfg)

    def merge(self, other: HllSketch) -> HllSketch:
        self.cfg.check_same(other.cfg)
        return HllSketch(np.maximum(self.registers, other.registers), self.cfg)

    def cardinality(self) -> float:
        return float(cardinality_rows(self.registers, self.cfg)[0])

    def __eq__(self, other):
        return (
            isinstance(other, HllSketch)
            and self.cfg == other.cfg
            and np.array_equal(self.registers, other.registers)
        )


@dataclass(frozen=True, eq=False)
class MinhashSketch:
    signature: np.ndarray
    cfg: SketchConfig

    @classmethod
    def empty(cls, cfg: SketchConfig) -> MinhashSketch:
        return cls(np.full(cfg.minhash_perms, EMPTY_SLOT, dtype=_U64), cfg)

    @classmethod
    def from_items(cls, items, cfg: SketchConfig) -> MinhashSketch:
        items = np.asarray(list(items) if isinstance(items, (set, frozenset)) else items, dtype=np.int64)
        sig = np.full(cfg.minhash_perms, EMPTY_SLOT, dtype=_U64)
        for start in range(0, len(items), _ITEM_CHUNK):
            vals = minhash_values(items[start : start + _ITEM_CHUNK], cfg)
            np.minimum(sig, vals.min(axis=0), out=sig)
        return cls(sig, cfg)

    def merge(self, other: MinhashSketch) -> MinhashSketch:
        self.cfg.check_same(other.cfg)
        return MinhashSketch(np.minimum(self.signature, other.signature), self.cfg)

    def jaccard(self, other: MinhashSketch) -> float:
        self.cfg.check_same(other.cfg)
        return float(np.mean(self.signature == other.signature))

    def __eq__(self, other):
        return (
            isinstance(other, MinhashSketch)
            and self.cfg == other.cfg
            and np.array_equal(self.signature, other.signature)
        )


@dataclass(frozen=True)
class SketchPair:
    hll: HllSketch
    mh: MinhashSketch

    @property
    def cfg(self) -> SketchConfig:
        return self.hll.cfg

    def to_bytes(self) -> bytes:
        c = self.cfg
        head = _PAIR_MAGIC + struct.pack("<BIQ", c.hll_precision, c.minhash_perms, c.seed)
        return head + self.hll.registers.tobytes() + self.mh.signature.astype("<u8").tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes, expected: SketchConfig | None = None) -> SketchPair:
        if raw[:4] != _PAIR_MAGIC:
            raise IncompatibleError("not a serialized sketch pair")
        p, n_perm, seed = struct.unpack("<BIQ", raw[4:17])
        cfg = SketchConfig(p, n_perm, seed)
        if expected is not None:
            expected.check_same(cfg)
        m = cfg.num_registers
        reg = np.frombuffer(raw, dtype=np.uint8, count=m, offset=17).copy()
        sig = np.frombuffer(raw, dtype="<u8", count=n_perm, offset=17 + m).astype(_U64)
        return cls(HllSketch(reg, cfg), MinhashSketch(sig, cfg))

    def dump_text(self) -> str:
        c = self.cfg
        lines = [
            f"p={c.hll_precision} np={c.minhash_perms} seed={c.seed}",
            f"cardinality={self.hll.cardinality():.4f}",
            "registers=" + " ".join(str(int(r)) for r in self.hll.registers),
            "signature=" + " ".join(
                "-" if s == EMPTY_SLOT else f"{int(s):x}" for s in self.mh.signature
            ),
        ]
        return "\n".join(lines)


def sketch_from_set(items, cfg: SketchConfig) -> SketchPair:
    return SketchPair(HllSketch.from_items(items, cfg), MinhashSketch.from_items(items, cfg))


def merge(a: SketchPair, b: SketchPair) -> SketchPair:
    """Union sketch: elementwise max of registers, elementwise min of signatures."""
    return SketchPair(a.hll.merge(b.hll), a.mh.merge(b.mh))


def cardinality(h: HllSketch) -> float:
    return h.cardinality()


def jaccard(a: MinhashSketch, b: MinhashSketch) -> float:
    return a.jaccard(b)
