"""Plaintext weightless neural networks: integer-counter WiSARD models.

Training fills per-class RAM counters; a separate activation step turns
counters into RAM outputs (binarization, thresholding, or logarithmic
activations), optionally rescaled by per-class sample counts to correct
dataset imbalance. Counter arithmetic is mod p with silent wraparound so
the plaintext model matches the homomorphic one counter-for-counter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tfhe import PRNG_ID, make_rng

DEFAULT_BLOG_BOUND = 4


class WnnError(ValueError):
    pass


@dataclass(frozen=True)
class WisardGeometry:
    """Shape of one WiSARD classifier."""

    s: int          # input bit size
    l: int          # class count
    a: int          # address size (bits per RAM)
    r: int          # permutation seed
    p: int          # counter modulus (power of two)

    def __post_init__(self):
        if self.l < 2:
            raise WnnError("need at least two classes")
        if self.s < 1 or self.a < 1:
            raise WnnError("input size and address size must be positive")
        if self.p < 2 or self.p & (self.p - 1):
            raise WnnError("counter modulus must be a power of two")

    @property
    def k0(self) -> int:
        """RAMs per discriminator."""
        return -(-self.s // self.a)

    @property
    def label_bits(self) -> int:
        return max(1, (self.l - 1).bit_length())

    @property
    def selector_bits(self) -> int:
        """Label bits + address bits: the index width of one model row."""
        return self.label_bits + self.a

    @property
    def pad(self) -> int:
        return self.k0 * self.a - self.s


@dataclass
class ClassCounts:
    counts: np.ndarray          # (l,) samples seen per class

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ClassCounts") -> "ClassCounts":
        return ClassCounts(self.counts + other.counts)


@dataclass
class IntegerWisardModel:
    geometry: WisardGeometry
    counters: np.ndarray        # (l, k0, 2^a) int64, values mod p

    @classmethod
    def zeros(cls, geometry: WisardGeometry) -> "IntegerWisardModel":
        shape = (geometry.l, geometry.k0, 1 << geometry.a)
        return cls(geometry, np.zeros(shape, dtype=np.int64))


@dataclass(frozen=True)
class ActivationSpec:
    """RAM output activation: bin (threshold), log, or bounded log."""

    kind: str                   # "bin" | "log" | "b-log"
    thr: int = 0                # bin: f(x) = 1 iff x > thr
    c: int = DEFAULT_BLOG_BOUND  # b-log upper bound

    def __post_init__(self):
        if self.kind not in ("bin", "log", "b-log"):
            raise WnnError(f"unknown activation {self.kind!r}")
        if self.kind == "bin" and self.thr < 0:
            raise WnnError("bin threshold must be non-negative")
        if self.kind == "b-log" and self.c <= 0:
            raise WnnError("b-log bound must be positive")

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "bin":
            return (x > self.thr).astype(np.float64)
        y = np.log2(x + 1.0)
        if self.kind == "b-log":
            y = np.minimum(y, float(self.c))
        return y


@dataclass(frozen=True)
class PreprocessSpec:
    """Per-sample preprocessing: quantization then thermometer encoding."""

    quant_kind: str = "none"    # "lin" | "log" | "none"
    quant_bits: int = 8         # output bit width of the quantizer
    in_range: int = 256         # input value range (values in [0, in_range))
    therm_size: int = 4
    therm_kind: str = "lin"     # "lin" | "log"

    def __post_init__(self):
        if self.quant_kind not in ("lin", "log", "none"):
            raise WnnError(f"unknown quantizer {self.quant_kind!r}")
        if self.therm_kind not in ("lin", "log"):
            raise WnnError(f"unknown thermometer type {self.therm_kind!r}")

    @property
    def value_range(self) -> int:
        # range of values entering the thermometer
        return self.in_range if self.quant_kind == "none" else 1 << self.quant_bits

    def bits_per_feature(self) -> int:
        return self.therm_size

    def thresholds(self) -> np.ndarray:
        return thermometer_thresholds(self.therm_kind, self.therm_size, self.value_range)


# ---------------------------------------------------------------------------
# preprocessing primitives


def quantize(v, kind: str, *, ratio: int | None = None, base: float | None = None):
    """Linear f_r(x) = floor(x/r) or logarithmic f_b(x) = floor(log_b(x+1))."""
    v = np.asarray(v)
    if kind == "lin":
        if not ratio or ratio < 1:
            raise WnnError("linear quantizer needs a positive ratio")
        return v // ratio
    if kind == "log":
        if not base or base <= 1:
            raise WnnError("log quantizer needs base > 1")
        return np.floor(np.log(v.astype(np.float64) + 1.0) / math.log(base)).astype(np.int64)
    raise WnnError(f"unknown quantizer {kind!r}")


def thermometer_thresholds(kind: str, size: int, value_range: int) -> np.ndarray:
    """Threshold ladder t_1..t_T; bit i of the encoding is (v >= t_i).

    lin: evenly spaced interior thresholds of [0, value_range).
    log: geometric ladder round(R^(i/T)); bumped minimally where rounding
    would collide so the ladder stays strictly increasing.
    """
    if size < 1:
        raise WnnError("thermometer size must be positive")
    if kind == "lin":
        t = np.floor((np.arange(size) + 1) * value_range / (size + 1)).astype(np.int64)
    elif kind == "log":
        t = np.rint(np.power(float(value_range), np.arange(size) / size)).astype(np.int64)
    else:
        raise WnnError(f"unknown thermometer type {kind!r}")
    for i in range(1, size):
        if t[i] <= t[i - 1]:
            t[i] = t[i - 1] + 1
    return t


def thermometer_encode(v, thresholds: np.ndarray) -> np.ndarray:
    """Unary encoding: monotone bit pattern, one bit per threshold."""
    v = np.asarray(v)
    return (v[..., np.newaxis] >= thresholds).astype(np.uint8)


# ---------------------------------------------------------------------------
# model construction


def permutation(r: int, s: int) -> np.ndarray:
    """Deterministic Fisher-Yates shuffle of [0, s) from the recorded PRNG."""
    rng = make_rng(r)
    perm = np.arange(s)
    for i in range(s - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def f_comp(x, d: int, a: int) -> int:
    """Address of RAM d: sum of x_(i+ad) 2^i, zero-padded past the input."""
    x = np.asarray(x)
    hi = min(a, x.shape[-1] - a * d)
    if d < 0 or hi <= 0:
        raise WnnError(f"RAM index {d} out of range")
    chunk = x[..., a * d: a * d + hi].astype(np.int64)
    return int(chunk @ (1 << np.arange(hi)))


def addresses(bits: np.ndarray, geometry: WisardGeometry) -> np.ndarray:
    """Permuted RAM addresses for a batch of samples: (n, s) -> (n, k0)."""
    bits = np.atleast_2d(bits)
    if bits.shape[-1] != geometry.s:
        raise WnnError(f"expected {geometry.s} input bits, got {bits.shape[-1]}")
    perm = permutation(geometry.r, geometry.s)
    px = bits[:, perm]
    if geometry.pad:
        px = np.hstack([px, np.zeros((len(px), geometry.pad), dtype=bits.dtype)])
    px = px.reshape(len(px), geometry.k0, geometry.a).astype(np.int64)
    return px @ (1 << np.arange(geometry.a, dtype=np.int64))


def train_integer(bits: np.ndarray, labels: np.ndarray,
                  geometry: WisardGeometry) -> tuple[IntegerWisardModel, ClassCounts]:
    """Count pattern occurrences per (class, RAM, address), mod p."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and labels.max() >= geometry.l:
        raise WnnError(f"label {labels.max()} out of range for {geometry.l} classes")
    model = IntegerWisardModel.zeros(geometry)
    counts = ClassCounts(np.zeros(geometry.l, dtype=np.int64))
    if labels.size == 0:
        return model, counts
    addr = addresses(bits, geometry)
    rams = np.broadcast_to(np.arange(geometry.k0), addr.shape)
    lab = np.broadcast_to(labels[:, np.newaxis], addr.shape)
    np.add.at(model.counters, (lab, rams, addr), 1)
    model.counters &= geometry.p - 1
    counts.counts += np.bincount(labels, minlength=geometry.l)
    return model, counts


def merge(m1: IntegerWisardModel, m2: IntegerWisardModel) -> IntegerWisardModel:
    """Federated merge: counter-wise addition mod p (requires equal geometry)."""
    if m1.geometry != m2.geometry:
        raise WnnError("cannot merge models with different geometry or seed")
    return IntegerWisardModel(m1.geometry, (m1.counters + m2.counters) & (m1.geometry.p - 1))


# ---------------------------------------------------------------------------
# activation and evaluation


def rescale_factors(counts: ClassCounts, l: int) -> np.ndarray:
    """Balancing correction: class c counters scale by (n/l) / counts_c."""
    c = counts.counts.astype(np.float64)
    if np.any(c <= 0):
        raise WnnError("balancing requires at least one sample of every class")
    return (c.sum() / l) / c


def activate(model: IntegerWisardModel, spec: ActivationSpec,
             counts: ClassCounts | None = None) -> np.ndarray:
    """Activated RAM outputs (l, k0, 2^a) as floats."""
    x = model.counters.astype(np.float64)
    if counts is not None:
        x = x * rescale_factors(counts, model.geometry.l)[:, np.newaxis, np.newaxis]
    return spec.apply(x)


def lookups(model: IntegerWisardModel, sample_bits: np.ndarray) -> np.ndarray:
    """Raw per-(class, RAM) counter lookups for one sample: (l, k0)."""
    addr = addresses(sample_bits, model.geometry)[0]
    return model.counters[:, np.arange(model.geometry.k0), addr]


def scores_from_lookups(raw: np.ndarray, spec: ActivationSpec,
                        counts: ClassCounts | None = None) -> np.ndarray:
    """Per-class scores from raw (l, k0) lookups; shared with the HE client."""
    x = raw.astype(np.float64)
    if counts is not None:
        x = x * rescale_factors(counts, raw.shape[0])[:, np.newaxis]
    return spec.apply(x).sum(axis=1)


def predict_from_lookups(raw: np.ndarray, spec: ActivationSpec,
                         counts: ClassCounts | None = None) -> int:
    # np.argmax breaks ties at the lowest class index
    return int(np.argmax(scores_from_lookups(raw, spec, counts)))


def evaluate(model: IntegerWisardModel, sample_bits: np.ndarray,
             spec: ActivationSpec, counts: ClassCounts | None = None) -> int:
    """Classify one sample: argmax over summed activated RAM outputs."""
    return predict_from_lookups(lookups(model, sample_bits), spec, counts)


def evaluate_dataset(model: IntegerWisardModel, bits: np.ndarray,
                     spec: ActivationSpec, counts: ClassCounts | None = None,
                     chunk: int = 1024) -> np.ndarray:
    """Vectorized evaluation of many samples; returns predicted classes."""
    g = model.geometry
    act = activate(model, spec, counts)
    act_t = np.ascontiguousarray(act.transpose(1, 2, 0))     # (k0, 2^a, l)
    preds = np.empty(len(bits), dtype=np.int64)
    rams = np.arange(g.k0)
    for i0 in range(0, len(bits), chunk):
        addr = addresses(bits[i0: i0 + chunk], g)
        gathered = act_t[rams[np.newaxis, :], addr, :]       # (m, k0, l)
        preds[i0: i0 + len(addr)] = np.argmax(gathered.sum(axis=1), axis=1)
    return preds


MODEL_META_PRNG = PRNG_ID
