"""Exact arithmetic in R_q = Z_q[X]/(X^N + 1) with q = 2^64.

Coefficients live in numpy uint64 arrays; machine wraparound *is* the
modular reduction, so every operation here is exact. This module is the
reference path -- the FFT fast path in `fft.py` is checked against it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import GadgetSpec, Q_BITS

U64 = np.uint64


class DimensionError(ValueError):
    """Operands disagree on the ring dimension."""


def _as_u64(coeffs) -> np.ndarray:
    a = np.asarray(coeffs)
    if a.dtype != np.uint64:
        a = a.astype(np.int64).astype(np.uint64)
    return a


@dataclass
class RingPoly:
    """Element of Z_q[X]/(X^N + 1), q = 2^64, N a power of two."""

    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = _as_u64(self.coeffs)
        n = len(self.coeffs)
        if n < 1 or n & (n - 1):
            raise DimensionError(f"length {n} is not a power of two")

    @property
    def n(self) -> int:
        return len(self.coeffs)

    @property
    def degree_log(self) -> int:
        return self.n.bit_length() - 1

    @classmethod
    def zeros(cls, n: int) -> "RingPoly":
        return cls(np.zeros(n, dtype=np.uint64))

    @classmethod
    def constant(cls, value: int, n: int) -> "RingPoly":
        c = np.zeros(n, dtype=np.uint64)
        c[0] = U64(value % (1 << Q_BITS))
        return cls(c)

    def copy(self) -> "RingPoly":
        return RingPoly(self.coeffs.copy())

    def __eq__(self, other) -> bool:
        return isinstance(other, RingPoly) and np.array_equal(self.coeffs, other.coeffs)


def _check_same_n(a: RingPoly, b: RingPoly):
    if a.n != b.n:
        raise DimensionError(f"mismatched ring dimensions {a.n} vs {b.n}")


def poly_add(a: RingPoly, b: RingPoly) -> RingPoly:
    _check_same_n(a, b)
    return RingPoly(a.coeffs + b.coeffs)


def poly_sub(a: RingPoly, b: RingPoly) -> RingPoly:
    _check_same_n(a, b)
    return RingPoly(a.coeffs - b.coeffs)


def poly_neg(a: RingPoly) -> RingPoly:
    return RingPoly(np.zeros_like(a.coeffs) - a.coeffs)


def negacyclic_mul(a: RingPoly, b: RingPoly) -> RingPoly:
    """Schoolbook product reduced by X^N = -1; exact mod 2^64."""
    _check_same_n(a, b)
    return RingPoly(negacyclic_mul_raw(a.coeffs, b.coeffs))


def negacyclic_mul_raw(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # uint64 convolution wraps mod 2^64, which is exactly the ring arithmetic
    n = a.shape[-1]
    conv = np.convolve(a, b)
    out = conv[:n].copy()
    out[: n - 1] -= conv[n:]
    return out


def monomial_mul(a: RingPoly, e: int) -> RingPoly:
    """a * X^e with the negacyclic sign rule; e is taken mod 2N."""
    return RingPoly(monomial_mul_raw(a.coeffs, e))


def monomial_mul_raw(x: np.ndarray, e: int) -> np.ndarray:
    n = x.shape[-1]
    e = int(e) % (2 * n)
    if e == 0:
        return x.copy()
    ext = np.concatenate([x, np.zeros_like(x) - x], axis=-1)
    idx = (np.arange(n) - e) % (2 * n)
    return ext[..., idx]


def gadget_decompose(a: RingPoly, g: GadgetSpec) -> list[RingPoly]:
    """Signed digits d_1..d_ell with sum_t d_t * (q/beta^t) ~ a.

    Reconstruction is exact up to the dropped tail: after rounding a to the
    nearest multiple of q/beta^ell, recomposition matches exactly.
    """
    digits = gadget_decompose_raw(a.coeffs[np.newaxis, :], g)[0]
    return [RingPoly(d.astype(np.uint64)) for d in digits]


def gadget_decompose_raw(x: np.ndarray, g: GadgetSpec) -> np.ndarray:
    """Vectorized decomposition: uint64 (..., N) -> int64 (..., levels, N).

    Digit index t holds the digit for gadget power q/beta^(t+1).
    """
    w = g.base_log
    total = g.levels * w
    beta = U64(1 << w)
    half = U64(1 << (w - 1))
    mask = beta - U64(1)
    # round to the nearest multiple of 2^(64-total); overflow wraps, which is
    # the correct behaviour mod q
    if total < Q_BITS:
        u = x + U64(1 << (Q_BITS - total - 1))
        u >>= U64(Q_BITS - total)
    else:
        u = x.copy()
    out = np.empty(x.shape[:-1] + (g.levels, x.shape[-1]), dtype=np.uint64)
    for t in range(g.levels - 1, -1, -1):
        d = u & mask
        # center: subtracting beta wraps to the two's-complement negative
        d -= (d >= half) * beta
        u -= d
        u >>= U64(w)
        out[..., t, :] = d
    return out.view(np.int64)


def gadget_recompose(digits: list[RingPoly], g: GadgetSpec) -> RingPoly:
    if len(digits) != g.levels:
        raise ValueError("digit count does not match gadget levels")
    acc = np.zeros_like(digits[0].coeffs)
    for t, d in enumerate(digits):
        acc += d.coeffs * U64(g.power(t))
    return RingPoly(acc)


def centered(x: np.ndarray) -> np.ndarray:
    """Representatives of Z_q in [-q/2, q/2) as int64."""
    return _as_u64(x).astype(np.int64)
