"""Negacyclic FFT engine for the fast multiplication path.

All ciphertext polynomials have real (integer) coefficients, so their
twisted spectra are Hermitian-symmetric and a folded half-size transform
carries the full information: spectra here are complex arrays of length
N/2. Two product flavours over Z_q[X]/(X^N+1), q = 2^64:

* `fwd_signed` / `inv_fold_u64`: single double-precision transform. Used
  for gadget-digit x ciphertext products; rounding error (~2^40 for 22-bit
  digits at N=2048) is absorbed into ciphertext noise.
* `fwd_limbs` / `exact_mul`: operands split into 16-bit limbs so every
  intermediate stays below 2^53; reconstructs the product exactly mod 2^64.
  Used where exactness matters at full ring dimension (key products).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft

U64 = np.uint64

_workers = 1


def set_fft_workers(n: int):
    """Set the scipy.fft worker count used by all plans (thread knob)."""
    global _workers
    _workers = max(1, int(n))


def get_fft_workers() -> int:
    return _workers


@dataclass
class LimbSpectra:
    """Half-spectra of the 16-bit limbs of a uint64 polynomial batch."""

    weights: tuple[int, ...]          # limb indices present (value = sum limb_i << 16*i)
    spec: np.ndarray                  # complex128 (..., len(weights), N/2)


class NegacyclicFFT:
    """Folded transform evaluating polynomials at the odd 2N-th roots of unity.

    Real input of length N maps to N/2 spectrum points; pointwise products
    of spectra correspond exactly to negacyclic polynomial products.
    """

    def __init__(self, n: int):
        if n < 4 or n & (n - 1):
            raise ValueError("N must be a power of two >= 4")
        self.n = n
        self.half = n // 2
        self.fold = np.exp(1j * np.pi * np.arange(self.half) / n)
        self.unfold = np.exp(-1j * np.pi * np.arange(n) / n) * (2.0 / n)

    def fwd_signed(self, x) -> np.ndarray:
        """Half-spectrum of signed integer (or float) coefficients."""
        x = np.asarray(x)
        if x.dtype == np.uint64:
            x = x.view(np.int64)   # digits carry two's-complement values
        h = self.half
        folded = (x[..., :h] + 1j * x[..., h:]) * self.fold
        return scipy.fft.ifft(folded, axis=-1, norm="forward", workers=_workers)

    def fwd_centered_u64(self, x: np.ndarray) -> np.ndarray:
        """Half-spectrum of full-range coefficients, centered in [-q/2, q/2)."""
        return self.fwd_signed(x.astype(np.int64))

    def inv_real(self, spec: np.ndarray) -> np.ndarray:
        """Full-length real coefficients from a product half-spectrum."""
        v = scipy.fft.fft(spec, axis=-1, workers=_workers)
        return (np.concatenate([v, v], axis=-1) * self.unfold).real

    def inv_fold_u64(self, spec: np.ndarray) -> np.ndarray:
        """Inverse transform folded into Z_q; float rounding becomes noise."""
        vals = self.inv_real(spec)
        frac = vals * 2.0 ** -64
        frac -= np.rint(frac)
        frac -= (frac >= 0.5)  # guard the +q/2 edge before the int64 cast
        return np.rint(frac * 2.0 ** 64).astype(np.int64).astype(U64)

    def fwd_limbs(self, x: np.ndarray, skip_zero: bool = False) -> LimbSpectra:
        x = np.ascontiguousarray(x, dtype=U64)
        limbs, weights = [], []
        t = x
        for i in range(4):
            li = (t & U64(0xFFFF)).astype(np.float64)
            if not (skip_zero and not li.any()):
                limbs.append(li)
                weights.append(i)
            t = t >> U64(16)
        stack = np.stack(limbs, axis=-2)
        return LimbSpectra(tuple(weights), self.fwd_signed(stack))

    def exact_mul(self, x: np.ndarray, y: LimbSpectra) -> np.ndarray:
        """x * y exactly mod 2^64; broadcasts over leading axes."""
        xs = self.fwd_limbs(x)
        out_shape = np.broadcast_shapes(x.shape, y.spec.shape[:-2] + (self.n,))
        out = np.zeros(out_shape, dtype=U64)
        for wgt in range(4):
            acc = None
            for xi, xw in enumerate(xs.weights):
                for yi, yw in enumerate(y.weights):
                    if xw + yw != wgt:
                        continue
                    term = xs.spec[..., xi, :] * y.spec[..., yi, :]
                    acc = term if acc is None else acc + term
            if acc is None:
                continue
            # limb products stay below 2^53: rounding recovers exact integers
            ints = np.rint(self.inv_real(acc)).astype(np.int64).astype(U64)
            out += ints << U64(16 * wgt)
        return out


@lru_cache(maxsize=None)
def plan(n: int) -> NegacyclicFFT:
    return NegacyclicFFT(n)
