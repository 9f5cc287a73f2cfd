"""TFHE core: keys, the three ciphertext forms, and their operations.

Ciphertext payloads are raw uint64 arrays (mod-2^64 wraparound is the ring
arithmetic). Parameter sets with `exact_mul` run everything through the
schoolbook path; production sets (N = 2048) use the FFT engine, whose
digit-product rounding error is part of the ciphertext noise budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.fft

from . import ring
from .fft import LimbSpectra, get_fft_workers, plan
from .params import HeParams, Q_BITS
from .ring import RingPoly, U64, gadget_decompose_raw, monomial_mul_raw, negacyclic_mul_raw

PRNG_ID = "numpy-philox4x64"


class TfheError(ValueError):
    pass


class EncodingError(TfheError):
    """Message coefficient outside Z_p."""


def make_rng(seed) -> np.random.Generator:
    """The portable seeded generator recorded in key/model files."""
    return np.random.Generator(np.random.Philox(seed))


def uniform_u64(rng: np.random.Generator, shape) -> np.ndarray:
    n = int(np.prod(shape)) if shape else 1
    return np.frombuffer(rng.bytes(8 * n), dtype=np.uint64).reshape(shape).copy()


def gaussian_u64(rng: np.random.Generator, sigma: float, shape) -> np.ndarray:
    if sigma == 0.0:
        return np.zeros(shape, dtype=np.uint64)
    e = np.rint(rng.normal(0.0, sigma, shape))
    return e.astype(np.int64).astype(np.uint64)


# ---------------------------------------------------------------------------
# keys


@dataclass
class SecretKey:
    params: HeParams
    s: np.ndarray                          # binary RLWE key S1, uint64 (N,)
    _limbs: LimbSpectra | None = field(default=None, repr=False)

    @property
    def s1(self) -> RingPoly:
        return RingPoly(self.s)

    @property
    def extracted(self) -> np.ndarray:
        """Key of extracted LWE ciphertexts: the coefficient vector of S1."""
        return self.s

    def _key_mul(self, x: np.ndarray) -> np.ndarray:
        """x * s, exact mod 2^64 (limb-FFT path; schoolbook for exact sets)."""
        if self.params.exact_mul:
            if x.ndim == 1:
                return negacyclic_mul_raw(x, self.s)
            flat = x.reshape(-1, x.shape[-1])
            return np.stack([negacyclic_mul_raw(r, self.s) for r in flat]).reshape(x.shape)
        if self._limbs is None:
            self._limbs = plan(self.params.n).fwd_limbs(self.s, skip_zero=True)
        return plan(self.params.n).exact_mul(x, self._limbs)


@dataclass
class PackingKeySwitchKey:
    """RLWE encryptions of s_j * (q/beta_KS^t) for every key coefficient j."""

    params: HeParams
    data: np.ndarray                       # uint64 (N, ell_KS, 2, N)
    _spec: np.ndarray | None = field(default=None, repr=False)

    def spectra(self) -> np.ndarray:
        if self._spec is None:
            self._spec = plan(self.params.n).fwd_centered_u64(self.data)
        return self._spec


def keygen(params: HeParams, rng_seed) -> tuple[SecretKey, PackingKeySwitchKey]:
    """Sample the binary RLWE key and derive the packing key-switch key."""
    rng = make_rng(rng_seed)
    n = params.n
    s = rng.integers(0, 2, n).astype(np.uint64)
    key = SecretKey(params, s)

    g = params.gadget_ks
    ksk = np.empty((n, g.levels, 2, n), dtype=np.uint64)
    step = max(1, 2 ** 20 // (g.levels * n))  # bound transient FFT memory
    for j0 in range(0, n, step):
        j1 = min(n, j0 + step)
        a = uniform_u64(rng, (j1 - j0, g.levels, n))
        e = gaussian_u64(rng, params.sigma, (j1 - j0, g.levels, n))
        b = key._key_mul(a) + e
        for t in range(g.levels):
            b[:, t, 0] += s[j0:j1] * U64(g.power(t))  # message s_j * g_t on the constant term
        ksk[j0:j1, :, 0, :] = a
        ksk[j0:j1, :, 1, :] = b
    return key, PackingKeySwitchKey(params, ksk)


# ---------------------------------------------------------------------------
# ciphertexts


@dataclass
class RlweCiphertext:
    params: HeParams
    data: np.ndarray                       # uint64 (2, N): [a, b]

    @property
    def a(self) -> RingPoly:
        return RingPoly(self.data[0])

    @property
    def b(self) -> RingPoly:
        return RingPoly(self.data[1])

    def copy(self) -> "RlweCiphertext":
        return RlweCiphertext(self.params, self.data.copy())

    def __add__(self, other: "RlweCiphertext") -> "RlweCiphertext":
        _check_params(self.params, other.params)
        return RlweCiphertext(self.params, self.data + other.data)

    def __sub__(self, other: "RlweCiphertext") -> "RlweCiphertext":
        _check_params(self.params, other.params)
        return RlweCiphertext(self.params, self.data - other.data)


@dataclass
class RgswCiphertext:
    """2*ell RLWE rows laid out as C + m*G.

    Rows 0..ell-1 carry the gadget on the b component, rows ell..2*ell-1 on
    the a component (order recorded in the file format).
    """

    params: HeParams
    data: np.ndarray                       # uint64 (2*ell, 2, N)
    _spec: np.ndarray | None = field(default=None, repr=False)

    def spectra(self) -> np.ndarray:
        # cached f64 spectra for the fast external-product path
        if self._spec is None:
            self._spec = plan(self.params.n).fwd_centered_u64(self.data)
        return self._spec

    def __add__(self, other: "RgswCiphertext") -> "RgswCiphertext":
        _check_params(self.params, other.params)
        return RgswCiphertext(self.params, self.data + other.data)


@dataclass
class LweCiphertext:
    params: HeParams
    a: np.ndarray                          # uint64 (N,)
    b: np.uint64


def _check_params(p1: HeParams, p2: HeParams):
    if p1 is not p2 and p1 != p2:
        raise TfheError("ciphertext parameter sets differ")


def _encode(m, params: HeParams) -> np.ndarray:
    n = params.n
    m = np.atleast_1d(np.asarray(m, dtype=np.int64))
    if m.size > n:
        raise EncodingError(f"message longer than ring dimension {n}")
    if np.any(m < 0) or np.any(m >= params.p):
        raise EncodingError(f"message coefficients must lie in [0, {params.p})")
    mu = np.zeros(n, dtype=np.uint64)
    mu[: m.size] = m.astype(np.uint64) * U64(params.delta)
    return mu


def trivial_rlwe(m, params: HeParams) -> RlweCiphertext:
    """Noiseless no-key ciphertext (0, m*q/p); valid under any key."""
    data = np.zeros((2, params.n), dtype=np.uint64)
    data[1] = _encode(m, params)
    return RlweCiphertext(params, data)


def enc_rlwe_raw(mu: np.ndarray, key: SecretKey, rng: np.random.Generator) -> RlweCiphertext:
    """Encrypt an arbitrary Z_q payload polynomial (no q/p scaling)."""
    n = key.params.n
    a = uniform_u64(rng, (n,))
    e = gaussian_u64(rng, key.params.sigma, (n,))
    b = key._key_mul(a) + np.asarray(mu, dtype=np.uint64) + e
    return RlweCiphertext(key.params, np.stack([a, b]))


def enc_rlwe(m, key: SecretKey, rng: np.random.Generator) -> RlweCiphertext:
    """Encrypt a polynomial message over Z_p."""
    return enc_rlwe_raw(_encode(m, key.params), key, rng)


def phase_rlwe(ct: RlweCiphertext, key: SecretKey) -> np.ndarray:
    return ct.data[1] - key._key_mul(ct.data[0])


def dec_rlwe(ct: RlweCiphertext, key: SecretKey) -> np.ndarray:
    """Decrypt to the message polynomial over Z_p (rounded)."""
    return decode_phase(phase_rlwe(ct, key), ct.params)


def decode_phase(phase: np.ndarray, params: HeParams) -> np.ndarray:
    half = U64(params.delta // 2)
    return ((phase + half) >> U64(Q_BITS - params.p.bit_length() + 1)).astype(np.int64)


def enc_rgsw(m: int, key: SecretKey, rng: np.random.Generator) -> RgswCiphertext:
    """Encrypt a selector bit as C + m*G."""
    if m not in (0, 1):
        raise EncodingError("RGSW messages are bits")
    params = key.params
    g = params.gadget
    rows = 2 * g.levels
    a = uniform_u64(rng, (rows, params.n))
    e = gaussian_u64(rng, params.sigma, (rows, params.n))
    b = key._key_mul(a) + e
    data = np.stack([a, b], axis=1)        # (2*ell, 2, N)
    if m:
        for t in range(g.levels):
            data[t, 1, 0] += U64(g.power(t))           # b-gadget rows
            data[g.levels + t, 0, 0] += U64(g.power(t))  # a-gadget rows
    return RgswCiphertext(params, data)


def enc_rgsw_batch(ms, key: SecretKey, rng: np.random.Generator) -> list[RgswCiphertext]:
    """Encrypt a vector of selector bits with one batched key product."""
    ms = np.asarray(ms, dtype=np.int64)
    if ms.size == 0:
        return []
    if np.any((ms != 0) & (ms != 1)):
        raise EncodingError("RGSW messages are bits")
    params = key.params
    g = params.gadget
    rows = 2 * g.levels
    a = uniform_u64(rng, (len(ms), rows, params.n))
    e = gaussian_u64(rng, params.sigma, (len(ms), rows, params.n))
    b = key._key_mul(a) + e
    data = np.stack([a, b], axis=2)        # (B, 2*ell, 2, N)
    for t in range(g.levels):
        data[:, t, 1, 0] += ms.astype(np.uint64) * U64(g.power(t))
        data[:, g.levels + t, 0, 0] += ms.astype(np.uint64) * U64(g.power(t))
    return [RgswCiphertext(params, data[i]) for i in range(len(ms))]


def trivial_rgsw(m: int, params: HeParams) -> RgswCiphertext:
    if m not in (0, 1):
        raise EncodingError("RGSW messages are bits")
    g = params.gadget
    data = np.zeros((2 * g.levels, 2, params.n), dtype=np.uint64)
    if m:
        for t in range(g.levels):
            data[t, 1, 0] += U64(g.power(t))
            data[g.levels + t, 0, 0] += U64(g.power(t))
    return RgswCiphertext(params, data)


def dec_rgsw(ct: RgswCiphertext, key: SecretKey) -> int:
    # first row encrypts m * q/beta on the b component
    phase = ct.data[0, 1] - key._key_mul(ct.data[0, 0])
    g = ct.params.gadget
    val = int((phase[:1] + U64(g.power(0) // 2))[0] >> U64(Q_BITS - g.base_log))
    return val % g.base


# ---------------------------------------------------------------------------
# homomorphic operations


def _digits_of(cts: np.ndarray, params: HeParams) -> np.ndarray:
    """Gadget digits of ciphertext batch (..., 2, N) -> (..., 2*ell, N).

    Digit order matches the RGSW row order: b digits first, then a digits.
    """
    d = gadget_decompose_raw(cts, params.gadget)      # (..., 2, ell, N)
    b_digits = d[..., 1, :, :]
    a_digits = d[..., 0, :, :]
    return np.concatenate([b_digits, a_digits], axis=-2)


def ext_product_batch(params: HeParams, rgsw_rep: np.ndarray, cts: np.ndarray) -> np.ndarray:
    """External products for a batch: rep (B|1, 2*ell, 2, N), cts (B, 2, N)."""
    digits = _digits_of(cts, params)
    if params.exact_mul:
        rows = np.broadcast_to(rgsw_rep, digits.shape[:-2] + rgsw_rep.shape[-3:])
        out = np.zeros(cts.shape, dtype=np.uint64)
        flat_d = digits.reshape(-1, digits.shape[-2], digits.shape[-1])
        flat_r = rows.reshape(-1, rows.shape[-3], 2, rows.shape[-1])
        flat_o = out.reshape(-1, 2, out.shape[-1])
        for i in range(flat_d.shape[0]):
            for r in range(flat_d.shape[1]):
                du = flat_d[i, r].astype(np.uint64)
                for c in range(2):
                    flat_o[i, c] += negacyclic_mul_raw(du, flat_r[i, r, c])
        return out
    pl = plan(params.n)
    spec = pl.fwd_signed(digits)                      # (..., 2*ell, N)
    acc = np.einsum("...rn,...rcn->...cn", spec, rgsw_rep)
    return pl.inv_fold_u64(acc)


def rgsw_rep(ct: RgswCiphertext) -> np.ndarray:
    """Representation used by the batched external product."""
    return ct.data if ct.params.exact_mul else ct.spectra()


def external_product(C: RgswCiphertext, c: RlweCiphertext) -> RlweCiphertext:
    """RGSW x RLWE -> RLWE encrypting the product of the messages."""
    _check_params(C.params, c.params)
    out = ext_product_batch(c.params, rgsw_rep(C)[np.newaxis], c.data[np.newaxis])[0]
    return RlweCiphertext(c.params, out)


def cmux(C: RgswCiphertext, c1: RlweCiphertext, c2: RlweCiphertext) -> RlweCiphertext:
    """Select c1 if the RGSW bit is 1, else c2: c2 + C (*) (c1 - c2)."""
    _check_params(c1.params, c2.params)
    return c2 + external_product(C, c1 - c2)


def blind_rotate(c: RlweCiphertext, C: Sequence[RgswCiphertext],
                 I: Sequence[int]) -> RlweCiphertext:
    """Negacyclic rotation by the encrypted exponent: v -> v * X^(-sum S_i I_i)."""
    if len(C) != len(I):
        raise TfheError("selector/exponent length mismatch")
    acc = c.copy()
    for Ci, Ii in zip(C, I):
        rotated = RlweCiphertext(acc.params, monomial_mul_raw(acc.data, -int(Ii)))
        acc = cmux(Ci, rotated, acc)
    return acc


def extract_lwe(c: RlweCiphertext, i: int) -> LweCiphertext:
    """LWE ciphertext of coefficient i under the coefficient vector of S1."""
    n = c.params.n
    if not 0 <= i < n:
        raise TfheError(f"coefficient index {i} out of range [0, {n})")
    a = c.data[0]
    out = np.empty(n, dtype=np.uint64)
    out[: i + 1] = a[: i + 1][::-1]
    out[i + 1:] = np.zeros(n - i - 1, dtype=np.uint64) - a[i + 1:][::-1]
    return LweCiphertext(c.params, out, c.data[1][i])


def phase_lwe(ct: LweCiphertext, key: SecretKey) -> np.uint64:
    dot = (ct.a * key.extracted).sum(dtype=np.uint64)
    return (np.asarray([ct.b], dtype=np.uint64) - dot)[0]


def dec_lwe(ct: LweCiphertext, key: SecretKey) -> int:
    return int(decode_phase(np.array([phase_lwe(ct, key)]), ct.params)[0])


def packing_key_switch(cs: Sequence[LweCiphertext],
                       ksk: PackingKeySwitchKey) -> RlweCiphertext:
    """Pack <= N extracted-LWE ciphertexts into one RLWE: coeff i = message i."""
    params = ksk.params
    n = params.n
    if len(cs) > n:
        raise TfheError(f"cannot pack {len(cs)} > N = {n} ciphertexts")
    a_stack = np.zeros((len(cs), n), dtype=np.uint64)
    b_stack = np.zeros(n, dtype=np.uint64)
    for i, ct in enumerate(cs):
        _check_params(ct.params, params)
        a_stack[i] = ct.a
        b_stack[i] = ct.b
    out = pack_batch(a_stack[np.newaxis], b_stack[np.newaxis], ksk)[0]
    return RlweCiphertext(params, out)


def pack_batch(a_stacks: np.ndarray, b_polys: np.ndarray,
               ksk: PackingKeySwitchKey) -> np.ndarray:
    """Batched packing key switch.

    a_stacks: (B, k, N) a-vectors of the LWE inputs (k <= N, row i = input i),
    b_polys:  (B, N) with coefficient i = b of input i. Returns (B, 2, N).
    """
    params = ksk.params
    n = params.n
    g = params.gadget_ks
    B, k, _ = a_stacks.shape
    # A_j(X) has coefficient i = a^(i)_j; coefficients i >= k are zero, so
    # decomposition and spectrum packing only touch the first k positions
    apolys = np.ascontiguousarray(np.swapaxes(a_stacks, 1, 2))   # (B, N, k)
    digits = gadget_decompose_raw(apolys, g)          # (B, N, ell, k)

    out = np.zeros((B, 2, n), dtype=np.uint64)
    if params.exact_mul:
        for bi in range(B):
            acc = np.zeros((2, n), dtype=np.uint64)
            for j in range(n):
                for t in range(g.levels):
                    du = np.zeros(n, dtype=np.uint64)
                    du[:k] = digits[bi, j, t].astype(np.uint64)
                    if not du.any():
                        continue
                    acc[0] += negacyclic_mul_raw(du, ksk.data[j, t, 0])
                    acc[1] += negacyclic_mul_raw(du, ksk.data[j, t, 1])
            out[bi, 0] = U64(0) - acc[0]
            out[bi, 1] = b_polys[bi] - acc[1]
        return out

    pl = plan(n)
    kspec = ksk.spectra()                             # (N, ell, 2, N/2)
    h = pl.half
    folded = np.zeros((n, g.levels, h), dtype=np.complex128)
    for bi in range(B):
        dg = digits[bi]
        if k <= h:
            folded[..., :k] = dg * pl.fold[:k]
        else:
            folded[..., : k - h] = (dg[..., : k - h] + 1j * dg[..., h:k]) * pl.fold[: k - h]
            folded[..., k - h: h] = dg[..., k - h: h] * pl.fold[k - h:]
        dspec = scipy.fft.ifft(folded, axis=-1, norm="forward",
                               workers=get_fft_workers())
        acc = np.einsum("jtn,jtcn->cn", dspec, kspec, optimize=True)
        part = pl.inv_fold_u64(acc)
        out[bi, 0] = U64(0) - part[0]
        out[bi, 1] = b_polys[bi] - part[1]
    return out


# ---------------------------------------------------------------------------
# noise measurement (test oracle)


@dataclass
class NoiseBudget:
    """Measured error of a ciphertext against the nearest Z_p codeword."""

    max_abs: int
    rms: float
    margin: int         # q/(2p): decryption is correct iff max_abs < margin

    @property
    def ok(self) -> bool:
        return self.max_abs < self.margin


def measure_noise(ct, key: SecretKey) -> NoiseBudget:
    params = ct.params
    if isinstance(ct, LweCiphertext):
        phase = np.array([phase_lwe(ct, key)], dtype=np.uint64)
    elif isinstance(ct, RlweCiphertext):
        phase = phase_rlwe(ct, key)
    else:
        raise TfheError("noise measurement expects an LWE or RLWE ciphertext")
    delta = U64(params.delta)
    err = ring.centered((phase + U64(params.delta // 2)) % delta - U64(params.delta // 2))
    return NoiseBudget(
        max_abs=int(np.abs(err).max()),
        rms=float(np.sqrt(np.mean(err.astype(np.float64) ** 2))),
        margin=params.delta // 2,
    )
