"""Encrypted lookup tables: vertical packing and its functional inverse.

Canonical selector order (fixed for the whole artifact): a k-bit selector
vector feeds the CMUX/CDEMUX tree with the most-significant index bits
first (positions 0..z-1, z = max(0, k - log2 N)) and the blind rotation
with the least-significant bits (position z+i carries index weight 2^i).
Table entry m therefore lives at polynomial m // N, coefficient m % N.

Clear selector bits cost nothing: tree bits become list slicing, rotation
bits become plaintext monomial shifts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tfhe
from .params import HeParams
from .ring import U64, monomial_mul_raw
from .tfhe import RgswCiphertext, RlweCiphertext, TfheError


@dataclass
class SelectorBit:
    """Either a public bit or an RGSW encryption of one."""

    ct: RgswCiphertext | None = None
    bit: int | None = None

    @classmethod
    def clear(cls, bit: int) -> "SelectorBit":
        if bit not in (0, 1):
            raise ValueError("selector bits are binary")
        return cls(bit=bit)

    @classmethod
    def enc(cls, ct: RgswCiphertext) -> "SelectorBit":
        return cls(ct=ct)

    @property
    def is_clear(self) -> bool:
        return self.ct is None


@dataclass
class EncryptedLut:
    """2^k-entry table packed into max(1, 2^(k - log2 N)) RLWE ciphertexts."""

    polys: list[RlweCiphertext]
    k: int

    def __post_init__(self):
        n = self.polys[0].params.n
        expect = max(1, (1 << self.k) // n)
        if len(self.polys) != expect:
            raise TfheError(f"LUT with k={self.k} needs {expect} polynomials, "
                            f"got {len(self.polys)}")

    @property
    def params(self) -> HeParams:
        return self.polys[0].params


def tree_depth(k: int, params: HeParams) -> int:
    return max(0, k - params.degree_log)


def rotate_weights(k: int, params: HeParams) -> list[int]:
    """Index weights of the rotation positions (LSB-first)."""
    return list(range(min(k, params.degree_log)))


def selector_index(bits: list[int], k: int, params: HeParams) -> int:
    """Table index encoded by a full selector vector (test oracle)."""
    z = tree_depth(k, params)
    m = 0
    for i in range(z):
        m += bits[i] << (k - 1 - i)
    for i, w in enumerate(rotate_weights(k, params)):
        m += bits[z + i] << w
    return m


def encode_lut(values, params: HeParams) -> EncryptedLut:
    """Pack 2^k public values mod p into trivial (noiseless) ciphertexts."""
    values = np.asarray(values, dtype=np.int64)
    size = len(values)
    if size < 1 or size & (size - 1):
        raise TfheError("LUT size must be a power of two")
    k = size.bit_length() - 1
    n = params.n
    polys = [tfhe.trivial_rlwe(values[i: i + n], params)
             for i in range(0, size, n)] if size >= n else \
            [tfhe.trivial_rlwe(values, params)]
    return EncryptedLut(polys, k)


def decode_lut(lut: EncryptedLut, key: tfhe.SecretKey) -> np.ndarray:
    """Decrypt every entry (test helper)."""
    vals = np.concatenate([tfhe.dec_rlwe(c, key) for c in lut.polys])
    return vals[: 1 << lut.k]


def lut_add(a: EncryptedLut, b: EncryptedLut) -> EncryptedLut:
    """Entry-wise sum: superimposes single-valued LUTs."""
    if a.k != b.k or len(a.polys) != len(b.polys):
        raise TfheError("LUT geometries differ")
    return EncryptedLut([x + y for x, y in zip(a.polys, b.polys)], a.k)


def cdemux(C: RgswCiphertext, d: RlweCiphertext) -> tuple[RlweCiphertext, RlweCiphertext]:
    """Route d to output 0 (selector 0) or output 1 (selector 1).

    The other channel encrypts zero; the channel sum always re-encrypts d.
    """
    hi = tfhe.external_product(C, d)
    return d - hi, hi


def vertical_packing(bits: list[SelectorBit], lut: EncryptedLut) -> tfhe.LweCiphertext:
    """Evaluate lut[m] where m is the index encoded by the selector bits."""
    params = lut.params
    if len(bits) != lut.k:
        raise TfheError(f"selector arity {len(bits)} != LUT k {lut.k}")
    z = tree_depth(lut.k, params)

    polys = list(lut.polys)
    for i in range(z):
        half = len(polys) // 2
        sel = bits[i]
        if sel.is_clear:
            polys = polys[half:] if sel.bit else polys[:half]
        else:
            polys = [tfhe.cmux(sel.ct, polys[j + half], polys[j]) for j in range(half)]

    acc = polys[0].copy()
    clear_e = 0
    for i, w in enumerate(rotate_weights(lut.k, params)):
        sel = bits[z + i]
        if sel.is_clear:
            clear_e += sel.bit << w
        else:
            rotated = RlweCiphertext(params, monomial_mul_raw(acc.data, -(1 << w)))
            acc = tfhe.cmux(sel.ct, rotated, acc)
    if clear_e:
        acc = RlweCiphertext(params, monomial_mul_raw(acc.data, -clear_e))
    return tfhe.extract_lwe(acc, 0)


def inverse_vertical_packing(bits: list[SelectorBit],
                             payload: RlweCiphertext) -> EncryptedLut:
    """Deposit the payload's constant term at the entry selected by the bits.

    Blind rotation with negated powers moves the payload to coefficient
    (m mod N); the CDEMUX tree then routes the polynomial to slot m // N.
    Every other entry of the result encrypts zero.
    """
    params = payload.params
    k = len(bits)
    z = tree_depth(k, params)

    acc = payload.copy()
    clear_e = 0
    for i, w in enumerate(rotate_weights(k, params)):
        sel = bits[z + i]
        if sel.is_clear:
            clear_e += sel.bit << w
        else:
            rotated = RlweCiphertext(params, monomial_mul_raw(acc.data, 1 << w))
            acc = tfhe.cmux(sel.ct, rotated, acc)
    if clear_e:
        acc = RlweCiphertext(params, monomial_mul_raw(acc.data, clear_e))

    polys = [acc]
    for i in range(z - 1, -1, -1):       # mirror of the VP tree order
        sel = bits[i]
        if sel.is_clear:
            zeros = [RlweCiphertext(params, np.zeros_like(p.data)) for p in polys]
            polys = zeros + polys if sel.bit else polys + zeros
        else:
            lows, highs = [], []
            for p in polys:
                lo, hi = cdemux(sel.ct, p)
                lows.append(lo)
                highs.append(hi)
            polys = lows + highs
    return EncryptedLut(polys, k)


# ---------------------------------------------------------------------------
# batched engine (raw arrays; used by the encrypted WNN pipeline)


def _rep_stack(sels: list[SelectorBit]) -> np.ndarray:
    return np.stack([tfhe.rgsw_rep(s.ct) for s in sels])


def _cmux_sub(params: HeParams, idx: np.ndarray, reps: np.ndarray,
              c1: np.ndarray, c2: np.ndarray, out: np.ndarray):
    """out[idx] = c2[idx] + C (*) (c1[idx] - c2[idx]), vectorized."""
    diff = c1[idx] - c2[idx]
    lead = diff.ndim - 3      # extra axes between batch and (2, N)
    rep = reps.reshape(reps.shape[:1] + (1,) * lead + reps.shape[1:])
    out[idx] = c2[idx] + tfhe.ext_product_batch(params, rep, diff)


def vp_batch(selectors: list[list[SelectorBit]], luts: list[np.ndarray],
             params: HeParams) -> tuple[np.ndarray, np.ndarray]:
    """Vertical packing over a batch of (selector vector, LUT) pairs.

    `luts[i]` is a (2^z, 2, N) uint64 array (views are fine). Returns the
    extracted LWE pieces: a-parts (B, N) and b-parts (B,).
    """
    B = len(selectors)
    k = len(selectors[0])
    z = tree_depth(k, params)
    n = params.n

    # clear-prefix tree levels are pure index arithmetic on the source views
    start = np.zeros(B, dtype=np.int64)
    length = np.full(B, max(1, 1 << z), dtype=np.int64)
    lvl = 0
    while lvl < z and all(sel[lvl].is_clear for sel in selectors):
        length //= 2
        for i, sel in enumerate(selectors):
            if sel[lvl].bit:
                start[i] += length[i]
        lvl += 1

    cur = np.stack([luts[i][start[i]: start[i] + length[i]] for i in range(B)])
    for pos in range(lvl, z):
        half = cur.shape[1] // 2
        new = np.empty((B, half, 2, n), dtype=np.uint64)
        clear0 = [i for i in range(B) if selectors[i][pos].is_clear and not selectors[i][pos].bit]
        clear1 = [i for i in range(B) if selectors[i][pos].is_clear and selectors[i][pos].bit]
        encs = [i for i in range(B) if not selectors[i][pos].is_clear]
        if clear0:
            new[clear0] = cur[clear0][:, :half]
        if clear1:
            new[clear1] = cur[clear1][:, half:]
        if encs:
            reps = _rep_stack([selectors[i][pos] for i in encs])
            _cmux_sub(params, np.asarray(encs), reps,
                      cur[:, half:], cur[:, :half], new)
        cur = new

    acc = np.ascontiguousarray(cur[:, 0])             # (B, 2, N)
    clear_e = np.zeros(B, dtype=np.int64)
    for i, w in enumerate(rotate_weights(k, params)):
        pos = z + i
        encs = [j for j in range(B) if not selectors[j][pos].is_clear]
        for j in range(B):
            if selectors[j][pos].is_clear:
                clear_e[j] += selectors[j][pos].bit << w
        if encs:
            rotated = monomial_mul_raw(acc, -(1 << w))
            reps = _rep_stack([selectors[j][pos] for j in encs])
            _cmux_sub(params, np.asarray(encs), reps, rotated, acc, acc)
    acc = monomial_gather(acc, -clear_e)

    lwe_a = np.empty((B, n), dtype=np.uint64)
    lwe_a[:, 0] = acc[:, 0, 0]
    lwe_a[:, 1:] = np.zeros((B, n - 1), dtype=np.uint64) - acc[:, 0, :0:-1]
    return lwe_a, acc[:, 1, 0].copy()


def ivp_batch(selectors: list[list[SelectorBit]], payload: np.ndarray,
              params: HeParams) -> np.ndarray:
    """Inverse vertical packing over a batch sharing one payload.

    Returns (B, max(1, 2^z), 2, N): per item, the single-valued LUT rows.
    """
    B = len(selectors)
    k = len(selectors[0])
    z = tree_depth(k, params)
    n = params.n

    acc = np.broadcast_to(payload, (B, 2, n)).copy()
    clear_e = np.zeros(B, dtype=np.int64)
    for i, w in enumerate(rotate_weights(k, params)):
        pos = z + i
        encs = [j for j in range(B) if not selectors[j][pos].is_clear]
        for j in range(B):
            if selectors[j][pos].is_clear:
                clear_e[j] += selectors[j][pos].bit << w
        if encs:
            rotated = monomial_mul_raw(acc, 1 << w)
            reps = _rep_stack([selectors[j][pos] for j in encs])
            _cmux_sub(params, np.asarray(encs), reps, rotated, acc, acc)
    acc = monomial_gather(acc, clear_e)

    cur = acc[:, np.newaxis]                          # (B, 1, 2, N)
    for pos in range(z - 1, -1, -1):
        m = cur.shape[1]
        new = np.zeros((B, 2 * m, 2, n), dtype=np.uint64)
        clear0 = [i for i in range(B) if selectors[i][pos].is_clear and not selectors[i][pos].bit]
        clear1 = [i for i in range(B) if selectors[i][pos].is_clear and selectors[i][pos].bit]
        encs = [i for i in range(B) if not selectors[i][pos].is_clear]
        if clear0:
            new[clear0, :m] = cur[clear0]
        if clear1:
            new[clear1, m:] = cur[clear1]
        if encs:
            idx = np.asarray(encs)
            reps = _rep_stack([selectors[i][pos] for i in encs])
            sub = cur[idx]
            rep = reps.reshape(reps.shape[:1] + (1,) * (sub.ndim - 3) + reps.shape[1:])
            hi = tfhe.ext_product_batch(params, rep, sub)
            new[idx, m:] = hi
            new[idx, :m] = cur[idx] - hi
        cur = new
    return cur


def monomial_gather(x: np.ndarray, es: np.ndarray) -> np.ndarray:
    """Per-item negacyclic monomial multiplication x_i * X^(es_i)."""
    n = x.shape[-1]
    es = np.asarray(es) % (2 * n)
    if not es.any():
        return x
    ext = np.concatenate([x, np.zeros_like(x) - x], axis=-1)
    idx = (np.arange(n) - es.reshape(es.shape + (1,) * (x.ndim - 1))) % (2 * n)
    return np.take_along_axis(ext, idx, axis=-1)
