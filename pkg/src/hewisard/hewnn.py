"""WiSARD training and inference over TFHE-encrypted data.

Training: each sample contributes, per RAM, one single-valued LUT built by
inverse vertical packing from the selector [label bits || address bits] and
the trivial payload (0, q/p); LUTs are added into the model rows, so the
server learns counters without ever decrypting. A small IVP over the label
bits alone accumulates encrypted per-class sample counts for balancing.

Inference (post-decryption activation): the label bits are public loop
indices, so vertical packing runs with clear tree bits (free sub-list
selection) and only the sample's address bits cost homomorphic work. The
raw scores are packed into few RLWE ciphertexts for the client, who
decrypts, rescales, activates, and takes the argmax.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import lut, tfhe, wnn
from .lut import SelectorBit
from .params import HeParams
from .tfhe import RgswCiphertext, RlweCiphertext, TfheError
from .wnn import ClassCounts, IntegerWisardModel, WisardGeometry

_VP_CHUNK = 512


@dataclass
class EncryptedSample:
    """One preprocessed sample, encrypted bit by bit as RGSW ciphertexts."""

    params: HeParams
    data_bits: list[RgswCiphertext]
    label_bits: list[RgswCiphertext] | None = None          # LSB-first

    @property
    def s(self) -> int:
        return len(self.data_bits)


@dataclass
class HomWisardModel:
    """Encrypted integer WiSARD: k0 x k1 RLWE rows plus encrypted class counts."""

    geometry: WisardGeometry
    params: HeParams
    rams: np.ndarray            # uint64 (k0, k1, 2, N)
    counts_ct: np.ndarray       # uint64 (2, N), class c count at coefficient c

    @classmethod
    def zeros(cls, geometry: WisardGeometry, params: HeParams) -> "HomWisardModel":
        k1 = model_row_polys(geometry, params)
        return cls(geometry, params,
                   np.zeros((geometry.k0, k1, 2, params.n), dtype=np.uint64),
                   np.zeros((2, params.n), dtype=np.uint64))

    def copy(self) -> "HomWisardModel":
        return HomWisardModel(self.geometry, self.params,
                              self.rams.copy(), self.counts_ct.copy())


@dataclass
class ScorePack:
    """PD-act inference output: packed raw scores plus encrypted class counts.

    Coefficient i*k0 + j (chunked across ciphertexts of N coefficients)
    holds the class-i, RAM-j counter lookup.
    """

    geometry: WisardGeometry
    params: HeParams
    packed: np.ndarray          # uint64 (ceil(l*k0/N), 2, N)
    counts_ct: np.ndarray       # uint64 (2, N)


@dataclass
class FinalizeResult:
    prediction: int
    scores: np.ndarray          # (l,) activated per-class scores
    raw: np.ndarray             # (l, k0) decrypted counter lookups
    counts: ClassCounts
    noise_max: int
    noise_margin: int

    @property
    def noise_ok(self) -> bool:
        return self.noise_max < self.noise_margin


def model_row_polys(geometry: WisardGeometry, params: HeParams) -> int:
    """RLWE ciphertexts per RAM row: max(1, 2^(label_bits + a) / N)."""
    return max(1, (1 << geometry.selector_bits) // params.n)


def _check_geometry(geometry: WisardGeometry, params: HeParams):
    if geometry.p != params.p:
        raise TfheError(f"geometry counter modulus {geometry.p} != params p {params.p}")


# ---------------------------------------------------------------------------
# encryption


def encrypt_sample(bits: Sequence[int], label: int | None, key: tfhe.SecretKey,
                   rng: np.random.Generator, *, label_bits: int = 0) -> EncryptedSample:
    """Encrypt preprocessed input bits (and the label for training samples)."""
    data = tfhe.enc_rgsw_batch(np.asarray(bits, dtype=np.int64), key, rng)
    lab = None
    if label is not None:
        if label >= (1 << label_bits):
            raise TfheError(f"label {label} does not fit in {label_bits} bits")
        lab = tfhe.enc_rgsw_batch([(label >> i) & 1 for i in range(label_bits)],
                                  key, rng)
    return EncryptedSample(key.params, data, lab)


def decrypt_sample(sample: EncryptedSample, key: tfhe.SecretKey) -> tuple[list[int], int | None]:
    bits = [tfhe.dec_rgsw(c, key) for c in sample.data_bits]
    if sample.label_bits is None:
        return bits, None
    lab = sum(tfhe.dec_rgsw(c, key) << i for i, c in enumerate(sample.label_bits))
    return bits, lab


# ---------------------------------------------------------------------------
# selector construction (canonical order shared by training and inference)


def _selector_vector(geometry: WisardGeometry, params: HeParams,
                     label_bit, addr_bit) -> list[SelectorBit]:
    """Build the k-bit selector from weight sources.

    label_bit(i) supplies label bit i, addr_bit(w) supplies address bit w;
    positions follow the canonical tree-MSB/rotate-LSB order.
    """
    k = geometry.selector_bits
    z = lut.tree_depth(k, params)
    a = geometry.a

    def source(weight: int) -> SelectorBit:
        return addr_bit(weight) if weight < a else label_bit(weight - a)

    sel = [source(k - 1 - i) for i in range(z)]
    sel += [source(w) for w in lut.rotate_weights(k, params)]
    return sel


def _permuted(sample: EncryptedSample, geometry: WisardGeometry) -> list[RgswCiphertext]:
    perm = wnn.permutation(geometry.r, geometry.s)
    return [sample.data_bits[p] for p in perm]


def _train_selectors(sample: EncryptedSample, geometry: WisardGeometry,
                     params: HeParams) -> list[list[SelectorBit]]:
    permuted = _permuted(sample, geometry)
    out = []
    for j in range(geometry.k0):
        def addr_bit(w, j=j):
            idx = j * geometry.a + w
            if idx >= geometry.s:
                return SelectorBit.clear(0)       # zero padding of the last RAM
            return SelectorBit.enc(permuted[idx])

        def label_bit(i):
            return SelectorBit.enc(sample.label_bits[i])

        out.append(_selector_vector(geometry, params, label_bit, addr_bit))
    return out


# ---------------------------------------------------------------------------
# homomorphic training


def he_count_labels(label_bits: Sequence[RgswCiphertext], counts_ct: np.ndarray,
                    params: HeParams) -> np.ndarray:
    """Add one to the encrypted per-class counter selected by the label bits."""
    sel = [[SelectorBit.enc(c) for c in label_bits]]
    payload = tfhe.trivial_rlwe(1, params).data
    rows = lut.ivp_batch(sel, payload, params)
    return counts_ct + rows[0, 0]


def he_train(samples: Iterable[EncryptedSample], geometry: WisardGeometry,
             params: HeParams, model: HomWisardModel | None = None,
             threads: int = 1) -> HomWisardModel:
    """Homomorphic integer WiSARD training (continuous: pass an existing model).

    Per sample and RAM j, IVP deposits an encrypted +1 at the (label, address)
    entry of row j; rows are accumulated by exact RLWE addition, so sample
    order and threading cannot change the resulting ciphertexts.
    """
    _check_geometry(geometry, params)
    if model is None:
        model = HomWisardModel.zeros(geometry, params)
    if model.geometry != geometry or model.params != params:
        raise TfheError("model geometry/params mismatch")
    payload = tfhe.trivial_rlwe(1, params).data

    def accumulate(into: HomWisardModel, chunk: Iterable[EncryptedSample]):
        for sample in chunk:
            if sample.s != geometry.s:
                raise TfheError(f"sample has {sample.s} bits, geometry wants {geometry.s}")
            if sample.label_bits is None:
                raise TfheError("training samples need encrypted label bits")
            sels = _train_selectors(sample, geometry, params)
            rows = lut.ivp_batch(sels, payload, params)
            into.rams += rows
            into.counts_ct = he_count_labels(sample.label_bits, into.counts_ct, params)

    if threads <= 1:
        accumulate(model, samples)
        return model

    # per-worker partial models merged at the end: bit-identical to sequential
    samples = list(samples)
    stripes = [samples[i::threads] for i in range(threads)]
    partials = [HomWisardModel.zeros(geometry, params) for _ in stripes]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(lambda sp: accumulate(sp[0], sp[1]), zip(partials, stripes)))
    for part in partials:
        model.rams += part.rams
        model.counts_ct = model.counts_ct + part.counts_ct
    return model


def he_train_multi(samples: Iterable[EncryptedSample],
                   geometries: Sequence[WisardGeometry],
                   params: HeParams) -> list[HomWisardModel]:
    """Train one model per permutation seed in a single streaming pass.

    Each sample is consumed once; its IVP contributions for every geometry
    are computed in one batch. Ciphertext addition is exact, so the models
    are bit-identical to separate he_train runs per seed.
    """
    base = geometries[0]
    for g in geometries:
        if (g.s, g.l, g.a, g.p) != (base.s, base.l, base.a, base.p):
            raise TfheError("multi-seed training requires geometries differing only in r")
        _check_geometry(g, params)
    models = [HomWisardModel.zeros(g, params) for g in geometries]
    payload = tfhe.trivial_rlwe(1, params).data
    k0 = base.k0
    for sample in samples:
        if sample.label_bits is None:
            raise TfheError("training samples need encrypted label bits")
        sels = []
        for g in geometries:
            sels.extend(_train_selectors(sample, g, params))
        rows = lut.ivp_batch(sels, payload, params)
        counts_inc = he_count_labels(sample.label_bits,
                                     np.zeros((2, params.n), dtype=np.uint64), params)
        for i, model in enumerate(models):
            model.rams += rows[i * k0: (i + 1) * k0]
            model.counts_ct += counts_inc
    return models


def he_merge(m1: HomWisardModel, m2: HomWisardModel) -> HomWisardModel:
    """Federated merge: entry-wise RLWE addition of rows and counters."""
    if m1.geometry != m2.geometry:
        raise TfheError("cannot merge models with different geometry or seed")
    if m1.params != m2.params:
        raise TfheError("cannot merge models with different parameters")
    return HomWisardModel(m1.geometry, m1.params,
                          m1.rams + m2.rams, m1.counts_ct + m2.counts_ct)


# ---------------------------------------------------------------------------
# homomorphic inference (PD-act)


def he_infer_pd(model: HomWisardModel, sample: EncryptedSample,
                ksk: tfhe.PackingKeySwitchKey) -> ScorePack:
    """Score every (class, RAM) pair and pack the results for the client."""
    geometry, params = model.geometry, model.params
    if sample.s != geometry.s:
        raise TfheError(f"sample has {sample.s} bits, geometry wants {geometry.s}")
    if sample.params != params:
        raise TfheError("sample parameter set differs from the model's")
    permuted = _permuted(sample, geometry)
    n = params.n
    total = geometry.l * geometry.k0

    lwe_a = np.empty((total, n), dtype=np.uint64)
    lwe_b = np.empty(total, dtype=np.uint64)
    flat = [(i, j) for i in range(geometry.l) for j in range(geometry.k0)]
    for c0 in range(0, total, _VP_CHUNK):
        part = flat[c0: c0 + _VP_CHUNK]
        sels, luts = [], []
        for (i, j) in part:
            def addr_bit(w, j=j):
                idx = j * geometry.a + w
                if idx >= geometry.s:
                    return SelectorBit.clear(0)
                return SelectorBit.enc(permuted[idx])

            def label_bit(b, i=i):
                return SelectorBit.clear((i >> b) & 1)

            sels.append(_selector_vector(geometry, params, label_bit, addr_bit))
            luts.append(model.rams[j])
        a_part, b_part = lut.vp_batch(sels, luts, params)
        lwe_a[c0: c0 + len(part)] = a_part
        lwe_b[c0: c0 + len(part)] = b_part

    n_ct = -(-total // n)
    packed = np.empty((n_ct, 2, n), dtype=np.uint64)
    for t in range(n_ct):
        hi = min(n, total - t * n)
        b_poly = np.zeros(n, dtype=np.uint64)
        b_poly[:hi] = lwe_b[t * n: t * n + hi]
        packed[t] = tfhe.pack_batch(lwe_a[t * n: t * n + hi][np.newaxis],
                                    b_poly[np.newaxis], ksk)[0]
    return ScorePack(geometry, params, packed, model.counts_ct.copy())


def decrypt_counts(counts_ct: np.ndarray, params: HeParams, l: int,
                   key: tfhe.SecretKey) -> ClassCounts:
    vals = tfhe.dec_rlwe(RlweCiphertext(params, counts_ct), key)
    return ClassCounts(vals[:l].astype(np.int64))


def client_finalize(pack: ScorePack, key: tfhe.SecretKey,
                    activation: wnn.ActivationSpec, *,
                    balance: bool = False) -> FinalizeResult:
    """Decrypt, rescale, activate, and argmax -- the plaintext tail of PD-act."""
    geometry, params = pack.geometry, pack.params
    raw_flat, noise_max = [], 0
    for t in range(pack.packed.shape[0]):
        ct = RlweCiphertext(params, pack.packed[t])
        raw_flat.append(tfhe.dec_rlwe(ct, key))
        noise_max = max(noise_max, tfhe.measure_noise(ct, key).max_abs)
    raw = np.concatenate(raw_flat)[: geometry.l * geometry.k0]
    raw = raw.reshape(geometry.l, geometry.k0)
    counts = decrypt_counts(pack.counts_ct, params, geometry.l, key)
    pred = wnn.predict_from_lookups(raw, activation, counts if balance else None)
    scores = wnn.scores_from_lookups(raw, activation, counts if balance else None)
    return FinalizeResult(pred, scores, raw, counts,
                          noise_max, params.delta // 2)


# ---------------------------------------------------------------------------
# oracle bridge (tests, client tooling)


def decrypt_model(model: HomWisardModel, key: tfhe.SecretKey
                  ) -> tuple[IntegerWisardModel, ClassCounts]:
    """Decrypt the RLWE matrix back into a plaintext integer model."""
    g, params = model.geometry, model.params
    n = params.n
    plain = IntegerWisardModel.zeros(g)
    per_row = 1 << g.selector_bits
    for j in range(g.k0):
        vals = np.concatenate([tfhe.dec_rlwe(RlweCiphertext(params, poly), key)
                               for poly in model.rams[j]])[:per_row]
        for c in range(g.l):
            plain.counters[c, j] = vals[c << g.a: (c << g.a) + (1 << g.a)]
    counts = decrypt_counts(model.counts_ct, params, g.l, key)
    return plain, counts
