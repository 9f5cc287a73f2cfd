import numpy as np
import pytest

from hewisard import lut, tfhe
from hewisard.lut import (EncryptedLut, SelectorBit, cdemux, decode_lut,
                          encode_lut, inverse_vertical_packing, lut_add,
                          vertical_packing)
from hewisard.params import named_params
from hewisard.tfhe import TfheError, dec_lwe, dec_rlwe, enc_rgsw, make_rng


def enc_bits(value, k, key, rng):
    """Selector vector for index `value` in the canonical position order."""
    z = lut.tree_depth(k, key.params)
    sel = []
    for i in range(z):
        sel.append(SelectorBit.enc(enc_rgsw((value >> (k - 1 - i)) & 1, key, rng)))
    for w in lut.rotate_weights(k, key.params):
        sel.append(SelectorBit.enc(enc_rgsw((value >> w) & 1, key, rng)))
    return sel


def clear_bits(value, k, params):
    z = lut.tree_depth(k, params)
    sel = [SelectorBit.clear((value >> (k - 1 - i)) & 1) for i in range(z)]
    sel += [SelectorBit.clear((value >> w) & 1) for w in lut.rotate_weights(k, params)]
    return sel


class TestEncodeLut:
    def test_identity_table_single_poly(self, ins64, ins64_keys):
        key, _ = ins64_keys
        table = np.arange(64)
        enc = encode_lut(table, ins64)
        assert len(enc.polys) == 1
        assert np.array_equal(dec_rlwe(enc.polys[0], key), table)

    def test_zero_table(self, ins64):
        enc = encode_lut(np.zeros(128, dtype=int), ins64)
        assert len(enc.polys) == 2
        assert not any(p.data.any() for p in enc.polys)

    def test_roundtrip_random(self, ins64, ins64_keys, rng):
        key, _ = ins64_keys
        table = rng.integers(0, ins64.p, 256)
        assert np.array_equal(decode_lut(encode_lut(table, ins64), key), table)

    def test_bad_length(self, ins64):
        with pytest.raises(TfheError):
            encode_lut(np.zeros(100, dtype=int), ins64)


class TestVerticalPacking:
    def test_all_clear_equals_plain_lookup_zero_noise(self, ins64, ins64_keys, rng):
        key, _ = ins64_keys
        k = 8
        table = rng.integers(0, ins64.p, 1 << k)
        enc = encode_lut(table, ins64)
        for m in rng.integers(0, 1 << k, 10):
            out = vertical_packing(clear_bits(int(m), k, ins64), enc)
            assert dec_lwe(out, key) == table[m]
            assert tfhe.measure_noise(out, key).max_abs == 0

    def test_exhaustive_encrypted_k6(self, ins64, ins64_keys, rng):
        key, _ = ins64_keys
        table = rng.integers(0, ins64.p, 64)
        enc = encode_lut(table, ins64)
        for m in range(64):
            out = vertical_packing(enc_bits(m, 6, key, rng), enc)
            assert dec_lwe(out, key) == table[m], f"index {m}"

    def test_exhaustive_with_tree_k8(self, ins64, ins64_keys, rng):
        # k > log2(N): exercises the CMUX tree levels
        key, _ = ins64_keys
        table = rng.integers(0, ins64.p, 256)
        enc = encode_lut(table, ins64)
        for m in range(0, 256, 7):
            out = vertical_packing(enc_bits(m, 8, key, rng), enc)
            assert dec_lwe(out, key) == table[m], f"index {m}"

    def test_mixed_bits_match_clear(self, ins64, ins64_keys, rng):
        key, _ = ins64_keys
        k = 8
        table = rng.integers(0, ins64.p, 1 << k)
        enc = encode_lut(table, ins64)
        for m in rng.integers(0, 1 << k, 6):
            ref = clear_bits(int(m), k, ins64)
            mixed = list(ref)
            flip = int(rng.integers(0, k))
            mixed[flip] = SelectorBit.enc(enc_rgsw(ref[flip].bit, key, rng))
            out_ref = dec_lwe(vertical_packing(ref, enc), key)
            out_mix = dec_lwe(vertical_packing(mixed, enc), key)
            assert out_ref == out_mix == table[m]

    @pytest.mark.slow
    def test_he1_k14_random(self):
        # geometry of the MNIST_M row (Table 2): k = 14, p = 2^12
        params = named_params("HE_1", p=1 << 12)
        key, _ = tfhe.keygen(params, rng_seed=5)
        rng = make_rng(6)
        table = rng.integers(0, params.p, 1 << 14)
        enc = encode_lut(table, params)
        for m in rng.integers(0, 1 << 14, 3):
            out = vertical_packing(enc_bits(int(m), 14, key, rng), enc)
            assert dec_lwe(out, key) == table[m]


class TestCdemux:
    def test_selector_zero_routes_first(self, ins64_keys, rng):
        key, _ = ins64_keys
        m = rng.integers(0, 256, 64)
        d = tfhe.enc_rlwe(m, key, rng)
        out0, out1 = cdemux(enc_rgsw(0, key, rng), d)
        assert np.array_equal(dec_rlwe(out0, key), m)
        assert not dec_rlwe(out1, key).any()

    def test_selector_one_routes_second(self, ins64_keys, rng):
        key, _ = ins64_keys
        m = rng.integers(0, 256, 64)
        d = tfhe.enc_rlwe(m, key, rng)
        out0, out1 = cdemux(enc_rgsw(1, key, rng), d)
        assert not dec_rlwe(out0, key).any()
        assert np.array_equal(dec_rlwe(out1, key), m)

    def test_outputs_sum_to_input(self, ins64_keys, rng):
        key, _ = ins64_keys
        for bit in (0, 1):
            m = rng.integers(0, 256, 64)
            d = tfhe.enc_rlwe(m, key, rng)
            out0, out1 = cdemux(enc_rgsw(bit, key, rng), d)
            assert np.array_equal(dec_rlwe(out0 + out1, key), m)

    def test_cmux_inverts_cdemux(self, ins64_keys, rng):
        key, _ = ins64_keys
        for bit in (0, 1):
            m = rng.integers(0, 256, 64)
            d = tfhe.enc_rlwe(m, key, rng)
            C = enc_rgsw(bit, key, rng)
            out0, out1 = cdemux(C, d)
            rec = tfhe.cmux(C, out1, out0)
            assert np.array_equal(dec_rlwe(rec, key), m)


class TestInverseVerticalPacking:
    def test_trivial_payload_at_zero(self, ins64, ins64_keys, rng):
        key, _ = ins64_keys
        payload = tfhe.trivial_rlwe(1, ins64)
        bits = [SelectorBit.enc(enc_rgsw(0, key, rng)) for _ in range(6)]
        out = inverse_vertical_packing(bits, payload)
        vals = decode_lut(out, key)
        assert vals[0] == 1 and not vals[1:].any()

    def test_exhaustive_single_nonzero_k6(self, ins64, ins64_keys, rng):
        key, _ = ins64_keys
        payload = tfhe.trivial_rlwe(7, ins64)
        for m in range(64):
            out = inverse_vertical_packing(enc_bits(m, 6, key, rng), payload)
            vals = decode_lut(out, key)
            assert vals[m] == 7
            assert np.count_nonzero(vals) == 1

    def test_exhaustive_with_tree_k8(self, ins64, ins64_keys, rng):
        key, _ = ins64_keys
        payload = tfhe.trivial_rlwe(3, ins64)
        for m in range(0, 256, 5):
            out = inverse_vertical_packing(enc_bits(m, 8, key, rng), payload)
            vals = decode_lut(out, key)
            assert vals[m] == 3 and np.count_nonzero(vals) == 1

    def test_vp_of_ivp_roundtrip_he0(self):
        params = named_params("HE_0", p=1 << 8)
        key, _ = tfhe.keygen(params, rng_seed=8)
        rng = make_rng(9)
        payload = tfhe.trivial_rlwe(200, params)
        k = 13
        for _ in range(3):
            m = int(rng.integers(0, 1 << k))
            bits = enc_bits(m, k, key, rng)
            table = inverse_vertical_packing(bits, payload)
            out = vertical_packing(bits, table)
            assert dec_lwe(out, key) == 200


class TestLutAdd:
    def test_add_zero_identity(self, ins64, ins64_keys, rng):
        key, _ = ins64_keys
        a = encode_lut(rng.integers(0, 256, 128), ins64)
        zero = encode_lut(np.zeros(128, dtype=int), ins64)
        assert np.array_equal(decode_lut(lut_add(a, zero), key), decode_lut(a, key))

    def test_disjoint_single_valued(self, ins64, ins64_keys, rng):
        key, _ = ins64_keys
        payload = tfhe.trivial_rlwe(1, ins64)
        t1 = inverse_vertical_packing(enc_bits(10, 6, key, rng), payload)
        t2 = inverse_vertical_packing(enc_bits(50, 6, key, rng), payload)
        vals = decode_lut(lut_add(t1, t2), key)
        assert vals[10] == 1 and vals[50] == 1 and np.count_nonzero(vals) == 2

    def test_same_slot_sums(self, ins64, ins64_keys, rng):
        key, _ = ins64_keys
        payload = tfhe.trivial_rlwe(1, ins64)
        t1 = inverse_vertical_packing(enc_bits(33, 6, key, rng), payload)
        t2 = inverse_vertical_packing(enc_bits(33, 6, key, rng), payload)
        vals = decode_lut(lut_add(t1, t2), key)
        assert vals[33] == 2 and np.count_nonzero(vals) == 1

    def test_geometry_mismatch(self, ins64):
        a = encode_lut(np.zeros(64, dtype=int), ins64)
        b = encode_lut(np.zeros(128, dtype=int), ins64)
        with pytest.raises(TfheError):
            lut_add(a, b)

    def test_vp_linear_over_lut_add(self, ins64, ins64_keys, rng):
        key, _ = ins64_keys
        p = ins64.p
        ta = rng.integers(0, p, 256)
        tb = rng.integers(0, p, 256)
        ea, eb = encode_lut(ta, ins64), encode_lut(tb, ins64)
        for m in rng.integers(0, 256, 5):
            bits = enc_bits(int(m), 8, key, rng)
            lhs = dec_lwe(vertical_packing(bits, lut_add(ea, eb)), key)
            assert lhs == (ta[m] + tb[m]) % p


class TestBatchedEngine:
    """The batched VP/IVP used by the pipeline must match the simple ops."""

    @pytest.mark.parametrize("k", [5, 6, 8])
    def test_vp_batch_matches_single(self, ins64, ins64_keys, rng, k):
        key, _ = ins64_keys
        table = rng.integers(0, ins64.p, 1 << k)
        enc = encode_lut(table, ins64)
        raw = np.stack([p.data for p in enc.polys])
        sels, expect = [], []
        for m in rng.integers(0, 1 << k, 8):
            mixed = enc_bits(int(m), k, key, rng)
            flip = int(rng.integers(0, k))
            mixed[flip] = SelectorBit.clear((int(m) >> _weight(flip, k, ins64)) & 1)
            sels.append(mixed)
            expect.append(table[m])
        a_parts, b_parts = lut.vp_batch(sels, [raw] * len(sels), ins64)
        for i in range(len(sels)):
            ct = tfhe.LweCiphertext(ins64, a_parts[i], b_parts[i])
            assert dec_lwe(ct, key) == expect[i]

    @pytest.mark.parametrize("k", [4, 6, 8])
    def test_ivp_batch_matches_single(self, ins64, ins64_keys, rng, k):
        key, _ = ins64_keys
        payload = tfhe.trivial_rlwe(9, ins64)
        ms = [int(v) for v in rng.integers(0, 1 << k, 6)]
        sels = [enc_bits(m, k, key, rng) for m in ms]
        rows = lut.ivp_batch(sels, payload.data, ins64)
        for i, m in enumerate(ms):
            table = EncryptedLut([tfhe.RlweCiphertext(ins64, r) for r in rows[i]], k)
            vals = decode_lut(table, key)
            assert vals[m] == 9 and np.count_nonzero(vals) == 1

    def test_vp_batch_fast_path_he0(self, he0_keys):
        key, _ = he0_keys
        params = key.params
        rng = make_rng(77)
        k = 12
        table = rng.integers(0, params.p, 1 << k)
        enc = encode_lut(table, params)
        raw = np.stack([p.data for p in enc.polys])
        ms = [int(v) for v in rng.integers(0, 1 << k, 4)]
        sels = [enc_bits(m, k, key, rng) for m in ms]
        a_parts, b_parts = lut.vp_batch(sels, [raw] * len(sels), params)
        for i, m in enumerate(ms):
            ct = tfhe.LweCiphertext(params, a_parts[i], b_parts[i])
            assert dec_lwe(ct, key) == table[m]

    def test_ivp_batch_fast_path_he0(self, he0_keys):
        key, _ = he0_keys
        params = key.params
        rng = make_rng(78)
        payload = tfhe.trivial_rlwe(1, params)
        k = 13
        ms = [int(v) for v in rng.integers(0, 1 << k, 3)]
        sels = [enc_bits(m, k, key, rng) for m in ms]
        rows = lut.ivp_batch(sels, payload.data, params)
        for i, m in enumerate(ms):
            table = EncryptedLut([tfhe.RlweCiphertext(params, r) for r in rows[i]], k)
            vals = decode_lut(table, key)
            assert vals[m] == 1 and np.count_nonzero(vals) == 1


def _weight(pos, k, params):
    z = lut.tree_depth(k, params)
    if pos < z:
        return k - 1 - pos
    return lut.rotate_weights(k, params)[pos - z]
