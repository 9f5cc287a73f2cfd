import numpy as np
import pytest

from hewisard import hewnn, tfhe, wnn
from hewisard.hewnn import (HomWisardModel, decrypt_model, decrypt_sample,
                            encrypt_sample, he_count_labels, he_infer_pd,
                            he_merge, he_train, client_finalize)
from hewisard.params import named_params
from hewisard.tfhe import TfheError, keygen, make_rng
from hewisard.wnn import ActivationSpec, WisardGeometry


def geom(params, **kw):
    base = dict(s=20, l=2, a=4, r=3, p=params.p)
    base.update(kw)
    return WisardGeometry(**base)


def enc_dataset(bits, labels, geometry, key, rng):
    out = []
    for i in range(len(bits)):
        lab = int(labels[i]) if labels is not None else None
        out.append(encrypt_sample(bits[i], lab, key, rng,
                                  label_bits=geometry.label_bits))
    return out


@pytest.fixture(scope="module")
def small_world(ins64):
    """Tiny INSECURE geometry with trained plain + encrypted models."""
    params = ins64
    key, ksk = keygen(params, rng_seed=42)
    g = geom(params)
    rng = np.random.default_rng(0)
    bits = rng.integers(0, 2, (12, g.s)).astype(np.uint8)
    labels = rng.integers(0, 2, 12)
    enc_rng = make_rng(1)
    samples = enc_dataset(bits, labels, g, key, enc_rng)
    he_model = he_train(samples, g, params)
    plain_model, plain_counts = wnn.train_integer(bits, labels, g)
    return dict(params=params, key=key, ksk=ksk, g=g, bits=bits, labels=labels,
                samples=samples, he_model=he_model,
                plain_model=plain_model, plain_counts=plain_counts)


class TestEncryptSample:
    def test_roundtrip(self, ins64_keys, rng):
        key, _ = ins64_keys
        bits = [1, 0, 1, 1, 0]
        s = encrypt_sample(bits, 2, key, rng, label_bits=2)
        got_bits, got_label = decrypt_sample(s, key)
        assert got_bits == bits and got_label == 2

    def test_deterministic(self, ins64_keys):
        key, _ = ins64_keys
        s1 = encrypt_sample([1, 0], 1, key, make_rng(5), label_bits=1)
        s2 = encrypt_sample([1, 0], 1, key, make_rng(5), label_bits=1)
        assert all(np.array_equal(a.data, b.data)
                   for a, b in zip(s1.data_bits, s2.data_bits))

    def test_label_width_check(self, ins64_keys, rng):
        key, _ = ins64_keys
        with pytest.raises(TfheError):
            encrypt_sample([1], 4, key, rng, label_bits=2)


class TestHeTrain:
    def test_zero_samples_zero_model(self, ins64):
        g = geom(ins64)
        model = he_train([], g, ins64)
        assert not model.rams.any() and not model.counts_ct.any()

    def test_single_sample_matches_oracle(self, ins64, ins64_keys):
        key, _ = ins64_keys
        g = geom(ins64)
        rng = np.random.default_rng(2)
        bits = rng.integers(0, 2, (1, g.s)).astype(np.uint8)
        samples = enc_dataset(bits, [1], g, key, make_rng(3))
        model = he_train(samples, g, ins64)
        dec, counts = decrypt_model(model, key)
        plain, pcounts = wnn.train_integer(bits, np.array([1]), g)
        assert np.array_equal(dec.counters, plain.counters)
        assert np.array_equal(counts.counts, pcounts.counts)

    def test_dataset_matches_oracle_exactly(self, small_world):
        w = small_world
        dec, counts = decrypt_model(w["he_model"], w["key"])
        assert np.array_equal(dec.counters, w["plain_model"].counters)
        assert np.array_equal(counts.counts, w["plain_counts"].counts)

    def test_order_independence(self, small_world, ins64):
        w = small_world
        perm = np.random.default_rng(7).permutation(len(w["samples"]))
        shuffled = [w["samples"][i] for i in perm]
        model2 = he_train(shuffled, w["g"], ins64)
        assert np.array_equal(model2.rams, w["he_model"].rams)
        assert np.array_equal(model2.counts_ct, w["he_model"].counts_ct)

    def test_threaded_identical(self, small_world, ins64):
        w = small_world
        model2 = he_train(list(w["samples"]), w["g"], ins64, threads=3)
        assert np.array_equal(model2.rams, w["he_model"].rams)
        assert np.array_equal(model2.counts_ct, w["he_model"].counts_ct)

    def test_continuous_learning(self, small_world, ins64):
        w = small_world
        part1 = he_train(w["samples"][:5], w["g"], ins64)
        resumed = he_train(w["samples"][5:], w["g"], ins64, model=part1)
        assert np.array_equal(resumed.rams, w["he_model"].rams)
        assert np.array_equal(resumed.counts_ct, w["he_model"].counts_ct)

    def test_missing_labels_rejected(self, ins64, ins64_keys, rng):
        key, _ = ins64_keys
        g = geom(ins64)
        s = encrypt_sample([0] * g.s, None, key, rng)
        with pytest.raises(TfheError):
            he_train([s], g, ins64)

    def test_wrong_p_rejected(self, ins64):
        g = geom(ins64, p=ins64.p * 2)
        with pytest.raises(TfheError):
            he_train([], g, ins64)


class TestHeCountLabels:
    def test_balanced_counts(self, ins64, ins64_keys):
        key, _ = ins64_keys
        counts_ct = np.zeros((2, ins64.n), dtype=np.uint64)
        rng = make_rng(11)
        for lab in (0, 1, 0, 1):
            bits = [tfhe.enc_rgsw((lab >> i) & 1, key, rng) for i in range(1)]
            counts_ct = he_count_labels(bits, counts_ct, ins64)
        got = hewnn.decrypt_counts(counts_ct, ins64, 2, key)
        assert list(got.counts) == [2, 2]

    def test_skewed_counts(self, ins64, ins64_keys):
        key, _ = ins64_keys
        counts_ct = np.zeros((2, ins64.n), dtype=np.uint64)
        rng = make_rng(12)
        for lab in [0] * 9 + [1]:
            bits = [tfhe.enc_rgsw(lab & 1, key, rng)]
            counts_ct = he_count_labels(bits, counts_ct, ins64)
        got = hewnn.decrypt_counts(counts_ct, ins64, 2, key)
        assert list(got.counts) == [9, 1]

    def test_empty_zero(self, ins64, ins64_keys):
        key, _ = ins64_keys
        counts_ct = np.zeros((2, ins64.n), dtype=np.uint64)
        got = hewnn.decrypt_counts(counts_ct, ins64, 2, key)
        assert list(got.counts) == [0, 0]


class TestHeInference:
    def test_single_sample_trace(self, ins64, ins64_keys):
        key, ksk = ins64_keys
        g = geom(ins64)
        rng = np.random.default_rng(4)
        bits = rng.integers(0, 2, (1, g.s)).astype(np.uint8)
        samples = enc_dataset(bits, [1], g, key, make_rng(5))
        model = he_train(samples, g, ins64)
        query = encrypt_sample(bits[0], None, key, make_rng(6))
        pack = he_infer_pd(model, query, ksk)
        res = client_finalize(pack, key, ActivationSpec("bin"))
        assert res.raw[1].sum() == g.k0 and not res.raw[0].any()
        assert res.prediction == 1

    def test_scorepack_matches_plain_lookups(self, small_world):
        w = small_world
        rng = np.random.default_rng(8)
        test_bits = rng.integers(0, 2, (6, w["g"].s)).astype(np.uint8)
        enc_rng = make_rng(9)
        for t in test_bits:
            query = encrypt_sample(t, None, w["key"], enc_rng)
            pack = he_infer_pd(w["he_model"], query, w["ksk"])
            res = client_finalize(pack, w["key"], ActivationSpec("log"))
            assert np.array_equal(res.raw, wnn.lookups(w["plain_model"], t))
            assert res.noise_ok

    def test_predictions_match_oracle(self, small_world):
        w = small_world
        rng = np.random.default_rng(10)
        test_bits = rng.integers(0, 2, (8, w["g"].s)).astype(np.uint8)
        spec = ActivationSpec("log")
        enc_rng = make_rng(11)
        for t in test_bits:
            query = encrypt_sample(t, None, w["key"], enc_rng)
            pack = he_infer_pd(w["he_model"], query, w["ksk"])
            res = client_finalize(pack, w["key"], spec)
            assert res.prediction == wnn.evaluate(w["plain_model"], t, spec)

    def test_balanced_finalize_matches_oracle(self, small_world):
        w = small_world
        rng = np.random.default_rng(12)
        t = rng.integers(0, 2, w["g"].s).astype(np.uint8)
        query = encrypt_sample(t, None, w["key"], make_rng(13))
        pack = he_infer_pd(w["he_model"], query, w["ksk"])
        spec = ActivationSpec("log")
        res = client_finalize(pack, w["key"], spec, balance=True)
        expect = wnn.evaluate(w["plain_model"], t, spec, w["plain_counts"])
        assert res.prediction == expect

    def test_all_zero_pack_class_zero(self, ins64, ins64_keys):
        key, ksk = ins64_keys
        g = geom(ins64)
        model = HomWisardModel.zeros(g, ins64)
        query = encrypt_sample(np.zeros(g.s, np.uint8), None, key, make_rng(14))
        pack = he_infer_pd(model, query, ksk)
        res = client_finalize(pack, key, ActivationSpec("bin"))
        assert res.prediction == 0

    def test_geometry_mismatch(self, small_world, ins64_keys):
        key, ksk = ins64_keys
        bad = encrypt_sample([0, 1], None, key, make_rng(15))
        with pytest.raises(TfheError):
            he_infer_pd(small_world["he_model"], bad, ksk)


class TestHeTrainMulti:
    def test_lockstep_matches_per_seed(self, small_world, ins64):
        w = small_world
        geoms = [geom(ins64, r=r) for r in (3, 8, 21)]
        multi = hewnn.he_train_multi(w["samples"], geoms, ins64)
        for g, m in zip(geoms, multi):
            ref = he_train(w["samples"], g, ins64)
            assert np.array_equal(m.rams, ref.rams)
            assert np.array_equal(m.counts_ct, ref.counts_ct)

    def test_mixed_shapes_rejected(self, small_world, ins64):
        g1 = geom(ins64, r=1)
        g2 = geom(ins64, r=2, a=5)
        with pytest.raises(TfheError):
            hewnn.he_train_multi(small_world["samples"], [g1, g2], ins64)


class TestHeMerge:
    def test_merge_with_zero_identity(self, small_world, ins64):
        w = small_world
        merged = he_merge(w["he_model"], HomWisardModel.zeros(w["g"], ins64))
        assert np.array_equal(merged.rams, w["he_model"].rams)

    def test_federated_equality(self, small_world, ins64):
        w = small_world
        ma = he_train(w["samples"][:7], w["g"], ins64)
        mb = he_train(w["samples"][7:], w["g"], ins64)
        merged = he_merge(ma, mb)
        dec, counts = decrypt_model(merged, w["key"])
        assert np.array_equal(dec.counters, w["plain_model"].counters)
        assert np.array_equal(counts.counts, w["plain_counts"].counts)

    def test_mismatch_rejected(self, small_world, ins64):
        other = HomWisardModel.zeros(geom(ins64, r=99), ins64)
        with pytest.raises(TfheError):
            he_merge(small_world["he_model"], other)


@pytest.mark.slow
class TestHe0Pipeline:
    """Noisy production parameters: oracle equality must survive real noise."""

    def test_train_and_infer_he0(self):
        params = named_params("HE_0", p=1 << 8)
        key, ksk = keygen(params, rng_seed=21)
        g = WisardGeometry(s=30, l=3, a=6, r=5, p=params.p)
        rng = np.random.default_rng(22)
        bits = rng.integers(0, 2, (10, g.s)).astype(np.uint8)
        labels = rng.integers(0, 3, 10)
        samples = enc_dataset(bits, labels, g, key, make_rng(23))
        model = he_train(samples, g, params)
        dec, counts = decrypt_model(model, key)
        plain, pcounts = wnn.train_integer(bits, labels, g)
        assert np.array_equal(dec.counters, plain.counters)
        assert np.array_equal(counts.counts, pcounts.counts)

        spec = ActivationSpec("log")
        for t in bits[:3]:
            query = encrypt_sample(t, None, key, make_rng(24))
            pack = he_infer_pd(model, query, ksk)
            res = client_finalize(pack, key, spec, balance=True)
            assert np.array_equal(res.raw, wnn.lookups(plain, t))
            assert res.prediction == wnn.evaluate(plain, t, spec, pcounts)
            assert res.noise_ok
