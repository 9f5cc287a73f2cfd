import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hewisard import ring
from hewisard.fft import plan
from hewisard.params import GadgetSpec
from hewisard.ring import (RingPoly, gadget_decompose, gadget_recompose,
                           monomial_mul, negacyclic_mul, poly_add, poly_sub)

Q = 1 << 64


def oracle_negacyclic(a, b):
    """Independent schoolbook oracle over python ints with sign folding."""
    n = len(a)
    out = [0] * n
    for i in range(n):
        for j in range(n):
            k = i + j
            term = int(a[i]) * int(b[j])
            if k >= n:
                out[k - n] = (out[k - n] - term) % Q
            else:
                out[k] = (out[k] + term) % Q
    return np.array(out, dtype=np.uint64)


def rand_poly(rng, n):
    return RingPoly(rng.integers(0, Q, n, dtype=np.uint64))


class TestAdd:
    def test_identity(self):
        a = RingPoly([5, 7, 11, 13])
        assert poly_add(a, RingPoly.zeros(4)) == a

    def test_inverse(self):
        a = RingPoly([5, 7, 11, 13])
        assert poly_add(a, ring.poly_neg(a)) == RingPoly.zeros(4)

    def test_small_case(self):
        assert poly_add(RingPoly([1, 2]), RingPoly([3, 4])) == RingPoly([4, 6])

    def test_dimension_error(self):
        with pytest.raises(ring.DimensionError):
            poly_add(RingPoly([1, 2]), RingPoly([1, 2, 3, 4]))


class TestNegacyclicMul:
    def test_x_times_x_n_minus_1(self):
        n = 8
        x = RingPoly([0, 1] + [0] * (n - 2))
        xn1 = RingPoly([0] * (n - 1) + [1])
        expect = np.zeros(n, dtype=np.uint64)
        expect[0] = np.uint64(Q - 1)
        assert negacyclic_mul(x, xn1) == RingPoly(expect)

    def test_mul_identity(self):
        rng = np.random.default_rng(0)
        a = rand_poly(rng, 16)
        one = RingPoly.constant(1, 16)
        assert negacyclic_mul(a, one) == a

    @pytest.mark.parametrize("n", [2, 4, 8, 16])
    def test_matches_schoolbook_oracle(self, n):
        rng = np.random.default_rng(n)
        for _ in range(5):
            a, b = rand_poly(rng, n), rand_poly(rng, n)
            got = negacyclic_mul(a, b)
            assert np.array_equal(got.coeffs, oracle_negacyclic(a.coeffs, b.coeffs))


class TestMonomialMul:
    def test_zero_exponent(self):
        rng = np.random.default_rng(1)
        v = rand_poly(rng, 8)
        assert monomial_mul(v, 0) == v

    def test_shift_one(self):
        v = RingPoly([1] + [0] * 7)
        assert monomial_mul(v, 1) == RingPoly([0, 1] + [0] * 6)

    def test_exponent_n_negates(self):
        rng = np.random.default_rng(2)
        v = rand_poly(rng, 8)
        assert monomial_mul(v, 8) == ring.poly_neg(v)

    def test_full_period(self):
        rng = np.random.default_rng(3)
        v = rand_poly(rng, 8)
        assert monomial_mul(v, 16) == v

    @given(st.integers(min_value=-64, max_value=64))
    @settings(max_examples=40, deadline=None)
    def test_roundtrip(self, e):
        rng = np.random.default_rng(4)
        v = rand_poly(rng, 16)
        assert monomial_mul(monomial_mul(v, e), -e) == v

    def test_matches_poly_mul(self):
        rng = np.random.default_rng(5)
        v = rand_poly(rng, 16)
        for e in (1, 7, 15):
            mono = np.zeros(16, dtype=np.uint64)
            mono[e] = np.uint64(1)
            assert monomial_mul(v, e) == negacyclic_mul(v, RingPoly(mono))


class TestGadget:
    def test_zero(self):
        g = GadgetSpec(2, 15)
        for d in gadget_decompose(RingPoly.zeros(8), g):
            assert not d.coeffs.any()

    def test_exact_value(self):
        # q/beta with ell=2 recomposes exactly
        g = GadgetSpec(2, 15)
        a = RingPoly.constant(1 << (64 - 15), 8)
        rec = gadget_recompose(gadget_decompose(a, g), g)
        assert rec == a

    def test_digits_centered(self):
        g = GadgetSpec(2, 15)
        rng = np.random.default_rng(6)
        a = rand_poly(rng, 64)
        for d in gadget_decompose(a, g):
            c = ring.centered(d.coeffs)
            assert np.all(np.abs(c) <= (1 << 14))

    @pytest.mark.parametrize("spec,err_bound", [
        (GadgetSpec(1, 23), 1 << 41),   # HE_0
        (GadgetSpec(2, 15), 1 << 34),   # HE_1 (Table 1 bound)
        (GadgetSpec(2, 32), 1),         # full precision: exact
    ])
    def test_recomposition_error(self, spec, err_bound):
        rng = np.random.default_rng(7)
        # bulk property: 10^4 random coefficients
        a = RingPoly(rng.integers(0, Q, 1 << 14, dtype=np.uint64))
        rec = gadget_recompose(gadget_decompose(a, spec), spec)
        err = np.abs(ring.centered(rec.coeffs - a.coeffs))
        assert err.max() < err_bound

    def test_recompose_matches_rounded_input(self):
        g = GadgetSpec(2, 15)
        rng = np.random.default_rng(8)
        a = rand_poly(rng, 256)
        rec = gadget_recompose(gadget_decompose(a, g), g)
        step = np.uint64(1 << (64 - 30))
        rounded = ((a.coeffs + step // np.uint64(2)) // step) * step
        assert np.array_equal(rec.coeffs, rounded)


class TestFastPath:
    """The limb-FFT path reconstructs products exactly mod 2^64."""

    @pytest.mark.parametrize("n", [4, 16, 256, 2048])
    def test_exact_mul_matches_reference(self, n):
        rng = np.random.default_rng(9)
        a = rng.integers(0, Q, n, dtype=np.uint64)
        b = rng.integers(0, Q, n, dtype=np.uint64)
        pl = plan(n)
        got = pl.exact_mul(a, pl.fwd_limbs(b))
        assert np.array_equal(got, ring.negacyclic_mul_raw(a, b))

    def test_exact_mul_batched(self):
        rng = np.random.default_rng(10)
        a = rng.integers(0, Q, (5, 64), dtype=np.uint64)
        b = rng.integers(0, Q, 64, dtype=np.uint64)
        pl = plan(64)
        got = pl.exact_mul(a, pl.fwd_limbs(b))
        for i in range(5):
            assert np.array_equal(got[i], ring.negacyclic_mul_raw(a[i], b))

    def test_noisy_path_error_within_noise_budget(self):
        # digit x ciphertext single-FFT products may err, but far below the
        # q/(2p) decryption margins the parameter sets rely on
        n = 2048
        rng = np.random.default_rng(11)
        pl = plan(n)
        worst = 0
        for _ in range(5):
            d = rng.integers(-(1 << 22), 1 << 22, n).astype(np.int64)
            b = rng.integers(0, Q, n, dtype=np.uint64)
            spec = pl.fwd_signed(d) * pl.fwd_centered_u64(b)
            got = pl.inv_fold_u64(spec)
            exact = ring.negacyclic_mul_raw(d.astype(np.uint64), b)
            err = np.abs(ring.centered(got - exact)).max()
            worst = max(worst, int(err))
        assert worst < 1 << 44
