import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from oracles import lstsq_residual_sq, subsets
from supportbound.errors import CapExceeded, DimensionMismatch, Infeasible, InvalidParameter
from supportbound.model import (
    ENUMERATION_CAP_ENV,
    MeasurementSetup,
    SparseSignal,
    Support,
    chi2_projection_samples,
    enumerate_supports,
    measure,
    rho1,
    rho2,
    sample_gaussian_ensemble,
    verify_2k_independence,
)
from supportbound.numerics import residual_norm_sq


def S(*idx, p=10):
    return Support(p, idx)


class TestSupport:
    def test_rejects_unsorted_or_out_of_range(self):
        for bad in [(2, 1), (1, 1), (0, 3), (3, 11)]:
            with pytest.raises(InvalidParameter):
                Support(10, bad)

    def test_columns_are_zero_based(self):
        assert S(1, 4, 10).columns == [0, 3, 9]


class TestSparseSignal:
    def test_class_membership_enforced(self):
        with pytest.raises(InvalidParameter):
            SparseSignal(5, Support(5, (1, 2)), (1.0, 0.5), theta_min=1.0)
        with pytest.raises(InvalidParameter):
            SparseSignal(5, Support(5, (1, 2)), (1.0, 0.0), theta_min=1.0)

    def test_dense_has_exactly_k_nonzeros(self):
        sig = SparseSignal(6, Support(6, (2, 5)), (1.5, -2.0), 1.5)
        assert np.array_equal(sig.dense(), [0, 1.5, 0, 0, -2.0, 0])

    def test_round_trip(self):
        sig = SparseSignal(6, Support(6, (2, 5)), (1.5, -2.0), 1.5)
        assert SparseSignal.from_dict(sig.to_dict()) == sig
        assert sig.to_dict() == {"p": 6, "k": 2, "indices": [2, 5], "coefficients": [1.5, -2.0], "theta_min": 1.5}


def test_rho_examples():
    assert rho1(S(1, 2, 3), S(1, 2, 3)) == 0
    assert rho1(S(1, 2, 3), S(1, 2, 4)) == 1
    assert rho2(S(1, 2, 5), S(1, 2, 3)) == 4
    assert rho2(S(2, 5), S(3, 7)) == 5


@pytest.mark.parametrize("p,k", [(10, 1), (10, 3), (1024, 10)])
def test_rho2_witness_pair(p, k):
    s = Support(p, tuple(range(1, k + 1)))
    s_prime = Support(p, tuple(range(1, k)) + (p,))
    assert rho2(s, s_prime) == (p - k) ** 2


def test_rho_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        rho2(S(1, 2), S(1, 2, 3))
    with pytest.raises(DimensionMismatch):
        rho1(Support(5, (1, 2)), Support(6, (1, 2)))


supports = st.integers(2, 12).flatmap(
    lambda p: st.integers(1, p).flatmap(
        lambda k: st.tuples(*[st.lists(st.integers(1, p), min_size=k, max_size=k, unique=True)] * 3).map(
            lambda t: [Support(p, tuple(sorted(x))) for x in t]
        )
    )
)


@given(supports)
def test_rho2_is_a_squared_metric(triple):
    a, b, c = triple
    assert rho2(a, b) >= 0
    assert rho2(a, b) == rho2(b, a)
    assert (rho2(a, b) == 0) == (a == b) == (rho1(a, b) == 0)
    assert rho2(a, c) <= 2 * rho2(a, b) + 2 * rho2(b, c)


def test_ensemble_is_deterministic():
    assert np.array_equal(sample_gaussian_ensemble(2, 3, 7), sample_gaussian_ensemble(2, 3, 7))
    assert not np.array_equal(sample_gaussian_ensemble(2, 3, 7), sample_gaussian_ensemble(2, 3, 8))


def test_ensemble_moments():
    A = sample_gaussian_ensemble(100, 100, 3)
    assert abs(A.mean()) < 4 / math.sqrt(1e4)
    assert abs(A.var() - 1) < 0.1
    # column differences, as in the necessary-condition witness, have per-entry variance 2
    pooled = (A[:, :50] - A[:, 50:]).ravel()
    assert abs(pooled.var() - 2) < 0.2


class TestMeasure:
    def test_noiseless(self, instance):
        setup, signal = instance
        quiet = MeasurementSetup(setup.phi, 0.0)
        y = measure(quiet, signal, seed=1)
        assert np.array_equal(y, setup.phi[:, :2] @ np.array([3.0, 3.0]))
        assert residual_norm_sq(setup.phi[:, :2], y) <= 1e-18 * (y @ y)

    def test_seed_controls_noise(self, instance):
        setup, signal = instance
        assert np.array_equal(measure(setup, signal, 4), measure(setup, signal, 4))
        assert not np.array_equal(measure(setup, signal, 4), measure(setup, signal, 5))

    def test_true_subspace_residual_is_scaled_chi_square(self):
        m, k, sigma_sq = 12, 2, 2.0
        setup = MeasurementSetup(sample_gaussian_ensemble(m, 10, 1), sigma_sq)
        signal = SparseSignal.constant(10, k, 4.0)
        res = [setup.residual_sq(signal.support, measure(setup, signal, 9, t)) for t in range(10_000)]
        assert np.mean(res) == pytest.approx((m - k) * sigma_sq, rel=0.05)

    def test_dimension_mismatch(self, instance):
        setup, _ = instance
        with pytest.raises(DimensionMismatch):
            measure(setup, SparseSignal.constant(9, 2, 1.0), 0)


class TestIndependence:
    def test_identity_passes(self):
        report = verify_2k_independence(MeasurementSetup(np.eye(6), 1.0), k=3)
        assert report.passed and report.exhaustive and report.checked == 1

    def test_duplicate_columns_fail(self):
        phi = np.eye(5)
        phi[:, 3] = phi[:, 1]
        report = verify_2k_independence(MeasurementSetup(phi, 1.0), k=1)
        assert not report.passed
        assert report.failures == [(2, 4)]

    @pytest.mark.parametrize("p,k", [(8, 2), (10, 3), (12, 3)])
    def test_gaussian_passes_exhaustively(self, p, k):
        setup = MeasurementSetup(sample_gaussian_ensemble(2 * k + 1, p, p + k), 1.0)
        report = verify_2k_independence(setup, k, max_checks=10_000)
        assert report.exhaustive and report.passed and report.checked == math.comb(p, 2 * k)

    def test_sampled_mode(self):
        setup = MeasurementSetup(sample_gaussian_ensemble(6, 12, 0), 1.0)
        report = verify_2k_independence(setup, 3, max_checks=50, seed=2)
        assert not report.exhaustive and report.checked == 50 and report.passed

    def test_infeasible(self):
        with pytest.raises(Infeasible):
            verify_2k_independence(MeasurementSetup(np.eye(3), 1.0), k=2)


class TestEnumeration:
    def test_lexicographic(self):
        got = [s.indices for s in enumerate_supports(4, 2)]
        assert got == [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)]
        assert len(list(enumerate_supports(5, 1))) == 5

    def test_p10_k3(self):
        got = [s.indices for s in enumerate_supports(10, 3)]
        assert len(got) == 120 == len(set(got))

    @pytest.mark.parametrize("p", range(1, 13))
    def test_counts_match_recursive_listing(self, p):
        for k in range(1, p + 1):
            assert [s.indices for s in enumerate_supports(p, k)] == list(subsets(p, k))

    def test_cap(self, monkeypatch):
        with pytest.raises(CapExceeded):
            enumerate_supports(30, 15)
        monkeypatch.setenv(ENUMERATION_CAP_ENV, "5")
        with pytest.raises(CapExceeded):
            enumerate_supports(4, 2)
        assert len(list(enumerate_supports(4, 2, cap=6))) == 6


def test_projection_residual_matches_lstsq(instance):
    setup, signal = instance
    x = setup.noiseless(signal)
    for s in enumerate_supports(8, 2):
        assert setup.residual_sq(s, x) == pytest.approx(lstsq_residual_sq(setup.submatrix(s), x), rel=1e-9, abs=1e-18)


@pytest.mark.parametrize("ell", [1, 2])
def test_off_subspace_energy_is_chi_square(ell):
    samples = chi2_projection_samples(12, 2, 8, 10_000, seed=3, ell=ell)
    assert stats.kstest(samples, stats.chi2(10).cdf, method="asymp").pvalue >= 0.01
