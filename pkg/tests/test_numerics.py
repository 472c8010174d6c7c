import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import q_via_erf
from supportbound.errors import DimensionMismatch, OddDof, RankDeficient
from supportbound.model import make_rng, standard_normal
from supportbound.numerics import (
    chi_square_cdf,
    chi_square_cdf_even_sum,
    chi_square_tail_bound,
    chi_square_tail_threshold,
    gaussian_q,
    orthonormal_basis,
    project,
    residual_norm_sq,
)


def test_basis_of_single_column_is_normalized():
    Q = orthonormal_basis(np.array([[1.0], [1.0]]))
    assert np.allclose(np.abs(Q[:, 0]), [1 / math.sqrt(2)] * 2, atol=1e-15)


def test_basis_of_identity_is_signed_identity():
    Q = orthonormal_basis(np.eye(3))
    assert np.allclose(np.abs(Q), np.eye(3))


def test_basis_of_gaussian_matrix_is_orthonormal(rng):
    A = rng.standard_normal((4, 2))
    Q = orthonormal_basis(A)
    assert np.max(np.abs(Q.T @ Q - np.eye(2))) < 1e-12
    # same span: A is reproduced by projecting onto Q
    assert np.allclose(project(Q, A), A, atol=1e-12)


@pytest.mark.parametrize(
    "A",
    [
        np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]),
        np.zeros((3, 1)),
        np.ones((2, 3)),
    ],
)
def test_rank_deficient_input_is_refused(A):
    with pytest.raises(RankDeficient):
        orthonormal_basis(A)


def test_residual_examples(rng):
    assert residual_norm_sq(np.array([[1.0], [1.0]]), np.array([1.0, 0.0])) == pytest.approx(0.5, abs=1e-15)
    A = rng.standard_normal((6, 2))
    assert residual_norm_sq(A, A @ np.array([0.3, -2.0])) < 1e-10
    v = rng.standard_normal(6)
    Q = orthonormal_basis(A)
    assert residual_norm_sq(A, v) == pytest.approx(v @ v - np.sum((Q.T @ v) ** 2), rel=1e-12)


def test_residual_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        residual_norm_sq(np.eye(3), np.ones(2))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), m=st.integers(2, 12), data=st.data())
def test_projection_properties(seed, m, data):
    k = data.draw(st.integers(1, m))
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, k))
    v = rng.standard_normal(m)
    Q = orthonormal_basis(A)
    once = project(Q, v)
    assert np.max(np.abs(project(Q, once) - once)) <= 1e-10
    res = residual_norm_sq(A, v)
    assert abs(v @ v - (once @ once + res)) <= 1e-9 * max(v @ v, 1e-300)
    ortho = A.T @ (v - once)
    assert np.max(np.abs(ortho)) <= 1e-9 * np.linalg.norm(A, 2) * np.linalg.norm(v)


def test_chi_square_cdf_closed_forms():
    assert chi_square_cdf(2, 2.0) == pytest.approx(1 - math.exp(-1), abs=1e-15)
    assert chi_square_cdf(7, 0.0) == 0.0
    assert chi_square_cdf_even_sum(2, 2.0) == pytest.approx(1 - math.exp(-1), abs=1e-15)
    assert chi_square_cdf_even_sum(4, 0.0) == 0.0
    assert abs(chi_square_cdf(8, 8.0) - chi_square_cdf_even_sum(8, 8.0)) < 1e-12
    assert abs(chi_square_cdf(12, 30.0) - chi_square_cdf_even_sum(12, 30.0)) < 1e-10


def test_even_sum_rejects_odd_dof():
    with pytest.raises(OddDof):
        chi_square_cdf_even_sum(5, 1.0)


@settings(max_examples=200, deadline=None)
@given(half=st.integers(1, 20), frac=st.floats(0, 1))
def test_even_sum_matches_incomplete_gamma(half, frac):
    dof = 2 * half
    x = frac * 10 * dof
    assert abs(chi_square_cdf(dof, x) - chi_square_cdf_even_sum(dof, x)) <= 1e-10


@pytest.mark.parametrize("dof", [1, 3, 10, 41])
def test_chi_square_cdf_monotone(dof):
    values = [chi_square_cdf(dof, x) for x in np.linspace(0, 20 * dof + 100, 400)]
    assert all(a <= b for a, b in zip(values, values[1:]))
    assert values[-1] > 1 - 1e-12


def test_tail_bound_values():
    assert chi_square_tail_bound(10, 0.0) == 1.0
    assert chi_square_tail_bound(10, 4.0) == pytest.approx(0.018316, abs=1e-6)


def test_tail_bound_dominates_simulated_chi_square():
    m, t, n = 10, 4.0, 100_000
    z = np.sum(standard_normal(make_rng(11, 99), (n, m)) ** 2, axis=1)
    freq = np.mean(z >= chi_square_tail_threshold(m, t))
    se = math.sqrt(freq * (1 - freq) / n)
    assert freq <= chi_square_tail_bound(m, t) + 3 * se


def test_gaussian_q():
    assert gaussian_q(0.0) == 0.5
    assert gaussian_q(math.inf) == 0.0
    assert abs(gaussian_q(1.0) - q_via_erf(1.0)) < 1e-12
    for x in (0.3, 1.7, 4.0):
        assert gaussian_q(-x) == pytest.approx(1 - gaussian_q(x), abs=1e-15)
