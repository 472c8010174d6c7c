"""Dense projections and chi-square / Gaussian distribution functions."""

import math

import numpy as np
from scipy import special

from .errors import DimensionMismatch, InvalidParameter, OddDof, RankDeficient

_EPS = np.finfo(float).eps


def _as_matrix(A):
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise DimensionMismatch(f"expected a non-empty 2-d matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidParameter("matrix entries must be finite")
    return A


def qr_full_rank(A):
    """Reduced Householder QR of ``A`` that refuses rank-deficient input.

    Returns ``(Q, R)`` with ``Q`` of shape (rows, cols). The numerical rank is
    the number of ``|R_ii|`` above ``max(rows, cols) * eps * max_j ||A_j||``.
    """
    A = _as_matrix(A)
    rows, cols = A.shape
    if rows < cols:
        raise RankDeficient(f"{rows}x{cols} matrix cannot have full column rank")
    Q, R = np.linalg.qr(A, mode="reduced")
    scale = float(np.max(np.linalg.norm(A, axis=0)))
    tol = max(rows, cols) * _EPS * scale
    rank = int(np.sum(np.abs(np.diag(R)) > tol))
    if scale == 0.0 or rank < cols:
        raise RankDeficient(f"numerical rank {rank} < {cols} columns")
    return Q, R


def orthonormal_basis(A):
    """Orthonormal basis of the column span of a full-column-rank ``A``."""
    return qr_full_rank(A)[0]


def project(Q, v):
    """Project ``v`` onto span(Q), where ``Q`` has orthonormal columns."""
    return Q @ (Q.T @ v)


def residual_norm_sq(A, v):
    """Squared distance from ``v`` to the column span of ``A``."""
    A = _as_matrix(A)
    v = np.asarray(v, dtype=float)
    if v.shape != (A.shape[0],):
        raise DimensionMismatch(f"vector of length {v.shape} does not match {A.shape[0]} rows")
    Q = orthonormal_basis(A)
    r = v - project(Q, v)
    return float(r @ r)


def _check_dof(dof):
    if int(dof) != dof or dof < 1:
        raise InvalidParameter(f"degrees of freedom must be a positive integer, got {dof}")
    return int(dof)


def chi_square_cdf(dof, x):
    """P(X <= x) for X ~ chi2(dof), i.e. the regularized lower incomplete gamma."""
    dof = _check_dof(dof)
    if x < 0:
        raise InvalidParameter(f"x must be nonnegative, got {x}")
    return float(special.gammainc(dof / 2.0, x / 2.0))


def chi_square_cdf_even_sum(dof, x):
    """Chi-square CDF for even ``dof`` through the terminating Poisson sum.

    For even dof the regularized incomplete gamma collapses to
    ``1 - exp(-x/2) * sum_{t < dof/2} (x/2)**t / t!``.
    """
    dof = _check_dof(dof)
    if dof % 2:
        raise OddDof(f"the finite-sum identity needs an even dof, got {dof}")
    if x < 0:
        raise InvalidParameter(f"x must be nonnegative, got {x}")
    half = x / 2.0
    term = 1.0
    terms = [term]
    for t in range(1, dof // 2):
        term *= half / t
        terms.append(term)
    return 1.0 - math.exp(-half) * math.fsum(terms)


def chi_square_tail_bound(m, t):
    """Upper bound exp(-t) on P(Z - m >= 2 sqrt(m t)) for Z ~ chi2(m)."""
    _check_dof(m)
    if t < 0:
        raise InvalidParameter(f"t must be nonnegative, got {t}")
    return math.exp(-t)


def chi_square_tail_threshold(m, t):
    """The exceedance level ``m + 2 sqrt(m t)`` paired with ``chi_square_tail_bound``."""
    return m + 2.0 * math.sqrt(m * t)


def gaussian_q(x):
    """Standard Gaussian upper tail P(N(0, 1) > x)."""
    if math.isnan(x):
        raise InvalidParameter("x must not be NaN")
    return float(special.ndtr(-x))
