"""Support decoders: exhaustive maximum likelihood and maximum correlation.

Ties in the ML search are residuals within ``TIE_RTOL * ||y||^2`` of the
smallest one; among those the lexicographically first support wins.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, InvalidParameter, RankDeficient, SameSupport
from .model import Support, enumerate_supports
from .numerics import qr_full_rank

TIE_RTOL = 1e-12


@dataclass(frozen=True)
class DecodeResult:
    support: Support
    residual_norm_sq: float
    coefficients: tuple
    method: str

    def to_dict(self):
        return {
            "method": self.method,
            "support": list(self.support.indices),
            "residual_norm_sq": self.residual_norm_sq,
            "coefficients": list(self.coefficients),
        }


def _check_y(setup, y):
    y = np.asarray(y, dtype=float)
    if y.shape != (setup.m,):
        raise DimensionMismatch(f"y has shape {y.shape}, expected ({setup.m},)")
    return y


def least_squares_fit(setup, support, y):
    """Least-squares coefficients and squared residual of ``y`` on the support's columns."""
    try:
        Q, R = qr_full_rank(setup.submatrix(support))
    except RankDeficient as exc:
        raise RankDeficient(f"columns {support} are rank deficient: {exc}", support) from None
    qty = Q.T @ y
    coef = solve_triangular(R, qty)
    r = y - Q @ qty
    return tuple(float(c) for c in coef), float(r @ r)


class _TieTracker:
    """Streaming argmin with the lexicographic tie rule.

    Keeps every support seen so far whose residual is within ``tol`` of the
    running minimum; the first of them is the answer.
    """

    def __init__(self, tol):
        self.tol = tol
        self.best = np.inf
        self.near = []

    def offer(self, support, residual):
        if residual < self.best:
            self.best = residual
            self.near = [(s, r) for s, r in self.near if r <= residual + self.tol]
        if residual <= self.best + self.tol:
            self.near.append((support, residual))

    def winner(self):
        return self.near[0]


def mle_decode(setup, y, k, cap=None):
    """Support whose column span is closest to ``y`` among all C(p, k) supports."""
    y = _check_y(setup, y)
    if not 1 <= k <= setup.p:
        raise InvalidParameter(f"need 1 <= k <= p, got k={k}, p={setup.p}")
    tracker = _TieTracker(TIE_RTOL * float(y @ y))
    for s in enumerate_supports(setup.p, k, cap):
        tracker.offer(s, setup.residual_sq(s, y))
    support, _ = tracker.winner()
    coefficients, residual = least_squares_fit(setup, support, y)
    return DecodeResult(support, residual, coefficients, "mle")


def correlations(setup, y, normalized=False):
    corr = np.abs(setup.phi.T @ y)
    if normalized:
        corr = corr / np.linalg.norm(setup.phi, axis=0)
    return corr


def mce_select(corr, k):
    """0-based indices of the k largest correlations, ties toward smaller index, sorted."""
    order = np.lexsort((np.arange(corr.shape[-1]), -corr))
    return np.sort(order[:k])


def mce_decode(setup, y, k, normalized=False):
    """The k columns with largest |<phi_i, y>| (optionally divided by ||phi_i||)."""
    y = _check_y(setup, y)
    if not 1 <= k <= setup.p:
        raise DimensionMismatch(f"need 1 <= k <= p, got k={k}, p={setup.p}")
    chosen = mce_select(correlations(setup, y, normalized), k)
    support = Support(setup.p, tuple(int(i) + 1 for i in chosen))
    coefficients, residual = least_squares_fit(setup, support, y)
    return DecodeResult(support, residual, coefficients, "mce")


def pairwise_ml_error_event(setup, signal, s_prime, y):
    """True when the span of ``s_prime`` is strictly closer to ``y`` than the true span."""
    if s_prime.indices == signal.support.indices:
        raise SameSupport(f"{s_prime} is the true support")
    y = _check_y(setup, y)
    return setup.residual_sq(s_prime, y) < setup.residual_sq(signal.support, y)


class SubspaceBank:
    """Orthonormal bases of every k-column span, stacked for batched decoding.

    Memory is ``C(p, k) * m * k`` doubles; use :func:`mle_decode` when only a
    handful of observations need decoding.
    """

    def __init__(self, setup, k, cap=None):
        self.setup = setup
        self.k = k
        self.supports = list(enumerate_supports(setup.p, k, cap))
        self.indices = np.array([s.indices for s in self.supports], dtype=np.int64)
        self.bases = np.stack([setup.basis(s) for s in self.supports])

    def position(self, support):
        return self.supports.index(support)

    def residuals(self, Y):
        """Squared residuals, shape (n_obs, n_supports), for observations ``Y`` (n_obs, m)."""
        coords = np.einsum("nmk,tm->tnk", self.bases, Y)
        proj = np.einsum("nmk,tnk->tnm", self.bases, coords)
        diff = Y[:, None, :] - proj
        return np.einsum("tnm,tnm->tn", diff, diff)

    def decode(self, Y):
        """Positions in ``self.supports`` picked by the ML rule for each row of ``Y``."""
        res = self.residuals(Y)
        tol = TIE_RTOL * np.einsum("tm,tm->t", Y, Y)
        # the smallest tied residual is the exact minimum, so this matches _TieTracker
        within = res <= res.min(axis=1, keepdims=True) + tol[:, None]
        return np.argmax(within, axis=1)
