"""Supports, sparse signals, Gaussian measurement ensembles and noisy measurements.

Indices are 1-based throughout, so a support on ``p`` positions is a strictly
increasing tuple drawn from ``1..p``.

Randomness
----------
Every random draw comes from a PCG64 generator keyed by a fixed-length triple
``(seed, stream, index)`` through ``numpy.random.SeedSequence``.  The stream
tag separates the matrix draw from noise draws and other uses, and ``index``
is the trial number, so trial ``i`` sees the same numbers no matter how trials
are scheduled.  Standard normals are produced by the inverse-CDF transform of
53-bit uniforms ``(n + 0.5) / 2**53``, which never hit 0 or 1.
"""

import itertools
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import (
    CapExceeded,
    DimensionMismatch,
    Infeasible,
    InvalidParameter,
    RankDeficient,
)
from .numerics import orthonormal_basis, project

DEFAULT_ENUMERATION_CAP = 1_000_000
ENUMERATION_CAP_ENV = "SUPPORTBOUND_ENUM_CAP"

# SeedSequence((s,)) and SeedSequence((s, 0)) coincide, so stream keys always
# have exactly three words.
STREAM_PHI = 1
STREAM_NOISE = 2
STREAM_WITNESS = 3
STREAM_INTEGER_MEAN = 4
STREAM_SUBSET_SAMPLING = 5
STREAM_CHI2_PROJECTION = 6


def make_rng(seed, stream, index=0):
    if seed < 0 or index < 0:
        raise InvalidParameter(f"seeds and trial indices must be nonnegative, got {seed}, {index}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((int(seed), stream, int(index)))))


def standard_normal(rng, size):
    """Inverse-CDF standard normals from ``rng``."""
    n = rng.integers(0, 2**53, size=size, dtype=np.uint64)
    u = (n.astype(float) + 0.5) * 2.0**-53
    return special.ndtri(u)


def enumeration_cap():
    """Cap on C(p, k), overridable through ``SUPPORTBOUND_ENUM_CAP``."""
    raw = os.environ.get(ENUMERATION_CAP_ENV)
    if raw is None:
        return DEFAULT_ENUMERATION_CAP
    try:
        cap = int(raw)
    except ValueError:
        raise InvalidParameter(f"{ENUMERATION_CAP_ENV} must be an integer, got {raw!r}") from None
    if cap < 1:
        raise InvalidParameter(f"{ENUMERATION_CAP_ENV} must be positive, got {cap}")
    return cap


@dataclass(frozen=True)
class Support:
    p: int
    indices: tuple

    def __post_init__(self):
        indices = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", indices)
        if self.p < 1:
            raise InvalidParameter(f"p must be positive, got {self.p}")
        if not 1 <= len(indices) <= self.p:
            raise InvalidParameter(f"need 1 <= k <= p, got k={len(indices)}, p={self.p}")
        if indices[0] < 1 or indices[-1] > self.p:
            raise InvalidParameter(f"indices {indices} fall outside 1..{self.p}")
        if any(a >= b for a, b in zip(indices, indices[1:])):
            raise InvalidParameter(f"indices must be strictly increasing, got {indices}")

    @property
    def k(self):
        return len(self.indices)

    @property
    def columns(self):
        """0-based column positions."""
        return [i - 1 for i in self.indices]

    @classmethod
    def first(cls, p, k):
        return cls(p, tuple(range(1, k + 1)))

    def __str__(self):
        return "(" + ",".join(map(str, self.indices)) + ")"


@dataclass(frozen=True)
class SparseSignal:
    p: int
    support: Support
    coefficients: tuple
    theta_min: float

    def __post_init__(self):
        coefficients = tuple(float(c) for c in self.coefficients)
        object.__setattr__(self, "coefficients", coefficients)
        if self.support.p != self.p:
            raise DimensionMismatch(f"support lives in p={self.support.p}, signal in p={self.p}")
        if len(coefficients) != self.support.k:
            raise DimensionMismatch(f"{len(coefficients)} coefficients for k={self.support.k}")
        if not self.theta_min > 0:
            raise InvalidParameter(f"theta_min must be positive, got {self.theta_min}")
        small = [c for c in coefficients if not abs(c) >= self.theta_min]
        if small:
            raise InvalidParameter(f"coefficients {small} violate |theta_i| >= {self.theta_min}")

    @property
    def k(self):
        return self.support.k

    @classmethod
    def constant(cls, p, k, theta_min, support=None):
        """All coefficients equal to ``theta_min``, by default on (1, ..., k)."""
        support = support or Support.first(p, k)
        return cls(p, support, (theta_min,) * support.k, theta_min)

    def dense(self):
        theta = np.zeros(self.p)
        theta[self.support.columns] = self.coefficients
        return theta

    def to_dict(self):
        return {
            "p": self.p,
            "k": self.k,
            "indices": list(self.support.indices),
            "coefficients": list(self.coefficients),
            "theta_min": self.theta_min,
        }

    @classmethod
    def from_dict(cls, record):
        p = int(record["p"])
        support = Support(p, tuple(record["indices"]))
        if "k" in record and int(record["k"]) != support.k:
            raise DimensionMismatch(f"k={record['k']} disagrees with {support.k} indices")
        return cls(p, support, tuple(record["coefficients"]), float(record["theta_min"]))


@dataclass(frozen=True, eq=False)
class MeasurementSetup:
    """Measurement matrix with its noise variance.

    Any 2k columns of ``phi`` are assumed linearly independent; call
    :func:`verify_2k_independence` to check.
    """

    phi: np.ndarray
    sigma_sq: float
    k: int = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        if phi.ndim != 2 or min(phi.shape) < 1:
            raise DimensionMismatch(f"phi must be a non-empty matrix, got shape {phi.shape}")
        if not np.all(np.isfinite(phi)):
            raise InvalidParameter("phi entries must be finite")
        if not self.sigma_sq >= 0:
            raise InvalidParameter(f"sigma_sq must be nonnegative, got {self.sigma_sq}")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @property
    def m(self):
        return self.phi.shape[0]

    @property
    def p(self):
        return self.phi.shape[1]

    def submatrix(self, support):
        if support.p != self.p:
            raise DimensionMismatch(f"support for p={support.p} used with {self.p} columns")
        return self.phi[:, support.columns]

    def basis(self, support):
        """Cached orthonormal basis of the span of the support's columns."""
        Q = self._cache.get(support.indices)
        if Q is None:
            try:
                Q = orthonormal_basis(self.submatrix(support))
            except RankDeficient as exc:
                raise RankDeficient(f"columns {support} are rank deficient: {exc}", support) from None
            self._cache[support.indices] = Q
        return Q

    def noiseless(self, signal):
        if signal.p != self.p:
            raise DimensionMismatch(f"signal has p={signal.p}, matrix has {self.p} columns")
        return self.submatrix(signal.support) @ np.asarray(signal.coefficients)

    def residual_sq(self, support, v):
        """Squared distance from ``v`` to the span of the support's columns."""
        r = v - project(self.basis(support), v)
        return float(r @ r)


def rho1(s, s_prime):
    _check_comparable(s, s_prime)
    return int(s.indices != s_prime.indices)


def rho2(s, s_prime):
    _check_comparable(s, s_prime)
    return sum((a - b) ** 2 for a, b in zip(s.indices, s_prime.indices))


def _check_comparable(s, s_prime):
    if s.p != s_prime.p or s.k != s_prime.k:
        raise DimensionMismatch(f"cannot compare supports with (p, k) = ({s.p}, {s.k}) and ({s_prime.p}, {s_prime.k})")


def sample_gaussian_ensemble(m, p, seed):
    """m x p matrix of i.i.d. N(0, 1) entries, fully determined by ``seed``."""
    if m < 1 or p < 1:
        raise InvalidParameter(f"m and p must be positive, got m={m}, p={p}")
    return standard_normal(make_rng(seed, STREAM_PHI), (m, p))


def noise_vector(m, sigma_sq, seed, trial=0):
    return math.sqrt(sigma_sq) * standard_normal(make_rng(seed, STREAM_NOISE, trial), m)


def measure(setup, signal, seed, trial=0):
    """Noisy measurement ``phi @ theta + eps`` with eps ~ N(0, sigma_sq I)."""
    x = setup.noiseless(signal)
    if setup.sigma_sq == 0:
        return x
    return x + noise_vector(setup.m, setup.sigma_sq, seed, trial)


@dataclass
class IndependenceReport:
    k: int
    exhaustive: bool
    checked: int
    failures: list

    @property
    def passed(self):
        return not self.failures

    def to_dict(self):
        return {
            "k": self.k,
            "exhaustive": self.exhaustive,
            "checked": self.checked,
            "passed": self.passed,
            "failures": [list(f) for f in self.failures],
        }


def verify_2k_independence(setup, k, max_checks=10_000, seed=0):
    """Rank-test 2k-column submatrices of ``setup.phi``.

    All C(p, 2k) subsets are tested when there are at most ``max_checks`` of
    them; otherwise ``max_checks`` subsets are drawn uniformly.  Failing
    subsets are reported as 1-based index tuples.
    """
    width = 2 * k
    if k < 1:
        raise InvalidParameter(f"k must be positive, got {k}")
    if width > setup.m:
        raise Infeasible(f"2k = {width} columns cannot be independent in R^{setup.m}")
    if width > setup.p:
        raise Infeasible(f"2k = {width} exceeds p = {setup.p}")
    total = math.comb(setup.p, width)
    if total <= max_checks:
        subsets = itertools.combinations(range(1, setup.p + 1), width)
        exhaustive = True
    else:
        rng = make_rng(seed, STREAM_SUBSET_SAMPLING)
        subsets = (tuple(sorted(int(i) + 1 for i in rng.choice(setup.p, width, replace=False))) for _ in range(max_checks))
        exhaustive = False
    failures = []
    checked = 0
    for subset in subsets:
        checked += 1
        try:
            orthonormal_basis(setup.phi[:, [i - 1 for i in subset]])
        except RankDeficient:
            failures.append(subset)
    return IndependenceReport(k, exhaustive, checked, failures)


def enumerate_supports(p, k, cap=None):
    """All C(p, k) supports in lexicographic order."""
    if not 1 <= k <= p:
        raise InvalidParameter(f"need 1 <= k <= p, got k={k}, p={p}")
    cap = enumeration_cap() if cap is None else cap
    count = math.comb(p, k)
    if count > cap:
        raise CapExceeded(f"C({p}, {k}) = {count} exceeds the enumeration cap {cap}")
    return (Support(p, idx) for idx in itertools.combinations(range(1, p + 1), k))


def chi2_projection_samples(m, k, p, trials, seed, ell=1):
    """Draws of ||P_perp(s') phi_{s\\s'} theta_{s\\s'}||^2 / ||theta_{s\\s'}||^2.

    ``s = (1, ..., k)`` and ``s'`` swaps the last ``ell`` indices of ``s`` for
    the last ``ell`` positions ``p-ell+1..p``.  Each trial draws a fresh
    Gaussian matrix restricted to the columns that matter, and coefficients
    of unit magnitude with alternating sign; the statistic is chi2(m - k)
    whatever the coefficients.
    """
    if not 1 <= ell <= k or p < k + ell or m <= k:
        raise InvalidParameter(f"need 1 <= ell <= k, p >= k + ell, m > k; got m={m}, k={k}, p={p}, ell={ell}")
    kept = list(range(k - ell))
    dropped = list(range(k - ell, k))
    theta = np.array([(-1.0) ** j for j in range(ell)])
    out = np.empty(trials)
    for t in range(trials):
        rng = make_rng(seed, STREAM_CHI2_PROJECTION, t)
        cols = standard_normal(rng, (m, k + ell))
        # columns 0..k-1 are s, columns k..k+ell-1 are the new positions of s'
        s_prime_cols = cols[:, kept + list(range(k, k + ell))]
        v = cols[:, dropped] @ theta
        Q = orthonormal_basis(s_prime_cols)
        r = v - project(Q, v)
        out[t] = (r @ r) / (theta @ theta)
    return out
