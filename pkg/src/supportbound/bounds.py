"""Closed-form bounds for support recovery.

Covers the HCR lower bound over all alternative supports, the MLE error and
covariance upper bounds driven by the distinguishability factor, the
necessary and sufficient measurement counts for Gaussian ensembles, the
integer-mean example and the direct-measurement error.
"""

import math
import warnings
from dataclasses import dataclass, field

from .errors import (
    BetaOutOfRange,
    DegenerateSubspace,
    IndistinguishableWarning,
    InvalidDims,
    InvalidParameter,
    NoAlternativeSupport,
    OddM,
    SameSupport,
    SnrTooLow,
)
from .model import enumerate_supports, rho2
from .numerics import gaussian_q

# exp(x) - 1 overflows a double just past 709
EXPONENT_UNDERFLOW = 700.0
# residual^2 below this fraction of ||x||^2 counts as "x lies in the subspace"
_ZERO_RESIDUAL_RTOL = 1e-20
SNR_THRESHOLD = 8.0


@dataclass
class HcrReport:
    value: float
    argmax_support: object
    d_min: float
    sigma_sq: float
    underflow_terms: int = 0
    indistinguishable: bool = False
    per_support_terms: list = None

    def to_dict(self, verbose=False):
        record = {
            "name": "hcr",
            "value": self.value,
            "argmax_support": list(self.argmax_support.indices),
            "d_min": self.d_min,
            "sigma_sq": self.sigma_sq,
            "underflow_terms": self.underflow_terms,
            "indistinguishable": self.indistinguishable,
        }
        if verbose and self.per_support_terms is not None:
            record["per_support_terms"] = [
                {"support": list(s.indices), "numerator": num, "exponent": expo}
                for s, num, expo in self.per_support_terms
            ]
        return record


@dataclass
class BoundReport:
    name: str
    value: float
    parameters: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "value": self.value, "parameters": dict(self.parameters), **self.details}


def _hcr_term(numerator, exponent):
    """numerator / (exp(exponent) - 1), flagging exponents past the overflow guard."""
    if exponent > EXPONENT_UNDERFLOW:
        return 0.0, True
    return numerator / math.expm1(exponent), False


def _require_noise(setup):
    if not setup.sigma_sq > 0:
        raise InvalidParameter(f"HCR terms need sigma_sq > 0, got {setup.sigma_sq}")


def hcr_single_term(setup, signal, s_i):
    """The HCR bound contributed by one alternative support ``s_i``.

    ``||s - s_i||^2 / (exp(||x - P_{s_i} x||^2 / sigma^2) - 1)``; returns 0
    when the exponent exceeds ``EXPONENT_UNDERFLOW``.
    """
    _require_noise(setup)
    if s_i.indices == signal.support.indices:
        raise SameSupport(f"{s_i} is the true support; the HCR term is undefined")
    x = setup.noiseless(signal)
    residual = setup.residual_sq(s_i, x)
    if residual <= _ZERO_RESIDUAL_RTOL * float(x @ x):
        raise DegenerateSubspace(f"x lies in the span of {s_i}; the HCR denominator vanishes")
    return _hcr_term(rho2(signal.support, s_i), residual / setup.sigma_sq)[0]


def alternative_residuals(setup, signal, cap=None):
    """Yield ``(support, ||x - P_s' x||^2)`` for every support other than the true one."""
    x = setup.noiseless(signal)
    for s in enumerate_supports(setup.p, signal.k, cap):
        if s.indices != signal.support.indices:
            yield s, setup.residual_sq(s, x)


def hcr_support_bound(setup, signal, cap=None, keep_terms=False):
    """Maximum of the single-support HCR terms over every alternative support.

    Ties go to the lexicographically first support.  If some alternative
    subspace contains ``x`` the bound is infinite and the report is flagged.
    """
    _require_noise(setup)
    x = setup.noiseless(signal)
    zero = _ZERO_RESIDUAL_RTOL * float(x @ x)
    best = None
    best_support = None
    min_residual = math.inf
    underflows = 0
    indistinguishable = False
    terms = [] if keep_terms else None
    for s, residual in alternative_residuals(setup, signal, cap):
        min_residual = min(min_residual, residual)
        num = rho2(signal.support, s)
        exponent = residual / setup.sigma_sq
        if residual <= zero:
            indistinguishable = True
            value = math.inf
        else:
            value, under = _hcr_term(num, exponent)
            underflows += under
        if keep_terms:
            terms.append((s, num, exponent))
        if best is None or value > best:
            best, best_support = value, s
    if best is None:
        raise NoAlternativeSupport(f"p = k = {setup.p}: there is no alternative support")
    if indistinguishable:
        warnings.warn("an alternative subspace contains x; the HCR bound is infinite", IndistinguishableWarning)
    return HcrReport(
        value=best,
        argmax_support=best_support,
        d_min=math.sqrt(min_residual),
        sigma_sq=setup.sigma_sq,
        underflow_terms=underflows,
        indistinguishable=indistinguishable,
        per_support_terms=terms,
    )


def d_min(setup, signal, cap=None):
    """min over s' != s of ||x - P_{s'} x||."""
    x = setup.noiseless(signal)
    smallest = None
    for _, residual in alternative_residuals(setup, signal, cap):
        smallest = residual if smallest is None else min(smallest, residual)
    if smallest is None:
        raise NoAlternativeSupport(f"p = k = {setup.p}: there is no alternative support")
    if smallest <= _ZERO_RESIDUAL_RTOL * float(x @ x):
        warnings.warn("an alternative subspace contains x; d_min is 0", IndistinguishableWarning)
        return 0.0
    return math.sqrt(smallest)


def distinguishability(d_min_val, m, sigma_sq):
    """beta = d_min^2 / (4 m sigma^2)."""
    if d_min_val < 0 or m < 1 or not sigma_sq > 0:
        raise InvalidParameter(f"need d_min >= 0, m >= 1, sigma_sq > 0; got {d_min_val}, {m}, {sigma_sq}")
    return d_min_val**2 / (4.0 * m * sigma_sq)


def _check_beta(beta):
    if not beta > 1 or math.isinf(beta):
        raise BetaOutOfRange(f"beta must be a finite value > 1, got {beta}")


def log_c_beta(beta):
    _check_beta(beta)
    return ((beta - 1.0) - math.log(beta)) / (2.0 * beta)


def c_beta(beta):
    """c(beta) = exp((beta-1)/(2 beta)) / beta**(1/(2 beta)); tends to sqrt(e)."""
    return math.exp(log_c_beta(beta))


def _check_even_m(m):
    if int(m) != m or m < 2 or m % 2:
        raise OddM(f"m must be an even positive integer, got {m}")
    return int(m)


def mle_error_upper_bound(m, beta):
    """(m/2) c(beta)^(-beta m): bound on the MLE probability of picking a wrong support."""
    m = _check_even_m(m)
    return (m / 2.0) * math.exp(-beta * m * log_c_beta(beta))


def mle_cov_trace_bound(k, m, p, beta):
    """(k m p^2 / 2) c(beta)^(-beta m): bound on tr cov of the MLE support estimate."""
    if k < 1 or p < 1:
        raise InvalidParameter(f"k and p must be positive, got k={k}, p={p}")
    return k * p**2 * mle_error_upper_bound(m, beta)


def unbiasedness_threshold(p, beta, epsilon):
    """(1 + eps) ln p / (beta ln c(beta)), the m above which the MLE becomes unbiased."""
    if p < 2:
        raise InvalidParameter(f"p must be at least 2, got {p}")
    if not epsilon > 0:
        raise InvalidParameter(f"epsilon must be positive, got {epsilon}")
    return (1.0 + epsilon) * math.log(p) / (beta * log_c_beta(beta))


def hcr_exponent_ratio(beta):
    """HCR exponent at the d_min subspace over the MLE bound exponent.

    ``(4 beta m) / (beta m ln c(beta)) = 4 / ln c(beta)``, which decreases
    towards 8 (about 9.03 dB) as beta grows.
    """
    return 4.0 / log_c_beta(beta)


def _check_dims(p, k):
    if not (k >= 1 and p > k):
        raise InvalidDims(f"need p > k >= 1, got p={p}, k={k}")


def necessary_m_lower(p, k, theta_min, sigma_sq):
    """max{k, sigma^2 ln(p - k) / theta_min^2}; fewer measurements make every unbiased estimator unreliable."""
    _check_dims(p, k)
    if not theta_min > 0 or not sigma_sq > 0:
        raise InvalidParameter(f"theta_min and sigma_sq must be positive, got {theta_min}, {sigma_sq}")
    return max(float(k), sigma_sq * math.log(p - k) / theta_min**2)


def msuff_terms(p, k):
    """Per-ell terms ln k + ell ln(k/ell) + ell ln((p-k)/ell), ell = 1..k."""
    _check_dims(p, k)
    return [math.log(k) + ell * math.log(k / ell) + ell * math.log((p - k) / ell) for ell in range(1, k + 1)]


def sufficient_m_suff(p, k, theta_min, sigma_sq, strict=False):
    """k + max_ell {ln k + ell ln(k/ell) + ell ln((p-k)/ell)}.

    The measurement count that suffices for the MLE under a Gaussian ensemble
    when theta_min^2 / sigma^2 > 8.  Below that SNR the value is still
    returned, flagged ``snr_too_low``, unless ``strict`` is set.
    """
    if not theta_min > 0 or not sigma_sq > 0:
        raise InvalidParameter(f"theta_min and sigma_sq must be positive, got {theta_min}, {sigma_sq}")
    terms = msuff_terms(p, k)
    best = max(range(k), key=lambda i: (terms[i], -i))
    snr = theta_min**2 / sigma_sq
    too_low = not snr > SNR_THRESHOLD
    if too_low and strict:
        raise SnrTooLow(f"theta_min^2/sigma^2 = {snr:g} must exceed {SNR_THRESHOLD:g}")
    return BoundReport(
        name="msuff",
        value=k + terms[best],
        parameters={"p": p, "k": k, "theta_min": theta_min, "sigma_sq": sigma_sq},
        details={"maximizing_ell": best + 1, "snr": snr, "snr_too_low": too_low},
    )


def integer_mean_hcr_term(alpha, m, sigma_sq):
    """alpha^2 / (exp(m alpha^2 / sigma^2) - 1); 0 past the overflow guard."""
    return _hcr_term(alpha**2, m * alpha**2 / sigma_sq)[0]


def integer_mean_hcr(m, sigma_sq):
    """(CR, HCR) variance bounds for the mean of m N(mu, sigma^2) samples with integer mu.

    CR = sigma^2 / m; HCR = 1 / (exp(m / sigma^2) - 1), attained at alpha = +-1.
    """
    if m < 1 or not sigma_sq > 0:
        raise InvalidParameter(f"need m >= 1 and sigma_sq > 0, got {m}, {sigma_sq}")
    return sigma_sq / m, integer_mean_hcr_term(1, m, sigma_sq)


def direct_measurement_error(k, theta_min, sigma):
    """Q(sqrt(2 k theta_min^2) / (2 sigma)) for a sqrt(k)-gain diagonal sampler."""
    if k < 1 or not theta_min > 0 or not sigma > 0:
        raise InvalidParameter(f"k, theta_min and sigma must be positive, got {k}, {theta_min}, {sigma}")
    return gaussian_q(math.sqrt(2.0 * k * theta_min**2) / (2.0 * sigma))


# Scaling regimes: (id, k scaling, theta_min^2 scaling, necessary order,
# sufficient order or None where no sufficient result exists).
REGIMES = {
    "linear-inv": ("Theta(p)", "Theta(1/k)", "Theta(p log p)", None),
    "linear-const": ("Theta(p)", "Theta(1)", "Theta(p)", "Theta(p)"),
    "sublinear-inv": ("o(p)", "Theta(1/k)", "Theta(k log(p-k))", None),
    "sublinear-const": ("o(p)", "Theta(1)", "max{Theta(k), Theta(log(p-k))}", "Theta(k log(p/k))"),
}
LINEAR_FRACTION = 0.25
# smallest integer theta_min whose square clears the msuff SNR threshold of 8
CONSTANT_THETA_MIN = 3.0


def regime_parameters(regime, p, sigma_sq=1.0):
    """Instantiate (k, theta_min) for a scaling regime at dimension ``p``.

    k = ceil(p/4) for k = Theta(p) and ceil(sqrt(p)) for k = o(p);
    theta_min^2 = sigma^2 / k for Theta(1/k) and theta_min = 3 sigma for Theta(1).
    """
    if regime not in REGIMES:
        raise InvalidParameter(f"unknown regime {regime!r}; choose from {sorted(REGIMES)}")
    if regime.startswith("linear"):
        k = math.ceil(LINEAR_FRACTION * p)
    else:
        k = math.ceil(math.sqrt(p))
    if not 1 <= k < p:
        raise InvalidDims(f"regime {regime} gives k={k} at p={p}; need 1 <= k < p")
    if regime.endswith("inv"):
        theta_min = math.sqrt(sigma_sq / k)
    else:
        theta_min = CONSTANT_THETA_MIN * math.sqrt(sigma_sq)
    return k, theta_min


def regime_table(p, sigma_sq=1.0):
    """Necessary / sufficient measurement counts for the four scaling regimes at ``p``."""
    rows = []
    for regime, (k_order, theta_order, nec_order, suff_order) in REGIMES.items():
        k, theta_min = regime_parameters(regime, p, sigma_sq)
        row = {
            "regime": regime,
            "k_scaling": k_order,
            "theta_min_sq_scaling": theta_order,
            "p": p,
            "k": k,
            "theta_min": theta_min,
            "sigma_sq": sigma_sq,
            "necessary": necessary_m_lower(p, k, theta_min, sigma_sq),
            "necessary_order": nec_order,
        }
        if suff_order is None:
            row.update(sufficient=None, sufficient_order="unavailable", maximizing_ell=None)
        else:
            report = sufficient_m_suff(p, k, theta_min, sigma_sq)
            row.update(
                sufficient=report.value,
                sufficient_order=suff_order,
                maximizing_ell=report.details["maximizing_ell"],
            )
        rows.append(row)
    return rows
