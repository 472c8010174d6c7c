"""Seeded Monte Carlo checks of the decoders against the closed-form bounds.

Design: the measurement matrix is drawn once per experiment and held fixed;
only the noise is redrawn per trial, from the stream keyed by
``(base_seed, STREAM_NOISE, trial)``.  Trials are decoded in fixed-size
chunks that may run on a thread pool; results are reassembled in trial order
and the support statistics are accumulated exactly (decoded supports are
integers), so the output never depends on ``workers``.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np
from scipy import stats

from . import bounds
from .decoders import SubspaceBank, correlations, mce_select
from .errors import InvalidDims, InvalidParameter, RankDeficient, SupportBoundError
from .model import (
    STREAM_INTEGER_MEAN,
    STREAM_WITNESS,
    MeasurementSetup,
    SparseSignal,
    Support,
    chi2_projection_samples,
    enumerate_supports,
    make_rng,
    noise_vector,
    rho2,
    sample_gaussian_ensemble,
    standard_normal,
)

CHUNK_SIZE = 2048
PHI_RESAMPLES = 3
KS_LEVEL = 0.01
SE_MULTIPLIER = 3.0
Z95 = 1.959963984540054
DECODERS = ("mle", "mce")


@dataclass(frozen=True)
class TrialConfig:
    p: int
    k: int
    m: int
    theta_min: float
    sigma_sq: float
    trials: int
    base_seed: int
    decoder: str = "mle"
    phi_seed: int = None
    coefficients: tuple = None
    normalized_mce: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidParameter(f"trials must be at least 1, got {self.trials}")
        if not self.theta_min > 0:
            raise InvalidParameter(f"theta_min must be positive, got {self.theta_min}")
        if self.m < 1 or self.p < 1 or not 1 <= self.k <= self.p:
            raise InvalidParameter(f"need m >= 1 and 1 <= k <= p, got m={self.m}, k={self.k}, p={self.p}")
        if not self.sigma_sq >= 0:
            raise InvalidParameter(f"sigma_sq must be nonnegative, got {self.sigma_sq}")
        if self.base_seed < 0 or (self.phi_seed is not None and self.phi_seed < 0):
            raise InvalidParameter("seeds must be nonnegative")
        if self.decoder not in DECODERS:
            raise InvalidParameter(f"decoder must be one of {DECODERS}, got {self.decoder!r}")
        if self.coefficients is not None:
            object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))

    @property
    def effective_phi_seed(self):
        return self.base_seed if self.phi_seed is None else self.phi_seed

    def signal(self):
        if self.coefficients is None:
            return SparseSignal.constant(self.p, self.k, self.theta_min)
        return SparseSignal(self.p, Support.first(self.p, self.k), self.coefficients, self.theta_min)

    def to_dict(self):
        record = asdict(self)
        record["phi_seed"] = self.effective_phi_seed
        record["coefficients"] = list(self.signal().coefficients)
        return record


@dataclass
class ExperimentRecord:
    config: dict
    phi_seed: int
    true_support: list
    empirical_p_err: float
    p_err_se: float
    ci_half_width_p_err: float
    mean_rho2: float
    empirical_bias: list
    bias_norm: float
    empirical_cov_trace: float
    cov_trace_se: float
    d_min: float
    beta: float
    hcr_bound: float
    lemma2_bound: float
    theorem4_bound: float
    unbiasedness_threshold: float
    lemma1_trials: int
    lemma1_violations: int

    def to_dict(self):
        return asdict(self)


def _build_setup(config):
    """Draw phi, resampling with seed + 1 up to PHI_RESAMPLES times on rank failure."""
    seed = config.effective_phi_seed
    for attempt in range(PHI_RESAMPLES + 1):
        setup = MeasurementSetup(sample_gaussian_ensemble(config.m, config.p, seed + attempt), config.sigma_sq, config.k)
        try:
            bank = SubspaceBank(setup, config.k)
        except RankDeficient:
            if attempt == PHI_RESAMPLES:
                raise
            continue
        return setup, bank, seed + attempt


def _chunks(trials, size=CHUNK_SIZE):
    return [(start, min(start + size, trials)) for start in range(0, trials, size)]


def _map_chunks(fn, trials, workers):
    chunks = _chunks(trials)
    if workers <= 1 or len(chunks) == 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def _standard_error(values):
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        return 0.0
    mean = math.fsum(values) / n
    var = math.fsum((values - mean) ** 2) / (n - 1)
    return math.sqrt(var / n)


def support_statistics(estimates, truth):
    """Exact sample statistics of decoded supports ``estimates`` (n, k) against ``truth``.

    Returns (p_err, mean_rho2, bias, cov_trace, per_trial_spread) where
    ``cov_trace = mean ||s_hat - mean(s_hat)||^2`` and ``per_trial_spread`` holds
    the squared deviations it averages.
    """
    estimates = np.asarray(estimates, dtype=np.int64)
    n = estimates.shape[0]
    truth = np.asarray(truth, dtype=np.int64)
    errors = int(np.count_nonzero(np.any(estimates != truth, axis=1)))
    sums = [int(v) for v in estimates.sum(axis=0)]
    sum_sq = int((estimates**2).sum())
    rho2_sum = int(((estimates - truth) ** 2).sum())
    mean = [Fraction(v, n) for v in sums]
    cov_trace = Fraction(sum_sq, n) - sum(mu * mu for mu in mean)
    bias = [mu - int(t) for mu, t in zip(mean, truth)]
    spread = ((estimates - np.array([float(mu) for mu in mean])) ** 2).sum(axis=1)
    return errors / n, float(Fraction(rho2_sum, n)), [float(b) for b in bias], float(cov_trace), spread


def run_monte_carlo(config, workers=1):
    """Decode ``config.trials`` noisy measurements of a fixed instance and summarize."""
    setup, bank, phi_seed = _build_setup(config)
    signal = config.signal()
    x = setup.noiseless(signal)
    truth = np.array(signal.support.indices)
    scale = math.sqrt(config.sigma_sq)

    if config.sigma_sq > 0:
        hcr = bounds.hcr_support_bound(setup, signal)
        dmin, hcr_value = hcr.d_min, hcr.value
        beta = bounds.distinguishability(dmin, config.m, config.sigma_sq)
    else:
        dmin, hcr_value, beta = bounds.d_min(setup, signal), 0.0, math.inf

    def decode_chunk(bounds_):
        start, stop = bounds_
        if scale > 0:
            noise = np.stack([noise_vector(config.m, config.sigma_sq, config.base_seed, t) for t in range(start, stop)])
        else:
            noise = np.zeros((stop - start, config.m))
        Y = x[None, :] + noise
        if config.decoder == "mle":
            picked = bank.indices[bank.decode(Y)]
        else:
            picked = np.stack([mce_select(correlations(setup, y, config.normalized_mce), config.k) + 1 for y in Y])
        return picked, np.einsum("tm,tm->t", noise, noise)

    parts = _map_chunks(decode_chunk, config.trials, workers)
    estimates = np.concatenate([p[0] for p in parts])
    eps_sq = np.concatenate([p[1] for p in parts])

    p_err, mean_rho2, bias, cov_trace, spread = support_statistics(estimates, truth)
    se = math.sqrt(p_err * (1.0 - p_err) / config.trials)

    close = eps_sq < dmin**2 / 4.0
    wrong = np.any(estimates != truth, axis=1)

    lemma2 = theorem4 = threshold = None
    if math.isfinite(beta) and beta > 1:
        threshold = bounds.unbiasedness_threshold(config.p, beta, 0.1) if config.p >= 2 else None
        if config.m % 2 == 0:
            lemma2 = bounds.mle_error_upper_bound(config.m, beta)
            theorem4 = bounds.mle_cov_trace_bound(config.k, config.m, config.p, beta)

    return ExperimentRecord(
        config=config.to_dict(),
        phi_seed=phi_seed,
        true_support=list(signal.support.indices),
        empirical_p_err=p_err,
        p_err_se=se,
        ci_half_width_p_err=Z95 * se,
        mean_rho2=mean_rho2,
        empirical_bias=bias,
        bias_norm=math.sqrt(math.fsum(b * b for b in bias)),
        empirical_cov_trace=cov_trace,
        cov_trace_se=_standard_error(spread),
        d_min=dmin,
        beta=beta if math.isfinite(beta) else None,
        hcr_bound=hcr_value,
        lemma2_bound=lemma2,
        theorem4_bound=theorem4,
        unbiasedness_threshold=threshold,
        lemma1_trials=int(np.count_nonzero(close)),
        lemma1_violations=int(np.count_nonzero(close & wrong)),
    )


def lemma2_bound_direct(m, beta):
    """(m/2) beta^(m/2) exp(-m (beta - 1) / 2), the expanded form of (m/2) c(beta)^(-beta m)."""
    return math.exp(math.log(m / 2.0) + (m / 2.0) * math.log(beta) - m * (beta - 1.0) / 2.0)


def verify_lemma2(config, workers=1, record=None):
    """Empirical MLE error rate against the (m/2) c(beta)^(-beta m) bound (m even, beta > 1)."""
    record = record or run_monte_carlo(config, workers)
    out = {
        "check": "lemma2",
        "config": record.config,
        "phi_seed": record.phi_seed,
        "beta": record.beta,
        "d_min": record.d_min,
        "empirical_p_err": record.empirical_p_err,
        "p_err_se": record.p_err_se,
        "lemma1_trials": record.lemma1_trials,
        "lemma1_violations": record.lemma1_violations,
        "bound": None,
        "applicable": False,
        "passed": None,
        "reason": None,
    }
    if config.m % 2:
        out["reason"] = f"m = {config.m} is odd"
    elif record.beta is None or not record.beta > 1:
        out["reason"] = f"beta = {record.beta} is not above 1"
    else:
        bound = lemma2_bound_direct(config.m, record.beta)
        out.update(
            bound=bound,
            applicable=True,
            passed=record.empirical_p_err <= bound + SE_MULTIPLIER * record.p_err_se,
        )
    return out


def zero_error_cov_slack(config):
    """Upper confidence limit of tr cov when no trial decoded wrongly.

    The sample spread is identically 0 then, so its standard error carries no
    information.  The z = 3 Wilson upper limit on the error rate for a zero
    count is z^2 / (T + z^2); each error adds at most max rho2 to the trace.
    """
    truth = Support.first(config.p, config.k)
    worst = max(rho2(truth, s) for s in enumerate_supports(config.p, config.k))
    z_sq = SE_MULTIPLIER**2
    return worst * z_sq / (config.trials + z_sq)


def verify_hcr(config, workers=1, record=None, epsilon=0.1):
    """Check HCR <= empirical tr cov <= covariance upper bound above the unbiasedness threshold."""
    record = record or run_monte_carlo(config, workers)
    out = {
        "check": "hcr",
        "config": record.config,
        "phi_seed": record.phi_seed,
        "beta": record.beta,
        "hcr_value": record.hcr_bound,
        "empirical_cov_trace": record.empirical_cov_trace,
        "cov_trace_se": record.cov_trace_se,
        "theorem4_bound": None,
        "empirical_bias_norm": record.bias_norm,
        "bias_tolerance": None,
        "unbiasedness_threshold": None,
        "exponent_ratio": None,
        "gap_db": None,
        "applicable": False,
        "voided": None,
        "slack": None,
        "upper_ok": None,
        "lower_ok": None,
        "passed": None,
        "reason": None,
    }
    beta = record.beta
    if beta is None or not beta > 1:
        out["reason"] = f"beta = {beta} is not above 1"
        return out
    if config.m % 2:
        out["reason"] = f"m = {config.m} is odd"
        return out
    threshold = bounds.unbiasedness_threshold(config.p, beta, epsilon)
    ratio = bounds.hcr_exponent_ratio(beta)
    out.update(unbiasedness_threshold=threshold, exponent_ratio=ratio, gap_db=10.0 * math.log10(ratio))
    if config.m < threshold:
        out["reason"] = f"m = {config.m} is below the unbiasedness threshold {threshold:.4g}"
        return out
    theorem4 = bounds.mle_cov_trace_bound(config.k, config.m, config.p, beta)
    tolerance = SE_MULTIPLIER * math.sqrt(record.empirical_cov_trace / config.trials)
    voided = record.bias_norm > tolerance
    slack = SE_MULTIPLIER * record.cov_trace_se
    if record.empirical_p_err == 0:
        slack = zero_error_cov_slack(config)
    upper_ok = record.empirical_cov_trace <= theorem4 + slack
    lower_ok = record.hcr_bound <= record.empirical_cov_trace + slack
    out.update(
        theorem4_bound=theorem4,
        bias_tolerance=tolerance,
        applicable=True,
        voided=voided,
        slack=slack,
        upper_ok=upper_ok,
        lower_ok=lower_ok,
        passed=upper_ok and (lower_ok or voided),
    )
    return out


def ks_chi2(samples, dof, level=KS_LEVEL):
    """Asymptotic one-sample Kolmogorov-Smirnov test against chi2(dof)."""
    result = stats.kstest(samples, stats.chi2(dof).cdf, method="asymp")
    return {"statistic": float(result.statistic), "pvalue": float(result.pvalue), "passed": bool(result.pvalue >= level)}


def theorem3_witness(p, k, theta_min, sigma_sq, m, seed, trials, slack=0.5):
    """Check the adjacent-support witness used for the necessary condition.

    theta sits on (1, ..., k) with every coefficient theta_min; theta' moves
    its last entry to position p.  Only columns k and p of phi touch
    x - x', so each trial draws just those two Gaussian columns.  The draws
    of ||phi (theta - theta')||^2 / (2 theta_min^2) should be chi2(m).
    """
    if not (k >= 1 and p > k):
        raise InvalidDims(f"need p > k >= 1, got p={p}, k={k}")
    if trials < 1000:
        raise InvalidParameter(f"the witness check needs at least 1000 trials, got {trials}")
    if m < 1 or not theta_min > 0 or not sigma_sq > 0:
        raise InvalidParameter("m, theta_min and sigma_sq must be positive")
    s = Support.first(p, k)
    s_prime = Support(p, tuple(range(1, k)) + (p,))
    diff = np.array([theta_min, -theta_min])
    z = np.empty(trials)
    for t in range(trials):
        cols = standard_normal(make_rng(seed, STREAM_WITNESS, t), (m, 2))
        v = cols @ diff
        z[t] = (v @ v) / (2.0 * theta_min**2)

    out = {
        "check": "theorem3_witness",
        "p": p,
        "k": k,
        "m": m,
        "theta_min": theta_min,
        "sigma_sq": sigma_sq,
        "seed": seed,
        "trials": trials,
        "support": list(s.indices),
        "witness_support": list(s_prime.indices),
        "rho2_pair": rho2(s, s_prime),
        "ks": ks_chi2(z, m),
        "mean_z": math.fsum(z) / trials,
    }
    level = sigma_sq * math.log(p - k) / theta_min**2
    tail = {"level": level, "slack_constant": slack, "applicable": m < (1.0 - slack) * level}
    if tail["applicable"]:
        bound = math.exp(-((level - m) ** 2) / (4.0 * m))
        freq = float(np.count_nonzero(z >= level)) / trials
        se = math.sqrt(freq * (1.0 - freq) / trials)
        tail.update(bound=bound, empirical=freq, se=se, passed=freq <= bound + SE_MULTIPLIER * se)
    out["tail"] = tail
    return out


def chi2_projection_check(m, k, p, trials, seed, ell=1):
    """KS test that the normalized off-subspace energy is chi2(m - k)."""
    samples = chi2_projection_samples(m, k, p, trials, seed, ell)
    return {"check": "chi2_projection", "m": m, "k": k, "p": p, "ell": ell, "trials": trials, "seed": seed,
            "ks": ks_chi2(samples, m - k)}


def sweep_m(multiplier, reference_value, k):
    """Measurement count for a sweep point, never below the identifiable k + 1."""
    return max(k + 1, math.ceil(multiplier * reference_value - 1e-9))


def regime_sweep(regime, p_grid, trials, base_seed, multipliers=(0.5, 1.0, 2.0), reference="sufficient",
                 decoder="mle", sigma_sq=1.0, workers=1):
    """Empirical error across ``p_grid`` for one scaling regime.

    At each p, k and theta_min follow :func:`bounds.regime_parameters` and m is
    ``multiplier`` times the sufficient (or necessary) count.  Failing points
    carry an ``error`` entry and the sweep continues.
    """
    if reference not in ("sufficient", "necessary"):
        raise InvalidParameter(f"reference must be 'sufficient' or 'necessary', got {reference!r}")
    rows = []
    for p in p_grid:
        for c in multipliers:
            row = {"regime": regime, "p": p, "multiplier": c, "reference": reference}
            try:
                k, theta_min = bounds.regime_parameters(regime, p, sigma_sq)
                row.update(k=k, theta_min=theta_min)
                if reference == "sufficient":
                    if bounds.REGIMES[regime][3] is None:
                        raise InvalidParameter(f"no sufficient condition is available for regime {regime}")
                    ref = bounds.sufficient_m_suff(p, k, theta_min, sigma_sq).value
                else:
                    ref = bounds.necessary_m_lower(p, k, theta_min, sigma_sq)
                m = sweep_m(c, ref, k)
                row.update(reference_value=ref, m=m)
                config = TrialConfig(p=p, k=k, m=m, theta_min=theta_min, sigma_sq=sigma_sq, trials=trials,
                                     base_seed=base_seed, decoder=decoder)
                record = run_monte_carlo(config, workers)
                row.update(
                    empirical_p_err=record.empirical_p_err,
                    p_err_se=record.p_err_se,
                    mean_rho2=record.mean_rho2,
                    empirical_cov_trace=record.empirical_cov_trace,
                    beta=record.beta,
                    phi_seed=record.phi_seed,
                    error=None,
                )
            except SupportBoundError as exc:
                row["error"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
    return rows


def integer_mean_experiment(m, sigma_sq, trials, seed):
    """Variance of the rounded sample mean when the true mean is the integer 0."""
    if trials < 1000:
        raise InvalidParameter(f"needs at least 1000 trials, got {trials}")
    if m < 1 or not sigma_sq >= 0:
        raise InvalidParameter(f"need m >= 1 and sigma_sq >= 0, got {m}, {sigma_sq}")
    sigma = math.sqrt(sigma_sq)
    estimates = np.empty(trials, dtype=np.int64)
    for t in range(trials):
        draws = sigma * standard_normal(make_rng(seed, STREAM_INTEGER_MEAN, t), m)
        estimates[t] = int(np.rint(math.fsum(draws) / m))
    total = int(estimates.sum())
    mean = Fraction(total, trials)
    variance = Fraction(int((estimates**2).sum()), trials) - mean * mean
    spread = (estimates - float(mean)) ** 2
    se = _standard_error(spread)
    out = {
        "check": "integer_mean",
        "m": m,
        "sigma_sq": sigma_sq,
        "trials": trials,
        "seed": seed,
        "empirical_mean": float(mean),
        "empirical_variance": float(variance),
        "variance_se": se,
    }
    if sigma_sq > 0:
        cr, hcr = bounds.integer_mean_hcr(m, sigma_sq)
        out.update(
            cr=cr,
            hcr=hcr,
            hcr_below_cr=hcr < cr,
            below_cr=float(variance) < cr,
            passed=float(variance) >= hcr - SE_MULTIPLIER * se,
        )
    return out
