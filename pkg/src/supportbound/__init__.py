"""Estimation-theoretic tools for noisy sparse-support recovery."""

from .bounds import (
    BoundReport,
    HcrReport,
    c_beta,
    d_min,
    direct_measurement_error,
    distinguishability,
    hcr_single_term,
    hcr_support_bound,
    integer_mean_hcr,
    mle_cov_trace_bound,
    mle_error_upper_bound,
    necessary_m_lower,
    regime_table,
    sufficient_m_suff,
    unbiasedness_threshold,
)
from .decoders import DecodeResult, mce_decode, mle_decode, pairwise_ml_error_event
from .experiments import TrialConfig, run_monte_carlo, verify_hcr, verify_lemma2
from .model import (
    MeasurementSetup,
    SparseSignal,
    Support,
    enumerate_supports,
    measure,
    rho1,
    rho2,
    sample_gaussian_ensemble,
    verify_2k_independence,
)

__version__ = "0.1.0"
