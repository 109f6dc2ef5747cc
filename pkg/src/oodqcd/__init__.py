"""Quickest detection of out-of-distribution onsets in prediction-error streams."""

from .detect import (
    DetectorConfig,
    DetectorState,
    Mix,
    RobustShift,
    Single,
    Sinmix,
    WindowState,
    chisq_step,
    cusum_step,
    log_lr,
    reset,
    run,
    threshold_for_far,
    zscore_step,
)
from .dist import (
    EmConfig,
    Gaussian,
    GaussianMixture,
    MomentSummary,
    fit_em,
    kl_mc,
    log_pdf,
    moments,
    pdf,
    sample,
    shift,
)
from .estimators import ChiSquareDetector, CusumDetector, GaussianMixtureEM, ZScoreDetector
from .simgen import ChangeScenario, TrajectoryPair, ade, fde, generate, ingest_csv, rmse

__version__ = "0.1.0"
