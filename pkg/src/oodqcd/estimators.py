"""scikit-learn style wrappers around the mixture fitter and the detectors.

The estimators learn error laws from held-out in-distribution (and, when the
variant needs it, out-of-distribution) samples, then score new streams::

    det = CusumDetector(variant="mix", threshold=7.0).fit(errors_id, errors_ood)
    det.stopping_time(stream)
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, DensityMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .detect import DetectorConfig, run
from .dist import EmConfig, em_fit, log_pdf, moments, sample


def check_stream(X, name="X", allow_empty=True) -> np.ndarray:
    """Validate a 1-D stream of finite errors (a column vector is accepted)."""
    arr = np.asarray(X, dtype=float)
    if arr.size == 0:
        if not allow_empty:
            raise ValueError(f"{name} is empty")
        return np.empty(0)
    if arr.ndim == 2 and arr.shape[1] != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    arr = check_array(arr.reshape(-1, 1), ensure_all_finite=True, input_name=name)
    return arr.ravel()


class GaussianMixtureEM(DensityMixin, BaseEstimator):
    """One-dimensional Gaussian mixture fitted by EM.

    Parameters
    ----------
    n_components : int, default=2
    tol : float, default=1e-8
        Relative log-likelihood improvement that stops the iterations.
    max_iter : int, default=500
    var_floor : float, default=1e-6
        Lower bound on every component variance.

    Attributes
    ----------
    mixture_ : GaussianMixture
    log_likelihood_ : float
        Total log-likelihood of the training data.
    n_iter_ : int
    converged_ : bool
    history_ : tuple of float
        Log-likelihood after each iteration, non-decreasing.
    """

    def __init__(self, n_components=2, tol=1e-8, max_iter=500, var_floor=1e-6):
        self.n_components = n_components
        self.tol = tol
        self.max_iter = max_iter
        self.var_floor = var_floor

    def fit(self, X, y=None):
        x = check_stream(X, allow_empty=False)
        res = em_fit(x, self.n_components, EmConfig(self.tol, self.max_iter, self.var_floor))
        self.mixture_ = res.mixture
        self.log_likelihood_ = res.log_likelihood
        self.n_iter_ = res.n_iter
        self.converged_ = res.converged
        self.history_ = res.history
        return self

    def score_samples(self, X):
        check_is_fitted(self, "mixture_")
        return np.atleast_1d(log_pdf(self.mixture_, check_stream(X)))

    def score(self, X, y=None):
        return float(np.mean(self.score_samples(X)))

    def sample(self, n_samples=1, random_state=0):
        check_is_fitted(self, "mixture_")
        return sample(self.mixture_, random_state, n_samples)


class _StreamDetector(BaseEstimator):
    def _trace(self, X):
        check_is_fitted(self, "config_")
        return run(self.config_, check_stream(X))

    def decision_function(self, X):
        """Detector statistic after each sample (frozen after the alarm)."""
        return self._trace(X).statistics

    def predict(self, X):
        """1 from the stopping time onwards, 0 before."""
        return self._trace(X).alarmed.astype(int)

    def stopping_time(self, X):
        """1-based alarm time, or None when the stream ends first."""
        return self._trace(X).stopping_time


def _fit_law(X, k, name):
    return GaussianMixtureEM(n_components=k).fit(check_stream(X, name, allow_empty=False)).mixture_


class CusumDetector(_StreamDetector):
    """CUSUM over log-likelihood ratios of learned error laws.

    Parameters
    ----------
    variant : {"mix", "sinmix", "single", "robust"}
        How much of each law the test uses: full mixtures, an exact pre-change
        mixture with a normal post-change surrogate, normal surrogates on
        both sides, or the pre-change mixture shifted by ``kappa``.
    threshold : float
    n_components : int
        Mixture size for the fitted laws.
    kappa : float
        Design shift for ``variant="robust"``.
    """

    def __init__(self, variant="mix", threshold=7.0, n_components=2, kappa=1.0):
        self.variant = variant
        self.threshold = threshold
        self.n_components = n_components
        self.kappa = kappa

    def fit(self, X_pre, X_post=None):
        if self.variant not in ("mix", "sinmix", "single", "robust"):
            raise ValueError(f"unknown variant {self.variant!r}")
        pre = _fit_law(X_pre, self.n_components, "X_pre")
        post = None
        if self.variant != "robust":
            if X_post is None:
                raise ValueError(f"variant {self.variant!r} needs post-change samples")
            post = _fit_law(X_post, self.n_components, "X_post")
        self.pre_ = pre
        self.post_ = post
        pre_law = moments(pre) if self.variant == "single" else pre
        post_law = None
        if post is not None:
            post_law = post if self.variant == "mix" else moments(post)
        self.config_ = DetectorConfig(
            "cusum_" + self.variant,
            self.threshold,
            pre=pre_law,
            post=post_law,
            kappa=self.kappa if self.variant == "robust" else None,
        )
        return self


class ZScoreDetector(_StreamDetector):
    """Moving-window Z-score baseline; alarms when ``|z| > threshold``."""

    def __init__(self, window=10, threshold=3.0):
        self.window = window
        self.threshold = threshold

    def fit(self, X=None, y=None):
        self.config_ = DetectorConfig("zscore", self.threshold, window=self.window)
        return self


class ChiSquareDetector(_StreamDetector):
    """Windowed Pearson statistic between learned post- and pre-change densities."""

    def __init__(self, window=10, threshold=10.0, n_components=2):
        self.window = window
        self.threshold = threshold
        self.n_components = n_components

    def fit(self, X_pre, X_post):
        self.pre_ = _fit_law(X_pre, self.n_components, "X_pre")
        self.post_ = _fit_law(X_post, self.n_components, "X_post")
        self.config_ = DetectorConfig("chisq", self.threshold, pre=self.pre_, post=self.post_, window=self.window)
        return self

