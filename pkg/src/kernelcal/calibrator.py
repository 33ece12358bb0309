"""scikit-learn style front end: fit a G/G/1 simulation model to output data."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted

from .core_math import BoxDomain, as_param
from .estimator import SGDConfig, ScoreContext, calibrate, full_mmd2
from .exceptions import ConfigError, KernelCalError
from .inference import build_confidence_set, estimate_sandwich
from .kernels import KernelSpec
from .simulator import GG1Model, simulate_model_sample

__all__ = ["KernelScoreCalibrator"]


def _generator(random_state) -> np.random.Generator:
    if isinstance(random_state, np.random.Generator):
        return random_state
    if random_state is None or isinstance(random_state, (int, np.integer)):
        return np.random.default_rng(random_state)
    # legacy RandomState: derive a seed from it
    return np.random.default_rng(check_random_state(random_state).randint(2**31 - 1))


class KernelScoreCalibrator(BaseEstimator):
    """Kernel-score calibration of a simulation model with a confidence set.

    Parameters
    ----------
    model : GG1Model
        Simulator whose theta-driven rates are calibrated.
    kernel : KernelSpec
        Scoring kernel; a pending median bandwidth is resolved on ``X`` in ``fit``.
    domain : BoxDomain
        Box for theta; SGD iterates are projected onto it.
    n : int
        Simulated replications per SGD iteration.
    eta0, max_iter, optimizer, beta1, beta2, averaging_window
        Optimizer settings, see :class:`~kernelcal.estimator.SGDConfig`.
    n_c : int
        Simulated sample size for the sandwich plug-ins.
    alpha : float
        The confidence set has nominal level ``1 - alpha``.
    hessian_step : float
        Central-difference step for the Hessian.
    confidence : bool
        Skip the sandwich and confidence set when False.
    theta0 : array-like or None
        Starting point; drawn uniformly from ``domain`` when None.
    on_degenerate : {"raise", "ignore"}
        What to do when the sandwich matrices are unusable. With "ignore"
        ``confidence_set_`` is None and ``degenerate_reason_`` says why.
    random_state : int, Generator or None
        Seed for the single random stream of a fit.

    Attributes
    ----------
    theta_ : ndarray of shape (p,)
    theta0_ : ndarray of shape (p,)
    kernel_ : KernelSpec with the bandwidth resolved
    score_trace_ : ndarray of shape (max_iter,)
    sandwich_ : SandwichEstimate or None
    confidence_set_ : ConfidenceSet or None
    degenerate_reason_ : str or None
    n_features_in_ : int
    """

    def __init__(
        self,
        model: GG1Model,
        kernel: KernelSpec | None = None,
        domain: BoxDomain | None = None,
        n: int = 500,
        eta0: float = 1.0,
        max_iter: int = 200,
        optimizer: str = "adam",
        beta1: float = 0.9,
        beta2: float = 0.999,
        averaging_window: int = 100,
        n_c: int = 5000,
        alpha: float = 0.05,
        hessian_step: float = 0.1,
        confidence: bool = True,
        theta0=None,
        on_degenerate: str = "raise",
        random_state=None,
    ):
        self.model = model
        self.kernel = kernel
        self.domain = domain
        self.n = n
        self.eta0 = eta0
        self.max_iter = max_iter
        self.optimizer = optimizer
        self.beta1 = beta1
        self.beta2 = beta2
        self.averaging_window = averaging_window
        self.n_c = n_c
        self.alpha = alpha
        self.hessian_step = hessian_step
        self.confidence = confidence
        self.theta0 = theta0
        self.on_degenerate = on_degenerate
        self.random_state = random_state

    def _sgd_config(self) -> SGDConfig:
        return SGDConfig(
            eta0=self.eta0,
            max_iters=self.max_iter,
            optimizer=self.optimizer,
            beta1=self.beta1,
            beta2=self.beta2,
            averaging_window=min(self.averaging_window, self.max_iter),
        )

    def _context(self, X) -> ScoreContext:
        if self.domain is None:
            raise ConfigError("a BoxDomain for theta is required")
        kernel = self.kernel if self.kernel is not None else KernelSpec()
        return ScoreContext(X, kernel, self.model, self.domain, self.n)

    def fit(self, X, y=None):
        """Calibrate on observations ``X`` of shape (m, d); ``y`` is ignored."""
        if self.on_degenerate not in ("raise", "ignore"):
            raise ConfigError("on_degenerate must be 'raise' or 'ignore'")
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError("alpha must lie in (0, 1)")
        X = check_array(X, ensure_min_samples=2)
        ctx = self._context(X)
        rng = _generator(self.random_state)
        theta0 = self.domain.sample(rng) if self.theta0 is None else as_param(self.theta0)
        result = calibrate(ctx, self._sgd_config(), theta0, rng)

        self.n_features_in_ = X.shape[1]
        self.kernel_ = ctx.kernel
        self.theta0_ = result.theta0
        self.theta_ = result.theta_hat
        self.score_trace_ = result.score_trace
        self.theta_trace_ = result.theta_trace
        self.sandwich_ = None
        self.confidence_set_ = None
        self.degenerate_reason_ = None
        if self.confidence:
            try:
                self.sandwich_ = estimate_sandwich(ctx, self.theta_, self.n_c, rng, self.hessian_step)
                self.confidence_set_ = build_confidence_set(self.sandwich_, self.theta_, self.alpha)
            except KernelCalError as exc:
                if self.on_degenerate == "raise":
                    raise
                self.degenerate_reason_ = str(exc)
        return self

    def score(self, X, y=None, random_state=None) -> float:
        """Negative unbiased squared MMD between fresh model output and ``X``."""
        check_is_fitted(self, "theta_")
        X = check_array(X, ensure_min_samples=2)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        ctx = ScoreContext(X, self.kernel_, self.model, self.domain, self.n)
        y_sim = simulate_model_sample(self.model, self.theta_, self.n, _generator(random_state))
        return -full_mmd2(ctx, y_sim)

    def sample(self, n_samples: int, random_state=None) -> np.ndarray:
        """Draw model output at the fitted parameter, shape (n_samples, 1)."""
        check_is_fitted(self, "theta_")
        return simulate_model_sample(self.model, self.theta_, n_samples, _generator(random_state)).value

    def contains(self, theta) -> bool:
        """Whether ``theta`` lies in the fitted confidence set."""
        check_is_fitted(self, "confidence_set_")
        if self.confidence_set_ is None:
            raise ConfigError(f"no confidence set: {self.degenerate_reason_ or 'confidence=False'}")
        return self.confidence_set_.contains(theta)
