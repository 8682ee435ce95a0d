"""Optimal conditional sequential estimator.

Sampling continues until the accuracy of the conditional covariance of the
least-squares estimate, ``f(sigma^2 U_t^{-1})``, first drops to the target
``C``.  The stopping time depends on the coefficient history only, so the LS
estimate at that time is the optimal estimator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, validate_data

from ._validation import check_int, check_positive
from .core import (
    DEFAULT_DELTA,
    AccuracyFn,
    FisherState,
    NoiseModel,
    Observation,
    accuracy,
    crlb,
    rls_step,
    spd_factor,
)
from .exceptions import SingularInformation

DEFAULT_HORIZON = 10**6


@dataclass(frozen=True)
class StoppingConfig:
    C: float
    f: AccuracyFn = AccuracyFn.TRACE
    sigma2: float = 1.0
    horizon: int = DEFAULT_HORIZON

    def __post_init__(self):
        check_positive(self.C, "C")
        check_positive(self.sigma2, "sigma2")
        check_int(self.horizon, "horizon")
        object.__setattr__(self, "f", AccuracyFn(self.f))

    @property
    def relative_target(self):
        """``C / sigma^2``: the threshold on ``f(U^{-1})`` for homogeneous ``f``."""
        return self.C / self.sigma2


@dataclass(frozen=True)
class StopReport:
    T: int
    Xhat: np.ndarray
    achieved: float
    hit_horizon: bool
    state: FisherState | None = None


def statistic(U, cfg: StoppingConfig):
    """``f(sigma^2 U^{-1})``; ``inf`` while ``U`` is not invertible."""
    try:
        return accuracy(crlb(np.atleast_2d(U), cfg.sigma2), cfg.f)
    except SingularInformation:
        return float("inf")


def should_stop(state: FisherState, cfg: StoppingConfig):
    return statistic(state.information_matrix, cfg) <= cfg.C


def _as_observation(item):
    if isinstance(item, Observation):
        return item
    y, H = item
    return Observation(y, H)


def run_conditional(stream: Iterable, cfg: StoppingConfig, noise: NoiseModel | None = None,
                    delta=DEFAULT_DELTA, n=None):
    """Consume observations until the conditional accuracy target is met.

    ``stream`` yields :class:`Observation` objects or ``(y, H)`` pairs.  The
    returned estimate is the exact least-squares solution ``U_T^{-1} V_T``.
    If the stream or the horizon runs out first the report has
    ``hit_horizon=True`` and carries the last available estimate.
    """
    noise = NoiseModel.centralized(cfg.sigma2) if noise is None else noise
    state = None
    stat = float("inf")
    for item in stream:
        obs = _as_observation(item)
        if state is None:
            state = FisherState.initial(obs.n if n is None else n, delta)
        state = rls_step(state, obs, noise)
        stat = statistic(state.information_matrix, cfg)
        if stat <= cfg.C:
            return StopReport(state.t, _ls_solution(state), stat, False, state)
        if state.t >= cfg.horizon:
            break
    if state is None:
        raise ValueError("empty observation stream")
    return StopReport(state.t, state.estimate, stat, True, state)


def _ls_solution(state):
    try:
        return linalg.cho_solve(spd_factor(state.information_matrix), state.V.astype(float))
    except SingularInformation:
        return state.estimate


class SequentialLeastSquares(RegressorMixin, BaseEstimator):
    """Scikit-learn wrapper around the conditional stopping rule.

    ``fit(H, y)`` reads the rows of ``H`` (coefficient vectors) and ``y`` in
    order and stops at the first row where the target accuracy is met.
    ``partial_fit`` continues an unfinished run with more rows; it is a no-op
    once the rule has stopped.

    Parameters
    ----------
    target : float
        Accuracy level ``C`` imposed on ``f(Cov(Xhat_T | H_T))``.
    accuracy : {"trace", "frobenius"}
    noise_var : float
        Noise variance ``sigma^2``.
    delta : float
        RLS initialisation constant, ``P_0 = I / delta``.
    horizon : int
        Safety bound on the number of samples.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    stopping_time_ : int
    achieved_ : float
        Value of the accuracy statistic at the stopping time.
    stopped_ : bool
    """

    def __init__(self, target=0.1, accuracy="trace", noise_var=1.0,
                 delta=DEFAULT_DELTA, horizon=DEFAULT_HORIZON):
        self.target = target
        self.accuracy = accuracy
        self.noise_var = noise_var
        self.delta = delta
        self.horizon = horizon

    def _config(self):
        return StoppingConfig(self.target, AccuracyFn(self.accuracy), self.noise_var,
                              self.horizon)

    def fit(self, X, y):
        for attr in ("state_", "coef_", "stopping_time_", "achieved_", "stopped_"):
            self.__dict__.pop(attr, None)
        X, y = validate_data(self, X, y, y_numeric=True)
        self.state_ = FisherState.initial(X.shape[1], self.delta)
        return self._consume(X, y)

    def partial_fit(self, X, y):
        if not hasattr(self, "state_"):
            return self.fit(X, y)
        X, y = validate_data(self, X, y, y_numeric=True, reset=False)
        return self._consume(X, y)

    def _consume(self, X, y):
        cfg = self._config()
        noise = NoiseModel.centralized(cfg.sigma2)
        if getattr(self, "stopped_", False):
            return self
        state = self.state_
        stat = float("inf")
        for h_t, y_t in zip(X, y):
            state = rls_step(state, Observation(y_t, h_t), noise)
            stat = statistic(state.information_matrix, cfg)
            if stat <= cfg.C or state.t >= cfg.horizon:
                break
        self.state_ = state
        self.stopped_ = stat <= cfg.C
        self.stopping_time_ = state.t
        self.achieved_ = stat
        self.coef_ = _ls_solution(state) if self.stopped_ else state.estimate
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, reset=False)
        return X @ self.coef_

    def covariance(self):
        """Conditional covariance ``sigma^2 U_T^{-1}`` at the stopping time."""
        check_is_fitted(self, "state_")
        return crlb(self.state_.information_matrix, self.noise_var)


def stopping_times(H_paths, cfg: StoppingConfig):
    """Vectorised scalar stopping times ``min{t : u_t >= sigma^2 / C}``.

    ``H_paths`` has shape ``(paths, steps)``.  Paths that never cross get
    ``steps + 1``.
    """
    H_paths = check_array(H_paths)
    u = np.cumsum(H_paths**2, axis=1)
    return (u < cfg.sigma2 / cfg.C).sum(axis=1) + 1


__all__ = [
    "StoppingConfig", "StopReport", "should_stop", "run_conditional",
    "SequentialLeastSquares", "statistic", "stopping_times",
]
