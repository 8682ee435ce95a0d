"""Network-level constants: the correlation matrix ``R``, ``kappa = diag(R^{-1})``,
and default sampling thresholds and overshoot bounds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .._validation import check_int, check_positive
from ..core import spd_inverse
from ..exceptions import ConfigError, InvalidCorrelation, NonpositiveTarget, SingularInformation, SingularR
from .protocol import SensorConfig

THETA_DRAWS = 10**6
THETA_FACTOR = 2.0


@dataclass(frozen=True)
class NetworkStats:
    R: np.ndarray
    kappa: np.ndarray
    r: float | None = None

    @property
    def Rinv(self):
        return spd_inverse(self.R)


def equicorrelation(n, r):
    """``n x n`` matrix with unit diagonal and off-diagonal ``r``."""
    n = check_int(n, "n")
    if n > 1 and not (-1.0 / (n - 1) <= r <= 1.0):
        raise InvalidCorrelation(f"r={r} outside [-1/(n-1), 1] for n={n}")
    R = np.full((n, n), float(r))
    np.fill_diagonal(R, 1.0)
    return R


def kappa_equicorrelated(n, r):
    """Closed form of ``diag(R^{-1})`` for the equicorrelation matrix."""
    if r >= 1.0 or (n > 1 and r <= -1.0 / (n - 1)):
        raise SingularR(f"equicorrelation matrix is singular at r={r}")
    return (1.0 + (n - 2) * r) / ((1.0 - r) * (1.0 + (n - 1) * r))


def _from_R(R, r=None):
    try:
        Rinv = spd_inverse(R)
    except SingularInformation as exc:
        raise SingularR("correlation matrix R is singular") from exc
    return NetworkStats(R, np.diag(Rinv).copy(), r)


def correlation_stats(second_moments, noise_vars=None):
    """Build ``R`` from per-sensor coefficient second moments.

    ``second_moments`` has shape ``(K, n, n)`` (``E[H^k H^k^T]``) or ``(n, n)``
    for a single sensor; ``noise_vars`` has one variance per sensor.
    """
    M = np.asarray(second_moments, dtype=float)
    if M.ndim == 2:
        M = M[None]
    if M.ndim != 3 or M.shape[1] != M.shape[2]:
        raise ConfigError(f"second moments must have shape (K, n, n), got {M.shape}")
    K = M.shape[0]
    s2 = np.ones(K) if noise_vars is None else np.broadcast_to(
        np.asarray(noise_vars, dtype=float), (K,))
    if np.any(s2 <= 0):
        raise ConfigError("noise variances must be positive")
    for Mk in M:
        if np.linalg.eigvalsh(0.5 * (Mk + Mk.T)).min() < -1e-10 * max(1.0, np.abs(Mk).max()):
            raise ConfigError("second-moment matrices must be positive semidefinite")
    A = np.tensordot(1.0 / s2, M, axes=1)
    diag = np.diag(A)
    if np.any(diag <= 0):
        raise SingularR("a coefficient has zero second moment")
    R = A / np.sqrt(np.outer(diag, diag))
    return _from_R(0.5 * (R + R.T))


def equicorrelated_stats(n, r):
    R = equicorrelation(n, r)
    if r >= 1.0:
        raise SingularR(f"equicorrelation matrix is singular at r={r}")
    return NetworkStats(R, _from_R(R).kappa, float(r))


def gamma_threshold(rhs):
    """Positive root of ``gamma * tanh(gamma / 2) = rhs``."""
    if not np.isfinite(rhs) or rhs <= 0:
        raise NonpositiveTarget(f"right-hand side must be positive, got {rhs!r}")

    def f(g):
        return g * np.tanh(0.5 * g) - rhs

    # g tanh(g/2) >= g - 2, so rhs + 2 brackets the root from above
    hi = max(rhs + 2.0, np.sqrt(2.0 * rhs) * 2.0)
    return float(optimize.brentq(f, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps))


@dataclass(frozen=True)
class IncrementStats:
    """One-step increment statistics of the local processes, per dimension."""

    mean_d: np.ndarray
    mean_abs_v: np.ndarray
    max_d: float
    max_abs_v: float


def increment_stats(gen_H, X, sigma2=1.0, draws=THETA_DRAWS, rng=None):
    """Monte-Carlo moments of ``h_i^2/sigma2`` and ``|h_i y|/sigma2``.

    ``gen_H(rng, size)`` returns ``size`` coefficient vectors as rows.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    H = np.asarray(gen_H(rng, draws), dtype=float)
    X = np.asarray(X, dtype=float)
    y = H @ X + np.sqrt(sigma2) * rng.standard_normal(draws)
    d = H * H / sigma2
    v = np.abs(H * y[:, None]) / sigma2
    return IncrementStats(d.mean(axis=0), v.mean(axis=0), float(d.max()), float(v.max()))


def default_sensor_config(stats: IncrementStats, interval=1.0, sigma2=1.0,
                          theta_factor=THETA_FACTOR):
    """Thresholds giving a mean sampling interval of ``interval`` steps.

    ``Delta = interval * E[h^2/sigma2]`` and ``gamma`` solves the tanh
    equation with right side ``interval * E|h y|/sigma2``.  Overshoot bounds
    are ``theta_factor`` times the largest simulated one-step increment and
    the encoding slopes are ``phi = 2 theta``.
    """
    interval = check_positive(interval, "interval")
    Delta = interval * stats.mean_d
    gamma = np.array([gamma_threshold(interval * m) for m in stats.mean_abs_v])
    theta_d = theta_factor * stats.max_d
    theta_v = theta_factor * stats.max_abs_v
    return SensorConfig(Delta, gamma, sigma2, 2.0 * theta_d, 2.0 * theta_v, theta_d, theta_v)
