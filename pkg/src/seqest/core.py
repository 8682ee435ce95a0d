"""Linear-model sufficient statistics, (weighted) least squares and the CRLB.

Observations follow ``y_t = H_t^T X + w_t`` with ``Var(w_t) = sigma^2`` (or
``sigma_k^2`` per sensor).  Every observation is whitened at ingestion by
dividing ``H`` and ``y`` by the noise standard deviation, so the plain and the
weighted least-squares estimators share one code path.

The recursive estimator keeps ``P = (delta I + U)^{-1}`` in UD-factored form
(Bierman's update of the standard RLS gain/covariance recursion) and carries
the running statistics in extended precision.  With ``delta = 1e-8`` the
un-factored recursion loses about eight digits to cancellation on the first
updates; the factored form does not.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg

from ._validation import check_positive, check_symmetric, check_vector
from .exceptions import ConfigError, DimensionMismatch, SingularInformation

DEFAULT_DELTA = 1e-8
PIVOT_RTOL = 1e-12

_EXT = np.longdouble


@dataclass(frozen=True)
class Observation:
    """One scalar sample ``y`` with its coefficient vector ``H``."""

    y: float
    H: np.ndarray
    sensor_id: int | None = None

    def __post_init__(self):
        H = check_vector(self.H, "H")
        if not np.isfinite(self.y):
            raise ConfigError(f"y must be finite, got {self.y!r}")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "y", float(self.y))

    @property
    def n(self):
        return self.H.shape[0]


@dataclass(frozen=True)
class NoiseModel:
    """Noise variances: one value (centralized) or one per sensor."""

    variances: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        v = tuple(float(s) for s in np.atleast_1d(self.variances))
        if not v or any(not np.isfinite(s) or s <= 0 for s in v):
            raise ConfigError(f"noise variances must be positive, got {v}")
        object.__setattr__(self, "variances", v)

    @classmethod
    def centralized(cls, sigma2=1.0):
        return cls((sigma2,))

    def variance(self, sensor_id=None):
        if len(self.variances) == 1:
            return self.variances[0]
        if sensor_id is None:
            raise ConfigError("per-sensor noise model needs obs.sensor_id")
        return self.variances[sensor_id]


class AccuracyFn(str, enum.Enum):
    """Scalar accuracy of a covariance matrix."""

    TRACE = "trace"
    FROBENIUS = "frobenius"

    def __call__(self, M):
        return accuracy(M, self)


def accuracy(M, f=AccuracyFn.TRACE):
    """Trace or Frobenius norm of a symmetric matrix."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    f = AccuracyFn(f)
    if f is AccuracyFn.TRACE:
        return float(np.trace(M))
    return float(np.sqrt(np.sum(M * M)))


def _whiten(obs, noise):
    sigma = np.sqrt(noise.variance(obs.sensor_id))
    return obs.H / sigma, obs.y / sigma


def spd_factor(U):
    """Cholesky factor of ``U``; raises :class:`SingularInformation` on a small pivot.

    A pivot counts as small when its square falls below ``1e-12`` times the
    largest diagonal entry of ``U``.
    """
    U = np.asarray(U, dtype=float)
    if U.ndim == 0:
        U = U.reshape(1, 1)
    scale = float(np.max(np.diag(U))) if U.size else 0.0
    if not scale > 0:
        raise SingularInformation("information matrix has no positive diagonal")
    try:
        c, lower = linalg.cho_factor(U, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise SingularInformation("information matrix is not positive definite") from exc
    pivots = np.diag(c) ** 2
    if np.min(pivots) < PIVOT_RTOL * scale:
        raise SingularInformation(
            f"information matrix is rank deficient (pivot {np.min(pivots):.3e})")
    return c, lower


def spd_inverse(U):
    c = spd_factor(U)
    return linalg.cho_solve(c, np.eye(c[0].shape[0]))


def crlb(U, sigma2=1.0):
    """Cramer-Rao bound ``sigma^2 U^{-1}`` for the conditional covariance."""
    sigma2 = check_positive(sigma2, "sigma2")
    U = check_symmetric(np.atleast_2d(np.asarray(U, dtype=float)), "U")
    return sigma2 * spd_inverse(U)


def information(observations: Iterable[Observation], noise: NoiseModel, n=None):
    """Accumulate ``U = sum H H^T / sigma^2`` and ``V = sum H y / sigma^2``."""
    U = V = None
    for obs in observations:
        if U is None:
            n = obs.n if n is None else n
            U = np.zeros((n, n))
            V = np.zeros(n)
        if obs.n != n:
            raise DimensionMismatch(f"observation has {obs.n} coefficients, expected {n}")
        h, y = _whiten(obs, noise)
        U += np.outer(h, h)
        V += h * y
    if U is None:
        raise ConfigError("at least one observation is required")
    return U, V


def batch_ls(observations: Sequence[Observation], noise: NoiseModel | None = None):
    """Batch (weighted) least squares.

    Returns ``(Xhat, U, V)`` with ``Xhat = U^{-1} V``.  Equal unit variances
    give ordinary least squares; per-sensor variances give the WLS estimator.
    """
    noise = NoiseModel() if noise is None else noise
    U, V = information(observations, noise)
    Xhat = linalg.cho_solve(spd_factor(U), V)
    return Xhat, U, V


@dataclass(frozen=True)
class FisherState:
    """Running sufficient statistics of the recursive least-squares estimator.

    ``U``, ``V``, the estimate and the UD factors of ``P`` are stored in
    extended precision (``numpy.longdouble``).  ``P`` is rebuilt from the
    factors on access; use :attr:`estimate` for a float64 copy of ``Xhat``.
    """

    n: int
    t: int
    U: np.ndarray
    V: np.ndarray
    Xhat: np.ndarray
    K: np.ndarray
    delta: float
    ud_unit: np.ndarray = field(repr=False)
    ud_diag: np.ndarray = field(repr=False)

    @classmethod
    def initial(cls, n, delta=DEFAULT_DELTA):
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise ConfigError(f"dimension must be a positive integer, got {n!r}")
        delta = check_positive(delta, "delta")
        return cls(
            n=int(n), t=0,
            U=np.zeros((n, n), dtype=_EXT), V=np.zeros(n, dtype=_EXT),
            Xhat=np.zeros(n, dtype=_EXT), K=np.zeros(n, dtype=_EXT),
            delta=delta,
            ud_unit=np.eye(n, dtype=_EXT),
            ud_diag=np.full(n, _EXT(1) / _EXT(delta)),
        )

    @property
    def P(self):
        return (self.ud_unit * self.ud_diag) @ self.ud_unit.T

    @property
    def estimate(self):
        return self.Xhat.astype(float)

    @property
    def information_matrix(self):
        return self.U.astype(float)

    def statistic(self, f=AccuracyFn.TRACE, sigma2=1.0):
        """``f(sigma^2 U^{-1})``, or ``inf`` while ``U`` is singular."""
        try:
            return accuracy(crlb(self.information_matrix, sigma2), f)
        except SingularInformation:
            return float("inf")


def _ud_update(unit, diag, h):
    """Bierman's UD measurement update for unit noise; returns the gain."""
    n = h.shape[0]
    a = unit.T @ h
    b = diag * a
    alpha = _EXT(1)
    for j in range(n):
        beta = alpha
        alpha = alpha + a[j] * b[j]
        lam = -a[j] / beta
        diag[j] = diag[j] * beta / alpha
        for i in range(j):
            u_ij = unit[i, j]
            unit[i, j] = u_ij + b[i] * lam
            b[i] = b[i] + b[j] * u_ij
    return b / alpha


def rls_step(state: FisherState, obs: Observation, noise: NoiseModel | None = None):
    """One recursive least-squares update; returns a new :class:`FisherState`.

    With the whitened regressor ``h = H / sigma``::

        K_t    = P_{t-1} h / (1 + h^T P_{t-1} h)
        Xhat_t = Xhat_{t-1} + K_t (y / sigma - h^T Xhat_{t-1})
        P_t    = P_{t-1} - K_t h^T P_{t-1}
    """
    if obs.n != state.n:
        raise DimensionMismatch(f"observation has {obs.n} coefficients, state has {state.n}")
    noise = NoiseModel() if noise is None else noise
    h, y = _whiten(obs, noise)
    h = h.astype(_EXT)
    y = _EXT(y)
    unit = state.ud_unit.copy()
    diag = state.ud_diag.copy()
    K = _ud_update(unit, diag, h)
    Xhat = state.Xhat + K * (y - h @ state.Xhat)
    return replace(
        state, t=state.t + 1,
        U=state.U + np.outer(h, h), V=state.V + h * y,
        Xhat=Xhat, K=K, ud_unit=unit, ud_diag=diag,
    )


def rls_fit(H, y, noise: NoiseModel | None = None, delta=DEFAULT_DELTA):
    """Run :func:`rls_step` over the rows of ``H``; returns the final state."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    state = FisherState.initial(H.shape[1], delta)
    for h_t, y_t in zip(H, np.asarray(y, dtype=float)):
        state = rls_step(state, Observation(y_t, h_t), noise)
    return state
