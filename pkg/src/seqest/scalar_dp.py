"""Unconditional stopping for a scalar parameter.

In the variable ``z = 1/u`` (inverse accumulated information) the optimal
cost satisfies::

    V(z) = min{ F(z), G(z) },   F(z) = lam * sigma2 * z,
    G(z) = 1 + E[ V(z / (1 + z h^2)) ]

``V`` is obtained by value iteration from ``V_0 = 0`` on a uniform grid.  The
optimal rule stops as soon as ``z_t <= C''``, i.e. ``u_t >= 1/C''``; the
threshold is tuned by Monte-Carlo bisection so the unconditional variance
``E[sigma2 / u_T]`` equals the target.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted, column_or_1d

from ._validation import check_int, check_positive
from .exceptions import BracketFailure, NoThreshold, NotConverged
from .quadrature import Quadrature, gaussian_grid

DEFAULT_POINTS = 2001
DEFAULT_TOL = 1e-6
MAX_ITERS = 20000


@dataclass
class ValueTable1D:
    z_grid: np.ndarray
    V: np.ndarray
    F: np.ndarray
    G: np.ndarray
    lam: float
    sigma2: float
    iterations: int
    converged: bool
    quad: Quadrature = field(repr=False)
    first_iterate: np.ndarray = field(repr=False)
    max_iterate_decrease: float = 0.0

    @property
    def dz(self):
        return float(self.z_grid[1] - self.z_grid[0])

    @property
    def stop_mask(self):
        return self.F <= self.G


def default_range(lam, sigma2):
    """Grid range ``10 / min(lam sigma2, sqrt(lam sigma2))``.

    The crossing sits near ``1/(lam sigma2)`` for small ``lam`` and near
    ``1/sqrt(lam sigma2)`` for large ``lam`` (one more sample lowers ``F`` by
    about ``lam sigma2 z^2``); both stay well inside the grid.
    """
    s = lam * sigma2
    return 10.0 / min(s, np.sqrt(s))


def _continuation(V, z, quad):
    # z / (1 + z h^2) <= z, so only the right edge can clamp
    with np.errstate(divide="ignore", invalid="ignore"):
        args = z[:, None] / (1.0 + z[:, None] * quad.nodes[None, :] ** 2)
    vals = np.interp(args.ravel(), z, V).reshape(args.shape)
    return 1.0 + vals @ quad.weights


def value_iteration_scalar(lam, sigma2=1.0, quad=None, *, z_max=None,
                           num_points=DEFAULT_POINTS, tol=DEFAULT_TOL,
                           max_iters=MAX_ITERS, strict=False):
    """Solve the scalar Bellman equation on ``[0, z_max]``.

    Iterates ``V_m = min(F, 1 + E[V_{m-1}(z/(1+z h^2))])`` from ``V_0 = 0``;
    off-grid values come from linear interpolation.  Stops when the sup-norm
    change drops below ``tol * ||V||_F``.  If ``max_iters`` is reached the
    table is returned with ``converged=False`` (or :class:`NotConverged` is
    raised when ``strict``).
    """
    lam = check_positive(lam, "lam")
    sigma2 = check_positive(sigma2, "sigma2")
    quad = gaussian_grid() if quad is None else quad
    z_max = default_range(lam, sigma2) if z_max is None else check_positive(z_max, "z_max")
    num_points = check_int(num_points, "num_points", minimum=3)

    z = np.linspace(0.0, z_max, num_points)
    F = lam * sigma2 * z
    V = np.zeros_like(z)
    first = None
    worst_decrease = 0.0
    converged = False
    G = np.ones_like(z)
    for it in range(1, max_iters + 1):
        G = _continuation(V, z, quad)
        V_new = np.minimum(F, G)
        worst_decrease = max(worst_decrease, float(np.max(V - V_new)))
        change = float(np.max(np.abs(V_new - V)))
        V = V_new
        if first is None:
            first = V.copy()
        if change < tol * np.linalg.norm(V):
            converged = True
            break
    table = ValueTable1D(z, V, F, G, lam, sigma2, it, converged, quad, first,
                         worst_decrease)
    if not converged:
        msg = f"scalar value iteration did not converge in {max_iters} sweeps"
        if strict:
            raise NotConverged(msg)
        warnings.warn(msg, ConvergenceWarning, stacklevel=2)
    return table


def extract_threshold(table: ValueTable1D):
    """Return ``C''``: the right end of the stopping interval ``{F <= G}``.

    The crossing is refined by linear interpolation of ``G - F`` between the
    bracketing grid points.
    """
    if not table.converged:
        raise NotConverged("threshold extraction needs a converged table")
    stop = table.stop_mask
    if stop.all():
        raise NoThreshold("F <= G on the whole grid; increase z_max")
    if not stop.any():
        raise NoThreshold("F > G on the whole grid")
    k = int(np.argmin(stop)) - 1
    if k < 0:
        raise NoThreshold("stopping set does not contain the origin")
    gap_k = table.G[k] - table.F[k]
    gap_next = table.G[k + 1] - table.F[k + 1]
    frac = gap_k / (gap_k - gap_next)
    return float(table.z_grid[k] + frac * table.dz)


@dataclass(frozen=True)
class ValuePropertyReport:
    max_negative_first_diff: float
    max_positive_second_diff: float
    bound_c: float | None
    bound_excess: float | None
    max_iterate_decrease: float
    prefix_interval: bool
    first_iterate_error: float

    MONOTONE_TOL = 1e-10
    CONCAVE_TOL = 1e-8
    ITERATE_TOL = 1e-12

    @property
    def no_bound(self):
        return self.bound_c is None

    @property
    def monotone(self):
        return self.max_negative_first_diff <= self.MONOTONE_TOL

    @property
    def concave(self):
        return self.max_positive_second_diff <= self.CONCAVE_TOL

    @property
    def bounded(self):
        return self.bound_c is not None and self.bound_excess <= self.ITERATE_TOL

    @property
    def iterates_monotone(self):
        return self.max_iterate_decrease <= self.ITERATE_TOL

    @property
    def passed(self):
        return (self.monotone and self.concave and self.bounded
                and self.iterates_monotone and self.prefix_interval)


def bound_constant(lam, sigma2, quad: Quadrature):
    """Smallest ``c`` with ``E[(c - lam sigma2 / h^2)^+] > 1``, or ``None``.

    The expectation is piecewise linear and non-decreasing in ``c``, so the
    root is located exactly between consecutive breakpoints; the returned
    value sits ``1e-9`` (relative) above it.
    """
    with np.errstate(divide="ignore"):
        a = lam * sigma2 / quad.nodes**2
    finite = np.isfinite(a) & (quad.weights > 0)
    if not finite.any():
        return None
    a, w = a[finite], quad.weights[finite]
    order = np.argsort(a)
    a, w = a[order], w[order]
    cum_w = np.cumsum(w)
    cum_wa = np.cumsum(w * a)
    for j in range(a.size):
        # on [a_j, a_{j+1}): g(c) = c * W_j - S_j
        upper = a[j + 1] if j + 1 < a.size else np.inf
        c = (1.0 + cum_wa[j]) / cum_w[j]
        if c < upper:
            return float(c * (1.0 + 1e-9))
    return None


def check_value_properties(table: ValueTable1D):
    """Monotonicity, concavity, boundedness and stop-set shape of a converged table."""
    V = table.V
    first = np.diff(V)
    second = np.diff(V, 2)
    c = bound_constant(table.lam, table.sigma2, table.quad)
    excess = None
    if c is not None:
        excess = float(np.max(V - np.minimum(table.F, c)))
    stop = table.stop_mask
    k = int(np.argmin(stop)) if not stop.all() else stop.size
    prefix = bool(stop[:k].all() and not stop[k:].any())
    v1 = np.minimum(table.lam * table.sigma2 * table.z_grid, 1.0)
    return ValuePropertyReport(
        max_negative_first_diff=float(max(0.0, -first.min())),
        max_positive_second_diff=float(max(0.0, second.max())) if second.size else 0.0,
        bound_c=c,
        bound_excess=excess,
        max_iterate_decrease=table.max_iterate_decrease,
        prefix_interval=prefix,
        first_iterate_error=float(np.max(np.abs(table.first_iterate - v1))),
    )


# --- Monte-Carlo calibration ------------------------------------------------

def gaussian_coefficients(rng, size):
    return rng.standard_normal(size)


@dataclass(frozen=True)
class CalibrationResult:
    threshold: float
    achieved_mse: float
    trials: int
    tolerance: float
    se: float
    mean_stopping_time: float
    evaluations: int


class _PathBank:
    """Cumulative information paths ``u_t`` shared by every bisection step."""

    def __init__(self, sim, trials, rng, u_needed, max_steps, block=64):
        self.sim = sim
        self.rng = rng
        h = sim(rng, (trials, block))
        self.u = np.cumsum(np.asarray(h, dtype=float) ** 2, axis=1)
        while self.u[:, -1].min() < u_needed:
            if self.u.shape[1] >= max_steps:
                raise BracketFailure(
                    f"paths did not accumulate information {u_needed:g} in {max_steps} steps")
            h = np.asarray(sim(rng, (trials, block)), dtype=float)
            more = self.u[:, -1:] + np.cumsum(h**2, axis=1)
            self.u = np.hstack([self.u, more])

    def stop(self, threshold):
        """Return ``(T, u_T)`` for the rule ``u_t >= 1/threshold``."""
        idx = (self.u < 1.0 / threshold).sum(axis=1)
        idx = np.minimum(idx, self.u.shape[1] - 1)
        return idx + 1, self.u[np.arange(self.u.shape[0]), idx]


def simulate_threshold_rule(threshold, sigma2=1.0, sim=None, trials=100_000,
                            random_state=None, max_steps=10**6):
    """Stopping times and variances ``sigma2/u_T`` of the rule ``u_t >= 1/threshold``."""
    sim = gaussian_coefficients if sim is None else sim
    rng = check_random_state(random_state)
    bank = _PathBank(sim, trials, rng, 1.0 / threshold, max_steps)
    T, u_T = bank.stop(threshold)
    return T, sigma2 / u_T


def calibrate_threshold(C, sim=None, trials=100_000, sigma2=1.0, *, random_state=0,
                        rtol=1e-3, max_doublings=60, max_steps=10**6):
    """Bisection for ``C''`` such that ``E[sigma2 / u_T] = C``.

    ``sim(rng, shape)`` draws i.i.d. coefficients.  All evaluations reuse one
    bank of simulated paths, so the estimated variance is an exactly monotone
    function of the threshold.  The search stops once
    ``|mean - C| <= max(rtol * C, 2 * standard error)``.
    """
    C = check_positive(C, "C")
    sigma2 = check_positive(sigma2, "sigma2")
    trials = check_int(trials, "trials", minimum=2)
    sim = gaussian_coefficients if sim is None else sim
    rng = check_random_state(random_state)

    lo = C / sigma2  # the conditional threshold never overshoots the target
    bank = _PathBank(sim, trials, rng, 1.0 / lo, max_steps)
    evaluations = 0

    def evaluate(c2):
        nonlocal evaluations
        evaluations += 1
        T, u_T = bank.stop(c2)
        var = sigma2 / u_T
        mean = float(var.mean())
        se = float(var.std(ddof=1) / np.sqrt(trials))
        tol = max(rtol * C, 2.0 * se)
        return mean, se, tol, float(T.mean())

    def result(c2, ev):
        mean, se, tol, mean_T = ev
        return CalibrationResult(c2, mean, trials, tol, se, mean_T, evaluations)

    ev = evaluate(lo)
    if abs(ev[0] - C) <= ev[2]:
        return result(lo, ev)
    hi = 2.0 * lo
    for _ in range(max_doublings):
        ev = evaluate(hi)
        if abs(ev[0] - C) <= ev[2]:
            return result(hi, ev)
        if ev[0] > C:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise BracketFailure(f"no threshold gives variance >= {C:g} after "
                             f"{max_doublings} doublings")
    while hi - lo > 1e-12 * hi:
        mid = 0.5 * (lo + hi)
        ev = evaluate(mid)
        if abs(ev[0] - C) <= ev[2]:
            return result(mid, ev)
        if ev[0] > C:
            hi = mid
        else:
            lo = mid
    raise BracketFailure(
        f"variance jumps across {C:g} at threshold {hi:.6g}; a deterministic "
        "threshold rule cannot attain this target")


class UnconditionalScalarRule(BaseEstimator):
    """Threshold rule ``u_t >= 1/C''`` calibrated to an unconditional variance.

    ``fit`` takes training draws of the scalar coefficient ``h``; paths are
    bootstrapped from them.  With ``X=None`` coefficients are ``N(0, 1)``.

    Attributes
    ----------
    threshold_ : float
        ``C''`` in ``z = 1/u`` units.
    calibration_ : CalibrationResult
    """

    def __init__(self, target=0.1, noise_var=1.0, trials=100_000, random_state=0):
        self.target = target
        self.noise_var = noise_var
        self.trials = trials
        self.random_state = random_state

    def fit(self, X=None, y=None):
        if X is None:
            sim = gaussian_coefficients
        else:
            pool = column_or_1d(np.asarray(X, dtype=float).reshape(-1))

            def sim(rng, size):
                return rng.choice(pool, size=size, replace=True)
        self.calibration_ = calibrate_threshold(
            self.target, sim, self.trials, self.noise_var, random_state=self.random_state)
        self.threshold_ = self.calibration_.threshold
        return self

    def decision_function(self, u):
        """Positive where the accumulated information ``u`` warrants stopping."""
        check_is_fitted(self, "threshold_")
        return np.asarray(u, dtype=float) - 1.0 / self.threshold_

    def predict(self, u):
        return self.decision_function(u) >= 0

    def stopping_time(self, h_path):
        """First index (1-based) at which the path's information crosses; ``None`` if never."""
        hit = self.predict(np.cumsum(np.asarray(h_path, dtype=float) ** 2))
        return int(np.argmax(hit)) + 1 if hit.any() else None
