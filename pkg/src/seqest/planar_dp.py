"""Unconditional stopping for a two-dimensional parameter.

The state is ``(z11, z22, rho)`` with ``z_ii = 1/u_ii`` and
``rho = u12 / sqrt(u11 u22)``.  Stopping costs
``F = lam sigma2 (z11 + z22) / (1 - rho^2)`` (the trace of ``sigma2 U^{-1}``
scaled by ``lam``); continuing costs one sample plus the expected value at the
updated state.  Value iteration runs on a regular 3-D grid with trilinear
interpolation between the eight neighbouring grid points.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted

from ._validation import check_int, check_positive
from .exceptions import BracketFailure, DegenerateCorrelation, NotConverged
from .quadrature import Quadrature, gaussian_grid
from .scalar_dp import default_range

NZ = 61
NR = 21
RHO_EDGE = 1e-9
SURFACE_RTOL = 1e-9
DEFAULT_TOL = 1e-6
MAX_ITERS = 2000
RZ_CAP = 1e4
LAMBDA_BRACKET = (1e-4, 1e4)


def stopping_cost_2d(z11, z22, rho, lam, sigma2=1.0):
    """``lam sigma2 (z11 + z22) / (1 - rho^2)``."""
    if abs(rho) >= 1.0 - RHO_EDGE:
        raise DegenerateCorrelation(f"|rho| = {abs(rho)} leaves the stopping cost unbounded")
    return lam * sigma2 * (z11 + z22) / (1.0 - rho * rho)


def _cost_array(z, rho, lam, sigma2):
    edge = np.abs(rho) >= 1.0 - RHO_EDGE
    with np.errstate(divide="ignore"):
        scale = np.where(edge, 0.0, 1.0 / (1.0 - rho**2))
    F = lam * sigma2 * (z[:, None, None] + z[None, :, None]) * scale[None, None, :]
    F[:, :, edge] = np.inf
    # z11 = z22 = 0 maps to itself; zero variance costs nothing for any rho
    F[0, 0, :] = 0.0
    return F


@dataclass
class Grid3D:
    z: np.ndarray
    rho: np.ndarray
    V: np.ndarray
    F: np.ndarray
    lam: float
    sigma2: float
    converged: bool
    iterations: int = 0
    first_sweep: np.ndarray | None = field(default=None, repr=False)
    max_iterate_decrease: float = 0.0
    quad: Quadrature | None = field(default=None, repr=False)

    @property
    def dz(self):
        return float(self.z[1] - self.z[0])

    @property
    def dr(self):
        return float(self.rho[1] - self.rho[0])

    @property
    def Rz(self):
        return float(self.z[-1])

    @property
    def Nz(self):
        return self.z.size

    @property
    def Nr(self):
        return self.rho.size


def make_grid(lam, sigma2=1.0, *, Nz=NZ, Nr=NR, Rz=None):
    """Empty grid with ``V = 0`` and the stopping costs filled in."""
    lam = check_positive(lam, "lam")
    sigma2 = check_positive(sigma2, "sigma2")
    Nz = check_int(Nz, "Nz", minimum=2)
    Nr = check_int(Nr, "Nr", minimum=3)
    Rz = min(default_range(lam, sigma2), RZ_CAP) if Rz is None else check_positive(Rz, "Rz")
    z = np.linspace(0.0, Rz, Nz)
    rho = np.linspace(-1.0, 1.0, Nr)
    F = _cost_array(z, rho, lam, sigma2)
    return Grid3D(z, rho, np.zeros_like(F), F, lam, sigma2, False)


@numba.njit(cache=True, inline="always")
def _axis(x, step, n):
    # fractional index clamped to the grid; floor/ceil collapse at grid points
    pos = x / step
    if pos < 0.0:
        pos = 0.0
    elif pos > n - 1:
        pos = n - 1.0
    lo = int(math.floor(pos))
    if lo > n - 2:
        lo = n - 2
    return lo, pos - lo


@numba.njit(cache=True)
def _trilinear(V, dz, dr, z11, z22, rho):
    nz = V.shape[0]
    nr = V.shape[2]
    i, a = _axis(z11, dz, nz)
    j, b = _axis(z22, dz, nz)
    k, c = _axis(rho + 1.0, dr, nr)
    out = 0.0
    for di in range(2):
        wi = a if di else 1.0 - a
        if wi == 0.0:
            continue
        for dj in range(2):
            wj = b if dj else 1.0 - b
            if wj == 0.0:
                continue
            for dk in range(2):
                wk = c if dk else 1.0 - c
                if wk == 0.0:
                    continue
                out += wi * wj * wk * V[i + di, j + dj, k + dk]
    return out


@numba.njit(cache=True)
def _sweep(V, F, z, rho, h, w, dz, dr, out, G):
    nz = z.size
    nr = rho.size
    nh = h.size
    # per-axis factors: z' = z s^2, a = s1 s2, b = g1 g2 with s = 1/sqrt(1+z h^2)
    zp = np.empty((nz, nh))
    s = np.empty((nz, nh))
    g = np.empty((nz, nh))
    for i in range(nz):
        for k in range(nh):
            q = 1.0 + z[i] * h[k] * h[k]
            zp[i, k] = z[i] / q
            s[i, k] = 1.0 / math.sqrt(q)
            g[i, k] = h[k] * math.sqrt(z[i]) * s[i, k]
    prof = np.empty(nr)
    acc = np.empty(nr)
    for i1 in range(nz):
        for i2 in range(nz):
            acc[:] = 0.0
            for k1 in range(nh):
                a, fa = _axis(zp[i1, k1], dz, nz)
                for k2 in range(nh):
                    b, fb = _axis(zp[i2, k2], dz, nz)
                    # bilinear in (z11', z22') does not depend on the rho index
                    w00 = (1.0 - fa) * (1.0 - fb)
                    w01 = (1.0 - fa) * fb
                    w10 = fa * (1.0 - fb)
                    w11 = fa * fb
                    for r in range(nr):
                        prof[r] = (w00 * V[a, b, r] + w01 * V[a, b + 1, r]
                                   + w10 * V[a + 1, b, r] + w11 * V[a + 1, b + 1, r])
                    wk = w[k1] * w[k2]
                    ss = s[i1, k1] * s[i2, k2]
                    gg = g[i1, k1] * g[i2, k2]
                    for j in range(nr):
                        c, fc = _axis(rho[j] * ss + gg + 1.0, dr, nr)
                        acc[j] += wk * ((1.0 - fc) * prof[c] + fc * prof[c + 1])
            for j in range(nr):
                G[i1, i2, j] = 1.0 + acc[j]
                out[i1, i2, j] = min(F[i1, i2, j], G[i1, i2, j])


@numba.njit(cache=True)
def _updated_rho_extremes(z, rho, h):
    lo = 0.0
    hi = 0.0
    for i1 in range(z.size):
        for i2 in range(z.size):
            for j in range(rho.size):
                for k1 in range(h.size):
                    for k2 in range(h.size):
                        q1 = 1.0 + z[i1] * h[k1] * h[k1]
                        q2 = 1.0 + z[i2] * h[k2] * h[k2]
                        r = (rho[j] + h[k1] * h[k2] * math.sqrt(z[i1] * z[i2])) / math.sqrt(q1 * q2)
                        lo = min(lo, r)
                        hi = max(hi, r)
    return lo, hi


def updated_rho_range(grid: Grid3D, quad: Quadrature):
    """Smallest and largest ``rho'`` reached from any grid point and node pair."""
    return _updated_rho_extremes(grid.z, grid.rho, quad.nodes)


def trilinear_lookup(grid: Grid3D, z11, z22, rho):
    """Interpolated ``V`` at an off-grid point; the query is clamped into the box."""
    return float(_trilinear(grid.V, grid.dz, grid.dr, float(z11), float(z22), float(rho)))


def continuation_cost(grid: Grid3D, quad: Quadrature | None = None):
    """``1 + E[V(next state)]`` on every grid point for the grid's current ``V``."""
    quad = gaussian_grid() if quad is None else quad
    out = np.empty_like(grid.V)
    G = np.empty_like(grid.V)
    _sweep(grid.V, grid.F, grid.z, grid.rho, quad.nodes, quad.weights, grid.dz, grid.dr,
           out, G)
    return G


def check_lambda(lam):
    lam = check_positive(lam, "lam")
    lo, hi = LAMBDA_BRACKET
    if not lo <= lam <= hi:
        raise BracketFailure(f"lam={lam:g} is outside the supported bracket [{lo:g}, {hi:g}]")
    return lam


def value_iteration_2d(lam, sigma2=1.0, quad: Quadrature | None = None, *, Nz=NZ, Nr=NR,
                       Rz=None, tol=DEFAULT_TOL, max_iters=MAX_ITERS, strict=False):
    """Iterate ``V_m = min(F, 1 + E[V_{m-1}(next state)])`` from ``V_0 = 0``.

    The same quadrature rule is used for ``h1`` and ``h2`` (independent
    coefficients).  Iteration stops when ``||V_m - V_{m-1}||_F <= tol ||V_{m-1}||_F``.
    ``lam`` must lie in ``LAMBDA_BRACKET``, the range the default grid is sized for.
    """
    check_lambda(lam)
    quad = gaussian_grid() if quad is None else quad
    grid = make_grid(lam, sigma2, Nz=Nz, Nr=Nr, Rz=Rz)
    grid.quad = quad
    V = grid.V
    new = np.empty_like(V)
    G = np.empty_like(V)
    worst = 0.0
    for it in range(1, max_iters + 1):
        _sweep(V, grid.F, grid.z, grid.rho, quad.nodes, quad.weights, grid.dz, grid.dr, new, G)
        if it == 1:
            grid.first_sweep = new.copy()
        worst = max(worst, float(np.max(V - new)))
        dif = np.linalg.norm(new - V)
        fro = np.linalg.norm(V)
        V, new = new, V
        if it > 1 and dif <= tol * fro:
            grid.converged = True
            break
    grid.V = V.copy()
    grid.iterations = it
    grid.max_iterate_decrease = worst
    if not grid.converged:
        msg = f"2-D value iteration did not converge in {max_iters} sweeps"
        if strict:
            raise NotConverged(msg)
        warnings.warn(msg, ConvergenceWarning, stacklevel=2)
    return grid


@dataclass
class BoundarySurface:
    indicator: np.ndarray
    z: np.ndarray
    rho: np.ndarray
    lam: float
    transitions: dict = field(default_factory=dict, repr=False)

    @property
    def dz(self):
        return float(self.z[1] - self.z[0])

    @property
    def dr(self):
        return float(self.rho[1] - self.rho[0])

    def slice_at(self, rho):
        k = int(np.argmin(np.abs(self.rho - rho)))
        return self.indicator[:, :, k]

    def to_csv(self, fh=None):
        """Write the transition cells as ``rho,z11,z22`` rows; returns the text."""
        buf = io.StringIO()
        buf.write("rho,z11,z22\n")
        for k, cells in sorted(self.transitions.items()):
            for i, j in cells:
                buf.write(f"{self.rho[k]:.6f},{self.z[i]:.9g},{self.z[j]:.9g}\n")
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def _transition_cells(mask):
    # stop cells with at least one 4-neighbour in the continue region
    pad = np.pad(mask, 1, constant_values=False)
    inner = pad[1:-1, 1:-1]
    edge = inner & ~(pad[:-2, 1:-1] & pad[2:, 1:-1] & pad[1:-1, :-2] & pad[1:-1, 2:])
    # the grid border is not a transition unless a continue cell is adjacent
    n0, n1 = mask.shape
    border = np.zeros_like(mask)
    border[0, :] = border[-1, :] = border[:, 0] = border[:, -1] = True
    interior_only = edge & ~border
    for i, j in zip(*np.nonzero(edge & border)):
        nbrs = [(i + di, j + dj) for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1))
                if 0 <= i + di < n0 and 0 <= j + dj < n1]
        if any(not mask[a, b] for a, b in nbrs):
            interior_only[i, j] = True
    return [(int(i), int(j)) for i, j in zip(*np.nonzero(interior_only))]


def extract_surface(grid: Grid3D):
    """Stop indicator ``|V - F| <= 1e-9 (1 + |F|)`` and transition cells per rho-slice."""
    if not grid.converged:
        raise NotConverged("surface extraction needs a converged grid")
    with np.errstate(invalid="ignore"):
        ind = np.isfinite(grid.F) & (np.abs(grid.V - grid.F) <= SURFACE_RTOL * (1.0 + np.abs(grid.F)))
    transitions = {k: _transition_cells(ind[:, :, k]) for k in range(grid.Nr)}
    return BoundarySurface(ind, grid.z.copy(), grid.rho.copy(), grid.lam, transitions)


def _nearest(surface, z11, z22, rho):
    z11 = np.asarray(z11, dtype=float)
    z22 = np.asarray(z22, dtype=float)
    rho = np.asarray(rho, dtype=float)
    nz = surface.z.size
    with np.errstate(invalid="ignore"):
        i = np.rint(z11 / surface.dz)
        j = np.rint(z22 / surface.dz)
    inside = np.isfinite(i) & np.isfinite(j) & (i <= nz - 1) & (j <= nz - 1)
    i = np.where(inside, i, 0).astype(int)
    j = np.where(inside, j, 0).astype(int)
    k = np.clip(np.rint((np.clip(rho, -1, 1) + 1.0) / surface.dr), 0, surface.rho.size - 1)
    return inside & surface.indicator[i, j, k.astype(int)]


def unconditional_stop_2d(surface: BoundarySurface, z11, z22, rho):
    """Stop iff the nearest grid cell lies in the stopping region.

    Points beyond the grid range (large ``z``) always continue.  Accepts
    scalars or arrays.
    """
    out = _nearest(surface, z11, z22, rho)
    return bool(out) if out.ndim == 0 else out


def _state_from_u(u11, u12, u22):
    with np.errstate(divide="ignore", invalid="ignore"):
        z11 = 1.0 / u11
        z22 = 1.0 / u22
        rho = np.where((u11 > 0) & (u22 > 0), u12 / np.sqrt(u11 * u22), 0.0)
    return z11, z22, rho


def gaussian_pairs(rng, size):
    return rng.standard_normal((size, 2))


def simulate_surface_rule(surface: BoundarySurface, sigma2=1.0, sim=None, trials=10_000,
                          random_state=0, horizon=10**5):
    """Run the surface rule on simulated coefficient paths.

    Returns ``(T, cost)`` per path, with ``cost = sigma2 tr(U_T^{-1})`` computed
    exactly from the accumulated information (not from the grid).
    ``sim(rng, size)`` draws ``size`` coefficient pairs.
    """
    sim = gaussian_pairs if sim is None else sim
    rng = check_random_state(random_state)
    u11 = np.zeros(trials)
    u12 = np.zeros(trials)
    u22 = np.zeros(trials)
    T = np.zeros(trials, dtype=int)
    cost = np.full(trials, np.nan)
    active = np.arange(trials)
    for t in range(1, horizon + 1):
        h = np.asarray(sim(rng, active.size), dtype=float)
        u11[active] += h[:, 0] ** 2
        u12[active] += h[:, 0] * h[:, 1]
        u22[active] += h[:, 1] ** 2
        z11, z22, rho = _state_from_u(u11[active], u12[active], u22[active])
        stop = _nearest(surface, z11, z22, rho)
        det = u11[active] * u22[active] - u12[active] ** 2
        stop &= det > 1e-12 * np.maximum(u11[active] * u22[active], 1e-300)
        done = active[stop]
        T[done] = t
        cost[done] = sigma2 * (u11[done] + u22[done]) / det[stop]
        active = active[~stop]
        if active.size == 0:
            break
    if active.size:
        raise BracketFailure(f"{active.size} paths did not stop within {horizon} samples")
    return T, cost


@dataclass(frozen=True)
class LambdaCalibration:
    lam: float
    surface: BoundarySurface
    grid: Grid3D
    achieved_mse: float
    se: float
    tolerance: float
    mean_stopping_time: float
    evaluations: int


def calibrate_lambda(C, sim=None, sigma2=1.0, *, trials=10_000, quad=None, random_state=0,
                     rtol=1e-3, Nz=NZ, Nr=NR, max_bisections=40, lam0=None):
    """Search ``lam`` so that the surface rule attains ``E[sigma2 tr(U_T^{-1})] = C``.

    The achieved cost falls as ``lam`` grows.  The search is done in
    ``log(lam)`` inside ``[1e-4, 1e4]``: starting from ``lam0`` the bracket is
    widened by factors of 4, then bisected.  Every evaluation re-solves the
    value iteration and reuses the same random stream.
    """
    C = check_positive(C, "C")
    sigma2 = check_positive(sigma2, "sigma2")
    lam_min, lam_max = LAMBDA_BRACKET
    lam = float(np.clip(2.0 / (sigma2 * C) if lam0 is None else lam0, lam_min, lam_max))
    cache = {}

    def evaluate(lam):
        if lam not in cache:
            grid = value_iteration_2d(lam, sigma2, quad, Nz=Nz, Nr=Nr, strict=True)
            surface = extract_surface(grid)
            T, cost = simulate_surface_rule(surface, sigma2, sim, trials, random_state)
            mean = float(cost.mean())
            se = float(cost.std(ddof=1) / np.sqrt(trials))
            cache[lam] = (mean, se, max(rtol * C, 2.0 * se), float(T.mean()), surface, grid)
        return cache[lam]

    def done(lam, ev):
        mean, se, tol, mean_T, surface, grid = ev
        return LambdaCalibration(lam, surface, grid, mean, se, tol, mean_T, len(cache))

    ev = evaluate(lam)
    if abs(ev[0] - C) <= ev[2]:
        return done(lam, ev)
    # cost too high -> raise lam
    going_up = ev[0] > C
    lo = hi = lam
    while True:
        nxt = min(lam * 4.0, lam_max) if going_up else max(lam / 4.0, lam_min)
        if nxt == lam:
            raise BracketFailure(f"target {C:g} not bracketed inside lam in {LAMBDA_BRACKET}")
        ev = evaluate(nxt)
        if abs(ev[0] - C) <= ev[2]:
            return done(nxt, ev)
        lam = nxt
        if (ev[0] > C) != going_up:
            lo, hi = (lo, nxt) if going_up else (nxt, hi)
            break
        lo = hi = nxt
    # invariant: cost(lo) > C > cost(hi)
    for _ in range(max_bisections):
        mid = math.sqrt(lo * hi)
        ev = evaluate(mid)
        if abs(ev[0] - C) <= ev[2]:
            return done(mid, ev)
        if ev[0] > C:
            lo = mid
        else:
            hi = mid
    raise BracketFailure(f"lam bisection did not reach {C:g} within {max_bisections} steps; "
                         "the grid rule may jump across the target")


class PlanarStoppingRule(BaseEstimator):
    """Two-parameter unconditional stopping rule calibrated to a target MSE.

    ``fit(X)`` optionally takes training coefficient pairs of shape
    ``(n_samples, 2)`` to bootstrap from; ``None`` means i.i.d. ``N(0, 1)``.
    The value iteration always uses the Gaussian quadrature rule.

    Attributes
    ----------
    lambda_ : float
    surface_ : BoundarySurface
    calibration_ : LambdaCalibration
    """

    def __init__(self, target=0.5, noise_var=1.0, trials=10_000, grid_size=NZ,
                 rho_size=NR, random_state=0):
        self.target = target
        self.noise_var = noise_var
        self.trials = trials
        self.grid_size = grid_size
        self.rho_size = rho_size
        self.random_state = random_state

    def fit(self, X=None, y=None):
        sim = None
        if X is not None:
            pool = np.asarray(X, dtype=float)
            if pool.ndim != 2 or pool.shape[1] != 2:
                raise ValueError(f"X must have shape (n_samples, 2), got {pool.shape}")

            def sim(rng, size):
                return pool[rng.integers(0, pool.shape[0], size)]
        self.calibration_ = calibrate_lambda(
            self.target, sim, self.noise_var, trials=self.trials, Nz=self.grid_size,
            Nr=self.rho_size, random_state=self.random_state)
        self.lambda_ = self.calibration_.lam
        self.surface_ = self.calibration_.surface
        return self

    def predict(self, U):
        """Stop decisions for information matrices ``U`` of shape ``(m, 2, 2)`` or ``(2, 2)``."""
        check_is_fitted(self, "surface_")
        U = np.asarray(U, dtype=float)
        single = U.ndim == 2
        U = U.reshape(-1, 2, 2)
        z11, z22, rho = _state_from_u(U[:, 0, 0], U[:, 0, 1], U[:, 1, 1])
        out = _nearest(self.surface_, z11, z22, rho)
        return bool(out[0]) if single else out
