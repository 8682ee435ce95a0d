"""Compiled twin of :func:`run_decentralized` for Monte-Carlo work.

The kernel performs the same floating-point operations in the same order as
the reference simulator, so stopping times agree exactly; it only skips the
per-event Python objects.  Data arrive in blocks produced by the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from ..exceptions import DimensionMismatch, OvershootBoundViolated
from .fusion import DEFAULT_EPSILON
from .protocol import SensorConfig

_CONTINUE = 0.0
_VIOLATION = -1.0


@numba.njit(cache=True, inline="always")
def _neumaier(tr, x):
    total = tr[0]
    t = total + x
    if abs(total) >= abs(x):
        tr[1] += (total - t) + x
    else:
        tr[1] += (x - t) + total
    tr[0] = t


@numba.njit(cache=True)
def _lts_block(H, y, t0, Delta, gamma, sig2, phi_d, phi_v, theta_d, theta_v, kappa, C_tilde,
               chi, psi, d, v, tr, counts):
    B, K, n = H.shape
    cap = 2 * K * n
    ev_t = np.empty(cap)
    ev_s = np.empty(cap, dtype=np.int64)
    ev_i = np.empty(cap, dtype=np.int64)
    ev_k = np.empty(cap, dtype=np.int64)
    ev_b = np.empty(cap, dtype=np.int64)
    for b in range(B):
        t = t0 + b
        ne = 0
        for k in range(K):
            for i in range(n):
                h = H[b, k, i]
                chi[k, i] = chi[k, i] + h * h / sig2[k]
                psi[k, i] = psi[k, i] + h * y[b, k] / sig2[k]
                if chi[k, i] >= Delta[k, i]:
                    q = chi[k, i] - Delta[k, i]
                    if q >= theta_d[k]:
                        return _VIOLATION
                    ev_t[ne] = t + q / phi_d[k]
                    ev_s[ne] = k
                    ev_i[ne] = i
                    ev_k[ne] = 0
                    ev_b[ne] = 0
                    ne += 1
                    chi[k, i] = 0.0
                if abs(psi[k, i]) >= gamma[k, i]:
                    eta = abs(psi[k, i]) - gamma[k, i]
                    if eta >= theta_v[k]:
                        return _VIOLATION
                    ev_t[ne] = t + eta / phi_v[k]
                    ev_s[ne] = k
                    ev_i[ne] = i
                    ev_k[ne] = 1
                    ev_b[ne] = 1 if psi[k, i] > 0 else -1
                    ne += 1
                    psi[k, i] = 0.0
        # events were generated in (sensor, dim, D before V) order, so a stable
        # sort on time alone yields the reference delivery order
        order = np.argsort(ev_t[:ne], kind="mergesort")
        for a in range(ne):
            e = order[a]
            k = ev_s[e]
            i = ev_i[e]
            tau = ev_t[e]
            if ev_k[e] == 0:
                q = phi_d[k] * (tau - math.floor(tau))
                d_old = d[i]
                d_new = d_old + Delta[k, i] + q
                _neumaier(tr, -(kappa[i] / d_old))
                _neumaier(tr, kappa[i] / d_new)
                d[i] = d_new
                counts[0] += 1
                if tr[0] + tr[1] <= C_tilde:
                    return tau
            else:
                eta = phi_v[k] * (tau - math.floor(tau))
                v[i] += ev_b[e] * (gamma[k, i] + eta)
                counts[1] += 1
    return _CONTINUE


@dataclass
class FastResult:
    T_tilde: float
    X_tilde: np.ndarray
    d_tilde: np.ndarray
    v_tilde: np.ndarray
    trace: float
    d_events: int
    v_events: int
    hit_horizon: bool
    steps: int


class SensorArrays:
    """Sensor configurations stacked into arrays for the compiled kernel."""

    def __init__(self, sensors: Sequence[SensorConfig]):
        sensors = list(sensors)
        n = sensors[0].n
        if any(s.n != n for s in sensors):
            raise DimensionMismatch("all sensors must share the parameter dimension")
        self.K = len(sensors)
        self.n = n
        self.Delta = np.array([s.Delta for s in sensors])
        self.gamma = np.array([s.gamma for s in sensors])
        self.sigma2 = np.array([s.sigma2 for s in sensors])
        self.phi_d = np.array([s.phi_d for s in sensors])
        self.phi_v = np.array([s.phi_v for s in sensors])
        self.theta_d = np.array([s.theta_d for s in sensors])
        self.theta_v = np.array([s.theta_v for s in sensors])


def run_decentralized_blocks(sensors, Rinv, C_tilde, blocks, epsilon=DEFAULT_EPSILON,
                             horizon=10**6):
    """Compiled simulation fed by ``blocks``, an iterator of ``(H, y)`` arrays.

    Each block has ``H`` of shape ``(B, K, n)`` and ``y`` of shape ``(B, K)``.
    """
    arr = sensors if isinstance(sensors, SensorArrays) else SensorArrays(sensors)
    Rinv = np.ascontiguousarray(np.atleast_2d(np.asarray(Rinv, dtype=float)))
    kappa = np.diag(Rinv).copy()
    n = arr.n
    chi = np.zeros((arr.K, n))
    psi = np.zeros((arr.K, n))
    d = np.full(n, float(epsilon))
    v = np.zeros(n)
    tr = np.zeros(2)
    for k in kappa:
        # same compensated start as FusionState.initial
        x = k / epsilon
        t = tr[0] + x
        tr[1] += ((tr[0] - t) + x) if abs(tr[0]) >= abs(x) else ((x - t) + tr[0])
        tr[0] = t
    counts = np.zeros(2, dtype=np.int64)
    t0 = 1
    status = _CONTINUE
    for H, y in blocks:
        H = np.ascontiguousarray(H, dtype=float)
        y = np.ascontiguousarray(y, dtype=float)
        if H.shape[0] > horizon - t0 + 1:
            H, y = H[: horizon - t0 + 1], y[: horizon - t0 + 1]
        status = _lts_block(H, y, t0, arr.Delta, arr.gamma, arr.sigma2, arr.phi_d, arr.phi_v,
                            arr.theta_d, arr.theta_v, kappa, float(C_tilde), chi, psi, d, v, tr,
                            counts)
        if status == _VIOLATION:
            raise OvershootBoundViolated("an overshoot reached its configured bound")
        if status != _CONTINUE:
            break
        t0 += H.shape[0]
        if t0 > horizon:
            break
    s = 1.0 / np.sqrt(d)
    X = (s[:, None] * Rinv * s[None, :]) @ v
    hit = status == _CONTINUE
    T = float(t0 - 1) if hit else float(status)
    return FastResult(T, X, d, v, float(tr[0] + tr[1]), int(counts[0]), int(counts[1]), hit,
                      int(math.floor(T)))
