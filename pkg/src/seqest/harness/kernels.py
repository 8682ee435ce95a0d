"""Compiled inner loops for the Monte-Carlo schemes."""

from __future__ import annotations

import math

import numba
import numpy as np

PIVOT_RTOL = 1e-12


@numba.njit(cache=True)
def trace_inverse(U, L, x):
    """``tr(U^{-1})`` from the lower triangle of ``U``; ``inf`` if not numerically PD.

    ``L`` (``n x n``) receives the Cholesky factor; ``x`` is a length-``n`` work vector.
    """
    n = U.shape[0]
    scale = 0.0
    for i in range(n):
        scale = max(scale, U[i, i])
    if scale <= 0.0:
        return np.inf
    for j in range(n):
        s = U[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if s < PIVOT_RTOL * scale:
            return np.inf
        L[j, j] = math.sqrt(s)
        for i in range(j + 1, n):
            s = U[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / L[j, j]
    # tr(U^{-1}) = |L^{-1}|_F^2, column by column
    total = 0.0
    for c in range(n):
        for i in range(n):
            s = 1.0 if i == c else 0.0
            for k in range(c, i):
                s -= L[i, k] * x[k]
            x[i] = s / L[i, i] if i >= c else 0.0
            if i >= c:
                total += x[i] * x[i]
    return total


@numba.njit(cache=True)
def central_block(H, y, t0, inv_s2, U, V, C):
    """Accumulate ``U`` (lower triangle) and ``V`` step by step; stop once ``tr(U^{-1}) <= C``.

    Returns the stopping step or 0 if the block ends first.
    """
    B, K, n = H.shape
    L = np.zeros((n, n))
    x = np.empty(n)
    for b in range(B):
        for k in range(K):
            w = inv_s2[k]
            for i in range(n):
                hi = H[b, k, i]
                V[i] += hi * y[b, k] * w
                for j in range(i + 1):
                    U[i, j] += hi * H[b, k, j] * w
        # (U^{-1})_ii >= 1/u_ii: skip the factorization while the bound exceeds C
        lb = 0.0
        for i in range(n):
            lb += 1.0 / U[i, i] if U[i, i] > 0.0 else np.inf
        if lb <= C and trace_inverse(U, L, x) <= C:
            return t0 + b
    return 0


@numba.njit(cache=True)
def quadratic_block(H, y, t0, pi, pj, thr, one_sided, inv_s2, phi_u, theta_u, gamma, phi_v,
                    theta_v, C, acc_u, acc_v, Ut, Vt, counts):
    """Level-triggered sampling of every entry of the local information matrices.

    Diagonal entries are sampled one-sided (they only grow), off-diagonal
    entries and the ``V`` entries two-sided.  The fusion center rebuilds the
    full matrix and stops at the first matrix event with ``tr(U~^{-1}) <= C``.
    Returns the stop time, 0.0 to continue, or -1.0 on an overshoot violation.
    """
    B, K, n = H.shape
    m = pi.shape[0]
    cap = K * (m + n)
    ev_t = np.empty(cap)
    ev_s = np.empty(cap, dtype=np.int64)
    ev_x = np.empty(cap, dtype=np.int64)
    ev_k = np.empty(cap, dtype=np.int64)
    ev_b = np.empty(cap, dtype=np.int64)
    L = np.zeros((n, n))
    x = np.empty(n)
    for b in range(B):
        t = t0 + b
        ne = 0
        for k in range(K):
            w = inv_s2[k]
            for e in range(m):
                acc_u[k, e] += H[b, k, pi[e]] * H[b, k, pj[e]] * w
                a = acc_u[k, e]
                mag = a if one_sided[e] else abs(a)
                if mag >= thr[k, e]:
                    q = mag - thr[k, e]
                    if q >= theta_u[k]:
                        return -1.0
                    ev_t[ne] = t + q / phi_u[k]
                    ev_s[ne] = k
                    ev_x[ne] = e
                    ev_k[ne] = 0
                    ev_b[ne] = 1 if a > 0 else -1
                    ne += 1
                    acc_u[k, e] = 0.0
            for i in range(n):
                acc_v[k, i] += H[b, k, i] * y[b, k] * w
                a = acc_v[k, i]
                if abs(a) >= gamma[k, i]:
                    q = abs(a) - gamma[k, i]
                    if q >= theta_v[k]:
                        return -1.0
                    ev_t[ne] = t + q / phi_v[k]
                    ev_s[ne] = k
                    ev_x[ne] = i
                    ev_k[ne] = 1
                    ev_b[ne] = 1 if a > 0 else -1
                    ne += 1
                    acc_v[k, i] = 0.0
        # generation order is (sensor, U before V, entry): a stable sort on time suffices
        order = np.argsort(ev_t[:ne], kind="mergesort")
        for a in range(ne):
            e = order[a]
            k = ev_s[e]
            tau = ev_t[e]
            j = ev_x[e]
            if ev_k[e] == 0:
                q = phi_u[k] * (tau - math.floor(tau))
                Ut[pi[j], pj[j]] += ev_b[e] * (thr[k, j] + q)
                counts[0] += 1
                # (U^{-1})_ii >= 1/u_ii, so the bound screens out most factorizations
                lb = 0.0
                for i in range(n):
                    lb += 1.0 / Ut[i, i]
                if lb <= C and trace_inverse(Ut, L, x) <= C:
                    return tau
            else:
                q = phi_v[k] * (tau - math.floor(tau))
                Vt[j] += ev_b[e] * (gamma[k, j] + q)
                counts[1] += 1
    return 0.0
