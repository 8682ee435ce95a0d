"""Monte-Carlo choice of the fusion-center threshold ``C~``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .._validation import check_positive
from ..exceptions import BracketFailure


@dataclass(frozen=True)
class CtildeCalibration:
    C_tilde: float
    achieved_mse: float
    se: float
    tolerance: float
    evaluations: int
    history: tuple = ()


def calibrate_Ctilde(C, simulate, *, start=None, rtol=1e-3, max_expansions=30,
                     max_bisections=40):
    """Find ``C~`` such that the realized MSE of ``X~`` equals ``C``.

    ``simulate(C_tilde)`` returns per-trial squared errors ``|X~ - X|^2``; it
    should reuse the same random stream on every call so that successive
    evaluations are comparable.  The MSE grows with ``C~``.  The search
    runs in ``log C~``: the bracket is widened by factors of 2 from
    ``start`` (default ``C``) and then bisected until
    ``|MSE - C| <= max(rtol C, 2 SE)``.
    """
    C = check_positive(C, "C")
    history = []

    def evaluate(ct):
        err = np.asarray(simulate(ct), dtype=float)
        mean = float(err.mean())
        se = float(err.std(ddof=1) / math.sqrt(err.size)) if err.size > 1 else float("inf")
        tol = max(rtol * C, 2.0 * se)
        history.append((ct, mean, se))
        return mean, se, tol

    def result(ct, ev):
        return CtildeCalibration(ct, ev[0], ev[1], ev[2], len(history), tuple(history))

    ct = C if start is None else check_positive(start, "start")
    ev = evaluate(ct)
    if abs(ev[0] - C) <= ev[2]:
        return result(ct, ev)
    too_big = ev[0] > C
    lo = hi = ct
    for _ in range(max_expansions):
        nxt = ct / 2.0 if too_big else ct * 2.0
        ev = evaluate(nxt)
        if abs(ev[0] - C) <= ev[2]:
            return result(nxt, ev)
        if (ev[0] > C) != too_big:
            lo, hi = (nxt, ct) if too_big else (ct, nxt)
            break
        ct = nxt
    else:
        raise BracketFailure(f"no C_tilde brackets the target {C:g}")
    # invariant: mse(lo) < C < mse(hi)
    for _ in range(max_bisections):
        mid = math.sqrt(lo * hi)
        ev = evaluate(mid)
        if abs(ev[0] - C) <= ev[2]:
            return result(mid, ev)
        if ev[0] > C:
            hi = mid
        else:
            lo = mid
    raise BracketFailure(f"C_tilde bisection did not reach {C:g} in {max_bisections} steps")
