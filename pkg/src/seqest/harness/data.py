"""Equicorrelated Gaussian coefficients and observation blocks."""

from __future__ import annotations

import numpy as np

from .._validation import check_int, check_positive
from ..exceptions import InvalidCorrelation


def default_X(n):
    """Fixed true parameter: ``n`` distinct magnitudes spread over ``[0.03, 0.09]``.

    Small relative to unit noise, so ``|X|^2 / sigma^2`` (about 0.02 for
    ``n = 5``) keeps the diagonal approximation of the decentralized scheme
    close to the full-information estimator.
    """
    return np.linspace(0.03, 0.09, n) if n > 1 else np.array([0.06])


class CoefficientModel:
    """Zero-mean, unit-variance Gaussian vectors with pairwise correlation ``r``.

    The symmetric square root of the equicorrelation matrix is computed once;
    it stays valid (and real) down to the PSD limit ``r = -1/(n-1)`` and up to
    ``r = 1``.
    """

    def __init__(self, n, r=0.0):
        self.n = check_int(n, "n")
        r = float(r)
        lo = -1.0 / (self.n - 1) if self.n > 1 else -np.inf
        if not (lo <= r <= 1.0):
            raise InvalidCorrelation(f"r={r} is outside [{lo:.6g}, 1] for n={self.n}")
        self.r = r
        R = np.full((self.n, self.n), r)
        np.fill_diagonal(R, 1.0)
        w, Q = np.linalg.eigh(R)
        self.R = R
        self.factor = (Q * np.sqrt(np.clip(w, 0.0, None))) @ Q.T

    def draw(self, rng, size=()):
        """Coefficient vectors with trailing axis ``n``; ``size`` is the leading shape."""
        size = (size,) if np.isscalar(size) else tuple(size)
        z = rng.standard_normal(size + (self.n,))
        return z @ self.factor if self.r != 0.0 else z

    def __call__(self, rng, size):
        return self.draw(rng, size)


def gen_coefficients(n, r, rng):
    """One coefficient vector ``H`` of length ``n`` with equicorrelation ``r``."""
    return CoefficientModel(n, r).draw(rng)


def observation_blocks(model: CoefficientModel, X, K, rng, sigma2=1.0, first=256, grow=2.0,
                       max_block=1 << 16):
    """Endless iterator of ``(H, y)`` blocks with shapes ``(B, K, n)`` and ``(B, K)``.

    Block lengths start at ``first`` and grow geometrically, so short runs
    draw little data and long runs need few blocks.
    """
    X = np.asarray(X, dtype=float)
    sd = np.sqrt(np.broadcast_to(np.asarray(sigma2, dtype=float), (K,)))
    B = check_int(first, "first")
    check_positive(grow, "grow")
    while True:
        H = model.draw(rng, (B, K))
        y = H @ X + sd * rng.standard_normal((B, K))
        yield H, y
        B = min(int(B * grow), max_block)


def trial_rng(seed, idx, stream=0):
    """Independent generator per trial; ``stream`` separates calibration from evaluation."""
    return np.random.default_rng([int(seed), int(stream), int(idx)])
