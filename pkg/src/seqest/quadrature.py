"""Node/weight rules for expectations over a scalar coefficient ``h``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError


@dataclass(frozen=True)
class Quadrature:
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float).ravel()
        weights = np.asarray(self.weights, dtype=float).ravel()
        if nodes.shape != weights.shape or nodes.size == 0:
            raise ConfigError("nodes and weights must be non-empty and of equal length")
        if np.any(weights < 0) or not np.all(np.isfinite(nodes)):
            raise ConfigError("weights must be non-negative and nodes finite")
        if abs(weights.sum() - 1.0) > 1e-6:
            raise ConfigError(f"weights must sum to 1, got {weights.sum():.8f}")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.nodes.size

    def expect(self, fn):
        return float(np.dot(self.weights, fn(self.nodes)))

    @property
    def is_symmetric(self):
        order = np.argsort(self.nodes)
        return (np.allclose(self.nodes[order], -self.nodes[order][::-1])
                and np.allclose(self.weights[order], self.weights[order][::-1]))


def gaussian_grid(num=41, half_width=4.0, std=1.0):
    """Equispaced nodes on ``[-half_width, half_width] * std`` with normal-density weights.

    The weights are renormalised to sum to one (the truncated tails are
    dropped).
    """
    if num < 1 or half_width <= 0 or std <= 0:
        raise ConfigError("num >= 1, half_width > 0 and std > 0 are required")
    nodes = np.linspace(-half_width, half_width, num) * std
    w = np.exp(-0.5 * (nodes / std) ** 2)
    return Quadrature(nodes, w / w.sum())


def gauss_hermite(num=41, std=1.0):
    """Gauss-Hermite rule for ``N(0, std^2)`` (probabilists' weight)."""
    x, w = np.polynomial.hermite_e.hermegauss(num)
    return Quadrature(x * std, w / w.sum())


def point_mass(value=0.0):
    return Quadrature(np.array([value]), np.array([1.0]))
