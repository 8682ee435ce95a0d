"""Sensor side of the level-triggered sampling protocol.

Every sensor runs two samplers per dimension.  The d-sampler accumulates
``chi += h_i^2 / sigma^2`` and fires when ``chi >= Delta_i``; the v-sampler
accumulates ``psi += h_i y / sigma^2`` and fires when ``|psi| >= gamma_i``.
A firing sends one bit, delayed inside the current unit time slot by
``overshoot / phi`` so that the fusion center can read the overshoot back
from the arrival time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .._validation import check_positive, check_vector
from ..exceptions import ConfigError, DimensionMismatch, OvershootBoundViolated

D_EVENT = "D"
V_EVENT = "V"


def encode_overshoot(t, overshoot, phi):
    """Transmit time ``t + overshoot / phi`` for a sample taken at integer time ``t``."""
    return t + overshoot / phi


def decode_overshoot(transmit_time, phi):
    """Overshoot ``phi * frac(transmit_time)``."""
    frac = transmit_time - math.floor(transmit_time)
    return phi * frac


@dataclass(frozen=True)
class SensorConfig:
    """Per-sensor sampling thresholds and delay-encoding slopes."""

    Delta: np.ndarray
    gamma: np.ndarray
    sigma2: float = 1.0
    phi_d: float = 2.0
    phi_v: float = 2.0
    theta_d: float = 1.0
    theta_v: float = 1.0

    def __post_init__(self):
        Delta = check_vector(self.Delta, "Delta")
        gamma = check_vector(self.gamma, "gamma", length=Delta.shape[0])
        if np.any(Delta <= 0) or np.any(gamma <= 0):
            raise ConfigError("sampling thresholds must be positive")
        for name in ("sigma2", "phi_d", "phi_v", "theta_d", "theta_v"):
            object.__setattr__(self, name, check_positive(getattr(self, name), name))
        if not (self.phi_d > self.theta_d and self.phi_v > self.theta_v):
            raise ConfigError("encoding slopes must exceed the overshoot bounds "
                              f"(phi_d={self.phi_d}, theta_d={self.theta_d}, "
                              f"phi_v={self.phi_v}, theta_v={self.theta_v})")
        object.__setattr__(self, "Delta", Delta)
        object.__setattr__(self, "gamma", gamma)

    @property
    def n(self):
        return self.Delta.shape[0]


@dataclass(frozen=True)
class SensorState:
    """Unreported accumulations and sample counters, one entry per dimension."""

    chi: np.ndarray
    psi: np.ndarray
    m: np.ndarray
    ell: np.ndarray

    @classmethod
    def initial(cls, n):
        return cls(np.zeros(n), np.zeros(n), np.zeros(n, dtype=int), np.zeros(n, dtype=int))


@dataclass(frozen=True, order=True)
class ChannelEvent:
    """One transmitted bit.  ``sign`` is ``+1/-1`` for V-events and ``0`` for D-events.

    Events sort by arrival time, then sensor, then dimension, then kind (D before V).
    """

    transmit_time: float
    sensor: int
    dim: int
    kind: str
    sign: int = 0

    def __post_init__(self):
        if self.kind not in (D_EVENT, V_EVENT):
            raise ConfigError(f"unknown event kind {self.kind!r}")
        if (self.kind == V_EVENT) != (self.sign in (-1, 1)):
            raise ConfigError("V-events carry a sign of +/-1 and D-events carry none")

    @property
    def slot(self):
        return int(math.floor(self.transmit_time))

    def to_line(self):
        sign = "" if self.kind == D_EVENT else str(self.sign)
        return f"{self.transmit_time:.9f},{self.kind},{self.sensor},{self.dim},{sign}"

    @classmethod
    def from_line(cls, line):
        t, kind, sensor, dim, sign = line.strip().split(",")
        return cls(float(t), int(sensor), int(dim), kind, int(sign) if sign else 0)


def sensor_step(state: SensorState, cfg: SensorConfig, H, y, t, sensor=0):
    """Advance one sensor by one time step.

    Returns the new state and the list of events triggered at integer time
    ``t``.  Raises :class:`OvershootBoundViolated` if an overshoot reaches the
    configured bound, since the delay encoding would then wrap around.
    """
    H = check_vector(H, "H")
    if H.shape[0] != cfg.n:
        raise DimensionMismatch(f"H has {H.shape[0]} entries, sensor expects {cfg.n}")
    chi = state.chi + H * H / cfg.sigma2
    psi = state.psi + H * y / cfg.sigma2
    m, ell = state.m.copy(), state.ell.copy()
    events = []
    for i in range(cfg.n):
        if chi[i] >= cfg.Delta[i]:
            q = chi[i] - cfg.Delta[i]
            if q >= cfg.theta_d:
                raise OvershootBoundViolated(
                    f"d-overshoot {q:.4g} >= theta_d={cfg.theta_d} (sensor {sensor}, dim {i}, t={t})")
            events.append(ChannelEvent(encode_overshoot(t, q, cfg.phi_d), sensor, i, D_EVENT))
            m[i] += 1
            chi[i] = 0.0
        if abs(psi[i]) >= cfg.gamma[i]:
            eta = abs(psi[i]) - cfg.gamma[i]
            if eta >= cfg.theta_v:
                raise OvershootBoundViolated(
                    f"v-overshoot {eta:.4g} >= theta_v={cfg.theta_v} (sensor {sensor}, dim {i}, t={t})")
            events.append(ChannelEvent(encode_overshoot(t, eta, cfg.phi_v), sensor, i, V_EVENT,
                                       1 if psi[i] > 0 else -1))
            ell[i] += 1
            psi[i] = 0.0
    return replace(state, chi=chi, psi=psi, m=m, ell=ell), events
