"""Fusion-center side: recover ``d~`` and ``v~`` from bits and track the stopping statistic.

The FC approximates ``U ~ D^{1/2} R D^{1/2}`` from the recovered diagonal
``D~`` and the known correlation matrix ``R``, so the test statistic is
``Tr(U~^{-1}) = sum_i kappa_i / d~_i`` with ``kappa = diag(R^{-1})``.  The
statistic is updated recursively on each D-event.

The recursion is carried as a compensated (Neumaier) sum of the terms
``+kappa_i / d_new`` and ``-kappa_i / d_old``.  Each subtracted term is the
exact float that was added earlier, so the compensated total tracks the
direct sum ``sum_i kappa_i / d~_i`` to a few ulps even after the statistic
has fallen by many orders of magnitude from ``sum_i kappa_i / epsilon``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .._validation import check_positive
from ..exceptions import ConfigError
from .protocol import D_EVENT, V_EVENT, ChannelEvent, SensorConfig, decode_overshoot

DEFAULT_EPSILON = 1e-4


def _neumaier(total, comp, x):
    t = total + x
    if abs(total) >= abs(x):
        comp += (total - t) + x
    else:
        comp += (x - t) + total
    return t, comp


def trace_decrement(kappa_i, increment, d_old):
    """Drop of ``Tr(U~^{-1})`` when ``d~_i`` grows from ``d_old`` by ``increment``."""
    return kappa_i * increment / (d_old * (d_old + increment))


@dataclass(frozen=True)
class FusionState:
    d_tilde: np.ndarray
    v_tilde: np.ndarray
    trace_sum: float
    trace_comp: float
    kappa: np.ndarray
    Rinv: np.ndarray
    C_tilde: float
    epsilon: float = DEFAULT_EPSILON
    d_events: int = 0
    v_events: int = 0
    time: float = 0.0

    @classmethod
    def initial(cls, Rinv, C_tilde, epsilon=DEFAULT_EPSILON):
        Rinv = np.atleast_2d(np.asarray(Rinv, dtype=float))
        kappa = np.diag(Rinv).copy()
        epsilon = check_positive(epsilon, "epsilon")
        n = kappa.shape[0]
        total, comp = 0.0, 0.0
        for k in kappa:
            total, comp = _neumaier(total, comp, k / epsilon)
        return cls(np.full(n, epsilon), np.zeros(n), total, comp, kappa, Rinv,
                   check_positive(C_tilde, "C_tilde"), epsilon)

    @property
    def n(self):
        return self.kappa.shape[0]

    @property
    def trace(self):
        """Recursively maintained ``Tr(U~^{-1})``."""
        return self.trace_sum + self.trace_comp

    def direct_trace(self):
        return float(np.sum(self.kappa / self.d_tilde))

    @property
    def stopped(self):
        return self.trace <= self.C_tilde

    def covariance(self):
        """``U~^{-1} = D~^{-1/2} R^{-1} D~^{-1/2}``."""
        s = 1.0 / np.sqrt(self.d_tilde)
        return s[:, None] * self.Rinv * s[None, :]

    def estimate(self):
        return self.covariance() @ self.v_tilde

    def snapshot(self, fh=None):
        """``dim,d_tilde,v_tilde`` rows."""
        buf = io.StringIO()
        buf.write("dim,d_tilde,v_tilde\n")
        for i in range(self.n):
            buf.write(f"{i},{self.d_tilde[i]!r},{self.v_tilde[i]!r}\n")
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def _sensor(sensors, k):
    if isinstance(sensors, SensorConfig):
        return sensors
    return sensors[k]


def fc_on_d_bit(fs: FusionState, ev: ChannelEvent, sensors: Sequence[SensorConfig] | SensorConfig):
    """``d~_i += Delta_i^k + q`` and the matching trace update."""
    if ev.kind != D_EVENT:
        raise ConfigError(f"expected a D-event, got {ev.kind!r}")
    cfg = _sensor(sensors, ev.sensor)
    i = ev.dim
    q = decode_overshoot(ev.transmit_time, cfg.phi_d)
    d_old = fs.d_tilde[i]
    d_new = d_old + cfg.Delta[i] + q
    total, comp = _neumaier(fs.trace_sum, fs.trace_comp, -(fs.kappa[i] / d_old))
    total, comp = _neumaier(total, comp, fs.kappa[i] / d_new)
    d = fs.d_tilde.copy()
    d[i] = d_new
    return replace(fs, d_tilde=d, trace_sum=total, trace_comp=comp,
                   d_events=fs.d_events + 1, time=ev.transmit_time)


def fc_on_v_bit(fs: FusionState, ev: ChannelEvent, sensors: Sequence[SensorConfig] | SensorConfig):
    """``v~_i += b (gamma_i^k + eta)``."""
    if ev.kind != V_EVENT:
        raise ConfigError(f"expected a V-event, got {ev.kind!r}")
    cfg = _sensor(sensors, ev.sensor)
    eta = decode_overshoot(ev.transmit_time, cfg.phi_v)
    v = fs.v_tilde.copy()
    v[ev.dim] += ev.sign * (cfg.gamma[ev.dim] + eta)
    return replace(fs, v_tilde=v, v_events=fs.v_events + 1, time=ev.transmit_time)


def fc_on_event(fs, ev, sensors):
    if ev.kind == D_EVENT:
        return fc_on_d_bit(fs, ev, sensors)
    return fc_on_v_bit(fs, ev, sensors)
