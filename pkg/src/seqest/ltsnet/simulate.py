"""Reference event-driven simulation of the decentralized estimator, event logs and replay."""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .._validation import check_int, check_positive
from ..exceptions import ConfigError, DimensionMismatch
from .fusion import DEFAULT_EPSILON, FusionState, fc_on_event
from .protocol import D_EVENT, ChannelEvent, SensorConfig, SensorState, sensor_step

EVENT_LOG_HEADER = "transmit_time,kind,sensor,dim,sign"


@dataclass
class DecentralizedResult:
    T_tilde: float
    X_tilde: np.ndarray
    fusion: FusionState
    hit_horizon: bool
    steps: int
    events: list = field(default_factory=list, repr=False)

    @property
    def n_events(self):
        return self.fusion.d_events + self.fusion.v_events


def _deliver(fs, events, sensors, log, delay=0.0):
    """Feed events in arrival order; returns ``(state, stop_time or None)``.

    A bit sent at ``transmit_time`` arrives at ``transmit_time + delay``; the
    fusion center knows the fixed delay and subtracts it before decoding.
    """
    for ev in sorted(events):
        arrival = ev.transmit_time + delay
        seen = ev if delay == 0.0 else replace(ev, transmit_time=arrival - delay)
        fs = fc_on_event(fs, seen, sensors)
        if log is not None:
            log.append(ev)
        if ev.kind == D_EVENT and fs.stopped:
            return fs, arrival
    return fs, None


def run_decentralized(sensors: Sequence[SensorConfig], Rinv, C_tilde, streams: Iterable,
                      epsilon=DEFAULT_EPSILON, horizon=10**6, record_events=True,
                      channel_delay=0.0):
    """Simulate sensors and fusion center until ``Tr(U~^{-1}) <= C_tilde``.

    ``streams`` yields one ``(H_t, y_t)`` pair per time step with ``H_t`` of
    shape ``(K, n)`` and ``y_t`` of shape ``(K,)``.  Events of one time step
    all arrive inside ``[t, t+1)`` and are delivered in order of arrival
    (ties: sensor, dimension, D before V).  The fusion center stops at the
    first D-event that brings the statistic to ``C_tilde`` or below; the
    stop time is that event's arrival time.  Later events are not applied.
    ``channel_delay`` is a fixed, known transport delay added to every bit.
    """
    channel_delay = check_positive(channel_delay, "channel_delay", strict=False)
    sensors = list(sensors)
    K = len(sensors)
    n = sensors[0].n
    if any(s.n != n for s in sensors):
        raise DimensionMismatch("all sensors must share the parameter dimension")
    horizon = check_int(horizon, "horizon")
    fs = FusionState.initial(Rinv, C_tilde, epsilon)
    if fs.n != n:
        raise DimensionMismatch(f"R is {fs.n}x{fs.n} but sensors have n={n}")
    states = [SensorState.initial(n) for _ in range(K)]
    log = [] if record_events else None
    t = 0
    for H_t, y_t in streams:
        t += 1
        H_t = np.asarray(H_t, dtype=float).reshape(K, n)
        y_t = np.asarray(y_t, dtype=float).reshape(K)
        events = []
        for k in range(K):
            states[k], evs = sensor_step(states[k], sensors[k], H_t[k], y_t[k], t, sensor=k)
            events.extend(evs)
        fs, stop = _deliver(fs, events, sensors, log, channel_delay)
        if stop is not None:
            return DecentralizedResult(stop, fs.estimate(), fs, False, t, log or [])
        if t >= horizon:
            break
    return DecentralizedResult(float(t), fs.estimate(), fs, True, t, log or [])


def write_event_log(events, fh=None):
    """Event log text: header then one ``transmit_time,kind,sensor,dim,sign`` line per event."""
    buf = io.StringIO()
    buf.write(EVENT_LOG_HEADER + "\n")
    for ev in events:
        buf.write(ev.to_line() + "\n")
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def read_event_log(fh):
    text = fh.read() if hasattr(fh, "read") else str(fh)
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != EVENT_LOG_HEADER:
        raise ConfigError(f"event log must start with '{EVENT_LOG_HEADER}'")
    return [ChannelEvent.from_line(ln) for ln in lines[1:]]


def replay(events, sensors, Rinv, C_tilde, epsilon=DEFAULT_EPSILON, channel_delay=0.0):
    """Run the fusion center alone on a recorded event sequence."""
    fs = FusionState.initial(Rinv, C_tilde, epsilon)
    fs, stop = _deliver(fs, events, sensors, None, channel_delay)
    hit = stop is None
    T = fs.time if hit else stop
    return DecentralizedResult(T, fs.estimate(), fs, hit, int(np.floor(T)), list(events))
