"""Per-trial runners for every estimation scheme.

Each runner is built once per (config, target), performs its calibration in
``prepare`` and then maps a trial generator to ``(T, Xhat, events)``.  All
runners read the same observation stream for a given trial seed, so
schemes are compared on common random numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .. import planar_dp, scalar_dp
from ..exceptions import ConfigError, HorizonExceeded, OvershootBoundViolated
from ..ltsnet import (
    SensorArrays,
    calibrate_Ctilde,
    default_sensor_config,
    equicorrelated_stats,
    gamma_threshold,
    increment_stats,
    run_decentralized_blocks,
)
from .config import ExperimentConfig
from .data import CoefficientModel, observation_blocks, trial_rng
from .kernels import central_block, quadratic_block

CALIBRATION_STREAM = 1
EVALUATION_STREAM = 0


@dataclass(frozen=True)
class TrialRecord:
    scheme: str
    target: float
    threshold: float
    T: float
    sq_error: float
    nmse: float
    events: int
    seed: int
    trial: int


class Scheme:
    name = ""

    def __init__(self, cfg: ExperimentConfig, target):
        self.cfg = cfg
        self.target = float(target)
        self.C = cfg.mse_target(target)
        self.model = CoefficientModel(cfg.n, cfg.r)
        self.threshold = float("nan")
        self.calibration = None

    def blocks(self, rng):
        return observation_blocks(self.model, self.cfg.X, self.cfg.K, rng, self.cfg.sigma2)

    def prepare(self):
        return self

    def run(self, rng):
        raise NotImplementedError

    def record(self, trial, rng=None):
        rng = trial_rng(self.cfg.seed, trial, EVALUATION_STREAM) if rng is None else rng
        T, Xhat, events = self.run(rng)
        err = float(np.sum((Xhat - self.cfg.X) ** 2))
        return TrialRecord(self.name, self.target, self.threshold, float(T), err,
                           err / self.cfg.norm2, int(events), self.cfg.seed, trial)


class CentralizedConditional(Scheme):
    """Fusion center sees every sample; stops when ``tr(sigma^2 U^{-1}) <= C``."""

    name = "centralized-conditional"

    def prepare(self):
        self.threshold = self.C
        return self

    def run(self, rng):
        cfg = self.cfg
        U = np.zeros((cfg.n, cfg.n))
        V = np.zeros(cfg.n)
        inv_s2 = np.full(cfg.K, 1.0 / cfg.sigma2)
        t0 = 1
        for H, y in self.blocks(rng):
            T = central_block(H, y, t0, inv_s2, U, V, self.C)
            if T:
                Uf = np.tril(U) + np.tril(U, -1).T
                return T, linalg.solve(Uf, V, assume_a="pos"), 0
            t0 += H.shape[0]
            if t0 > cfg.horizon:
                raise HorizonExceeded(f"no stop within {cfg.horizon} steps")


class CentralizedUnconditionalScalar(Scheme):
    """Scalar threshold rule ``u_t >= 1/C''`` calibrated for the averaged MSE."""

    name = "centralized-unconditional-scalar"

    def __init__(self, cfg, target):
        if cfg.n != 1 or cfg.K != 1:
            raise ConfigError(f"{self.name} needs n=1 and K=1")
        super().__init__(cfg, target)

    def prepare(self):
        cfg = self.cfg

        def sim(rng, size):
            return self.model.draw(rng, size)[..., 0]

        self.calibration = scalar_dp.calibrate_threshold(
            self.C, sim, cfg.calib_trials, cfg.sigma2, random_state=cfg.seed)
        self.threshold = self.calibration.threshold
        return self

    def run(self, rng):
        need = 1.0 / self.threshold
        u = v = 0.0
        t0 = 0
        for H, y in self.blocks(rng):
            h = H[:, 0, 0]
            cu = u + np.cumsum(h * h) / self.cfg.sigma2
            cv = v + np.cumsum(h * y[:, 0]) / self.cfg.sigma2
            hit = np.nonzero(cu >= need)[0]
            if hit.size:
                j = hit[0]
                return t0 + j + 1, np.array([cv[j] / cu[j]]), 0
            u, v = cu[-1], cv[-1]
            t0 += h.size
            if t0 >= self.cfg.horizon:
                raise HorizonExceeded(f"no stop within {self.cfg.horizon} steps")


class CentralizedUnconditional2D(Scheme):
    """Boundary-surface rule for ``n = 2`` with ``lam`` calibrated to the averaged MSE."""

    name = "centralized-unconditional-2d"

    def __init__(self, cfg, target):
        if cfg.n != 2 or cfg.K != 1:
            raise ConfigError(f"{self.name} needs n=2 and K=1")
        super().__init__(cfg, target)

    def prepare(self):
        cfg = self.cfg

        def sim(rng, size):
            return self.model.draw(rng, size)

        self.calibration = planar_dp.calibrate_lambda(
            self.C, sim, cfg.sigma2, trials=cfg.calib_trials, random_state=cfg.seed)
        self.threshold = self.calibration.lam
        return self

    def run(self, rng):
        surface = self.calibration.surface
        acc = np.zeros(5)  # u11, u12, u22, v1, v2
        t0 = 0
        for H, y in self.blocks(rng):
            h1, h2, yy = H[:, 0, 0], H[:, 0, 1], y[:, 0]
            inc = np.stack([h1 * h1, h1 * h2, h2 * h2, h1 * yy, h2 * yy], axis=1) / self.cfg.sigma2
            c = acc + np.cumsum(inc, axis=0)
            u11, u12, u22 = c[:, 0], c[:, 1], c[:, 2]
            z11, z22, rho = planar_dp._state_from_u(u11, u12, u22)
            det = u11 * u22 - u12**2
            stop = planar_dp.unconditional_stop_2d(surface, z11, z22, rho)
            stop = np.atleast_1d(stop) & (det > 1e-12 * u11 * u22)
            hit = np.nonzero(stop)[0]
            if hit.size:
                j = hit[0]
                U = np.array([[u11[j], u12[j]], [u12[j], u22[j]]])
                return t0 + j + 1, np.linalg.solve(U, c[j, 3:]), 0
            acc = c[-1]
            t0 += h1.size
            if t0 >= self.cfg.horizon:
                raise HorizonExceeded(f"no stop within {self.cfg.horizon} steps")


class _Decentralized(Scheme):
    def _ctilde_sim(self):
        cfg = self.cfg

        def simulate(ct):
            errs = np.empty(cfg.calib_trials)
            for i in range(cfg.calib_trials):
                _, Xhat, _ = self._run(trial_rng(cfg.seed, i, CALIBRATION_STREAM), ct)
                errs[i] = np.sum((Xhat - cfg.X) ** 2)
            return errs

        return simulate

    def prepare(self, C_tilde=None):
        """Calibrate ``C_tilde`` by simulation unless it is given."""
        self._setup()
        if C_tilde is None:
            self.calibration = calibrate_Ctilde(self.C, self._ctilde_sim())
            C_tilde = self.calibration.C_tilde
        self.threshold = float(C_tilde)
        return self

    def run(self, rng):
        return self._run(rng, self.threshold)


class DecentralizedLinear(_Decentralized):
    """Level-triggered sampling of the diagonal of ``U`` and of ``V`` (``O(n)`` per sensor)."""

    name = "decentralized-linear"

    def _setup(self):
        cfg = self.cfg
        stats = increment_stats(self.model, cfg.X, cfg.sigma2)
        self.sensor = default_sensor_config(stats, cfg.interval, cfg.sigma2)
        self.arrays = SensorArrays([self.sensor] * cfg.K)
        self.Rinv = equicorrelated_stats(cfg.n, cfg.r).Rinv

    def _run(self, rng, C_tilde):
        res = run_decentralized_blocks(self.arrays, self.Rinv, C_tilde, self.blocks(rng),
                                       self.cfg.epsilon, self.cfg.horizon)
        if res.hit_horizon:
            raise HorizonExceeded(f"no stop within {self.cfg.horizon} steps")
        return res.T_tilde, res.X_tilde, res.d_events + res.v_events


class DecentralizedQuadratic(_Decentralized):
    """Reference baseline: every entry of ``U^k`` and ``V^k`` is level-triggered (``O(n^2)``)."""

    name = "decentralized-quadratic-baseline"

    def _setup(self):
        cfg = self.cfg
        n, K = cfg.n, cfg.K
        self.pi, self.pj = (np.array(a, dtype=np.int64) for a in zip(
            *[(i, j) for i in range(n) for j in range(i + 1)]))
        self.one_sided = self.pi == self.pj
        rng = np.random.default_rng(0)
        Hs = self.model.draw(rng, 10**6)
        y = Hs @ cfg.X + math.sqrt(cfg.sigma2) * rng.standard_normal(Hs.shape[0])
        prod = Hs[:, self.pi] * Hs[:, self.pj] / cfg.sigma2
        hv = np.abs(Hs * y[:, None]) / cfg.sigma2
        thr = np.where(self.one_sided, cfg.interval * prod.mean(axis=0),
                       [gamma_threshold(cfg.interval * m) for m in np.abs(prod).mean(axis=0)])
        gam = np.array([gamma_threshold(cfg.interval * m) for m in hv.mean(axis=0)])
        self.thr = np.tile(thr, (K, 1))
        self.gamma = np.tile(gam, (K, 1))
        self.theta_u = np.full(K, 2.0 * np.abs(prod).max())
        self.theta_v = np.full(K, 2.0 * hv.max())
        self.phi_u = 2.0 * self.theta_u
        self.phi_v = 2.0 * self.theta_v
        self.inv_s2 = np.full(K, 1.0 / cfg.sigma2)

    def _run(self, rng, C_tilde):
        cfg = self.cfg
        n, K, m = cfg.n, cfg.K, self.pi.size
        acc_u = np.zeros((K, m))
        acc_v = np.zeros((K, n))
        Ut = np.eye(n) * cfg.epsilon
        Vt = np.zeros(n)
        counts = np.zeros(2, dtype=np.int64)
        t0 = 1
        for H, y in self.blocks(rng):
            tau = quadratic_block(H, y, t0, self.pi, self.pj, self.thr, self.one_sided,
                                  self.inv_s2, self.phi_u, self.theta_u, self.gamma, self.phi_v,
                                  self.theta_v, C_tilde, acc_u, acc_v, Ut, Vt, counts)
            if tau < 0:
                raise OvershootBoundViolated("an overshoot reached its configured bound")
            if tau > 0:
                Uf = np.tril(Ut) + np.tril(Ut, -1).T
                return tau, linalg.solve(Uf, Vt, assume_a="pos"), int(counts.sum())
            t0 += H.shape[0]
            if t0 > cfg.horizon:
                raise HorizonExceeded(f"no stop within {cfg.horizon} steps")


RUNNERS = {cls.name: cls for cls in (
    CentralizedConditional, CentralizedUnconditionalScalar, CentralizedUnconditional2D,
    DecentralizedLinear, DecentralizedQuadratic)}


def make_scheme(name, cfg, target):
    if name not in RUNNERS:
        raise ConfigError(f"unknown scheme {name!r}")
    return RUNNERS[name](cfg, target)
