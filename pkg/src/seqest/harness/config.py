"""Experiment configuration: a dataclass plus a flat ``key = value`` file format."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

import numpy as np

from .._validation import check_int, check_positive
from ..exceptions import ConfigError, InvalidCorrelation
from .data import default_X

SCHEMES = (
    "centralized-conditional",
    "centralized-unconditional-scalar",
    "centralized-unconditional-2d",
    "decentralized-linear",
    "decentralized-quadratic-baseline",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """One Monte-Carlo experiment.

    ``targets`` are nMSE levels; the absolute MSE target is
    ``nMSE * |X|^2``.  ``interval`` is the mean number of time steps between
    samples of each local process in the decentralized schemes.
    """

    n: int = 5
    K: int = 10
    X_true: tuple = ()
    r: float = 0.0
    sigma2: float = 1.0
    targets: tuple = (1e-3, 1e-2, 1e-1)
    trials: int = 10_000
    seed: int = 0
    horizon: int = 10**6
    schemes: tuple = ("centralized-conditional",)
    interval: float = 1.0
    calib_trials: int = 2_000
    epsilon: float = 1e-4

    def __post_init__(self):
        check_int(self.n, "n")
        check_int(self.K, "K")
        check_int(self.trials, "trials")
        check_int(self.horizon, "horizon")
        check_int(self.calib_trials, "calib_trials", minimum=2)
        check_int(self.seed, "seed", minimum=0)
        check_positive(self.sigma2, "sigma2")
        check_positive(self.interval, "interval")
        check_positive(self.epsilon, "epsilon")
        lo = -1.0 / (self.n - 1) if self.n > 1 else -np.inf
        if not (lo <= self.r < 1.0):
            raise InvalidCorrelation(f"r={self.r} must lie in [{lo:.6g}, 1) for n={self.n}")
        X = tuple(float(x) for x in (self.X_true or default_X(self.n)))
        if len(X) != self.n:
            raise ConfigError(f"X_true has {len(X)} entries, expected n={self.n}")
        if not np.any(np.asarray(X)):
            raise ConfigError("X_true must be non-zero (nMSE divides by |X|^2)")
        object.__setattr__(self, "X_true", X)
        targets = tuple(float(t) for t in self.targets)
        if not targets or any(t <= 0 for t in targets):
            raise ConfigError("targets must be positive")
        object.__setattr__(self, "targets", targets)
        schemes = tuple(self.schemes) if not isinstance(self.schemes, str) else (self.schemes,)
        for s in schemes:
            if s not in SCHEMES:
                raise ConfigError(f"unknown scheme {s!r}; choose from {', '.join(SCHEMES)}")
        object.__setattr__(self, "schemes", schemes)

    @property
    def X(self):
        return np.asarray(self.X_true)

    @property
    def norm2(self):
        return float(self.X @ self.X)

    def mse_target(self, nmse):
        return nmse * self.norm2

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


_LIST_KEYS = {"X_true", "targets", "schemes"}
_ALIASES = {"scheme": "schemes", "target": "targets", "X": "X_true"}


def _convert(name, raw, ftype):
    try:
        if name in _LIST_KEYS:
            items = [s.strip() for s in raw.split(",") if s.strip()]
            return tuple(items) if name == "schemes" else tuple(float(s) for s in items)
        if ftype in ("int", int):
            return int(float(raw)) if "e" in raw.lower() else int(raw)
        if ftype in ("float", float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return raw


def parse_config(text, base: ExperimentConfig | None = None):
    """Parse ``key = value`` lines (``#`` starts a comment; lists are comma separated)."""
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in fields:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, raw, fields[key].type)
    base = ExperimentConfig() if base is None else base
    return base.replace(**values)


def load_config(path, base=None):
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base)


def dump_config(cfg: ExperimentConfig):
    out = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ", ".join(str(x) for x in v)
        out.append(f"{f.name} = {v}")
    return "\n".join(out) + "\n"
