"""Monte-Carlo sweeps, aggregation and CSV output."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from ..ltsnet import kappa_equicorrelated
from .config import ExperimentConfig
from .schemes import TrialRecord, make_scheme

log = logging.getLogger(__name__)

SWEEP_HEADER = ("scheme", "target", "mean_T", "se_T", "mean_nmse", "se_nmse", "trials")


@dataclass(frozen=True)
class SweepRow:
    scheme: str
    target: float
    mean_T: float
    se_T: float
    mean_nmse: float
    se_nmse: float
    trials: int


def _se(x):
    return float(np.std(x, ddof=1) / math.sqrt(len(x))) if len(x) > 1 else float("nan")


def aggregate(records):
    """One :class:`SweepRow` per (scheme, target), in first-seen order."""
    groups = {}
    for rec in records:
        groups.setdefault((rec.scheme, rec.target), []).append(rec)
    rows = []
    for (scheme, target), recs in groups.items():
        T = np.array([r.T for r in recs])
        e = np.array([r.nmse for r in recs])
        rows.append(SweepRow(scheme, target, float(T.mean()), _se(T), float(e.mean()), _se(e),
                             len(recs)))
    return rows


def _fmt(x):
    return x if isinstance(x, (str, int)) else repr(float(x))


def write_csv(rows, fh=None):
    """Sweep CSV with header ``scheme,target,mean_T,se_T,mean_nmse,se_nmse,trials``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for row in rows:
        w.writerow([_fmt(getattr(row, k)) for k in SWEEP_HEADER])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def write_records_csv(records, fh=None):
    buf = io.StringIO()
    fields = list(TrialRecord.__dataclass_fields__)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for rec in records:
        w.writerow([_fmt(v) for v in asdict(rec).values()])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def read_sweep_csv(fh):
    rows = []
    for rec in csv.DictReader(fh):
        rows.append(SweepRow(rec["scheme"], float(rec["target"]), float(rec["mean_T"]),
                             float(rec["se_T"]), float(rec["mean_nmse"]), float(rec["se_nmse"]),
                             int(rec["trials"])))
    return rows


def run_scheme(cfg: ExperimentConfig, scheme, target, trials=None, prepared=None):
    """Calibrate (if needed) and run ``trials`` replications of one scheme at one nMSE target."""
    runner = prepared if prepared is not None else make_scheme(scheme, cfg, target).prepare()
    trials = cfg.trials if trials is None else trials
    log.info("%s target=%g threshold=%.6g: %d trials", scheme, target, runner.threshold, trials)
    return [runner.record(i) for i in range(trials)]


def run_sweep(cfg: ExperimentConfig, out=None):
    """Every scheme in ``cfg.schemes`` at every target; optional CSV to ``out`` (path or file)."""
    records = []
    for scheme in cfg.schemes:
        for target in cfg.targets:
            records.extend(run_scheme(cfg, scheme, target))
    if out is not None:
        rows = aggregate(records)
        if hasattr(out, "write"):
            write_csv(rows, out)
        else:
            with open(out, "w", encoding="utf-8", newline="") as fh:
                write_csv(rows, fh)
    return records


def matched_time(records, target):
    """Mean stopping time rescaled to the requested nMSE, with a delta-method SE.

    Since ``T * MSE`` is nearly constant along a scheme's curve, a run that
    lands at realized nMSE ``e`` instead of ``target`` is compared through
    ``T * e / target``.
    """
    T = np.array([r.T for r in records])
    e = np.array([r.nmse for r in records])
    m = T.size
    mT, me = T.mean(), e.mean()
    cov = np.cov(np.vstack([T, e]), ddof=1) / m
    g = np.array([me / target, mT / target])
    return float(mT * me / target), float(math.sqrt(g @ cov @ g))


def theory_curve(r_values, n, base_time):
    """Predicted mean stopping time ``base_time * kappa(r) / kappa(0)``."""
    return np.array([base_time * kappa_equicorrelated(n, r) / kappa_equicorrelated(n, 0.0)
                     for r in np.atleast_1d(r_values)])
