"""Command-line entry point: ``seqest <subcommand> [options]``.

Exit status is 0 on success, 1 for configuration or usage errors and 2 when
a numerical procedure fails (no convergence, no bracket, horizon reached).
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import sys

import numpy as np

from .. import planar_dp, scalar_dp
from ..exceptions import (
    ConfigError,
    HorizonExceeded,
    NumericalFailure,
    OvershootBoundViolated,
    SeqEstError,
)
from ..ltsnet import run_decentralized, write_event_log
from .config import SCHEMES, ExperimentConfig, load_config
from .data import trial_rng
from .schemes import EVALUATION_STREAM, make_scheme
from .sweep import aggregate, run_scheme, run_sweep, write_records_csv

log = logging.getLogger("seqest")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


@contextlib.contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.trials is not None:
        over["trials"] = args.trials
    if args.scheme:
        over["schemes"] = tuple(args.scheme)
    if args.target:
        over["targets"] = tuple(args.target)
    return cfg.replace(**over) if over else cfg


def cmd_run_conditional(args):
    cfg = _config(args)
    records = []
    for target in cfg.targets:
        records.extend(run_scheme(cfg, "centralized-conditional", target))
    with _output(args.out) as fh:
        write_records_csv(records, fh)
    for row in aggregate(records):
        log.info("target=%g mean_T=%.6g se_T=%.3g mean_nmse=%.6g", row.target, row.mean_T,
                 row.se_T, row.mean_nmse)
    return EXIT_OK


def cmd_solve_scalar(args):
    cfg = _config(args)
    lam = 1.0 if args.lam is None else args.lam
    table = scalar_dp.value_iteration_scalar(lam, cfg.sigma2, strict=True)
    thr = scalar_dp.extract_threshold(table)
    report = scalar_dp.check_value_properties(table)
    print(f"lam={lam:g} iterations={table.iterations} threshold_z={thr!r} "
          f"properties={'ok' if report.passed else 'FAILED'}")
    with _output(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["z", "V", "F", "G"])
        for row in zip(table.z_grid, table.V, table.F, table.G):
            w.writerow([repr(float(v)) for v in row])
    return EXIT_OK


def cmd_solve_2d(args):
    cfg = _config(args)
    if args.target:
        cal = planar_dp.calibrate_lambda(cfg.mse_target(args.target[0]), sigma2=cfg.sigma2,
                                         trials=cfg.calib_trials, random_state=cfg.seed)
        surface, lam = cal.surface, cal.lam
        print(f"calibrated lam={lam!r} achieved_mse={cal.achieved_mse!r} se={cal.se:.3g}")
    else:
        lam = 1.0 if args.lam is None else args.lam
        grid = planar_dp.value_iteration_2d(lam, cfg.sigma2, strict=True)
        surface = planar_dp.extract_surface(grid)
        print(f"lam={lam:g} sweeps={grid.iterations} stop_fraction={surface.indicator.mean():.6g}")
    with _output(args.out) as fh:
        surface.to_csv(fh)
    return EXIT_OK


def cmd_run_decentralized(args):
    cfg = _config(args)
    target = cfg.targets[0]
    scheme = make_scheme("decentralized-linear", cfg, target).prepare(args.ctilde)
    rng = trial_rng(cfg.seed, args.trial, EVALUATION_STREAM)

    def steps():
        for H, y in scheme.blocks(rng):
            yield from zip(H, y)

    res = run_decentralized([scheme.sensor] * cfg.K, scheme.Rinv, scheme.threshold, steps(),
                            cfg.epsilon, cfg.horizon)
    if res.hit_horizon:
        raise HorizonExceeded(f"no stop within {cfg.horizon} steps")
    err = float(np.sum((res.X_tilde - cfg.X) ** 2))
    print(f"C_tilde={scheme.threshold!r} T={res.T_tilde!r} events={res.n_events} "
          f"nmse={err / cfg.norm2!r}")
    with _output(args.out) as fh:
        write_event_log(res.events, fh)
    if args.snapshot:
        with _output(args.snapshot) as fh:
            res.fusion.snapshot(fh)
    return EXIT_OK


def cmd_sweep(args):
    cfg = _config(args)
    with _output(args.out) as fh:
        run_sweep(cfg, fh)
    return EXIT_OK


def cmd_calibrate(args):
    cfg = _config(args)
    with _output(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scheme", "target", "threshold", "achieved_mse", "se"])
        for name in cfg.schemes:
            for target in cfg.targets:
                s = make_scheme(name, cfg, target).prepare()
                cal = s.calibration
                mse = getattr(cal, "achieved_mse", s.C)
                se = getattr(cal, "se", 0.0)
                w.writerow([name, repr(target), repr(float(s.threshold)), repr(float(mse)),
                            repr(float(se))])
    return EXIT_OK


COMMANDS = {
    "run-conditional": (cmd_run_conditional, "centralized conditional rule: per-trial records"),
    "solve-scalar": (cmd_solve_scalar, "scalar value iteration: z,V,F,G table"),
    "solve-2d": (cmd_solve_2d, "2-D value iteration: boundary surface rho,z11,z22"),
    "run-decentralized": (cmd_run_decentralized, "one decentralized run with its event log"),
    "sweep": (cmd_sweep, "Monte-Carlo sweep over schemes and targets"),
    "calibrate": (cmd_calibrate, "calibrate thresholds for schemes and targets"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value experiment file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output CSV path (default: stdout)")
    common.add_argument("--trials", type=int)
    common.add_argument("--scheme", action="append", choices=SCHEMES,
                        help="may be repeated; overrides the config")
    common.add_argument("--target", type=float, action="append",
                        help="nMSE target; may be repeated; overrides the config")
    common.add_argument("--lam", type=float, help="Lagrange multiplier for solve-scalar/solve-2d")
    common.add_argument("--ctilde", type=float, help="run-decentralized: skip calibration")
    common.add_argument("--trial", type=int, default=0, help="run-decentralized: trial index")
    common.add_argument("--snapshot", help="run-decentralized: fusion-center state CSV")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="seqest", description="Sequential estimation experiments")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    for name, (_, help_) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_, description=help_)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.error("a command is required")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command][0](args)
    except ConfigError as exc:
        print(f"seqest: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, HorizonExceeded, OvershootBoundViolated) as exc:
        print(f"seqest: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SeqEstError, ValueError) as exc:
        print(f"seqest: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
