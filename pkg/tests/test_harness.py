import io
import math

import numpy as np
import pytest
from scipy import linalg

from seqest.exceptions import ConfigError, InvalidCorrelation
from seqest.harness import (
    SWEEP_HEADER,
    CoefficientModel,
    ExperimentConfig,
    TrialRecord,
    aggregate,
    default_X,
    dump_config,
    gen_coefficients,
    load_config,
    make_scheme,
    matched_time,
    observation_blocks,
    parse_config,
    read_sweep_csv,
    run_sweep,
    theory_curve,
    trial_rng,
    write_csv,
)
from seqest.harness.cli import main

SMALL = dict(n=2, K=3, X_true=(1.0, -0.5), targets=(0.1,), trials=20, calib_trials=40, seed=7)


# --- data ---------------------------------------------------------------------

def test_coefficients_uncorrelated():
    N = 10**6
    H = CoefficientModel(5, 0.0).draw(np.random.default_rng(0), N)
    C = np.corrcoef(H, rowvar=False)
    off = C[~np.eye(5, dtype=bool)]
    assert np.all(np.abs(off) < 3.0 / math.sqrt(N))
    np.testing.assert_allclose(H.var(axis=0), 1.0, atol=0.01)


def test_coefficients_equicorrelated():
    H = CoefficientModel(5, 0.5).draw(np.random.default_rng(1), 10**6)
    C = np.corrcoef(H, rowvar=False)
    assert np.all(np.abs(C[~np.eye(5, dtype=bool)] - 0.5) < 0.01)
    np.testing.assert_allclose(H.var(axis=0), 1.0, atol=0.01)


def test_gen_coefficients_and_limits():
    h = gen_coefficients(4, 0.3, np.random.default_rng(2))
    assert h.shape == (4,)
    # the PSD limit and r = 1 are valid generators
    CoefficientModel(5, -0.25).draw(np.random.default_rng(0), 3)
    H = CoefficientModel(3, 1.0).draw(np.random.default_rng(0), 4)
    np.testing.assert_allclose(H - H[:, :1], 0.0, atol=1e-12)
    for r in (-0.3, 1.2):
        with pytest.raises(InvalidCorrelation):
            gen_coefficients(5, r, np.random.default_rng(0))


def test_observation_blocks():
    model = CoefficientModel(2, 0.0)
    it = observation_blocks(model, [1.0, 2.0], 3, np.random.default_rng(0), first=4, grow=2.0,
                            max_block=16)
    shapes = [next(it)[0].shape for _ in range(4)]
    assert shapes == [(4, 3, 2), (8, 3, 2), (16, 3, 2), (16, 3, 2)]
    H, y = next(observation_blocks(model, [1.0, 2.0], 3, np.random.default_rng(0),
                                   sigma2=0.0 + 1e-30))
    np.testing.assert_allclose(y, H @ [1.0, 2.0], atol=1e-12)


def test_trial_rng_streams():
    a = trial_rng(3, 5).standard_normal(4)
    np.testing.assert_array_equal(a, trial_rng(3, 5).standard_normal(4))
    assert not np.array_equal(a, trial_rng(3, 5, stream=1).standard_normal(4))
    assert not np.array_equal(a, trial_rng(3, 6).standard_normal(4))


def test_default_X():
    np.testing.assert_allclose(default_X(5), [0.03, 0.045, 0.06, 0.075, 0.09])
    assert default_X(1).tolist() == [0.06]


# --- configuration ------------------------------------------------------------

def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig(**SMALL, schemes=("centralized-conditional", "decentralized-linear"))
    text = dump_config(cfg)
    assert parse_config(text) == cfg
    p = tmp_path / "exp.cfg"
    p.write_text("# comment\nn = 2\nK=3\nX = 1.0, -0.5  # inline\ntarget = 0.1\n"
                 "trials = 20\ncalib_trials = 40\nseed = 7\n"
                 "scheme = centralized-conditional, decentralized-linear\n")
    assert load_config(p) == cfg
    assert cfg.norm2 == 1.25 and cfg.mse_target(0.1) == pytest.approx(0.125)


@pytest.mark.parametrize("text", [
    "n 5", "bogus = 1", "n = five", "scheme = nope", "r = 1.0", "n = 5\nr = -0.5",
    "X_true = 1, 2", "targets = 0.1, -1", "sigma2 = 0", "calib_trials = 1", "X_true = 0, 0, 0, 0, 0",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")


def test_unknown_scheme_and_shape_requirements():
    cfg = ExperimentConfig(**SMALL)
    with pytest.raises(ConfigError):
        make_scheme("nope", cfg, 0.1)
    with pytest.raises(ConfigError):
        make_scheme("centralized-unconditional-scalar", cfg, 0.1)
    with pytest.raises(ConfigError):
        make_scheme("centralized-unconditional-2d", cfg, 0.1)


# --- scheme runners -------------------------------------------------------------

def _data(cfg, trial, steps):
    rng = trial_rng(cfg.seed, trial)
    it = make_scheme("centralized-conditional", cfg, cfg.targets[0]).blocks(rng)
    Hs, ys = [], []
    while sum(h.shape[0] for h in Hs) < steps:
        H, y = next(it)
        Hs.append(H)
        ys.append(y)
    return np.concatenate(Hs), np.concatenate(ys)


def test_centralized_conditional_matches_batch():
    cfg = ExperimentConfig(**SMALL)
    run = make_scheme("centralized-conditional", cfg, 0.1).prepare()
    for trial in range(5):
        rec = run.record(trial)
        T = int(rec.T)
        H, y = _data(cfg, trial, T)
        A = H[:T].reshape(-1, 2)
        U = A.T @ A
        assert np.trace(np.linalg.inv(U)) <= cfg.mse_target(0.1)
        B = H[:T - 1].reshape(-1, 2)
        if T > 1 and np.linalg.matrix_rank(B) == 2:
            assert np.trace(np.linalg.inv(B.T @ B)) > cfg.mse_target(0.1)
        Xhat = linalg.solve(U, A.T @ y[:T].ravel())
        assert rec.sq_error == pytest.approx(np.sum((Xhat - cfg.X) ** 2), rel=1e-9)
        assert rec == run.record(trial)


def test_unconditional_scalar_runner():
    cfg = ExperimentConfig(**{**SMALL, "n": 1, "K": 1, "X_true": (1.0,)})
    run = make_scheme("centralized-unconditional-scalar", cfg, 0.1).prepare()
    assert run.threshold >= cfg.mse_target(0.1)
    rec = run.record(0)
    H, _ = _data(cfg, 0, int(rec.T))
    u = np.cumsum(H[:, 0, 0] ** 2)
    assert int(np.argmax(u >= 1.0 / run.threshold)) + 1 == rec.T


def test_decentralized_runners():
    cfg = ExperimentConfig(**SMALL)
    lin = make_scheme("decentralized-linear", cfg, 0.1).prepare(0.1)
    quad = make_scheme("decentralized-quadratic-baseline", cfg, 0.1).prepare(0.1)
    for run in (lin, quad):
        recs = [run.record(i) for i in range(10)]
        assert all(r.T > 0 and r.events > 0 and np.isfinite(r.sq_error) for r in recs)
        assert recs[3] == run.record(3)
        # T is the transmit time of an event: a non-integer step plus overshoot delay
        assert all(r.T != math.floor(r.T) for r in recs)


def test_decentralized_calibration_closes_loop():
    cfg = ExperimentConfig(**{**SMALL, "calib_trials": 200})
    run = make_scheme("decentralized-linear", cfg, 0.1).prepare()
    cal = run.calibration
    assert abs(cal.achieved_mse - run.C) <= cal.tolerance
    assert run.threshold == cal.C_tilde


# --- sweeps --------------------------------------------------------------------

def test_sweep_csv_deterministic(tmp_path):
    cfg = ExperimentConfig(**{**SMALL, "targets": (0.1, 0.3)},
                           schemes=("centralized-conditional",))
    a, b = io.StringIO(), io.StringIO()
    run_sweep(cfg, a)
    run_sweep(cfg, str(tmp_path / "s.csv"))
    run_sweep(cfg, b)
    assert a.getvalue() == b.getvalue() == (tmp_path / "s.csv").read_text()
    lines = a.getvalue().splitlines()
    assert lines[0] == ",".join(SWEEP_HEADER) and len(lines) == 3
    rows = read_sweep_csv(io.StringIO(a.getvalue()))
    assert [r.target for r in rows] == [0.1, 0.3] and rows[0].trials == 20
    assert rows[0].mean_T > rows[1].mean_T
    assert write_csv(rows) == a.getvalue()


def _recs(T, e):
    return [TrialRecord("s", 0.1, 1.0, t, x, x, 0, 0, i) for i, (t, x) in enumerate(zip(T, e))]


def test_aggregate_and_matched_time():
    rng = np.random.default_rng(0)
    T = 100 + rng.standard_normal(400)
    e = 0.1 * (1 + 0.1 * rng.standard_normal(400))
    row = aggregate(_recs(T, e))[0]
    assert row.mean_T == pytest.approx(T.mean()) and row.trials == 400
    assert row.se_T == pytest.approx(T.std(ddof=1) / 20)
    m, se = matched_time(_recs(T, e), 0.1)
    assert m == pytest.approx(T.mean() * e.mean() / 0.1)
    # independent T and e: delta-method SE from the two marginal SEs
    expect = math.hypot(e.mean() / 0.1 * row.se_T, T.mean() / 0.1 * row.se_nmse)
    assert se == pytest.approx(expect, rel=0.05)
    m, se = matched_time(_recs(T, np.full(400, 0.1)), 0.1)
    assert m == pytest.approx(T.mean()) and se == pytest.approx(row.se_T)


def test_theory_curve():
    out = theory_curve([0.0, 0.9], 5, 100.0)
    assert out[0] == 100.0 and out[1] == pytest.approx(804.35, abs=0.1)


# --- command line -------------------------------------------------------------

@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.cfg"
    p.write_text("n = 2\nK = 3\nX = 1.0, -0.5\ntarget = 0.1\ntrials = 5\ncalib_trials = 40\n"
                 "seed = 7\n")
    return p


def test_cli_usage_errors(capsys, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--scheme", "nope"])
    assert exc.value.code == 1
    assert main(["sweep", "--config", str(tmp_path / "nope.cfg")]) == 1
    assert "config file not found" in capsys.readouterr().err


def test_cli_numeric_failure(capsys):
    assert main(["solve-2d", "--lam", "1e5"]) == 2
    assert "BracketFailure" in capsys.readouterr().err


def test_cli_commands(small_cfg, tmp_path, capsys):
    out = tmp_path / "o.csv"
    assert main(["solve-scalar", "--lam", "1", "--out", str(out)]) == 0
    assert out.read_text().startswith("z,V,F,G\n")
    assert "threshold_z=2.147" in capsys.readouterr().out

    assert main(["run-conditional", "--config", str(small_cfg), "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0].startswith("scheme,target,threshold,T")
    assert len(out.read_text().splitlines()) == 6

    log, snap = tmp_path / "events.csv", tmp_path / "fc.csv"
    assert main(["run-decentralized", "--config", str(small_cfg), "--ctilde", "0.1",
                 "--out", str(log), "--snapshot", str(snap)]) == 0
    first = log.read_text()
    assert first.startswith("transmit_time,kind,sensor,dim,sign\n")
    assert snap.read_text().startswith("dim,d_tilde,v_tilde\n")
    main(["run-decentralized", "--config", str(small_cfg), "--ctilde", "0.1", "--out", str(log)])
    assert log.read_text() == first

    assert main(["sweep", "--config", str(small_cfg), "--target", "0.1", "--target", "0.2",
                 "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == ",".join(SWEEP_HEADER)

    assert main(["calibrate", "--config", str(small_cfg), "--scheme", "decentralized-linear",
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "scheme,target,threshold,achieved_mse,se" and len(lines) == 2
