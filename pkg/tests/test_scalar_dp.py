import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.exceptions import ConvergenceWarning

from seqest.exceptions import BracketFailure, ConfigError, NoThreshold, NotConverged
from seqest.quadrature import Quadrature, gauss_hermite, gaussian_grid, point_mass
from seqest.scalar_dp import (
    UnconditionalScalarRule,
    bound_constant,
    calibrate_threshold,
    check_value_properties,
    default_range,
    extract_threshold,
    simulate_threshold_rule,
    value_iteration_scalar,
)

# thresholds of the default solver (2001 points, 41-node Gaussian grid rule),
# cross-checked by the oracles below
FROZEN_THRESHOLD = {0.01: 113.92, 1.0: 2.1474, 100.0: 0.11380}


def oracle_value_iteration(lam, z, quad, tol=1e-6):
    # node-by-node loop, independent of the vectorised solver
    V = np.zeros_like(z)
    F = lam * z
    while True:
        G = np.ones_like(z)
        for h, w in zip(quad.nodes, quad.weights):
            G += w * np.interp(z / (1.0 + z * h * h), z, V)
        new = np.minimum(F, G)
        if np.max(np.abs(new - V)) < tol * np.linalg.norm(V):
            return new
        V = new


def test_quadrature_rules():
    for q in (gaussian_grid(), gauss_hermite()):
        assert q.weights.sum() == pytest.approx(1.0)
        assert q.expect(lambda h: h**2) == pytest.approx(1.0, abs=2e-3)
        assert q.is_symmetric
    with pytest.raises(ConfigError):
        Quadrature([0.0, 1.0], [0.7, 0.7])
    with pytest.raises(ConfigError):
        Quadrature([0.0], [-1.0])


def test_first_iterate_and_origin():
    t = value_iteration_scalar(1.0)
    np.testing.assert_array_equal(t.first_iterate, np.minimum(t.z_grid, 1.0))
    assert t.V[0] == 0.0 and t.G[0] == 1.0
    np.testing.assert_array_equal(t.V, np.minimum(t.F, t.G))


@pytest.mark.parametrize("lam", [0.01, 1.0, 100.0])
def test_structure_and_frozen_threshold(lam):
    t = value_iteration_scalar(lam)
    rep = check_value_properties(t)
    assert t.converged and rep.passed and rep.first_iterate_error == 0.0
    assert extract_threshold(t) == pytest.approx(FROZEN_THRESHOLD[lam], rel=1e-4)


def test_matches_oracle_iteration():
    t = value_iteration_scalar(1.0)
    ref = oracle_value_iteration(1.0, t.z_grid, t.quad)
    np.testing.assert_allclose(t.V, ref, atol=1e-5)


def test_grid_refinement():
    coarse = value_iteration_scalar(1.0)
    fine = value_iteration_scalar(1.0, num_points=4001)
    assert abs(extract_threshold(coarse) - extract_threshold(fine)) <= 2 * coarse.dz


def test_gauss_hermite_agrees():
    a = extract_threshold(value_iteration_scalar(1.0))
    b = extract_threshold(value_iteration_scalar(1.0, quad=gauss_hermite(61)))
    assert b == pytest.approx(a, rel=2e-2)


def test_threshold_is_optimal_among_threshold_rules():
    # Monte-Carlo Lagrangian E[T] + lam E[sigma2/u_T] under common random numbers
    lam = 1.0
    c = extract_threshold(value_iteration_scalar(lam))

    def cost(thr):
        T, var = simulate_threshold_rule(thr, trials=100_000, random_state=3)
        return T.mean() + lam * var.mean()

    best = cost(c)
    assert best <= cost(0.6 * c) and best <= cost(1.6 * c)


def test_large_lambda_stop_region():
    # G >= 1 puts every z with lam*z <= 1 in the stopping set; when lam*dz > 1 that
    # is only the origin, yet the crossing stays near 1/sqrt(lam), far above dz
    lam = 2000.0
    t = value_iteration_scalar(lam, z_max=2.0)
    assert lam * t.dz > 1
    assert t.stop_mask[t.F <= 1.0].all()
    thr = extract_threshold(t)
    assert thr >= 1.0 / lam
    assert thr == pytest.approx(1.0 / np.sqrt(lam), rel=0.1)


def test_grid_too_small_raises():
    t = value_iteration_scalar(0.01, z_max=1.0, num_points=101)
    with pytest.raises(NoThreshold):
        extract_threshold(t)


def test_not_converged():
    with pytest.warns(Warning):
        t = value_iteration_scalar(1.0, max_iters=2)
    assert not t.converged
    with pytest.raises(NotConverged):
        extract_threshold(t)
    with pytest.raises(NotConverged):
        value_iteration_scalar(1.0, max_iters=2, strict=True)


def test_degenerate_quadrature_has_no_bound():
    assert bound_constant(1.0, 1.0, point_mass(0.0)) is None
    with pytest.warns(ConvergenceWarning):
        t = value_iteration_scalar(1.0, quad=point_mass(0.0), max_iters=5)
    rep = check_value_properties(t)
    assert rep.no_bound and not rep.bounded and not rep.passed


def test_bound_constant_root():
    q = gaussian_grid()
    c = bound_constant(1.0, 1.0, q)
    with np.errstate(divide="ignore"):
        a = 1.0 / q.nodes**2

    def g(cc):
        return np.dot(q.weights, np.maximum(cc - a, 0.0))

    assert g(c) > 1.0 and g(c * (1 - 1e-6)) <= 1.0


def test_default_range_keeps_crossing_inside():
    for lam in (1e-3, 1.0, 1e3):
        t = value_iteration_scalar(lam)
        assert extract_threshold(t) < 0.5 * t.z_grid[-1]
    assert default_range(0.01, 1.0) == pytest.approx(1000.0)


def test_calibration_deterministic_path():
    res = calibrate_threshold(0.5, lambda rng, size: np.ones(size), trials=10)
    assert 1.0 < 1.0 / res.threshold <= 2.0
    assert res.achieved_mse == 0.5 and res.mean_stopping_time == 2.0


def test_calibration_unattainable():
    # deterministic u_t = t: variances are 1/t, a target between 1/2 and 1 is skipped over
    with pytest.raises(BracketFailure):
        calibrate_threshold(0.7, lambda rng, size: np.ones(size), trials=10, rtol=1e-6)


@given(st.floats(0.01, 0.5), st.floats(1.05, 3.0))
def test_mse_monotone_in_threshold(c, factor):
    _, a = simulate_threshold_rule(c, trials=2000, random_state=1)
    _, b = simulate_threshold_rule(c * factor, trials=2000, random_state=1)
    assert b.mean() >= a.mean()


def test_calibration_exceeds_conditional_threshold():
    res = calibrate_threshold(0.1, trials=20_000, sigma2=2.0)
    assert res.threshold >= 0.1 / 2.0
    assert abs(res.achieved_mse - 0.1) <= res.tolerance


def test_estimator_api(rng):
    rule = UnconditionalScalarRule(target=0.2, trials=5000).fit()
    assert clone(rule).get_params() == rule.get_params()
    u_star = 1.0 / rule.threshold_
    assert rule.predict([u_star]).all() and not rule.predict([0.99 * u_star]).any()
    h = np.ones(100)
    assert rule.stopping_time(h) == int(np.ceil(u_star))
    boot = UnconditionalScalarRule(target=0.2, trials=5000).fit(rng.standard_normal(1000))
    assert boot.threshold_ == pytest.approx(rule.threshold_, rel=0.1)
