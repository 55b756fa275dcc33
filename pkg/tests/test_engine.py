import math

import numpy as np
import pytest

from esrate.engine import (
    EsParams,
    EsState,
    default_sigma0,
    init_default,
    p_target,
    params_for_rule,
    params_for_target,
    run,
    step,
)
from esrate.harness import invariance_report
from esrate.objectives import (
    CUBE_SHIFT,
    hessian_family,
    make_composite,
    perturbed_family,
    sphere,
)


def test_p_target_one_fifth():
    assert p_target(EsParams(math.e, math.e**-0.25)) == pytest.approx(0.2, abs=1e-15)


def test_p_target_symmetric_factors():
    assert p_target(EsParams(2.0, 0.5)) == pytest.approx(0.5, abs=1e-15)


def test_p_target_asymmetric():
    assert p_target(EsParams(math.exp(0.3), math.exp(-0.1))) == pytest.approx(0.25, abs=1e-12)


def test_params_validation():
    with pytest.raises(ValueError):
        EsParams(0.9, 0.5)
    with pytest.raises(ValueError):
        EsParams(2.0, 1.5)


def test_params_for_rule():
    assert params_for_rule("const", 100).alpha_up == pytest.approx(math.e)
    assert params_for_rule("sqrt", 100).alpha_up == pytest.approx(math.exp(0.1))
    assert params_for_rule("dim", 100).alpha_up == pytest.approx(math.exp(0.01))
    with pytest.raises(ValueError):
        params_for_rule("bogus", 10)


def test_params_for_target_hits_probability():
    params = params_for_target(math.exp(0.01), 0.3)
    assert p_target(params) == pytest.approx(0.3, abs=1e-12)


def test_step_accept():
    state = EsState(np.array([1.0, 0.0]), math.log(0.1))
    new, ok = step(state, np.array([-1.0, 0.0]), sphere(2), EsParams(math.e, math.e**-0.25))
    assert ok
    np.testing.assert_allclose(new.m, [0.9, 0.0])
    assert new.log_sigma == pytest.approx(math.log(0.1) + 1.0)


def test_step_reject():
    state = EsState(np.array([1.0, 0.0]), math.log(0.1))
    new, ok = step(state, np.array([1.0, 0.0]), sphere(2), EsParams(math.e, math.e**-0.25))
    assert not ok
    np.testing.assert_array_equal(new.m, state.m)
    assert new.log_sigma == pytest.approx(math.log(0.1) - 0.25)


def test_step_tie_accepts():
    state = EsState(np.array([1.0, 0.0]), math.log(0.1))
    new, ok = step(state, np.zeros(2), sphere(2), EsParams(math.e, math.e**-0.25))
    assert ok
    np.testing.assert_array_equal(new.m, state.m)


def test_step_dimension_mismatch():
    state = EsState(np.array([1.0, 0.0]), 0.0)
    with pytest.raises(ValueError):
        step(state, np.zeros(3), sphere(2), EsParams(2.0, 0.5))


def test_run_rejects_zero_budget():
    init = EsState(np.ones(2), 0.0)
    with pytest.raises(ValueError):
        run(sphere(2), EsParams(2.0, 0.5), init, budget=0)


def test_run_rejects_optimum_start():
    init = EsState(np.zeros(2), 0.0)
    with pytest.raises(ValueError):
        run(sphere(2), EsParams(2.0, 0.5), init, budget=10)


def test_run_single_step():
    init = EsState(np.ones(2), 0.0)
    traj = run(sphere(2), EsParams(2.0, 0.5), init, budget=1, seed=5)
    assert traj.t_final == 1
    assert len(traj.log_dist) == 2
    assert len(traj.success) == 1


def test_run_deterministic():
    spec = hessian_family("h1", 4, 1)
    params = params_for_rule("const", 4)
    init = init_default(spec, 11)
    a = run(spec, params, init, 1500, seed=11)
    b = run(spec, params, init, 1500, seed=11)
    assert np.array_equal(a.log_dist, b.log_dist)
    assert np.array_equal(a.log_f, b.log_f)
    assert np.array_equal(a.log_sigma, b.log_sigma)
    assert np.array_equal(a.success, b.success)
    c = run(spec, params, init, 1500, seed=12)
    assert not np.array_equal(a.log_dist, c.log_dist)


@pytest.mark.parametrize("seed", range(10))
def test_sphere_reaches_value_floor(seed):
    spec = sphere(10)
    init = init_default(spec, seed)
    traj = run(spec, params_for_rule("const", 10), init, 20_000, seed=seed)
    assert traj.stop_reason == "f_floor"
    assert traj.t_final < 20_000


def test_trajectory_invariants():
    spec = hessian_family("h2", 6, 1)
    params = params_for_rule("const", 6)
    traj = run(spec, params, init_default(spec, 3), 2000, seed=3)
    la_up = math.log(params.alpha_up)
    la_dn = math.log(params.alpha_down)
    log_f = traj.log_f
    assert np.all(np.diff(log_f) <= 0)  # elitism
    for t in range(traj.t_final):
        # each recorded step moves log_sigma by exactly one factor, up to the
        # single rounding of the running sum
        delta = traj.log_sigma[t + 1] - traj.log_sigma[t]
        if traj.success[t]:
            assert delta == pytest.approx(la_up, abs=1e-12)
            assert log_f[t + 1] <= log_f[t]
        else:
            assert delta == pytest.approx(la_dn, abs=1e-12)
            assert log_f[t + 1] == log_f[t]
            assert traj.log_dist[t + 1] == traj.log_dist[t]
        if log_f[t + 1] < log_f[t]:
            assert traj.success[t]
    # multiplicative updates accumulate no drift over the whole run
    ups = int(traj.success.sum())
    downs = traj.t_final - ups
    reconstructed = traj.log_sigma[0] + ups * la_up + downs * la_dn
    assert traj.log_sigma[traj.t_final] == pytest.approx(reconstructed, abs=1e-9)


def test_transform_invariance_quick():
    report = invariance_report(n_seeds=3, steps=300, base_seed=5)
    assert report["ok"], report["details"]


def test_translation_equivariance_states():
    # Dyadic start and integer shift make the coordinate changes exact.
    spec = sphere(6)
    params = params_for_rule("const", 6)
    rng = np.random.default_rng(21)
    m0 = np.round(rng.standard_normal(6) * 2**26) / 2**26
    shift = rng.integers(-4, 5, size=6).astype(float)
    init = EsState(m0, math.log(0.5))
    base = run(spec, params, init, 400, seed=9)
    comp = make_composite(spec, CUBE_SHIFT, shift)
    moved = run(comp, params, EsState(m0 + shift, math.log(0.5)), 400, seed=9)
    assert np.array_equal(base.log_dist, moved.log_dist)
    assert np.array_equal(base.log_f, moved.log_f)
    assert np.array_equal(base.success, moved.success)
    np.testing.assert_array_equal(base.final_state.m + shift, moved.final_state.m)


def test_default_sigma0_sphere():
    assert default_sigma0(sphere(2), np.array([3.0, 4.0])) == pytest.approx(2.5)


def test_default_sigma0_weighted():
    # gradient (1,10,10) at ones; norm sqrt(201); trace 21
    spec = hessian_family("h1", 3, 1)
    expected = math.sqrt(201.0) / 21.0
    assert default_sigma0(spec, np.ones(3)) == pytest.approx(expected, rel=1e-15)


def test_default_sigma0_perturbed_fallback():
    spec = perturbed_family(4, 1)
    m0 = np.ones(4)
    expected = float(np.linalg.norm(spec.gradient(m0))) / (4 * spec.smoothness)
    assert default_sigma0(spec, m0) == pytest.approx(expected, rel=1e-15)


def test_init_default_reproducible_and_off_optimum():
    spec = sphere(5)
    a = init_default(spec, 42)
    b = init_default(spec, 42)
    np.testing.assert_array_equal(a.m, b.m)
    assert a.log_sigma == b.log_sigma
    assert np.any(a.m)


def test_trajectory_csv_round_trip(tmp_path):
    spec = sphere(3)
    traj = run(spec, params_for_rule("const", 3), init_default(spec, 1), 50, seed=1)
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,log_dist,log_f,log_sigma,success"
    assert len(lines) == traj.t_final + 2
    first = lines[1].split(",")
    assert float(first[1]) == traj.log_dist[0]
    assert lines[-1].endswith(",")  # final state row has no success flag


def test_trajectory_csv_thinning(tmp_path):
    spec = sphere(3)
    traj = run(spec, params_for_rule("const", 3), init_default(spec, 2), 100, seed=2)
    path = tmp_path / "thin.csv"
    traj.to_csv(path, thin=10)
    lines = path.read_text().splitlines()
    assert lines[0] == "# thin=10"
    data = [l for l in lines[2:]]
    assert len(data) == len(range(0, traj.t_final + 1, 10)) + (
        0 if traj.t_final % 10 == 0 else 1
    )
