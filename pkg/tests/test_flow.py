from __future__ import annotations

import math

import numpy as np
import pytest

from fastdiff.errors import ConfigurationError, ContractError, FitFailure
from fastdiff.flow import (
    FlowParams,
    Trajectory,
    correspondence_check,
    critical_exponent,
    estimate_extinction_time,
    extinction_time_from_mass,
    nehari_factor,
    rescale_to_v,
    run_original,
    run_rescaled,
    separable_initial_data,
    step_original,
    step_rescaled,
)
from fastdiff.grid import Field, build_grid, integrate
from fastdiff.stationary import ShootingProblem, solve_stationary


@pytest.fixture(scope="module")
def interval():
    g = build_grid(1, 1.0, 256)
    v = solve_stationary(ShootingProblem(1, 2.0), g)
    return g, v, FlowParams(n=1, p=2.0, dt_max=1e-2)


def test_critical_exponent():
    assert critical_exponent(4) == 3.0
    assert critical_exponent(6) == 2.0
    with pytest.raises(ConfigurationError):
        critical_exponent(2)


@pytest.mark.parametrize("kw,field", [({"p": 1.0}, "p"), ({"b": -0.1}, "b"), ({"dt_init": 1.0}, "dt_init")])
def test_params_validation(kw, field):
    base = {"n": 4, "p": 3.0}
    base.update(kw)
    with pytest.raises(ConfigurationError) as err:
        FlowParams(**base)
    assert err.value.field == field


def test_b_above_lambda1_rejected(ball):
    params = FlowParams.critical(4, 1.01 * ball.lambda1)
    with pytest.raises(ConfigurationError) as err:
        run_rescaled(ball.v_inf, params, 1.0)
    assert err.value.field == "b"


def test_separable_solution(interval):
    g, v, params = interval
    u0 = separable_initial_data(v, params, 1.0)
    traj = run_original(u0, params, 2.0, save_times=np.round(np.arange(0.02, 2.0, 0.02), 12))
    assert traj.extinct
    assert traj.T_star_estimate == pytest.approx(1.0, rel=0.01)
    j = int(np.argmin(np.abs(np.asarray(traj.times) - 0.5)))
    assert traj.times[j] == pytest.approx(0.5)
    fr = g.free
    assert np.max(np.abs(traj.snapshots[j].values[fr] / (0.5 * u0.values[fr]) - 1)) < 0.005


def test_original_step_preserves_shape_of_separable(interval):
    g, v, params = interval
    u0 = separable_initial_data(v, params, 1.0)
    u1 = step_original(u0, params, 1e-3)
    ratio = u1.values[g.free] / u0.values[g.free]
    assert np.ptp(ratio) < 1e-6
    assert ratio.mean() < 1


def test_rescaled_fixed_point(ball):
    v = Field(ball.grid, ball.v_inf.values, "rescaled-v")
    for _ in range(20):
        v = step_rescaled(v, ball.params, 0.5)
    assert np.max(np.abs(v.values - ball.v_inf.values)) < 1e-9


def test_rescaled_run_converges_with_anchoring(ball):
    v0 = Field(ball.grid, 1.01 * ball.v_inf.values, "rescaled-v")
    traj = run_rescaled(v0, ball.params, 20.0, save_times=[5, 10, 20], renormalize=True)
    assert traj.times == [0.0, 5.0, 10.0, 20.0]
    err = np.max(np.abs(traj.snapshots[-1].values - ball.v_inf.values)) / ball.v_inf.values.max()
    assert err < 1e-8


def test_nehari_factor_of_stationary_is_one(ball):
    assert nehari_factor(ball.v_inf, ball.params) == pytest.approx(1.0, abs=1e-10)
    assert nehari_factor(ball.v_inf.with_values(2 * ball.v_inf.values), ball.params) == pytest.approx(0.5, rel=1e-10)


def test_rejects_negative_data(ball):
    vals = ball.v_inf.values.copy()
    vals[3] = -1
    with pytest.raises(ContractError):
        run_rescaled(Field(ball.grid, vals, "rescaled-v"), ball.params, 1.0)


def test_extinction_fit_on_exact_law():
    p = 3.0
    t = np.linspace(0, 1.8, 40)
    mass = 5.0 * (1 - t / 2.0) ** ((p + 1) / (p - 1))
    assert extinction_time_from_mass(t, mass, p) == pytest.approx(2.0, rel=1e-12)


def test_extinction_fit_failures():
    with pytest.raises(FitFailure):
        extinction_time_from_mass([0, 1, 2], [3, 2, 1], 2.0)
    with pytest.raises(FitFailure):
        extinction_time_from_mass([0, 1, 2, 3], [1, 2, 3, 4], 2.0)
    traj = Trajectory(params=FlowParams(n=1, p=2.0))
    with pytest.raises(FitFailure):
        estimate_extinction_time(traj)


def test_trajectory_times_strictly_increase(ball):
    traj = Trajectory(params=ball.params)
    traj.append(0.0, ball.v_inf)
    with pytest.raises(ContractError):
        traj.append(0.0, ball.v_inf)


def test_rescale_to_v_maps_separable_onto_profile(interval):
    g, v, params = interval
    u0 = separable_initial_data(v, params, 1.0)
    u_tau = u0.with_values(u0.values * (1 - 0.6))
    mapped, t = rescale_to_v(u_tau, 0.6, 1.0, params)
    assert t == pytest.approx(2 * math.log(1 / 0.4))
    np.testing.assert_allclose(mapped.values, v.values, rtol=1e-12, atol=1e-14)
    with pytest.raises(ContractError):
        rescale_to_v(u0, 1.0, 1.0, params)


def test_correspondence_between_flows(ball):
    params = FlowParams.critical(4, ball.params.b, dt_max=2e-3)
    u0 = Field(ball.grid, 0.5 * ball.v_inf.values * (1 + 0.2 * np.cos(np.pi * ball.grid.nodes)), "original-u")
    traj_u = run_original(u0, params, 10.0)
    T = traj_u.T_star_estimate
    v0, _ = rescale_to_v(u0, 0.0, T, params)
    traj_v = run_rescaled(v0, FlowParams.critical(4, ball.params.b, dt_max=2e-3), 1.0)
    rep = correspondence_check(traj_u, traj_v, T, tolerance=0.02)
    assert rep.matched > 10
    assert rep.ok, rep.max_discrepancy


def test_mass_decreases_along_original_flow(ball):
    params = FlowParams.critical(4, ball.params.b, dt_max=1e-2)
    u0 = Field(ball.grid, 0.3 * ball.v_inf.values, "original-u")
    traj = run_original(u0, params, 10.0)
    m = traj.masses()
    assert traj.extinct and np.all(np.diff(m) < 0)
    assert integrate(traj.snapshots[-1].values ** 4, ball.grid) < 1e-7 * m[0]
