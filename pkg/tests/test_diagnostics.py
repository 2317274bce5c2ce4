from __future__ import annotations

import math

import numpy as np
import pytest

from fastdiff import bubbles as bb
from fastdiff.diagnostics import (
    RateModel,
    curvature_R,
    default_q_list,
    energy_F,
    fit_rate,
    moments,
    record,
    relative_error,
    volume_identity_residual,
)
from fastdiff.errors import ContractError, FitFailure
from fastdiff.flow import FlowParams, step_rescaled
from fastdiff.grid import Field, build_grid, integrate


def _evaluated(curv):
    return curv.field.values[curv.evaluated]


def test_R_of_stationary_is_one(ball):
    curv = curvature_R(ball.v_inf, ball.params)
    assert np.max(np.abs(_evaluated(curv) - 1)) < 1e-6
    assert not curv.evaluated[-1]


@pytest.mark.parametrize("c", [0.9, 1.05, 2.0])
def test_R_of_scaled_profile(ball, c):
    p = ball.params.p
    base = _evaluated(curvature_R(ball.v_inf, ball.params))
    scaled = _evaluated(curvature_R(ball.v_inf.with_values(c * ball.v_inf.values), ball.params))
    # exact up to cancellation in the numerator near the boundary
    np.testing.assert_allclose(scaled / base, c ** (1 - p), rtol=1e-6)


def test_moments_closed_form(ball):
    c, p = 1.1, ball.params.p
    v = ball.v_inf.with_values(c * ball.v_inf.values)
    M, trunc = moments(v, curvature_R(v, ball.params), [1.0, 2.0], ball.params)
    base = integrate(ball.v_inf.values ** (p + 1), ball.grid)
    for q in (1.0, 2.0):
        assert M[q] == pytest.approx(abs(c ** (1 - p) - 1) ** q * c ** (p + 1) * base, rel=1e-6)
    assert not trunc


def test_moments_of_stationary_small(ball):
    M, _ = moments(ball.v_inf, curvature_R(ball.v_inf, ball.params), [1.0, 2.0], ball.params)
    assert M[1.0] < 1e-5 and M[2.0] < 1e-10


def test_R_undefined_for_zero(ball):
    with pytest.raises(ContractError):
        curvature_R(Field(ball.grid, np.zeros(ball.grid.size)), ball.params)


def test_time_derivative_identity(ball):
    """R = 1 - p d_t v / v, with a centred quotient; the defect is first order in dt."""
    p = ball.params.p
    v0 = Field(ball.grid, ball.v_inf.values * (1 + 0.3 * np.cos(np.pi * ball.grid.nodes)), "rescaled-v")
    for _ in range(20):  # leave the initial transient
        v0 = step_rescaled(v0, ball.params, 0.05)
    defects = []
    for dt in (2e-3, 1e-3):
        vm = v0
        vc = step_rescaled(vm, ball.params, dt)
        vp = step_rescaled(vc, ball.params, dt)
        curv = curvature_R(vc, ball.params)
        ev = curv.evaluated
        rhs = np.zeros_like(vc.values)
        rhs[ev] = 1 - p * (vp.values[ev] - vm.values[ev]) / (2 * dt) / vc.values[ev]
        defects.append(np.max(np.abs(curv.field.values[ev] - rhs[ev])))
    assert 0.4 < defects[1] / defects[0] < 0.6
    assert defects[1] < 1e-3


def test_volume_identity_converges(ball):
    v0 = Field(ball.grid, ball.v_inf.values * (1 + 0.3 * np.cos(np.pi * ball.grid.nodes)), "rescaled-v")
    res = [volume_identity_residual(v0, step_rescaled(v0, ball.params, dt), dt, ball.params) for dt in (1e-3, 5e-4)]
    assert res[1] < 0.6 * res[0] and res[1] < 0.05


def test_energy_of_zero():
    g = build_grid(4, 1.0, 64)
    assert energy_F(Field(g, np.zeros(g.size)), FlowParams.critical(4)) == 0.0


def test_energy_of_concentrated_bubble():
    g = build_grid(4, 1.0, 2048, stretch=-8)
    xi = bb.corrected_bubble(bb.Bubble(4, 1000.0), g)
    assert energy_F(xi, FlowParams.critical(4)) == pytest.approx(16 * math.pi**2 / 3, rel=1e-2)


def test_energy_monotone_and_m2_budget(ball):
    params = ball.params
    v = Field(ball.grid, ball.v_inf.values * (1 + 0.3 * np.cos(np.pi * ball.grid.nodes)), "rescaled-v")
    dt = 0.01
    Fs, budget = [energy_F(v, params)], 0.0
    for _ in range(100):
        v = step_rescaled(v, params, dt)
        Fs.append(energy_F(v, params))
        M, _ = moments(v, curvature_R(v, params), [2.0], params)
        budget += dt * M[2.0]
    assert np.all(np.diff(Fs) <= 1e-10 * abs(Fs[0]))
    n = params.n
    assert budget <= (n + 2) / (2 * (n - 2)) * (Fs[0] - Fs[-1]) * 1.05


def test_relative_error(ball):
    v = ball.v_inf
    assert relative_error(v, v) == 0.0
    assert relative_error(v.with_values(1.05 * v.values), v) == pytest.approx(0.05, rel=1e-12)
    assert relative_error(v.with_values(1.05 * v.values), v, interior_frac=0.2) == pytest.approx(0.05, rel=1e-12)
    bad = v.values.copy()
    bad[5] = 0
    with pytest.raises(ContractError):
        relative_error(v, v.with_values(bad))


def test_records_along_run(ball_run):
    recs = ball_run.records
    assert all(b.t > a.t for a, b in zip(recs, recs[1:]))
    masses = [r.mass_crit for r in recs]
    assert max(masses) / min(masses) < 10
    for r in recs:
        assert all(m >= 0 for m in r.M.values())
        assert r.M[1.0] <= math.sqrt(r.M[2.0] * r.mass_crit) * (1 + 1e-12)
    tail = [r.rel_err for r in recs if r.t >= 10]
    assert tail[-1] < 1e-2 * tail[0]
    assert len(recs[0].row(default_q_list(ball_run.setup.params))) == 9


def test_record_without_profile(ball):
    r = record(0.0, ball.v_inf, ball.params)
    assert r.rel_err is None and math.isnan(r.row([1.0, 2.0])[-2])


def test_fit_rate_planted_models():
    t = np.linspace(5, 50, 100)
    v = fit_rate(np.column_stack([t, 3 * np.exp(-0.7 * t)]), window=1.0)
    assert v.model is RateModel.EXPONENTIAL and v.rate == pytest.approx(0.7, abs=1e-3)
    v = fit_rate(np.column_stack([t, 2 * t**-1.5]), window=1.0)
    assert v.model is RateModel.POLYNOMIAL and v.theta == pytest.approx(1.5, abs=1e-3)
    js = v.to_json()
    assert js["model"] == "POLYNOMIAL" and "r2_exponential" in js


def test_fit_rate_default_window():
    t = np.linspace(0, 50, 101)
    v = fit_rate(np.column_stack([t, np.exp(-0.2 * t)]))
    assert v.window[0] >= 5 and v.samples >= 10


def test_fit_rate_failures():
    t = np.linspace(5, 10, 5)
    with pytest.raises(FitFailure):
        fit_rate(np.column_stack([t, np.exp(-t)]), window=1.0)
    t = np.linspace(5, 50, 40)
    e = np.exp(-t)
    e[-1] = 0
    with pytest.raises(FitFailure):
        fit_rate(np.column_stack([t, e]), window=1.0)
