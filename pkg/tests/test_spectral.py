from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from scipy.linalg import eigh

from fastdiff.grid import Field, build_grid
from fastdiff.spectral import (
    Verdict,
    dirichlet_eigenpairs,
    dirichlet_lambda1,
    kernel_condition,
    project_pi,
    weighted_cosine,
    weighted_spectrum,
)
from fastdiff.stationary import ShootingProblem, solve_stationary


@pytest.mark.parametrize(
    "n,R,exact",
    [
        (1, 1.0, math.pi**2),
        (3, math.pi, 1.0),
        (4, 1.0, float(mpmath.besseljzero(1, 1)) ** 2),
        (2, 1.0, float(mpmath.besseljzero(0, 1)) ** 2),
    ],
)
def test_lambda1_against_bessel_zeros(n, R, exact):
    g = build_grid(n, R, 512)
    assert abs(dirichlet_lambda1(g) / exact - 1) < 1e-4


def test_lambda1_second_order():
    exact = float(mpmath.besseljzero(1, 1)) ** 2
    e = [abs(dirichlet_lambda1(build_grid(4, 1.0, N)) - exact) for N in (64, 128)]
    assert 3.0 < e[0] / e[1] < 5.0


def _dense_reference(v, p, b):
    g = v.grid
    fr = g.free
    kd, ko = g.stiffness_tridiag()
    A = np.diag(kd - b * g.quad_weights[fr]) + np.diag(ko, 1) + np.diag(ko, -1)
    M = np.diag(g.quad_weights[fr] * v.values[fr] ** (p - 1))
    return eigh(A, M, eigvals_only=True)


def test_weighted_spectrum_matches_dense_solver(ball):
    spec = weighted_spectrum(ball.v_inf, ball.params.p, ball.params.b, 8)
    ref = _dense_reference(ball.v_inf, ball.params.p, ball.params.b)[:8]
    np.testing.assert_allclose(spec.mu, ref, rtol=1e-8)


def test_interval_subcritical_spectrum():
    g = build_grid(1, 1.0, 256)
    v = solve_stationary(ShootingProblem(1, 2.0), g)
    spec = weighted_spectrum(v, 2.0, 0.0, 4)
    assert spec.mu[0] == pytest.approx(1.0, abs=1e-9)
    assert spec.L == 1
    np.testing.assert_allclose(spec.mu, _dense_reference(v, 2.0, 0.0)[:4], rtol=1e-8)


def test_first_mode_is_the_profile(ball):
    spec = weighted_spectrum(ball.v_inf, ball.params.p, ball.params.b)
    assert spec.mu[0] == pytest.approx(1.0, abs=1e-9)
    assert weighted_cosine(spec.phi[0], ball.v_inf, spec.weight) > 1 - 1e-10
    assert np.max(np.abs(spec.gram() - np.eye(spec.K))) < 1e-10
    assert spec.L == 1


def test_projection_kills_low_modes(ball):
    spec = weighted_spectrum(ball.v_inf, ball.params.p, ball.params.b)
    rng = np.random.default_rng(3)
    f = Field(ball.grid, rng.standard_normal(ball.grid.size), "generic")
    pf = project_pi(f, spec, L=3)
    for phi in spec.phi[:3]:
        assert abs(np.dot(ball.grid.quad_weights, pf.values * phi.values)) < 1e-10 * np.abs(f.values).sum()
    pf2 = project_pi(pf, spec, L=3)
    assert np.max(np.abs(pf2.values - pf.values)) < 1e-10 * np.abs(pf.values).max()


def test_dirichlet_eigenpairs_are_orthonormal():
    g = build_grid(3, 1.0, 200)
    mu, X = dirichlet_eigenpairs(g, 4)
    G = (X.T * g.quad_weights) @ X
    assert np.max(np.abs(G - np.eye(4))) < 1e-10
    assert np.all(np.diff(mu) > 0)


def test_kernel_condition_cases():
    assert kernel_condition([1.0, 3.58, 7.8], 3.0).status is Verdict.NONDEGENERATE
    assert kernel_condition([1.0, 3.01, 7.8], 3.0).status is Verdict.DEGENERATE_SUSPECT
    assert kernel_condition([1.0, 2.0], 3.0).status is Verdict.INCONCLUSIVE
    v = kernel_condition([1.0, 3.58], 3.0, tol=1.0)
    assert v.status is Verdict.DEGENERATE_SUSPECT and v.gap == pytest.approx(0.58)


def test_ball_verdict_nondegenerate(ball):
    spec = weighted_spectrum(ball.v_inf, ball.params.p, ball.params.b)
    v = kernel_condition(spec, ball.params.p)
    assert v.status is Verdict.NONDEGENERATE
    assert v.gap > 0.05 * ball.params.p
    out = spec.to_json(v)
    assert out["verdict"] == "NONDEGENERATE" and out["L"] == 1
