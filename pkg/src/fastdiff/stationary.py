"""Radial stationary states of the rescaled flow by shooting.

    v'' + (n-1)/r v' + b v + v^p = 0,   v(0) = alpha,  v'(0) = 0

The centre height alpha is bisected until the first zero sits on the outer
radius. The ODE profile is then sampled on the grid and polished by Newton
on the discrete equation, so that the returned field is a fixed point of the
discrete flow (and the weighted eigenproblem has mu_1 = 1 to roundoff).

For n = 1 the domain is (0, R) and the shot starts at the midpoint, so the
target half-width is R/2.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solve_banded

from .errors import BracketError, ConfigurationError, NumericalError
from .grid import Field, RadialGrid, integrate

logger = logging.getLogger(__name__)


class MultiplicityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ShootingProblem:
    n: int
    p: float
    b: float = 0.0
    R: float = 1.0
    alpha_bracket: tuple[float, float] = (1e-3, 1e3)
    ode_tol: float = 1e-12
    bisect_tol: float = 1e-12
    scan_points: int = 40

    def __post_init__(self):
        lo, hi = self.alpha_bracket
        if not (0 < lo < hi):
            raise ConfigurationError("bracket must be ordered and positive", "alpha_bracket")
        if self.p <= 1:
            raise ConfigurationError("exponent must exceed 1", "p")
        if self.b < 0:
            raise ConfigurationError("must be >= 0", "b")
        if self.R <= 0:
            raise ConfigurationError("must be positive", "R")
        if self.n >= 3 and abs(self.p - (self.n + 2) / (self.n - 2)) < 1e-14 and (self.b <= 0 or self.n < 4):
            logger.info("critical problem with n=%d, b=%g: positive solutions are not expected", self.n, self.b)

    @property
    def target(self) -> float:
        return self.R / 2 if self.n == 1 else self.R


@dataclass
class ShotResult:
    alpha: float
    first_zero: float | None
    sol: object
    r0: float

    def __call__(self, r):
        """Profile at radii r (valid up to the first zero or the horizon)."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        inner = r < self.r0
        out[~inner] = self.sol.sol(r[~inner])[0]
        out[inner] = self._series(r[inner])
        return out

    def _series(self, r):
        return self.alpha - self._c * r**2 / (2 * self._n)


def shoot(prob: ShootingProblem, alpha: float) -> ShotResult:
    """Integrate the radial ODE from v(0) = alpha; report the first zero (or None)."""
    if not alpha > 0:
        raise ConfigurationError("centre height must be positive", "alpha")
    n, p, b = prob.n, prob.p, prob.b
    c = b * alpha + alpha**p
    scale = 1.0 / math.sqrt(b + alpha ** (p - 1.0))
    r0 = 1e-6 * min(scale, prob.target)
    y0 = [alpha - c * r0**2 / (2 * n), -c * r0 / n]

    def rhs(r, y):
        v, dv = y
        vp = math.copysign(abs(v) ** p, v)
        return [dv, -(n - 1) / r * dv - b * v - vp]

    def hit_zero(r, y):
        return y[0]

    hit_zero.terminal = True
    hit_zero.direction = -1
    horizon = 10.0 * prob.target
    sol = solve_ivp(
        rhs, (r0, horizon), y0, method="DOP853", rtol=prob.ode_tol, atol=prob.ode_tol * alpha * 1e-3,
        events=hit_zero, dense_output=True,
    )
    if sol.status == -1:
        raise NumericalError(f"ODE integration failed: {sol.message}")
    z = float(sol.t_events[0][0]) if sol.t_events[0].size else None
    res = ShotResult(alpha=alpha, first_zero=z, sol=sol, r0=r0)
    res._c, res._n = c, n
    return res


def _zero_or_inf(prob, alpha):
    z = shoot(prob, alpha).first_zero
    return math.inf if z is None else z


def _bisect(prob: ShootingProblem, lo: float, hi: float) -> float:
    # first_zero(lo) > target > first_zero(hi); bisect in log(alpha)
    target = prob.target
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        z = _zero_or_inf(prob, mid)
        if abs(z - target) < prob.bisect_tol:
            return mid
        if z > target:
            lo = mid
        else:
            hi = mid
        if hi / lo - 1 < 1e-15:
            return mid
    return math.sqrt(lo * hi)


def stationary_residual(v: Field, p: float, b: float) -> np.ndarray:
    """Discrete residual Lap_h v + b v + v^p at the free nodes, relative to sup v^p."""
    g = v.grid
    vals = v.values
    lap = -g.apply_stiffness(vals) / g.quad_weights
    res = lap + b * vals + np.abs(vals) ** p
    return res[g.free] / max(np.abs(vals).max() ** p, 1e-300)


def polish(v: Field, p: float, b: float, tol: float = 1e-14, max_iter: int = 30) -> Field:
    """Newton on the discrete stationary equation K v - b W v - W v^p = 0."""
    g = v.grid
    fr = g.free
    V = g.quad_weights[fr]
    kd, ko = g.stiffness_tridiag()
    u = np.array(v.values, dtype=float)
    ab = np.zeros((3, V.size))
    for _ in range(max_iter):
        x = u[fr]
        res = g.apply_stiffness(u)[fr] - b * V * x - V * np.abs(x) ** p
        ab[1] = kd - b * V - V * p * np.abs(x) ** (p - 1)
        ab[0, 1:] = ko
        ab[2, :-1] = ko
        delta = solve_banded((1, 1), ab, -res)
        u[fr] = x + delta
        if np.abs(delta).max() <= tol * np.abs(u).max():
            break
    else:
        raise NumericalError("Newton polish of the stationary profile did not converge")
    return Field(g, u, "stationary")


def _sample(shot: ShotResult, grid: RadialGrid, prob: ShootingProblem) -> np.ndarray:
    z = shot.first_zero
    if grid.n == 1:
        x = np.abs(grid.nodes - grid.R / 2) * (z / (grid.R / 2))
    else:
        x = grid.nodes * (z / grid.R)
    vals = shot(np.minimum(x, z))
    vals[grid.dirichlet_mask] = 0.0
    return np.maximum(vals, 0.0)


def energy_of(v: Field, p: float, b: float) -> float:
    g = v.grid
    vals = v.values
    return float(vals @ g.apply_stiffness(vals)) - b * integrate(vals**2, g) - 2.0 / (p + 1.0) * integrate(np.abs(vals) ** (p + 1), g)


@dataclass
class StationarySolution:
    field: Field
    alpha: float
    residual: float
    energy: float
    candidates: list[tuple[float, float]]


def find_stationary(prob: ShootingProblem, grid: RadialGrid, residual_tol: float = 1e-6) -> StationarySolution:
    """Full solve with metadata; see :func:`solve_stationary`."""
    if grid.n != prob.n or abs(grid.R - prob.R) > 1e-14 * prob.R:
        raise ConfigurationError("grid does not match the shooting problem", "grid")
    target = prob.target
    lo, hi = prob.alpha_bracket
    alphas = np.geomspace(lo, hi, prob.scan_points)
    zeros = np.array([_zero_or_inf(prob, a) for a in alphas])
    if not zeros[0] > target or not zeros[-1] < target:
        raise BracketError(
            f"bracket {prob.alpha_bracket} does not straddle the radius {target:g}: "
            f"first zeros {zeros[0]:.6g} .. {zeros[-1]:.6g}"
        )
    sign = zeros > target
    roots = [
        _bisect(prob, alphas[i], alphas[i + 1])
        for i in range(alphas.size - 1)
        if sign[i] and not sign[i + 1]
    ]
    if len(roots) > 1:
        warnings.warn(f"first-zero map is not monotone: candidate heights {roots}", MultiplicityWarning, stacklevel=2)
    candidates = []
    best = None
    for alpha in roots:
        shot = shoot(prob, alpha)
        if shot.first_zero is None:
            continue
        v = polish(Field(grid, _sample(shot, grid, prob), "stationary"), prob.p, prob.b)
        F = energy_of(v, prob.p, prob.b)
        candidates.append((alpha, F))
        if best is None or F < best[2]:
            best = (alpha, v, F)
    if best is None:
        raise BracketError("no stationary profile found in the bracket")
    alpha, v, F = best
    if np.any(v.values[grid.free] <= 0):
        raise NumericalError("polished stationary profile is not positive")
    res = float(np.abs(stationary_residual(v, prob.p, prob.b)).max())
    if res > residual_tol:
        raise NumericalError(f"stationary residual {res:.3e} exceeds {residual_tol:.1e}")
    return StationarySolution(field=v, alpha=alpha, residual=res, energy=F, candidates=candidates)


def solve_stationary(prob: ShootingProblem, grid: RadialGrid) -> Field:
    """Positive radial solution of Lap v + b v + v^p = 0 with zero Dirichlet data.

    Raises BracketError when no bracketed centre height yields a first zero
    at the outer radius (for instance the critical problem with b = 0, where
    no such solution exists on a ball).
    """
    return find_stationary(prob, grid).field
