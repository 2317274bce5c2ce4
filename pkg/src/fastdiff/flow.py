"""Time integration of the fast diffusion flows.

Original flow:  d/dt u^p = Lap u + b u                 (extinguishes at T*)
Rescaled flow:  d/dt v^p = Lap v + b v + v^p           (autonomous, t -> inf)

Both are discretized by backward Euler in the mass variable w = u^p. The
nonlinear system for the new state is solved by damped Newton in the height
variable u, whose Jacobian is a symmetric tridiagonal matrix; the discrete
equations are exactly those of the w-formulation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConfigurationError, ContractError, FitFailure, IntegrationFailure, StepRejected
from .grid import Field, RadialGrid, integrate

logger = logging.getLogger(__name__)


def critical_exponent(n: int) -> float:
    if n < 3:
        raise ConfigurationError("critical exponent needs n >= 3", "n")
    return (n + 2) / (n - 2)


@dataclass(frozen=True)
class FlowParams:
    n: int
    p: float
    b: float = 0.0
    dt_init: float = 1e-3
    dt_min: float = 1e-12
    dt_max: float = 0.05
    newton_tol: float = 1e-12
    newton_max_iter: int = 25
    mass_floor: float = 1e-8
    max_mass_drop: float = 0.10

    def __post_init__(self):
        if not self.p > 1:
            raise ConfigurationError("diffusion exponent must exceed 1", "p")
        if self.b < 0:
            raise ConfigurationError("zeroth-order coefficient must be >= 0", "b")
        if not (0 < self.dt_min <= self.dt_init <= self.dt_max):
            raise ConfigurationError("need 0 < dt_min <= dt_init <= dt_max", "dt_init")
        if self.newton_tol <= 0:
            raise ConfigurationError("must be positive", "newton_tol")
        if self.newton_max_iter < 1:
            raise ConfigurationError("must be >= 1", "newton_max_iter")
        if not (0 < self.mass_floor < 1):
            raise ConfigurationError("relative mass floor must lie in (0, 1)", "mass_floor")

    @classmethod
    def critical(cls, n: int, b: float = 0.0, **kw) -> FlowParams:
        return cls(n=n, p=critical_exponent(n), b=b, **kw)

    @property
    def is_critical(self) -> bool:
        return self.n >= 3 and abs(self.p - (self.n + 2) / (self.n - 2)) < 1e-14

    @property
    def mass_exponent(self) -> float:
        """Exponent of the conserved-scale mass, p + 1 (= 2n/(n-2) when critical)."""
        return self.p + 1.0

    def check_against(self, grid: RadialGrid, lambda1: float | None = None) -> float:
        """Validate against a grid: dimension match and b < lambda_1. Returns lambda_1."""
        from .spectral import dirichlet_lambda1

        if grid.n != self.n:
            raise ConfigurationError(f"grid dimension {grid.n} != {self.n}", "n")
        lam1 = dirichlet_lambda1(grid) if lambda1 is None else lambda1
        if self.b >= lam1:
            raise ConfigurationError(f"b = {self.b:g} must be below lambda_1 = {lam1:.6g}", "b")
        return lam1


@dataclass
class Trajectory:
    params: FlowParams
    times: list[float] = field(default_factory=list)
    snapshots: list[Field] = field(default_factory=list)
    extinct: bool = False
    T_star_estimate: float | None = None
    kind: str = "original-u"
    anchor_factors: list[float] = field(default_factory=list)
    newton_iterations: int = 0
    steps: int = 0

    def append(self, t: float, f: Field) -> None:
        if self.times and not t > self.times[-1]:
            raise ContractError("snapshot times must increase strictly")
        self.times.append(float(t))
        self.snapshots.append(f)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def grid(self) -> RadialGrid:
        return self.snapshots[0].grid

    def values(self) -> np.ndarray:
        return np.array([s.values for s in self.snapshots])

    def masses(self, exponent: float | None = None) -> np.ndarray:
        q = self.params.mass_exponent if exponent is None else exponent
        return np.array([integrate(s.values**q, s.grid) for s in self.snapshots])


def _spow(u: np.ndarray, p: float) -> np.ndarray:
    return np.sign(u) * np.abs(u) ** p


def _newton_step(u_old: np.ndarray, grid: RadialGrid, params: FlowParams, dt: float, source: float):
    """Solve (u^p - u_old^p)/dt = Lap u + b u + source * u^p on the free nodes."""
    fr = grid.free
    p, b = params.p, params.b
    V = grid.quad_weights[fr]
    kd, ko = grid.stiffness_tridiag()
    w_old = _spow(u_old[fr], p)
    u = u_old[fr].copy()
    full = np.zeros_like(u_old)

    def residual(x):
        full[fr] = x
        ku = grid.apply_stiffness(full)[fr]
        xp = _spow(x, p)
        return V * (xp - w_old) / dt + ku - b * V * x - source * V * xp

    res = residual(u)
    rnorm = np.linalg.norm(res / V)
    scale = max(np.abs(u).max(), 1e-300)
    ab = np.zeros((3, u.size))
    for it in range(1, params.newton_max_iter + 1):
        dpow = p * np.abs(u) ** (p - 1.0)
        ab[1] = kd - b * V + V * dpow * (1.0 / dt - source)
        ab[0, 1:] = ko
        ab[2, :-1] = ko
        try:
            delta = solve_banded((1, 1), ab, -res)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise StepRejected(f"singular Jacobian: {exc}") from exc
        lam = 1.0
        for _ in range(12):
            trial = u + lam * delta
            res_t = residual(trial)
            rn_t = np.linalg.norm(res_t / V)
            if rn_t <= (1.0 - 1e-4 * lam) * rnorm or rn_t < 1e-300 or np.abs(lam * delta).max() <= params.newton_tol * scale:
                break
            lam *= 0.5
        else:
            raise StepRejected("line search failed")
        u, res, rnorm = trial, res_t, rn_t
        scale = max(np.abs(u).max(), 1e-300)
        if np.abs(lam * delta).max() <= params.newton_tol * scale:
            full[fr] = u
            return full.copy(), it
    raise StepRejected(f"Newton did not converge in {params.newton_max_iter} iterations")


def _step(u: Field, params: FlowParams, dt: float, source: float, kind: str) -> tuple[Field, int]:
    if dt <= 0:
        raise ContractError("dt must be positive")
    if dt < params.dt_min:
        raise IntegrationFailure(f"dt = {dt:g} below dt_min = {params.dt_min:g}")
    vals = np.asarray(u.values, dtype=float)
    if np.any(vals < 0):
        raise ContractError("state must be nonnegative")
    if not np.any(vals > 0):
        return u.with_values(np.zeros_like(vals), kind), 0
    new, iters = _newton_step(vals, u.grid, params, dt, source)
    np.maximum(new, 0.0, out=new)
    new[u.grid.dirichlet_mask] = 0.0
    return Field(u.grid, new, kind), iters


def step_original(u: Field, params: FlowParams, dt: float) -> Field:
    """One backward-Euler step of d/dt u^p = Lap u + b u."""
    return _step(u, params, dt, 0.0, "original-u")[0]


def step_rescaled(v: Field, params: FlowParams, dt: float) -> Field:
    """One backward-Euler step of d/dt v^p = Lap v + b v + v^p."""
    return _step(v, params, dt, 1.0, "rescaled-v")[0]


def nehari_factor(v: Field, params: FlowParams) -> float:
    """Scalar c with c*v on the Nehari set: ||c v||^2 = int (c v)^{p+1}.

    c^{p-1} is the weighted mean of the curvature quantity R over the
    volume v^{p+1} dx, so c*v has int (R - 1) v^{p+1} = 0.
    """
    g = v.grid
    vals = v.values
    energy = float(vals @ g.apply_stiffness(vals)) - params.b * integrate(vals**2, g)
    mass = integrate(vals ** (params.p + 1.0), g)
    if mass <= 0 or energy <= 0:
        raise ContractError("cannot normalize a vanishing state")
    return (energy / mass) ** (1.0 / (params.p - 1.0))


def _integrate(
    u0: Field,
    params: FlowParams,
    t_end: float,
    *,
    source: float,
    kind: str,
    save_times=None,
    renormalize: bool = False,
    detect_extinction: bool = False,
    fixed_dt: float | None = None,
) -> Trajectory:
    params.check_against(u0.grid)
    vals0 = np.asarray(u0.values, dtype=float)
    if np.any(vals0 < 0) or not np.any(vals0[~u0.grid.dirichlet_mask] > 0):
        raise ContractError("initial data must be nonnegative and not identically zero")
    if t_end < 0:
        raise ContractError("t_end must be >= 0")
    traj = Trajectory(params=params, kind=kind)
    u = Field(u0.grid, vals0, kind)
    if renormalize:
        c = nehari_factor(u, params)
        u = u.with_values(c * u.values)
        traj.anchor_factors.append(c)
    traj.append(0.0, u)
    if t_end == 0:
        return traj

    targets = None
    if save_times is not None:
        targets = sorted(float(s) for s in save_times if 0 < s <= t_end)
        if not targets or targets[-1] < t_end:
            targets.append(float(t_end))
    mass0 = integrate(u.values ** params.mass_exponent, u.grid)
    mass = mass0
    t = 0.0
    dt = fixed_dt if fixed_dt is not None else params.dt_init
    k_target = 0
    while t < t_end * (1 - 1e-14):
        step_dt = min(dt, t_end - t)
        if targets is not None:
            step_dt = min(step_dt, targets[k_target] - t)
        try:
            new, iters = _step(u, params, step_dt, source, kind)
        except StepRejected as exc:
            if fixed_dt is not None:
                raise IntegrationFailure(f"fixed-step Newton failure at t = {t:g}: {exc}") from exc
            dt = step_dt / 2
            if dt < params.dt_min:
                raise IntegrationFailure(f"dt underflow at t = {t:g}") from exc
            continue
        new_mass = integrate(new.values ** params.mass_exponent, new.grid)
        if detect_extinction and fixed_dt is None and new_mass < (1 - params.max_mass_drop) * mass and step_dt > params.dt_min * 2:
            dt = max(step_dt / 2, params.dt_min)
            continue
        traj.newton_iterations += iters
        traj.steps += 1
        t_new = t + step_dt
        if targets is not None and abs(t_new - targets[k_target]) <= 1e-12 * max(1.0, t_end):
            t_new = targets[k_target]
        if renormalize:
            c = nehari_factor(new, params)
            new = new.with_values(c * new.values)
            traj.anchor_factors.append(c)
            new_mass = integrate(new.values ** params.mass_exponent, new.grid)
        t = t_new
        u, mass = new, new_mass
        if targets is None:
            traj.append(t, u)
        elif t == targets[k_target]:
            traj.append(t, u)
            k_target = min(k_target + 1, len(targets) - 1)
        if detect_extinction and mass < params.mass_floor * mass0:
            traj.extinct = True
            if targets is not None and traj.times[-1] != t:
                traj.append(t, u)
            break
        if fixed_dt is None:
            if iters <= 3:
                dt = min(step_dt * 1.5, params.dt_max)
            elif iters >= 6:
                dt = max(step_dt * 0.6, params.dt_min)
            else:
                dt = min(max(dt, step_dt), params.dt_max)
    logger.debug("%s run: %d steps, %d Newton iterations", kind, traj.steps, traj.newton_iterations)
    return traj


def run_original(u0: Field, params: FlowParams, t_end: float, save_times=None) -> Trajectory:
    """Integrate the original flow until t_end or extinction (mass below mass_floor)."""
    traj = _integrate(u0, params, t_end, source=0.0, kind="original-u", save_times=save_times, detect_extinction=True)
    if traj.extinct:
        traj.T_star_estimate = estimate_extinction_time(traj)
    return traj


def run_rescaled(
    v0: Field,
    params: FlowParams,
    t_end: float,
    *,
    save_times=None,
    renormalize: bool = False,
    fixed_dt: float | None = None,
) -> Trajectory:
    """Integrate the rescaled flow.

    With ``renormalize=True`` the state is multiplied after every step by the
    scalar that puts it on the Nehari set. Multiplying a rescaled solution by
    a constant is the same as re-choosing the extinction time used in the
    rescaling, so the shapes still follow one solution of the original flow;
    the re-anchoring only removes the exponential drift along the scaling
    direction that an imperfect choice of T* would cause.
    """
    return _integrate(
        v0, params, t_end, source=1.0, kind="rescaled-v", save_times=save_times, renormalize=renormalize, fixed_dt=fixed_dt
    )


def estimate_extinction_time(traj: Trajectory, tail_fraction: float = 0.5) -> float:
    """Extrapolate T* from the tail of the mass history.

    The separable law makes (int u^{p+1})^{(p-1)/(p+1)} linear in t (the
    critical exponent gives the power 2/n); fit a - c t on the tail and
    return a / c.
    """
    if len(traj) < 4:
        raise FitFailure("need at least 4 snapshots")
    times = np.asarray(traj.times)
    mass = traj.masses()
    return extinction_time_from_mass(times, mass, traj.params.p, tail_fraction)


def extinction_time_from_mass(times, mass, p: float, tail_fraction: float = 0.5) -> float:
    times = np.asarray(times, dtype=float)
    mass = np.asarray(mass, dtype=float)
    if times.size < 4:
        raise FitFailure("need at least 4 samples")
    k = max(4, int(math.ceil(tail_fraction * times.size)))
    t, m = times[-k:], mass[-k:]
    if np.any(m <= 0):
        raise FitFailure("nonpositive mass in the fitting window")
    if np.any(np.diff(m) > 0):
        raise FitFailure("mass is not monotone in the fitting window")
    y = m ** ((p - 1.0) / (p + 1.0))
    slope, intercept = np.polyfit(t, y, 1)
    c = -slope
    if not c > 0:
        raise FitFailure("mass does not decrease; no extinction to extrapolate")
    return float(intercept / c)


def rescale_to_v(u: Field, tau: float, T_star: float, params: FlowParams) -> tuple[Field, float]:
    """Map u(., tau) of the original flow to (v(., t), t) of the rescaled flow."""
    if not (0 <= tau < T_star):
        raise ContractError(f"need 0 <= tau < T* (tau = {tau}, T* = {T_star})")
    p = params.p
    factor = (p / ((p - 1.0) * (T_star - tau))) ** (1.0 / (p - 1.0))
    t = p / (p - 1.0) * math.log(T_star / (T_star - tau))
    return Field(u.grid, factor * u.values, "rescaled-v"), t


def separable_initial_data(v_inf: Field, params: FlowParams, T_star: float = 1.0) -> Field:
    """u0 = ((p-1) T*/p)^{1/(p-1)} v_inf, whose exact solution vanishes at T*."""
    p = params.p
    return Field(v_inf.grid, ((p - 1.0) * T_star / p) ** (1.0 / (p - 1.0)) * v_inf.values, "original-u")


@dataclass
class CorrespondenceReport:
    max_discrepancy: float
    matched: int
    tolerance: float
    per_time: list[tuple[float, float]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.matched == 0 or self.max_discrepancy <= self.tolerance


def correspondence_check(
    traj_u: Trajectory,
    traj_v: Trajectory,
    T_star: float | None = None,
    tolerance: float = 0.01,
    floor: float = 1e-8,
) -> CorrespondenceReport:
    """Compare rescale_to_v(u(tau)) with the rescaled run at the matching time t(tau)."""
    if len(traj_u) == 0 or len(traj_v) == 0:
        return CorrespondenceReport(0.0, 0, tolerance)
    pu, pv = traj_u.params, traj_v.params
    if (pu.n, pu.p, pu.b) != (pv.n, pv.p, pv.b):
        raise ContractError("trajectories use different (n, p, b)")
    T = traj_u.T_star_estimate if T_star is None else T_star
    if T is None:
        raise ContractError("original trajectory carries no extinction-time estimate")
    tv = np.asarray(traj_v.times)
    vv = traj_v.values()
    worst, per = 0.0, []
    for tau, snap in zip(traj_u.times, traj_u.snapshots):
        if tau >= T:
            break
        mapped, t = rescale_to_v(snap, tau, T, pu)
        if t > tv[-1] + 1e-12:
            break
        j = int(np.searchsorted(tv, t))
        if j == 0 or tv[j] == t:
            ref = vv[j]
        else:
            s = (t - tv[j - 1]) / (tv[j] - tv[j - 1])
            ref = (1 - s) * vv[j - 1] + s * vv[j]
        mask = ref > floor * ref.max()
        d = float(np.max(np.abs(mapped.values[mask] / ref[mask] - 1.0)))
        per.append((t, d))
        worst = max(worst, d)
    return CorrespondenceReport(worst, len(per), tolerance, per)


def with_params(params: FlowParams, **kw) -> FlowParams:
    return replace(params, **kw)
