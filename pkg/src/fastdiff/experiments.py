"""End-to-end experiments behind the reproduction suites and the acceptance tests.

Every runner returns a :class:`CriterionResult` carrying the measured numbers,
the thresholds they were compared against, and a pass flag. Thresholds live
in :class:`Thresholds` so a stricter check is a configuration change.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bubbles as bub
from .diagnostics import (
    RateModel,
    curvature_R,
    dissipation_rate,
    energy_F,
    fit_rate,
    record,
)
from .flow import FlowParams, estimate_extinction_time, run_original, run_rescaled, separable_initial_data, step_rescaled
from .grid import Field, build_grid, field_from_function
from .spectral import (
    Verdict,
    dirichlet_lambda1,
    kernel_condition,
    project_pi,
    weighted_cosine,
    weighted_spectrum,
)
from .stationary import ShootingProblem, find_stationary


@dataclass
class Thresholds:
    extinction_rel: float = 0.01
    extinction_profile_rel: float = 0.005
    extinction_runtime_s: float = 30.0
    mass_bound_slack: float = 0.02
    mass_bound_window: float = 0.9
    dissipation_ratio: tuple[float, float] = (0.4, 0.6)
    moment_decay: float = 0.01
    curvature_sup: float = 0.05
    curvature_interior_frac: float = 0.05
    r_lower: float = -10.0
    stationary_residual: float = 1e-6
    stationary_drift: float = 1e-5
    curvature_one: float = 1e-5
    mu1: float = 1e-6
    cosine: float = 1e-8
    orthonormality: float = 1e-8
    idempotence: float = 1e-10
    kernel_gap_frac: float = 0.05
    rate_r2: float = 0.99
    planted_rate: float = 1e-3
    bubble_mass_rel: float = 1e-3
    scale_invariance: float = 1e-10
    ratio_drop: float = 0.1
    blowup_energy_rel: float = 0.10
    blowup_residual: float = 0.1
    blowup_growth: float = 10.0
    density_change: float = 2.0


@dataclass
class CriterionResult:
    key: str
    title: str
    passed: bool
    measured: dict = field(default_factory=dict)
    expected: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        meas = ", ".join(f"{k}={_short(v)}" for k, v in self.measured.items())
        exp = ", ".join(f"{k}: {_short(v)}" for k, v in self.expected.items())
        return f"{'PASS' if self.passed else 'FAIL'} [{self.key}] {self.title} | measured {meas} | expected {exp}"

    def to_json(self) -> dict:
        return asdict(self)


def _short(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(str(_short(x)) for x in v) + "]"
    return v


# --- shared setups ----------------------------------------------------------------


@dataclass
class BallSetup:
    """Critical n = 4 ball with b = 0.3 lambda_1 and its stationary profile."""

    grid: object
    params: FlowParams
    lambda1: float
    v_inf: Field
    stationary_residual: float


def ball_setup(N: int = 256, b_frac: float = 0.3, n: int = 4) -> BallSetup:
    grid = build_grid(n, 1.0, N)
    lam1 = dirichlet_lambda1(grid)
    params = FlowParams.critical(n, b_frac * lam1, dt_max=0.1)
    sol = find_stationary(ShootingProblem(n, params.p, params.b), grid)
    return BallSetup(grid, params, lam1, sol.field, sol.residual)


def generic_initial(grid, amplitude: float = 8.0) -> Field:
    """A positive profile that is not a multiple of the stationary state."""
    R = grid.R
    return field_from_function(grid, lambda r: amplitude * np.cos(0.5 * np.pi * r / R) * (1 + 0.5 * (r / R) ** 2), "rescaled-v")


@dataclass
class RescaledRun:
    setup: BallSetup
    traj: object
    records: list


def rescaled_run(setup: BallSetup, t_end: float = 40.0, sample_dt: float = 0.5) -> RescaledRun:
    v0 = generic_initial(setup.grid)
    save = np.arange(sample_dt, t_end + 1e-9, sample_dt)
    traj = run_rescaled(v0, setup.params, t_end, save_times=save, renormalize=True)
    recs = [record(t, s, setup.params, setup.v_inf) for t, s in zip(traj.times, traj.snapshots)]
    return RescaledRun(setup, traj, recs)


def _closest(times, t):
    return int(np.argmin(np.abs(np.asarray(times) - t)))


# --- criterion runners ----------------------------------------------------------------


def extinction_oracle(th: Thresholds = Thresholds(), N: int = 512) -> CriterionResult:
    t0 = time.perf_counter()
    grid = build_grid(1, 1.0, N)
    p = 2.0
    v_inf = find_stationary(ShootingProblem(1, p), grid).field
    params = FlowParams(n=1, p=p, dt_max=1e-2)
    u0 = separable_initial_data(v_inf, params, 1.0)
    save = np.round(np.arange(0.01, 2.0, 0.01), 12)
    traj = run_original(u0, params, 2.0, save_times=save)
    T_hat = traj.T_star_estimate if traj.T_star_estimate is not None else estimate_extinction_time(traj)
    j = _closest(traj.times, 0.5)
    exact = u0.values * (1 - traj.times[j]) ** (1 / (p - 1))
    fr = grid.free
    prof = float(np.max(np.abs(traj.snapshots[j].values[fr] / exact[fr] - 1.0)))
    secs = time.perf_counter() - t0
    ok = abs(T_hat - 1.0) < th.extinction_rel and prof < th.extinction_profile_rel and secs < th.extinction_runtime_s
    return CriterionResult(
        "1", "separable extinction oracle", ok,
        {"T_star": T_hat, "T_rel_err": abs(T_hat - 1.0), "profile_rel_err@t=0.5": prof, "runtime_s": secs},
        {"T_rel_err <": th.extinction_rel, "profile <": th.extinction_profile_rel, "runtime <": th.extinction_runtime_s},
        secs,
    )


def mass_bound(th: Thresholds = Thresholds(), setup: BallSetup | None = None) -> CriterionResult:
    t0 = time.perf_counter()
    setup = setup or ball_setup()
    params = FlowParams.critical(setup.params.n, setup.params.b, dt_max=1e-2)
    u0 = Field(setup.grid, generic_initial(setup.grid, 1.0).values, "original-u")
    traj = run_original(u0, params, 50.0, save_times=None)
    T_hat = traj.T_star_estimate
    mass = traj.masses()
    t = np.asarray(traj.times)
    n = params.n
    sel = t <= th.mass_bound_window * T_hat
    bound = (1 - t[sel] / T_hat) ** (n / 2.0) * mass[0]
    ratio = mass[sel] / bound
    worst = float(ratio.max())
    ok = bool(traj.extinct) and worst <= 1 + th.mass_bound_slack
    return CriterionResult(
        "2", "mass upper bound along the original flow", ok,
        {"T_hat": T_hat, "max mass/bound": worst, "snapshots": int(sel.sum())},
        {"mass/bound <=": 1 + th.mass_bound_slack},
        time.perf_counter() - t0,
    )


def dissipation_mismatch(setup: BallSetup, dt: float, t_end: float = 1.0, amplitude: float = 0.3) -> float:
    """Sum over fixed steps of |F_{k+1} - F_k - dt D_k| along a plain rescaled run.

    The start is a smooth relative perturbation of the stationary state, so
    the run stays in the regime where the first-order defect is visible.
    """
    params = setup.params
    r = setup.grid.nodes / setup.grid.R
    v = Field(setup.grid, setup.v_inf.values * (1 + amplitude * np.cos(np.pi * r)), "rescaled-v")
    F_old = energy_F(v, params)
    total = 0.0
    for _ in range(int(round(t_end / dt))):
        new = step_rescaled(v, params, dt)
        F_new = energy_F(new, params)
        total += abs(F_new - F_old - dt * dissipation_rate(v, new, dt, params))
        v, F_old = new, F_new
    return total


def dissipation(th: Thresholds = Thresholds(), setup: BallSetup | None = None, dts=(0.02, 0.01, 0.005)) -> CriterionResult:
    t0 = time.perf_counter()
    setup = setup or ball_setup()
    mis = [dissipation_mismatch(setup, dt) for dt in dts]
    ratios = [mis[i + 1] / mis[i] for i in range(len(mis) - 1)]
    lo, hi = th.dissipation_ratio
    ok = all(lo <= r <= hi for r in ratios)
    return CriterionResult(
        "3", "energy dissipation identity, first-order mismatch", ok,
        {"dt": list(dts), "mismatch": mis, "ratios": ratios},
        {"ratio in": list(th.dissipation_ratio)},
        time.perf_counter() - t0,
    )


def interior_curvature_sup(v: Field, params: FlowParams, interior_frac: float) -> float:
    curv = curvature_R(v, params)
    ev = curv.evaluated & (v.grid.distance_to_boundary() >= interior_frac * v.grid.R)
    return float(np.max(np.abs(curv.field.values[ev] - 1.0)))


def moment_decay(th: Thresholds = Thresholds(), run: RescaledRun | None = None) -> CriterionResult:
    t0 = time.perf_counter()
    run = run or rescaled_run(ball_setup())
    times = [r.t for r in run.records]
    r1 = run.records[_closest(times, 1.0)]
    rend = run.records[-1]
    ratio = rend.M[2.0] / r1.M[2.0]
    sup = interior_curvature_sup(run.traj.snapshots[-1], run.setup.params, th.curvature_interior_frac)
    ok = ratio < th.moment_decay and sup < th.curvature_sup
    return CriterionResult(
        "4", "moment decay and R -> 1", ok,
        {"M2(1)": r1.M[2.0], "M2(end)": rend.M[2.0], "ratio": ratio, "sup|R-1| interior": sup, "t_end": rend.t},
        {"ratio <": th.moment_decay, "sup|R-1| <": th.curvature_sup},
        time.perf_counter() - t0,
    )


def r_lower_bound(th: Thresholds = Thresholds(), run: RescaledRun | None = None) -> CriterionResult:
    t0 = time.perf_counter()
    run = run or rescaled_run(ball_setup())
    rmins = np.array([r.R_min for r in run.records])
    finite = bool(np.all(np.isfinite(rmins)))
    worst = float(rmins.min())
    ok = finite and worst > th.r_lower
    return CriterionResult(
        "5", "uniform lower bound on R", ok,
        {"min_t R_min": worst, "all finite": finite},
        {"min R_min >": th.r_lower},
        time.perf_counter() - t0,
    )


def stationary_fixed_point(th: Thresholds = Thresholds(), setup: BallSetup | None = None, horizon: float = 10.0, dt: float = 0.1) -> CriterionResult:
    t0 = time.perf_counter()
    setup = setup or ball_setup()
    v = setup.v_inf.with_values(setup.v_inf.values)
    v = Field(v.grid, v.values, "rescaled-v")
    for _ in range(int(round(horizon / dt))):
        v = step_rescaled(v, setup.params, dt)
    drift = float(np.max(np.abs(v.values - setup.v_inf.values)))
    curv = curvature_R(setup.v_inf, setup.params)
    rdev = float(np.max(np.abs(curv.field.values[curv.evaluated] - 1.0)))
    ok = setup.stationary_residual < th.stationary_residual and drift < th.stationary_drift and rdev < th.curvature_one
    return CriterionResult(
        "6", "stationary fixed point", ok,
        {"residual": setup.stationary_residual, "drift": drift, "max|R-1|": rdev},
        {"residual <": th.stationary_residual, "drift <": th.stationary_drift, "|R-1| <": th.curvature_one},
        time.perf_counter() - t0,
    )


def spectrum_checks(th: Thresholds = Thresholds(), setup: BallSetup | None = None, K: int = 12) -> CriterionResult:
    t0 = time.perf_counter()
    setup = setup or ball_setup()
    spec = weighted_spectrum(setup.v_inf, setup.params.p, setup.params.b, K)
    mu1 = float(spec.mu[0])
    cos = weighted_cosine(spec.phi[0], setup.v_inf, spec.weight)
    ortho = float(np.max(np.abs(spec.gram() - np.eye(spec.K))))
    rng = np.random.default_rng(0)
    f = Field(setup.grid, rng.standard_normal(setup.grid.size) * (~setup.grid.dirichlet_mask), "generic")
    once = project_pi(f, spec)
    twice = project_pi(once, spec)
    idem = float(np.max(np.abs(twice.values - once.values)) / np.max(np.abs(once.values)))
    ok = abs(mu1 - 1) < th.mu1 and cos > 1 - th.cosine and ortho < th.orthonormality and idem < th.idempotence
    return CriterionResult(
        "7", "weighted spectrum", ok,
        {"mu1": mu1, "cos(phi1, v_inf)": cos, "orthonormality defect": ortho, "Pi idempotence": idem, "mu": [float(x) for x in spec.mu[:5]]},
        {"|mu1-1| <": th.mu1, "1-cos <": th.cosine, "defect <": th.orthonormality, "idempotence <": th.idempotence},
        time.perf_counter() - t0,
    )


def synthetic_rates(th: Thresholds = Thresholds()) -> dict:
    t = np.linspace(5.0, 50.0, 200)
    ve = fit_rate(np.column_stack([t, 3 * np.exp(-0.7 * t)]), window=1.0)
    vp = fit_rate(np.column_stack([t, 2 * t**-1.5]), window=1.0)
    ok = (
        ve.model is RateModel.EXPONENTIAL and abs(ve.gamma - 0.7) < th.planted_rate
        and vp.model is RateModel.POLYNOMIAL and abs(vp.theta - 1.5) < th.planted_rate
    )
    return {"ok": ok, "gamma": ve.gamma, "theta": vp.theta}


def rate_dichotomy(th: Thresholds = Thresholds(), run: RescaledRun | None = None, window: tuple[float, float] = (10.0, 40.0)) -> CriterionResult:
    t0 = time.perf_counter()
    run = run or rescaled_run(ball_setup())
    setup = run.setup
    spec = weighted_spectrum(setup.v_inf, setup.params.p, setup.params.b)
    kv = kernel_condition(spec, setup.params.p)
    series = [(r.t, r.rel_err) for r in run.records]
    verdict = fit_rate(series, window=1.0, t_min=window[0], t_max=window[1])
    synth = synthetic_rates(th)
    ok = (
        kv.status is Verdict.NONDEGENERATE and kv.gap > th.kernel_gap_frac * kv.p_lin
        and verdict.model is RateModel.EXPONENTIAL and verdict.r2_exponential > th.rate_r2 and synth["ok"]
    )
    return CriterionResult(
        "8", "rate dichotomy on the nondegenerate ball", ok,
        {"kernel": kv.status.value, "gap": kv.gap, "model": verdict.model.value, "gamma": verdict.gamma,
         "R2_exp": verdict.r2_exponential, "rss_ratio": verdict.rss_ratio,
         "planted gamma": synth["gamma"], "planted theta": synth["theta"]},
        {"gap >": th.kernel_gap_frac * kv.p_lin, "R2 >": th.rate_r2, "planted err <": th.planted_rate},
        time.perf_counter() - t0,
    )


def bubble_mass_check(th: Thresholds = Thresholds()) -> CriterionResult:
    t0 = time.perf_counter()
    target = 32 * math.pi**2 / 3
    m1 = bub.bubble_mass(bub.Bubble(4, 1.0))
    m100 = bub.bubble_mass(bub.Bubble(4, 100.0))
    rel = abs(m1 / target - 1)
    inv = abs(m100 / m1 - 1)
    ok = rel < th.bubble_mass_rel and inv < th.scale_invariance
    return CriterionResult(
        "9", "bubble mass", ok,
        {"mass": m1, "rel_err": rel, "scale defect": inv},
        {"target": target, "rel <": th.bubble_mass_rel, "scale <": th.scale_invariance},
        time.perf_counter() - t0,
    )


SWEEP_CASES = {
    "A1": lambda l1: l1 / 10.0,
    "A2": lambda l1: math.sqrt(l1),
    "B1": lambda l1: l1**-0.5,
    "B2": lambda l1: 1.0 / l1,
}


def ratio_sweep(n: int = 4, lams=(10.0, 100.0, 1000.0)) -> dict[str, list[tuple[float, float, float, float, float]]]:
    """Rows (lam1, lam2, I1, I2, I1/sqrt(I2)) per case, at unit separation."""
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name, rule in SWEEP_CASES.items():
            rows = []
            for l1 in lams:
                l2 = rule(l1)
                b1, b2 = bub.Bubble(n, l1), bub.Bubble(n, l2)
                I1 = bub.interaction_I1(b1, b2, 1.0)
                I2 = bub.interaction_I2(b1, b2, 1.0)
                rows.append((l1, l2, I1, I2, I1 / math.sqrt(I2)))
            out[name] = rows
    return out


def interaction_ratio(th: Thresholds = Thresholds(), n: int = 4) -> CriterionResult:
    t0 = time.perf_counter()
    sweep = ratio_sweep(n)
    measured, ok = {}, True
    for name, rows in sweep.items():
        r = [row[4] for row in rows]
        dec = all(b < a for a, b in zip(r, r[1:]))
        drop = r[-1] / r[0]
        measured[f"{name} final/first"] = drop
        measured[f"{name} decreasing"] = dec
        ok &= dec and drop < th.ratio_drop
    return CriterionResult(
        "10", f"interaction ratio I1/sqrt(I2), n={n}", ok, measured,
        {"strictly decreasing": True, "final/first <": th.ratio_drop},
        time.perf_counter() - t0,
    )


@dataclass
class BlowupRun:
    grid: object
    params: FlowParams
    traj: object
    fits: list
    energies: list


def blowup_run(N: int = 1024, stretch: float = -6.0, lam0: float = 4.0, t_end: float = 400.0, sample_dt: float = 25.0) -> BlowupRun:
    """Critical n = 4, b = 0 rescaled flow from a corrected bubble; it concentrates at the centre."""
    grid = build_grid(4, 1.0, N, stretch)
    params = FlowParams.critical(4, 0.0, dt_max=0.5)
    v0 = bub.corrected_bubble(bub.Bubble(4, lam0), grid)
    v0 = Field(grid, v0.values, "rescaled-v")
    traj = run_rescaled(v0, params, t_end, save_times=np.arange(sample_dt, t_end + 1e-9, sample_dt), renormalize=True)
    fits, energies = [], []
    for s in traj.snapshots:
        fits.append(bub.fit_bubble(s, params.b))
        energies.append(energy_F(s, params))
    return BlowupRun(grid, params, traj, fits, energies)


def blowup_energy(th: Thresholds = Thresholds(), run: BlowupRun | None = None) -> CriterionResult:
    t0 = time.perf_counter()
    run = run or blowup_run()
    target = bub.bubble_energy_level(4, 1)
    # latest resolvable time: the bubble scale still spans several cells at the centre
    resolvable = [k for k, f in enumerate(run.fits) if 1.0 / f.lam > 20 * run.grid.h_min and not f.at_boundary]
    k = resolvable[-1]
    F = run.energies[k]
    fit = run.fits[k]
    growth = fit.lam / run.fits[0].lam
    lams = [f.lam for f in run.fits[: k + 1]]
    increasing = all(b > a for a, b in zip(lams, lams[1:]))
    rel = abs(F / target - 1)
    ok = rel < th.blowup_energy_rel and fit.relative_residual < th.blowup_residual and growth >= th.blowup_growth and increasing
    return CriterionResult(
        "11", "blow-up energy level", ok,
        {"t": run.traj.times[k], "F": F, "rel_err": rel, "fit residual": fit.relative_residual, "lambda growth": growth, "lambda increasing": increasing},
        {"F target": target, "rel <": th.blowup_energy_rel, "residual <": th.blowup_residual, "growth >=": th.blowup_growth},
        time.perf_counter() - t0,
    )


def inequalities(th: Thresholds = Thresholds(), seed: int = 0) -> CriterionResult:
    t0 = time.perf_counter()
    margins = {}
    for n in (4, 5):
        for m in (2, 3):
            margins[f"c(n={n},m={m})"] = bub.superadditivity_margin(n, m, 10_000, seed).value
    lin3, pow3 = bub.verify_calculus_lemma(3.0)
    lin25, pow25 = bub.verify_calculus_lemma(2.5)
    sups = {}
    stable = True
    for n in (4, 6):
        a = bub.verify_pointwise_expansion(n, 400).value
        b = bub.verify_pointwise_expansion(n, 800).value
        sups[f"sup ratio n={n}"] = (a, b)
        stable &= math.isfinite(a) and math.isfinite(b) and max(a, b) / min(a, b) < th.density_change
    ok = all(v > 0 for v in margins.values()) and lin3 == 3.0 and pow3 > 0 and lin25 > 0 and pow25 > 0 and stable
    measured = dict(margins)
    measured.update({"p=3 linear": lin3, "p=3 power": pow3, "p=2.5 linear": lin25, "p=2.5 power": pow25})
    measured.update({k: list(v) for k, v in sups.items()})
    return CriterionResult(
        "12", "inequality verifiers", ok, measured,
        {"margins >": 0, "p=3 linear ==": 3.0, "density change <": th.density_change},
        time.perf_counter() - t0,
    )


SUITES = {
    "extinction-oracle": ["1", "2"],
    "inequalities": ["12"],
    "dissipation": ["3"],
    "moments-decay": ["4", "5"],
    "spectrum-mu1": ["6", "7"],
    "bubble-mass": ["9"],
    "interaction-ratio": ["10"],
    "rate-dichotomy": ["8"],
    "blowup": ["11"],
}


def run_suite(name: str, th: Thresholds = Thresholds()) -> list[CriterionResult]:
    if name not in SUITES:
        raise KeyError(name)
    keys = SUITES[name]
    setup = ball_setup() if set(keys) & {"2", "3", "4", "5", "6", "7", "8"} else None
    run = rescaled_run(setup) if set(keys) & {"4", "5", "8"} else None
    table = {
        "1": lambda: extinction_oracle(th),
        "2": lambda: mass_bound(th, setup),
        "3": lambda: dissipation(th, setup),
        "4": lambda: moment_decay(th, run),
        "5": lambda: r_lower_bound(th, run),
        "6": lambda: stationary_fixed_point(th, setup),
        "7": lambda: spectrum_checks(th, setup),
        "8": lambda: rate_dichotomy(th, run),
        "9": lambda: bubble_mass_check(th),
        "10": lambda: interaction_ratio(th),
        "11": lambda: blowup_energy(th),
        "12": lambda: inequalities(th),
    }
    return [table[k]() for k in keys]
