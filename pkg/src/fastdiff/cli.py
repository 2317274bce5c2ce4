"""Command-line entry point: ``fastdiff <subcommand> [--config PATH] [--out DIR]``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import bubbles as bub
from . import experiments as ex
from .config import RunConfig, load_config, validate
from .diagnostics import default_q_list, fit_rate, record
from .errors import BracketError, ConfigurationError, FastDiffError
from .flow import FlowParams, run_original, run_rescaled, separable_initial_data
from .grid import Field, build_grid
from .io import read_csv, write_csv, write_manifest
from .spectral import dirichlet_lambda1, kernel_condition, weighted_spectrum
from .stationary import ShootingProblem, find_stationary

logger = logging.getLogger("fastdiff")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3


class Context:
    """Grid, parameters and (when it exists) the stationary profile for one config."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        g = cfg.grid
        self.grid = build_grid(cfg.n, g.R, g.N, g.stretch)
        self.lambda1 = dirichlet_lambda1(self.grid)
        b = cfg.b if cfg.b is not None else (cfg.b_frac or 0.0) * self.lambda1
        if b >= self.lambda1:
            raise ConfigurationError(f"b = {b:g} must be below lambda_1 = {self.lambda1:.6g}", "b")
        self.params = FlowParams(
            n=cfg.n, p=cfg.exponent, b=b, dt_init=cfg.dt_init, dt_min=cfg.dt_min, dt_max=cfg.dt_max,
            newton_tol=cfg.newton_tol, mass_floor=cfg.mass_floor,
        )
        self._v_inf = None
        self._v_inf_done = False

    @property
    def v_inf(self) -> Field | None:
        if not self._v_inf_done:
            self._v_inf_done = True
            try:
                sol = find_stationary(ShootingProblem(self.cfg.n, self.params.p, self.params.b, self.grid.R), self.grid)
                self._v_inf = sol.field
            except BracketError as exc:
                logger.info("no stationary profile: %s", exc)
        return self._v_inf

    def require_v_inf(self) -> Field:
        if self.v_inf is None:
            raise ConfigurationError("no positive stationary solution exists for these parameters", "b")
        return self.v_inf

    def initial(self, kind: str) -> Field:
        ic = self.cfg.initial
        r = self.grid.nodes / self.grid.R
        if ic.type == "generic":
            if self.cfg.n == 1:
                vals = ic.amplitude * np.sin(np.pi * r) * (1 + 0.5 * r)
            else:
                vals = ic.amplitude * np.cos(0.5 * np.pi * r) * (1 + 0.5 * r**2)
        elif ic.type == "stationary":
            vals = self.require_v_inf().values.copy()
        elif ic.type == "perturbed-stationary":
            vals = self.require_v_inf().values * (1 + ic.perturbation * np.cos(np.pi * r))
        elif ic.type == "bubble":
            vals = bub.corrected_bubble(bub.Bubble(self.cfg.n, ic.lam), self.grid).values
        else:
            vals = separable_initial_data(self.require_v_inf(), self.params, ic.T_star).values
        vals = np.maximum(vals, 0.0)
        vals[self.grid.dirichlet_mask] = 0.0
        return Field(self.grid, vals, kind)


def _save_times(cfg: RunConfig):
    return np.round(np.arange(cfg.sample_dt, cfg.t_end + 0.5 * cfg.sample_dt, cfg.sample_dt), 12)


def _write_trajectory(out: Path, traj) -> Path:
    header = ["t"] + [f"node_{i}" for i in range(traj.grid.size)]
    return write_csv(out / "trajectory.csv", header, ([t, *s.values] for t, s in zip(traj.times, traj.snapshots)))


def _write_nodes(out: Path, grid) -> Path:
    return write_csv(out / "nodes.csv", ["r", "weight"], zip(grid.nodes, grid.quad_weights))


def _diag_rows(ctx: Context, traj):
    qs = default_q_list(ctx.params)
    header = ["t", "F", *[f"M_{q:g}" for q in qs], "R_min", "R_max", "mass_crit", "rel_err", "sup_v"]
    recs = [record(t, s, ctx.params, ctx.v_inf, qs) for t, s in zip(traj.times, traj.snapshots)]
    return header, [r.row(qs) for r in recs], recs


def run_simulation(cfg: RunConfig, out: Path) -> dict:
    ctx = Context(cfg)
    out.mkdir(parents=True, exist_ok=True)
    files = [_write_nodes(out, ctx.grid)]
    summary: dict = {"lambda1": ctx.lambda1, "b": ctx.params.b, "p": ctx.params.p}
    if cfg.kind == "original":
        traj = run_original(ctx.initial("original-u"), ctx.params, cfg.t_end, save_times=_save_times(cfg))
        mass = traj.masses()
        files.append(_write_trajectory(out, traj))
        files.append(write_csv(out / "diagnostics.csv", ["t", "mass", "sup_u"],
                               ([t, m, s.values.max()] for t, m, s in zip(traj.times, mass, traj.snapshots))))
        summary.update(extinct=traj.extinct, T_star_estimate=traj.T_star_estimate, snapshots=len(traj))
    else:
        traj = run_rescaled(ctx.initial("rescaled-v"), ctx.params, cfg.t_end, save_times=_save_times(cfg), renormalize=cfg.renormalize)
        files.append(_write_trajectory(out, traj))
        header, rows, recs = _diag_rows(ctx, traj)
        files.append(write_csv(out / "diagnostics.csv", header, rows))
        masses = [r.mass_crit for r in recs]
        summary.update(
            snapshots=len(traj), F_start=recs[0].F, F_end=recs[-1].F,
            mass_crit_range=[min(masses), max(masses)], R_min=min(r.R_min for r in recs),
            rel_err_end=recs[-1].rel_err,
        )
        if cfg.kind == "blowup-demo":
            fits = [bub.fit_bubble(s, ctx.params.b) for s in traj.snapshots]
            files.append(write_csv(out / "bubble_fit.csv", ["t", "lambda", "alpha", "residual_rel", "F", "sup_v"],
                                   ([t, f.lam, f.alpha, f.relative_residual, r.F, r.sup_v] for t, f, r in zip(traj.times, fits, recs))))
            summary.update(
                sup_v_growth=recs[-1].sup_v / recs[0].sup_v,
                bubble_fit=[{"t": t, "lambda": f.lam, "alpha": f.alpha, "residual_rel": f.relative_residual} for t, f in zip(traj.times, fits)],
                energy_level=bub.bubble_energy_level(cfg.n, 1),
            )
    return {"outputs": [p.name for p in files], "summary": summary}


def run_stationary(cfg: RunConfig, out: Path) -> dict:
    ctx = Context(cfg)
    sol = find_stationary(ShootingProblem(cfg.n, ctx.params.p, ctx.params.b, ctx.grid.R), ctx.grid)
    f = write_csv(out / "stationary.csv", ["r", "v"], zip(ctx.grid.nodes, sol.field.values))
    return {"outputs": [f.name], "summary": {"alpha": sol.alpha, "residual": sol.residual, "energy": sol.energy,
                                             "candidates": sol.candidates, "b": ctx.params.b, "lambda1": ctx.lambda1}}


def run_spectrum(cfg: RunConfig, out: Path) -> dict:
    ctx = Context(cfg)
    spec = weighted_spectrum(ctx.require_v_inf(), ctx.params.p, ctx.params.b, cfg.spectrum_K)
    verdict = kernel_condition(spec, ctx.params.p)
    f = write_csv(out / "spectrum.csv", ["index", "mu"], ((i + 1, m) for i, m in enumerate(spec.mu)))
    return {"outputs": [f.name], "summary": spec.to_json(verdict)}


def _sweep_row(args):
    n, case, l1 = args
    l2 = ex.SWEEP_CASES[case](l1)
    b1, b2 = bub.Bubble(n, l1), bub.Bubble(n, l2)
    I1, I2 = bub.interaction_I1(b1, b2, 1.0), bub.interaction_I2(b1, b2, 1.0)
    return [case, l1, l2, I1, I2, I1 / math.sqrt(I2)]


def run_bubbles(cfg: RunConfig, out: Path, threads: int = 1) -> dict:
    jobs = [(cfg.n, case, float(l1)) for case in ex.SWEEP_CASES for l1 in cfg.sweep_lams]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(j) for j in jobs]
    f = write_csv(out / "interaction_sweep.csv", ["case", "lam1_tilde", "lam2_tilde", "I1", "I2", "ratio"], rows)
    mass = bub.bubble_mass(cfg.n)
    return {"outputs": [f.name], "summary": {"bubble_mass": mass, "energy_level": bub.bubble_energy_level(cfg.n, 1)}}


def run_fit_rate(cfg: RunConfig, out: Path) -> dict:
    header, data = read_csv(cfg.series)
    if data.shape[1] < 2:
        raise ConfigurationError("series CSV needs columns t and value", "series")
    col = header.index("rel_err") if "rel_err" in header else 1
    series = data[:, [0, col]]
    series = series[np.isfinite(series[:, 1])]
    verdict = fit_rate(series, window=cfg.fit_window, t_min=cfg.fit_t_min)
    f = out / "rate_verdict.json"
    f.write_text(json.dumps(verdict.to_json(), indent=2, sort_keys=True) + "\n")
    return {"outputs": [f.name], "summary": verdict.to_json()}


def run_inequalities(cfg: RunConfig, out: Path) -> dict:
    res = ex.inequalities(cfg.thresholds, seed=cfg.seed)
    return {"outputs": [], "summary": res.to_json()}


DISPATCH = {
    "original": run_simulation,
    "rescaled": run_simulation,
    "blowup-demo": run_simulation,
    "stationary": run_stationary,
    "spectrum": run_spectrum,
    "bubbles-sweep": run_bubbles,
    "fit-rate": run_fit_rate,
    "verify-inequalities": run_inequalities,
}

COMMAND_KIND = {"stationary": "stationary", "spectrum": "spectrum", "bubbles": "bubbles-sweep", "fit-rate": "fit-rate"}


def _resolve_config(args, command: str) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if command in COMMAND_KIND:
        cfg.kind = COMMAND_KIND[command]
    if getattr(args, "series", None):
        cfg.series = args.series
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out:
        cfg.out = args.out
    return validate(cfg)


def cmd_run(args, command: str) -> int:
    cfg = _resolve_config(args, command)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    fn = DISPATCH[cfg.kind]
    result = fn(cfg, out, args.threads) if fn is run_bubbles else fn(cfg, out)
    write_manifest(out / "manifest.json", {"command": command, "config": cfg.to_json(), **result})
    print(json.dumps({"out": str(out), "outputs": result["outputs"] + ["manifest.json"]}))
    return EXIT_OK


def cmd_reproduce(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    results = ex.run_suite(args.suite, cfg.thresholds)
    for r in results:
        print(r.line())
    if args.out:
        write_manifest(Path(args.out) / f"reproduce_{args.suite}.json", {"suite": args.suite, "results": [r.to_json() for r in results]})
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
    common.add_argument("--threads", type=int, default=1, metavar="K", help="worker processes for sweeps")
    common.add_argument("--seed", type=int, default=None, metavar="U64", help="seed for samplers")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fastdiff", description="Fast diffusion extinction and bubbling laboratory.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run the flow described by the config")
    rep = sub.add_parser("reproduce", parents=[common], help="run an acceptance suite and print PASS/FAIL")
    rep.add_argument("suite", choices=sorted(ex.SUITES), metavar="SUITE", help="one of: " + ", ".join(sorted(ex.SUITES)))
    sub.add_parser("stationary", parents=[common], help="solve for the stationary profile")
    sub.add_parser("spectrum", parents=[common], help="weighted spectrum and kernel verdict")
    sub.add_parser("bubbles", parents=[common], help="interaction-integral sweeps")
    fr = sub.add_parser("fit-rate", parents=[common], help="exponential vs polynomial decay fit")
    fr.add_argument("--series", metavar="CSV", help="CSV with t in the first column and rel_err (or the second column)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        if args.command == "reproduce":
            return cmd_reproduce(args)
        return cmd_run(args, args.command)
    except ConfigurationError as exc:
        print(f"fastdiff: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FastDiffError as exc:
        print(f"fastdiff: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
