"""Monitored quantities along trajectories: R, M_q, F, masses, relative error, rate fits."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ContractError, FitFailure
from .flow import FlowParams, Trajectory
from .grid import Field, integrate


def _lap_plus_b(v: Field, b: float) -> np.ndarray:
    g = v.grid
    return g.apply_stiffness(v.values) / g.quad_weights - b * v.values  # = -Lap_h v - b v


@dataclass
class Curvature:
    """Pointwise R on the evaluated nodes; NaN elsewhere."""

    field: Field
    evaluated: np.ndarray
    numerator: np.ndarray


def curvature_R(v: Field, params: FlowParams, r_floor: float = 1e-6) -> Curvature:
    """R = v^{-p} (-Lap v - b v) at free nodes where v > r_floor * sup v."""
    sup = float(np.max(v.values))
    if not sup > 0:
        raise ContractError("R is undefined for a vanishing state")
    num = _lap_plus_b(v, params.b)
    ev = np.zeros(v.grid.size, dtype=bool)
    ev[v.grid.free] = True
    ev &= v.values > r_floor * sup
    R = np.full(v.grid.size, np.nan)
    R[ev] = num[ev] / v.values[ev] ** params.p
    return Curvature(Field(v.grid, R, "generic"), ev, num)


def moments(v: Field, curv: Curvature, q_list, params: FlowParams) -> tuple[dict[float, float], bool]:
    """M_q = int |R - 1|^q v^{p+1} for each q.

    Nodes where R was not evaluated contribute the equivalent bounded product
    |(-Lap v - b v) - v^p|^q v^{p+1-qp} when that exponent is >= 0, and zero
    otherwise; the returned flag reports such a truncation.
    """
    g = v.grid
    p = params.p
    ev = curv.evaluated
    out: dict[float, float] = {}
    truncated = False
    rest = ~ev & ~g.dirichlet_mask
    for q in q_list:
        q = float(q)
        integrand = np.zeros(g.size)
        integrand[ev] = np.abs(curv.field.values[ev] - 1.0) ** q * v.values[ev] ** (p + 1.0)
        if np.any(rest):
            expo = p + 1.0 - q * p
            if expo >= 0:
                integrand[rest] = np.abs(curv.numerator[rest] - v.values[rest] ** p) ** q * v.values[rest] ** expo
            elif np.any(v.values[rest] > 0):
                truncated = True
        out[q] = integrate(integrand, g)
    return out, truncated


def energy_F(v: Field, params: FlowParams) -> float:
    """F = int |grad v|^2 - b v^2 - 2/(p+1) v^{p+1}; the gradient term is v^T K v."""
    g = v.grid
    vals = v.values
    grad2 = float(vals @ g.apply_stiffness(vals))
    return grad2 - params.b * integrate(vals**2, g) - 2.0 / (params.p + 1.0) * integrate(vals ** (params.p + 1.0), g)


def dissipation_rate(v_old: Field, v_new: Field, dt: float, params: FlowParams) -> float:
    """-2p int v^{p-1} |d_t v|^2 with the discrete quotient, v^{p-1} taken at the new state."""
    dv = (v_new.values - v_old.values) / dt
    return -2.0 * params.p * integrate(v_new.values ** (params.p - 1.0) * dv**2, v_new.grid)


def boundary_slope(v: Field) -> float:
    """Second-order one-sided derivative -v'(R)."""
    r, f = v.grid.nodes[-3:], v.values[-3:]
    coef = np.polyfit(r - r[-1], f, 2)
    return float(-coef[1])


def relative_error(v: Field, v_inf: Field, interior_frac: float = 0.0) -> float:
    """max |v / v_inf - 1| over free nodes plus the boundary-slope ratio.

    ``interior_frac`` > 0 restricts to nodes with d(x) >= interior_frac * R.
    """
    g = v.grid
    fr = np.zeros(g.size, dtype=bool)
    fr[g.free] = True
    if np.any(v_inf.values[fr] <= 0):
        raise ContractError("v_inf must be positive at interior nodes")
    if interior_frac > 0:
        fr &= g.distance_to_boundary() >= interior_frac * g.R
    err = float(np.max(np.abs(v.values[fr] / v_inf.values[fr] - 1.0)))
    if interior_frac == 0:
        s_inf = boundary_slope(v_inf)
        if s_inf > 0:
            err = max(err, abs(boundary_slope(v) / s_inf - 1.0))
    return err


@dataclass
class DiagnosticsRecord:
    t: float
    F: float
    M: dict[float, float]
    R_min: float
    R_max: float
    mass_crit: float
    rel_err: float | None
    sup_v: float
    truncated: bool = False

    def row(self, q_order) -> list[float]:
        return [self.t, self.F, *[self.M[q] for q in q_order], self.R_min, self.R_max, self.mass_crit,
                math.nan if self.rel_err is None else self.rel_err, self.sup_v]


def default_q_list(params: FlowParams) -> list[float]:
    qs = [1.0, 2.0]
    if params.n >= 2 and params.n / 2 not in qs:
        qs.append(params.n / 2)
    return qs


def record(t: float, v: Field, params: FlowParams, v_inf: Field | None = None, q_list=None, r_floor=1e-6) -> DiagnosticsRecord:
    q_list = default_q_list(params) if q_list is None else list(q_list)
    curv = curvature_R(v, params, r_floor)
    M, trunc = moments(v, curv, q_list, params)
    Rv = curv.field.values[curv.evaluated]
    return DiagnosticsRecord(
        t=float(t),
        F=energy_F(v, params),
        M=M,
        R_min=float(Rv.min()),
        R_max=float(Rv.max()),
        mass_crit=integrate(v.values ** (params.p + 1.0), v.grid),
        rel_err=None if v_inf is None else relative_error(v, v_inf),
        sup_v=float(v.values.max()),
        truncated=trunc,
    )


def trajectory_records(traj: Trajectory, v_inf: Field | None = None, q_list=None) -> list[DiagnosticsRecord]:
    return [record(t, s, traj.params, v_inf, q_list) for t, s in zip(traj.times, traj.snapshots)]


class RateModel(str, enum.Enum):
    EXPONENTIAL = "EXPONENTIAL"
    POLYNOMIAL = "POLYNOMIAL"


@dataclass
class RateVerdict:
    model: RateModel
    rate: float
    gamma: float
    theta: float
    r2_exponential: float
    r2_polynomial: float
    rss_exponential: float
    rss_polynomial: float
    rss_ratio: float
    samples: int
    window: tuple[float, float] = field(default=(math.nan, math.nan))

    def to_json(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.value
        return d


def _linfit(x, y):
    A = np.vstack([np.ones_like(x), x]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    rss = float(resid @ resid)
    tss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    return coef, rss, r2


def fit_rate(series, window: float = 0.4, t_min: float = 5.0, t_max: float | None = None, min_samples: int = 10) -> RateVerdict:
    """Choose between e(t) = C e^{-gamma t} and e(t) = C t^{-theta} by log-space least squares.

    The window is the last ``window`` fraction of the samples with
    t >= t_min (and t <= t_max); pass window=1 to use every sample in range.
    """
    data = np.asarray(series, dtype=float)
    t, e = data[:, 0], data[:, 1]
    sel = t >= t_min
    if t_max is not None:
        sel &= t <= t_max
    t, e = t[sel], e[sel]
    k = int(math.ceil(window * t.size))
    t, e = t[t.size - k:], e[e.size - k:]
    if t.size < min_samples:
        raise FitFailure(f"need >= {min_samples} samples in the window, have {t.size}")
    if np.any(e <= 0) or np.any(t <= 0):
        raise FitFailure("nonpositive values in the fitting window")
    y = np.log(e)
    (c_e, s_e), rss_e, r2_e = _linfit(t, y)
    (c_p, s_p), rss_p, r2_p = _linfit(np.log(t), y)
    gamma, theta = -s_e, -s_p
    model = RateModel.EXPONENTIAL if rss_e <= rss_p else RateModel.POLYNOMIAL
    return RateVerdict(
        model=model,
        rate=gamma if model is RateModel.EXPONENTIAL else theta,
        gamma=float(gamma),
        theta=float(theta),
        r2_exponential=r2_e,
        r2_polynomial=r2_p,
        rss_exponential=rss_e,
        rss_polynomial=rss_p,
        rss_ratio=rss_e / rss_p if rss_p > 0 else math.inf,
        samples=int(t.size),
        window=(float(t[0]), float(t[-1])),
    )


def volume_identity_residual(v_old: Field, v_new: Field, dt: float, params: FlowParams) -> float:
    """Discrete residual of d_t v^{p+1} = -((p+1)/p) (R - 1) v^{p+1}, relative to the left side scale.

    With p = (n+2)/(n-2) the factor (p+1)/p equals 2n/(n+2).
    """
    p = params.p
    lhs = (v_new.values ** (p + 1) - v_old.values ** (p + 1)) / dt
    curv = curvature_R(v_new, params)
    ev = curv.evaluated
    rhs = np.zeros_like(lhs)
    rhs[ev] = -(p + 1) / p * (curv.field.values[ev] - 1.0) * v_new.values[ev] ** (p + 1)
    scale = max(np.abs(lhs[ev]).max(), 1e-300)
    return float(np.abs(lhs[ev] - rhs[ev]).max() / scale)
