"""Aubin-Talenti bubbles, their corrections on the ball, interaction integrals,
the pointwise inequalities used in the energy expansion, and radial bubble fits.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as spi

from .errors import ConfigurationError, ContractError, NumericalError
from .grid import Field, RadialGrid, sphere_area


def bubble_constant(n: int) -> float:
    return (n * (n - 2.0)) ** ((n - 2.0) / 4.0)


@dataclass(frozen=True)
class Bubble:
    n: int
    lam: float
    a: float = 0.0

    def __post_init__(self):
        if self.n < 3:
            raise ConfigurationError("bubbles need n >= 3", "n")
        if not self.lam > 0:
            raise ConfigurationError("concentration scale must be positive", "lam")

    @property
    def c0(self) -> float:
        return bubble_constant(self.n)

    @property
    def p(self) -> float:
        return (self.n + 2.0) / (self.n - 2.0)

    def __call__(self, r):
        return bubble_eval(self, r)


def bubble_eval(bub: Bubble, r):
    """c0 (lam / (1 + lam^2 |x - a|^2))^{(n-2)/2} at radial distance r from the centre."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ContractError("radius must be >= 0")
    lam = bub.lam
    return bub.c0 * (lam / (1.0 + (lam * r) ** 2)) ** ((bub.n - 2) / 2.0)


def harmonic_correction(bub: Bubble, grid: RadialGrid) -> Field:
    """Harmonic extension of the bubble's boundary values; a constant for a centred bubble."""
    if bub.a != 0:
        raise NotImplementedError("off-centre corrections need a Poisson-kernel expansion")
    if grid.n != bub.n:
        raise ContractError("grid and bubble dimensions differ")
    return Field(grid, np.full(grid.size, float(bubble_eval(bub, grid.R))), "generic")


def corrected_bubble(bub: Bubble, grid: RadialGrid) -> Field:
    """xi = xi_bar - h, zero on the boundary and positive inside."""
    vals = bubble_eval(bub, grid.nodes) - harmonic_correction(bub, grid).values
    vals[-1] = 0.0
    return Field(grid, vals, "stationary")


def bubble_mass(bub: Bubble | int, rtol: float = 1e-13) -> float:
    """int_{R^n} xi_bar^{2n/(n-2)}; independent of lam."""
    if isinstance(bub, int):
        bub = Bubble(bub, 1.0)
    n, lam = bub.n, bub.lam
    q = 2.0 * n / (n - 2.0)

    def f(r):
        return bub.c0**q * (lam / (1.0 + (lam * r) ** 2)) ** n * r ** (n - 1)

    s = 1.0 / lam
    total = 0.0
    for lo, hi in ((0.0, s), (s, 10 * s), (10 * s, math.inf)):
        val, err = spi.quad(f, lo, hi, epsabs=0.0, epsrel=rtol, limit=200)
        if not math.isfinite(val) or err > 1e3 * rtol * abs(val) + 1e-300:
            raise NumericalError("bubble mass quadrature did not converge")
        total += val
    return sphere_area(n) * total


def sphere_volume(n: int) -> float:
    """|S^n|, the area of the unit sphere in R^{n+1}."""
    return sphere_area(n + 1)


def yamabe_sphere(n: int) -> float:
    """Y(S^n) = n(n-2)/4 |S^n|^{2/n}."""
    return n * (n - 2) / 4.0 * sphere_volume(n) ** (2.0 / n)


def bubble_energy_level(n: int, m: int = 1) -> float:
    """Energy carried by m bubbles: 2m/n Y(S^n)^{n/2}."""
    return 2.0 * m / n * yamabe_sphere(n) ** (n / 2.0)


# --- interaction integrals ------------------------------------------------


def _U(lam, d2):
    return lam / (1.0 + lam * lam * d2)


def _i1_integrand(n):
    e1, e2 = (n + 2) / 2.0, (n - 2) / 2.0

    def g(ua, ub):
        return ua**e1 * ub**e2

    return g


def _i2_integrand(n):
    def g(ua, ub):
        hi, lo = (ua, ub) if ua >= ub else (ub, ua)
        return hi * hi * lo ** (n - 2)

    return g


def _half_space(n, lam_own, lam_other, g, own_first, rtol):
    """Integral over the half-space closer to the own centre, polar coords about it.

    The other centre sits at unit distance along the axis.
    """
    scale = 1.0 / lam_own
    cuts = [0.1 * scale, scale, 10 * scale, 100 * scale]

    def inner(theta):
        c, s = math.cos(theta), math.sin(theta)
        rho_max = 0.5 / c if c > 1e-300 else math.inf
        sn = s ** (n - 2)
        if sn == 0.0:
            return 0.0

        def f(rho):
            ua = _U(lam_own, rho * rho)
            ub = _U(lam_other, rho * rho + 1.0 - 2.0 * rho * c)
            val = g(ua, ub) if own_first else g(ub, ua)
            return val * rho ** (n - 1)

        edges = [0.0] + [x for x in cuts if x < rho_max] + [rho_max]
        tot = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            val, _ = spi.quad(f, lo, hi, epsabs=0.0, epsrel=rtol, limit=200)
            tot += val
        return tot * sn

    a, _ = spi.quad(inner, 0.0, 0.5 * math.pi, epsabs=0.0, epsrel=rtol, limit=200)
    b, _ = spi.quad(inner, 0.5 * math.pi, math.pi, epsabs=0.0, epsrel=rtol, limit=200)
    return sphere_area(n - 1) * (a + b)


def _interaction(g, n, lam1, lam2, separation, rtol):
    c0 = bubble_constant(n)
    pref = c0 ** (2.0 * n / (n - 2.0))
    if separation == 0:
        def f(r):
            return g(_U(lam1, r * r), _U(lam2, r * r)) * r ** (n - 1)

        s = 1.0 / max(lam1, lam2)
        edges = [0.0, s, 10 * s, 100 * s, 1.0 / min(lam1, lam2) * 10, math.inf]
        edges = sorted(set(edges))
        tot = sum(spi.quad(f, lo, hi, epsabs=0.0, epsrel=rtol, limit=200)[0] for lo, hi in zip(edges[:-1], edges[1:]))
        return pref * sphere_area(n) * tot
    l1, l2 = lam1 * separation, lam2 * separation
    near1 = _half_space(n, l1, l2, g, True, rtol)
    near2 = _half_space(n, l2, l1, g, False, rtol)
    return pref * (near1 + near2)


def interaction_I1(b1: Bubble, b2: Bubble, separation: float, rtol: float = 1e-7) -> float:
    """int xi_bar_1^{(n+2)/(n-2)} xi_bar_2 over R^n.

    Equal to c0^{2n/(n-2)} times the same integral written with the
    unnormalized profiles lam / (1 + lam^2 |x - a|^2); conformally invariant,
    so only lam_i * separation matters.
    """
    if b1.n != b2.n:
        raise ContractError("bubbles live in different dimensions")
    if b1.lam < b2.lam:
        warnings.warn("expected lam_1 >= lam_2", stacklevel=2)
    return _interaction(_i1_integrand(b1.n), b1.n, b1.lam, b2.lam, float(separation), rtol)


def interaction_I2(b1: Bubble, b2: Bubble, separation: float, rtol: float = 1e-7) -> float:
    """int max(xi_bar_1, xi_bar_2)^{4/(n-2)} min(xi_bar_1, xi_bar_2)^2 over R^n (symmetric)."""
    if b1.n != b2.n:
        raise ContractError("bubbles live in different dimensions")
    return _interaction(_i2_integrand(b1.n), b1.n, b1.lam, b2.lam, float(separation), rtol)


# --- inequality samplers ----------------------------------------------------


@dataclass
class SamplerReport:
    value: float
    samples: int
    plan: dict = field(default_factory=dict)


def superadditivity_terms(a, n: int) -> tuple[float, float]:
    """(excess, paired): LHS minus the first three right-hand terms, and the min/max pair sum."""
    a = np.asarray(a, dtype=float)
    if np.any(a < 0):
        raise ContractError("entries must be nonnegative")
    q = 2.0 * n / (n - 2.0)
    p = (n + 2.0) / (n - 2.0)
    m = a.size
    lhs = a.sum() ** q
    cross = 0.0
    paired = 0.0
    for k in range(m):
        for l in range(k + 1, m):
            cross += a[k] ** p * a[l]
            hi, lo = max(a[k], a[l]), min(a[k], a[l])
            paired += hi ** (4.0 / (n - 2.0)) * lo**2
    excess = lhs - np.sum(a**q) - q * cross
    return float(excess), float(paired)


def verify_superadditivity(a, n: int) -> float | None:
    """Implied constant excess / paired for one vector; None when the pair sum vanishes."""
    excess, paired = superadditivity_terms(a, n)
    if paired == 0.0:
        return None
    return excess / paired


def superadditivity_margin(n: int, m: int, samples: int = 10_000, seed: int = 0) -> SamplerReport:
    """Empirical infimum of the implied constant over uniform samples in [0, 1]^m."""
    rng = np.random.default_rng(seed)
    A = rng.random((samples, m))
    q = 2.0 * n / (n - 2.0)
    p = (n + 2.0) / (n - 2.0)
    lhs = A.sum(axis=1) ** q
    excess = lhs - (A**q).sum(axis=1)
    paired = np.zeros(samples)
    for k in range(m):
        for l in range(k + 1, m):
            excess -= q * A[:, k] ** p * A[:, l]
            hi, lo = np.maximum(A[:, k], A[:, l]), np.minimum(A[:, k], A[:, l])
            paired += hi ** (4.0 / (n - 2.0)) * lo**2
    ok = paired > 0
    ratio = excess[ok] / paired[ok]
    return SamplerReport(float(ratio.min()), int(ok.sum()), {"n": n, "m": m, "seed": seed, "law": "uniform[0,1]^m"})


def _lemma_quotients(p: float, eps: np.ndarray):
    if float(p).is_integer():
        k = int(p)
        # exact polynomial expansions; the eps^p terms cancel symbolically
        lin = sum(math.comb(k, j) * eps ** (j - 2) for j in range(2, k))
        pw = sum(math.comb(k, j) * eps ** (j - 1) for j in range(1, k - 1))
        lin = np.broadcast_to(np.asarray(lin, dtype=float), eps.shape)
        pw = np.broadcast_to(np.asarray(pw, dtype=float), eps.shape)
        return lin, pw
    grow = np.expm1(p * np.log1p(eps))  # (1+eps)^p - 1
    lin = (grow - eps**p - p * eps) / eps**2
    pw = (grow - eps**p - p * eps ** (p - 1)) / eps
    return lin, pw


def verify_calculus_lemma(p: float, samples: int = 100_000) -> tuple[float, float]:
    """Empirical infima over eps in (0, 1] of the two quotients of the calculus lemma.

    Returns (c_linear, c_power) for
      ((1+e)^p - 1 - e^p - p e) / e^2   and   ((1+e)^p - 1 - e^p - p e^{p-1}) / e.
    """
    if not p > 2:
        raise ContractError("the lemma needs p > 2")
    half = samples // 2
    eps = np.concatenate([np.geomspace(1e-6, 1.0, samples - half), np.linspace(1.0 / half, 1.0, half)])
    lin, pw = _lemma_quotients(p, eps)
    return float(lin.min()), float(pw.min())


def lemma_linear_limit(p: float) -> float:
    """eps -> 0 limit of the first quotient, p(p-1)/2."""
    return p * (p - 1) / 2.0


def pointwise_expansion_ratio(a, b_val, n: int):
    """|a^p + p a^{p-1}(b-a) - b^p| over a^{max(0,p-2)} |b-a|^{min(p,2)} + |b-a|^p (0 where b = a)."""
    a = np.asarray(a, dtype=float)
    b_val = np.asarray(b_val, dtype=float)
    if np.any(a < 0) or np.any(b_val < 0):
        raise ContractError("arguments must be nonnegative")
    p = (n + 2.0) / (n - 2.0)
    d = b_val - a
    lhs = np.abs(a**p + p * a ** (p - 1) * d - b_val**p)
    rhs = a ** max(0.0, p - 2.0) * np.abs(d) ** min(p, 2.0) + np.abs(d) ** p
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), 0.0)
    return ratio


def verify_pointwise_expansion(n: int, points: int = 400, upper: float = 2.0) -> SamplerReport:
    """Sup of the expansion ratio over a dense grid in [0, upper]^2."""
    x = np.linspace(0.0, upper, points)
    A, B = np.meshgrid(x, x, indexing="ij")
    ratio = pointwise_expansion_ratio(A, B, n)
    return SamplerReport(float(ratio.max()), points * points, {"n": n, "grid": points, "box": upper})


# --- radial bubble fit ----------------------------------------------------------


@dataclass
class BubbleFit:
    lam: float
    alpha: float
    residual_norm: float
    norm_v: float
    at_boundary: bool = False

    @property
    def relative_residual(self) -> float:
        return self.residual_norm / self.norm_v if self.norm_v > 0 else math.inf


def twisted_inner(f: np.ndarray, g: np.ndarray, grid: RadialGrid, b: float) -> float:
    """<f, g> = int grad f . grad g - b f g, discretely f^T K g - b sum w f g."""
    return float(f @ grid.apply_stiffness(g)) - b * float(np.dot(grid.quad_weights, f * g))


def fit_bubble(v: Field, b: float = 0.0, lam_range: tuple[float, float] | None = None, scan: int = 80, tol: float = 1e-10) -> BubbleFit:
    """Best alpha * xi_{0,lam} approximation of v in the b-twisted H^1_0 norm.

    For fixed lam the optimal alpha is a linear least-squares solution; lam is
    found by a log-spaced scan followed by golden-section refinement.
    """
    grid = v.grid
    vals = np.asarray(v.values, dtype=float)
    if np.any(vals < 0):
        raise ContractError("v must be nonnegative")
    if abs(vals[-1]) > 0:
        raise ContractError("v must vanish on the boundary")
    n = grid.n
    nv2 = twisted_inner(vals, vals, grid, b)
    if lam_range is None:
        lam_range = (0.5 / grid.R, 0.5 / grid.h_min)
    lo, hi = math.log(lam_range[0]), math.log(lam_range[1])

    def objective(loglam):
        xi = corrected_bubble(Bubble(n, math.exp(loglam)), grid).values
        vx = twisted_inner(vals, xi, grid, b)
        xx = twisted_inner(xi, xi, grid, b)
        return max(nv2 - vx * vx / xx, 0.0), vx / xx

    xs = np.linspace(lo, hi, scan)
    fs = np.array([objective(x)[0] for x in xs])
    j = int(np.argmin(fs))
    a, c = xs[max(j - 1, 0)], xs[min(j + 1, scan - 1)]
    g = (math.sqrt(5) - 1) / 2
    x1, x2 = c - g * (c - a), a + g * (c - a)
    f1, f2 = objective(x1)[0], objective(x2)[0]
    while c - a > tol:
        if f1 <= f2:
            c, x2, f2 = x2, x1, f1
            x1 = c - g * (c - a)
            f1 = objective(x1)[0]
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + g * (c - a)
            f2 = objective(x2)[0]
    best = 0.5 * (a + c)
    res2, alpha = objective(best)
    edge = j in (0, scan - 1)
    if edge:
        warnings.warn("bubble fit optimum sits on the edge of the search box", RuntimeWarning, stacklevel=2)
    return BubbleFit(lam=math.exp(best), alpha=alpha, residual_norm=math.sqrt(res2), norm_v=math.sqrt(max(nv2, 0.0)), at_boundary=edge)
