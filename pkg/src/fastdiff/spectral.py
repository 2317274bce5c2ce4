"""Discrete spectra on the radial grid.

All eigenproblems here have the form ``A x = mu M x`` with A = K - b W the
(symmetric positive definite, tridiagonal) stiffness restricted to the free
nodes and M a positive diagonal mass. They are solved by block shift-invert
inverse iteration: repeated solves with the banded Cholesky factor of A,
followed by a Rayleigh-Ritz step. Working with A^{-1} M keeps the small
eigenvalues relatively accurate even when the weight degenerates near the
boundary, which a plain M^{-1/2} A M^{-1/2} reduction would not.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded, eigh

from .errors import ContractError, NumericalError
from .grid import Field, RadialGrid


def _banded_stiffness(grid: RadialGrid, b: float) -> np.ndarray:
    kd, ko = grid.stiffness_tridiag()
    V = grid.quad_weights[grid.free]
    ab = np.zeros((2, kd.size))
    ab[0, 1:] = ko
    ab[1] = kd - b * V
    return ab


def _tridiag_matvec(ab: np.ndarray, x: np.ndarray) -> np.ndarray:
    d, o = ab[1], ab[0, 1:]
    y = d[:, None] * x
    y[:-1] += o[:, None] * x[1:]
    y[1:] += o[:, None] * x[:-1]
    return y


def generalized_lowest(
    ab: np.ndarray,
    mass: np.ndarray,
    k: int,
    *,
    tol: float = 1e-10,
    max_iter: int = 2000,
    guard: int = 6,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """k smallest eigenpairs of A x = mu diag(mass) x, with A in upper banded storage.

    Returns eigenvalues ascending and M-orthonormal eigenvectors as columns.
    """
    size = mass.size
    if np.any(mass <= 0):
        raise ContractError("mass must be positive on every free node")
    m = min(size, k + guard)
    try:
        chol = cholesky_banded(ab)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("stiffness is not positive definite (is b >= lambda_1?)") from exc
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((size, m))
    theta = None
    stall = 0
    for _ in range(max_iter):
        Y = cho_solve_banded((chol, False), mass[:, None] * X)
        AY = _tridiag_matvec(ab, Y)
        Ah = Y.T @ AY
        Mh = Y.T @ (mass[:, None] * Y)
        Ah = 0.5 * (Ah + Ah.T)
        Mh = 0.5 * (Mh + Mh.T)
        theta_new, C = eigh(Ah, Mh)
        X = Y @ C
        AX = AY @ C
        res = AX - (mass[:, None] * X) * theta_new
        # residual in the M^{-1} norm, relative to the eigenvalue
        rn = np.sqrt(np.sum(res[:, :k] ** 2 / mass[:, None], axis=0)) / np.abs(theta_new[:k])
        if theta is not None and np.all(np.abs(theta_new[:k] - theta[:k]) <= 1e-13 * np.abs(theta_new[:k])):
            stall += 1
        else:
            stall = 0
        theta = theta_new
        # roundoff floor: eigenvalues frozen and residuals small is as good as it gets
        if np.all(rn < tol) or (stall >= 3 and np.all(rn < 1e-7)):
            break
    else:
        raise NumericalError(f"inverse iteration did not converge (residuals {rn.max():.2e})")
    return theta[:k], X[:, :k]


@functools.lru_cache(maxsize=64)
def _lambda1_cached(key):
    grid = key.grid
    ab = _banded_stiffness(grid, 0.0)
    mu, _ = generalized_lowest(ab, grid.quad_weights[grid.free].copy(), 1)
    return float(mu[0])


class _GridKey:
    __slots__ = ("grid",)

    def __init__(self, grid):
        self.grid = grid

    def __hash__(self):
        g = self.grid
        return hash((g.n, g.R, g.size, g.stretch))

    def __eq__(self, other):
        g, o = self.grid, other.grid
        return (g.n, g.R, g.size, g.stretch) == (o.n, o.R, o.size, o.stretch)


def dirichlet_lambda1(grid: RadialGrid) -> float:
    """Smallest eigenvalue of the discrete Dirichlet Laplacian -Lap_h."""
    return _lambda1_cached(_GridKey(grid))


def dirichlet_eigenpairs(grid: RadialGrid, k: int = 1) -> tuple[np.ndarray, np.ndarray]:
    ab = _banded_stiffness(grid, 0.0)
    mu, X = generalized_lowest(ab, grid.quad_weights[grid.free].copy(), k)
    full = np.zeros((grid.size, k))
    full[grid.free] = X
    return mu, full


@dataclass
class WeightedSpectrum:
    mu: np.ndarray
    phi: list[Field]
    weight: Field
    p_lin: float
    L: int

    @property
    def K(self) -> int:
        return self.mu.size

    def gram(self) -> np.ndarray:
        """Weighted Gram matrix int w phi_i phi_j (identity up to roundoff)."""
        g = self.weight.grid
        P = np.array([f.values for f in self.phi])
        return (P * (g.quad_weights * self.weight.values)) @ P.T

    def to_json(self, verdict: "KernelVerdict | None" = None) -> dict:
        out = {"mu": [float(x) for x in self.mu], "L": int(self.L), "p_lin": float(self.p_lin)}
        if verdict is not None:
            out.update(gap=verdict.gap, verdict=verdict.status.value)
        return out


def weighted_spectrum(v_inf: Field, p: float, b: float = 0.0, K: int = 12) -> WeightedSpectrum:
    """Lowest K eigenpairs of -Lap phi - b phi = mu v_inf^{p-1} phi with Dirichlet data.

    ``p`` is the exponent of the stationary equation: (n+2)/(n-2) in the
    critical case (weight v^{4/(n-2)}), the subcritical exponent otherwise.
    """
    grid = v_inf.grid
    fr = grid.free
    vals = v_inf.values
    if np.any(vals[fr] <= 0):
        raise ContractError("weight v_inf^{p-1} must be positive at every interior node")
    weight = np.zeros(grid.size)
    weight[fr] = vals[fr] ** (p - 1.0)
    mass = grid.quad_weights[fr] * weight[fr]
    ab = _banded_stiffness(grid, b)
    K = min(K, mass.size)
    mu, X = generalized_lowest(ab, mass, K)
    phis = []
    for j in range(K):
        col = np.zeros(grid.size)
        col[fr] = X[:, j]
        if j == 0 and col.sum() < 0:
            col = -col
        phis.append(Field(grid, col, "generic"))
    L = int(np.sum(mu <= p + 1e-12))
    return WeightedSpectrum(mu=mu, phi=phis, weight=Field(grid, weight, "generic"), p_lin=float(p), L=L)


def weighted_cosine(f: Field, g: Field, weight: Field) -> float:
    w = f.grid.quad_weights * weight.values
    fg = np.dot(w, f.values * g.values)
    return float(fg / np.sqrt(np.dot(w, f.values**2) * np.dot(w, g.values**2)))


def project_pi(f: Field, spec: WeightedSpectrum, L: int | None = None) -> Field:
    """f - sum_{i<=L} (int f phi_i) w phi_i, the projection killing the low modes."""
    L = spec.L if L is None else L
    if L > spec.K:
        raise ContractError(f"spectrum has {spec.K} modes, projection needs {L}")
    grid = f.grid
    out = np.array(f.values, dtype=float)
    wv = spec.weight.values
    for phi in spec.phi[:L]:
        coef = np.dot(grid.quad_weights, f.values * phi.values)
        out -= coef * wv * phi.values
    return Field(grid, out, f.kind)


class Verdict(str, enum.Enum):
    NONDEGENERATE = "NONDEGENERATE"
    DEGENERATE_SUSPECT = "DEGENERATE-SUSPECT"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class KernelVerdict:
    status: Verdict
    gap: float
    p_lin: float
    tol: float
    nearest_index: int | None = None


def kernel_condition(mu, p_lin: float, tol: float | None = None) -> KernelVerdict:
    """Numerical test of the trivial-kernel condition: is p_lin away from the weighted spectrum?

    ``mu`` is a WeightedSpectrum or a plain sequence of eigenvalues. Default
    tolerance is 2% of p_lin. If every computed eigenvalue is below p_lin the
    spectrum is not resolved past it and the verdict is INCONCLUSIVE.
    """
    if isinstance(mu, WeightedSpectrum):
        mu = mu.mu
    mu = np.sort(np.asarray(mu, dtype=float))
    tol = 0.02 * p_lin if tol is None else tol
    dist = np.abs(mu - p_lin)
    j = int(np.argmin(dist))
    gap = float(dist[j])
    if mu[-1] < p_lin and gap > tol:
        return KernelVerdict(Verdict.INCONCLUSIVE, gap, p_lin, tol, j)
    status = Verdict.NONDEGENERATE if gap > tol else Verdict.DEGENERATE_SUSPECT
    return KernelVerdict(status, gap, p_lin, tol, j)
