"""Radial discretization of the ball B_R in R^n (the interval (0, R) for n = 1).

The spatial scheme is a finite-volume one on dual cells: node ``r_i`` owns
the shell between the neighbouring midpoints, and the fluxes through the
midpoint spheres are ``a_{i+1/2} = |S^{n-1}| r_{i+1/2}^{n-1} / (r_{i+1} - r_i)``.
The cell volumes double as quadrature weights, so

    sum_i f_i (K g)_i == -sum_i w_i f_i (Lap_h g)_i

holds exactly (summation by parts), which is what keeps the discrete energy
identities and the symmetric eigenproblems consistent with ``integrate``.

For n >= 2 the centre r = 0 is a symmetry node and only r = R carries
Dirichlet data. For n = 1 the domain is the interval (0, R) with Dirichlet
data at both ends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import ConfigurationError, ContractError

FieldKind = Literal["original-u", "rescaled-v", "stationary", "generic"]
_DIRICHLET_KINDS = ("original-u", "rescaled-v", "stationary")


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere S^{n-1} in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def ball_volume(n: int, R: float) -> float:
    """Measure of the domain: |B_R| for n >= 2, the interval length R for n = 1."""
    if n == 1:
        return R
    return sphere_area(n) * R**n / n


@dataclass(frozen=True, eq=False)
class RadialGrid:
    n: int
    R: float
    nodes: np.ndarray
    quad_weights: np.ndarray
    flux: np.ndarray = field(repr=False)
    stretch: float = 0.0

    @property
    def N(self) -> int:
        """Index of the last node (there are N + 1 nodes)."""
        return self.nodes.size - 1

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def free(self) -> slice:
        """Nodes carrying unknowns; Dirichlet nodes are eliminated."""
        return slice(1 if self.n == 1 else 0, self.N)

    @property
    def dirichlet_mask(self) -> np.ndarray:
        mask = np.zeros(self.size, dtype=bool)
        mask[-1] = True
        if self.n == 1:
            mask[0] = True
        return mask

    @property
    def h_min(self) -> float:
        return float(np.diff(self.nodes).min())

    def distance_to_boundary(self) -> np.ndarray:
        if self.n == 1:
            return np.minimum(self.nodes, self.R - self.nodes)
        return self.R - self.nodes

    def stiffness_tridiag(self) -> tuple[np.ndarray, np.ndarray]:
        """Diagonal and off-diagonal of K restricted to the free nodes."""
        a = self.flux
        idx = np.arange(self.size)[self.free]
        left = np.where(idx > 0, a[np.maximum(idx - 1, 0)], 0.0)
        right = a[idx]
        diag = left + right
        off = -a[idx[:-1]]
        return diag, off

    def apply_stiffness(self, f: np.ndarray) -> np.ndarray:
        """(K f)_i at every node, with Dirichlet rows left as the raw flux balance."""
        f = np.asarray(f, dtype=float)
        df = np.diff(f)
        flux = self.flux * df
        out = np.zeros_like(f)
        out[:-1] -= flux
        out[1:] += flux
        return out


def build_grid(n: int, R: float = 1.0, N: int = 256, stretch: float = 0.0) -> RadialGrid:
    """Build the radial grid.

    ``stretch > 0`` clusters nodes toward r = R (the boundary layer where the
    solution behaves like the distance to the boundary); ``stretch < 0``
    clusters them toward the centre, which is useful for concentrating
    bubbles. ``stretch = 0`` gives uniform spacing.
    """
    if int(n) != n or n < 1:
        raise ConfigurationError("dimension must be an integer >= 1", "n")
    if not (R > 0 and math.isfinite(R)):
        raise ConfigurationError("outer radius must be positive and finite", "R")
    if int(N) != N or N < 16:
        raise ConfigurationError("need at least 16 intervals", "N")
    n, N = int(n), int(N)

    s = np.linspace(0.0, 1.0, N + 1)
    beta = abs(stretch)
    if beta < 1e-12:
        g = s
    elif stretch > 0:
        g = 1.0 - np.sinh(beta * (1.0 - s)) / math.sinh(beta)
    else:
        g = np.sinh(beta * s) / math.sinh(beta)
    nodes = R * g
    nodes[0], nodes[-1] = 0.0, R
    if np.any(np.diff(nodes) <= 0):
        raise ConfigurationError("stretch too strong: nodes not strictly increasing", "stretch")

    mid = 0.5 * (nodes[:-1] + nodes[1:])
    h = np.diff(nodes)
    if n == 1:
        edges = np.concatenate(([0.0], mid, [R]))
        weights = np.diff(edges)
        flux = 1.0 / h
    else:
        omega = sphere_area(n)
        edges = np.concatenate(([0.0], mid, [R]))
        weights = omega * np.diff(edges**n) / n
        flux = omega * mid ** (n - 1) / h
    for arr in (nodes, weights, flux):
        arr.setflags(write=False)
    return RadialGrid(n=n, R=float(R), nodes=nodes, quad_weights=weights, flux=flux, stretch=float(stretch))


@dataclass(frozen=True, eq=False)
class Field:
    grid: RadialGrid
    values: np.ndarray
    kind: FieldKind = "generic"

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.size,):
            raise ContractError(f"field has {vals.shape} values, grid has {self.grid.size} nodes")
        if self.kind in _DIRICHLET_KINDS:
            vals[self.grid.dirichlet_mask] = 0.0
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def with_values(self, values: np.ndarray, kind: FieldKind | None = None) -> Field:
        return Field(self.grid, values, self.kind if kind is None else kind)

    def __len__(self) -> int:
        return self.values.size

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


def field_from_function(grid: RadialGrid, func, kind: FieldKind = "generic") -> Field:
    return Field(grid, func(grid.nodes), kind)


def _one_sided_laplacian(r: np.ndarray, f: np.ndarray, r0: float, n: int) -> float:
    # cubic through four nodes next to r0, evaluated at r0
    coef = np.polyfit(r - r0, f, 3)
    d1, d2 = coef[2], 2.0 * coef[1]
    if n == 1 or r0 == 0.0:
        return float(d2)
    return float(d2 + (n - 1) / r0 * d1)


def laplacian_radial(f: Field) -> Field:
    """Second-order radial Laplacian f'' + (n-1)/r f'.

    Interior nodes use the flux-form stencil (which reduces to ``n f''(0)``
    style symmetry at the centre); Dirichlet nodes get a one-sided cubic fit
    and are for diagnostics only.
    """
    grid = f.grid
    vals = f.values
    if vals.size < 3:
        raise ContractError("need at least 3 nodes")
    kf = grid.apply_stiffness(vals)
    lap = -kf / grid.quad_weights
    r = grid.nodes
    lap[-1] = _one_sided_laplacian(r[-4:], vals[-4:], r[-1], grid.n)
    if grid.n == 1:
        lap[0] = _one_sided_laplacian(r[:4], vals[:4], r[0], grid.n)
    return Field(grid, lap, "generic")


def integrate(f: Field | np.ndarray, grid: RadialGrid | None = None) -> float:
    """Quadrature of f over the domain with the grid's cell volumes."""
    if isinstance(f, Field):
        grid, vals = f.grid, f.values
    else:
        if grid is None:
            raise ContractError("raw arrays need an explicit grid")
        vals = np.asarray(f, dtype=float)
    return float(np.dot(grid.quad_weights, vals))
