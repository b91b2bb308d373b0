"""Projected SOR solver for the discrete obstacle problem.

The grid LCP per interior node:  u >= 0,  c - Lap_h u >= 0,
u * (c - Lap_h u) = 0, with Dirichlet data on the box boundary.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec, ScalarField

ORDERINGS = ("red-black", "lexicographic")


@dataclass
class ObstacleProblem:
    """Coefficient field c >= c0 > 0 plus nonnegative Dirichlet data.

    The Dirichlet data is stored as a full node array; only its boundary
    entries are read.
    """

    grid: GridSpec
    c: ScalarField
    c0: float
    g: np.ndarray

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float)
        if self.g.shape != self.grid.node_shape:
            raise ValueError("Dirichlet array must have node shape")
        if not (self.c0 > 0):
            raise ValueError("c0 must be positive")
        if float(self.c.values.min()) < self.c0:
            raise ValueError(
                f"min c = {self.c.values.min():.6g} below c0 = {self.c0:.6g}"
            )
        if float(self.g[_boundary_mask(self.grid)].min()) < 0.0:
            raise ValueError("Dirichlet data must be nonnegative")


@dataclass
class SolveOptions:
    tol: float = 1e-10
    max_iter: int | None = None  # default 40 * (cells per axis)^2
    relax: float = 1.5
    ordering: str = "red-black"
    check_every: int = 10

    def __post_init__(self):
        if not (self.tol > 0):
            raise ValueError("tol must be positive")
        if not (0.0 < self.relax < 2.0):
            raise ValueError("relax must lie in (0, 2)")
        if self.ordering not in ORDERINGS:
            raise ValueError(f"ordering must be one of {ORDERINGS}")


@dataclass
class LcpResidual:
    max_eq: float
    max_ineq: float
    max_neg: float

    @property
    def max_violation(self) -> float:
        return max(self.max_eq, self.max_ineq, self.max_neg)


@dataclass
class SolveResult:
    u: ScalarField
    iterations: int
    residual: LcpResidual
    converged: bool


def optimal_relax(grid: GridSpec) -> float:
    """Classic SOR estimate 2 / (1 + sin(pi / n)) from the largest axis."""
    n = int(grid.cells.max())
    return 2.0 / (1.0 + math.sin(math.pi / n))


def _boundary_mask(grid: GridSpec) -> np.ndarray:
    m = np.zeros(grid.node_shape, dtype=bool)
    for ax in range(grid.dim):
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[ax] = 0
        hi[ax] = -1
        m[tuple(lo)] = True
        m[tuple(hi)] = True
    return m


def _interior(grid: GridSpec):
    return tuple(slice(1, -1) for _ in range(grid.dim))


def _neighbor_sum(u: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Sum over axes of (u[i+1] + u[i-1]) / h_ax^2 at interior nodes."""
    h2 = grid.h**2
    out = None
    for ax in range(grid.dim):
        plus = [slice(1, -1)] * grid.dim
        minus = [slice(1, -1)] * grid.dim
        plus[ax] = slice(2, None)
        minus[ax] = slice(None, -2)
        term = (u[tuple(plus)] + u[tuple(minus)]) / h2[ax]
        out = term if out is None else out + term
    return out


def _laplacian_interior(u: np.ndarray, grid: GridSpec) -> np.ndarray:
    denom = float(np.sum(2.0 / grid.h**2))
    return _neighbor_sum(u, grid) - denom * u[_interior(grid)]


def lcp_residual(problem: ObstacleProblem, u: ScalarField) -> LcpResidual:
    """Complementarity certificate, scaled by max(h)^2 on the equation parts."""
    grid = problem.grid
    lap = _laplacian_interior(u.values, grid)
    cint = problem.c.values[_interior(grid)]
    uint = u.values[_interior(grid)]
    scale = float(grid.h.max()) ** 2
    diff = lap - cint
    pos = uint > 0
    max_eq = float(np.abs(diff[pos]).max()) * scale if np.any(pos) else 0.0
    max_ineq = float(np.maximum(diff, 0.0).max()) * scale
    max_neg = float(np.maximum(-u.values, 0.0).max())
    return LcpResidual(max_eq=max_eq, max_ineq=max_ineq, max_neg=max_neg)


def _sweep_red_black(u, cvals, grid, relax, interior, parity):
    denom = float(np.sum(2.0 / grid.h**2))
    for color in (0, 1):
        gs = (_neighbor_sum(u, grid) - cvals[interior]) / denom
        upd = np.maximum(0.0, (1.0 - relax) * u[interior] + relax * gs)
        sel = parity == color
        u[interior] = np.where(sel, upd, u[interior])


def _sweep_lexicographic(u, cvals, grid, relax):
    denom = float(np.sum(2.0 / grid.h**2))
    h2 = grid.h**2
    ranges = [range(1, n) for n in grid.cells]
    for idx in itertools.product(*ranges):
        nb = 0.0
        for ax in range(grid.dim):
            up = list(idx)
            dn = list(idx)
            up[ax] += 1
            dn[ax] -= 1
            nb += (u[tuple(up)] + u[tuple(dn)]) / h2[ax]
        gs = (nb - cvals[idx]) / denom
        u[idx] = max(0.0, (1.0 - relax) * u[idx] + relax * gs)


def solve_psor(
    problem: ObstacleProblem,
    opts: SolveOptions | None = None,
    telemetry=None,
) -> SolveResult:
    """Iterate projected SOR sweeps until the LCP residual meets tol.

    Deterministic for a fixed ordering.  A run that hits max_iter with
    residual above tol is returned with converged=False, never silently.
    Telemetry rows ``iter,max_eq,max_ineq,max_neg`` are streamed to the
    optional file-like ``telemetry`` at every residual check.
    """
    opts = opts or SolveOptions()
    grid = problem.grid
    max_iter = opts.max_iter
    if max_iter is None:
        max_iter = 40 * int(grid.cells.max()) ** 2

    u = np.zeros(grid.node_shape)
    bnd = _boundary_mask(grid)
    u[bnd] = problem.g[bnd]
    cvals = problem.c.values

    interior = _interior(grid)
    idx_grids = np.meshgrid(
        *[np.arange(1, n) for n in grid.cells], indexing="ij"
    )
    parity = sum(idx_grids) % 2

    if telemetry is not None:
        telemetry.write("iter,max_eq,max_ineq,max_neg\n")

    it = 0
    res = lcp_residual(problem, ScalarField(grid, u))
    while it < max_iter:
        if opts.ordering == "red-black":
            _sweep_red_black(u, cvals, grid, opts.relax, interior, parity)
        else:
            _sweep_lexicographic(u, cvals, grid, opts.relax)
        it += 1
        if it % opts.check_every == 0 or it == max_iter:
            res = lcp_residual(problem, ScalarField(grid, u))
            if telemetry is not None:
                telemetry.write(
                    f"{it},{res.max_eq:.17g},{res.max_ineq:.17g},{res.max_neg:.17g}\n"
                )
            if res.max_violation <= opts.tol:
                break
    else:
        res = lcp_residual(problem, ScalarField(grid, u))

    field = ScalarField(grid, u)
    res = lcp_residual(problem, field)
    return SolveResult(
        u=field,
        iterations=it,
        residual=res,
        converged=res.max_violation <= opts.tol,
    )


def discrete_energy(problem: ObstacleProblem, u: ScalarField) -> float:
    """Sum of (|grad_h u|^2 / 2 + c u) h^dim with forward differences."""
    grid = problem.grid
    vol = grid.cell_volume
    total = 0.0
    for ax in range(grid.dim):
        hi = [slice(None)] * grid.dim
        lo = [slice(None)] * grid.dim
        hi[ax] = slice(1, None)
        lo[ax] = slice(None, -1)
        d = (u.values[tuple(hi)] - u.values[tuple(lo)]) / grid.h[ax]
        total += 0.5 * float(np.sum(d**2)) * vol
    total += float(np.sum(problem.c.values * u.values)) * vol
    return total
