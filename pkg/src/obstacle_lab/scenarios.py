"""Benchmark catalog: obstacle problems with known or constructible truth.

Entries cover the closed-form 1D/radial solutions, exact polynomial
solutions with degenerate directions, anisotropic ellipse-producing data,
a 3D pinch geometry whose coincidence set collapses onto the degenerate
axis, and a pure-geometry paraboloid mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import ScenarioError
from .grid import GridSpec, Mask, ScalarField, sample
from .solver import ObstacleProblem

CATALOG = (
    "flat1d",
    "radial2d",
    "radial3d",
    "poly",
    "aniso2d",
    "pinch3d",
    "paraboloid_mask",
)


@dataclass
class Scenario:
    name: str
    dim: int
    params: dict
    problem: ObstacleProblem | None
    exact: object | None = None  # vectorized evaluator of the reference solution
    truth: dict = dataclass_field(default_factory=dict)
    mask: Mask | None = None  # pure-geometry entries only


def _ones(grid: GridSpec) -> ScalarField:
    return ScalarField(grid, np.ones(grid.node_shape))


def _dirichlet_from(evaluator, grid: GridSpec) -> np.ndarray:
    return sample(evaluator, grid).values


def _half_width(grid: GridSpec) -> float:
    return float((grid.extent / 2).min())


def _flat1d(params, grid):
    beta = float(params.get("beta", 0.125))
    if grid.dim != 1:
        raise ScenarioError("flat1d needs a 1D grid")
    if not (0.0 < beta < 0.5):
        raise ScenarioError(f"flat1d: beta={beta} outside (0, 1/2)")
    a = 1.0 - np.sqrt(2.0 * beta)

    def exact(P):
        return np.maximum(np.abs(P[:, 0]) - a, 0.0) ** 2 / 2.0

    problem = ObstacleProblem(
        grid=grid, c=_ones(grid), c0=1.0, g=_dirichlet_from(exact, grid)
    )
    return Scenario(
        name="flat1d",
        dim=1,
        params={"beta": beta},
        problem=problem,
        exact=exact,
        truth={"contact_halfwidth": a},
    )


def _radial2d(params, grid):
    R = float(params.get("R", 0.5))
    if grid.dim != 2:
        raise ScenarioError("radial2d needs a 2D grid")
    if not (0.0 < R < _half_width(grid)):
        raise ScenarioError(f"radial2d: R={R} must lie in (0, half box)")

    def exact(P):
        r = np.linalg.norm(P, axis=1)
        out = np.zeros(len(P))
        o = r > R
        out[o] = (r[o] ** 2 - R**2) / 4.0 - (R**2 / 2.0) * np.log(r[o] / R)
        return out

    problem = ObstacleProblem(
        grid=grid, c=_ones(grid), c0=1.0, g=_dirichlet_from(exact, grid)
    )
    return Scenario(
        name="radial2d",
        dim=2,
        params={"R": R},
        problem=problem,
        exact=exact,
        truth={"radius": R, "center": np.zeros(2)},
    )


def _radial3d(params, grid):
    R = float(params.get("R", 0.5))
    if grid.dim != 3:
        raise ScenarioError("radial3d needs a 3D grid")
    if not (0.0 < R < _half_width(grid)):
        raise ScenarioError(f"radial3d: R={R} must lie in (0, half box)")

    def exact(P):
        r = np.linalg.norm(P, axis=1)
        out = np.zeros(len(P))
        o = r > R
        out[o] = r[o] ** 2 / 6.0 + R**3 / (3.0 * r[o]) - R**2 / 2.0
        return out

    problem = ObstacleProblem(
        grid=grid, c=_ones(grid), c0=1.0, g=_dirichlet_from(exact, grid)
    )
    return Scenario(
        name="radial3d",
        dim=3,
        params={"R": R},
        problem=problem,
        exact=exact,
        truth={"radius": R, "center": np.zeros(3)},
    )


def _poly_matrix(params, dim) -> np.ndarray:
    A = np.zeros((dim, dim))
    for i in range(dim):
        for j in range(i, dim):
            key = f"a{i + 1}{j + 1}"
            if key in params:
                A[i, j] = A[j, i] = float(params[key])
    return A


def _poly(params, grid):
    A = _poly_matrix(params, grid.dim)
    eigvals = np.linalg.eigvalsh(A)
    if eigvals.min() < -1e-12:
        raise ScenarioError("poly: matrix must be positive semidefinite")
    if abs(2.0 * np.trace(A) - 1.0) > 1e-12:
        raise ScenarioError(
            f"poly: need 2*tr(A) = 1, got tr(A) = {np.trace(A):.6g}"
        )

    def exact(P):
        return np.einsum("ki,ij,kj->k", P, A, P)

    w, V = np.linalg.eigh(A)
    kernel = V[:, w < 1e-10]
    problem = ObstacleProblem(
        grid=grid, c=_ones(grid), c0=1.0, g=_dirichlet_from(exact, grid)
    )
    return Scenario(
        name="poly",
        dim=grid.dim,
        params=dict(params),
        problem=problem,
        exact=exact,
        truth={"A": A, "kernel_basis": kernel, "n": kernel.shape[1]},
    )


def _aniso2d(params, grid):
    alpha = float(params.get("alpha", 0.15))
    offset = float(params.get("offset", 0.05))
    if grid.dim != 2:
        raise ScenarioError("aniso2d needs a 2D grid")
    if not (0.0 < alpha < 0.5) or abs(alpha - 0.25) < 1e-12:
        raise ScenarioError(
            f"aniso2d: alpha={alpha} must lie in (0, 1/2) away from 1/4"
        )
    if not (offset > 0):
        raise ScenarioError("aniso2d: offset must be positive")

    # The raw quadratic alpha*x1^2 + (1/2-alpha)*x2^2 solves the problem
    # exactly with a measure-zero coincidence set; lowering the data by a
    # positive offset fattens the set into the expected ellipse-like blob.
    def data(P):
        q = alpha * P[:, 0] ** 2 + (0.5 - alpha) * P[:, 1] ** 2
        return np.maximum(q - offset, 0.0)

    problem = ObstacleProblem(
        grid=grid, c=_ones(grid), c0=1.0, g=_dirichlet_from(data, grid)
    )
    major_axis = 0 if alpha < 0.25 else 1
    return Scenario(
        name="aniso2d",
        dim=2,
        params={"alpha": alpha, "offset": offset},
        problem=problem,
        exact=None,
        truth={"major_axis": major_axis},
    )


def _pinch3d(params, grid):
    eps = float(params.get("eps", 0.05))
    if grid.dim != 3:
        raise ScenarioError("pinch3d needs a 3D grid")
    if not (0.0 < eps < 0.5):
        raise ScenarioError(f"pinch3d: eps={eps} outside (0, 1/2)")

    # Blow-down p = (x1^2 + x2^2)/4 with kernel = x3-axis (n = 1).
    # Lowering the boundary data by eps * max(x3, 0) pulls the solution
    # below p on the x3 > 0 side, so the coincidence set fattens around the
    # axis there and pinches down to a hairline tube below.  By the
    # comparison principle a raised perturbation cannot fatten the set, so
    # the perturbation must be subtracted.  The linear ramp matters: the
    # interior deficit w = p - u is roughly the harmonic extension of the
    # ramp, so the fat-tube radius ~ 2 sqrt(w) follows a square-root law in
    # x3 over most of the box.  Rotational symmetry in (x1, x2) makes every
    # cross section a disk.
    def data(P):
        p = (P[:, 0] ** 2 + P[:, 1] ** 2) / 4.0
        psi = np.maximum(P[:, 2], 0.0)
        return np.maximum(p - eps * psi, 0.0)

    problem = ObstacleProblem(
        grid=grid, c=_ones(grid), c0=1.0, g=_dirichlet_from(data, grid)
    )
    return Scenario(
        name="pinch3d",
        dim=3,
        params={"eps": eps},
        problem=problem,
        exact=None,
        truth={
            "kernel_axis": 2,
            "n": 1,
            "A": np.diag([0.25, 0.25, 0.0]),
        },
    )


def _paraboloid_mask(params, grid):
    kappa = float(params.get("kappa", 1.0))
    if grid.dim != 3:
        raise ScenarioError("paraboloid_mask needs a 3D grid")
    if not (kappa > 0):
        raise ScenarioError("paraboloid_mask: kappa must be positive")
    centers = grid.cell_centers()
    rp = np.sqrt(centers[..., 0] ** 2 + centers[..., 1] ** 2)
    x3 = centers[..., 2]
    flags = (x3 >= 0.0) & (rp**2 <= kappa * x3)
    return Scenario(
        name="paraboloid_mask",
        dim=3,
        params={"kappa": kappa},
        problem=None,
        exact=None,
        truth={"kappa": kappa, "kernel_axis": 2, "n": 1},
        mask=Mask(grid, flags),
    )


_BUILDERS = {
    "flat1d": _flat1d,
    "radial2d": _radial2d,
    "radial3d": _radial3d,
    "poly": _poly,
    "aniso2d": _aniso2d,
    "pinch3d": _pinch3d,
    "paraboloid_mask": _paraboloid_mask,
}

# name -> (dim, parameter schema, has exact solution)
CATALOG_INFO = {
    "flat1d": (1, "beta", True),
    "radial2d": (2, "R", True),
    "radial3d": (3, "R", True),
    "poly": ("1-3", "a11,a12,...", True),
    "aniso2d": (2, "alpha,offset", False),
    "pinch3d": (3, "eps", False),
    "paraboloid_mask": (3, "kappa", False),
}


def make_scenario(name: str, params: dict, grid: GridSpec) -> Scenario:
    if name not in _BUILDERS:
        raise ScenarioError(
            f"unknown scenario {name!r}; catalog: {', '.join(CATALOG)}"
        )
    return _BUILDERS[name](params or {}, grid)


def exact_value(s: Scenario, x) -> float | None:
    """Reference solution at x when the catalog entry has one."""
    if s.exact is None:
        return None
    x = np.asarray(x, dtype=float).reshape(1, s.dim)
    return float(s.exact(x)[0])


def scenario_listing() -> list[str]:
    """One line per catalog entry: name dim params-schema has-exact."""
    lines = []
    for name in CATALOG:
        dim, schema, has_exact = CATALOG_INFO[name]
        lines.append(f"{name} {dim} {schema} {'yes' if has_exact else 'no'}")
    return lines
