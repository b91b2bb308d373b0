"""Coincidence-set geometry diagnostics.

Mask extraction, free-boundary points, kernel-coordinate cross sections
and their diameters, first-moment direction fields and their oscillation,
moment-based ellipsoid fits, Hausdorff distances, hyperplane slabs, the
per-slice closeness report, and diameter asymptotics near a pinch tip.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateDirectionError,
    DegenerateFitError,
    InsufficientDataError,
    UndefinedDistanceError,
)
from .grid import GridSpec, Mask, ScalarField


@dataclass
class Ellipsoid:
    """center + rotation @ diag(semi_axes) unit-ball image."""

    center: np.ndarray
    semi_axes: np.ndarray  # sorted descending
    rotation: np.ndarray  # columns = principal directions

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.semi_axes = np.asarray(self.semi_axes, dtype=float)
        self.rotation = np.asarray(self.rotation, dtype=float)
        d = len(self.center)
        if np.any(self.semi_axes <= 0):
            raise ValueError("semi-axes must be positive")
        if np.any(np.diff(self.semi_axes) > 1e-12):
            raise ValueError("semi-axes must be sorted descending")
        if np.abs(self.rotation.T @ self.rotation - np.eye(d)).max() > 1e-10:
            raise ValueError("rotation must be orthonormal")

    @property
    def diameter(self) -> float:
        return 2.0 * float(self.semi_axes.max())

    def boundary_points(self, per_dim: int = 64) -> np.ndarray:
        """Deterministic boundary sample cloud, dense enough that the cloud
        spacing stays well below the grid resolutions used elsewhere."""
        d = len(self.center)
        if d == 1:
            sphere = np.array([[-1.0], [1.0]])
        elif d == 2:
            t = np.linspace(0.0, 2.0 * math.pi, per_dim * 2, endpoint=False)
            sphere = np.stack([np.cos(t), np.sin(t)], axis=1)
        else:
            n = per_dim * per_dim
            k = np.arange(n)
            phi = math.pi * (3.0 - math.sqrt(5.0)) * k  # Fibonacci sphere
            z = 1.0 - 2.0 * (k + 0.5) / n
            rho = np.sqrt(np.maximum(1.0 - z**2, 0.0))
            sphere = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
        return self.center + (sphere * self.semi_axes) @ self.rotation.T

    def contains(self, pts: np.ndarray) -> np.ndarray:
        rel = (np.atleast_2d(pts) - self.center) @ self.rotation
        return np.sum((rel / self.semi_axes) ** 2, axis=1) <= 1.0


@dataclass
class CrossSection:
    """Coincidence-set slice at kernel coordinate xpp, restricted to the
    reference ball of radius 2*delta about the base point."""

    xpp: np.ndarray
    mask: Mask


@dataclass
class CrossSectionReport:
    xpp: np.ndarray
    d: float
    t_prime: np.ndarray | None
    fitted: Ellipsoid | None
    closeness: float | None
    nu: np.ndarray | None


@dataclass
class DiameterProfile:
    samples: list  # (coordinate, d), sorted by coordinate
    tip: float
    exponent: float
    coefficient: float
    branch: str = "mismatch"  # "sqrt" | "flat" | "mismatch"
    max_quotient: float = 0.0


def coincidence_mask(u: ScalarField, eps_u: float) -> Mask:
    """Cells all of whose corner nodes are at most eps_u."""
    if not (eps_u > 0):
        raise ValueError("eps_u must be positive")
    v = u.values
    for ax in range(u.grid.dim):
        lo = [slice(None)] * u.grid.dim
        hi = [slice(None)] * u.grid.dim
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        v = np.maximum(v[tuple(lo)], v[tuple(hi)])
    return Mask(u.grid, v <= eps_u)


def default_eps_u(grid: GridSpec, tol: float, c_max: float = 1.0) -> float:
    """Zero-set threshold: quadratic growth makes an O(h^2) collar."""
    return max(10.0 * tol, float(grid.h.max()) ** 2 * c_max / 4.0)


def free_boundary(mask: Mask) -> np.ndarray:
    """Centers of faces separating flagged from unflagged cells, shape (M, dim)."""
    g = mask.grid
    pts = []
    centers = g.cell_centers()
    for ax in range(g.dim):
        lo = [slice(None)] * g.dim
        hi = [slice(None)] * g.dim
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        diff = mask.flags[tuple(lo)] != mask.flags[tuple(hi)]
        face = 0.5 * (centers[tuple(lo)] + centers[tuple(hi)])
        pts.append(face[diff])
    if not pts:
        return np.empty((0, g.dim))
    return np.concatenate(pts, axis=0)


def has_interior(mask: Mask) -> bool:
    """Some cell has all its face neighbors flagged."""
    f = mask.flags
    core = f[tuple(slice(1, -1) for _ in range(mask.grid.dim))].copy()
    for ax in range(mask.grid.dim):
        for shift in (-1, 1):
            sl = [slice(1, -1)] * mask.grid.dim
            sl[ax] = slice(1 + shift, f.shape[ax] - 1 + shift)
            core &= f[tuple(sl)]
    return bool(core.any())


def _check_kernel_frame(grid: GridSpec, kernel_basis: np.ndarray) -> int:
    """Kernel basis must span the last n coordinate axes; returns n."""
    kb = np.atleast_2d(np.asarray(kernel_basis, dtype=float))
    if kb.shape[0] != grid.dim:
        kb = kb.T
    n = kb.shape[1]
    span_ok = np.abs(kb[: grid.dim - n, :]).max() < 1e-8 if n < grid.dim else True
    if not span_ok:
        raise ValueError(
            "kernel basis must be aligned with the last axes; resample the "
            "field into the kernel-adapted frame first"
        )
    return n


def cross_section(
    mask: Mask, xpp, x0, delta: float, kernel_basis
) -> CrossSection:
    """Mask slice at the cell layer nearest xpp, restricted to the prime-ball
    of radius 2*delta about x0'."""
    g = mask.grid
    n = _check_kernel_frame(g, kernel_basis)
    m = g.dim - n
    xpp = np.atleast_1d(np.asarray(xpp, dtype=float))
    x0 = np.asarray(x0, dtype=float).reshape(g.dim)
    layers = []
    for i, ax in enumerate(range(m, g.dim)):
        rel = (xpp[i] - g.origin[ax]) / g.h[ax] - 0.5
        if xpp[i] < g.origin[ax] - 1e-9 or xpp[i] > g.upper[ax] + 1e-9:
            raise ValueError(f"slice coordinate {xpp[i]} outside the box")
        layers.append(int(np.clip(round(rel), 0, g.cells[ax] - 1)))
    actual = np.array(
        [g.axis_cell_centers(m + i)[k] for i, k in enumerate(layers)]
    )
    flags = mask.flags[(Ellipsis,) + tuple(layers)].copy()
    slice_grid = GridSpec(
        dim=m, origin=g.origin[:m], extent=g.extent[:m], cells=g.cells[:m]
    )
    centers = slice_grid.cell_centers().reshape(-1, m)
    keep = np.linalg.norm(centers - x0[:m], axis=1) <= 2.0 * delta
    flags = flags.reshape(-1) & keep
    return CrossSection(
        xpp=actual, mask=Mask(slice_grid, flags.reshape(slice_grid.cell_shape))
    )


def _hull_2d(pts: np.ndarray) -> np.ndarray:
    """Andrew monotone chain; pts shape (M, 2)."""
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    if len(pts) <= 3:
        return pts

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2:
                u = out[-1] - out[-2]
                v = p - out[-2]
                if u[0] * v[1] - u[1] * v[0] > 0:
                    break
                out.pop()
            out.append(p)
        return out[:-1]

    return np.array(half(list(pts)) + half(list(pts[::-1])))


def _point_diameter(pts: np.ndarray) -> float:
    if len(pts) < 2:
        return 0.0
    if pts.shape[1] == 1:
        return float(pts.max() - pts.min())
    if pts.shape[1] == 2 and len(pts) > 64:
        pts = _hull_2d(pts)
    best = 0.0
    for i in range(0, len(pts), 512):
        block = pts[i : i + 512]
        d2 = np.sum((block[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
        best = max(best, float(d2.max()))
    return math.sqrt(best)


def diameter(cs: CrossSection) -> float:
    """Max pairwise flagged-center distance plus one cell diagonal; 0 if empty."""
    pts = cs.mask.flagged_centers()
    if len(pts) == 0:
        return 0.0
    diag = float(np.linalg.norm(cs.mask.grid.h))
    return _point_diameter(pts) + diag


def slice_index_set(mask: Mask, x0, delta: float, kernel_basis) -> list:
    """Kernel coordinates of all nonempty restricted slices."""
    g = mask.grid
    n = _check_kernel_frame(g, kernel_basis)
    m = g.dim - n
    import itertools

    axes = [g.axis_cell_centers(ax) for ax in range(m, g.dim)]
    out = []
    for combo in itertools.product(*axes):
        cs = cross_section(mask, np.array(combo), x0, delta, kernel_basis)
        if cs.mask.flags.any():
            out.append(cs.xpp)
    return out


def nu_direction(
    mask: Mask, x, d: float, kernel_basis, tau_nu: float = 0.05
) -> np.ndarray:
    """Normalized first moment of (x - y)'' over flagged cells in B_d(x)."""
    if not (d > 0):
        raise ValueError("d must be positive")
    g = mask.grid
    n = _check_kernel_frame(g, kernel_basis)
    m = g.dim - n
    x = np.asarray(x, dtype=float).reshape(g.dim)
    centers = mask.flagged_centers()
    if len(centers) == 0:
        raise DegenerateDirectionError("no flagged cells in the ball")
    inside = centers[np.linalg.norm(centers - x, axis=1) <= d]
    if len(inside) == 0:
        raise DegenerateDirectionError("no flagged cells in the ball")
    vol = g.cell_volume
    moment = ((x - inside)[:, m:]).sum(axis=0) * vol
    norm = float(np.linalg.norm(moment))
    if norm <= tau_nu * len(inside) * vol * d:
        raise DegenerateDirectionError(
            f"direction integral {norm:.3g} below threshold; symmetric set"
        )
    return moment / norm


def osc_nu(
    mask: Mask,
    x,
    d: float,
    kernel_basis,
    max_samples: int = 64,
    tau_nu: float = 0.05,
) -> float:
    """Max pairwise direction difference over flagged cells near the sphere
    boundary of B_d(x); degenerate samples are skipped."""
    if not (d > 0):
        raise ValueError("d must be positive")
    g = mask.grid
    x = np.asarray(x, dtype=float).reshape(g.dim)
    centers = mask.flagged_centers()
    dist = np.linalg.norm(centers - x, axis=1)
    inside = dist <= d
    centers, dist = centers[inside], dist[inside]
    if len(centers) == 0:
        raise DegenerateDirectionError("no flagged cells in the ball")
    order = np.lexsort((np.arange(len(centers)), np.abs(dist - d)))
    picks = centers[order[:max_samples]]
    dirs = []
    for y in picks:
        try:
            dirs.append(nu_direction(mask, y, d, kernel_basis, tau_nu=tau_nu))
        except DegenerateDirectionError:
            continue
    if not dirs:
        raise DegenerateDirectionError("all sampled cells degenerate")
    dirs = np.array(dirs)
    osc = 0.0
    for i in range(len(dirs)):
        osc = max(osc, float(np.linalg.norm(dirs[i] - dirs, axis=1).max()))
    return osc


def fit_ellipsoid(obj) -> Ellipsoid:
    """Moment fit: barycenter + covariance eigen-decomposition with the
    uniform solid-ellipsoid identity a_j = sqrt((m + 2) lambda_j)."""
    mask = obj.mask if isinstance(obj, CrossSection) else obj
    m = mask.grid.dim
    pts = mask.flagged_centers()
    if len(pts) < (m + 1) * (m + 2) // 2 or not has_interior(mask):
        raise DegenerateFitError(
            f"{len(pts)} cells, interior={has_interior(mask)}: cannot fit"
        )
    bary = pts.mean(axis=0)
    rel = pts - bary
    cov = rel.T @ rel / len(pts)
    w, V = np.linalg.eigh(cov)
    if w.min() <= 0:
        raise DegenerateFitError("degenerate covariance")
    axes = np.sqrt((m + 2) * w)
    order = np.argsort(axes)[::-1]
    return Ellipsoid(center=bary, semi_axes=axes[order], rotation=V[:, order])


def _boundary_cloud(obj) -> np.ndarray:
    if isinstance(obj, Ellipsoid):
        return obj.boundary_points()
    mask = obj.mask if isinstance(obj, CrossSection) else obj
    pts = free_boundary(mask)
    if len(pts) == 0:
        raise UndefinedDistanceError("empty boundary point cloud")
    return pts


def _directed_hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    worst = 0.0
    for i in range(0, len(a), 512):
        block = a[i : i + 512]
        d2 = np.sum((block[:, None, :] - b[None, :, :]) ** 2, axis=-1)
        worst = max(worst, float(d2.min(axis=1).max()))
    return math.sqrt(worst)


def hausdorff(a, b) -> float:
    """Symmetric Hausdorff distance between boundary point clouds."""
    pa, pb = _boundary_cloud(a), _boundary_cloud(b)
    return max(_directed_hausdorff(pa, pb), _directed_hausdorff(pb, pa))


def project_slice(mask: Mask, x, nu, radius: float) -> Mask:
    """Flagged cells in B_radius(x) within one cell diagonal of the
    hyperplane (x - y)'' . nu = 0."""
    g = mask.grid
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    n = len(nu)
    if abs(np.linalg.norm(nu) - 1.0) > 1e-9:
        raise ValueError("nu must be a unit vector")
    if not (radius > 0):
        raise ValueError("radius must be positive")
    x = np.asarray(x, dtype=float).reshape(g.dim)
    m = g.dim - n
    centers = g.cell_centers().reshape(-1, g.dim)
    diag = float(np.linalg.norm(g.h))
    keep = (
        mask.flags.reshape(-1)
        & (np.linalg.norm(centers - x, axis=1) <= radius)
        & (np.abs((x - centers)[:, m:] @ nu) <= diag)
    )
    return Mask(g, keep.reshape(g.cell_shape))


def cross_section_convergence(
    u: ScalarField,
    x0,
    delta: float,
    Eprime: Ellipsoid,
    slice_schedule,
    kernel_basis,
    eps_u: float,
    tau_nu: float = 0.05,
) -> list:
    """Per-slice closeness of the d-normalized section to the d-scaled
    reference ellipsoid, sorted by kernel distance from the base point."""
    if abs(Eprime.diameter - 1.0) > 1e-6:
        raise ValueError("reference ellipsoid must have diameter 1")
    g = u.grid
    n = _check_kernel_frame(g, kernel_basis)
    m = g.dim - n
    x0 = np.asarray(x0, dtype=float).reshape(g.dim)
    mask = coincidence_mask(u, eps_u)
    reports = []
    for xpp in slice_schedule:
        cs = cross_section(mask, xpp, x0, delta, kernel_basis)
        d = diameter(cs)
        if d == 0.0:
            reports.append(
                CrossSectionReport(
                    xpp=cs.xpp, d=0.0, t_prime=None, fitted=None,
                    closeness=None, nu=None,
                )
            )
            continue
        tprime = cs.mask.flagged_centers().mean(axis=0)
        scaled = Ellipsoid(
            center=tprime,
            semi_axes=Eprime.semi_axes * d,
            rotation=Eprime.rotation,
        )
        closeness = hausdorff(cs.mask, scaled) / d
        try:
            fitted = fit_ellipsoid(cs)
        except DegenerateFitError:
            fitted = None
        xfull = np.concatenate([tprime, cs.xpp])
        try:
            nu = nu_direction(mask, xfull, d, kernel_basis, tau_nu=tau_nu)
        except DegenerateDirectionError:
            nu = None
        reports.append(
            CrossSectionReport(
                xpp=cs.xpp, d=d, t_prime=tprime, fitted=fitted,
                closeness=closeness, nu=nu,
            )
        )
    reports.sort(key=lambda rep: float(np.linalg.norm(rep.xpp - x0[m:])))
    return reports


def diameter_asymptotics(samples) -> DiameterProfile:
    """Power-law fit of d against distance to the extrapolated tip.

    The tip comes from a linear extrapolation of d^2 (exact for square-root
    profiles); the exponent from a log-log least-squares line.
    """
    samples = sorted((float(c), float(d)) for c, d in samples)
    coords = np.array([s[0] for s in samples])
    ds = np.array([s[1] for s in samples])
    if np.any(ds < 0):
        raise ValueError("diameters must be nonnegative")
    pos = ds > 0
    if pos.sum() < 4:
        raise InsufficientDataError(
            f"need at least 4 positive samples, got {int(pos.sum())}"
        )

    # orient so d grows with the coordinate
    slope = np.polyfit(coords[pos], ds[pos], 1)[0]
    sign = 1.0 if slope >= 0 else -1.0
    c = sign * coords
    order = np.argsort(c)
    c, dd = c[order], ds[order]
    pos = dd > 0

    # tip candidates from extrapolating the smallest positive samples:
    # linear in d^2 (exact for square-root profiles) and linear in d
    # (exact for affine profiles); keep whichever yields the straighter
    # log-log line
    cp, dp = c[pos], dd[pos]
    k = min(6, len(cp))
    cmin = cp.min()
    zeros = c[~pos]
    zmax = float(zeros[zeros < cmin].max()) if np.any(zeros < cmin) else -np.inf
    fallback = zmax if zmax > -np.inf else cmin - float(np.diff(cp).mean())
    candidates = []
    for powers in (dp[:k] ** 2, dp[:k]):
        a, b = np.polyfit(cp[:k], powers, 1)
        t = -b / a if a > 0 else -np.inf
        if np.isfinite(t) and t < cmin and not (zmax > -np.inf and t < zmax):
            candidates.append(t)
    if not candidates:
        candidates.append(fallback)

    best = None
    for t in candidates:
        usable = pos & (c > t + 1e-300)
        logx = np.log(c[usable] - t)
        logy = np.log(dd[usable])
        (e, i), ssr, *_ = np.polyfit(logx, logy, 1, full=True)
        score = float(ssr[0]) if len(ssr) else 0.0
        if best is None or score < best[0]:
            best = (score, t, e, i)
    _, tip, exponent, intercept = best

    # branch verdict: a vanishing difference quotient (or super-linear decay
    # to the tip) means a flat profile; an exponent near 1/2 the square-root
    # law; anything else is flagged as a mismatch
    quot = float(np.abs(np.diff(dp) / np.diff(cp)).max()) if len(cp) > 1 else 0.0
    if quot <= 0.1 or exponent > 1.05:
        branch = "flat"
    elif abs(exponent - 0.5) <= 0.15:
        branch = "sqrt"
    else:
        branch = "mismatch"
    return DiameterProfile(
        samples=samples,
        tip=float(sign * tip),
        exponent=float(exponent),
        coefficient=float(np.exp(intercept)),
        branch=branch,
        max_quotient=quot,
    )


def write_slice_svg(path, boundary_pts: np.ndarray, ellipse: Ellipsoid | None = None) -> None:
    """Free-boundary polyline plus optional fitted-ellipse overlay (2D)."""
    pts = np.atleast_2d(boundary_pts)
    lo = pts.min(axis=0) - 0.05
    hi = pts.max(axis=0) + 0.05
    span = float((hi - lo).max())
    scale = 400.0 / span

    def to_px(p):
        q = (p - lo) * scale
        return q[0], 400.0 - q[1]

    lines = [
        '<svg xmlns="http://www.w3.org/2000/svg" width="400" height="400" '
        'viewBox="0 0 400 400">'
    ]
    for p in pts:
        x, y = to_px(p)
        lines.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="1.5" fill="black"/>')
    if ellipse is not None and len(ellipse.center) == 2:
        bpts = ellipse.boundary_points()
        path_d = []
        for i, p in enumerate(bpts):
            x, y = to_px(p)
            path_d.append(f"{'M' if i == 0 else 'L'} {x:.2f} {y:.2f}")
        path_d.append("Z")
        lines.append(
            f'<path d="{" ".join(path_d)}" stroke="red" fill="none" stroke-width="1.5"/>'
        )
    lines.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
