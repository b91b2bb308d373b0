"""Masks, cross sections, direction fields, ellipsoid fits, profiles."""

import numpy as np
import pytest

from obstacle_lab.errors import (
    DegenerateDirectionError,
    DegenerateFitError,
    InsufficientDataError,
)
from obstacle_lab.grid import Mask, box_grid, sample
from obstacle_lab.geometry import (
    Ellipsoid,
    coincidence_mask,
    cross_section,
    default_eps_u,
    diameter,
    diameter_asymptotics,
    fit_ellipsoid,
    free_boundary,
    has_interior,
    hausdorff,
    nu_direction,
    osc_nu,
    project_slice,
    slice_index_set,
    write_slice_svg,
)

KB2 = np.array([[0.0], [1.0]])  # 2D, kernel = x2-axis
KB3 = np.array([[0.0], [0.0], [1.0]])  # 3D, kernel = x3-axis


def _disk_mask(cells=64, R=0.5, center=(0.0, 0.0)):
    g = box_grid(2, cells)
    c = g.cell_centers()
    return Mask(g, (c[..., 0] - center[0]) ** 2 + (c[..., 1] - center[1]) ** 2 <= R * R)


def test_ellipsoid_validation():
    with pytest.raises(ValueError):
        Ellipsoid(np.zeros(2), np.array([0.2, 0.5]), np.eye(2))  # unsorted
    with pytest.raises(ValueError):
        Ellipsoid(np.zeros(2), np.array([0.5, 0.2]), np.ones((2, 2)))


def test_ellipsoid_boundary_points_on_surface():
    E = Ellipsoid(np.array([0.1, -0.2]), np.array([0.5, 0.25]), np.eye(2))
    pts = E.boundary_points()
    rel = (pts - E.center) / E.semi_axes
    assert np.allclose(np.linalg.norm(rel, axis=1), 1.0, atol=1e-12)
    assert E.diameter == pytest.approx(1.0)


def test_coincidence_mask_corner_rule():
    g = box_grid(1, 4)
    u = sample(lambda P: np.maximum(P[:, 0], 0.0), g)
    mask = coincidence_mask(u, 1e-9)
    # only cells with every corner at zero qualify
    assert list(mask.flags) == [True, True, False, False]


def test_default_eps_u_scales():
    g = box_grid(2, 64)
    h = float(g.h.max())
    assert default_eps_u(g, 1e-10) == pytest.approx(h * h / 4.0)
    assert default_eps_u(g, 1e-3) == pytest.approx(1e-2)


def test_free_boundary_near_circle():
    mask = _disk_mask(128)
    fb = free_boundary(mask)
    r = np.linalg.norm(fb, axis=1)
    h = 2.0 / 128
    assert len(fb) > 100
    assert np.abs(r - 0.5).max() <= h


def test_has_interior():
    assert has_interior(_disk_mask())
    g = box_grid(2, 32)
    c = g.cell_centers()
    line = Mask(g, np.abs(c[..., 0]) < 0.04)  # single-cell-wide strip
    assert not has_interior(line)


def test_cross_section_and_diameter():
    g = box_grid(3, 64)
    c = g.cell_centers()
    mask = Mask(g, (c[..., 0] ** 2 + c[..., 1] ** 2 <= 0.09) & (np.abs(c[..., 2]) < 1.0))
    cs = cross_section(mask, [0.3], np.zeros(3), 0.45, KB3)
    d = diameter(cs)
    assert d == pytest.approx(0.6, abs=3 * float(np.linalg.norm(g.h)))
    empty = cross_section(Mask(g, np.zeros(g.cell_shape, bool)), [0.3], np.zeros(3), 0.45, KB3)
    assert diameter(empty) == 0.0


def test_slice_index_set():
    g = box_grid(2, 16)
    c = g.cell_centers()
    full = Mask(g, np.abs(c[..., 0]) < 0.2)
    assert len(slice_index_set(full, np.zeros(2), 0.5, KB2)) > 0
    none = Mask(g, np.zeros(g.cell_shape, bool))
    assert slice_index_set(none, np.zeros(2), 0.5, KB2) == []


def test_nu_direction_halfspace():
    g = box_grid(2, 64)
    c = g.cell_centers()
    mask = Mask(g, c[..., 1] >= 0.0)  # {y2 >= 0}: every (x - y)'' <= 0
    nu = nu_direction(mask, np.zeros(2), 0.3, KB2)
    assert nu[0] == -1.0
    assert osc_nu(mask, np.zeros(2), 0.3, KB2) <= 1e-12


def test_nu_direction_cylinder_degenerate():
    g = box_grid(2, 64)
    c = g.cell_centers()
    mask = Mask(g, np.abs(c[..., 0]) <= 0.3)  # symmetric along the kernel axis
    with pytest.raises(DegenerateDirectionError):
        nu_direction(mask, np.array([0.3, 0.0]), 0.4, KB2)


def test_nu_direction_rotation_equivariance():
    # 90-degree rotation in the prime plane (preserves the splitting)
    g = box_grid(3, 32)
    c = g.cell_centers()
    blob = (
        ((c[..., 0] - 0.3) ** 2 + c[..., 1] ** 2 + (c[..., 2] - 0.2) ** 2) <= 0.04
    )
    mask = Mask(g, blob)
    x = np.array([0.3, 0.0, 0.45])
    nu = nu_direction(mask, x, 0.4, KB3)
    rot = Mask(g, np.rot90(blob, k=1, axes=(0, 1)))
    xr = np.array([-x[1], x[0], x[2]])
    nur = nu_direction(rot, xr, 0.4, KB3)
    assert np.allclose(nu, nur, atol=1e-12)


def test_osc_nu_opposed_blobs():
    g = box_grid(2, 64)
    c = g.cell_centers()
    blobs = ((c[..., 0] - 0.0) ** 2 + (c[..., 1] - 0.45) ** 2 <= 0.01) | (
        (c[..., 0] - 0.0) ** 2 + (c[..., 1] + 0.45) ** 2 <= 0.01
    )
    mask = Mask(g, blobs)
    osc = osc_nu(mask, np.zeros(2), 0.6, KB2)
    assert osc == pytest.approx(2.0, abs=0.1)


@pytest.mark.parametrize("a,b", [(0.5, 0.5), (0.6, 0.2), (0.75, 0.15)])
def test_fit_ellipsoid_recovery(a, b):
    g = box_grid(2, 256)
    c = g.cell_centers()
    th = 0.5  # rotate the ellipse off-axis
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    rel = np.stack([c[..., 0] - 0.05, c[..., 1] + 0.1], axis=-1) @ R
    mask = Mask(g, (rel[..., 0] / a) ** 2 + (rel[..., 1] / b) ** 2 <= 1.0)
    E = fit_ellipsoid(mask)
    h = float(g.h.max())
    assert np.allclose(E.center, [0.05, -0.1], atol=h)
    assert np.allclose(sorted(E.semi_axes, reverse=True), [a, b], atol=2 * h)
    if a - b > 0.05:  # circle orientation is arbitrary
        major = E.rotation[:, 0]
        angle = np.arccos(min(1.0, abs(major @ R[:, 0])))
        assert angle < 0.05


def test_fit_ellipsoid_rejects_degenerate():
    g = box_grid(2, 32)
    c = g.cell_centers()
    with pytest.raises(DegenerateFitError):
        fit_ellipsoid(Mask(g, np.abs(c[..., 0]) < 0.04))


def test_hausdorff_metric_properties():
    masks = [
        _disk_mask(64, 0.4, (-0.2, 0.1)),
        _disk_mask(64, 0.3, (0.3, -0.1)),
        _disk_mask(64, 0.55),
    ]
    dab = hausdorff(masks[0], masks[1])
    dba = hausdorff(masks[1], masks[0])
    dbc = hausdorff(masks[1], masks[2])
    dac = hausdorff(masks[0], masks[2])
    assert dab == dba
    assert dac <= dab + dbc + 1e-12
    assert hausdorff(masks[0], masks[0]) == 0.0


def test_hausdorff_mask_vs_ellipsoid():
    mask = _disk_mask(128, 0.5)
    circle = Ellipsoid(np.zeros(2), np.array([0.5, 0.5]), np.eye(2))
    assert hausdorff(mask, circle) <= 2.0 * 2.0 / 128


def test_project_slice_slab():
    g = box_grid(3, 32)
    c = g.cell_centers()
    mask = Mask(g, np.ones(g.cell_shape, bool))
    x = np.zeros(3)
    sl = project_slice(mask, x, np.array([1.0]), 0.8)
    pts = sl.flagged_centers()
    diag = float(np.linalg.norm(g.h))
    assert np.abs(pts[:, 2]).max() <= diag + 1e-12
    assert np.linalg.norm(pts, axis=1).max() <= 0.8 + 1e-12


def test_diameter_asymptotics_sqrt_profile():
    ts = np.array([0.01, 0.02, 0.04, 0.06, 0.09, 0.12, 0.16])
    prof = [(t, 2.0 * np.sqrt(t)) for t in ts]
    dp = diameter_asymptotics(prof)
    assert dp.exponent == pytest.approx(0.5, abs=0.02)
    assert dp.coefficient == pytest.approx(2.0, abs=0.05)
    assert abs(dp.tip) < 1e-6
    assert dp.branch == "sqrt"


def test_diameter_asymptotics_linear_profile_flagged():
    prof = [(t, t) for t in (0.05, 0.1, 0.2, 0.4, 0.8)]
    dp = diameter_asymptotics(prof)
    assert dp.exponent == pytest.approx(1.0, abs=0.02)
    assert dp.branch == "mismatch"


def test_diameter_asymptotics_flat_profile():
    prof = [(t, 0.03) for t in (0.1, 0.2, 0.3, 0.4, 0.5)]
    dp = diameter_asymptotics(prof)
    assert dp.branch == "flat"


def test_diameter_asymptotics_needs_samples():
    with pytest.raises(InsufficientDataError):
        diameter_asymptotics([(0.1, 0.2), (0.2, 0.3), (0.3, 0.0)])


def test_write_slice_svg(tmp_path):
    pts = np.array([[0.0, 0.0], [0.5, 0.1], [0.3, 0.6]])
    path = tmp_path / "slice.svg"
    write_slice_svg(path, pts, Ellipsoid(np.zeros(2), np.array([0.5, 0.3]), np.eye(2)))
    text = path.read_text()
    assert text.startswith("<svg") or "<svg" in text
    assert "ellipse" in text or "circle" in text or "path" in text
