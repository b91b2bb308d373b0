"""Batch front end: scenario runs, snapshot analysis, report emission.

Subcommands:
  list      print the benchmark catalog, optionally filtered by dim=D
  run       solve a configured scenario over a grid schedule and analyze it
  analyze   run the analysis pipeline on an externally supplied snapshot

Config files use INI syntax with sections [scenario], [grid], [solver],
[analysis], [output].  Exit codes: 0 success, 1 config/input error,
2 non-converged solve, 3 diagnostic degeneracy.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
import time
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    DegenerateDirectionError,
    DegenerateFitError,
    FitFailedError,
    InconclusiveError,
    InsufficientDataError,
    NoBalancedScaleError,
    ObstacleLabError,
    ResolutionError,
    ScenarioError,
    SnapshotFormatError,
)
from .grid import (
    GridSpec,
    Mask,
    ScalarField,
    box_grid,
    gradient_field,
    read_snapshot,
    write_snapshot,
)
from .solver import SolveOptions, lcp_residual, optimal_relax, solve_psor
from .scenarios import CATALOG_INFO, make_scenario, scenario_listing
from .analysis import (
    acf_monotonicity,
    classify_point,
    quadratic_model,
    reference_ellipsoid,
    refine_boundary_point,
)
from .geometry import (
    coincidence_mask,
    cross_section,
    cross_section_convergence,
    default_eps_u,
    diameter,
    diameter_asymptotics,
    free_boundary,
    write_slice_svg,
)

DIAGNOSTIC_ERRORS = (
    DegenerateDirectionError,
    DegenerateFitError,
    FitFailedError,
    InconclusiveError,
    InsufficientDataError,
    NoBalancedScaleError,
    ResolutionError,
)


class ConfigError(Exception):
    """Invalid or inconsistent run configuration."""


@dataclass
class RunConfig:
    scenario: str
    params: dict
    cells: list
    half: float
    solver: SolveOptions
    relax_auto: bool
    point: np.ndarray | None  # None = auto-detect
    radii: list
    delta: float
    slices: list
    eps_u: float | None  # None = resolution default
    lambda_star: int
    seed: int
    max_points: int
    outdir: Path
    svg: bool

    def echo(self) -> dict:
        return {
            "scenario": {"name": self.scenario, **self.params},
            "grid": {"cells": self.cells, "half": self.half},
            "solver": {
                "tol": self.solver.tol,
                "relax": "auto" if self.relax_auto else self.solver.relax,
                "ordering": self.solver.ordering,
                "max_iter": self.solver.max_iter,
            },
            "analysis": {
                "point": None if self.point is None else list(self.point),
                "radii": self.radii,
                "delta": self.delta,
                "slices": self.slices,
                "eps_u": "auto" if self.eps_u is None else self.eps_u,
                "lambda_star": self.lambda_star,
                "seed": self.seed,
                "max_points": self.max_points,
            },
            "output": {"dir": str(self.outdir), "svg": self.svg},
        }


_KNOWN_KEYS = {
    "grid": {"cells", "half"},
    "solver": {"tol", "relax", "ordering", "max_iter"},
    "analysis": {
        "point",
        "radii",
        "delta",
        "slices",
        "eps_u",
        "lambda_star",
        "seed",
        "max_points",
    },
    "output": {"dir", "svg"},
}


def _floats(text: str) -> list:
    return [float(tok) for tok in text.split()]


def load_config(path) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str  # scenario parameter names are case-sensitive
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    for section in cp.sections():
        if section != "scenario" and section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        if section in _KNOWN_KEYS:
            for key in cp[section]:
                if key not in _KNOWN_KEYS[section]:
                    raise ConfigError(f"unknown key {section}.{key}")
    if "scenario" not in cp or "name" not in cp["scenario"]:
        raise ConfigError("missing scenario.name")
    name = cp["scenario"]["name"]
    if name not in CATALOG_INFO:
        raise ConfigError(f"scenario.name: unknown scenario {name!r}")
    try:
        params = {
            k: float(v) for k, v in cp["scenario"].items() if k != "name"
        }
    except ValueError as exc:
        raise ConfigError(f"scenario params: {exc}") from None

    def get(section, key, default):
        return cp.get(section, key, fallback=default)

    try:
        cells = [int(tok) for tok in get("grid", "cells", "32").split()]
        half = float(get("grid", "half", "1.0"))
    except ValueError as exc:
        raise ConfigError(f"grid section: {exc}") from None
    if not cells or any(b <= a for a, b in zip(cells, cells[1:])):
        raise ConfigError("grid.cells must be a non-empty increasing list")
    if not (half > 0):
        raise ConfigError("grid.half must be positive")

    relax_text = get("solver", "relax", "auto")
    relax_auto = relax_text.strip() == "auto"
    try:
        solver = SolveOptions(
            tol=float(get("solver", "tol", "1e-10")),
            relax=1.5 if relax_auto else float(relax_text),
            ordering=get("solver", "ordering", "red-black"),
            max_iter=(
                None
                if get("solver", "max_iter", "auto").strip() == "auto"
                else int(cp["solver"]["max_iter"])
            ),
        )
    except ValueError as exc:
        raise ConfigError(f"solver section: {exc}") from None

    point_text = get("analysis", "point", "auto").strip()
    try:
        point = None if point_text == "auto" else np.array(_floats(point_text))
        radii = _floats(get("analysis", "radii", "0.25 0.175 0.125"))
        delta = float(get("analysis", "delta", "0.25"))
        slices = _floats(get("analysis", "slices", ""))
        eps_text = get("analysis", "eps_u", "auto").strip()
        eps_u = None if eps_text == "auto" else float(eps_text)
        lambda_star = int(get("analysis", "lambda_star", "6"))
        seed = int(get("analysis", "seed", "0"))
        max_points = int(get("analysis", "max_points", "8"))
    except ValueError as exc:
        raise ConfigError(f"analysis section: {exc}") from None
    if not radii:
        raise ConfigError("analysis.radii must be non-empty")
    if lambda_star < 1:
        raise ConfigError("analysis.lambda_star must be >= 1")
    if not (0.0 < delta <= half):
        raise ConfigError(
            f"analysis.delta = {delta} must lie in (0, box half = {half}]"
        )

    outdir = Path(get("output", "dir", "out"))
    svg = get("output", "svg", "false").strip().lower() in ("1", "true", "yes")
    return RunConfig(
        scenario=name,
        params=params,
        cells=cells,
        half=half,
        solver=solver,
        relax_auto=relax_auto,
        point=point,
        radii=radii,
        delta=delta,
        slices=slices,
        eps_u=eps_u,
        lambda_star=lambda_star,
        seed=seed,
        max_points=max_points,
        outdir=outdir,
        svg=svg,
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: str, rows) -> None:
    lines = [header]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


@dataclass
class PhaseOutcome:
    summary: dict = dataclass_field(default_factory=dict)
    diagnostics: list = dataclass_field(default_factory=list)


def _pick_points(fb: np.ndarray, override, max_points: int) -> np.ndarray:
    if override is not None:
        return np.atleast_2d(np.asarray(override, dtype=float))
    if len(fb) == 0:
        return np.empty((0, 0))
    dist = np.linalg.norm(fb, axis=1)
    order = np.lexsort(tuple(fb.T) + (dist,))
    return fb[order[:max_points]]


def _kernel_axes(model, dim: int) -> np.ndarray | None:
    """Kernel basis as axis indices when it aligns with coordinate axes."""
    if model is None or getattr(model, "n", 0) == 0:
        return None
    basis = np.abs(model.kernel_basis)
    axes = basis.argmax(axis=0)
    if np.abs(basis.max(axis=0) - 1.0).max() > 1e-6 or len(set(axes)) != len(axes):
        return None
    if sorted(axes) != list(range(dim - model.n, dim)):
        return None
    return np.asarray(sorted(axes), dtype=int)


def analysis_phase(
    u: ScalarField, cfg: RunConfig, tag: str, outdir: Path, truth: dict | None = None
) -> PhaseOutcome:
    """Shared pipeline: mask, classification, ACF, sections, profile."""
    out = PhaseOutcome()
    g = u.grid
    h = float(g.h.max())
    eps_u = cfg.eps_u if cfg.eps_u is not None else default_eps_u(g, cfg.solver.tol)
    mask = coincidence_mask(u, eps_u)
    fb = free_boundary(mask)
    out.summary["eps_u"] = eps_u
    out.summary["coincidence_volume"] = mask.volume
    out.summary["free_boundary_points"] = int(len(fb))

    radii = [r for r in cfg.radii if r >= 4.0 * h]
    if not radii:
        out.diagnostics.append(
            f"all radii below the resolution floor 4h = {4 * h:.3g}"
        )

    points = _pick_points(fb, cfg.point, cfg.max_points)
    if cfg.point is None and len(points):
        points = np.array(
            [refine_boundary_point(u, x) for x in points]
        )
    rows = []
    classifications = []
    for x in points:
        try:
            pc = classify_point(u, 1.0, x, radii or [4.0 * h])
        except ObstacleLabError as exc:
            out.diagnostics.append(f"classification at {list(x)}: {exc}")
            rows.append([tag] + [float(v) for v in x] + ["error", 0, "", ""])
            classifications.append((x, None))
            continue
        if not pc.residual_table:
            out.diagnostics.append(
                f"classification at {list(x)}: no usable rescaling radius"
            )
            rows.append([tag] + [float(v) for v in x] + ["error", 0, "", ""])
            classifications.append((x, None))
            continue
        n = pc.model.n if pc.verdict == "singular" else 0
        rq = min(t[1] for t in pc.residual_table)
        rh = min(t[2] for t in pc.residual_table)
        rows.append(
            [tag] + [float(v) for v in x] + [pc.verdict, n, float(rq), float(rh)]
        )
        classifications.append((x, pc))
    coords = ",".join(f"x{i + 1}" for i in range(g.dim))
    _write_csv(
        outdir / f"classification_{tag}.csv",
        f"grid,{coords},verdict,n,residual_quadratic,residual_halfspace",
        rows,
    )
    out.summary["classified_points"] = len(rows)
    out.summary["verdicts"] = [r[g.dim + 1] for r in rows]

    # base point: requested point, else the singular point nearest the
    # center, else the first classified point
    x0, model = None, None
    singular = [
        (x, pc)
        for x, pc in classifications
        if pc is not None and pc.verdict == "singular"
    ]
    if cfg.point is not None and classifications:
        x0, pc0 = classifications[0]
        model = pc0.model if pc0 is not None and pc0.verdict == "singular" else None
    elif singular:
        x0, pc0 = min(singular, key=lambda t: float(np.linalg.norm(t[0])))
        model = pc0.model
    elif classifications:
        x0, _ = classifications[0]

    acf_rows = []
    if x0 is not None and g.dim >= 2 and radii:
        du = ScalarField(g, gradient_field(u)[..., 0])
        try:
            rep = acf_monotonicity(du, x0, radii)
            acf_rows = [[tag, float(r), float(p)] for r, p in rep.table]
            out.summary["acf_v_star"] = rep.v_star
        except ObstacleLabError as exc:
            out.diagnostics.append(f"acf at {list(x0)}: {exc}")
    _write_csv(outdir / f"acf_{tag}.csv", "grid,r,phi", acf_rows)

    axes = _kernel_axes(model, g.dim)
    n_kernel = model.n if axes is not None else 0
    A_prime = model.A if axes is not None else None
    if axes is None and truth and truth.get("n") == 1 and "kernel_axis" in truth:
        # classification did not land a singular model; fall back on the
        # scenario's declared degenerate axis
        axes = np.array([int(truth["kernel_axis"])])
        n_kernel = 1
        A_prime = truth.get("A")
        if x0 is None:
            x0 = np.zeros(g.dim)
    section_rows = []
    profile_rows = []
    if axes is not None and n_kernel == 1 and g.dim - n_kernel >= 2:
        kb = np.zeros((g.dim, 1))
        kb[int(axes[0]), 0] = 1.0
        ax = int(axes[0])
        prof = []
        for t in g.axis_cell_centers(ax):
            cs = cross_section(mask, [t], x0, cfg.delta, kb)
            prof.append((float(t), diameter(cs)))
        profile_rows = [[tag, t, d] for t, d in prof]
        try:
            dp = diameter_asymptotics(prof)
            out.summary["profile"] = {
                "tip": dp.tip,
                "exponent": dp.exponent,
                "coefficient": dp.coefficient,
                "branch": dp.branch,
            }
        except ObstacleLabError as exc:
            out.diagnostics.append(f"diameter profile: {exc}")

        if cfg.slices and A_prime is not None:
            prime_axes = [a for a in range(g.dim) if a != ax]
            prime = quadratic_model(
                np.asarray(A_prime)[np.ix_(prime_axes, prime_axes)]
            )
            try:
                aux = box_grid(g.dim - n_kernel, 64)
                eprime = reference_ellipsoid(
                    prime,
                    aux,
                    SolveOptions(tol=cfg.solver.tol, relax=optimal_relax(aux)),
                )
                reports = cross_section_convergence(
                    u, x0, cfg.delta, eprime, cfg.slices, kb, eps_u
                )
                for rep in reports:
                    section_rows.append(
                        [
                            tag,
                            float(rep.xpp[0]),
                            float(rep.d),
                            float(rep.closeness) if rep.closeness is not None else "",
                        ]
                    )
                out.summary["closeness"] = [
                    r[3] for r in section_rows if r[3] != ""
                ]
            except (ObstacleLabError, ValueError) as exc:
                out.diagnostics.append(f"cross sections: {exc}")
    _write_csv(outdir / f"sections_{tag}.csv", "grid,t,d,closeness", section_rows)
    _write_csv(outdir / f"profile_{tag}.csv", "grid,t,d", profile_rows)

    if cfg.svg and g.dim == 2 and len(fb):
        write_slice_svg(outdir / f"boundary_{tag}.svg", fb)
    return out


def applicability(dim: int, n: int, lambda_star: int) -> dict:
    """Both readings of the codimension hypothesis dim - n + 1 >= threshold."""
    codim = dim - n + 1
    return {
        "n": n,
        "codimension": codim,
        "lambda_star": lambda_star,
        "holds_at_lambda_star": bool(n >= 1 and codim >= lambda_star),
        "holds_at_conjectured_1": bool(n >= 1 and codim >= 1),
    }


def _mask_phase(mask: Mask, cfg: RunConfig, tag: str, outdir: Path) -> PhaseOutcome:
    """Profile-only pipeline for pure-geometry catalog entries."""
    out = PhaseOutcome()
    g = mask.grid
    kb = np.zeros((g.dim, 1))
    kb[-1, 0] = 1.0
    prof = []
    for t in g.axis_cell_centers(g.dim - 1):
        cs = cross_section(mask, [t], np.zeros(g.dim), cfg.delta, kb)
        prof.append((float(t), diameter(cs)))
    _write_csv(outdir / f"profile_{tag}.csv", "grid,t,d", [[tag, t, d] for t, d in prof])
    try:
        dp = diameter_asymptotics(prof)
        out.summary["profile"] = {
            "tip": dp.tip,
            "exponent": dp.exponent,
            "coefficient": dp.coefficient,
            "branch": dp.branch,
        }
    except ObstacleLabError as exc:
        out.diagnostics.append(f"diameter profile: {exc}")
    return out


def cmd_list(args) -> int:
    lines = scenario_listing()
    if args.filters:
        for f in args.filters:
            key, _, value = f.partition("=")
            if key != "dim" or not value:
                print(f"unsupported filter {f!r}; use dim=D", file=sys.stderr)
                return 1
            lines = [ln for ln in lines if ln.split()[1] == value]
    for ln in lines:
        print(ln)
    return 0


def _finish(report: dict, cfg: RunConfig, solver_failed: bool, diags: list) -> int:
    report["diagnostic_errors"] = diags
    (cfg.outdir / "report.json").write_text(
        json.dumps(report, indent=2, default=str) + "\n"
    )
    if solver_failed:
        return 2
    if diags:
        return 3
    return 0


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        dim = CATALOG_INFO[cfg.scenario][0]
        if isinstance(dim, int) and cfg.delta > cfg.half:
            raise ConfigError(f"delta = {cfg.delta} exceeds the box half-width")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    cfg.outdir.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()
    report = {
        "version": __version__,
        "command": "run",
        "config": cfg.echo(),
        "grids": [],
    }
    solver_failed = False
    diags = []
    n_seen = 0
    dim_seen = None
    for cells in cfg.cells:
        tag = str(cells)
        try:
            dim = CATALOG_INFO[cfg.scenario][0]
            grid = box_grid(
                dim if isinstance(dim, int) else 2, cells, -cfg.half, cfg.half
            )
            scen = make_scenario(cfg.scenario, cfg.params, grid)
        except (ScenarioError, ValueError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 1
        dim_seen = scen.dim
        entry = {"cells": cells, "h": float(grid.h.max())}

        if scen.problem is None:
            outcome = _mask_phase(scen.mask, cfg, tag, cfg.outdir)
        else:
            opts = cfg.solver
            if cfg.relax_auto:
                opts = SolveOptions(
                    tol=opts.tol,
                    max_iter=opts.max_iter,
                    relax=optimal_relax(grid),
                    ordering=opts.ordering,
                    check_every=opts.check_every,
                )
            t0 = time.perf_counter()
            with open(cfg.outdir / f"telemetry_{tag}.csv", "w") as tele:
                result = solve_psor(scen.problem, opts, telemetry=tele)
            entry.update(
                iterations=result.iterations,
                converged=result.converged,
                residual=result.residual.max_violation,
                solve_seconds=round(time.perf_counter() - t0, 3),
            )
            if not result.converged:
                solver_failed = True
            write_snapshot(result.u, cfg.outdir / f"field_{tag}.dat")
            outcome = analysis_phase(result.u, cfg, tag, cfg.outdir, scen.truth)
        entry.update(outcome.summary)
        diags.extend(outcome.diagnostics)
        report["grids"].append(entry)
        n_seen = max(n_seen, scen.truth.get("n", 0))

    report["applicability"] = applicability(
        dim_seen, int(n_seen), cfg.lambda_star
    )
    report["elapsed_seconds"] = round(time.perf_counter() - t_start, 3)
    return _finish(report, cfg, solver_failed, diags)


def cmd_analyze(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        u = read_snapshot(args.snapshot)
    except SnapshotFormatError as exc:
        print(f"snapshot error: {exc}", file=sys.stderr)
        return 1
    if u.grid.dim >= 1 and cfg.cells and int(u.grid.cells.max()) not in cfg.cells:
        print(
            f"snapshot grid ({int(u.grid.cells.max())} cells) not in the "
            f"configured schedule {cfg.cells}",
            file=sys.stderr,
        )
        return 1

    cfg.outdir.mkdir(parents=True, exist_ok=True)
    tag = str(int(u.grid.cells.max()))
    t_start = time.perf_counter()
    outcome = analysis_phase(u, cfg, tag, cfg.outdir)
    report = {
        "version": __version__,
        "command": "analyze",
        "config": cfg.echo(),
        "grids": [{"cells": int(u.grid.cells.max()), **outcome.summary}],
    }
    n = 0
    prof = outcome.summary.get("profile")
    if prof is not None:
        n = 1
    report["applicability"] = applicability(u.grid.dim, n, cfg.lambda_star)
    report["elapsed_seconds"] = round(time.perf_counter() - t_start, 3)
    return _finish(report, cfg, False, outcome.diagnostics)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="obstacle-lab",
        description="Obstacle-problem laboratory: solve benchmark scenarios "
        "and measure free-boundary geometry.",
    )
    sub = p.add_subparsers(dest="command", required=True)
    pl = sub.add_parser("list", help="print the scenario catalog")
    pl.add_argument("filters", nargs="*", help="filters like dim=2")
    pl.set_defaults(func=cmd_list)
    pr = sub.add_parser("run", help="solve and analyze a configured scenario")
    pr.add_argument("config", help="INI config file")
    pr.set_defaults(func=cmd_run)
    pa = sub.add_parser("analyze", help="analyze a field snapshot")
    pa.add_argument("snapshot", help="field snapshot file")
    pa.add_argument("config", help="INI config file")
    pa.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
