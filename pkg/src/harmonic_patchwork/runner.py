"""Execute a validated scenario command by command and collect a report."""
from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
from scipy.spatial import cKDTree

from . import __version__
from .curves import BoundaryGraph, boundary_graph
from .errors import PatchworkError
from .measures import (
    BoundaryMeasure,
    Mollifier,
    disk_flux,
    family_max_density,
    flux_vs_density,
    mollified_dbar,
    positivity_verdict,
    reconstruction_fit,
    subharmonic_verdict,
)
from .piecewise import (
    PAField,
    RegionLabeling,
    classify_grid,
    counterexample_labeling,
    difference_fraction,
    half_plane_labeling,
    sample_pa_field,
    sample_ph_field,
    sample_potential,
)
from .pointwise import genericity_report
from .reachability import (
    convolution_monotonicity_check,
    descent_reachable,
    indicator_samples,
    limit_coverage_test,
    random_descent_path,
)
from .grid import GridWindow
from .scenario import Scenario


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _pair(z: complex) -> list[float]:
    return [float(np.real(z)), float(np.imag(z))]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return _pair(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


@dataclass
class CommandResult:
    index: int
    command: str
    status: str = "ok"
    verdict: bool | None = None
    expect: Any = True
    results: dict = field(default_factory=dict)
    files: list[str] = field(default_factory=list)
    message: str = ""

    @property
    def passed(self) -> bool:
        if self.status != "ok":
            return False
        if self.verdict is None or self.expect == "any":
            return True
        return self.verdict == self.expect

    def to_dict(self) -> dict:
        return _jsonable(
            {
                "index": self.index,
                "command": self.command,
                "status": self.status,
                "verdict": self.verdict,
                "expect": self.expect,
                "passed": self.passed,
                "results": self.results,
                "files": self.files,
                "message": self.message,
            }
        )


@dataclass
class Report:
    provenance: dict
    commands: list[CommandResult] = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.commands)

    @property
    def errored(self) -> bool:
        return any(c.status == "error" for c in self.commands)

    def to_dict(self, timings: bool = True) -> dict:
        out = {
            "provenance": self.provenance,
            "commands": [c.to_dict() for c in self.commands],
            "summary": {"passed": self.passed, "errors": sum(c.status == "error" for c in self.commands)},
        }
        if timings:
            out["timings"] = self.timings
        return out

    def to_json(self, timings: bool = True) -> str:
        return json.dumps(self.to_dict(timings), indent=2, sort_keys=True)


class _Context:
    def __init__(self, scenario: Scenario, out_dir: Path | None):
        self.sc = scenario
        self.family = scenario.family
        self.grid = scenario.grid
        self.out_dir = out_dir
        self.labelings: dict[str, RegionLabeling] = {}
        self.graphs: dict[str, BoundaryGraph | None] = {}

    def key(self, spec) -> str:
        return json.dumps(spec if spec is not None else "max", sort_keys=True)

    def labeling(self, spec) -> RegionLabeling:
        k = self.key(spec)
        if k not in self.labelings:
            spec = spec if spec is not None else "max"
            if spec == "max":
                lab = classify_grid(self.family, self.grid, self.sc.defaults["tie_tolerance"])
            elif spec == "counterexample":
                lab = counterexample_labeling(self.grid, self.family)
            else:
                hp = spec["half_plane"]
                through = complex(*hp.get("through", [0.0, 0.0]))
                lab = half_plane_labeling(
                    self.grid, self.family.r, complex(*hp["normal"]), hp["inside"], hp["outside"], through
                )
            self.labelings[k] = lab
        return self.labelings[k]

    def path(self, name: str) -> Path | None:
        if self.out_dir is None:
            return None
        return self.out_dir / name

    def mollifier(self, cmd) -> Mollifier:
        return Mollifier(cmd["epsilon_cells"] * self.grid.h)


def _analyze_point(ctx: _Context, cmd: dict, res: CommandResult):
    p = complex(*cmd["point"])
    active = cmd.get("active", "all")
    if active == "all":
        act = None
    elif active == "grid":
        radius = cmd.get("radius_cells", 2.0) * ctx.grid.h
        act = sorted(ctx.labeling("max").active_near(p, radius))
    else:
        act = active
    prof = genericity_report(ctx.family, p, act)
    res.results = prof.to_dict()
    res.verdict = all(prof.flags.values())
    if cmd.get("output") and ctx.out_dir is not None:
        path = ctx.path(cmd["output"])
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(prof.to_json() + "\n")
        res.files.append(cmd["output"])


def _label_counts(lab: RegionLabeling) -> dict:
    vals, counts = np.unique(lab.labels, return_counts=True)
    return {str(int(v)): int(c) for v, c in zip(vals, counts)}


def _classify(ctx: _Context, cmd: dict, res: CommandResult):
    lab = ctx.labeling(cmd.get("labeling"))
    res.results = {"label_counts": _label_counts(lab), "tie_cells": int(lab.tie_mask.sum()), "grid": ctx.grid.to_dict()}
    if cmd.get("output") and ctx.out_dir is not None:
        write_csv(ctx.path(cmd["output"]), ["x", "y", "label"], lab.rows())
        res.files.append(cmd["output"])


def _trace_boundary(ctx: _Context, cmd: dict, res: CommandResult):
    key = ctx.key(cmd.get("labeling"))
    ctx.graphs[key] = None
    lab = ctx.labeling(cmd.get("labeling"))
    graph = boundary_graph(ctx.family, lab)
    ctx.graphs[key] = graph
    files = None
    if cmd.get("output") and ctx.out_dir is not None:
        stem = cmd["output"]
        files = []
        for n, c in enumerate(graph.curves):
            name = f"{stem}_curve{n}.csv"
            write_csv(ctx.path(name), ["x", "y", "s", "density"], c.rows())
            files.append(name)
        manifest = f"{stem}.json"
        ctx.path(manifest).write_text(graph.to_json(files) + "\n")
        res.files.extend(files + [manifest])
    res.results = {
        "n_curves": len(graph.curves),
        "n_corners": len(graph.corners),
        "total_mass": graph.total_mass(),
        "manifest": graph.manifest(files),
    }


def _verify_positivity(ctx: _Context, cmd: dict, res: CommandResult):
    lab = ctx.labeling(cmd.get("labeling"))
    mol = ctx.mollifier(cmd)
    samples = sample_pa_field(PAField(ctx.family, lab), cmd["subsamples"])
    v = positivity_verdict(samples, mol)
    res.results = v.to_dict()
    res.results["subsamples"] = cmd["subsamples"]
    res.verdict = v.verdict
    if cmd.get("output") and ctx.out_dir is not None:
        D = mollified_dbar(samples, mol)
        write_csv(ctx.path(cmd["output"]), ["x", "y", "re", "im"], ((x, y, np.real(d), np.imag(d)) for x, y, d in D.rows()))
        res.files.append(cmd["output"])


def _potential(ctx: _Context, spec):
    if (spec or "max") == "max":
        return sample_potential(ctx.family, ctx.grid)
    return sample_ph_field(PAField(ctx.family, ctx.labeling(spec)))


def _verify_subharmonic(ctx: _Context, cmd: dict, res: CommandResult):
    phi = _potential(ctx, cmd.get("labeling"))
    v = subharmonic_verdict(phi, ctx.mollifier(cmd), family_max_density(ctx.family))
    res.results = v.to_dict()
    res.verdict = v.verdict
    if cmd.get("output") and ctx.out_dir is not None:
        write_csv(ctx.path(cmd["output"]), ["x", "y", "phi"], phi.rows())
        res.files.append(cmd["output"])


def _graph_for(ctx: _Context, cmd: dict, res: CommandResult) -> BoundaryGraph | None:
    key = ctx.key(cmd.get("labeling"))
    graph = ctx.graphs.get(key)
    if graph is None:
        res.status = "skipped"
        res.message = "requires a successful trace-boundary command for the same labeling"
    return graph


def _flux_check(ctx: _Context, cmd: dict, res: CommandResult):
    graph = _graph_for(ctx, cmd, res)
    if graph is None:
        return
    lab = ctx.labeling(cmd.get("labeling"))
    mol = ctx.mollifier(cmd)
    samples = sample_pa_field(PAField(ctx.family, lab), cmd["subsamples"])
    D = mollified_dbar(samples, mol)
    band = cmd.get("band_cells", cmd["epsilon_cells"] + 2.5) * ctx.grid.h
    tol = cmd.get("tolerance", 0.02)
    dtol = cmd.get("disk_tolerance", 0.05)
    portions, disks = [], []
    ok = True
    for spec in cmd.get("portions", []):
        x0, y0, x1, y1 = spec["box"]
        pair = tuple(sorted(spec["pair"])) if "pair" in spec else None
        for c in graph.curves:
            if pair is not None and tuple(sorted(c.pair)) != pair:
                continue
            V = c.vertices
            keep = (V.real >= x0) & (V.real <= x1) & (V.imag >= y0) & (V.imag <= y1)
            for part in c.restricted(ctx.family, keep):
                others = [o for o in graph.curves if o is not c]
                fr = flux_vs_density(samples, mol, part, band, others, dbar=D)
                good = abs(fr.ratio - 1) <= tol
                ok &= good
                portions.append({"pair": list(c.pair), "box": spec["box"], **fr.to_dict(), "within": good})
    for spec in cmd.get("disks", []):
        fr = disk_flux(samples, mol, complex(*spec["center"]), spec["radius"], graph.curves, dbar=D)
        good = abs(fr.ratio - 1) <= dtol
        ok &= good
        disks.append({**spec, **fr.to_dict(), "within": good})
    res.results = {"portions": portions, "disks": disks, "tolerance": tol, "disk_tolerance": dtol, "epsilon": mol.radius, "band": band}
    res.verdict = bool(ok) if (portions or disks) else None


def _test_points(rng, center: complex, radius: float, count: int, measure: BoundaryMeasure, clearance: float):
    verts = [c.vertices for c in measure.curves if len(c.vertices)]
    tree = cKDTree(np.column_stack([np.concatenate(verts).real, np.concatenate(verts).imag])) if verts else None
    pts: list[complex] = []
    for _ in range(1000):
        z = center + radius * np.sqrt(rng.uniform(size=4 * count)) * np.exp(2j * np.pi * rng.uniform(size=4 * count))
        if tree is not None:
            d, _ = tree.query(np.column_stack([z.real, z.imag]))
            z = z[d >= clearance]
        pts.extend(z.tolist())
        if len(pts) >= count:
            break
    return np.asarray(pts[:count])


def _reconstruct(ctx: _Context, cmd: dict, res: CommandResult, rng):
    graph = _graph_for(ctx, cmd, res)
    if graph is None:
        return
    lab = ctx.labeling(cmd.get("labeling"))
    sup = cmd["support"]
    measure = BoundaryMeasure(graph.curves).truncated(ctx.family, complex(*sup["center"]), sup["radius"])
    td = cmd["test_disk"]
    pts = _test_points(rng, complex(*td["center"]), td["radius"], cmd.get("test_points", 200), measure, cmd.get("clearance", 0.1))
    fit = reconstruction_fit(ctx.family, PAField(ctx.family, lab), measure, pts, cmd["fit_degree"])
    tol = cmd.get("tolerance", 1e-2)
    res.results = {
        "residual": fit.residual,
        "scale": fit.scale,
        "relative_residual": fit.residual / fit.scale if fit.scale else float("inf"),
        "tolerance": tol,
        "fit_degree": cmd["fit_degree"],
        "test_points": int(len(pts)),
        "measure_mass": measure.total_mass,
    }
    res.verdict = bool(fit.residual <= tol * fit.scale)


def _grid_for(ctx: _Context, cmd: dict) -> GridWindow:
    if "nx" in cmd:
        return GridWindow.over(ctx.grid.window, cmd["nx"])
    return ctx.grid


def _reachability(ctx: _Context, cmd: dict, res: CommandResult):
    grid = _grid_for(ctx, cmd)
    R = descent_reachable(ctx.family, complex(*cmd["point"]), grid, cmd.get("baseline", 1))
    res.results = {"reachable_cells": int(R.reachable.sum()), "fraction": float(R.reachable.mean()), "grid": grid.to_dict()}
    if cmd.get("output") and ctx.out_dir is not None:
        write_csv(ctx.path(cmd["output"]), ["x", "y", "reachable"], R.rows())
        res.files.append(cmd["output"])


def _coverage(ctx: _Context, cmd: dict, res: CommandResult):
    grid = _grid_for(ctx, cmd)
    x0, y0, x1, y1 = cmd["target_box"]
    C = grid.centers
    target = (C.real >= x0) & (C.real <= x1) & (C.imag >= y0) & (C.imag <= y1)
    seq = [complex(*z) for z in cmd["sequence"]]
    out = limit_coverage_test(ctx.family, complex(*cmd["point"]), target, seq, grid, cmd.get("baseline", 1))
    res.results = out.to_dict()
    res.results["target_cells"] = int(target.sum())
    res.verdict = out.n0 is not None


def _counterexample(ctx: _Context, cmd: dict, res: CommandResult):
    lab = ctx.labeling("counterexample")
    frac = difference_fraction(ctx.labeling("max"), lab)
    res.results = {"difference_fraction": frac, "label_counts": _label_counts(lab)}
    res.verdict = frac > 0
    if cmd.get("output") and ctx.out_dir is not None:
        write_csv(ctx.path(cmd["output"]), ["x", "y", "label"], lab.rows())
        res.files.append(cmd["output"])


def _monotonicity(ctx: _Context, cmd: dict, res: CommandResult, rng):
    lab = ctx.labeling(cmd.get("labeling"))
    base = cmd.get("baseline", 1)
    mol = ctx.mollifier(cmd)
    field_ = PAField(ctx.family, lab)
    chi = indicator_samples(lab, base, 4, ctx.family)
    w = ctx.grid.window
    center = complex((w.x0 + w.x1) / 2, (w.y0 + w.y1) / 2)
    margin = mol.radius + 2 * ctx.grid.h
    start_r = cmd.get("start_radius", 0.25 * min(w.width, w.height))
    length = cmd.get("path_length", 0.3 * min(w.width, w.height))
    held, checked, worst = 0, 0, 0.0
    for _ in range(cmd.get("paths", 100)):
        start = center + start_r * np.sqrt(rng.uniform()) * np.exp(2j * np.pi * rng.uniform())
        path = random_descent_path(ctx.family, base, start, length, ctx.grid.h, rng)
        if path is None:
            continue
        inside = w.contains(path, margin)
        path = path[: int(np.argmin(inside)) if not inside.all() else len(path)]
        if len(path) < 2:
            continue
        out = convolution_monotonicity_check(field_, base, mol, path, chi=chi)
        checked += 1
        held += out.holds
        worst = min(worst, out.worst_violation)
    res.results = {"paths_checked": checked, "paths_held": held, "worst_violation": worst, "epsilon": mol.radius, "slack": 1e-3}
    res.verdict = checked > 0 and held == checked


HANDLERS: dict[str, Callable] = {
    "analyze-point": _analyze_point,
    "classify": _classify,
    "trace-boundary": _trace_boundary,
    "verify-positivity": _verify_positivity,
    "verify-subharmonic": _verify_subharmonic,
    "flux-check": _flux_check,
    "reconstruct-cauchy": _reconstruct,
    "reachability": _reachability,
    "coverage": _coverage,
    "counterexample": _counterexample,
    "monotonicity": _monotonicity,
}
RANDOMIZED = {"reconstruct-cauchy", "monotonicity"}


def config_hash(scenario: Scenario) -> str:
    return hashlib.sha256(json.dumps(scenario.raw, sort_keys=True).encode()).hexdigest()


def run_scenario(scenario: Scenario, out_dir: str | Path | None = None, seed: int | None = None) -> Report:
    """Run every command in order; failures are recorded, never raised.

    Commands that consume a boundary graph are skipped when the matching
    trace-boundary command has not succeeded.  Randomized commands draw from
    a generator seeded by (seed, command index), so reruns are identical.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    seed = scenario.seed if seed is None else seed
    ctx = _Context(scenario, out)
    report = Report(
        provenance={
            "tool": "harmonic-patchwork",
            "version": __version__,
            "config_sha256": config_hash(scenario),
            "scenario": scenario.name,
            "seed": seed,
            "family": scenario.family.to_dict(),
            "grid": scenario.grid.to_dict(),
            "defaults": scenario.defaults,
        }
    )
    for n, cmd in enumerate(scenario.commands):
        res = CommandResult(n, cmd["command"], expect=cmd.get("expect", True))
        t0 = time.perf_counter()
        try:
            handler = HANDLERS[cmd["command"]]
            if cmd["command"] in RANDOMIZED:
                handler(ctx, cmd, res, np.random.default_rng([seed, n]))
            else:
                handler(ctx, cmd, res)
        except PatchworkError as exc:
            res.status = "error"
            res.message = f"command {n} ({cmd['command']}): {exc}"
        except OSError as exc:
            res.status = "error"
            res.message = f"command {n} ({cmd['command']}): file write failed: {exc}"
        report.timings[str(n)] = round(time.perf_counter() - t0, 6)
        report.commands.append(res)
    if out is not None:
        (out / "report.json").write_text(report.to_json() + "\n")
    return report
