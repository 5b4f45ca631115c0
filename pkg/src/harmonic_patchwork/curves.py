"""Interface level curves of H_i - H_j and the boundary graph of a labeling.

Level sets are followed by predictor-corrector continuation: a step of fixed
length along the unit tangent ``i conj(A_i - A_j) / |A_i - A_j|`` and then
Newton projection back onto ``H_i - H_j = c`` along the gradient.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .analytic import AnalyticFamily, Window
from .errors import NoEscapeError, PreconditionError, SingularPointError, StepTooLargeError
from .piecewise import TIE, RegionLabeling, max_membership

MAX_CORRECTOR = 5


@dataclass(frozen=True)
class TraceSettings:
    step: float
    curve_tol: float
    grad_floor: float

    @classmethod
    def default(cls, family: AnalyticFamily, h: float, window: Window | None = None) -> "TraceSettings":
        w = window or family.window
        g = family.max_gradient()
        return cls(step=h / 2, curve_tol=1e-10 * w.diagonal * g, grad_floor=1e-6 * g)


@dataclass(eq=False)
class LevelCurve:
    pair: tuple[int, int]
    level: float
    vertices: np.ndarray
    arclength: np.ndarray
    densities: np.ndarray
    closed: bool = False

    @classmethod
    def build(cls, family: AnalyticFamily, pair, level: float, vertices, closed: bool = False) -> "LevelCurve":
        v = np.asarray(vertices, dtype=complex)
        s = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(v)))])
        i, j = pair
        dens = np.abs(family.A(i, v) - family.A(j, v)) / 2 if len(v) else np.zeros(0)
        return cls((int(i), int(j)), float(level), v, s, np.asarray(dens, dtype=float), closed)

    @property
    def length(self) -> float:
        return float(self.arclength[-1]) if len(self.arclength) else 0.0

    def mass(self) -> float:
        """Trapezoid integral of the density over arclength."""
        if len(self.vertices) < 2:
            return 0.0
        return float(np.trapezoid(self.densities, self.arclength)) if hasattr(np, "trapezoid") else float(
            np.trapz(self.densities, self.arclength)
        )

    def restricted(self, family: AnalyticFamily, keep: np.ndarray) -> list["LevelCurve"]:
        """Split into maximal runs of consecutive vertices where ``keep`` holds."""
        out = []
        idx = np.flatnonzero(keep)
        if not len(idx):
            return out
        breaks = np.flatnonzero(np.diff(idx) > 1)
        for run in np.split(idx, breaks + 1):
            if len(run) >= 2:
                out.append(LevelCurve.build(family, self.pair, self.level, self.vertices[run]))
        return out

    def rows(self):
        for z, s, d in zip(self.vertices, self.arclength, self.densities):
            yield z.real, z.imag, s, d

    def to_dict(self) -> dict:
        return {
            "pair": list(self.pair),
            "level": self.level,
            "n_vertices": int(len(self.vertices)),
            "length": self.length,
            "mass": self.mass(),
            "closed": self.closed,
            "start": [float(self.vertices[0].real), float(self.vertices[0].imag)] if len(self.vertices) else None,
            "end": [float(self.vertices[-1].real), float(self.vertices[-1].imag)] if len(self.vertices) else None,
        }


def _difference(family: AnalyticFamily, i: int, j: int, level: float):
    fi, fj = family.primitive(i), family.primitive(j)
    Ai, Aj = family.member(i), family.member(j)

    def g(z):
        return float((fi(z) - fj(z)).real) - level

    def grad(z):
        return complex(np.conj(Ai(z) - Aj(z)))

    return g, grad


def _project(g, grad, z: complex, tol: float, floor: float, iters: int = MAX_CORRECTOR) -> tuple[complex, bool]:
    for _ in range(iters + 1):
        val = g(z)
        if abs(val) <= tol:
            return z, True
        d = grad(z)
        if abs(d) < floor:
            raise SingularPointError("gradient of H_i - H_j below grad_floor", z)
        z = z - val * d / abs(d) ** 2
    return z, abs(g(z)) <= tol


def project_to_level(family: AnalyticFamily, i: int, j: int, z: complex, level: float = 0.0, settings: TraceSettings | None = None, iters: int = 50) -> complex:
    """Newton projection of z onto ``H_i - H_j = level`` along the gradient."""
    settings = settings or TraceSettings.default(family, family.window.width / 256)
    g, grad = _difference(family, i, j, level)
    z, ok = _project(g, grad, complex(z), settings.curve_tol, settings.grad_floor, iters)
    if not ok:
        raise StepTooLargeError("Newton projection did not converge", z)
    return z


def _march(g, grad, start: complex, sign: float, settings: TraceSettings, window: Window, max_steps: int):
    """Vertices after ``start`` in one direction; second value is True if the trace closed."""
    out = []
    z = start
    d0 = grad(start)
    t0 = 1j * d0 / abs(d0) * sign
    step = settings.step
    for n in range(max_steps):
        d = grad(z)
        if abs(d) < settings.grad_floor:
            raise SingularPointError("gradient of H_i - H_j below grad_floor", z)
        t = 1j * d / abs(d) * sign
        pred = z + step * t
        znew, ok = _project(g, grad, pred, settings.curve_tol, settings.grad_floor)
        if not ok or abs(znew - pred) > step:
            raise StepTooLargeError("corrector failed to converge", pred)
        if n >= 3:
            seg = znew - z
            u = ((start - z) * np.conj(seg)).real / abs(seg) ** 2
            near = abs(start - (z + min(max(u, 0.0), 1.0) * seg))
            if near <= step / 2 and (seg * np.conj(t0)).real > 0:
                if abs(z - start) < step / 2 and out:
                    out.pop()
                out.append(start)
                return out, True
        if not bool(window.contains(znew)):
            return out, False
        out.append(znew)
        z = znew
    return out, False


def trace_level_curve(
    family: AnalyticFamily,
    i: int,
    j: int,
    seed: complex,
    level: float = 0.0,
    step: float | None = None,
    window: Window | None = None,
    settings: TraceSettings | None = None,
) -> LevelCurve:
    """Follow ``H_i - H_j = level`` through (the projection of) ``seed`` in both directions."""
    window = window or family.window
    if settings is None:
        settings = TraceSettings.default(family, (step or window.width / 512) * 2, window)
    if step is not None:
        settings = TraceSettings(step, settings.curve_tol, settings.grad_floor)
    if not bool(window.contains(seed)):
        raise PreconditionError(f"seed {seed} lies outside the window")
    g, grad = _difference(family, i, j, level)
    start, ok = _project(g, grad, complex(seed), settings.curve_tol, settings.grad_floor, 50)
    if not ok:
        raise StepTooLargeError("seed projection did not converge", start)
    if abs(grad(start)) < settings.grad_floor:
        raise SingularPointError("gradient of H_i - H_j below grad_floor", start)
    if not bool(window.contains(start)):
        raise PreconditionError(f"projected seed {start} lies outside the window")
    max_steps = int(4 * (window.width + window.height) / settings.step) + 100
    fwd, closed = _march(g, grad, start, 1.0, settings, window, max_steps)
    if closed:
        verts = [start] + fwd
    else:
        back, _ = _march(g, grad, start, -1.0, settings, window, max_steps)
        verts = back[::-1] + [start] + fwd
    return LevelCurve.build(family, (i, j), level, verts, closed)


def _membership(family: AnalyticFamily, labeling: RegionLabeling):
    return labeling.rule or max_membership(family, labeling.tie_tolerance)


def _third_gap(family: AnalyticFamily, i: int, j: int, z) -> np.ndarray:
    """``H_i - max_{k != i, j} H_k`` (infinite when r = 2)."""
    H = family.harmonic_values(np.asarray(z, dtype=complex))
    others = [k for k in range(family.r) if k not in (i - 1, j - 1)]
    if not others:
        return np.full(H.shape[1:], np.inf)
    return H[i - 1] - H[others].max(axis=0)


def _interface_test(family, rule, i, j, settings, h):
    """Vectorized predicate: does the level curve of the pair separate labels i and j at z?

    For max-derived labelings this is the exact condition that no third member
    exceeds H_i.  Otherwise the labeling's membership is probed a short
    distance to either side of the curve.
    """
    if getattr(rule, "max_family", None) is not None:
        return lambda z: _third_gap(family, i, j, z) >= -settings.curve_tol

    def test(z):
        z = np.asarray(z, dtype=complex)
        d = np.conj(family.A(i, z) - family.A(j, z))
        mag = np.maximum(np.abs(d), 1e-300)
        delta = np.maximum(1e-6 * h, 100 * settings.curve_tol / mag)
        n = d / mag
        plus, minus = rule(z + delta * n), rule(z - delta * n)
        return plus[i - 1] & minus[j - 1]

    return test


@dataclass(eq=False)
class BoundaryGraph:
    curves: list[LevelCurve] = field(default_factory=list)
    corners: list[complex] = field(default_factory=list)

    def total_mass(self) -> float:
        return sum(c.mass() for c in self.curves)

    def manifest(self, files: list[str] | None = None) -> dict:
        out = {
            "curves": [c.to_dict() for c in self.curves],
            "corners": [[float(c.real), float(c.imag)] for c in self.corners],
        }
        if files is not None:
            for entry, name in zip(out["curves"], files):
                entry["file"] = name
        return out

    def to_json(self, files: list[str] | None = None) -> str:
        return json.dumps(self.manifest(files), indent=2, sort_keys=True)


def _evidence(labeling: RegionLabeling):
    """Label-pair evidence on the doubled lattice: {(i, j): list of (2*iy, 2*ix) sites}."""
    grid = labeling.grid
    L = labeling.labels
    sets = {}
    tie_sets = {}
    if labeling.rule is not None and np.any(L == TIE):
        iy, ix = np.nonzero(L == TIE)
        mask = labeling.rule(grid.centers[iy, ix])
        for n in range(len(iy)):
            tie_sets[(iy[n], ix[n])] = [int(k) + 1 for k in np.flatnonzero(mask[:, n])]

    def labels_of(a, b):
        v = int(L[a, b])
        return [v] if v != TIE else tie_sets.get((a, b), [])

    ev: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def add(la, lb, site):
        for a in la:
            for b in lb:
                if a != b:
                    ev.setdefault((min(a, b), max(a, b)), []).append(site)

    for axis in (0, 1):
        A = L[:-1, :] if axis == 0 else L[:, :-1]
        B = L[1:, :] if axis == 0 else L[:, 1:]
        diff = np.nonzero(A != B)
        for a0, b0 in zip(*diff):
            a1, b1 = (a0 + 1, b0) if axis == 0 else (a0, b0 + 1)
            site = (a0 + a1, b0 + b1)
            add(labels_of(a0, b0), labels_of(a1, b1), site)
    for (a, b), labs in tie_sets.items():
        add(labs, labs, (2 * a, 2 * b))
    return ev


def _site_point(grid, site) -> complex:
    return grid.origin + complex((site[1] + 1) * grid.h / 2, (site[0] + 1) * grid.h / 2)


def _refine_end(family, test, i, j, level, settings, inside: complex, outside: complex) -> complex:
    g, grad = _difference(family, i, j, level)
    for _ in range(48):
        mid, _ok = _project(g, grad, (inside + outside) / 2, settings.curve_tol, settings.grad_floor)
        if bool(test(np.asarray([mid]))[0]):
            inside = mid
        else:
            outside = mid
        if abs(inside - outside) < 1e-12 * settings.step:
            break
    return inside


def _touch_points(family, curve: LevelCurve, settings) -> list[complex]:
    """Points where a third member touches the run tangentially from below.

    Local minima of the third-member gap along the run are refined by a
    parabola through three vertices; a refined minimum of (nearly) zero marks
    a tangency, e.g. several level curves sharing a tangent at one point.
    """
    i, j = curve.pair
    gap = _third_gap(family, i, j, curve.vertices)
    if not np.all(np.isfinite(gap)) or len(gap) < 3:
        return []
    scale = family.max_gradient() * family.window.diagonal
    out = []
    for k in range(1, len(gap) - 1):
        if not (gap[k] <= gap[k - 1] and gap[k] < gap[k + 1]):
            continue
        s0, s1, s2 = curve.arclength[k - 1 : k + 2]
        c = np.polyfit([s0 - s1, 0.0, s2 - s1], gap[k - 1 : k + 2], 2)
        if c[0] <= 0:
            continue
        t = -c[1] / (2 * c[0])
        low = c[2] - c[1] ** 2 / (4 * c[0])
        if abs(t) <= max(s1 - s0, s2 - s1) and low <= 1e-9 * scale:
            seg = curve.vertices[k + 1] if t > 0 else curve.vertices[k - 1]
            frac = abs(t) / abs(seg - curve.vertices[k])
            out.append(complex(curve.vertices[k] + frac * (seg - curve.vertices[k])))
    return out


def _interface_runs(family, test, curve: LevelCurve, settings):
    """Sub-polylines of ``curve`` separating its two labels; also the interior run ends."""
    i, j = curve.pair
    keep = test(curve.vertices)
    runs, ends = [], []
    idx = np.flatnonzero(keep)
    if not len(idx):
        return runs, ends
    V = curve.vertices
    for run in np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1):
        pts = list(V[run])
        a, b = run[0], run[-1]
        wrap = curve.closed and len(run) == len(V)
        if a > 0 and not wrap:
            e = _refine_end(family, test, i, j, curve.level, settings, V[a], V[a - 1])
            if abs(e - pts[0]) < settings.step / 2 and len(pts) > 1:
                pts[0] = e
            elif abs(e - pts[0]) >= settings.step / 2:
                pts.insert(0, e)
            ends.append(e)
        if b < len(V) - 1 and not wrap:
            e = _refine_end(family, test, i, j, curve.level, settings, V[b], V[b + 1])
            if abs(e - pts[-1]) < settings.step / 2 and len(pts) > 1:
                pts[-1] = e
            elif abs(e - pts[-1]) >= settings.step / 2:
                pts.append(e)
            ends.append(e)
        if len(pts) >= 2:
            runs.append(LevelCurve.build(family, curve.pair, curve.level, pts, wrap and curve.closed))
    return runs, ends


def _grid_corners(labeling: RegionLabeling) -> list[complex]:
    L = labeling.labels
    quad = np.stack([L[:-1, :-1], L[:-1, 1:], L[1:, :-1], L[1:, 1:]])
    distinct = np.zeros(quad.shape[1:], dtype=int)
    for lab in labeling.present_labels():
        distinct += np.any(quad == lab, axis=0)
    iy, ix = np.nonzero(distinct >= 3)
    g = labeling.grid
    return [g.origin + complex((b + 1) * g.h, (a + 1) * g.h) for a, b in zip(iy, ix)]


def _merge_points(points: list[complex], radius: float) -> list[complex]:
    out: list[complex] = []
    for p in points:
        if all(abs(p - q) > radius for q in out):
            out.append(complex(p))
    return out


def boundary_graph(
    family: AnalyticFamily,
    labeling: RegionLabeling,
    settings: TraceSettings | None = None,
    window: Window | None = None,
) -> BoundaryGraph:
    """Trace every interface of the labeling and collect corner candidates.

    Each traced curve is cut down to the runs that actually separate its two
    labels (checked by the labeling's membership on either side).  Corners are
    grid vertices touching three or more labels together with the interior
    endpoints of those runs, which is where curves meet or touch tangentially.
    """
    grid = labeling.grid
    window = window or grid.window
    settings = settings or TraceSettings.default(family, grid.h, window)
    rule = _membership(family, labeling)
    structure = np.ones((3, 3), dtype=bool)
    shape = (2 * grid.ny - 1, 2 * grid.nx - 1)
    curves: list[LevelCurve] = []
    corners = _grid_corners(labeling)
    for pair, sites in sorted(_evidence(labeling).items()):
        img = np.zeros(shape, dtype=bool)
        sites = np.asarray(sites)
        img[sites[:, 0], sites[:, 1]] = True
        # dilating first lets sites two lattice steps apart join one component
        comp, ncomp = ndimage.label(ndimage.binary_dilation(img, structure), structure=np.ones((3, 3), dtype=bool))
        comp = np.where(img, comp, 0)
        traced: list[LevelCurve] = []
        for c in range(1, ncomp + 1):
            pts = np.argwhere(comp == c)
            seed = _site_point(grid, pts[len(pts) // 2])
            if any(np.min(np.abs(t.vertices - seed)) <= 2 * grid.h for t in traced if len(t.vertices)):
                continue
            i, j = pair
            curve = trace_level_curve(family, i, j, seed, 0.0, window=window, settings=settings)
            traced.append(curve)
            test = _interface_test(family, rule, i, j, settings, grid.h)
            runs, ends = _interface_runs(family, test, curve, settings)
            curves.extend(runs)
            corners.extend(ends)
            if getattr(rule, "max_family", None) is not None:
                for run in runs:
                    corners.extend(_touch_points(family, run, settings))
    return BoundaryGraph(curves, _merge_points(corners, grid.h))


def _path_samples(path, spacing: float):
    path = np.asarray(path, dtype=complex)
    pts, tangents = [], []
    for a, b in zip(path[:-1], path[1:]):
        seg = b - a
        if seg == 0:
            continue
        n = max(int(np.ceil(abs(seg) / spacing)), 1)
        t = np.arange(n) / n
        pts.extend(a + t * seg)
        tangents.extend([seg / abs(seg)] * n)
    pts.append(path[-1])
    tangents.append(tangents[-1] if tangents else 1.0)
    return np.asarray(pts), np.asarray(tangents)


def escape_monotonicity_check(
    family: AnalyticFamily, labeling: RegionLabeling, path, j: int, k: int
) -> tuple[float, complex]:
    """Directional derivative of Re(f_j - f_k) where the path first escapes from M_j into M_k.

    Returns ``(value, escape_point)``.  The path is sampled at a quarter cell;
    the escape point is located between the last j sample and the first k
    sample after it by bisection on the labeling's membership.
    """
    grid = labeling.grid
    pts, tang = _path_samples(path, grid.h / 4)
    inside = grid.window.contains(pts)
    labels = np.full(len(pts), -1)
    rule = labeling.rule
    if rule is not None:
        # exact membership, so the bisection bracket really contains the crossing
        m = rule(pts)
        labels = np.where(m[j - 1], j, np.where(m[k - 1], k, 0))
        labels[~inside] = -1
    else:
        for n in np.flatnonzero(inside):
            labels[n] = labeling.label_at(pts[n])
    if labels[0] != j:
        raise PreconditionError(f"path must start in a cell labeled {j}")
    seen_j = None
    for n, lab in enumerate(labels):
        if lab == j:
            seen_j = n
        elif lab == k and seen_j is not None:
            break
    else:
        raise NoEscapeError(f"path never passes from label {j} into label {k}")
    a, b = pts[seen_j], pts[n]
    if rule is not None:
        for _ in range(40):
            m = (a + b) / 2
            if rule(np.asarray([m]))[j - 1][0]:
                a = m
            else:
                b = m
    tau = (a + b) / 2
    d = tang[seen_j]
    value = float(((family.A(j, tau) - family.A(k, tau)) * d).real)
    return value, complex(tau)
