"""Descent reachability on the cell graph and the convolution monotonicity test.

After subtracting a baseline member b, a path is admissible when every
``H_i - H_b`` (i != b) is non-increasing along it.  On the grid, paths are
8-neighbor chains of center-to-center segments, and a segment with direction
d is admissible when ``Re[(A_i - A_b)(q) d] <= slack`` at its two ends and
midpoint q.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .analytic import AnalyticFamily
from .errors import DegenerateInputError, PreconditionError
from .grid import GridWindow
from .piecewise import PAField, RegionLabeling, max_membership

NEIGHBORS = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]
SLACK = 1e-12


@dataclass(eq=False)
class ReachSet:
    grid: GridWindow
    reachable: np.ndarray
    source: complex

    def contains(self, z: complex) -> bool:
        iy, ix = self.grid.cell_of(z)
        return bool(self.reachable[iy, ix])

    def rows(self):
        for iy in range(self.grid.ny):
            y = self.grid.ys[iy]
            for ix in range(self.grid.nx):
                yield self.grid.xs[ix], y, int(self.reachable[iy, ix])


def _differences(family: AnalyticFamily, baseline: int, z) -> np.ndarray:
    V = family.values(z)
    others = [k for k in range(family.r) if k != baseline - 1]
    return V[others] - V[baseline - 1]


def _slack(family: AnalyticFamily, baseline: int, step: float) -> float:
    return SLACK * family.max_gradient() * step


def segment_admissible(family: AnalyticFamily, baseline: int, a, b, slack: float | None = None):
    """Vectorized 3-point test that every H_i - H_baseline is non-increasing from a to b."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    d = b - a
    if slack is None:
        slack = _slack(family, baseline, float(np.max(np.abs(d))) if d.size else 0.0)
    ok = np.ones(np.broadcast(a, b).shape, dtype=bool)
    for q in (a, (a + b) / 2, b):
        ok &= np.all((_differences(family, baseline, q) * d).real <= slack, axis=0)
    return ok


def descent_reachable(family: AnalyticFamily, z: complex, grid: GridWindow, baseline: int = 1) -> ReachSet:
    """Cells reachable from z's cell along admissible 8-neighbor chains (breadth-first)."""
    if not 1 <= baseline <= family.r:
        raise IndexError(f"baseline {baseline} out of range 1..{family.r}")
    src = grid.cell_of(z)
    C = grid.centers
    ny, nx = grid.shape
    slack = _slack(family, baseline, np.sqrt(2) * grid.h)
    # edge masks: allowed[k][iy, ix] for the move from (iy, ix) to (iy + dy, ix + dx)
    allowed = []
    for dy, dx in NEIGHBORS:
        mask = np.zeros(grid.shape, dtype=bool)
        ys = slice(max(0, -dy), ny - max(0, dy))
        xs = slice(max(0, -dx), nx - max(0, dx))
        yt = slice(max(0, dy), ny - max(0, -dy))
        xt = slice(max(0, dx), nx - max(0, -dx))
        mask[ys, xs] = segment_admissible(family, baseline, C[ys, xs], C[yt, xt], slack)
        allowed.append((dy, dx, ys, xs, yt, xt, mask))
    reach = np.zeros(grid.shape, dtype=bool)
    reach[src] = True
    frontier = reach.copy()
    while frontier.any():
        new = np.zeros_like(reach)
        for dy, dx, ys, xs, yt, xt, mask in allowed:
            new[yt, xt] |= frontier[ys, xs] & mask[ys, xs]
        frontier = new & ~reach
        reach |= frontier
    return ReachSet(grid, reach, complex(z))


@dataclass
class CoverageResult:
    n0: Optional[int]
    uncovered: Optional[complex]
    covered: list[bool]

    def to_dict(self) -> dict:
        return {
            "n0": self.n0,
            "uncovered": None if self.uncovered is None else [self.uncovered.real, self.uncovered.imag],
            "covered": self.covered,
        }


def _target_mask(grid: GridWindow, target) -> np.ndarray:
    if isinstance(target, np.ndarray) and target.dtype == bool:
        return target
    mask = np.zeros(grid.shape, dtype=bool)
    for iy, ix in target:
        mask[iy, ix] = True
    return mask


def limit_coverage_test(
    family: AnalyticFamily,
    p: complex,
    target,
    sequence: Iterable[complex],
    grid: GridWindow,
    baseline: int = 1,
) -> CoverageResult:
    """Smallest 1-based n0 with the target inside every reach set from z_n0 on.

    ``target`` is a boolean cell mask or a list of (iy, ix) cells.  When even
    the last z_n misses part of the target, ``n0`` is None and ``uncovered``
    names a missed cell center.
    """
    mask = _target_mask(grid, target)
    if not mask.any():
        raise DegenerateInputError("target cell set is empty")
    diffs = family.harmonic_values(grid.centers[mask])
    others = [k for k in range(family.r) if k != baseline - 1]
    if np.any(diffs[others] - diffs[baseline - 1] >= 0):
        raise PreconditionError("target cells must lie where every H_i - H_baseline < 0")
    covered = []
    missed = None
    for z in sequence:
        R = descent_reachable(family, z, grid, baseline)
        gaps = mask & ~R.reachable
        covered.append(not gaps.any())
        if gaps.any():
            k = np.argwhere(gaps)[0]
            missed = complex(grid.centers[k[0], k[1]])
    if not covered or not covered[-1]:
        return CoverageResult(None, missed, covered)
    n0 = len(covered)
    while n0 > 1 and covered[n0 - 2]:
        n0 -= 1
    return CoverageResult(n0, None, covered)


def indicator_samples(labeling: RegionLabeling, member: int, subsamples: int = 4, family: AnalyticFamily | None = None) -> np.ndarray:
    """Per-cell fraction of sub-cell points where ``member`` is active (ties shared)."""
    grid = labeling.grid
    rule = labeling.rule or (max_membership(family) if family is not None else None)
    if rule is None:
        return (labeling.labels == member).astype(float)
    acc = np.zeros(grid.shape)
    offsets = grid.subsample_offsets(subsamples) if subsamples > 1 else np.array([0j])
    for off in offsets:
        m = rule(grid.centers + off)
        acc += m[member - 1] / np.maximum(m.sum(axis=0), 1)
    return acc / len(offsets)


def mollified_indicator_at(chi: np.ndarray, grid: GridWindow, radius: float, points) -> np.ndarray:
    """``(chi * K_eps)(z)`` at arbitrary points by a direct normalized kernel sum."""
    out = []
    m = int(np.ceil(radius / grid.h)) + 1
    for z in np.atleast_1d(np.asarray(points, dtype=complex)):
        iy, ix = grid.cell_of(z)
        ys = slice(max(iy - m, 0), min(iy + m + 1, grid.ny))
        xs = slice(max(ix - m, 0), min(ix + m + 1, grid.nx))
        t2 = np.abs(grid.centers[ys, xs] - z) ** 2 / radius**2
        K = np.where(t2 < 1, (1 - t2) ** 4, 0.0)
        out.append(float(np.sum(K * chi[ys, xs]) / np.sum(K)))
    return np.asarray(out)


@dataclass
class MonotonicityResult:
    holds: bool
    worst_violation: float
    values: np.ndarray

    def to_dict(self) -> dict:
        return {"holds": self.holds, "worst_violation": self.worst_violation, "n_vertices": int(len(self.values))}


def convolution_monotonicity_check(
    field: PAField,
    baseline: int,
    mollifier,
    path,
    slack: float = 1e-3,
    subsamples: int = 4,
    chi: np.ndarray | None = None,
) -> MonotonicityResult:
    """Is ``chi_baseline * K_eps`` non-decreasing along an admissible descent path?"""
    family, labeling = field.family, field.labeling
    grid = labeling.grid
    path = np.asarray(path, dtype=complex)
    if len(path) < 2:
        raise DegenerateInputError("path needs at least two vertices")
    if not np.all(segment_admissible(family, baseline, path[:-1], path[1:])):
        raise PreconditionError("path is not a descent path for the baseline")
    w = grid.window
    clearance = np.min(np.minimum.reduce([path.real - w.x0, w.x1 - path.real, path.imag - w.y0, w.y1 - path.imag]))
    if clearance < mollifier.radius + grid.h:
        raise PreconditionError("mollifier support must stay inside the window along the path")
    if chi is None:
        chi = indicator_samples(labeling, baseline, subsamples, family)
    vals = mollified_indicator_at(chi, grid, mollifier.radius, path)
    inc = np.diff(vals)
    worst = float(inc.min())
    return MonotonicityResult(bool(worst >= -slack), worst, vals)


def admissible_directions(family: AnalyticFamily, baseline: int, z: complex, samples: int = 720) -> np.ndarray:
    """Unit directions d with ``Re[(A_i - A_b)(z) d] < 0`` for all i != b."""
    d = np.exp(2j * np.pi * np.arange(samples) / samples)
    D = _differences(family, baseline, complex(z))
    ok = np.all((D[:, None] * d[None, :]).real < 0, axis=0)
    return d[ok]


def random_descent_path(
    family: AnalyticFamily,
    baseline: int,
    start: complex,
    length: float,
    spacing: float,
    rng: np.random.Generator,
) -> Optional[np.ndarray]:
    """Straight path from start in a random strictly admissible direction, or None.

    The direction is drawn at the start point; the path is truncated at the
    first vertex where the segment test fails.
    """
    dirs = admissible_directions(family, baseline, start)
    if not len(dirs):
        return None
    d = dirs[rng.integers(len(dirs))]
    n = max(int(length / spacing), 1)
    pts = start + d * spacing * np.arange(n + 1)
    ok = segment_admissible(family, baseline, pts[:-1], pts[1:])
    stop = int(np.argmin(ok)) if not ok.all() else len(ok)
    return pts[: stop + 1] if stop >= 1 else None
