"""Pointwise genericity: collinearity residuals, convex hulls, dual cones.

At a point p the values ``a_i = A_i(p)`` decide everything.  Directions are
encoded as unit complex numbers.  The dual cone of member i is

    sigma_i = { v : Re[v (a_j - a_i)] <= 0 for all j != i },

the set of directions in which H_i grows at least as fast, to first order,
as every other H_j.  Since ``Re[v d] = <v, conj(d)>`` it is the polar cone of
the vectors ``conj(a_j - a_i)``, which an angular sweep classifies.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Optional

import numpy as np
from scipy.spatial import ConvexHull

from .analytic import AnalyticFamily
from .errors import DuplicateValueError, PreconditionError

REL_TOL = 1e-9
ANGLE_TOL = 1e-12

CONE_KINDS = ("point", "ray", "line", "half_plane", "pointed", "full")


@dataclass(frozen=True)
class Cone2D:
    kind: str
    boundary_directions: tuple[complex, ...] = ()

    def __post_init__(self):
        if self.kind not in CONE_KINDS:
            raise ValueError(f"unknown cone kind {self.kind!r}")

    @property
    def opening(self) -> float:
        """Top angle; only meaningful for pointed cones (pi for half-planes)."""
        if self.kind == "pointed":
            a, b = self.boundary_directions
            return float(abs(np.angle(b / a)))
        if self.kind == "half_plane":
            return float(np.pi)
        return 0.0

    def contains(self, v: complex, tol: float = 1e-12) -> bool:
        """Membership of a direction (or 0) in the cone."""
        v = complex(v)
        if v == 0:
            return True
        u = v / abs(v)
        if self.kind == "full":
            return True
        if self.kind == "point":
            return False
        if self.kind == "half_plane":
            return (u * np.conj(self.boundary_directions[0])).real <= tol
        if self.kind == "ray":
            return abs(u - self.boundary_directions[0]) <= tol
        if self.kind == "line":
            d = self.boundary_directions[0]
            return abs(u - d) <= tol or abs(u + d) <= tol
        a, b = self.boundary_directions
        # inside the arc swept counterclockwise from a to b
        return np.angle(u / a) >= -tol and np.angle(b / u) >= -tol

    def to_dict(self) -> dict:
        return {"kind": self.kind, "edge_angles": [float(np.angle(d)) for d in self.boundary_directions]}


def _scale(values: np.ndarray) -> float:
    return float(np.max(np.abs(values))) if len(values) else 0.0


def _arc(vectors: Iterable[complex]):
    """Smallest arc holding all directions: (start angle, span, largest gap)."""
    ang = np.sort(np.mod(np.angle(np.asarray(list(vectors), dtype=complex)), 2 * np.pi))
    if len(ang) == 1:
        return float(ang[0]), 0.0, 2 * np.pi
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
    k = int(np.argmax(gaps))
    start = ang[(k + 1) % len(ang)]
    return float(start), float(2 * np.pi - gaps[k]), float(gaps[k])


def polar_cone(generators: Iterable[complex]) -> Cone2D:
    """``{v : <v, u> <= 0 for every generator u}`` for nonzero planar generators."""
    gens = [complex(g) for g in generators]
    if not gens:
        return Cone2D("full")
    start, span, gap = _arc(gens)
    if gap > np.pi + ANGLE_TOL:
        u_a = np.exp(1j * start)
        if span <= ANGLE_TOL:
            return Cone2D("half_plane", (complex(u_a),))
        u_b = np.exp(1j * (start + span))
        # edges listed so that the cone is the counterclockwise arc between them
        return Cone2D("pointed", (complex(u_b * 1j), complex(u_a * -1j)))
    if gap >= np.pi - ANGLE_TOL:
        # generators span exactly a closed half-plane or a line
        units = np.asarray(gens) / np.abs(gens)
        u_a = np.exp(1j * start)
        if np.all(np.abs(np.imag(units * np.conj(u_a))) <= ANGLE_TOL):
            return Cone2D("line", (complex(u_a * 1j),))
        # inner normal of the generated half-plane is u_a rotated by +pi/2
        return Cone2D("ray", (complex(-u_a * 1j),))
    return Cone2D("point")


def critical_residual(family: AnalyticFamily, z: complex, i: int, j: int, k: int) -> float:
    """``Im[(A_i - A_k) conj(A_j - A_k)]``; zero exactly on the critical set of the triple."""
    if len({i, j, k}) != 3:
        raise PreconditionError("critical_residual needs three distinct indices")
    ai, aj, ak = (complex(family.A(n, complex(z))) for n in (i, j, k))
    return float(((ai - ak) * np.conj(aj - ak)).imag)


def dual_cone(family: AnalyticFamily, p: complex, i: int) -> Cone2D:
    vals = family.values(complex(p))
    ai = vals[i - 1]
    tol = REL_TOL * _scale(vals)
    gens = []
    for j in range(1, family.r + 1):
        if j == i:
            continue
        d = vals[j - 1] - ai
        if abs(d) <= tol:
            raise DuplicateValueError(f"A_{i}(p) and A_{j}(p) coincide at p = {complex(p)}")
        gens.append(np.conj(d))
    return polar_cone(gens)


def open_half_plane(generators: Iterable[complex]) -> bool:
    """True iff the nonzero generators fit in an open half-plane (0 not in their conical hull)."""
    gens = list(generators)
    if not gens:
        return False
    _, _, gap = _arc(gens)
    return gap > np.pi + ANGLE_TOL


def vk_cone_test(family: AnalyticFamily, p: complex, k: int, active: Iterable[int]) -> bool:
    """True iff 0 is not a nonnegative, not-all-zero combination of A_k(p) - A_j(p), j in active."""
    active = sorted(set(active))
    if k not in active or len(active) < 2:
        raise PreconditionError("vk_cone_test needs k in active and |active| >= 2")
    vals = family.values(complex(p))
    tol = REL_TOL * _scale(vals)
    gens = []
    for j in active:
        if j == k:
            continue
        g = vals[k - 1] - vals[j - 1]
        if abs(g) <= tol:
            warnings.warn(f"A_{k}(p) = A_{j}(p): zero generator puts 0 in V_{k}", stacklevel=2)
            return False
        gens.append(g)
    return open_half_plane(gens)


@dataclass
class PointProfile:
    point: complex
    values: list[complex]
    hull_vertices: list[complex]
    extreme_set: set[int]
    on_boundary_non_extreme: set[int]
    interior: set[int] = field(default_factory=set)
    cones: dict[int, Optional[Cone2D]] = field(default_factory=dict)
    flags: dict[str, bool] = field(default_factory=dict)
    active: tuple[int, ...] = ()
    convention: str = "all"

    def to_dict(self) -> dict:
        pair = lambda c: [float(np.real(c)), float(np.imag(c))]
        return {
            "point": pair(self.point),
            "values": [pair(v) for v in self.values],
            "hull_vertices": [pair(v) for v in self.hull_vertices],
            "extreme_set": sorted(self.extreme_set),
            "on_boundary_non_extreme": sorted(self.on_boundary_non_extreme),
            "interior": sorted(self.interior),
            "cones": {str(k): (c.to_dict() if c else {"kind": "undefined", "edge_angles": []}) for k, c in self.cones.items()},
            "flags": dict(self.flags),
            "active": list(self.active),
            "convention": self.convention,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _dist_to_segment(z: complex, a: complex, b: complex) -> float:
    d = b - a
    if d == 0:
        return abs(z - a)
    t = min(max(((z - a) * np.conj(d)).real / abs(d) ** 2, 0.0), 1.0)
    return abs(z - (a + t * d))


def hull_classes(values, indices=None):
    """Classify points as extreme, boundary-non-extreme or interior to their hull.

    Returns ``(hull_vertices, extreme, boundary, interior)`` with index sets
    holding the labels in ``indices`` (1-based positions by default).
    """
    vals = np.asarray(values, dtype=complex)
    idx = list(indices) if indices is not None else list(range(1, len(vals) + 1))
    scale = _scale(vals)
    tol = REL_TOL * scale
    extreme, boundary, interior = set(), set(), set()
    # farthest pair decides whether the hull is a point, a segment or a polygon
    D = np.abs(vals[:, None] - vals[None, :])
    a, b = np.unravel_index(np.argmax(D), D.shape)
    if D[a, b] <= tol:
        return [complex(vals[0])], set(idx), boundary, interior
    axis = (vals[b] - vals[a]) / abs(vals[b] - vals[a])
    rel = (vals - vals[a]) * np.conj(axis)
    if np.max(np.abs(rel.imag)) * abs(vals[b] - vals[a]) <= REL_TOL * scale**2:
        lo, hi = rel.real.min(), rel.real.max()
        ends = [complex(vals[np.argmin(rel.real)]), complex(vals[np.argmax(rel.real)])]
        for n, t in zip(idx, rel.real):
            if t - lo <= tol or hi - t <= tol:
                extreme.add(n)
            else:
                boundary.add(n)
        return ends, extreme, boundary, interior
    hull = ConvexHull(np.column_stack([vals.real, vals.imag]))
    verts = [complex(vals[v]) for v in hull.vertices]  # counterclockwise in 2-D
    for n, z in zip(idx, vals):
        if min(abs(z - v) for v in verts) <= tol:
            extreme.add(n)
        elif min(_dist_to_segment(z, verts[m], verts[(m + 1) % len(verts)]) for m in range(len(verts))) <= tol:
            boundary.add(n)
        else:
            interior.add(n)
    return verts, extreme, boundary, interior


def convex_hull_profile(family: AnalyticFamily, p: complex, active: Iterable[int] | None = None) -> PointProfile:
    p = complex(p)
    act = tuple(sorted(set(active))) if active is not None else tuple(range(1, family.r + 1))
    vals = family.values(p)
    sub = vals[[k - 1 for k in act]]
    verts, ext, bnd, inner = hull_classes(sub, act)
    prof = PointProfile(p, [complex(v) for v in vals], verts, ext, bnd, inner, active=act)
    prof.convention = "all" if len(act) == family.r else "active-subset"
    prof.flags["cor17"] = not bnd
    return prof


def _pairwise_distinct(vals: np.ndarray, tol: float) -> bool:
    return all(abs(vals[a] - vals[b]) > tol for a, b in combinations(range(len(vals)), 2))


def genericity_report(family: AnalyticFamily, p: complex, active: Iterable[int] | None = None) -> PointProfile:
    """All pointwise flags at p, evaluated on ``active`` (all members when None).

    ``thm15_i`` records whether every member is active at p, which is the
    caller's grid evidence for p lying in every closure of M_i.
    """
    p = complex(p)
    act = tuple(sorted(set(active))) if active is not None else tuple(range(1, family.r + 1))
    if not act:
        raise PreconditionError("active set must be nonempty")
    prof = convex_hull_profile(family, p, act)
    vals = family.values(p)
    sub = vals[[k - 1 for k in act]]
    scale = _scale(sub)
    dist_tol = REL_TOL * scale
    res_tol = REL_TOL * scale**2
    distinct = _pairwise_distinct(sub, dist_tol)
    collinear = any(
        abs(critical_residual(family, p, i, j, k)) <= res_tol for i, j, k in combinations(act, 3)
    )
    for k in act:
        others = [j for j in act if j != k]
        if not distinct or not others:
            prof.cones[k] = None
            continue
        prof.cones[k] = polar_cone(np.conj(vals[j - 1] - vals[k - 1]) for j in others)
    if len(act) < 2:
        thm61 = True
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            thm61 = all(vk_cone_test(family, p, k, act) for k in act)
    prof.flags.update(
        thm15_i=len(act) == family.r,
        thm15_ii=not collinear,
        thm15_iii=distinct,
        thm61_ii=thm61,
    )
    return prof
