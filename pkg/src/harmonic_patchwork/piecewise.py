"""Max-fields, region labelings and piecewise-analytic fields on a grid.

A labeling carries, besides the per-cell labels decided at cell centers, an
optional *membership rule*: a vectorized map from points to a boolean stack
``(r, ...)`` marking the members active there (several entries on ties).
The rule lets samplers refine below cell resolution without changing the
labeling itself.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .analytic import AnalyticFamily, ComplexPolynomial, Window, make_family
from .errors import AmbiguousCellError, GridError, PreconditionError
from .grid import FieldSamples, GridWindow

TIE = 0

MembershipRule = Callable[[np.ndarray], np.ndarray]


def max_field(family: AnalyticFamily, z: complex, tie_tolerance: float = 0.0):
    """Return ``(max_i H_i(z), {i : H_i(z) >= max - tie_tolerance})``."""
    H = family.harmonic_values(complex(z))
    top = float(H.max())
    winners = frozenset(int(k) + 1 for k in np.flatnonzero(H >= top - tie_tolerance))
    return top, winners


def max_membership(family: AnalyticFamily, tie_tolerance: float = 0.0) -> MembershipRule:
    def rule(z):
        H = family.harmonic_values(z)
        return H >= H.max(axis=0) - tie_tolerance

    # lets consumers recognize max-derived labelings
    rule.max_family = family
    return rule


def _labels_from_membership(mask: np.ndarray) -> np.ndarray:
    count = mask.sum(axis=0)
    labels = mask.argmax(axis=0) + 1
    return np.where(count == 1, labels, TIE).astype(np.int64)


@dataclass(frozen=True, eq=False)
class RegionLabeling:
    grid: GridWindow
    labels: np.ndarray
    tie_tolerance: float = 0.0
    rule: Optional[MembershipRule] = None
    r: int = 0

    def __post_init__(self):
        if self.labels.shape != self.grid.shape:
            raise GridError("label array does not match the grid")

    def label_at(self, z: complex) -> int:
        iy, ix = self.grid.cell_of(z)
        return int(self.labels[iy, ix])

    @property
    def tie_mask(self) -> np.ndarray:
        return self.labels == TIE

    def present_labels(self) -> set[int]:
        return {int(v) for v in np.unique(self.labels) if v != TIE}

    def active_near(self, p: complex, radius: float) -> set[int]:
        """Labels of cells whose centers lie within ``radius`` of p (a grid estimate of I(p))."""
        near = np.abs(self.grid.centers - p) <= radius
        return {int(v) for v in np.unique(self.labels[near]) if v != TIE}

    def rows(self):
        for iy in range(self.grid.ny):
            y = self.grid.ys[iy]
            for ix in range(self.grid.nx):
                yield self.grid.xs[ix], y, int(self.labels[iy, ix])


def labeling_from_rule(grid: GridWindow, rule: MembershipRule, r: int, tie_tolerance: float = 0.0) -> RegionLabeling:
    mask = rule(grid.centers)
    return RegionLabeling(grid, _labels_from_membership(mask), tie_tolerance, rule, r)


def classify_grid(family: AnalyticFamily, grid: GridWindow, tie_tolerance: float = 0.0) -> RegionLabeling:
    """Label each cell by the maximizing member at its center; ties become ``TIE``."""
    if tie_tolerance < 0:
        raise PreconditionError("tie_tolerance must be nonnegative")
    return labeling_from_rule(grid, max_membership(family, tie_tolerance), family.r, tie_tolerance)


def half_plane_labeling(
    grid: GridWindow, r: int, normal: complex, inside: int, outside: int, through: complex = 0j
) -> RegionLabeling:
    """Two-region labeling split by a line through ``through``.

    ``inside`` gets the open half-plane into which the unit ``normal`` points.
    """
    n = complex(normal) / abs(normal)

    def rule(z):
        s = np.real((np.asarray(z) - through) * np.conj(n))
        mask = np.zeros((r,) + np.shape(z), dtype=bool)
        mask[inside - 1] |= s >= 0
        mask[outside - 1] |= s <= 0
        return mask

    return labeling_from_rule(grid, rule, r)


def cusp_family(window: Window | None = None) -> AnalyticFamily:
    """Three members with H = 0, 4x + x^2 - y^2 and -x, all tangent at the origin."""
    return make_family([ComplexPolynomial(()), ComplexPolynomial((4, 2)), ComplexPolynomial((-1,))], 0j, window)


def diagonal_family(window: Window | None = None) -> AnalyticFamily:
    """Two constant members 1 and i; the max-field interface is the line x + y = 0."""
    return make_family([1, 1j], 0j, window)


def counterexample_membership(family: AnalyticFamily) -> MembershipRule:
    """Membership of the modified cusp field.

    Where member 1 is maximal and Im(z - p) > 0 the label is replaced by the
    larger of members 2 and 3, i.e. by 3 where H_3 > H_2 and by 2 where
    H_2 > H_3.  Everywhere else it is the max-field membership.
    """
    p = family.base_point

    def rule(z):
        z = np.asarray(z)
        H = family.harmonic_values(z)
        top = H.max(axis=0)
        mask = H >= top
        upper_horn = mask[0] & (H[0] > H[1]) & (H[0] > H[2]) & (np.imag(z - p) > 0)
        d32 = H[2] - H[1]
        mask = mask.copy()
        mask[0] &= ~upper_horn
        mask[1] |= upper_horn & (d32 <= 0)
        mask[2] |= upper_horn & (d32 >= 0)
        return mask

    return rule


def counterexample_labeling(grid: GridWindow, family: AnalyticFamily | None = None) -> RegionLabeling:
    """Labeling of the non-maximal subharmonic field built on the cusp family."""
    family = family or cusp_family(grid.window)
    if not bool(grid.window.contains(family.base_point)):
        raise PreconditionError("grid window must contain the base point")
    return labeling_from_rule(grid, counterexample_membership(family), family.r)


def difference_fraction(a: RegionLabeling, b: RegionLabeling) -> float:
    if a.grid != b.grid:
        raise GridError("labelings live on different grids")
    return float(np.mean(a.labels != b.labels))


@dataclass(frozen=True, eq=False)
class PAField:
    """``Phi = sum A_i chi_i`` with the regions given by a labeling."""

    family: AnalyticFamily
    labeling: RegionLabeling


def pa_field(field: PAField, z: complex) -> complex:
    i = field.labeling.label_at(z)
    if i == TIE:
        raise AmbiguousCellError(f"cell containing {z} is a tie cell")
    return complex(field.family.A(i, complex(z)))


def _membership_average(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    count = mask.sum(axis=0)
    total = np.where(mask, values, 0).sum(axis=0)
    return total / np.maximum(count, 1)


def sample_pa_field(field: PAField, subsamples: int = 1) -> FieldSamples:
    """Cell samples of Phi.

    With ``subsamples = s > 1`` and a membership rule, each cell holds the
    mean of Phi over an s x s lattice of interior points.  Tied points take
    the mean of the tied members.  Without a rule, cell-center labels are
    used and tie cells average all members active at the center.
    """
    fam, lab = field.family, field.labeling
    grid = lab.grid
    if lab.rule is None:
        if np.any(lab.labels == TIE):
            raise AmbiguousCellError("labeling without a membership rule contains tie cells")
        V = fam.values(grid.centers)
        vals = np.take_along_axis(V, (lab.labels - 1)[None], axis=0)[0]
        return FieldSamples(grid, vals)
    if subsamples <= 1:
        offsets = np.array([0j])
    else:
        offsets = grid.subsample_offsets(subsamples)
    acc = np.zeros(grid.shape, dtype=complex)
    for off in offsets:
        z = grid.centers + off
        acc += _membership_average(fam.values(z), lab.rule(z))
    return FieldSamples(grid, acc / len(offsets))


def sample_potential(family: AnalyticFamily, grid: GridWindow) -> FieldSamples:
    """phi = max_i H_i at cell centers."""
    return FieldSamples(grid, family.harmonic_values(grid.centers).max(axis=0))


def sample_ph_field(field: PAField) -> FieldSamples:
    """``sum H_i chi_i`` at cell centers (ties take the mean of tied members)."""
    fam, lab = field.family, field.labeling
    z = lab.grid.centers
    H = fam.harmonic_values(z)
    if lab.rule is not None:
        return FieldSamples(lab.grid, _membership_average(H, lab.rule(z)))
    if np.any(lab.labels == TIE):
        raise AmbiguousCellError("labeling without a membership rule contains tie cells")
    return FieldSamples(lab.grid, np.take_along_axis(H, (lab.labels - 1)[None], axis=0)[0])
