"""Mollified derivatives, boundary measures and Cauchy transforms.

Conventions: ``Phi = sum A_i chi_i`` is the field, ``nu = dbar Phi`` its
measure, and on an interface between members i and j ``nu = |A_i - A_j|/2 ds``.
The potential ``phi = max H_i`` satisfies ``2 d_z phi = Phi``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage
from scipy.signal import fftconvolve
from scipy.spatial import cKDTree

from .analytic import AnalyticFamily
from .curves import LevelCurve
from .errors import NearSingularityError, PreconditionError, UnderdeterminedError, UnderResolvedError
from .grid import FieldSamples, GridWindow
from .piecewise import PAField, pa_field

# integral of (1 - t^2)^4 over [-1, 1]
_BUMP_LINE = 256 / 315
# 0.05 of the mollified peak of a unit-density line; see positivity_verdict
IM_FRACTION = 0.05


@lru_cache(maxsize=32)
def _kernel(radius: float, h: float) -> tuple[np.ndarray, int]:
    m = int(np.ceil(radius / h))
    a = np.arange(-m, m + 1) * h
    t2 = (a[None, :] ** 2 + a[:, None] ** 2) / radius**2
    K = np.where(t2 < 1, (1 - t2) ** 4, 0.0)
    return K / K.sum(), m


@dataclass(frozen=True)
class Mollifier:
    """Radial bump ``c (1 - |z|^2/eps^2)^4`` normalized to unit mass on the sampling grid."""

    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("mollifier radius must be positive")

    @classmethod
    def cells(cls, grid: GridWindow, multiple: float = 6.0) -> "Mollifier":
        return cls(multiple * grid.h)

    def kernel(self, h: float) -> tuple[np.ndarray, int]:
        """Discrete kernel on a lattice of spacing h and its half-width in cells."""
        K, m = _kernel(float(self.radius), float(h))
        return K.copy(), m

    def profile(self, r):
        t2 = (np.asarray(r) / self.radius) ** 2
        return np.where(t2 < 1, 5 / (np.pi * self.radius**2) * (1 - t2) ** 4, 0.0)

    def line_peak(self) -> float:
        """Peak of the mollified measure of a straight line with unit density."""
        return 5 * _BUMP_LINE / (np.pi * self.radius)


def _check_resolved(grid: GridWindow, mollifier: Mollifier):
    if mollifier.radius < 3 * grid.h - 1e-12 * grid.h:
        raise UnderResolvedError(f"mollifier radius {mollifier.radius} is below 3h = {3 * grid.h}")


def _smooth(samples: FieldSamples, mollifier: Mollifier):
    grid = samples.grid
    _check_resolved(grid, mollifier)
    K, m = mollifier.kernel(grid.h)
    V = samples.values
    if np.iscomplexobj(V):
        G = fftconvolve(V.real, K, mode="same") + 1j * fftconvolve(V.imag, K, mode="same")
    else:
        G = fftconvolve(V, K, mode="same")
    return G, m


def _crop(D: np.ndarray, border: int) -> np.ndarray:
    D[:border, :] = np.nan
    D[-border:, :] = np.nan
    D[:, :border] = np.nan
    D[:, -border:] = np.nan
    return D


def mollify(samples: FieldSamples, mollifier: Mollifier) -> FieldSamples:
    """Convolution with the mollifier; cells whose stencil leaves the grid are NaN."""
    G, m = _smooth(samples, mollifier)
    return FieldSamples(samples.grid, _crop(G.astype(complex if np.iscomplexobj(G) else float), m))


def _gradients(G: np.ndarray, h: float):
    gx = np.full(G.shape, np.nan, dtype=G.dtype)
    gy = np.full(G.shape, np.nan, dtype=G.dtype)
    gx[:, 1:-1] = (G[:, 2:] - G[:, :-2]) / (2 * h)
    gy[1:-1, :] = (G[2:, :] - G[:-2, :]) / (2 * h)
    return gx, gy


def mollified_dbar(samples: FieldSamples, mollifier: Mollifier) -> FieldSamples:
    """``(1/2)(d_x + i d_y)(Phi * K_eps)``, NaN within eps + h of the edge."""
    G, m = _smooth(samples, mollifier)
    G = G.astype(complex)
    gx, gy = _gradients(G, samples.grid.h)
    return FieldSamples(samples.grid, _crop(0.5 * (gx + 1j * gy), m + 1))


def mollified_dz(samples: FieldSamples, mollifier: Mollifier) -> FieldSamples:
    """``(1/2)(d_x - i d_y)(phi * K_eps)`` of real samples."""
    G, m = _smooth(samples, mollifier)
    gx, gy = _gradients(G.astype(float), samples.grid.h)
    return FieldSamples(samples.grid, _crop(0.5 * (gx - 1j * gy), m + 1))


def mollified_laplacian(samples: FieldSamples, mollifier: Mollifier) -> FieldSamples:
    """Five-point Laplacian of the mollified real samples."""
    if samples.is_complex:
        raise PreconditionError("the Laplacian is taken of a real potential")
    G, m = _smooth(samples, mollifier)
    h = samples.grid.h
    L = np.full(G.shape, np.nan)
    L[1:-1, 1:-1] = (G[2:, 1:-1] + G[:-2, 1:-1] + G[1:-1, 2:] + G[1:-1, :-2] - 4 * G[1:-1, 1:-1]) / h**2
    return FieldSamples(samples.grid, _crop(L, m + 1))


def estimate_max_density(samples: FieldSamples) -> float:
    """Half the largest jump of the samples inside any 3x3 block of cells."""
    V = samples.values
    parts = [V.real, V.imag] if np.iscomplexobj(V) else [V]
    spread = [ndimage.maximum_filter(p, size=3) - ndimage.minimum_filter(p, size=3) for p in parts]
    return float(np.max(np.hypot(*spread) if len(spread) == 2 else spread[0])) / 2


@dataclass
class PositivityVerdict:
    verdict: bool
    worst_cell: complex
    worst_value: float
    tol_pos: float
    tol_im: float
    min_re: float
    max_abs_im: float
    max_density: float
    epsilon: float
    h: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["worst_cell"] = [self.worst_cell.real, self.worst_cell.imag]
        return d


def positivity_verdict(
    samples: FieldSamples,
    mollifier: Mollifier,
    max_density: float | None = None,
    im_fraction: float = IM_FRACTION,
) -> PositivityVerdict:
    """Is ``dbar(Phi * K_eps)`` a nonnegative real field up to tolerance?

    Every interior cell must satisfy ``Re >= -tol_pos`` with
    ``tol_pos = 1e-3 * max_density`` and ``|Im| <= tol_im`` with
    ``tol_im = im_fraction * max_density * line_peak(eps)``.  The imaginary
    tolerance is relative to the mollified peak of the measure because the
    staircase discretization of an oblique interface leaves an imaginary
    residue proportional to that peak.  ``worst_value`` is the smallest margin
    ``min(Re + tol_pos, tol_im - |Im|)`` over cells, negative iff the verdict
    fails, and ``worst_cell`` is where it occurs.
    """
    D = mollified_dbar(samples, mollifier)
    if max_density is None:
        max_density = estimate_max_density(samples)
    tol_pos = 1e-3 * max_density
    tol_im = im_fraction * max_density * mollifier.line_peak()
    V = D.values
    ok = D.valid
    margin = np.where(ok, np.minimum(V.real + tol_pos, tol_im - np.abs(V.imag)), np.inf)
    k = np.unravel_index(np.argmin(margin), margin.shape)
    worst = float(margin[k])
    return PositivityVerdict(
        verdict=bool(worst >= 0),
        worst_cell=complex(samples.grid.centers[k]),
        worst_value=worst,
        tol_pos=tol_pos,
        tol_im=tol_im,
        min_re=float(np.min(V.real[ok])),
        max_abs_im=float(np.max(np.abs(V.imag[ok]))),
        max_density=float(max_density),
        epsilon=mollifier.radius,
        h=samples.grid.h,
    )


@dataclass
class SubharmonicVerdict:
    verdict: bool
    min_laplacian: float
    worst_cell: complex
    tol_pos: float
    epsilon: float
    h: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["worst_cell"] = [self.worst_cell.real, self.worst_cell.imag]
        return d


def subharmonic_verdict(samples: FieldSamples, mollifier: Mollifier, max_density: float) -> SubharmonicVerdict:
    """Minimum of the mollified Laplacian against ``-1e-3 * max_density``."""
    L = mollified_laplacian(samples, mollifier)
    vals = np.where(L.valid, L.values, np.inf)
    k = np.unravel_index(np.argmin(vals), vals.shape)
    tol = 1e-3 * max_density
    return SubharmonicVerdict(
        bool(vals[k] >= -tol), float(vals[k]), complex(samples.grid.centers[k]), tol, mollifier.radius, samples.grid.h
    )


def measure_density(family: AnalyticFamily, i: int, j: int, z) -> float:
    """``|A_i(z) - A_j(z)| / 2``, the interface density of ``dbar Phi``."""
    return np.abs(family.A(i, z) - family.A(j, z)) / 2


def family_max_density(family: AnalyticFamily, samples: int = 33) -> float:
    return family.max_gradient(samples) / 2


@dataclass(eq=False)
class BoundaryMeasure:
    curves: list[LevelCurve] = field(default_factory=list)

    def __post_init__(self):
        for c in self.curves:
            if len(c.densities) and np.min(c.densities) < 0:
                raise PreconditionError("measure densities must be nonnegative")

    @property
    def total_mass(self) -> float:
        return float(sum(c.mass() for c in self.curves))

    def max_spacing(self) -> float:
        gaps = [np.max(np.abs(np.diff(c.vertices))) for c in self.curves if len(c.vertices) > 1]
        return float(max(gaps)) if gaps else 0.0

    def scaled(self, factor: float) -> "BoundaryMeasure":
        return BoundaryMeasure(
            [LevelCurve(c.pair, c.level, c.vertices, c.arclength, c.densities * factor, c.closed) for c in self.curves]
        )

    def truncated(self, family: AnalyticFamily, center: complex, radius: float) -> "BoundaryMeasure":
        """Keep the vertex runs lying in the closed disk ``|z - center| <= radius``."""
        out = []
        for c in self.curves:
            out.extend(c.restricted(family, np.abs(c.vertices - center) <= radius))
        return BoundaryMeasure(out)

    def to_dict(self) -> dict:
        return {"total_mass": self.total_mass, "curves": [c.to_dict() for c in self.curves]}


def segment_measure(a: complex, b: complex, density: float, n: int, pair=(1, 2)) -> LevelCurve:
    """Straight segment from a to b with n equal panels and constant density."""
    v = a + (b - a) * np.linspace(0, 1, n + 1)
    s = np.abs(b - a) * np.linspace(0, 1, n + 1)
    return LevelCurve(tuple(pair), 0.0, v, s, np.full(n + 1, float(density)))


def _support_distance(measure: BoundaryMeasure, z: np.ndarray) -> np.ndarray:
    pts = np.concatenate([c.vertices for c in measure.curves if len(c.vertices)])
    tree = cKDTree(np.column_stack([pts.real, pts.imag]))
    d, _ = tree.query(np.column_stack([z.real.ravel(), z.imag.ravel()]))
    return d.reshape(z.shape)


def cauchy_transform(measure: BoundaryMeasure, z, check: bool = True):
    """``(1/pi) sum over curves of the trapezoid rule for int density(w) / (z - w) ds``."""
    zz = np.atleast_1d(np.asarray(z, dtype=complex))
    curves = [c for c in measure.curves if len(c.vertices) > 1]
    if not curves:
        out = np.zeros(zz.shape, dtype=complex)
        return out if np.ndim(z) else complex(out[0])
    if check:
        d = _support_distance(measure, zz)
        bad = d < 3 * measure.max_spacing()
        if np.any(bad):
            raise NearSingularityError(f"{int(bad.sum())} evaluation point(s) too close to the support, e.g. {zz[bad][0]}")
    acc = np.zeros(zz.shape, dtype=complex)
    flat = zz.ravel()
    for c in curves:
        ds = np.diff(c.arclength)
        wts = np.zeros(len(c.vertices))
        wts[:-1] += ds / 2
        wts[1:] += ds / 2
        wts = wts * c.densities
        # chunk over evaluation points to bound memory
        for a in range(0, len(flat), 512):
            blk = flat[a : a + 512]
            acc.ravel()[a : a + 512] += (wts[None, :] / (blk[:, None] - c.vertices[None, :])).sum(axis=1)
    acc /= np.pi
    return acc if np.ndim(z) else complex(acc[0])


def evaluate_field(field: PAField, z) -> np.ndarray:
    """Phi at arbitrary points, using the labeling's membership rule when present."""
    zz = np.atleast_1d(np.asarray(z, dtype=complex))
    rule = field.labeling.rule
    if rule is None:
        return np.array([pa_field(field, w) for w in zz.ravel()]).reshape(zz.shape)
    mask = rule(zz)
    V = field.family.values(zz)
    return np.where(mask, V, 0).sum(axis=0) / np.maximum(mask.sum(axis=0), 1)


@dataclass
class ReconstructionFit:
    residual: float
    scale: float
    coefficients: np.ndarray
    center: complex
    radius: float


def reconstruction_fit(
    family: AnalyticFamily,
    field: PAField,
    measure: BoundaryMeasure,
    test_points,
    fit_degree: int = 4,
    center: complex | None = None,
) -> ReconstructionFit:
    """Least-squares polynomial fit of ``Phi - C_nu`` at the test points.

    The basis is ``((z - c)/rho)^k`` with c the centroid of the points (unless
    given) and rho their largest distance from it, which keeps the normal
    equations well conditioned.
    """
    pts = np.asarray(test_points, dtype=complex).ravel()
    if len(pts) < fit_degree + 1:
        raise UnderdeterminedError(f"{len(pts)} test points cannot fit {fit_degree + 1} coefficients")
    R = evaluate_field(field, pts) - cauchy_transform(measure, pts)
    c = complex(np.mean(pts)) if center is None else complex(center)
    rho = float(np.max(np.abs(pts - c))) or 1.0
    B = ((pts - c) / rho)[:, None] ** np.arange(fit_degree + 1)[None, :]
    coef, *_ = np.linalg.lstsq(B, R, rcond=None)
    resid = float(np.max(np.abs(B @ coef - R)))
    scale = float(np.max(np.abs(family.values(pts))))
    return ReconstructionFit(resid, scale, coef, c, rho)


def reconstruction_residual(
    family: AnalyticFamily, field: PAField, measure: BoundaryMeasure, test_points, fit_degree: int = 4
) -> float:
    """Max absolute residual of the polynomial fit to ``Phi - C_nu``."""
    return reconstruction_fit(family, field, measure, test_points, fit_degree).residual


def _resample(curve: LevelCurve, spacing: float):
    """Points along the polyline at roughly ``spacing``; returns points, densities, ds weights."""
    V, D = curve.vertices, curve.densities
    pts, dens, wts = [], [], []
    for a in range(len(V) - 1):
        seg = V[a + 1] - V[a]
        n = max(int(np.ceil(abs(seg) / spacing)), 1)
        t = (np.arange(n) + 0.5) / n
        pts.append(V[a] + t * seg)
        dens.append(D[a] + t * (D[a + 1] - D[a]))
        wts.append(np.full(n, abs(seg) / n))
    if not pts:
        return np.zeros(0, complex), np.zeros(0), np.zeros(0)
    return np.concatenate(pts), np.concatenate(dens), np.concatenate(wts)


def _tree(points: np.ndarray) -> cKDTree:
    return cKDTree(np.column_stack([points.real, points.imag]))


@dataclass
class FluxResult:
    measured: float
    predicted: float
    band: float
    cells: int

    @property
    def ratio(self) -> float:
        return self.measured / self.predicted if self.predicted else float("nan")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ratio"] = self.ratio
        return d


def flux_vs_density(
    samples: FieldSamples,
    mollifier: Mollifier,
    curve: LevelCurve,
    band: float,
    others: list[LevelCurve] | None = None,
    dbar: FieldSamples | None = None,
) -> FluxResult:
    """Compare the grid mass of ``Re dbar(Phi * K)`` near a curve with its density integral.

    The slab is the set of cells within ``band`` of the curve whose nearest
    curve point is not an endpoint, so it is cut square at the ends.  Cells
    closer to any curve in ``others`` are left out.
    """
    grid = samples.grid
    if band < mollifier.radius + 2 * grid.h:
        raise UnderResolvedError(f"band {band} is below eps + 2h = {mollifier.radius + 2 * grid.h}")
    V = curve.vertices
    if len(V) < 2:
        return FluxResult(0.0, 0.0, band, 0)
    w = grid.window
    edge = np.minimum.reduce([V.real - w.x0, w.x1 - V.real, V.imag - w.y0, w.y1 - V.imag])
    if np.min(edge) < band + mollifier.radius:
        raise PreconditionError("curve must stay band + eps inside the window")
    D = dbar if dbar is not None else mollified_dbar(samples, mollifier)
    pts, _, _ = _resample(curve, grid.h / 10)
    pts = np.concatenate([[V[0]], pts, [V[-1]]])
    C = grid.centers
    x0, x1 = V.real.min() - band, V.real.max() + band
    y0, y1 = V.imag.min() - band, V.imag.max() + band
    box = (C.real >= x0) & (C.real <= x1) & (C.imag >= y0) & (C.imag <= y1)
    cz = C[box]
    d, k = _tree(pts).query(np.column_stack([cz.real, cz.imag]))
    take = (d <= band) & (k > 0) & (k < len(pts) - 1)
    if others:
        opts = np.concatenate([_resample(o, grid.h / 10)[0] for o in others if len(o.vertices) > 1] or [np.zeros(0, complex)])
        if len(opts):
            d_other, _ = _tree(opts).query(np.column_stack([cz.real, cz.imag]))
            take &= d <= d_other
    vals = D.values[box][take]
    measured = float(np.nansum(vals.real) * grid.h**2)
    return FluxResult(measured, curve.mass(), band, int(take.sum()))


def disk_flux(
    samples: FieldSamples,
    mollifier: Mollifier,
    center: complex,
    radius: float,
    curves: list[LevelCurve],
    dbar: FieldSamples | None = None,
) -> FluxResult:
    """Grid mass of ``Re dbar(Phi * K)`` in a disk against the density integral of the curves inside it."""
    grid = samples.grid
    D = dbar if dbar is not None else mollified_dbar(samples, mollifier)
    inside = np.abs(grid.centers - center) <= radius
    measured = float(np.nansum(D.values.real[inside]) * grid.h**2)
    predicted = 0.0
    for c in curves:
        p, dens, wts = _resample(c, grid.h / 20)
        predicted += float(np.sum((dens * wts)[np.abs(p - center) <= radius]))
    return FluxResult(measured, predicted, radius, int(inside.sum()))


@dataclass
class ConvergenceResult:
    epsilons: list[float]
    distances: list[float]

    @property
    def monotone(self) -> bool:
        return all(b < a for a, b in zip(self.distances, self.distances[1:]))

    def to_dict(self) -> dict:
        return {"epsilons": self.epsilons, "distances": self.distances, "monotone": self.monotone}


def derivative_convergence(potential: FieldSamples, field: FieldSamples, multiples=(12, 8, 4)) -> ConvergenceResult:
    """L1 distance between ``2 d_z(phi * K_eps)`` and the field, for decreasing eps.

    All distances are taken over the interior common to every radius.
    """
    grid = potential.grid
    derivs = [mollified_dz(potential, Mollifier(m * grid.h)) for m in multiples]
    common = np.logical_and.reduce([d.valid for d in derivs])
    dist = [float(np.sum(np.abs(2 * d.values - field.values)[common]) * grid.h**2) for d in derivs]
    return ConvergenceResult([m * grid.h for m in multiples], dist)


def verdict_json(verdict) -> str:
    return json.dumps(verdict.to_dict(), indent=2, sort_keys=True)
