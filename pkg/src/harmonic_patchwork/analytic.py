"""Complex polynomials and the analytic families built from them.

A family holds the polynomials ``A_1..A_r``, a base point ``p`` and a working
window.  Every harmonic piece is derived from it as

    f_i = antiderivative of A_i with f_i(p) = 0,    H_i = Re f_i,

so that ``grad H_i = conj(A_i)`` and ``2 dH_i/dz = A_i``.  Member indices are
1-based throughout the package, matching region labels.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import FamilyError


def _strip(coeffs: Iterable[complex]) -> tuple[complex, ...]:
    out = [complex(c) for c in coeffs]
    while out and out[-1] == 0:
        out.pop()
    return tuple(out)


@dataclass(frozen=True)
class ComplexPolynomial:
    """Polynomial with complex coefficients in ascending degree.

    Trailing zeros are stripped on construction, so ``==`` is coefficient-wise
    equality of the normalized lists and the zero polynomial is ``()``.
    """

    coeffs: tuple[complex, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _strip(self.coeffs))

    @classmethod
    def from_pairs(cls, pairs: Sequence[Sequence[float]]) -> "ComplexPolynomial":
        return cls(tuple(complex(re, im) for re, im in pairs))

    def to_pairs(self) -> list[list[float]]:
        return [[c.real, c.imag] for c in self.coeffs]

    @property
    def degree(self) -> int:
        """Index of the last nonzero coefficient; -1 for the zero polynomial."""
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return not self.coeffs

    def __call__(self, z):
        return evaluate(self, z)

    def derivative(self) -> "ComplexPolynomial":
        return ComplexPolynomial(tuple(k * c for k, c in enumerate(self.coeffs) if k > 0))

    def __sub__(self, other: "ComplexPolynomial") -> "ComplexPolynomial":
        n = max(len(self.coeffs), len(other.coeffs))
        a = list(self.coeffs) + [0j] * (n - len(self.coeffs))
        b = list(other.coeffs) + [0j] * (n - len(other.coeffs))
        return ComplexPolynomial(tuple(x - y for x, y in zip(a, b)))


def evaluate(poly: ComplexPolynomial, z):
    """Horner evaluation; works for scalars and numpy arrays alike."""
    if not poly.coeffs:
        return np.zeros_like(np.asarray(z, dtype=complex)) if np.ndim(z) else 0j
    acc = poly.coeffs[-1]
    for c in reversed(poly.coeffs[:-1]):
        acc = acc * z + c
    if np.ndim(z):
        return np.asarray(acc, dtype=complex) * np.ones_like(z, dtype=complex)
    return complex(acc)


def antiderivative(poly: ComplexPolynomial, base: complex) -> ComplexPolynomial:
    """Primitive ``F`` with ``F' = poly`` and ``F(base) = 0``."""
    if poly.is_zero():
        return ComplexPolynomial()
    raw = ComplexPolynomial((0j,) + tuple(c / (k + 1) for k, c in enumerate(poly.coeffs)))
    shift = evaluate(raw, complex(base))
    return ComplexPolynomial((raw.coeffs[0] - shift,) + raw.coeffs[1:])


@dataclass(frozen=True)
class Window:
    """Axis-aligned rectangle ``[x0, x1] x [y0, y1]``."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise FamilyError(f"degenerate window {self}")

    @classmethod
    def square(cls, center: complex = 0j, half_width: float = 1.0) -> "Window":
        c = complex(center)
        return cls(c.real - half_width, c.imag - half_width, c.real + half_width, c.imag + half_width)

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.width, self.height))

    @property
    def origin(self) -> complex:
        return complex(self.x0, self.y0)

    def contains(self, z, margin: float = 0.0):
        z = np.asarray(z)
        return (
            (z.real >= self.x0 + margin)
            & (z.real <= self.x1 - margin)
            & (z.imag >= self.y0 + margin)
            & (z.imag <= self.y1 - margin)
        )


@dataclass(frozen=True)
class AnalyticFamily:
    members: tuple[ComplexPolynomial, ...]
    base_point: complex
    window: Window
    primitives: tuple[ComplexPolynomial, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        members = tuple(
            m if isinstance(m, ComplexPolynomial) else ComplexPolynomial(tuple(m)) for m in self.members
        )
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "base_point", complex(self.base_point))
        if len(members) < 2:
            raise FamilyError(f"a family needs r >= 2 members, got {len(members)}")
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                if members[a] == members[b]:
                    raise FamilyError(f"members {a + 1} and {b + 1} are identical polynomials")
        if not bool(self.window.contains(self.base_point)):
            raise FamilyError(f"base point {self.base_point} lies outside the window")
        prims = tuple(antiderivative(m, self.base_point) for m in members)
        object.__setattr__(self, "primitives", prims)

    @property
    def r(self) -> int:
        return len(self.members)

    def _index(self, i: int) -> int:
        if not 1 <= i <= self.r:
            raise IndexError(f"member index {i} out of range 1..{self.r}")
        return i - 1

    def member(self, i: int) -> ComplexPolynomial:
        return self.members[self._index(i)]

    def primitive(self, i: int) -> ComplexPolynomial:
        return self.primitives[self._index(i)]

    def A(self, i: int, z):
        return evaluate(self.members[self._index(i)], z)

    def values(self, z) -> np.ndarray:
        """Stack of ``A_i(z)`` along a new leading axis of length r."""
        return np.stack([np.asarray(evaluate(m, z), dtype=complex) for m in self.members])

    def harmonic_values(self, z) -> np.ndarray:
        """Stack of ``H_i(z)`` along a new leading axis of length r."""
        return np.stack([np.real(evaluate(f, z)) for f in self.primitives])

    def max_gradient(self, samples: int = 33) -> float:
        """Largest |A_i - A_j| over a coarse lattice of the window (at least 1e-300)."""
        w = self.window
        xs = np.linspace(w.x0, w.x1, samples)
        ys = np.linspace(w.y0, w.y1, samples)
        Z = xs[None, :] + 1j * ys[:, None]
        V = self.values(Z)
        best = 0.0
        for a in range(self.r):
            for b in range(a + 1, self.r):
                best = max(best, float(np.max(np.abs(V[a] - V[b]))))
        return max(best, 1e-300)

    def to_dict(self) -> dict:
        w = self.window
        return {
            "members": [m.to_pairs() for m in self.members],
            "base_point": [self.base_point.real, self.base_point.imag],
            "window": {"origin": [w.x0, w.y0], "width": w.width, "height": w.height},
        }


def harmonic_part(family: AnalyticFamily, i: int, z):
    """``H_i(z) = Re f_i(z)``; vanishes at the base point."""
    return np.real(evaluate(family.primitive(i), z))


def gradient(family: AnalyticFamily, i: int, z):
    """Planar gradient of ``H_i`` encoded as ``dH/dx + i dH/dy``, i.e. ``conj(A_i(z))``."""
    return np.conj(family.A(i, z))


def make_family(members, base_point: complex = 0j, window: Window | None = None) -> AnalyticFamily:
    """Convenience constructor: members may be coefficient sequences or scalars."""
    polys = []
    for m in members:
        if isinstance(m, ComplexPolynomial):
            polys.append(m)
        elif np.isscalar(m):
            polys.append(ComplexPolynomial((complex(m),)))
        else:
            polys.append(ComplexPolynomial(tuple(m)))
    return AnalyticFamily(tuple(polys), complex(base_point), window or Window.square())
