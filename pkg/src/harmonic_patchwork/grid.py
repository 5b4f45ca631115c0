"""Square-cell discretization of a rectangular window.

Arrays indexed by cells have shape ``(ny, nx)`` with row ``iy`` growing in
the +y direction and column ``ix`` in the +x direction.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .analytic import Window
from .errors import GridError


@dataclass(frozen=True)
class GridWindow:
    origin: complex
    width: float
    height: float
    nx: int
    ny: int

    def __post_init__(self):
        object.__setattr__(self, "origin", complex(self.origin))
        if self.nx < 8 or self.ny < 8:
            raise GridError(f"grid needs at least 8x8 cells, got {self.nx}x{self.ny}")
        hx, hy = self.width / self.nx, self.height / self.ny
        if not np.isclose(hx, hy, rtol=1e-12, atol=0.0):
            raise GridError(f"cells must be square: {hx} != {hy}")

    @classmethod
    def over(cls, window: Window, nx: int, ny: int | None = None) -> "GridWindow":
        if ny is None:
            ny = int(round(nx * window.height / window.width))
        return cls(window.origin, window.width, window.height, nx, ny)

    @property
    def h(self) -> float:
        return self.width / self.nx

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def window(self) -> Window:
        o = self.origin
        return Window(o.real, o.imag, o.real + self.width, o.imag + self.height)

    @cached_property
    def xs(self) -> np.ndarray:
        return self.origin.real + (np.arange(self.nx) + 0.5) * self.h

    @cached_property
    def ys(self) -> np.ndarray:
        return self.origin.imag + (np.arange(self.ny) + 0.5) * self.h

    @cached_property
    def centers(self) -> np.ndarray:
        return self.xs[None, :] + 1j * self.ys[:, None]

    def center(self, iy: int, ix: int) -> complex:
        return complex(self.xs[ix], self.ys[iy])

    def cell_of(self, z: complex) -> tuple[int, int]:
        """(iy, ix) of the cell containing z; raises if z is outside the grid."""
        z = complex(z)
        fx = (z.real - self.origin.real) / self.h
        fy = (z.imag - self.origin.imag) / self.h
        ix, iy = int(np.floor(fx)), int(np.floor(fy))
        # points on the far edges belong to the last cell
        if ix == self.nx and np.isclose(fx, self.nx):
            ix -= 1
        if iy == self.ny and np.isclose(fy, self.ny):
            iy -= 1
        if not (0 <= ix < self.nx and 0 <= iy < self.ny):
            raise GridError(f"point {z} lies outside the grid")
        return iy, ix

    def subsample_offsets(self, s: int) -> np.ndarray:
        """Complex offsets of an s x s lattice of sub-cell points around a center."""
        t = ((np.arange(s) + 0.5) / s - 0.5) * self.h
        return (t[None, :] + 1j * t[:, None]).ravel()

    def edge_distance(self) -> np.ndarray:
        """Distance from each cell center to the nearest window edge."""
        X = np.minimum(self.xs - self.origin.real, self.origin.real + self.width - self.xs)
        Y = np.minimum(self.ys - self.origin.imag, self.origin.imag + self.height - self.ys)
        return np.minimum(X[None, :], Y[:, None])

    def to_dict(self) -> dict:
        return {
            "origin": [self.origin.real, self.origin.imag],
            "width": self.width,
            "height": self.height,
            "nx": self.nx,
            "ny": self.ny,
            "h": self.h,
        }


@dataclass(frozen=True, eq=False)
class FieldSamples:
    """Per-cell samples of a scalar field; NaN marks cells outside the valid interior."""

    grid: GridWindow
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise GridError(f"samples shape {self.values.shape} does not match grid {self.grid.shape}")

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    @property
    def valid(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def rows(self):
        """Yield (x, y, value) in row-major order, the CSV export order."""
        for iy in range(self.grid.ny):
            y = self.grid.ys[iy]
            for ix in range(self.grid.nx):
                yield self.grid.xs[ix], y, self.values[iy, ix]
