"""Small utilities shared by the tests."""
import numpy as np
from scipy.spatial import cKDTree


def clip_to_box(family, curve, box):
    x0, y0, x1, y1 = box
    V = curve.vertices
    keep = (V.real >= x0) & (V.real <= x1) & (V.imag >= y0) & (V.imag <= y1)
    return curve.restricted(family, keep)


def disk_points(rng, center, radius, count, avoid=None, clearance=0.0):
    """Uniform points in a disk, rejecting those within ``clearance`` of the ``avoid`` points."""
    tree = cKDTree(np.column_stack([avoid.real, avoid.imag])) if avoid is not None and len(avoid) else None
    out = []
    while len(out) < count:
        z = center + radius * np.sqrt(rng.uniform(size=count)) * np.exp(2j * np.pi * rng.uniform(size=count))
        if tree is not None:
            d, _ = tree.query(np.column_stack([z.real, z.imag]))
            z = z[d >= clearance]
        out.extend(z.tolist())
    return np.asarray(out[:count])
