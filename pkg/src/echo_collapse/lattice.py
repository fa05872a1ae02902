"""Yttrium sublattice of Y2SiO5 seen from an Er3+ on crystallographic site 1.

The monoclinic (C2/c) cell and the eight Y positions of the primitive cell
are expressed directly in the optical frame (D1, D2, b), relative to the
dopant. The numbers below were obtained by a linear least-squares
refinement of lattice vectors and basis offsets against the twenty
tabulated nearest neighbours (orientation I, two-decimal precision; max
residual 0.005 A). The reconstructed cell has a = 14.40 A, b = 6.72 A,
c = 10.41 A, beta = 122.2 deg, i.e. 16 Y per 852 A^3 (1.88e22 cm^-3).
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .geometry import Cluster, NucleusSite, Orientation, make_cluster

# Primitive translations, angstrom: (a + b)/2, b, c.
PRIMITIVE = np.array([
    [6.72, 2.585556, 3.36],
    [0.0, 0.0, 6.72],
    [-2.014286, -10.209841, 0.0],
])

# Y basis relative to the Er3+ site (the first entry is the dopant itself).
BASIS = np.array([
    [0.0, 0.0, 0.0],
    [4.045714, -4.394286, 9.27],
    [1.255714, -7.347989, 3.36],
    [5.06, 0.707037, 5.81],
    [2.268571, -2.241429, 5.0],
    [2.917143, -5.472857, 5.81],
    [3.93, -0.368148, 2.55],
    [5.712857, -2.519365, 5.0],
])


def yttrium_positions(radius_A: float) -> np.ndarray:
    """All Y positions within ``radius_A`` of the dopant, excluding the dopant site.

    Returned as an ``(n, 3)`` array sorted by distance; equal distances are
    ordered by (D1, D2, b), as in the tabulated neighbour list.
    """
    if not radius_A > 0:
        raise ValidationError("radius must be positive")
    # Bound on the integer coefficients: |n_k| <= R * |row k of inverse(PRIMITIVE^T)| + 1.
    inv = np.linalg.inv(PRIMITIVE.T)
    reach = float(radius_A) + np.abs(BASIS).max() * np.sqrt(3.0)
    nmax = np.ceil(reach * np.linalg.norm(inv, axis=1)).astype(int) + 1
    grids = np.meshgrid(*(np.arange(-m, m + 1) for m in nmax), indexing="ij")
    coeffs = np.stack([g.ravel() for g in grids], axis=1)
    translations = coeffs @ PRIMITIVE
    pts = (translations[:, None, :] + BASIS[None, :, :]).reshape(-1, 3)
    dist = np.linalg.norm(pts, axis=1)
    keep = (dist > 1e-6) & (dist <= radius_A)
    pts, dist = pts[keep], dist[keep]
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0], np.round(dist, 4)))
    return pts[order]


def generate_cluster(n: int | None = None, radius_A: float | None = None) -> Cluster:
    """Orientation-I cluster holding the ``n`` nearest Y, or every Y within ``radius_A``."""
    if (n is None) == (radius_A is None):
        raise ValidationError("give exactly one of n or radius_A")
    if n is not None:
        if n < 1:
            raise ValidationError("n must be positive")
        # Y density ~0.0188 A^-3; pad the radius and grow until enough sites appear.
        radius = (3.0 * n / (4.0 * np.pi * 0.0188)) ** (1.0 / 3.0) + 3.0
        pts = yttrium_positions(radius)
        while len(pts) < n:
            radius *= 1.2
            pts = yttrium_positions(radius)
        pts = pts[:n]
    else:
        pts = yttrium_positions(radius_A)
    sites = [NucleusSite.from_position(i + 1, p, Orientation.I) for i, p in enumerate(pts)]
    return make_cluster(sites, Orientation.I)
