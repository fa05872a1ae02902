"""Optical-frame geometry and the yttrium cluster around the dopant.

Vectors are plain ``numpy`` arrays of shape ``(3,)`` with components
ordered ``(D1, D2, b)``. Positions are in angstrom.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

DISTANCE_TOLERANCE_A = 0.01
NEAREST_NEIGHBOUR_A = 3.40

# C2 rotation about b in the (D1, D2, b) frame.
C2_B = np.diag([-1.0, -1.0, 1.0])

_SPLIT = re.compile(r"[,\s]+")


class Orientation(str, enum.Enum):
    I = "I"
    II = "II"


def vec3(d1: float, d2: float, b: float) -> np.ndarray:
    v = np.array([d1, d2, b], dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"non-finite vector component in {v!r}")
    return v


@dataclass(frozen=True)
class NucleusSite:
    index: int
    position: tuple[float, float, float]
    distance: float
    orientation: Orientation = Orientation.I

    @property
    def r(self) -> np.ndarray:
        return np.array(self.position, dtype=float)

    @classmethod
    def from_position(cls, index: int, position: Sequence[float],
                      orientation: Orientation = Orientation.I) -> "NucleusSite":
        p = vec3(*position)
        return cls(int(index), tuple(float(x) for x in p), float(np.linalg.norm(p)),
                   Orientation(orientation))


@dataclass(frozen=True)
class Cluster:
    """Sites sorted by distance (ties, equal to 1e-4 A, broken by index)."""

    sites: tuple[NucleusSite, ...]
    orientation: Orientation = Orientation.I

    def __post_init__(self):
        idx = [s.index for s in self.sites]
        if len(set(idx)) != len(idx):
            raise ValidationError("duplicate site indices in cluster")

    def __len__(self) -> int:
        return len(self.sites)

    def __iter__(self):
        return iter(self.sites)

    def __getitem__(self, i):
        return self.sites[i]

    @property
    def positions(self) -> np.ndarray:
        """``(n, 3)`` array of positions in angstrom."""
        return np.array([s.position for s in self.sites], dtype=float).reshape(-1, 3)

    @property
    def distances(self) -> np.ndarray:
        return np.array([s.distance for s in self.sites], dtype=float)


def sort_sites(sites: Iterable[NucleusSite]) -> tuple[NucleusSite, ...]:
    return tuple(sorted(sites, key=lambda s: (round(s.distance, 4), s.index)))


def make_cluster(sites: Iterable[NucleusSite],
                 orientation: Orientation = Orientation.I) -> Cluster:
    return Cluster(sort_sites(sites), Orientation(orientation))


def parse_cluster(text: str, orientation: Orientation = Orientation.I,
                  source: str = "<string>") -> Cluster:
    """Parse position records ``index, distance, D1, D2, b``.

    Separators may be commas and/or whitespace; ``#`` starts a comment line.
    The tabulated distance must agree with the norm of the position to
    within 0.01 angstrom.
    """
    sites = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f for f in _SPLIT.split(line) if f]
        if len(fields) != 5:
            raise ValidationError(
                f"{source}:{lineno}: expected 5 columns (index, distance, D1, D2, b), "
                f"got {len(fields)}")
        try:
            index = int(fields[0])
            dist, d1, d2, b = (float(f) for f in fields[1:])
        except ValueError as exc:
            raise ValidationError(f"{source}:{lineno}: {exc}") from None
        if index <= 0:
            raise ValidationError(f"{source}:{lineno}: site index must be positive")
        try:
            site = NucleusSite.from_position(index, (d1, d2, b), orientation)
        except ValidationError as exc:
            raise ValidationError(f"{source}:{lineno}: {exc}") from None
        if abs(site.distance - dist) > DISTANCE_TOLERANCE_A:
            raise ValidationError(
                f"{source}:{lineno}: distance {dist:.4f} A inconsistent with position "
                f"norm {site.distance:.4f} A (tolerance {DISTANCE_TOLERANCE_A} A)")
        sites.append(site)
    if not sites:
        raise ValidationError("empty cluster")
    return make_cluster(sites, orientation)


def load_cluster(path: str | Path, orientation: Orientation = Orientation.I) -> Cluster:
    """Read a position file.

    An orientation-II cluster is obtained by rotating the file's
    orientation-I positions, see :func:`c2_cluster`.
    """
    path = Path(path)
    cluster = parse_cluster(path.read_text(), Orientation.I, source=str(path))
    if Orientation(orientation) is Orientation.II:
        return c2_cluster(cluster)
    return cluster


def format_cluster(cluster: Cluster, decimals: int = 4) -> str:
    lines = ["# index, distance_A, D1_A, D2_A, b_A"]
    for s in cluster:
        d1, d2, b = s.position
        lines.append(f"{s.index}, {s.distance:.{decimals}f}, {d1:.{decimals}f}, "
                     f"{d2:.{decimals}f}, {b:.{decimals}f}")
    return "\n".join(lines) + "\n"


def c2_about_b(site: NucleusSite) -> NucleusSite:
    """Map an orientation-I site onto its orientation-II image, (d1, d2, b) -> (-d1, -d2, b)."""
    if site.orientation is not Orientation.I:
        raise ValidationError("c2_about_b expects an orientation-I site")
    d1, d2, b = site.position
    return replace(site, position=(-d1, -d2, b), orientation=Orientation.II)


def c2_cluster(cluster: Cluster) -> Cluster:
    return Cluster(tuple(c2_about_b(s) for s in cluster.sites), Orientation.II)


def truncate_cluster(cluster: Cluster, n: int) -> Cluster:
    if n < 1:
        raise ValidationError("cluster size must be positive")
    if n > len(cluster):
        raise ValidationError(f"requested {n} sites but the cluster holds {len(cluster)}")
    return Cluster(cluster.sites[:n], cluster.orientation)
