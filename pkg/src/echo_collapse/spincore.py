"""Er3+ moments, dipolar fields and per-nucleus modulation parameters.

Effective spin-1/2 convention: H = mu_B B.g.S. The dopant is taken in its
lowest Zeeman state, whose moment expectation is

    <mu> = (mu_B / 2) g g^T B / |g^T B|.

Each 89Y nucleus sees the bias field plus the dopant dipolar field; the
ground/excited-state total fields set the nuclear Zeeman splittings and
the branching contrast rho = sin^2(angle between them).
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import constants as sc

from .errors import ValidationError
from .geometry import C2_B, Cluster, NucleusSite, Orientation

ANGSTROM = 1e-10


class Level(str, enum.Enum):
    ground = "ground"
    excited = "excited"


@dataclass(frozen=True)
class PhysicalConstants:
    mu_Y_over_h: float = 2.1e6          # Hz/T, 89Y
    mu0: float = sc.mu_0                # T m / A
    mu_B: float = sc.physical_constants["Bohr magneton"][0]   # J/T
    n_Y: float = 1.83e22                # yttrium density, cm^-3

    @property
    def n_Y_per_A3(self) -> float:
        return self.n_Y * 1e-24


DEFAULT_CONSTANTS = PhysicalConstants()


@dataclass(frozen=True, eq=False)
class GTensor:
    matrix: np.ndarray
    level: Level = Level.ground
    orientation: Orientation = Orientation.I

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise ValidationError("g-tensor must be a finite 3x3 matrix")
        # |g^T u| > 0 for every unit u  <=>  g is non-singular.
        if np.linalg.svd(m, compute_uv=False).min() <= 1e-12 * max(1.0, np.abs(m).max()):
            raise ValidationError("g-tensor is singular: some field direction gives zero splitting")
        object.__setattr__(self, "matrix", m)

    def g_eff(self, direction: Sequence[float]) -> float:
        u = np.asarray(direction, dtype=float)
        return float(np.linalg.norm(self.matrix.T @ (u / np.linalg.norm(u))))

    @property
    def g_max(self) -> float:
        return float(np.linalg.svd(self.matrix, compute_uv=False).max())

    def c2(self) -> "GTensor":
        """Tensor of the other magnetic subsite (C2 about b)."""
        other = Orientation.II if self.orientation is Orientation.I else Orientation.I
        return GTensor(C2_B @ self.matrix @ C2_B, self.level, other)


@dataclass(frozen=True)
class GTensorSet:
    ground_I: GTensor
    excited_I: GTensor

    def for_orientation(self, orientation: Orientation) -> tuple[GTensor, GTensor]:
        if Orientation(orientation) is Orientation.I:
            return self.ground_I, self.excited_I
        return self.ground_I.c2(), self.excited_I.c2()


_GLINE = re.compile(r"^\s*(\w+)\s*[=:]\s*(.+?)\s*$")


def parse_gtensors(text: str, source: str = "<string>") -> GTensorSet:
    """Parse ``name = 9 numbers`` records (``ground_I`` and ``excited_I``)."""
    found: dict[str, np.ndarray] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _GLINE.match(line)
        if not m:
            raise ValidationError(f"{source}:{lineno}: expected 'name = 9 numbers'")
        name, rest = m.group(1), m.group(2)
        try:
            values = [float(x) for x in re.split(r"[,\s]+", rest) if x]
        except ValueError as exc:
            raise ValidationError(f"{source}:{lineno}: {exc}") from None
        if len(values) != 9:
            raise ValidationError(f"{source}:{lineno}: {name} needs 9 numbers, got {len(values)}")
        found[name] = np.array(values).reshape(3, 3)
    missing = {"ground_I", "excited_I"} - found.keys()
    if missing:
        raise ValidationError(f"{source}: missing g-tensor(s) {sorted(missing)}")
    return GTensorSet(GTensor(found["ground_I"], Level.ground, Orientation.I),
                      GTensor(found["excited_I"], Level.excited, Orientation.I))


def load_gtensors(path: str | Path) -> GTensorSet:
    path = Path(path)
    return parse_gtensors(path.read_text(), source=str(path))


@dataclass(frozen=True, eq=False)
class FieldConfig:
    """Bias field: magnitude in tesla and unit direction in (D1, D2, b)."""

    magnitude: float
    direction: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (3,) or not np.all(np.isfinite(d)):
            raise ValidationError("field direction must be a finite 3-vector")
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ValidationError("field direction must be a unit vector")
        if not (np.isfinite(self.magnitude) and self.magnitude >= 0):
            raise ValidationError("field magnitude must be >= 0")
        object.__setattr__(self, "direction", d)

    @classmethod
    def from_angles(cls, magnitude_T: float, angle_from_D1_deg: float = 50.0,
                    out_of_plane_deg: float = 0.0) -> "FieldConfig":
        a, e = np.radians(angle_from_D1_deg), np.radians(out_of_plane_deg)
        d = np.array([np.cos(e) * np.cos(a), np.cos(e) * np.sin(a), np.sin(e)])
        return cls(float(magnitude_T), d / np.linalg.norm(d))

    @property
    def vector(self) -> np.ndarray:
        return self.magnitude * self.direction


@dataclass(frozen=True)
class ZeroFieldPolicy:
    """How to orient the dopant moments when the bias field is exactly zero.

    The moments are frozen to the values they take in a small reference field
    (default 1 uT); ``direction=None`` means the configured field direction.
    """

    reference_field_T: float = 1e-6
    direction: tuple[float, float, float] | None = None


@dataclass(frozen=True, eq=False)
class ErMoment:
    mu_g: np.ndarray
    mu_e: np.ndarray


@dataclass(frozen=True)
class ModulationParams:
    rho: float
    delta_g: float      # rad/s
    delta_e: float      # rad/s


def er_moment(g: GTensor, field: FieldConfig, consts: PhysicalConstants = DEFAULT_CONSTANTS
              ) -> np.ndarray:
    """Moment expectation [J/T] of the lowest Zeeman state."""
    if field.magnitude <= 0:
        raise ValidationError(
            "er_moment is undefined at zero field; use moments_for_field with a ZeroFieldPolicy")
    b = field.vector
    gtb = g.matrix.T @ b
    return 0.5 * consts.mu_B * (g.matrix @ gtb) / np.linalg.norm(gtb)


def moments_for_field(gset: GTensorSet, field: FieldConfig, orientation: Orientation,
                      policy: ZeroFieldPolicy = ZeroFieldPolicy(),
                      consts: PhysicalConstants = DEFAULT_CONSTANTS) -> ErMoment:
    g, e = gset.for_orientation(orientation)
    ref = field
    if field.magnitude == 0:
        d = field.direction if policy.direction is None else np.asarray(policy.direction, float)
        ref = FieldConfig(policy.reference_field_T, d / np.linalg.norm(d))
    return ErMoment(er_moment(g, ref, consts), er_moment(e, ref, consts))


def dipolar_field(mu: np.ndarray, r: np.ndarray,
                  consts: PhysicalConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Field [T] of point dipole ``mu`` [J/T] at position(s) ``r`` [angstrom].

    ``r`` may be a single vector or an ``(n, 3)`` array.
    """
    r = np.asarray(r, dtype=float) * ANGSTROM
    mu = np.asarray(mu, dtype=float)
    rn = np.linalg.norm(r, axis=-1, keepdims=True)
    if np.any(rn == 0):
        raise ValidationError("dipolar field is singular at r = 0")
    pref = consts.mu0 / (4.0 * np.pi)
    mdotr = (r @ mu)[..., None]
    return -pref * (mu / rn**3 - 3.0 * mdotr * r / rn**5)


def _sin2_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na2 = np.einsum("...i,...i->...", a, a)
    nb2 = np.einsum("...i,...i->...", b, b)
    cross = np.cross(a, b)
    return np.einsum("...i,...i->...", cross, cross) / (na2 * nb2)


def modulation_arrays(positions: np.ndarray, moments: ErMoment, field: FieldConfig,
                      consts: PhysicalConstants = DEFAULT_CONSTANTS
                      ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised ``(rho, delta_g, delta_e)`` for an ``(n, 3)`` array of positions."""
    b0 = field.vector
    bg = b0 + dipolar_field(moments.mu_g, positions, consts)
    be = b0 + dipolar_field(moments.mu_e, positions, consts)
    ng = np.linalg.norm(bg, axis=-1)
    ne = np.linalg.norm(be, axis=-1)
    if np.any((ng == 0) | (ne == 0)):
        raise ValidationError("total field vanishes at a nucleus; branching contrast undefined")
    rho = np.clip(_sin2_between(bg, be), 0.0, 1.0)
    two_pi_gamma = 2.0 * np.pi * consts.mu_Y_over_h
    return rho, two_pi_gamma * ng, two_pi_gamma * ne


def modulation_params(site: NucleusSite, moments: ErMoment, field: FieldConfig,
                      consts: PhysicalConstants = DEFAULT_CONSTANTS) -> ModulationParams:
    rho, dg, de = modulation_arrays(site.r[None, :], moments, field, consts)
    return ModulationParams(float(rho[0]), float(dg[0]), float(de[0]))


def cluster_params(cluster: Cluster, moments: ErMoment, field: FieldConfig,
                   consts: PhysicalConstants = DEFAULT_CONSTANTS) -> list[ModulationParams]:
    if len(cluster) == 0:
        raise ValidationError("empty cluster")
    rho, dg, de = modulation_arrays(cluster.positions, moments, field, consts)
    return [ModulationParams(float(a), float(b), float(c)) for a, b, c in zip(rho, dg, de)]
