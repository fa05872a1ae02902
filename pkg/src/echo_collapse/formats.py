"""File formats and run configuration.

Curve CSV   ``t12_us,intensity``
Params CSV  ``index,distance_A,rho,delta_g_kHz,delta_e_kHz,orientation``
Fit JSON    ``{t2_us, scales, rms, config, version, ...}``

All writes go to a temporary file in the target directory, then replace
the target.
"""

from __future__ import annotations

import configparser
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .errors import ValidationError
from .fit import DecayCurve
from .spincore import FieldConfig, ModulationParams, ZeroFieldPolicy

CURVE_HEADER = "t12_us,intensity"
PARAMS_HEADER = "index,distance_A,rho,delta_g_kHz,delta_e_kHz,orientation"
TWO_PI = 2.0 * math.pi


def data_path(name: str) -> Path:
    return Path(str(resources.files("echo_collapse") / "data" / name))


DEFAULT_CLUSTER = "y_cluster_site1_I.txt"
DEFAULT_GTENSORS = "gtensors_site1.txt"


def atomic_write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _g12(x: float) -> str:
    return f"{x:.12g}"


# --- curves ------------------------------------------------------------------

def format_curve(t12_s: Sequence[float], intensity: Sequence[float]) -> str:
    rows = [CURVE_HEADER]
    rows += [f"{_g12(t * 1e6)},{_g12(y)}" for t, y in zip(t12_s, intensity)]
    return "\n".join(rows) + "\n"


def write_curve(path, t12_s, intensity) -> Path:
    return atomic_write_text(path, format_curve(t12_s, intensity))


def parse_curve(text: str, label: str = "curve", source: str = "<string>",
                valid_from: float = 2e-6) -> DecayCurve:
    lines = text.splitlines()
    if not lines or lines[0].strip().lstrip("﻿") != CURVE_HEADER:
        raise ValidationError(f"{source}:1: expected header {CURVE_HEADER!r}")
    t, y = [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ValidationError(f"{source}:{lineno}: expected 2 comma-separated columns")
        try:
            t.append(float(parts[0]) * 1e-6)
            y.append(float(parts[1]))
        except ValueError as exc:
            raise ValidationError(f"{source}:{lineno}: {exc}") from None
    if not t:
        raise ValidationError(f"{source}: no samples")
    try:
        return DecayCurve(label, np.array(t), np.array(y), valid_from)
    except ValidationError as exc:
        raise ValidationError(f"{source}: {exc}") from None


def read_curve(path, label: str | None = None, valid_from: float = 2e-6) -> DecayCurve:
    path = Path(path)
    return parse_curve(path.read_text(), label or path.stem, str(path), valid_from)


# --- per-nucleus parameters --------------------------------------------------

def format_params(rows: Iterable[tuple[int, float, ModulationParams, str]]) -> str:
    out = [PARAMS_HEADER]
    for index, dist, p, orientation in rows:
        out.append(",".join([str(index), _g12(dist), _g12(p.rho),
                             _g12(p.delta_g / TWO_PI / 1e3), _g12(p.delta_e / TWO_PI / 1e3),
                             orientation]))
    return "\n".join(out) + "\n"


def parse_params(text: str) -> list[tuple[int, float, ModulationParams, str]]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != PARAMS_HEADER:
        raise ValidationError(f"expected header {PARAMS_HEADER!r}")
    rows = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        f = raw.split(",")
        if len(f) != 6:
            raise ValidationError(f"line {lineno}: expected 6 columns")
        rows.append((int(f[0]), float(f[1]),
                     ModulationParams(float(f[2]), float(f[3]) * 1e3 * TWO_PI,
                                      float(f[4]) * 1e3 * TWO_PI), f[5].strip()))
    return rows


def write_json(path, payload: dict) -> Path:
    return atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=False) + "\n")


# --- configuration -----------------------------------------------------------

@dataclass
class RunConfig:
    field_mT: float = 0.0
    angle_from_D1_deg: float = 50.0
    out_of_plane_deg: float = 0.0
    cluster_file: Path = field(default_factory=lambda: data_path(DEFAULT_CLUSTER))
    n_sites: int = 100
    gtensor_file: Path = field(default_factory=lambda: data_path(DEFAULT_GTENSORS))
    T2_us: float | None = 58.0          # None means "fit"
    zero_field_reference_uT: float = 1.0
    zero_field_angle_from_D1_deg: float | None = None
    zero_field_out_of_plane_deg: float = 0.0
    t_max_us: float = 150.0
    n_samples: int = 1501
    valid_from_us: float = 2.0
    log_domain: bool = False
    sphere_r0_A: float = 3.4
    sphere_n_Y_per_cm3: float = 1.83e22
    sphere_delta0_kHz: float = 600.0
    sphere_deltaS_kHz: float = 80.0
    sphere_rho_bar: float = 0.1
    sphere_include_T2: bool = True
    sphere_starts: int = 24
    params_n_sites: int = 500
    curve_csv: Path = Path("curve.csv")
    params_csv: Path = Path("params.csv")
    fit_json: Path = Path("fit.json")
    sphere_json: Path = Path("sphere.json")
    figures_dir: Path = Path("figures")
    source: str = "<defaults>"

    @property
    def field(self) -> FieldConfig:
        return FieldConfig.from_angles(self.field_mT * 1e-3, self.angle_from_D1_deg,
                                       self.out_of_plane_deg)

    def field_at(self, field_mT: float) -> FieldConfig:
        return FieldConfig.from_angles(field_mT * 1e-3, self.angle_from_D1_deg,
                                       self.out_of_plane_deg)

    @property
    def zero_field_policy(self) -> ZeroFieldPolicy:
        direction = None
        if self.zero_field_angle_from_D1_deg is not None:
            direction = tuple(FieldConfig.from_angles(
                1.0, self.zero_field_angle_from_D1_deg,
                self.zero_field_out_of_plane_deg).direction)
        return ZeroFieldPolicy(self.zero_field_reference_uT * 1e-6, direction)

    @property
    def time_grid_s(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max_us * 1e-6, self.n_samples)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (str(v) if isinstance(v, Path) else v) for k, v in d.items()}


# (section, key, attribute, converter)
_SCHEMA = [
    ("field", "field_mT", "field_mT", float),
    ("field", "angle_from_D1_deg", "angle_from_D1_deg", float),
    ("field", "out_of_plane_deg", "out_of_plane_deg", float),
    ("cluster", "cluster_file", "cluster_file", Path),
    ("cluster", "n_sites", "n_sites", int),
    ("gtensor", "gtensor_file", "gtensor_file", Path),
    ("model", "T2_us", "T2_us", "t2"),
    ("model", "zero_field_reference_uT", "zero_field_reference_uT", float),
    ("model", "zero_field_angle_from_D1_deg", "zero_field_angle_from_D1_deg", float),
    ("model", "zero_field_out_of_plane_deg", "zero_field_out_of_plane_deg", float),
    ("grid", "t_max_us", "t_max_us", float),
    ("grid", "n_samples", "n_samples", int),
    ("fit", "valid_from_us", "valid_from_us", float),
    ("fit", "log_domain", "log_domain", bool),
    ("sphere", "r0_A", "sphere_r0_A", float),
    ("sphere", "n_Y_per_cm3", "sphere_n_Y_per_cm3", float),
    ("sphere", "delta0_kHz", "sphere_delta0_kHz", float),
    ("sphere", "deltaS_kHz", "sphere_deltaS_kHz", float),
    ("sphere", "rho_bar", "sphere_rho_bar", float),
    ("sphere", "include_T2", "sphere_include_T2", bool),
    ("sphere", "starts", "sphere_starts", int),
    ("params", "n_sites", "params_n_sites", int),
    ("output", "curve_csv", "curve_csv", Path),
    ("output", "params_csv", "params_csv", Path),
    ("output", "fit_json", "fit_json", Path),
    ("output", "sphere_json", "sphere_json", Path),
    ("output", "figures_dir", "figures_dir", Path),
]


def _key_line(text: str, section: str, key: str) -> int:
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
        elif current == section.lower() and "=" in line:
            if line.split("=", 1)[0].strip().lower() == key.lower():
                return lineno
    return 0


def parse_config(text: str, source: str = "<string>", base_dir: Path | None = None) -> RunConfig:
    """Parse an INI-style run configuration; errors carry ``file:line`` prefixes."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ValidationError(f"{source}: {exc}") from None
    cfg = RunConfig(source=source)
    known = {(s, k) for s, k, _, _ in _SCHEMA}
    for section in cp.sections():
        for key in cp[section]:
            if (section, key) not in known:
                raise ValidationError(f"{source}:{_key_line(text, section, key)}: "
                                      f"unknown key [{section}] {key}")
    for section, key, attr, conv in _SCHEMA:
        if not cp.has_option(section, key):
            continue
        raw = cp.get(section, key).strip()
        where = f"{source}:{_key_line(text, section, key)}"
        try:
            if conv == "t2":
                value = None if raw.lower() == "fit" else float(raw)
            elif conv is bool:
                value = cp.getboolean(section, key)
            elif conv is Path:
                value = Path(raw)
                if base_dir is not None and not value.is_absolute():
                    value = base_dir / value
            else:
                value = conv(raw)
        except ValueError as exc:
            raise ValidationError(f"{where}: [{section}] {key}: {exc}") from None
        setattr(cfg, attr, value)
        try:
            _check(cfg, attr)
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}") from None
    return cfg


def _check(cfg: RunConfig, attr: str) -> None:
    v = getattr(cfg, attr)
    if attr.endswith("_deg") and v is not None and not -180.0 <= v <= 180.0:
        raise ValidationError(f"{attr} = {v} outside [-180, 180] degrees")
    if attr == "field_mT" and not (math.isfinite(v) and v >= 0):
        raise ValidationError("field_mT must be >= 0")
    if attr in ("n_sites", "params_n_sites", "sphere_starts") and v < 1:
        raise ValidationError(f"{attr} must be >= 1")
    if attr == "n_samples" and v < 2:
        raise ValidationError("n_samples must be >= 2")
    if attr == "T2_us" and v is not None and not v > 0:
        raise ValidationError("T2_us must be positive or 'fit'")
    if attr in ("t_max_us", "zero_field_reference_uT", "sphere_r0_A", "sphere_n_Y_per_cm3") \
            and not v > 0:
        raise ValidationError(f"{attr} must be positive")
    if attr in ("cluster_file", "gtensor_file") and not Path(v).is_file():
        raise ValidationError(f"{attr}: no such file {v}")


def validate_config(cfg: RunConfig) -> RunConfig:
    for _, _, attr, _ in _SCHEMA:
        _check(cfg, attr)
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return validate_config(RunConfig())
    path = Path(path)
    return validate_config(parse_config(path.read_text(), str(path), path.parent))


def fit_payload(result, cfg: RunConfig | None, curve_files: Sequence[str] = (),
                fields_mT: Sequence[float] = ()) -> dict:
    return {
        "t2_us": result.T2 * 1e6,
        "scales": list(result.scales),
        "rms": list(result.rms),
        "labels": list(result.labels),
        "curve_files": [str(c) for c in curve_files],
        "fields_mT": list(fields_mT),
        "objective": result.objective,
        "converged": result.converged,
        "n_evaluations": result.n_evaluations,
        "log_domain": result.log_domain,
        "config": cfg.to_dict() if cfg is not None else None,
        "version": __version__,
    }
