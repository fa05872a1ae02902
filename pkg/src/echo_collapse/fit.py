"""Cluster forward model and the shared-T2 multi-curve fit."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from .echo import echo_intensity, total_envelope
from .errors import ConvergenceError, ValidationError
from .geometry import Cluster, Orientation, c2_cluster
from .parallel import worker_count
from .spincore import (DEFAULT_CONSTANTS, FieldConfig, GTensorSet, ModulationParams,
                       PhysicalConstants, ZeroFieldPolicy, cluster_params, moments_for_field)

log = logging.getLogger(__name__)

VALID_FROM = 2e-6
T2_BOUNDS = (5e-6, 500e-6)


@dataclass(eq=False)
class DecayCurve:
    """Echo intensity versus t12 [s]; samples before ``valid_from`` are masked out."""

    label: str
    t12: np.ndarray
    intensity: np.ndarray
    valid_from: float = VALID_FROM

    def __post_init__(self):
        self.t12 = np.asarray(self.t12, dtype=float).ravel()
        self.intensity = np.asarray(self.intensity, dtype=float).ravel()
        if self.t12.shape != self.intensity.shape:
            raise ValidationError(f"curve {self.label!r}: t12 and intensity lengths differ")
        if self.t12.size == 0:
            raise ValidationError(f"curve {self.label!r} is empty")
        if np.any(np.diff(self.t12) <= 0) or np.any(self.t12 < 0):
            raise ValidationError(f"curve {self.label!r}: t12 must be >= 0 and strictly increasing")
        if not (np.all(np.isfinite(self.t12)) and np.all(np.isfinite(self.intensity))):
            raise ValidationError(f"curve {self.label!r}: non-finite values")
        if np.any(self.intensity < 0):
            raise ValidationError(f"curve {self.label!r}: negative intensity")

    @property
    def mask(self) -> np.ndarray:
        return self.t12 >= self.valid_from


@dataclass
class FitResult:
    T2: float
    scales: list[float]
    rms: list[float]
    labels: list[str]
    objective: float
    converged: bool
    n_evaluations: int
    log_domain: bool = False
    extra: dict = field(default_factory=dict)


def subsite_params(cluster: Cluster, field_cfg: FieldConfig, gset: GTensorSet,
                   policy: ZeroFieldPolicy = ZeroFieldPolicy(),
                   consts: PhysicalConstants = DEFAULT_CONSTANTS
                   ) -> tuple[list[ModulationParams], list[ModulationParams]]:
    """Modulation parameters for orientation I (``cluster``) and its C2 image."""
    if cluster.orientation is not Orientation.I:
        raise ValidationError("forward model expects the orientation-I cluster")
    out = []
    for orientation, cl in ((Orientation.I, cluster), (Orientation.II, c2_cluster(cluster))):
        mom = moments_for_field(gset, field_cfg, orientation, policy, consts)
        out.append(cluster_params(cl, mom, field_cfg, consts))
    return out[0], out[1]


def forward_envelope(field_cfg: FieldConfig, cluster: Cluster, gset: GTensorSet, grid,
                     policy: ZeroFieldPolicy = ZeroFieldPolicy(),
                     consts: PhysicalConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Two-subsite averaged V_tot on ``grid``."""
    p1, p2 = subsite_params(cluster, field_cfg, gset, policy, consts)
    return 0.5 * (total_envelope(p1, grid) + total_envelope(p2, grid))


def forward_model(field_cfg: FieldConfig, cluster: Cluster, gset: GTensorSet, T2: float, grid,
                  policy: ZeroFieldPolicy = ZeroFieldPolicy(),
                  consts: PhysicalConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Normalised echo intensity V_tot^2 exp(-4 t / T2); ``T2=inf`` disables the decay."""
    v = forward_envelope(field_cfg, cluster, gset, grid, policy, consts)
    return echo_intensity(v, T2, grid)


def optimal_scale(model: np.ndarray, data: np.ndarray) -> float:
    mm = float(np.dot(model, model))
    if mm == 0:
        raise ConvergenceError("model vanishes on every valid sample")
    return float(np.dot(model, data)) / mm


def _scale_and_cost(env2, t, d, T2, log_domain):
    m = env2 * np.exp(-4.0 * t / T2)
    if log_domain:
        lm, ld = np.log(m), np.log(d)
        ls = float(np.mean(ld - lm))
        r = lm + ls - ld
        return math.exp(ls), float(r @ r)
    s = optimal_scale(m, d)
    r = s * m - d
    return s, float(r @ r)


def fit_shared_t2(curves: Sequence[DecayCurve], fields: Sequence[FieldConfig], cluster: Cluster,
                  gset: GTensorSet, policy: ZeroFieldPolicy = ZeroFieldPolicy(),
                  consts: PhysicalConstants = DEFAULT_CONSTANTS, log_domain: bool = False,
                  bounds: tuple[float, float] = T2_BOUNDS, xtol: float = 1e-9,
                  envelopes: Sequence[np.ndarray] | None = None) -> FitResult:
    """One T2 for all curves, one free scale per curve.

    The envelopes do not depend on T2, so they are computed once. For a given
    T2 each scale has the closed form sum(m d) / sum(m^2); the remaining
    one-dimensional objective is scanned on a log grid and refined with a
    bounded Brent search.
    """
    if len(curves) == 0:
        raise ValidationError("at least one curve is required")
    if len(fields) != len(curves):
        raise ValidationError("need one field per curve")
    data = []
    for c in curves:
        m = c.mask
        if m.sum() == 0:
            raise ValidationError(f"curve {c.label!r}: no valid samples")
        if m.sum() < 5:
            raise ValidationError(f"curve {c.label!r}: fewer than 5 valid samples")
        d = c.intensity[m]
        if log_domain and np.any(d <= 0):
            raise ValidationError(f"curve {c.label!r}: log-domain fit needs positive data")
        data.append((c.t12[m], d))

    if envelopes is None:
        def env2(i):
            v = forward_envelope(fields[i], cluster, gset, data[i][0], policy, consts)
            return v * v
        with ThreadPoolExecutor(max_workers=worker_count()) as ex:
            envs = list(ex.map(env2, range(len(curves))))
    else:
        envs = [np.asarray(e, float)[c.mask] ** 2 for e, c in zip(envelopes, curves)]

    n_eval = 0

    def objective(log_t2):
        nonlocal n_eval
        n_eval += 1
        T2 = math.exp(log_t2)
        return sum(_scale_and_cost(e, t, d, T2, log_domain)[1] for e, (t, d) in zip(envs, data))

    lo, hi = math.log(bounds[0]), math.log(bounds[1])
    grid = np.linspace(lo, hi, 61)
    vals = np.array([objective(x) for x in grid])
    k = int(np.argmin(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(objective, bounds=(a, b), method="bounded",
                                   options={"xatol": xtol, "maxiter": 500})
    if not res.success:
        raise ConvergenceError(f"T2 search failed: {res.message}")
    T2 = math.exp(res.x)
    if T2 <= bounds[0] * 1.0001 or T2 >= bounds[1] * 0.9999:
        log.warning("fitted T2 = %.4g s sits on the search bound", T2)
    scales, rms = [], []
    for e, (t, d) in zip(envs, data):
        s, cost = _scale_and_cost(e, t, d, T2, log_domain)
        scales.append(s)
        m = e * np.exp(-4.0 * t / T2)
        rms.append(float(np.sqrt(np.mean((s * m - d) ** 2))))
    return FitResult(T2, scales, rms, [c.label for c in curves], float(res.fun), True,
                     n_eval, log_domain)


def residual_report(result: FitResult, curves: Sequence[DecayCurve],
                    models: Sequence[np.ndarray]) -> dict:
    """Per-curve RMS and residual traces over the valid samples.

    ``models`` are the unscaled model intensities on each curve's full grid.
    Normalised residuals are (data - scale * model) / scale.
    """
    if not (len(curves) == len(models) == len(result.scales)):
        raise ValidationError("curves, models and fitted scales differ in number")
    per_curve = []
    for c, m, s in zip(curves, models, result.scales):
        m = np.asarray(m, dtype=float)
        if m.shape != c.t12.shape:
            raise ValidationError(f"curve {c.label!r}: model and data grids differ in length")
        mask = c.mask
        r = c.intensity[mask] - s * m[mask]
        per_curve.append({
            "label": c.label,
            "scale": s,
            "rms": float(np.sqrt(np.mean(r**2))),
            "max_abs": float(np.abs(r).max()),
            "t12_us": (c.t12[mask] * 1e6).tolist(),
            "normalized_residual": (r / s).tolist(),
        })
    total = math.fsum(p["rms"] ** 2 * len(p["t12_us"]) for p in per_curve)
    n = sum(len(p["t12_us"]) for p in per_curve)
    return {"t2_us": result.T2 * 1e6, "curves": per_curve,
            "rms_total": math.sqrt(total / n) if n else 0.0}
