"""Echo envelope from a set of modulating nuclei.

Single nucleus:  V_i(t) = 1 - rho/2 [1 - cos(D t)] [1 - cos(D' t)]
Cluster:         V_tot  = prod_i V_i
Intensity:       I(t)   = V_tot(t)^2 exp(-4 t / T2)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import curve_fit

from .errors import ConvergenceError, ValidationError
from .spincore import ModulationParams

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Pulse delays t12 in seconds, strictly increasing and >= 0."""

    t12: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t12, dtype=float).ravel()
        if t.size == 0:
            raise ValidationError("empty time grid")
        if not np.all(np.isfinite(t)) or t[0] < 0 or np.any(np.diff(t) <= 0):
            raise ValidationError("t12 must be finite, >= 0 and strictly increasing")
        object.__setattr__(self, "t12", t)

    @classmethod
    def uniform(cls, t_max: float = 150e-6, n: int = 1501, t_min: float = 0.0) -> "TimeGrid":
        return cls(np.linspace(t_min, t_max, n))

    def __len__(self) -> int:
        return self.t12.size


def _as_times(grid) -> np.ndarray:
    return grid.t12 if isinstance(grid, TimeGrid) else TimeGrid(np.atleast_1d(grid)).t12


def single_modulation(p: ModulationParams, t12):
    t = np.asarray(t12, dtype=float)
    if np.any(t < 0):
        raise ValidationError("t12 must be >= 0")
    v = 1.0 - 0.5 * p.rho * (1.0 - np.cos(p.delta_g * t)) * (1.0 - np.cos(p.delta_e * t))
    return float(v) if v.ndim == 0 else v


def total_envelope(params: Sequence[ModulationParams], grid) -> np.ndarray:
    """Product of single-nucleus modulations, accumulated in list order."""
    if len(params) == 0:
        raise ValidationError("at least one nucleus is required")
    t = _as_times(grid)
    v = np.ones_like(t)
    for p in params:
        v *= single_modulation(p, t)
    return v


def echo_intensity(v_tot, T2: float, grid) -> np.ndarray:
    if not T2 > 0:
        raise ValidationError("T2 must be positive")
    t = _as_times(grid)
    v = np.asarray(v_tot, dtype=float)
    if v.shape != t.shape:
        raise ValidationError("envelope and time grid lengths differ")
    return v**2 * np.exp(-4.0 * t / T2)


def two_subsite_envelope(params_I: Sequence[ModulationParams],
                         params_II: Sequence[ModulationParams], grid) -> np.ndarray:
    """Coherent average of the two magnetic-subsite envelopes."""
    return 0.5 * (total_envelope(params_I, grid) + total_envelope(params_II, grid))


def apparent_decay_time(curve, window: tuple[float, float] = (2e-6, 25e-6),
                        convention: str = "intensity") -> float:
    """Single-exponential time constant of ``curve.intensity`` over ``window`` [s].

    ``convention="intensity"`` returns tau with I ~ exp(-t / tau);
    ``"t2"`` returns 4 tau, the time comparable to T2 in exp(-4 t / T2).
    Positive data are fitted as a straight line in log-intensity; otherwise
    the exponential is fitted directly.
    """
    if convention not in ("intensity", "t2"):
        raise ValidationError(f"unknown convention {convention!r}")
    t = np.asarray(curve.t12, dtype=float)
    y = np.asarray(curve.intensity, dtype=float)
    lo, hi = window
    m = (t >= lo) & (t <= hi)
    mask = getattr(curve, "mask", None)
    if mask is not None:
        m &= np.asarray(mask, dtype=bool)
    if m.sum() < 3:
        raise ValidationError("need at least 3 samples inside the window")
    tw, yw = t[m], y[m]
    if np.all(yw > 0):
        slope, _ = np.polyfit(tw, np.log(yw), 1)
    else:
        log.info("non-positive intensities in window; using a direct exponential fit")
        scale = np.abs(yw).max()
        if scale == 0:
            raise ConvergenceError("all-zero curve has no decay time")
        t0 = tw[0]
        try:
            (a, k), _ = curve_fit(lambda x, a, k: a * np.exp(-k * (x - t0)), tw, yw / scale,
                                  p0=(1.0, 1.0 / (hi - lo)), maxfev=10000)
        except RuntimeError as exc:
            raise ConvergenceError(f"exponential fit failed: {exc}") from None
        slope = -k
    span = tw[-1] - tw[0]
    if not slope < 0 or -slope * span < 1e-9:
        raise ConvergenceError("no decay in window: time constant is unbounded")
    tau = -1.0 / slope
    return 4.0 * tau if convention == "t2" else tau
