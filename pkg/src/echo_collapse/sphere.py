"""Angular-averaged (spherical) model of the superhyperfine collapse.

Nuclei are spread uniformly at density n_Y between the nearest-neighbour
distance r0 and a screening radius r_S, all with the same small branching
contrast rho_bar and a splitting that falls as 1/r^3 from Delta0 at r0.
Beyond r_S the bias field wins and nuclei decouple. For small contrast the
squared envelope becomes

    exp(-int_{r0}^{rS} rho_bar [1 - cos(Delta(r) t)]^2 4 pi r^2 n_Y dr)

which the substitution phi = (Delta0 t / 2)(r0 / r)^3 maps onto an integral
of sin^4(phi) / phi^2 between Delta_S t / 2 and Delta0 t / 2.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, optimize, special

from .errors import ConvergenceError, ValidationError
from .spincore import DEFAULT_CONSTANTS

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
RHO_BAR_LIMIT = 0.3
QUAD_RTOL = 1e-8


@dataclass(frozen=True)
class SphereParams:
    delta0: float                       # rad/s, splitting at r0
    deltaS: float                       # rad/s, splitting at the screening radius
    rho_bar: float
    r0: float = 3.4                     # angstrom
    n_Y: float = DEFAULT_CONSTANTS.n_Y  # cm^-3

    def __post_init__(self):
        if not (self.r0 > 0 and self.n_Y > 0):
            raise ValidationError("r0 and n_Y must be positive")
        if not (self.delta0 > self.deltaS >= 0):
            raise ValidationError("need delta0 > deltaS >= 0")
        if not (0 <= self.rho_bar <= 1):
            raise ValidationError("rho_bar must lie in [0, 1]")
        if self.rho_bar > RHO_BAR_LIMIT:
            warnings.warn(f"rho_bar = {self.rho_bar:.3g} exceeds {RHO_BAR_LIMIT}; the "
                          "small-contrast exponential form is unreliable", stacklevel=3)

    @property
    def density_A3(self) -> float:
        return self.n_Y * 1e-24


def splitting_profile(r, p: SphereParams):
    r = np.asarray(r, dtype=float)
    if np.any(r < p.r0):
        raise ValidationError("r must be >= r0")
    out = p.delta0 * (p.r0 / r) ** 3
    return float(out) if out.ndim == 0 else out


def screening_radius(p: SphereParams) -> float:
    """r_S = r0 (Delta0 / Delta_S)^(1/3); infinite when Delta_S = 0."""
    if p.deltaS == 0:
        warnings.warn("deltaS = 0: screening radius is infinite", stacklevel=2)
        return math.inf
    return p.r0 * (p.delta0 / p.deltaS) ** (1.0 / 3.0)


def decay_prefactor(p: SphereParams) -> float:
    """(8 pi / 3) n_Y r0^3 rho_bar Delta0 in 1/s; its inverse is the characteristic time."""
    return 8.0 * math.pi / 3.0 * p.density_A3 * p.r0**3 * p.rho_bar * p.delta0


def _grid(grid) -> np.ndarray:
    t = np.atleast_1d(np.asarray(getattr(grid, "t12", grid), dtype=float))
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise ValidationError("t12 must be finite and >= 0")
    return t


def _quad(f, a, b, tol=QUAD_RTOL):
    val, err = integrate.quad(f, a, b, epsabs=0.0, epsrel=tol, limit=200)
    if not np.isfinite(val) or err > max(1e-3 * tol, 1e3 * tol * abs(val)) + 1e-300:
        raise ConvergenceError(f"quadrature did not converge on [{a}, {b}] (err {err:.2e})")
    return val


def _sin4_integrand(phi):
    if phi == 0.0:
        return 0.0
    s = math.sin(phi)
    sinc = s / phi
    return sinc * sinc * s * s


def sin4_over_phi2_quad(lo: float, hi: float, tol: float = QUAD_RTOL) -> float:
    """int_lo^hi sin^4(phi) / phi^2 dphi by adaptive quadrature.

    The interval is split at the integrand zeros k*pi so each panel holds a
    single smooth lobe.
    """
    if hi < lo:
        return -sin4_over_phi2_quad(hi, lo, tol)
    if hi == lo:
        return 0.0
    k0, k1 = math.floor(lo / math.pi) + 1, math.ceil(hi / math.pi) - 1
    edges = [lo] + [k * math.pi for k in range(k0, k1 + 1)] + [hi]
    return math.fsum(_quad(_sin4_integrand, a, b, tol) for a, b in zip(edges[:-1], edges[1:])
                     if b > a)


def sin4_over_phi2_closed(lo, hi):
    """Same integral via the antiderivative -sin^4(phi)/phi + Si(2 phi) - Si(4 phi)/2.

    ``hi`` may be ``inf``; vectorised over array arguments.
    """
    def F(x):
        x = np.asarray(x, dtype=float)
        si2, _ = special.sici(2.0 * x)
        si4, _ = special.sici(4.0 * x)
        with np.errstate(divide="ignore", invalid="ignore"):
            head = np.where(x > 0, np.sin(x) ** 4 / np.where(x > 0, x, 1.0), 0.0)
        head = np.where(np.isinf(x), 0.0, head)
        return -head + si2 - 0.5 * si4

    return F(hi) - F(lo)


def _exponent_continuous(t: float, p: SphereParams, r_s: float) -> float:
    if t == 0 or p.rho_bar == 0:
        return 0.0
    a = p.delta0 * t * p.r0**3
    dens = p.density_A3

    def integrand(r):
        x = a / r**3
        c = 1.0 - math.cos(x)
        return c * c * r * r

    # (1 - cos x)^2 vanishes at x = 2 k pi: r_k = (a / (2 k pi))^(1/3).
    kmax = math.floor(a / (p.r0**3 * TWO_PI))
    kmin = math.ceil(a / (r_s**3 * TWO_PI))
    zeros = sorted(
        (a / (TWO_PI * k)) ** (1.0 / 3.0) for k in range(max(kmin, 1), kmax + 1))
    edges = [p.r0] + [z for z in zeros if p.r0 < z < r_s] + [r_s]
    total = math.fsum(_quad(integrand, lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))
    return p.rho_bar * 4.0 * math.pi * dens * total


def continuous_envelope(p: SphereParams, grid) -> np.ndarray:
    """Squared envelope from the radial integral (quadrature in r)."""
    t = _grid(grid)
    r_s = screening_radius(p)
    if not math.isfinite(r_s):
        raise ValidationError("continuous_envelope needs a finite screening radius")
    return np.exp(-np.array([_exponent_continuous(ti, p, r_s) for ti in t]))


def screened_decay(p: SphereParams, grid, method: str = "quad") -> np.ndarray:
    """Squared envelope from the sin^4(phi)/phi^2 form.

    ``method="quad"`` integrates adaptively panel by panel; ``"sici"`` uses the
    closed-form antiderivative (fast, used by the fitter). ``deltaS = 0`` is
    allowed and integrates from 0.
    """
    t = _grid(grid)
    lo, hi = 0.5 * p.deltaS * t, 0.5 * p.delta0 * t
    if method == "quad":
        integral = np.array([sin4_over_phi2_quad(a, b) for a, b in zip(lo, hi)])
    elif method == "sici":
        integral = sin4_over_phi2_closed(lo, hi)
    else:
        raise ValidationError(f"unknown method {method!r}")
    return np.exp(-decay_prefactor(p) * t * integral)


# --- fitting -----------------------------------------------------------------

DELTA0_BOUNDS = (TWO_PI * 100e3, TWO_PI * 5e6)
DELTAS_MIN = TWO_PI * 1e3
RHO_BOUNDS = (1e-6, RHO_BAR_LIMIT)


@dataclass
class SphereFit:
    params: SphereParams
    scale: float
    rms: float
    r_s: float
    converged: bool
    n_starts: int
    at_boundary: list[str]
    cost: float


def _model(x, t, base: SphereParams, T2: float | None):
    delta0, q, rho = x
    p = replace(base, delta0=delta0, deltaS=q * delta0, rho_bar=rho)
    y = screened_decay(p, t, method="sici")
    if T2 is not None:
        y = y * np.exp(-4.0 * t / T2)
    return y


def _modulating_count(p: SphereParams) -> float:
    """rho_bar times the number of nuclei in the shell [r0, r_S]."""
    r_s = p.r0 * (p.delta0 / max(p.deltaS, 1e-300)) ** (1.0 / 3.0)
    return p.rho_bar * 4.0 * math.pi / 3.0 * p.density_A3 * (r_s**3 - p.r0**3)


def _best_scale(m, d):
    mm = float(m @ m)
    return float(m @ d) / mm if mm > 0 else 0.0


def fit_sphere(curve, init: SphereParams, T2: float | None = 58e-6, n_starts: int = 24,
               max_nfev: int = 2000, workers: int | None = None) -> SphereFit:
    """Least-squares fit of (Delta0, Delta_S, rho_bar) plus a free scale.

    ``T2=None`` drops the exp(-4 t / T2) factor. The scale is eliminated in
    closed form for every trial parameter set.

    The data pin down rho_bar * Delta0 far better than either factor, and the
    cost along that valley has many narrow minima. Starts are therefore
    ``init`` plus ``n_starts - 1`` points spread log-uniformly in Delta0 across
    its bounds, each with rho_bar * Delta0 and Delta_S kept at their initial
    values.
    """
    t = np.asarray(curve.t12, dtype=float)
    d = np.asarray(curve.intensity, dtype=float)
    mask = np.asarray(getattr(curve, "mask", np.ones_like(t, bool)), dtype=bool)
    t, d = t[mask], d[mask]
    if t.size < 10:
        raise ValidationError("fit_sphere needs at least 10 valid samples")
    if n_starts < 1:
        raise ValidationError("n_starts must be >= 1")

    q_lo = DELTAS_MIN / DELTA0_BOUNDS[1]
    lower = np.array([DELTA0_BOUNDS[0], q_lo, RHO_BOUNDS[0]])
    upper = np.array([DELTA0_BOUNDS[1], 1.0 - 1e-9, RHO_BOUNDS[1]])

    def resid(x):
        m = _model(x, t, init, T2)
        return _best_scale(m, d) * m - d

    x0 = np.clip([init.delta0, init.deltaS / init.delta0, init.rho_bar],
                 lower * (1 + 1e-9), upper * (1 - 1e-9))
    starts = [x0]
    for d0 in np.geomspace(lower[0], upper[0], n_starts - 1) if n_starts > 1 else ():
        x = [d0, init.deltaS / d0, init.rho_bar * init.delta0 / d0]
        starts.append(np.clip(x, lower * (1 + 1e-9), upper * (1 - 1e-9)))

    def run(x):
        # x_scale keeps the three parameters (1e6, 1e-1, 1e-1) on comparable footing.
        return optimize.least_squares(resid, x, bounds=(lower, upper), x_scale=np.abs(x),
                                      max_nfev=max_nfev, xtol=1e-12, ftol=1e-12, gtol=1e-12)

    with ThreadPoolExecutor(max_workers=workers or _workers()) as ex:
        results = list(ex.map(run, starts))
    ok = [r for r in results if r.status > 0]
    if not ok:
        raise ConvergenceError("no start converged")
    best = min(ok, key=lambda r: r.cost)
    delta0, q, rho = best.x
    deltaS = q * delta0
    flags = []
    for name, val, lo, hi in (("delta0", delta0, lower[0], upper[0]),
                              ("deltaS_fraction", q, lower[1], upper[1]),
                              ("rho_bar", rho, lower[2], upper[2])):
        if val <= lo * (1 + 1e-3) or val >= hi * (1 - 1e-6):
            flags.append(name)
    if deltaS < DELTAS_MIN:
        flags.append("deltaS")
    params = replace(init, delta0=float(delta0), deltaS=float(deltaS), rho_bar=float(rho))
    if _modulating_count(params) < 1e-3:
        flags.append("no_decay")
    if flags:
        log.warning("sphere fit flagged (bound or degenerate): %s", ", ".join(flags))
    m = _model(best.x, t, init, T2)
    s = _best_scale(m, d)
    rms = float(np.sqrt(np.mean((s * m - d) ** 2)))
    return SphereFit(params, s, rms, screening_radius(params), True, len(starts), flags,
                     float(best.cost))


def _workers() -> int:
    from .parallel import worker_count
    return worker_count()
