"""Command-line entry point: ``echo-collapse <command> [options]``.

Exit codes: 0 success, 2 validation error, 3 numerical non-convergence,
4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .echo import apparent_decay_time
from .errors import ConvergenceError, ValidationError
from .fit import DecayCurve, fit_shared_t2, forward_envelope, subsite_params
from .formats import (RunConfig, atomic_write_text, fit_payload, format_params, load_config,
                      read_curve, write_curve, write_json)
from .geometry import Cluster, c2_cluster, format_cluster, load_cluster, truncate_cluster
from .lattice import generate_cluster
from .sphere import SphereParams, fit_sphere, screened_decay
from .spincore import DEFAULT_CONSTANTS, load_gtensors

log = logging.getLogger("echo_collapse")

EXIT_OK, EXIT_VALIDATION, EXIT_CONVERGENCE, EXIT_IO = 0, 2, 3, 4
TWO_PI = 2.0 * math.pi


def _cluster(cfg: RunConfig, n: int | None = None) -> Cluster:
    cluster = load_cluster(cfg.cluster_file)
    n = cfg.n_sites if n is None else n
    if n > len(cluster):
        raise ValidationError(f"{cfg.cluster_file}: holds {len(cluster)} sites, {n} requested")
    return truncate_cluster(cluster, n)


def _require_t2(cfg: RunConfig) -> float:
    if cfg.T2_us is None:
        raise ValidationError("this command needs a numeric [model] T2_us, not 'fit'")
    return cfg.T2_us * 1e-6


def _params_rows(cluster: Cluster, p1, p2):
    rows = [(s.index, s.distance, p, "I") for s, p in zip(cluster, p1)]
    rows += [(s.index, s.distance, p, "II") for s, p in zip(c2_cluster(cluster), p2)]
    return rows


def _model_curve(cfg: RunConfig, field_mT: float, cluster: Cluster, gset, T2: float):
    t = cfg.time_grid_s
    v = forward_envelope(cfg.field_at(field_mT), cluster, gset, t, cfg.zero_field_policy)
    return t, v * v * np.exp(-4.0 * t / T2)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    T2 = _require_t2(cfg)
    cluster = _cluster(cfg)
    gset = load_gtensors(cfg.gtensor_file)
    t, y = _model_curve(cfg, cfg.field_mT, cluster, gset, T2)
    p1, p2 = subsite_params(cluster, cfg.field, gset, cfg.zero_field_policy)
    curve_out = Path(args.curve_out or cfg.curve_csv)
    params_out = Path(args.params_out or cfg.params_csv)
    write_curve(curve_out, t, y)
    atomic_write_text(params_out, format_params(_params_rows(cluster, p1, p2)))
    print(f"wrote {curve_out} ({len(t)} samples) and {params_out} ({2 * len(cluster)} rows)")
    return EXIT_OK


def _fields_for(curves, fields_mT, cfg: RunConfig) -> list[float]:
    if not fields_mT:
        if len(curves) == 1:
            return [cfg.field_mT]
        raise ValidationError("give one --field-mT per curve file")
    if len(fields_mT) != len(curves):
        raise ValidationError(f"{len(curves)} curve files but {len(fields_mT)} --field-mT values")
    return list(fields_mT)


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    valid_from = cfg.valid_from_us * 1e-6
    curves = [read_curve(p, valid_from=valid_from) for p in args.curves]
    fields_mT = _fields_for(curves, args.field_mT, cfg)
    for c in curves:
        if not c.mask.any():
            raise ValidationError(f"curve {c.label!r}: no valid samples (all t12 < "
                                  f"{cfg.valid_from_us} us)")
    cluster = _cluster(cfg)
    gset = load_gtensors(cfg.gtensor_file)
    result = fit_shared_t2(curves, [cfg.field_at(b) for b in fields_mT], cluster, gset,
                           cfg.zero_field_policy, log_domain=args.log_domain or cfg.log_domain)
    out = Path(args.out or cfg.fit_json)
    write_json(out, fit_payload(result, cfg, args.curves, fields_mT))
    print(f"T2 = {result.T2 * 1e6:.3f} us; scales = "
          + ", ".join(f"{s:.4g}" for s in result.scales) + f"; wrote {out}")
    return EXIT_OK


def _sphere_init(cfg: RunConfig) -> SphereParams:
    return SphereParams(TWO_PI * cfg.sphere_delta0_kHz * 1e3, TWO_PI * cfg.sphere_deltaS_kHz * 1e3,
                        cfg.sphere_rho_bar, cfg.sphere_r0_A, cfg.sphere_n_Y_per_cm3)


def cmd_sphere(args) -> int:
    cfg = load_config(args.config)
    curve = read_curve(args.curve, valid_from=cfg.valid_from_us * 1e-6)
    T2 = _require_t2(cfg) if cfg.sphere_include_T2 else None
    res = fit_sphere(curve, _sphere_init(cfg), T2=T2, n_starts=max(8, cfg.sphere_starts))
    field_mT = cfg.field_mT if args.field_mT is None else args.field_mT
    p = res.params
    payload = {
        "delta0_kHz": p.delta0 / TWO_PI / 1e3,
        "deltaS_kHz": p.deltaS / TWO_PI / 1e3,
        "rho_bar": p.rho_bar,
        "r_s_A": res.r_s,
        "r0_A": p.r0,
        "scale": res.scale,
        "rms": res.rms,
        "field_mT": field_mT,
        "deltaS_over_nuclear_zeeman": (
            p.deltaS / (TWO_PI * DEFAULT_CONSTANTS.mu_Y_over_h * field_mT * 1e-3)
            if field_mT > 0 else None),
        "include_T2": T2 is not None,
        "T2_us": None if T2 is None else T2 * 1e6,
        "starts": res.n_starts,
        "at_boundary": res.at_boundary,
        "config": cfg.to_dict(),
        "version": __version__,
    }
    out = Path(args.out or cfg.sphere_json)
    write_json(out, payload)
    print(f"delta0/2pi = {payload['delta0_kHz']:.1f} kHz, deltaS/2pi = "
          f"{payload['deltaS_kHz']:.1f} kHz, rho_bar = {p.rho_bar:.3f}, "
          f"r_S = {res.r_s:.2f} A; wrote {out}")
    return EXIT_OK


def cmd_params(args) -> int:
    cfg = load_config(args.config)
    cluster = _cluster(cfg, cfg.params_n_sites)
    gset = load_gtensors(cfg.gtensor_file)
    p1, p2 = subsite_params(cluster, cfg.field, gset, cfg.zero_field_policy)
    out = Path(args.out or cfg.params_csv)
    atomic_write_text(out, format_params(_params_rows(cluster, p1, p2)))
    print(f"wrote {out} ({len(cluster)} sites per orientation, "
          f"{cluster[0].distance:.2f}-{cluster[-1].distance:.2f} A)")
    return EXIT_OK


FIG_FIELDS_MT = (133.0, 83.0, 50.0, 0.0)
SPHERE_50MT = dict(delta0_kHz=635.0, deltaS_ratio=0.8, rho_bar=0.11, field_mT=50.0)


def cmd_figures(args) -> int:
    """Plot-ready CSV/JSON bundle; no rendering."""
    cfg = load_config(args.config)
    T2 = _require_t2(cfg)
    outdir = Path(args.out_dir or cfg.figures_dir)
    cluster = _cluster(cfg)
    gset = load_gtensors(cfg.gtensor_file)
    t = cfg.time_grid_s

    def curves_table(fields):
        cols = {b: _model_curve(cfg, b, cluster, gset, T2)[1] for b in fields}
        head = "t12_us," + ",".join(f"I_{b:g}mT" for b in fields)
        rows = [f"{ti * 1e6:.12g}," + ",".join(f"{cols[b][i]:.12g}" for b in fields)
                for i, ti in enumerate(t)]
        return cols, head + "\n" + "\n".join(rows) + "\n"

    cols, text = curves_table(FIG_FIELDS_MT)
    atomic_write_text(outdir / "model_curves.csv", text)
    apparent = {}
    for b in FIG_FIELDS_MT:
        c = DecayCurve(f"{b:g}mT", t, np.clip(cols[b], 0.0, None))
        window = (2e-6, 25e-6) if b == 0 else (2e-6, t[-1])
        try:
            tau = apparent_decay_time(c, window)
            apparent[f"{b:g}"] = {"tau_us": tau * 1e6, "t2_style_us": 4 * tau * 1e6,
                                  "window_us": [w * 1e6 for w in window]}
        except (ValidationError, ConvergenceError) as exc:
            apparent[f"{b:g}"] = {"error": str(exc)}
    write_json(outdir / "apparent_times.json", {"T2_us": T2 * 1e6, "apparent": apparent})

    big = _cluster(cfg, min(cfg.params_n_sites, len(load_cluster(cfg.cluster_file))))
    for b in FIG_FIELDS_MT:
        p1, p2 = subsite_params(big, cfg.field_at(b), gset, cfg.zero_field_policy)
        atomic_write_text(outdir / f"params_{b:g}mT.csv",
                          format_params(_params_rows(big, p1, p2)))

    ps = SPHERE_50MT
    sp = SphereParams(TWO_PI * ps["delta0_kHz"] * 1e3,
                      ps["deltaS_ratio"] * TWO_PI * DEFAULT_CONSTANTS.mu_Y_over_h
                      * ps["field_mT"] * 1e-3, ps["rho_bar"], cfg.sphere_r0_A,
                      cfg.sphere_n_Y_per_cm3)
    sph = screened_decay(sp, t, method="sici") * np.exp(-4.0 * t / T2)
    full = cols[50.0]
    rows = [f"{ti * 1e6:.12g},{a:.12g},{b:.12g}" for ti, a, b in zip(t, full, sph)]
    atomic_write_text(outdir / "sphere_vs_cluster_50mT.csv",
                      "t12_us,I_cluster,I_screened\n" + "\n".join(rows) + "\n")

    _, text = curves_table(tuple(args.extra_fields_mT))
    atomic_write_text(outdir / "model_curves_extra.csv", text)
    print(f"wrote figure bundle to {outdir}")
    return EXIT_OK


def cmd_cluster(args) -> int:
    cluster = generate_cluster(n=args.n, radius_A=args.radius)
    atomic_write_text(args.out, "# Y3+ positions around Er3+ site 1, orientation I, "
                                "optical frame (D1, D2, b)\n" + format_cluster(cluster))
    print(f"wrote {args.out} ({len(cluster)} sites, up to {cluster[-1].distance:.2f} A)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="echo-collapse", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("-c", "--config", help="INI run configuration (defaults if omitted)")
        return p

    p = with_config(sub.add_parser("simulate", help="model curve and per-nucleus parameters"))
    p.add_argument("--curve-out")
    p.add_argument("--params-out")
    p.set_defaults(func=cmd_simulate)

    p = with_config(sub.add_parser("fit", help="shared-T2 fit of one or more curve files"))
    p.add_argument("curves", nargs="+")
    p.add_argument("--field-mT", type=float, action="append",
                   help="bias field of each curve, in the order given (repeat)")
    p.add_argument("--log-domain", action="store_true")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_fit)

    p = with_config(sub.add_parser("sphere", help="spherical screening-model fit"))
    p.add_argument("curve")
    p.add_argument("--field-mT", type=float)
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_sphere)

    p = with_config(sub.add_parser("params", help="per-nucleus rho and splittings vs distance"))
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_params)

    p = with_config(sub.add_parser("figures", help="plot-ready data bundle"))
    p.add_argument("-o", "--out-dir")
    p.add_argument("--extra-fields-mT", type=float, nargs="+", default=[17.0, 33.0, 67.0, 100.0])
    p.set_defaults(func=cmd_figures)

    p = sub.add_parser("cluster", help="write a Y position file from the built-in lattice")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("-n", type=int)
    g.add_argument("--radius", type=float, help="angstrom")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_cluster)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
