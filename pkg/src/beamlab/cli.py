"""Command line entry point: ``beamlab <command> [options]``.

Every command writes ``<out>/<command>.csv`` (when it has tabular output) and
``<out>/<command>.json`` holding the fully resolved configuration, run metadata
and any summary.  Exit codes: 0 success, 2 invalid input, 3 numerical failure
(the JSON error record on stderr carries a ``reason`` field).
"""

import argparse
import csv
import datetime as dt
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .errors import ConfigError, NumericalError
from .freekernel import fresnel_cos_kernel, taylor_split_check
from .model import (CutoffSpec, ExperimentConfig, PotentialSpec, QuadratureSettings, build_grid,
                    load_config, sample_potential)
from .oscillatory import K_N, N0_of, OscIntegrand, theta_params
from .propagator import crossvalidate, decay_curve, fit_exponent, stone_kernel
from .resonance import cancellation_probe, choose_lambda0, classify, minv_blowup_probe
from .spectral import build_hamiltonian, detect_bound_states, eigendecompose

log = logging.getLogger("beamlab")


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload):
    Path(path).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def emit_table(cfg, out, name, header, rows):
    """CSV table, or a JSON list of records when the configured format is json."""
    if cfg.output_format == "json":
        write_json(out / f"{name}_table.json", [dict(zip(header, r)) for r in rows])
    else:
        write_csv(out / f"{name}.csv", header, rows)


def metadata(command, args):
    opts = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    return {
        "command": command,
        "options": opts,
        "version": __version__,
        "timestamp": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "threads": os.environ.get("BEAMLAB_THREADS"),
    }


# --------------------------------------------------------------------------
# configuration from file and flags
# --------------------------------------------------------------------------

def _parse_params(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--param expects key=value, got {item!r}", key="--param")
        k, v = item.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def resolve_config(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = ExperimentConfig(grid=build_grid(15.0, 256), potential=PotentialSpec("zero"))
    changes = {}
    if args.L is not None or args.n is not None:
        changes["grid"] = build_grid(args.L if args.L is not None else cfg.grid.L,
                                     args.n if args.n is not None else cfg.grid.n)
    if args.family is not None or args.param:
        family = args.family or cfg.potential.family
        params = dict(cfg.potential.params) if family == cfg.potential.family else {}
        params.update(_parse_params(args.param))
        changes["potential"] = PotentialSpec(family, params, cfg.potential.decay_exponent,
                                             cfg.potential.coupling)
    if args.lambda0 is not None:
        changes["lambda0"] = args.lambda0 if args.lambda0 == "auto" else float(args.lambda0)
    if args.rel_tol is not None:
        changes["quadrature"] = QuadratureSettings(args.rel_tol, cfg.quadrature.max_nodes)
    if args.out is not None:
        changes["output_dir"] = args.out
    if changes:
        cfg = ExperimentConfig(**{**cfg.__dict__, **changes})
    return cfg


def _cutoff(cfg, sample):
    lam0 = cfg.lambda0
    if lam0 == "auto":
        lam0 = choose_lambda0(sample)
    else:
        try:
            lam0 = float(lam0)
        except ValueError:
            raise ConfigError(f"lambda0 must be a positive number or 'auto', got {lam0!r}",
                              key="cutoff.lambda0") from None
    return CutoffSpec(lam0)


def _prepare(args):
    cfg = resolve_config(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def _record(cfg, args, command, **extra):
    return {"config": cfg.resolved(), "meta": metadata(command, args), **extra}


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_spectrum(args):
    cfg, out = _prepare(args)
    sample = sample_potential(cfg.potential, cfg.grid)
    sd = eigendecompose(build_hamiltonian(cfg.grid, sample, args.m))
    bound = set(detect_bound_states(sd, args.pr_threshold))
    rows = [(j, sd.eigenvalues[j], sd.participation[j], j in bound) for j in range(cfg.grid.n)]
    emit_table(cfg, out, "spectrum", ["index", "eigenvalue", "participation_ratio", "is_bound"], rows)
    write_json(out / "spectrum.json",
               _record(cfg, args, "spectrum", bound_state_indices=sorted(bound)))
    return 0


def cmd_classify(args):
    cfg, out = _prepare(args)
    sample = sample_potential(cfg.potential, cfg.grid)
    lam0 = None if cfg.lambda0 == "auto" else float(cfg.lambda0)
    report = classify(sample, cfg.rank_tol, lam0)
    write_json(out / "classify.json", _record(cfg, args, "classify", report=report.as_dict()))
    print(report.classification)
    return 0


def cmd_probe(args):
    cfg, out = _prepare(args)
    sample = sample_potential(cfg.potential, cfg.grid)
    lam = np.geomspace(args.lam_min, args.lam_max, args.points)
    if args.what == "minv":
        res = minv_blowup_probe(sample, lam)
    else:
        if args.alpha is None:
            raise ConfigError("--what cancel needs --alpha", key="--alpha")
        res = cancellation_probe(sample, args.alpha, lam)
    emit_table(cfg, out, "probe", ["lambda", "norm"], res.rows())
    fit = {"slope": res.slope, "stderr": res.stderr, "what": args.what, "alpha": args.alpha}
    write_json(out / "probe.json", _record(cfg, args, "probe", fit=fit))
    print(f"slope {res.slope:.4f} +- {res.stderr:.2g}")
    return 0


def cmd_vdc(args):
    cfg, out = _prepare(args)
    lo, hi = args.N_range
    rows = []
    for t in args.t_list:
        psi = args.psi if args.psi is not None else args.psi_frac * abs(t)
        N0 = N0_of(psi, t)
        for N in range(lo, hi + 1):
            itg = OscIntegrand(t=t, m=args.m, psi=psi)
            k = abs(K_N(args.sign, N, itg, cfg.quadrature.rel_tol, cfg.quadrature.max_nodes))
            tp = theta_params(N, N0, args.m, t, args.N2)
            rows.append((N, t, k, tp.value, k / tp.value))
    emit_table(cfg, out, "vdc", ["N", "t", "abs_K_N", "theta", "ratio"], rows)
    ratios = np.array([r[4] for r in rows])
    write_json(out / "vdc.json", _record(cfg, args, "vdc",
                                         summary={"ratio_max": ratios.max(), "ratio_min": ratios.min()}))
    return 0


def cmd_free(args):
    cfg, out = _prepare(args)
    if args.check == "fresnel":
        xs = np.linspace(-args.radius, args.radius, args.points)
        rows, worst = [], 0.0
        for t in args.t_list:
            k = stone_kernel(None, t, 0.0, 0, "cos", "full", xs, xs, rel_tol=cfg.quadrature.rel_tol)
            ref = fresnel_cos_kernel(t, xs[:, None], xs[None, :])
            err = np.abs(k.values - ref).max() / np.abs(ref).max()
            worst = max(worst, err)
            rows.append((t, k.supnorm, (4 * np.pi * t) ** -0.5, err))
        emit_table(cfg, out, "free", ["t", "supnorm", "fresnel_supnorm", "max_rel_error"], rows)
        summary = {"max_rel_error": worst}
    else:
        rows = []
        for order in (1, 2, 3):
            for lam in (0.1, 1.0, 10.0):
                for x, y in ((0.3, 0.7), (-1.0, 0.4), (2.0, -1.5)):
                    chk = taylor_split_check(order, lam, x, y)
                    rows.append((order, lam, x, y, chk.residual))
        emit_table(cfg, out, "free", ["order", "lambda", "x", "y", "residual"], rows)
        summary = {"max_residual": max(r[4] for r in rows)}
    write_json(out / "free.json", _record(cfg, args, "free", check=args.check, summary=summary))
    return 0


def cmd_decay(args):
    cfg, out = _prepare(args)
    sample = sample_potential(cfg.potential, cfg.grid)
    kind = "sin_over" if args.kind in ("sinover", "sin_over") else args.kind
    spec = _cutoff(cfg, sample) if args.cutoff != "full" or cfg.lambda0 != "auto" else None
    t = np.geomspace(args.tmin, args.tmax, args.points)
    curve = decay_curve(sample, args.m, args.ell, kind, args.cutoff, t, cutoff_spec=spec,
                        rel_tol=cfg.quadrature.rel_tol, route=args.route)
    emit_table(cfg, out, "decay", ["t", "supnorm"], curve.rows())
    fit = fit_exponent(curve)
    record = {"slope": fit.slope, "stderr": fit.stderr, "window": list(fit.window),
              "settings": curve.settings}
    write_json(out / "decay.json", _record(cfg, args, "decay", fit=record))
    print(f"slope {fit.slope:.4f} +- {fit.stderr:.2g}")
    return 0


def cmd_crossval(args):
    cfg, out = _prepare(args)
    sample = sample_potential(cfg.potential, cfg.grid)
    spec = None if cfg.lambda0 == "auto" else CutoffSpec(float(cfg.lambda0))
    cv = crossvalidate(sample, args.t, args.m, args.kind, spec, images=args.images)
    rows = [(xa, yb, cv.stone.values[a, b], cv.spectral.values[a, b])
            for a, xa in enumerate(cv.stone.xs) for b, yb in enumerate(cv.stone.ys)]
    emit_table(cfg, out, "crossval", ["x", "y", "stone", "spectral"], rows)
    write_json(out / "crossval.json", _record(cfg, args, "crossval", discrepancy=cv.discrepancy,
                                              lambda0=cv.lambda0, details=cv.details))
    print(f"discrepancy {cv.discrepancy:.3e}")
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="JSON experiment configuration")
    p.add_argument("--L", type=float, help="half-width of the periodic box [-L, L)")
    p.add_argument("--n", type=int, help="grid points (power of two)")
    p.add_argument("--family", help="potential family")
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="potential parameter")
    p.add_argument("--lambda0", help="cutoff scale or 'auto'")
    p.add_argument("--rel-tol", type=float, dest="rel_tol")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="beamlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"beamlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="eigenvalues, participation ratios, bound-state flags")
    _common(p)
    p.add_argument("--m", type=float, default=0.0)
    p.add_argument("--pr-threshold", type=float, default=0.2, dest="pr_threshold")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("classify", help="zero-energy resonance classification")
    _common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("probe", help="low-energy order probes of M^-1 and Q_alpha v R0")
    _common(p)
    p.add_argument("--what", choices=("minv", "cancel"), required=True)
    p.add_argument("--alpha", type=int, choices=(0, 1, 2, 3))
    p.add_argument("--lam-min", type=float, default=1e-3, dest="lam_min")
    p.add_argument("--lam-max", type=float, default=1e-1, dest="lam_max")
    p.add_argument("--points", type=int, default=9)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("vdc", help="dyadic oscillatory integrals against their two-branch bound")
    _common(p)
    p.add_argument("--t-list", type=float, nargs="+", required=True, dest="t_list")
    p.add_argument("--N-range", type=int, nargs=2, default=(-12, 8), dest="N_range",
                   metavar=("NMIN", "NMAX"))
    p.add_argument("--m", type=float, default=0.0)
    p.add_argument("--sign", type=int, choices=(1, -1), default=1)
    p.add_argument("--psi", type=float, help="phase offset (default: psi-frac * |t|)")
    p.add_argument("--psi-frac", type=float, default=0.25, dest="psi_frac")
    p.add_argument("--N2", type=int, default=-12)
    p.set_defaults(func=cmd_vdc)

    p = sub.add_parser("free", help="free-kernel checks")
    _common(p)
    p.add_argument("--check", choices=("fresnel", "taylor"), required=True)
    p.add_argument("--t-list", type=float, nargs="+", default=(1.0, 5.0, 25.0), dest="t_list")
    p.add_argument("--radius", type=float, default=10.0)
    p.add_argument("--points", type=int, default=41)
    p.set_defaults(func=cmd_free)

    p = sub.add_parser("decay", help="sup-norm decay curve and power-law fit")
    _common(p)
    p.add_argument("--m", type=float, default=0.0)
    p.add_argument("--ell", type=float, default=0.0)
    p.add_argument("--kind", choices=("cos", "sinover", "sin_over", "unified_exp"), default="cos")
    p.add_argument("--cutoff", choices=("low", "high", "full"), default="full")
    p.add_argument("--tmin", type=float, default=10.0)
    p.add_argument("--tmax", type=float, default=1000.0)
    p.add_argument("--points", type=int, default=13)
    p.add_argument("--route", choices=("stone", "spectral"), default="stone")
    p.set_defaults(func=cmd_decay)

    p = sub.add_parser("crossval", help="Stone route against the box spectral route")
    _common(p)
    p.add_argument("--t", type=float, default=5.0)
    p.add_argument("--m", type=float, default=0.0)
    p.add_argument("--kind", choices=("cos", "sin_over"), default="cos")
    p.add_argument("--images", type=int, default=4)
    p.set_defaults(func=cmd_crossval)
    return parser


def _fail(code, reason, message, **extra):
    sys.stderr.write(json.dumps({"error": reason, "message": message, **extra}) + "\n")
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = os.environ.get("BEAMLAB_THREADS")
    try:
        limit = int(threads) if threads else None
        if limit is not None and limit < 1:
            raise ValueError
    except ValueError:
        return _fail(2, "invalid_input", f"BEAMLAB_THREADS must be a positive integer, got {threads!r}",
                     key="BEAMLAB_THREADS")
    try:
        with threadpool_limits(limits=limit):
            return args.func(args)
    except ConfigError as exc:
        return _fail(2, "invalid_input", str(exc), key=exc.key)
    except NumericalError as exc:
        return _fail(3, exc.reason, str(exc), **_jsonable(exc.details))


if __name__ == "__main__":
    sys.exit(main())
