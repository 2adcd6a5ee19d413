"""Command-line front end: simulate, identify, evaluate, montecarlo.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import io, metrics
from .pipeline import ConfigError, RunConfig, derived_seeds, identify, montecarlo
from .model import generate_sl_model, simulate, true_predictor

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("slident")

# flag name -> RunConfig field
FLAG_FIELDS = {"m": "m", "n": "n", "nnz": "nnz", "T": "T", "T_true": "T_true", "decay": "decay",
               "N": "N", "N_test": "N_test", "threshold": "threshold", "rmax": "rmax",
               "arx_order": "arx_order", "tol": "tol", "max_iter": "max_iter", "method": "method",
               "workers": "workers"}


def parse_config_file(path):
    """key = value lines; '#' starts a comment. Keys are RunConfig fields plus seed/seeds."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        out[key.strip().replace("-", "_")] = val.strip()
    return out


def _parse_seeds(text):
    """'1,2,5' or '1-10' (inclusive) or a mix."""
    seeds = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        lo, dash, hi = part.partition("-")
        try:
            if dash:
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise ConfigError(f"bad seed list {text!r}") from None
    return seeds


def _coerce(name, value):
    types = {f.name: f.type for f in fields(RunConfig)}
    if value is None or value == "" or str(value).lower() == "none":
        return None
    kind = types[name]
    try:
        if "int" in str(kind):
            return int(value)
        if "float" in str(kind):
            return float(value)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {value!r}") from None
    return str(value)


def build_config(args):
    """Config file first, then explicit flags on top."""
    raw = parse_config_file(args.config) if getattr(args, "config", None) else {}
    unknown = set(raw) - set(FLAG_FIELDS) - {"seed", "seeds"}
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for flag in FLAG_FIELDS:
        val = getattr(args, flag, None)
        if val is not None:
            raw[flag] = val
    for key in ("seed", "seeds"):
        val = getattr(args, key, None)
        if val is not None:
            raw.pop("seed", None)
            raw.pop("seeds", None)
            raw[key] = val
    kwargs = {FLAG_FIELDS[k]: _coerce(FLAG_FIELDS[k], v) for k, v in raw.items() if k in FLAG_FIELDS}
    kwargs = {k: v for k, v in kwargs.items() if v is not None or k in ("rmax", "arx_order", "N_test")}
    if "seeds" in raw:
        kwargs["seeds"] = _parse_seeds(raw["seeds"])
    elif "seed" in raw:
        kwargs["seeds"] = _parse_seeds(raw["seed"])
    return RunConfig(**kwargs).validate()


def cmd_simulate(args):
    cfg = build_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for seed in cfg.seeds:
        prov = io.provenance(cfg.hashable(), seed)
        s_model, s_train, s_test = derived_seeds(seed)
        model = generate_sl_model(cfg.m, cfg.n, cfg.nnz, cfg.T_true, cfg.decay, s_model)
        stem = out / f"seed_{seed}"
        io.save_model(f"{stem}_model.json", model, prov)
        io.save_timeseries(f"{stem}_train.csv", simulate(model, cfg.N, s_train), prov)
        io.save_timeseries(f"{stem}_test.csv", simulate(model, cfg.test_length, s_test), prov)
        written.append(str(stem))
    print("\n".join(written))
    return EXIT_OK


def cmd_identify(args):
    cfg = build_config(args)
    train = io.load_timeseries(args.data)
    seed = train.seed if train.seed is not None else cfg.seeds[0]
    prov = dict(io.provenance(dict(cfg.hashable(), data=Path(args.data).name), seed))
    ident = identify(train, cfg.T, cfg.threshold, cfg.hyperloop_options(), cfg.arx_order)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ident.estimate.diagnostics["config"] = cfg.to_dict()
    io.save_estimate(out / "estimate.json", ident.estimate, prov)
    io.save_estimate(out / "estimate_tc.json", ident.tc_estimate, prov)
    io.save_coefficients_csv(out / "coefficients.csv", ident.estimate, prov)
    io.save_hyper(out / "hyper.json", ident.hyper, prov)
    io.save_report(out / "report.json", ident.report, prov)
    ext = {"json": "json", "csv": "csv", "dot": "dot"}[args.format]
    io.save_network(out / f"network.{ext}", ident.graph, args.format, prov)
    print(f"r={ident.r} edges={len(ident.edges)} out={out}")
    return EXIT_OK


def cmd_evaluate(args):
    cfg = build_config(args)
    test = io.load_timeseries(args.test)
    est = io.load_estimate(args.estimate)
    row = {"cod": metrics.cod(test, est)}
    if args.truth:
        model = io.load_model(args.truth)
        truth = true_predictor(model)
        row["cod_true"] = metrics.cod(test, truth)
        T = max(est.layout.T, model.T_true)
        G_true, G_est = metrics._pad(model.G_coeffs, T), metrics._pad(est.G_coeffs(), T)
        # one run: Gbar is that run's truth, so report the relative error form
        row["rel_coeff_error"] = float(np.sum((G_true - G_est) ** 2) / np.sum(G_true ** 2))
    edges = metrics.support(est, cfg.threshold)
    row["support_size"] = len(edges)
    prov = io.provenance(dict(cfg.hashable(), estimate=Path(args.estimate).name, test=Path(args.test).name),
                         test.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    keys = list(row)
    io.write_csv(out, keys, [[row[k] for k in keys]], prov)
    print(", ".join(f"{k}={row[k]:.6g}" for k in keys))
    return EXIT_OK


def cmd_montecarlo(args):
    cfg = build_config(args)
    rows, summary = montecarlo(cfg, args.out, resume=not args.no_resume)
    s = summary
    print(f"runs={s['runs']} AC={s['AC']:.2f} median COD sl/tc/true="
          f"{s['cod_sl']['median']:.2f}/{s['cod_tc']['median']:.2f}/{s['cod_true']['median']:.2f} "
          f"median AIRF sl/tc={s['airf_sl']['median']:.2f}/{s['airf_tc']['median']:.2f} "
          f"r counts={s['selected_r_counts']}")
    return EXIT_OK


def _add_common(p):
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--nnz", type=int)
    p.add_argument("--T", type=int, help="predictor memory (lags)")
    p.add_argument("--T-true", dest="T_true", type=int)
    p.add_argument("--decay", type=float)
    p.add_argument("--N", type=int, help="identification length")
    p.add_argument("--N-test", dest="N_test", type=int)
    p.add_argument("--seed", type=str, help="single seed")
    p.add_argument("--seeds", type=str, help="seed list, e.g. 1-10 or 1,4,7")
    p.add_argument("--threshold", type=float, help="relative support threshold")
    p.add_argument("--rmax", type=int)
    p.add_argument("--arx-order", dest="arx_order", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--method", choices=["auto", "primal", "dual"])
    p.add_argument("--workers", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["json", "csv", "dot"], default="json")
    p.add_argument("-v", "--verbose", action="count", default=0)


def make_parser():
    parser = argparse.ArgumentParser(prog="slident", description="Sparse plus low-rank predictor identification.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", help="generate models and train/test series")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("identify", help="estimate an S+L predictor from a training CSV")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_identify)
    p = sub.add_parser("evaluate", help="score an estimate on test data")
    _add_common(p)
    p.add_argument("--estimate", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--truth", help="model JSON for coefficient errors")
    p.set_defaults(func=cmd_evaluate)
    p = sub.add_parser("montecarlo", help="seeded end-to-end runs with aggregated metrics")
    _add_common(p)
    p.add_argument("--no-resume", action="store_true", help="ignore existing checkpoints")
    p.set_defaults(func=cmd_montecarlo)
    return parser


def main(argv=None):
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors already; keep --help at 0
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError, RuntimeError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
