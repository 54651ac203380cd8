"""Command line entry point.

Subcommands:
  fit       estimate one quantile fit from a dataset CSV, JSON out
  curve     coefficient paths over a tau grid, or a survival curve, CSV out
  simulate  run a Monte Carlo study from a config file, CSV table out

Exit codes: 0 success, 2 invalid input, 3 numerical failure. The worker
count for simulate is taken from ICQR_THREADS when set.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import replace
from typing import Sequence

import numpy as np

from .errors import NumericalError, ValidationError
from .inference import BootstrapConfig, bootstrap, survival_bands
from .io import dump_json17, parse_study_config, read_dataset_csv
from .pipeline import EstimatorSpec, FitContext, fit
from .simulate import SimScenario
from .study import run_study

__all__ = ["main"]


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{float(v):.17g}"


def _parse_bandwidth(text: str):
    if text.strip().lower() == "auto":
        return None
    parts = [p.strip() for p in text.split(",")]
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ValidationError(f"bad --bandwidth {text!r}: use 'auto' or comma-separated numbers")
    return vals[0] if len(vals) == 1 else vals


def _parse_tau_grid(text: str) -> list[float]:
    """'a:b:step' inclusive grid, or a comma list of levels."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValidationError(f"bad --taus {text!r}: use start:stop:step")
        try:
            a, b, step = (float(p) for p in parts)
        except ValueError:
            raise ValidationError(f"bad --taus {text!r}: use start:stop:step")
        if step <= 0 or b < a:
            raise ValidationError(f"bad --taus {text!r}: need stop >= start and step > 0")
        count = int(round((b - a) / step))
        grid = [a + i * step for i in range(count + 1)]
        # keep the endpoint when rounding leaves it just outside
        return [t for t in grid if t <= b + 1e-12]
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ValidationError(f"bad --taus {text!r}")


def _spec_from_args(args) -> EstimatorSpec:
    return EstimatorSpec(method=args.estimator,
                         bandwidths=_parse_bandwidth(args.bandwidth),
                         m_star=args.m_star)


def _add_fit_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", help="dataset CSV (delta,time,left,right,x1..xk)")
    p.add_argument("--estimator", choices=("ks", "zfd"), default="ks")
    p.add_argument("--bandwidth", default="auto",
                   help="'auto' or comma-separated per-column bandwidths")
    p.add_argument("--m-star", type=float, default=None,
                   help="pseudo-endpoint magnitude for open brackets")
    p.add_argument("--log", action="store_true",
                   help="input holds raw times; map them to the log scale")
    p.add_argument("--bootstrap", type=int, default=0, metavar="B",
                   help="multiplier bootstrap replicates (0 = point estimate only)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ci-level", type=float, default=0.95)
    p.add_argument("--ci-kind", choices=("wald", "percentile"), default="wald")
    p.add_argument("--out", default=None, help="output path (default stdout)")


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(out, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")


def _cmd_fit(args) -> int:
    dataset = read_dataset_csv(args.input, log_transform=args.log)
    spec = _spec_from_args(args)
    payload: dict = {
        "tau": args.tau, "estimator": args.estimator, "n": dataset.n,
        "seed": args.seed,
    }
    if args.bootstrap > 0:
        cfg = BootstrapConfig(n_replicates=args.bootstrap, seed=args.seed,
                              ci_level=args.ci_level, ci_kind=args.ci_kind)
        res = bootstrap(dataset, args.tau, spec, cfg)
        qf = res.fit
        payload.update({
            "se": res.se, "ci_lower": res.ci_lower, "ci_upper": res.ci_upper,
            "ci_level": args.ci_level, "ci_kind": args.ci_kind,
            "bootstrap_replicates": args.bootstrap,
            "bootstrap_dropped": res.n_dropped,
        })
    else:
        qf = fit(dataset, args.tau, spec)
    diag = qf.diagnostics
    payload.update({
        "beta": qf.beta, "objective": qf.objective, "n_used": qf.n_used,
        "m_star": diag.get("m_star"), "bandwidths": diag.get("bandwidths"),
        "em": diag.get("em"), "subgradient_max": diag.get("subgradient_max"),
    })
    _emit(dump_json17(payload), args.out)
    return 0


def _cmd_curve(args) -> int:
    dataset = read_dataset_csv(args.input, log_transform=args.log)
    rows: list[list[str]] = []
    if args.survival:
        cfg = BootstrapConfig(n_replicates=args.bootstrap, seed=args.seed,
                              ci_level=args.ci_level, ci_kind="percentile")
        bands = survival_bands(dataset, cfg)
        header = ["time", "survival", "lower", "upper"]
        for t, s, lo, hi in zip(bands.times, bands.survival, bands.lower, bands.upper):
            rows.append([_fmt(t), _fmt(s), _fmt(lo), _fmt(hi)])
    else:
        taus = _parse_tau_grid(args.taus)
        if not taus:
            raise ValidationError("empty tau grid")
        spec = _spec_from_args(args)
        names = ["intercept"] + [f"x{i}" for i in range(1, dataset.p)]
        header = ["tau", "coefficient", "estimate", "lower", "upper"]
        context = FitContext(dataset, spec)
        for tau in taus:
            if args.bootstrap > 0:
                cfg = BootstrapConfig(n_replicates=args.bootstrap, seed=args.seed,
                                      ci_level=args.ci_level, ci_kind=args.ci_kind)
                res = bootstrap(dataset, tau, spec, cfg, context=context)
                beta, lo, hi = res.fit.beta, res.ci_lower, res.ci_upper
            else:
                qf = fit(dataset, tau, spec, context=context)
                beta = qf.beta
                lo = hi = [math.nan] * dataset.p
            for j, name in enumerate(names):
                rows.append([_fmt(tau), name, _fmt(beta[j]),
                             "" if math.isnan(lo[j]) else _fmt(lo[j]),
                             "" if math.isnan(hi[j]) else _fmt(hi[j])])

    import io as _io
    buf = _io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    _emit(buf.getvalue(), args.out)
    return 0


def _cmd_simulate(args) -> int:
    cfg = parse_study_config(args.config)
    scenario = SimScenario(n=cfg.n, tau=cfg.tau, error=cfg.error, hetero=cfg.hetero,
                           scheme=cfg.scheme, p0=cfg.p0,
                           censoring_target=cfg.censoring_target, seed=cfg.seed)
    estimators = {name: EstimatorSpec(method=name, bandwidths=cfg.bandwidth,
                                      m_star=cfg.m_star)
                  for name in cfg.estimators}
    boot = None
    if cfg.bootstrap > 0:
        boot = BootstrapConfig(n_replicates=cfg.bootstrap, seed=cfg.seed,
                               ci_level=cfg.ci_level)
    result = run_study(scenario, estimators, cfg.replicates, bootstrap_config=boot)

    p = len(result.true_beta)
    names = ["intercept"] + [f"x{i}" for i in range(1, p)]
    import io as _io
    buf = _io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["label", "estimator", "coefficient",
                     "bias", "ese", "bse", "cp", "mse", "re"])
    for est, m in result.metrics.items():
        for j, name in enumerate(names):
            writer.writerow([
                cfg.label, est, name,
                _fmt(m.bias[j]), _fmt(m.ese[j]),
                _fmt(m.bse[j]) if m.bse is not None else "",
                _fmt(m.cp[j]) if m.cp is not None else "",
                _fmt(m.mse[j]), _fmt(m.re[j]),
            ])
    _emit(buf.getvalue(), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icqr",
        description="Quantile regression for interval-censored time data.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit one quantile level")
    _add_fit_options(p_fit)
    p_fit.add_argument("--tau", type=float, default=0.5)
    p_fit.set_defaults(func=_cmd_fit)

    p_curve = sub.add_parser("curve", help="coefficient paths or survival curve")
    _add_fit_options(p_curve)
    p_curve.add_argument("--taus", default="0.1:0.9:0.1",
                         help="tau grid start:stop:step (inclusive) or comma list")
    p_curve.add_argument("--survival", action="store_true",
                         help="emit the estimated survival curve with bands instead")
    p_curve.set_defaults(func=_cmd_curve)

    p_sim = sub.add_parser("simulate", help="Monte Carlo study from a config file")
    p_sim.add_argument("config", help="key=value config file")
    p_sim.add_argument("--out", default=None, help="output path (default stdout)")
    p_sim.set_defaults(func=_cmd_simulate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"icqr: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"icqr: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"icqr: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
