"""Monte Carlo studies over the synthetic scenarios.

run_study repeats generate -> fit (optionally -> bootstrap) and reports
bias, empirical SE, mean bootstrap SE, coverage and MSE per coefficient,
plus relative efficiency against the first (reference) estimator,
re(A over ref) = mse_ref / mse_A, so values above 1 mean A is more
efficient. Replicates are seeded by index, computed independently, and
reassembled in order, so results do not depend on the worker count.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import partial
from typing import Mapping, Sequence

import numpy as np

from ._parallel import parallel_map
from .errors import IcqrError, NumericalError, ValidationError
from .inference import BootstrapConfig, bootstrap
from .pipeline import EstimatorSpec, FitContext, fit
from .simulate import TRUE_BETA, SimScenario, calibrate_p0, generate

__all__ = ["StudyMetrics", "StudyResult", "run_study", "censoring_sweep", "log_mse_scale"]

MAX_DROP_FRACTION = 0.05
_BOOT_SEED_STRIDE = 1_000_003


@dataclass(frozen=True)
class StudyMetrics:
    """Per-coefficient summaries for one estimator."""

    estimator: str
    n_kept: int
    bias: np.ndarray
    ese: np.ndarray
    mse: np.ndarray
    mse_agg: float
    bse: np.ndarray | None = None
    cp: np.ndarray | None = None
    re: np.ndarray | None = None
    re_agg: float | None = None


@dataclass(frozen=True)
class StudyResult:
    scenario: SimScenario
    metrics: dict[str, StudyMetrics]
    betas: dict[str, np.ndarray]
    n_replicates: int
    n_dropped: int
    true_beta: np.ndarray = field(default_factory=lambda: TRUE_BETA.copy())


def _replicate_worker(rep: int, scenario: SimScenario, p0: float | None,
                      est_items: tuple[tuple[str, EstimatorSpec], ...],
                      boot: BootstrapConfig | None,
                      boot_names: tuple[str, ...],
                      true_beta: np.ndarray):
    """One replicate: returns {name: (beta, se, cover)} or None on failure."""
    try:
        dataset, _ = generate(scenario, replicate=rep, p0=p0)
        out = {}
        primary_ctx: FitContext | None = None
        for name, spec in est_items:
            if primary_ctx is None:
                ctx = FitContext(dataset, spec)
                primary_ctx = ctx
            else:
                ctx = primary_ctx.with_spec(spec)
            if boot is not None and name in boot_names:
                cfg = replace(boot, seed=boot.seed + _BOOT_SEED_STRIDE * (rep + 1))
                res = bootstrap(dataset, scenario.tau, spec, cfg, context=ctx)
                cover = (res.ci_lower <= true_beta) & (true_beta <= res.ci_upper)
                out[name] = (res.fit.beta, res.se, cover)
            else:
                qf = fit(dataset, scenario.tau, spec, context=ctx)
                out[name] = (qf.beta, None, None)
        return out
    except IcqrError:
        return None


def run_study(scenario: SimScenario, estimators: Mapping[str, EstimatorSpec],
              n_replicates: int, bootstrap_config: BootstrapConfig | None = None,
              bootstrap_for: Sequence[str] | None = None,
              true_beta: np.ndarray = TRUE_BETA,
              workers: int | None = None) -> StudyResult:
    """Monte Carlo comparison of estimators on one scenario.

    The first estimator in `estimators` is the reference for relative
    efficiency. A replicate on which any estimator fails is dropped for all
    of them (paired comparisons); more than 5% drops is an error.
    """
    if not estimators:
        raise ValidationError("need at least one estimator")
    if n_replicates < 2:
        raise ValidationError("need at least two replicates")
    p0 = scenario.p0
    if scenario.scheme == "pic" and p0 is None:
        p0 = calibrate_p0(scenario)
    scenario_used = replace(scenario, p0=p0)

    est_items = tuple(estimators.items())
    boot_names = tuple(bootstrap_for) if bootstrap_for is not None else tuple(estimators)
    worker = partial(_replicate_worker, scenario=scenario, p0=p0,
                     est_items=est_items, boot=bootstrap_config,
                     boot_names=boot_names, true_beta=np.asarray(true_beta, dtype=float))
    results = parallel_map(worker, list(range(n_replicates)), workers)

    kept = [r for r in results if r is not None]
    dropped = n_replicates - len(kept)
    if dropped > MAX_DROP_FRACTION * n_replicates:
        raise NumericalError(
            f"{dropped}/{n_replicates} replicates failed (> {MAX_DROP_FRACTION:.0%})")
    if len(kept) < 2:
        raise NumericalError("not enough successful replicates")

    true = np.asarray(true_beta, dtype=float)
    metrics: dict[str, StudyMetrics] = {}
    betas: dict[str, np.ndarray] = {}
    ref_mse = None
    ref_mse_agg = None
    for name, _ in est_items:
        b = np.vstack([r[name][0] for r in kept])
        betas[name] = b
        err = b - true[None, :]
        bias = err.mean(axis=0)
        ese = b.std(axis=0, ddof=1)
        mse = (err ** 2).mean(axis=0)
        mse_agg = float((err ** 2).sum(axis=1).mean())
        bse = cp = None
        if bootstrap_config is not None and name in boot_names:
            bse = np.vstack([r[name][1] for r in kept]).mean(axis=0)
            cp = np.vstack([r[name][2] for r in kept]).mean(axis=0)
        if ref_mse is None:
            ref_mse, ref_mse_agg = mse, mse_agg
        re = ref_mse / mse
        metrics[name] = StudyMetrics(
            estimator=name, n_kept=len(kept), bias=bias, ese=ese, mse=mse,
            mse_agg=mse_agg, bse=bse, cp=cp, re=re,
            re_agg=float(ref_mse_agg / mse_agg))
    return StudyResult(scenario=scenario_used, metrics=metrics, betas=betas,
                       n_replicates=n_replicates, n_dropped=dropped,
                       true_beta=true.copy())


def censoring_sweep(scenario: SimScenario, rates: Sequence[float],
                    estimators: Mapping[str, EstimatorSpec], n_replicates: int,
                    workers: int | None = None) -> list[tuple[float, StudyResult]]:
    """Studies across censoring rates; rate 1.0 switches to the IC scheme.

    Other rates recalibrate p0 on the PIC scheme. Rates outside the
    achievable range raise during calibration.
    """
    out = []
    for rate in rates:
        if not (0.0 <= rate <= 1.0):
            raise ValidationError(f"censoring rate {rate} outside [0, 1]")
        if rate >= 1.0:
            sc = replace(scenario, scheme="ic", p0=None)
        else:
            base = replace(scenario, scheme="pic", p0=None, censoring_target=rate)
            sc = replace(base, p0=calibrate_p0(base))
        out.append((rate, run_study(sc, estimators, n_replicates, workers=workers)))
    return out


def log_mse_scale(result: StudyResult, name: str) -> float:
    """log(E ||beta_hat - beta0||^2 * 100), the sweep-figure y-axis."""
    return float(np.log(result.metrics[name].mse_agg * 100.0))
