"""Perturbed-multiplier bootstrap for the censored quantile estimators.

Each replicate draws i.i.d. standard exponential multipliers (mean 1,
variance 1), one per subject, from a counter-based generator seeded as
SeedSequence([seed, replicate]) so results do not depend on execution
order or thread count. The multiplier enters twice, exactly as the
estimator uses the data: it scales the subject's kernel value before
normalization, and it scales the subject's augmented-row weights.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .data import Dataset, QuantileFit, check_tau
from .errors import NumericalError, ValidationError
from .npmle import StepCdf, turnbull
from .pipeline import EstimatorSpec, FitContext, fit

__all__ = [
    "BootstrapConfig",
    "InferenceResult",
    "multiplier_draws",
    "perturb_fit",
    "bootstrap",
    "survival_bands",
]


@dataclass(frozen=True)
class BootstrapConfig:
    n_replicates: int = 200
    seed: int = 0
    ci_level: float = 0.95
    ci_kind: str = "wald"   # "wald" | "percentile"
    chunk: int = 4          # replicates per batched EM pass; small keeps the
                            # working set cache-resident on one core

    def __post_init__(self) -> None:
        if self.n_replicates < 0:
            raise ValidationError("n_replicates must be nonnegative")
        if not (0.0 < self.ci_level < 1.0):
            raise ValidationError("ci_level must lie in (0, 1)")
        if self.ci_kind not in ("wald", "percentile"):
            raise ValidationError("ci_kind must be 'wald' or 'percentile'")
        if self.chunk < 1:
            raise ValidationError("chunk must be positive")


@dataclass(frozen=True)
class InferenceResult:
    fit: QuantileFit
    se: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    replicates: np.ndarray       # (kept, p) replicate coefficient draws
    n_dropped: int
    config: BootstrapConfig


def multiplier_draws(seed: int, replicate: int, n: int) -> np.ndarray:
    """Standard exponential multipliers for one replicate's subjects."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, replicate])))
    return rng.standard_exponential(n)


def perturb_fit(dataset: Dataset, tau: float, spec: EstimatorSpec | None = None,
                multipliers=None, context: FitContext | None = None) -> QuantileFit:
    """One perturbed fit with the given per-subject multipliers.

    All-ones multipliers reproduce the plain fit. Plugin providers are
    consulted unperturbed (multipliers reach only the row weights).
    """
    if spec is None:
        spec = EstimatorSpec()
    if multipliers is None:
        return fit(dataset, tau, spec, context=context)
    eta = np.asarray(multipliers, dtype=float)
    if eta.shape != (dataset.n,):
        raise ValidationError("multipliers must be a length-n vector")
    if (eta < 0).any() or not np.isfinite(eta).all():
        raise ValidationError("multipliers must be nonnegative and finite")
    if context is None:
        context = FitContext(dataset, spec)
    if context.uses_kernel:
        f_left, f_right, info = context.endpoint_tables(multipliers=eta)
    else:
        f_left, f_right, info = context.endpoint_tables()
    return context.solve_tau(tau, f_left, f_right, row_multipliers=eta, em_info=info)


def _percentile_bounds(draws: np.ndarray, ci_level: float) -> tuple[np.ndarray, np.ndarray]:
    """Order-statistic percentile interval, columnwise on a (B, p) matrix."""
    nb = draws.shape[0]
    alpha = 0.5 * (1.0 - ci_level)
    lo_idx = min(nb - 1, max(0, int(math.floor(alpha * nb))))
    hi_idx = min(nb - 1, max(0, int(math.ceil((1.0 - alpha) * nb)) - 1))
    ordered = np.sort(draws, axis=0)
    return ordered[lo_idx].copy(), ordered[hi_idx].copy()


def bootstrap(dataset: Dataset, tau: float, spec: EstimatorSpec | None = None,
              config: BootstrapConfig | None = None,
              context: FitContext | None = None) -> InferenceResult:
    """Perturbation bootstrap: point fit, replicate draws, se and CIs.

    Replicates whose solve fails are dropped; more than 10% dropped is an
    error. Wald intervals are beta_hat +/- z * se with z from the inverse
    normal CDF; percentile intervals are order statistics of the replicate
    matrix (both recomputable from `replicates`).
    """
    tau = check_tau(tau)
    if spec is None:
        spec = EstimatorSpec()
    if config is None:
        config = BootstrapConfig()
    if context is None:
        context = FitContext(dataset, spec)

    base = fit(dataset, tau, spec, context=context)
    nb = config.n_replicates
    if nb < 2:
        raise ValidationError("bootstrap needs at least 2 replicates")

    n = dataset.n
    betas: list[np.ndarray] = []
    dropped = 0
    for start in range(0, nb, config.chunk):
        reps = list(range(start, min(start + config.chunk, nb)))
        etas = np.stack([multiplier_draws(config.seed, r, n) for r in reps])
        if context.uses_kernel and context.censored_idx.size:
            f_left, f_right, _ = context.endpoint_tables(multipliers=etas)
        else:
            fl, fr, _ = context.endpoint_tables()
            f_left = np.tile(fl, (len(reps), 1))
            f_right = np.tile(fr, (len(reps), 1))
        for k in range(len(reps)):
            try:
                qf = context.solve_tau(tau, f_left[k], f_right[k],
                                       row_multipliers=etas[k])
                betas.append(qf.beta)
            except (NumericalError, ValidationError):
                dropped += 1

    if dropped > 0.10 * nb:
        raise NumericalError(
            f"{dropped}/{nb} bootstrap replicates failed; inference unreliable")
    if len(betas) < 2:
        raise NumericalError("fewer than two usable bootstrap replicates")

    draws = np.vstack(betas)
    se = draws.std(axis=0, ddof=1)
    if config.ci_kind == "wald":
        z = float(ndtri(0.5 * (1.0 + config.ci_level)))
        lo = base.beta - z * se
        hi = base.beta + z * se
    else:
        lo, hi = _percentile_bounds(draws, config.ci_level)
    return InferenceResult(fit=base, se=se, ci_lower=lo, ci_upper=hi,
                           replicates=draws, n_dropped=dropped, config=config)


@dataclass(frozen=True)
class SurvivalBands:
    times: np.ndarray
    survival: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    curve: StepCdf
    n_dropped: int = 0


def survival_bands(dataset: Dataset, config: BootstrapConfig | None = None) -> SurvivalBands:
    """Self-consistency survival curve with pointwise percentile bands.

    Replicates rerun the unconditional estimator with exponential subject
    weights and are evaluated on the base grid. With n_replicates = 0 the
    bands collapse onto the estimate.
    """
    if config is None:
        config = BootstrapConfig()
    base = turnbull(dataset)
    surv = 1.0 - base.values
    if config.n_replicates == 0:
        return SurvivalBands(times=base.times, survival=surv,
                             lower=surv.copy(), upper=surv.copy(), curve=base)
    if config.n_replicates < 2:
        raise ValidationError("survival bands need at least 2 replicates (or 0 for none)")
    draws = np.empty((config.n_replicates, base.times.size))
    dropped = 0
    kept = []
    for r in range(config.n_replicates):
        eta = multiplier_draws(config.seed, r, dataset.n)
        try:
            rep = turnbull(dataset, subject_weights=eta)
            kept.append(1.0 - rep.cdf(base.times))
        except (NumericalError, ValidationError):
            dropped += 1
    if dropped > 0.10 * config.n_replicates or len(kept) < 2:
        raise NumericalError(f"{dropped} survival replicates failed")
    draws = np.vstack(kept)
    lo, hi = _percentile_bounds(draws, config.ci_level)
    return SurvivalBands(times=base.times, survival=surv, lower=lo, upper=hi,
                         curve=base, n_dropped=dropped)
