"""Synthetic data generator for the benchmark studies.

Log-scale linear quantile model

    T = 1.5 + x1 + x2 + sigma(x) * e(tau),   e(tau) = eps - F_eps^{-1}(tau),

with x1 ~ U(-1, 1), x2 ~ Bernoulli(0.5), so the tau-th conditional quantile
is exactly (1.5, 1, 1)'x for every error law and either heteroskedasticity
profile (M1: sigma = 1 + 0.3(1 - x1)^2, M2: sigma = 1 + 0.5(1 - x1)^2).

Censoring: raw-scale study end e^C ~ U(30, 50); inspection times accumulate
from raw origin 0 with U(0.1, 1) gaps and stop at the study end. Under the
PIC scheme a subject is observed exactly with probability p0 - 0.1 x2
provided the event precedes the study end; everyone else is bracketed by
the neighboring inspections (left-/right-censored at the ends). The IC
scheme censors everyone.

All draws come from a counter-based generator keyed (seed, replicate), in a
fixed order (x1, x2, eps, study end, exact-indicator, inspection gaps), so
datasets are reproducible machine-wide.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset
from .errors import ValidationError
from scipy.special import gammaincinv

__all__ = [
    "TRUE_BETA",
    "SimScenario",
    "error_quantile",
    "sigma_x",
    "generate",
    "calibrate_p0",
]

TRUE_BETA = np.array([1.5, 1.0, 1.0])

ERROR_LAWS = ("ev", "logistic", "chisq3")
_EV_LOC, _EV_SCALE = -1.0, 1.0
_LOGISTIC_LOC, _LOGISTIC_SCALE = -2.0, 1.0

# Inspection-process constants (raw time scale).
_END_LO, _END_HI = 30.0, 50.0
_GAP_LO, _GAP_HI = 0.1, 1.0
_CHAIN_BLOCK = 128


@dataclass(frozen=True)
class SimScenario:
    """One simulation configuration.

    p0 = None requests calibration of the exact-observation probability to
    censoring_target (PIC only; IC is always fully censored).
    """

    n: int = 200
    tau: float = 0.5
    error: str = "ev"
    hetero: str = "m1"
    scheme: str = "pic"
    p0: float | None = None
    censoring_target: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValidationError("n must be positive")
        if not (0.0 < self.tau < 1.0):
            raise ValidationError("tau must lie in (0, 1)")
        if self.error not in ERROR_LAWS:
            raise ValidationError(f"error law must be one of {ERROR_LAWS}")
        if self.hetero not in ("m1", "m2"):
            raise ValidationError("hetero must be 'm1' or 'm2'")
        if self.scheme not in ("pic", "ic"):
            raise ValidationError("scheme must be 'pic' or 'ic'")
        if self.p0 is not None and not (0.0 <= self.p0 <= 1.0):
            raise ValidationError("p0 must lie in [0, 1]")
        if not (0.0 <= self.censoring_target <= 1.0):
            raise ValidationError("censoring_target must lie in [0, 1]")


def error_quantile(law: str, u):
    """Quantile function of the raw error law, strictly increasing on (0,1).

    ev:       minimum extreme value, F(x) = 1 - exp(-exp((x - loc)/scale)),
              loc = -1, scale = 1;
    logistic: location -2, scale 1;
    chisq3:   chi-square with 3 dof via incomplete-gamma inversion
              (k = 1.5, theta = 2).
    """
    u = np.asarray(u, dtype=float)
    if ((u <= 0.0) | (u >= 1.0)).any():
        raise ValidationError("quantile argument must lie strictly in (0, 1)")
    if law == "ev":
        return _EV_LOC + _EV_SCALE * np.log(-np.log1p(-u))
    if law == "logistic":
        return _LOGISTIC_LOC + _LOGISTIC_SCALE * (np.log(u) - np.log1p(-u))
    if law == "chisq3":
        return 2.0 * gammaincinv(1.5, u)
    raise ValidationError(f"unknown error law {law!r}")


def sigma_x(hetero: str, x1):
    x1 = np.asarray(x1, dtype=float)
    coef = 0.3 if hetero == "m1" else 0.5
    return 1.0 + coef * (1.0 - x1) ** 2


def _rng(seed: int, replicate: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, replicate])))


def _error_draw(law: str, rng: np.random.Generator, n: int) -> np.ndarray:
    # inverse-transform so every law consumes exactly one uniform per subject
    u = rng.uniform(0.0, 1.0, n)
    u = np.clip(u, 1e-15, 1.0 - 1e-15)
    return np.asarray(error_quantile(law, u))


def _chains(rng: np.random.Generator, n: int, end_raw: np.ndarray) -> list[np.ndarray]:
    """Raw inspection times per subject: cumulative U(0.1, 1) gaps <= end."""
    draws = rng.uniform(_GAP_LO, _GAP_HI, (n, _CHAIN_BLOCK))
    totals = np.cumsum(draws, axis=1)
    chains: list[np.ndarray] = [totals[i] for i in range(n)]
    for i in range(n):
        while chains[i][-1] <= end_raw[i]:
            extra = rng.uniform(_GAP_LO, _GAP_HI, _CHAIN_BLOCK)
            chains[i] = np.concatenate([chains[i], chains[i][-1] + np.cumsum(extra)])
        chains[i] = chains[i][chains[i] <= end_raw[i]]
    return chains


def generate(scenario: SimScenario, replicate: int = 0,
             p0: float | None = None) -> tuple[Dataset, dict]:
    """Draw one dataset; returns (dataset, truth).

    truth carries the latent log times, the study-end log times, the exact
    mask and the true coefficient vector. p0 overrides scenario.p0 (one of
    the two must be set for the PIC scheme).
    """
    if p0 is None:
        p0 = scenario.p0
    if scenario.scheme == "pic" and p0 is None:
        raise ValidationError("PIC scheme needs p0 (set it or calibrate first)")
    rng = _rng(scenario.seed, replicate)
    n = scenario.n

    x1 = rng.uniform(-1.0, 1.0, n)
    x2 = (rng.uniform(0.0, 1.0, n) < 0.5).astype(float)
    eps = _error_draw(scenario.error, rng, n)
    end_raw = rng.uniform(_END_LO, _END_HI, n)
    u_delta = rng.uniform(0.0, 1.0, n)

    center = float(error_quantile(scenario.error, scenario.tau))
    t_log = 1.5 + x1 + x2 + sigma_x(scenario.hetero, x1) * (eps - center)
    t_raw = np.exp(t_log)

    if scenario.scheme == "ic":
        exact = np.zeros(n, dtype=bool)
    else:
        p_exact = np.clip(p0 - 0.1 * x2, 0.0, 1.0)
        exact = (u_delta < p_exact) & (t_raw < end_raw)

    chains = _chains(rng, n, end_raw)

    time = np.full(n, np.nan)
    left = np.empty(n)
    right = np.empty(n)
    for i in range(n):
        if exact[i]:
            time[i] = t_log[i]
            left[i] = t_log[i]
            right[i] = t_log[i]
            continue
        v = chains[i]
        pos = int(np.searchsorted(v, t_raw[i], side="left"))
        if pos == 0:
            left[i] = -np.inf
            right[i] = math.log(v[0])
        elif pos >= v.size:
            left[i] = math.log(v[-1])
            right[i] = np.inf
        else:
            left[i] = math.log(v[pos - 1])
            right[i] = math.log(v[pos])

    covariates = np.column_stack([np.ones(n), x1, x2])
    dataset = Dataset(delta=exact, time=time, left=left, right=right,
                      covariates=covariates)
    truth = {"t_log": t_log, "end_log": np.log(end_raw), "exact": exact,
             "beta": TRUE_BETA.copy(), "p0": p0}
    return dataset, truth


# replicate lane reserved for calibration pilots (never a study replicate)
_PILOT_LANE = 986543210


def calibrate_p0(scenario: SimScenario, target: float | None = None,
                 pilot_n: int = 20000, tol: float = 0.01) -> float:
    """Exact-observation probability hitting the target censoring rate.

    Draws one pilot sample of covariates, errors and study ends, then
    bisects p0 on the exact censored fraction computed from those common
    draws (monotone in p0 by construction). Raises if the target is not
    achievable within tolerance on the feasible p0 range.
    """
    if target is None:
        target = scenario.censoring_target
    if not (0.0 <= target <= 1.0):
        raise ValidationError("target censoring rate must lie in [0, 1]")
    if scenario.scheme == "ic":
        raise ValidationError("IC scheme is fully censored; nothing to calibrate")

    rng = _rng(scenario.seed, _PILOT_LANE)
    x1 = rng.uniform(-1.0, 1.0, pilot_n)
    x2 = (rng.uniform(0.0, 1.0, pilot_n) < 0.5).astype(float)
    eps = _error_draw(scenario.error, rng, pilot_n)
    end_raw = rng.uniform(_END_LO, _END_HI, pilot_n)
    u_delta = rng.uniform(0.0, 1.0, pilot_n)
    center = float(error_quantile(scenario.error, scenario.tau))
    t_raw = np.exp(1.5 + x1 + x2 + sigma_x(scenario.hetero, x1) * (eps - center))
    feasible = t_raw < end_raw

    def censored_fraction(p0: float) -> float:
        exact = (u_delta < np.clip(p0 - 0.1 * x2, 0.0, 1.0)) & feasible
        return 1.0 - float(exact.mean())

    lo, hi = 0.0, 1.0
    f_lo, f_hi = censored_fraction(lo), censored_fraction(hi)
    # censored fraction decreases in p0: f_lo = 1 >= f_hi
    if target > f_lo + tol or target < f_hi - tol:
        raise ValidationError(
            f"censoring rate {target} unachievable (range [{f_hi:.3f}, {f_lo:.3f}])")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if censored_fraction(mid) > target:
            lo = mid
        else:
            hi = mid
    p0 = 0.5 * (lo + hi)
    if abs(censored_fraction(p0) - target) > tol:
        raise ValidationError(
            f"calibration failed to reach censoring rate {target} within {tol}")
    return p0
