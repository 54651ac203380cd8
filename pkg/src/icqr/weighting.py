"""Redistribution-of-mass weights and the augmented pseudo dataset.

A censored subject with interval (L, R] contributes two pseudo rows, at L
with weight w and at R with weight 1 - w, where w is the conditional
probability that the latent time falls at or below the tau-th conditional
quantile given the interval:

    w = 1                                if F(L|x) >= tau
    w = (tau - F(L|x))/(F(R|x) - F(L|x)) if F(L|x) < tau < F(R|x)
    w = 0                                if F(R|x) <= tau

Left-censored rows use w = tau / F(R|x) (capped at 1), right-censored rows
w = (tau - F(L|x))/(1 - F(L|x)) (floored at 0). Infinite endpoints are
replaced by -/+ m_star in the pseudo responses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Protocol, runtime_checkable

import numpy as np

from .data import CensoringClass, Dataset, check_tau
from .errors import ValidationError
from .solver import CheckLossProblem

__all__ = [
    "DENOM_EPS",
    "CdfProvider",
    "local_weight",
    "default_m_star",
    "endpoint_cdf_table",
    "build_augmented",
    "build_zfd_augmented",
    "is_indeterminate",
]

# Denominators below this are treated as degenerate (mass-zero) cases.
DENOM_EPS = 1e-12

# Default half-width of the coefficient box used to size m_star.
BETA_BOX_RADIUS = 10.0


@runtime_checkable
class CdfProvider(Protocol):
    """Conditional distribution estimate: F(t | x) for scalar t, vector x."""

    def conditional_cdf(self, t: float, x: np.ndarray) -> float: ...


def _as_provider(provider) -> Callable[[float, np.ndarray], float]:
    if isinstance(provider, CdfProvider):
        return provider.conditional_cdf
    if callable(provider):
        return provider
    raise ValidationError("cdf provider must expose conditional_cdf(t, x) or be callable")


def local_weight(f_left: float, f_right: float, tau: float,
                 kind: CensoringClass) -> float:
    """Left-endpoint weight for one censored subject.

    f_left is F(L|x) with the convention F(-inf|x) = 0; f_right is F(R|x)
    with F(+inf|x) = 1. Always lands in [0, 1].
    """
    tau = check_tau(tau)
    f_left = float(f_left)
    f_right = float(f_right)
    if math.isnan(f_left) or math.isnan(f_right):
        raise ValidationError("cdf values may not be NaN")
    if not (0.0 <= f_left <= f_right <= 1.0):
        raise ValidationError(
            f"need 0 <= F(L|x) <= F(R|x) <= 1, got ({f_left}, {f_right})")

    if kind == CensoringClass.EXACT:
        raise ValidationError("exact observations carry weight 1 directly")

    if kind == CensoringClass.LEFT_CENSORED:
        if f_right < DENOM_EPS:
            return 1.0
        return min(1.0, tau / f_right)

    if kind == CensoringClass.RIGHT_CENSORED:
        if f_left >= tau:
            return 0.0
        denom = 1.0 - f_left
        if denom < DENOM_EPS:
            return 0.0
        return min(1.0, (tau - f_left) / denom)

    # interval censored
    if f_left >= tau:
        return 1.0
    if f_right <= tau:
        return 0.0
    denom = f_right - f_left
    if denom < DENOM_EPS:
        # both cdf values straddle tau within rounding; split by midpoint
        return 1.0 if tau <= 0.5 * (f_left + f_right) else 0.0
    return (tau - f_left) / denom


def is_indeterminate(f_left: float, f_right: float, tau: float) -> bool:
    """True when the interval straddles the tau-th conditional quantile.

    These are the subjects whose residual sign is genuinely unknown; the
    zero-for-discard baseline drops exactly these.
    """
    return f_left < tau < f_right


def default_m_star(dataset: Dataset, box_radius: float = BETA_BOX_RADIUS) -> float:
    """Surrogate magnitude for infinite endpoints.

    10 * (largest finite |endpoint| + max ||x_i|| * box_radius), which
    dominates |x'beta| over the coefficient box of the given radius.
    """
    finite = []
    for arr in (dataset.time, dataset.left, dataset.right):
        vals = arr[np.isfinite(arr)]
        if vals.size:
            finite.append(np.abs(vals).max())
    endpoint = max(finite) if finite else 0.0
    xnorm = float(np.linalg.norm(dataset.covariates, axis=1).max())
    return 10.0 * (float(endpoint) + xnorm * float(box_radius))


def endpoint_cdf_table(dataset: Dataset, provider) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate F(L_i|x_i), F(R_i|x_i) for every censored subject.

    Returns (f_left, f_right) length-n arrays, nan on exact rows. Infinite
    endpoints are mapped to 0 and 1 without consulting the provider, so the
    provider is called exactly once per finite censored endpoint.
    """
    f = _as_provider(provider)
    n = dataset.n
    f_left = np.full(n, np.nan)
    f_right = np.full(n, np.nan)
    for i in np.flatnonzero(~dataset.delta):
        x = dataset.covariates[i]
        lo, hi = dataset.left[i], dataset.right[i]
        f_left[i] = 0.0 if np.isneginf(lo) else float(f(float(lo), x))
        f_right[i] = 1.0 if np.isposinf(hi) else float(f(float(hi), x))
    return f_left, f_right


@dataclass(frozen=True)
class AugmentedData:
    """Check-loss problem plus the per-subject weight bookkeeping."""

    problem: CheckLossProblem
    side: np.ndarray          # (n_rows,) str: "exact" | "left" | "right"
    subject_weight: np.ndarray  # (n,) w_i for censored subjects, nan for exact
    m_star: float
    tau: float


def _assemble(dataset: Dataset, f_left: np.ndarray, f_right: np.ndarray,
              tau: float, m_star: float | None, zero_indeterminate: bool) -> AugmentedData:
    tau = check_tau(tau)
    if m_star is None:
        m_star = default_m_star(dataset)
    m_star = float(m_star)
    if not (m_star > 0.0):
        raise ValidationError(f"m_star must be positive, got {m_star}")

    classes = dataset.censoring_classes
    resp: list[float] = []
    wgt: list[float] = []
    rows_x: list[np.ndarray] = []
    origin: list[int] = []
    side: list[str] = []
    subject_w = np.full(dataset.n, np.nan)

    for i in range(dataset.n):
        x = dataset.covariates[i]
        if dataset.delta[i]:
            resp.append(float(dataset.time[i]))
            wgt.append(1.0)
            rows_x.append(x)
            origin.append(i)
            side.append("exact")
            continue
        fl = float(f_left[i])
        fr = float(f_right[i])
        w = local_weight(fl, fr, tau, classes[i])
        if zero_indeterminate and is_indeterminate(fl, fr, tau):
            w_left, w_right = 0.0, 0.0
        else:
            w_left, w_right = w, 1.0 - w
        subject_w[i] = w
        lo = dataset.left[i]
        hi = dataset.right[i]
        resp.append(-m_star if np.isneginf(lo) else float(lo))
        wgt.append(w_left)
        rows_x.append(x)
        origin.append(i)
        side.append("left")
        resp.append(m_star if np.isposinf(hi) else float(hi))
        wgt.append(w_right)
        rows_x.append(x)
        origin.append(i)
        side.append("right")

    problem = CheckLossProblem(
        response=np.array(resp), design=np.array(rows_x),
        weights=np.array(wgt), origin=np.array(origin))
    return AugmentedData(problem=problem, side=np.array(side),
                         subject_weight=subject_w, m_star=m_star, tau=tau)


def build_augmented(dataset: Dataset, provider, tau: float,
                    m_star: float | None = None) -> AugmentedData:
    """Augmented pseudo dataset for the redistribution-of-mass estimator.

    Exact subjects give one weight-1 row at T; censored subjects give rows
    at (L or -m_star) and (R or +m_star) with weights w and 1 - w. Weight-0
    rows are kept so downstream bookkeeping sees every subject.
    """
    f_left, f_right = endpoint_cdf_table(dataset, provider)
    return _assemble(dataset, f_left, f_right, tau, m_star, zero_indeterminate=False)


def build_zfd_augmented(dataset: Dataset, provider, tau: float,
                        m_star: float | None = None) -> AugmentedData:
    """Zero-for-discard baseline: indeterminate subjects get weight 0.

    Subjects whose interval straddles tau (F(L|x) < tau < F(R|x)) contribute
    zero weight on both rows; all other subjects are weighted as in
    build_augmented.
    """
    f_left, f_right = endpoint_cdf_table(dataset, provider)
    return _assemble(dataset, f_left, f_right, tau, m_star, zero_indeterminate=True)


def assemble_augmented(dataset: Dataset, f_left: np.ndarray, f_right: np.ndarray,
                       tau: float, m_star: float | None = None,
                       zero_indeterminate: bool = False) -> AugmentedData:
    """Assemble rows from precomputed endpoint cdf values (fast path)."""
    return _assemble(dataset, f_left, f_right, tau, m_star, zero_indeterminate)
