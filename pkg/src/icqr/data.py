"""Containers for interval-censored regression samples.

Observations live on the log-time scale. Each subject is either observed
exactly (delta = 1, time T) or censored into an interval (L, R] where L may
be -inf (left censoring) and R may be +inf (right censoring). Covariate
vectors carry an explicit leading intercept of 1.0.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

__all__ = [
    "CensoringClass",
    "Observation",
    "Dataset",
    "QuantileFit",
    "classify",
    "check_tau",
]


class CensoringClass(enum.Enum):
    EXACT = "exact"
    INTERVAL = "interval"
    LEFT_CENSORED = "left_censored"
    RIGHT_CENSORED = "right_censored"


def check_tau(tau: float) -> float:
    """Validate a quantile level; must lie strictly inside (0, 1)."""
    tau = float(tau)
    if not (0.0 < tau < 1.0) or math.isnan(tau):
        raise ValidationError(f"quantile level must lie in (0, 1), got {tau!r}")
    return tau


@dataclass(frozen=True)
class Observation:
    """One subject.

    delta       exact-observation indicator
    time        exact log time (nan for censored rows)
    left, right censoring interval (L, R]; for exact rows L = R = T
    covariates  x with covariates[0] == 1.0
    """

    delta: bool
    time: float
    left: float
    right: float
    covariates: tuple[float, ...]

    @staticmethod
    def exact(time: float, covariates: Sequence[float]) -> "Observation":
        t = float(time)
        return Observation(True, t, t, t, tuple(float(v) for v in covariates))

    @staticmethod
    def censored(left: float, right: float, covariates: Sequence[float]) -> "Observation":
        return Observation(False, math.nan, float(left), float(right),
                           tuple(float(v) for v in covariates))


def classify(obs: Observation) -> CensoringClass:
    """Censoring class of a (valid) observation."""
    if obs.delta:
        return CensoringClass.EXACT
    if math.isinf(obs.left) and obs.left < 0:
        return CensoringClass.LEFT_CENSORED
    if math.isinf(obs.right) and obs.right > 0:
        return CensoringClass.RIGHT_CENSORED
    return CensoringClass.INTERVAL


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Immutable sample of n subjects with p covariates (intercept included).

    Arrays are the primary representation; `observations` materializes rows
    on demand. Construction validates everything and raises ValidationError
    naming the first offending row for each violated rule.
    """

    delta: np.ndarray       # (n,) bool
    time: np.ndarray        # (n,) float, nan where censored
    left: np.ndarray        # (n,) float, -inf allowed
    right: np.ndarray       # (n,) float, +inf allowed
    covariates: np.ndarray  # (n, p) float, column 0 is the intercept

    def __post_init__(self) -> None:
        object.__setattr__(self, "delta", _readonly(np.asarray(self.delta, dtype=bool)))
        for name in ("time", "left", "right"):
            object.__setattr__(self, name, _readonly(np.asarray(getattr(self, name), dtype=float)))
        object.__setattr__(self, "covariates",
                           _readonly(np.asarray(self.covariates, dtype=float)))
        validate(self)

    @staticmethod
    def from_observations(observations: Iterable[Observation]) -> "Dataset":
        rows = list(observations)
        if not rows:
            raise ValidationError("dataset must contain at least one observation")
        p = len(rows[0].covariates)
        for i, obs in enumerate(rows):
            if len(obs.covariates) != p:
                raise ValidationError(
                    f"observation {i} has {len(obs.covariates)} covariates, expected {p}")
        return Dataset(
            delta=np.array([o.delta for o in rows], dtype=bool),
            time=np.array([o.time for o in rows], dtype=float),
            left=np.array([o.left for o in rows], dtype=float),
            right=np.array([o.right for o in rows], dtype=float),
            covariates=np.array([o.covariates for o in rows], dtype=float),
        )

    @property
    def n(self) -> int:
        return self.delta.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    @cached_property
    def observations(self) -> tuple[Observation, ...]:
        return tuple(
            Observation(bool(self.delta[i]), float(self.time[i]), float(self.left[i]),
                        float(self.right[i]), tuple(self.covariates[i]))
            for i in range(self.n))

    @cached_property
    def censoring_classes(self) -> tuple[CensoringClass, ...]:
        return tuple(classify(o) for o in self.observations)


def validate(dataset: Dataset) -> None:
    """Check structural coherence; raise ValidationError listing violations.

    Rules: covariates finite with intercept column exactly 1.0; exact rows
    have finite T with L = R = T; censored rows have L < R with at least one
    finite endpoint (a row censored to (-inf, +inf) carries no information
    and is rejected); no NaN endpoints.
    """
    problems: list[str] = []
    d, t = dataset.delta, dataset.time
    lo, hi, x = dataset.left, dataset.right, dataset.covariates

    if dataset.n == 0:
        raise ValidationError("dataset must contain at least one observation")
    if x.ndim != 2 or x.shape[0] != dataset.n:
        raise ValidationError("covariate matrix must be (n, p)")
    for name, arr in (("time", t), ("left", lo), ("right", hi)):
        if arr.shape != (dataset.n,):
            raise ValidationError(f"{name} must be a length-n vector")

    def first(mask: np.ndarray) -> int:
        return int(np.flatnonzero(mask)[0])

    bad = ~np.isfinite(x).all(axis=1)
    if bad.any():
        problems.append(f"observation {first(bad)}: non-finite covariate value")
    bad = x[:, 0] != 1.0
    if bad.any():
        problems.append(f"observation {first(bad)}: covariates[0] must be the intercept 1.0")

    ex = d
    bad = ex & ~np.isfinite(t)
    if bad.any():
        problems.append(f"observation {first(bad)}: exact row needs a finite time")
    ok_t = ex & np.isfinite(t)
    bad = ok_t & ((lo != t) | (hi != t))
    if bad.any():
        problems.append(f"observation {first(bad)}: exact row must have left = right = time")

    ce = ~d
    bad = ce & (np.isnan(lo) | np.isnan(hi))
    if bad.any():
        problems.append(f"observation {first(bad)}: censored endpoints may not be NaN")
    ok_e = ce & ~np.isnan(lo) & ~np.isnan(hi)
    bad = ok_e & ~(lo < hi)
    if bad.any():
        problems.append(f"observation {first(bad)}: censored row needs left < right")
    bad = ok_e & np.isneginf(lo) & np.isposinf(hi)
    if bad.any():
        problems.append(
            f"observation {first(bad)}: interval (-inf, +inf) carries no information")
    bad = ce & ~np.isnan(t)
    if bad.any():
        problems.append(f"observation {first(bad)}: censored row must leave time unset (nan)")

    if problems:
        raise ValidationError("invalid dataset:\n  " + "\n  ".join(problems))


@dataclass(frozen=True)
class QuantileFit:
    """Result of one weighted quantile regression solve.

    objective is the weighted check loss summed over all augmented rows
    (including any zero-weight rows) evaluated at beta; n_used counts the
    rows handed to the construction. diagnostics carries solver/EM metadata.
    """

    beta: np.ndarray
    tau: float
    objective: float
    n_used: int
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "beta", _readonly(np.asarray(self.beta, dtype=float)))
