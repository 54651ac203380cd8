"""Product-kernel weights for local distribution estimation.

Continuous covariates use a Gaussian kernel with per-covariate Silverman
bandwidths; binary covariates use an exact-match kernel that down-weights
mismatches by a fixed factor; constant columns (the intercept) contribute
factor 1. Weights are normalized to sum to one over the sample.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset
from .errors import NumericalError, ValidationError

__all__ = [
    "KernelSpec",
    "silverman_bandwidth",
    "auto_kernel_spec",
    "nw_weights",
    "nw_weight_matrix",
]

_GAUSS_NORM = 1.0 / math.sqrt(2.0 * math.pi)
DEFAULT_MISMATCH = 0.1


def silverman_bandwidth(values) -> float:
    """Rule-of-thumb bandwidth 1.06 * min(sd, iqr/1.349) * n^(-1/5)."""
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 2:
        raise ValidationError("bandwidth rule needs at least two observations")
    sd = float(np.std(x, ddof=1))
    q1, q3 = np.percentile(x, [25.0, 75.0])
    scale = min(sd, (q3 - q1) / 1.349)
    if scale <= 0.0:
        raise ValidationError(
            "covariate has zero spread; supply an explicit bandwidth")
    return 1.06 * scale * n ** (-0.2)


@dataclass(frozen=True)
class KernelSpec:
    """Per-column kernel layout.

    kinds[j] is "constant", "discrete", or "continuous"; bandwidths[j] is the
    Gaussian bandwidth for continuous columns and nan otherwise. mismatch is
    the discrete-kernel penalty for unequal values.
    """

    kinds: tuple[str, ...]
    bandwidths: tuple[float, ...]
    mismatch: float = DEFAULT_MISMATCH

    def __post_init__(self) -> None:
        if len(self.kinds) != len(self.bandwidths):
            raise ValidationError("kinds and bandwidths must align")
        for k, h in zip(self.kinds, self.bandwidths):
            if k not in ("constant", "discrete", "continuous"):
                raise ValidationError(f"unknown kernel kind {k!r}")
            if k == "continuous" and not (h > 0.0 and math.isfinite(h)):
                raise ValidationError(f"continuous bandwidth must be positive, got {h}")
        if not (0.0 < self.mismatch <= 1.0):
            raise ValidationError("mismatch factor must lie in (0, 1]")

    @property
    def continuous_columns(self) -> tuple[int, ...]:
        return tuple(j for j, k in enumerate(self.kinds) if k == "continuous")


def auto_kernel_spec(dataset: Dataset,
                     bandwidths: float | Sequence[float] | Mapping[int, float] | None = None,
                     mismatch: float = DEFAULT_MISMATCH) -> KernelSpec:
    """Infer the kernel layout from the data.

    Columns with one distinct value are constant, with two are binary
    (exact-match kernel), otherwise continuous with a Silverman bandwidth.
    `bandwidths` overrides the continuous bandwidths: a scalar applies to all
    continuous columns, a sequence is matched to them in column order, and a
    mapping is keyed by column index.
    """
    x = dataset.covariates
    kinds: list[str] = []
    for j in range(x.shape[1]):
        levels = np.unique(x[:, j])
        if levels.size <= 1:
            kinds.append("constant")
        elif levels.size <= 2:
            kinds.append("discrete")
        else:
            kinds.append("continuous")

    cont = [j for j, k in enumerate(kinds) if k == "continuous"]
    hs = {j: math.nan for j in range(x.shape[1])}
    if bandwidths is None:
        for j in cont:
            hs[j] = silverman_bandwidth(x[:, j])
    elif isinstance(bandwidths, Mapping):
        for j in cont:
            hs[j] = float(bandwidths[j]) if j in bandwidths else silverman_bandwidth(x[:, j])
    elif np.isscalar(bandwidths):
        for j in cont:
            hs[j] = float(bandwidths)
    else:
        given = [float(v) for v in bandwidths]
        if len(given) != len(cont):
            raise ValidationError(
                f"{len(cont)} continuous covariates but {len(given)} bandwidths given")
        for j, h in zip(cont, given):
            hs[j] = h
    return KernelSpec(kinds=tuple(kinds),
                      bandwidths=tuple(hs[j] for j in range(x.shape[1])),
                      mismatch=mismatch)


def _raw_weight_matrix(x: np.ndarray, targets: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Unnormalized product-kernel weights, shape (n_targets, n)."""
    if targets.ndim != 2 or targets.shape[1] != x.shape[1]:
        raise ValidationError("targets must be (n_targets, p)")
    n_t = targets.shape[0]
    raw = np.ones((n_t, x.shape[0]))
    for j, kind in enumerate(spec.kinds):
        if kind == "constant":
            continue
        col = x[:, j][None, :]
        tgt = targets[:, j][:, None]
        if kind == "discrete":
            raw *= np.where(col == tgt, 1.0, spec.mismatch)
        else:
            h = spec.bandwidths[j]
            z = (tgt - col) / h
            raw *= (_GAUSS_NORM / h) * np.exp(-0.5 * z * z)
    return raw


def nw_weight_matrix(dataset: Dataset, targets: np.ndarray, spec: KernelSpec,
                     multipliers: np.ndarray | None = None) -> np.ndarray:
    """Normalized kernel weights for each target row; rows sum to one.

    multipliers (length n) scale each subject's raw kernel value before
    normalization; the perturbation bootstrap passes its draws here.
    """
    raw = _raw_weight_matrix(dataset.covariates, np.asarray(targets, dtype=float), spec)
    if multipliers is not None:
        raw = raw * np.asarray(multipliers, dtype=float)[None, :]
    total = raw.sum(axis=1)
    if (total <= 0.0).any():
        bad = int(np.flatnonzero(total <= 0.0)[0])
        raise NumericalError(
            f"all kernel weights underflowed to zero at target {bad}; "
            "increase the bandwidth")
    return raw / total[:, None]


def nw_weights(dataset: Dataset, x0, spec: KernelSpec,
               multipliers: np.ndarray | None = None) -> np.ndarray:
    """Normalized kernel weights at a single target point."""
    x0 = np.asarray(x0, dtype=float).reshape(1, -1)
    return nw_weight_matrix(dataset, x0, spec, multipliers)[0]
