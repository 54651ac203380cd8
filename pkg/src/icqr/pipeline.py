"""End-to-end estimators: conditional-CDF plug-in -> weights -> check loss.

Estimator variants:

* "ks":     kernel-smoothed conditional CDF (the local EM) feeding the
            redistribution-of-mass weights;
* "zfd":    same plug-in, but subjects whose interval straddles tau get
            weight zero (zero-for-discard baseline);
* "plugin": a user-supplied CdfProvider replaces the kernel EM.

The conditional CDF does not depend on tau, so one fit context serves a
whole quantile grid and all bootstrap refits on the same data.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset, QuantileFit, check_tau
from .errors import ValidationError
from .kernels import KernelSpec, _raw_weight_matrix, auto_kernel_spec, DEFAULT_MISMATCH
from .npmle import EM_MAX_ITER, EM_TOL, _em_batch, _EmWorkspace

from .solver import CheckLossProblem, solve, subgradient, subgradient_bound
from .weighting import assemble_augmented, default_m_star, endpoint_cdf_table

# iteration cap for the one-off shared starting curve (not the estimator cap)
INIT_MAX_ITER = 1000

__all__ = ["EstimatorSpec", "FitContext", "fit", "quantile_process"]

_METHODS = ("ks", "zfd", "plugin")


@dataclass(frozen=True)
class EstimatorSpec:
    """Configuration of one estimator variant.

    bandwidths follows auto_kernel_spec (None = Silverman rule); kernel, if
    given, overrides bandwidth inference entirely. m_star None means the
    default surrogate-magnitude formula.
    """

    method: str = "ks"
    kernel: KernelSpec | None = None
    bandwidths: object = None
    mismatch: float = DEFAULT_MISMATCH
    m_star: float | None = None
    cdf_tol: float = EM_TOL
    cdf_max_iter: int = EM_MAX_ITER
    provider: object = None

    def __post_init__(self) -> None:
        if self.method not in _METHODS:
            raise ValidationError(f"method must be one of {_METHODS}, got {self.method!r}")
        if self.method == "plugin" and self.provider is None:
            raise ValidationError("plugin method requires a cdf provider")


class FitContext:
    """Everything about (dataset, spec) that is shared across tau values,
    estimator variants, and bootstrap replicates: the EM workspace, the raw
    kernel matrix at censored subjects' covariates, endpoint grid positions,
    and the resolved m_star."""

    def __init__(self, dataset: Dataset, spec: EstimatorSpec):
        self.dataset = dataset
        self.spec = spec
        self.m_star = spec.m_star if spec.m_star is not None else default_m_star(dataset)
        self.censored_idx = np.flatnonzero(~dataset.delta)
        self.uses_kernel = spec.method != "plugin"
        self.kernel: KernelSpec | None = None
        # unperturbed-table cache, shared by reference across with_spec clones
        self._cache: dict = {}

        if self.uses_kernel and self.censored_idx.size:
            self.kernel = spec.kernel if spec.kernel is not None else auto_kernel_spec(
                dataset, bandwidths=spec.bandwidths, mismatch=spec.mismatch)
            self.workspace = _EmWorkspace(dataset)
            targets = dataset.covariates[self.censored_idx]
            self.raw_kernel = _raw_weight_matrix(dataset.covariates, targets, self.kernel)
            grid = self.workspace.grid
            lo = dataset.left[self.censored_idx]
            hi = dataset.right[self.censored_idx]
            self.finite_left = np.isfinite(lo)
            self.finite_right = np.isfinite(hi)
            self.pos_left = np.searchsorted(grid, np.where(self.finite_left, lo, grid[0]),
                                            side="right") - 1
            self.pos_right = np.searchsorted(grid, np.where(self.finite_right, hi, grid[0]),
                                             side="right") - 1
        elif self.uses_kernel:
            self.kernel = spec.kernel if spec.kernel is not None else auto_kernel_spec(
                dataset, bandwidths=spec.bandwidths, mismatch=spec.mismatch)

    def with_spec(self, spec: EstimatorSpec) -> "FitContext":
        """Share this context's workspace and caches with another variant.

        Only fields that do not touch the conditional-CDF stage may differ
        (ks vs zfd); anything affecting the kernel or EM must match.
        """
        same = (spec.kernel == self.spec.kernel
                and spec.bandwidths == self.spec.bandwidths
                and spec.mismatch == self.spec.mismatch
                and spec.m_star == self.spec.m_star
                and spec.cdf_tol == self.spec.cdf_tol
                and spec.cdf_max_iter == self.spec.cdf_max_iter
                and (spec.method == "plugin") == (self.spec.method == "plugin"))
        if not same:
            return FitContext(self.dataset, spec)
        clone = object.__new__(FitContext)
        clone.__dict__ = dict(self.__dict__)
        clone.spec = spec
        return clone

    def _shared_init(self) -> np.ndarray:
        """Starting hazard increments shared by every localized EM run.

        The uniform-increment start spends most of its iteration budget on a
        slow tail transient common to all weightings, so each run starts from
        the converged uniform-weight curve instead (the starting point is a
        free choice; this one is deterministic and shared by base and
        perturbed fits alike).
        """
        init = self._cache.get("init")
        if init is None:
            n = self.dataset.n
            b = np.full((1, n), 1.0 / n)
            dlam, _, _, _, _ = _em_batch(self.workspace, b, None,
                                         self.spec.cdf_tol, INIT_MAX_ITER)
            init = dlam[0]
            self._cache["init"] = init
        return init

    def _weights_from_multipliers(self, multipliers: np.ndarray | None) -> np.ndarray:
        """Row-normalized kernel weights, multipliers applied pre-normalization.

        multipliers may be (n,) or (B, n); output is (B * n_targets, n)."""
        raw = self.raw_kernel
        if multipliers is None:
            b = raw
        else:
            eta = np.asarray(multipliers, dtype=float)
            if eta.ndim == 1:
                b = raw * eta[None, :]
            else:
                b = (raw[None, :, :] * eta[:, None, :]).reshape(-1, raw.shape[1])
        total = b.sum(axis=1, keepdims=True)
        if (total <= 0.0).any():
            from .errors import NumericalError

            raise NumericalError("kernel weights sum to zero under the given multipliers")
        return b / total

    def _tables_from_dlam(self, dlam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """F(L_i|x_i), F(R_i|x_i) (full-length arrays) from batch increments."""
        n_c = self.censored_idx.size
        batches = dlam.shape[0] // n_c
        lam = np.cumsum(dlam, axis=1)
        lam = np.concatenate([np.zeros((lam.shape[0], 1), dtype=lam.dtype), lam], axis=1)
        rows = np.arange(dlam.shape[0])
        tile = lambda a: np.tile(a, batches)  # noqa: E731
        fl_c = np.where(tile(self.finite_left),
                        -np.expm1(-lam[rows, tile(self.pos_left + 1)]), 0.0)
        fr_c = np.where(tile(self.finite_right),
                        -np.expm1(-lam[rows, tile(self.pos_right + 1)]), 1.0)
        n = self.dataset.n
        f_left = np.full((batches, n), np.nan)
        f_right = np.full((batches, n), np.nan)
        f_left[:, self.censored_idx] = fl_c.reshape(batches, n_c)
        f_right[:, self.censored_idx] = fr_c.reshape(batches, n_c)
        return f_left, f_right

    def endpoint_tables(self, multipliers: np.ndarray | None = None):
        """Conditional CDF values at each censored subject's own endpoints.

        Returns (f_left, f_right, info) where the tables are (B, n) for a
        (B, n) multiplier batch and (n,) otherwise. Every EM starts from the
        same uniform increments, so a perturbed run is the plain estimator
        applied to the perturbed weights; the unperturbed table is cached.
        """
        ds = self.dataset
        spec = self.spec
        if not self.uses_kernel:
            if multipliers is not None and np.ndim(multipliers) > 1:
                raise ValidationError("plugin providers cannot be batch-perturbed")
            f_left, f_right = endpoint_cdf_table(ds, spec.provider)
            return f_left, f_right, {"targets": int(self.censored_idx.size)}
        if self.censored_idx.size == 0:
            empty = np.full(ds.n, np.nan)
            if multipliers is not None and np.ndim(multipliers) > 1:
                k = np.asarray(multipliers).shape[0]
                return (np.tile(empty, (k, 1)), np.tile(empty, (k, 1)),
                        {"targets": 0, "converged": 0, "max_iterations": 0})
            return empty, empty.copy(), {"targets": 0, "converged": 0, "max_iterations": 0}

        if multipliers is None and "table" in self._cache:
            return self._cache["table"]

        b = self._weights_from_multipliers(multipliers)
        dlam, iters, _, conv, dropped = _em_batch(
            self.workspace, b, self._shared_init(), spec.cdf_tol, spec.cdf_max_iter)
        info = {
            "targets": int(b.shape[0]),
            "converged": int(conv.sum()),
            "max_iterations": int(iters.max(initial=0)),
            "median_iterations": float(np.median(iters)) if iters.size else 0.0,
            "dropped_grid_points": dropped,
        }
        f_left, f_right = self._tables_from_dlam(dlam)
        if multipliers is None or np.ndim(multipliers) == 1:
            f_left, f_right = f_left[0], f_right[0]
        if multipliers is None:
            self._cache["table"] = (f_left, f_right, info)
        return f_left, f_right, info

    def solve_tau(self, tau: float, f_left: np.ndarray, f_right: np.ndarray,
                  row_multipliers: np.ndarray | None = None,
                  em_info: dict | None = None) -> QuantileFit:
        """Assemble the augmented rows for tau and run the exact solver."""
        aug = assemble_augmented(self.dataset, f_left, f_right, tau,
                                 m_star=self.m_star,
                                 zero_indeterminate=(self.spec.method == "zfd"))
        problem = aug.problem
        if row_multipliers is not None:
            eta = np.asarray(row_multipliers, dtype=float)
            problem = CheckLossProblem(
                response=problem.response, design=problem.design,
                weights=problem.weights * eta[problem.origin], origin=problem.origin)
        qf = solve(problem, tau)
        grad = subgradient(problem, qf.beta, tau)
        diagnostics = dict(qf.diagnostics)
        diagnostics.update({
            "method": self.spec.method,
            "m_star": self.m_star,
            "subgradient_max": float(np.abs(grad).max()),
            "subgradient_bound": subgradient_bound(problem),
        })
        if self.kernel is not None:
            diagnostics["bandwidths"] = tuple(
                float(h) for h in self.kernel.bandwidths)
        if em_info:
            diagnostics["em"] = em_info
        return replace(qf, diagnostics=diagnostics)


def fit(dataset: Dataset, tau: float, spec: EstimatorSpec | None = None,
        context: FitContext | None = None) -> QuantileFit:
    """Estimate the tau-th conditional quantile coefficients."""
    tau = check_tau(tau)
    if context is None:
        context = FitContext(dataset, spec if spec is not None else EstimatorSpec())
    f_left, f_right, info = context.endpoint_tables()
    return context.solve_tau(tau, f_left, f_right, em_info=info)


def quantile_process(dataset: Dataset, taus: Sequence[float],
                     spec: EstimatorSpec | None = None,
                     context: FitContext | None = None) -> list[QuantileFit]:
    """Fits over a tau grid, reusing the tau-free conditional CDF."""
    taus = [check_tau(t) for t in taus]
    if context is None:
        context = FitContext(dataset, spec if spec is not None else EstimatorSpec())
    f_left, f_right, info = context.endpoint_tables()
    return [context.solve_tau(t, f_left, f_right, em_info=info) for t in taus]
