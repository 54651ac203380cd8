"""Exact minimization of a weighted quantile check loss.

The problem  min_beta  sum_i w_i rho_tau(t_i - x_i' beta)  is the linear
program

    min  sum_i w_i (tau u_i + (1 - tau) v_i)
    s.t. x_i' beta + u_i - v_i = t_i,   u_i >= 0, v_i >= 0, beta free,

solved with HiGHS dual simplex, which returns a basic (vertex) solution and
is deterministic for a fixed instance. Rows with weight below WEIGHT_EPS are
excluded from the program (they cannot move the minimizer) but the reported
objective is always recomputed on the full row set.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .data import QuantileFit, check_tau
from .errors import NumericalError, ValidationError

__all__ = [
    "WEIGHT_EPS",
    "CheckLossProblem",
    "check_loss",
    "solve",
    "subgradient",
    "subgradient_bound",
]

# Weights below this are treated as exactly zero inside the solver.
WEIGHT_EPS = 1e-12


def check_loss(u, tau: float):
    """Quantile check loss rho_tau(u) = u * (tau - I(u <= 0)), elementwise."""
    u = np.asarray(u, dtype=float)
    return u * (tau - (u <= 0.0))


@dataclass(frozen=True)
class CheckLossProblem:
    """Weighted rows (t_i, x_i, w_i) with the originating subject index.

    origin maps each row back to the subject that produced it (an augmented
    censored subject owns two rows); n_subjects is the number of distinct
    origins and is the n used to normalize estimating functions.
    """

    response: np.ndarray   # (n_rows,)
    design: np.ndarray     # (n_rows, p)
    weights: np.ndarray    # (n_rows,) nonnegative
    origin: np.ndarray     # (n_rows,) int

    def __post_init__(self) -> None:
        object.__setattr__(self, "response", np.asarray(self.response, dtype=float))
        object.__setattr__(self, "design", np.asarray(self.design, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=int))
        t, X, w = self.response, self.design, self.weights
        if X.ndim != 2 or t.shape != (X.shape[0],) or w.shape != t.shape:
            raise ValidationError("problem arrays must be t (n,), X (n, p), w (n,)")
        if not np.isfinite(t).all():
            raise ValidationError("responses must be finite")
        if not np.isfinite(X).all():
            raise ValidationError("design must be finite")
        if not np.isfinite(w).all() or (w < 0).any():
            raise ValidationError("weights must be finite and nonnegative")

    @property
    def n_rows(self) -> int:
        return self.response.shape[0]

    @property
    def p(self) -> int:
        return self.design.shape[1]

    @property
    def n_subjects(self) -> int:
        return int(np.unique(self.origin).size)

    def objective(self, beta, tau: float) -> float:
        """Weighted check loss of beta summed over all rows."""
        resid = self.response - self.design @ np.asarray(beta, dtype=float)
        return float(np.sum(self.weights * check_loss(resid, tau)))


def _dependent_columns(X: np.ndarray) -> list[int]:
    """Indices of columns outside a maximal independent set (QR pivoting)."""
    from scipy.linalg import qr

    _, r, piv = qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(X.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    return sorted(int(j) for j in piv[rank:])


def solve(problem: CheckLossProblem, tau: float) -> QuantileFit:
    """Minimize the weighted check loss exactly; returns a vertex solution."""
    tau = check_tau(tau)
    keep = problem.weights >= WEIGHT_EPS
    n_kept = int(keep.sum())
    p = problem.p
    if n_kept < p:
        raise ValidationError(
            f"need at least p={p} rows with positive weight, have {n_kept}")
    X = problem.design[keep]
    t = problem.response[keep]
    w = problem.weights[keep]

    dep = _dependent_columns(X)
    if dep:
        raise ValidationError(
            "design matrix of positive-weight rows is column rank deficient; "
            f"dependent columns: {dep}")

    n = t.shape[0]
    eye = sparse.eye(n, format="csc")
    a_eq = sparse.hstack([sparse.csc_matrix(X), eye, -eye], format="csc")
    cost = np.concatenate([np.zeros(p), tau * w, (1.0 - tau) * w])
    bounds = [(None, None)] * p + [(0, None)] * (2 * n)
    res = linprog(cost, A_eq=a_eq, b_eq=t, bounds=bounds, method="highs-ds")
    if res.status != 0:
        raise NumericalError(f"check-loss LP failed: {res.message}")
    beta = res.x[:p]
    return QuantileFit(
        beta=beta,
        tau=tau,
        objective=problem.objective(beta, tau),
        n_used=problem.n_rows,
        diagnostics={"rows_in_lp": n, "lp_iterations": int(res.nit),
                     "lp_status": int(res.status)},
    )


def subgradient(problem: CheckLossProblem, beta, tau: float) -> np.ndarray:
    """Estimating function n^{-1} sum_rows w x (tau - I(t - x'beta <= 0)).

    n is the number of distinct subjects, so on augmented data this equals
    the censored-data estimating equation evaluated at beta.
    """
    tau = check_tau(tau)
    beta = np.asarray(beta, dtype=float)
    resid = problem.response - problem.design @ beta
    score = problem.weights * (tau - (resid <= 0.0))
    return problem.design.T @ score / problem.n_subjects


def subgradient_bound(problem: CheckLossProblem) -> float:
    """Max-norm bound on the subgradient at any exact minimizer.

    At a vertex solution at most p distinct (x, t) points sit at zero
    residual, but duplicated rows (common on panel data, where subjects
    share assessment times) all sit there together, so each point can shift
    a component by the summed weight of its copies times ||x||. The bound is
    p * max over distinct points of (sum of w) * ||x|| / n.
    """
    norms = np.linalg.norm(problem.design, axis=1)
    key = np.concatenate([problem.design, problem.response[:, None]], axis=1)
    _, inverse = np.unique(key, axis=0, return_inverse=True)
    group_mass = np.bincount(inverse, weights=problem.weights * norms)
    return problem.p * float(group_mass.max(initial=0.0)) / problem.n_subjects
