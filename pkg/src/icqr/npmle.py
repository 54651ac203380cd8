"""Nonparametric distribution estimation for interval-censored samples.

Two estimators share the support grid built from the observed finite
endpoints:

* a kernel-localized EM in the cumulative-hazard parametrization
  (`fit_local_cdf`): latent Poisson increments on the grid, weighted by
  Nadaraya-Watson kernel weights, output F(t|x0) = 1 - exp(-Lambda(t|x0));
* the classical unconditional self-consistency estimator (`turnbull`): a
  mass-redistribution fixed point whose converged value satisfies the
  self-consistency display; it reduces to the ECDF on uncensored data.

Grid convention: F is a right-continuous step function, constant at its
last grid value for larger finite arguments, with F(-inf) = 0, F(+inf) = 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import sparse

from .data import Dataset
from .errors import NumericalError, ValidationError
from .kernels import KernelSpec, auto_kernel_spec, nw_weights

__all__ = [
    "EM_TOL",
    "EM_MAX_ITER",
    "StepCdf",
    "support_grid",
    "effective_time",
    "em_e_step",
    "em_m_step",
    "loglikelihood",
    "fit_local_cdf",
    "fit_weighted_cdf",
    "KernelCdfProvider",
    "turnbull",
    "self_consistency_residual",
]

EM_TOL = 1e-5
EM_MAX_ITER = 100
TURNBULL_MAX_ITER = 1000


@dataclass(frozen=True)
class StepCdf:
    """Right-continuous step CDF on a finite grid.

    values[j] = F(times[j]). For hazard-EM output cum_hazard is set; for the
    self-consistency estimator mass/tail_mass are set (tail_mass is the
    probability beyond the last grid point, so values[-1] + tail_mass = 1 up
    to round-off).
    """

    times: np.ndarray
    values: np.ndarray
    iterations: int = 0
    converged: bool = True
    delta: float = 0.0
    cum_hazard: np.ndarray | None = None
    mass: np.ndarray | None = None
    tail_mass: float = 0.0
    loglik_trace: tuple[float, ...] | None = None

    def cdf(self, t):
        tt = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, tt, side="right")
        padded = np.concatenate([[0.0], self.values])
        out = padded[idx]
        out = np.where(np.isposinf(tt), 1.0, out)
        if np.ndim(t) == 0:
            return float(out)
        return out

    # CdfProvider seam; the curve is unconditional so x is ignored.
    def conditional_cdf(self, t, x=None) -> float:
        return float(self.cdf(t))


def support_grid(dataset: Dataset) -> np.ndarray:
    """Sorted unique finite endpoints: exact times, censored finite L and R."""
    d = dataset.delta
    parts = [dataset.time[d],
             dataset.left[~d][np.isfinite(dataset.left[~d])],
             dataset.right[~d][np.isfinite(dataset.right[~d])]]
    grid = np.unique(np.concatenate(parts))
    if grid.size == 0:
        raise ValidationError("no finite endpoints to build a support grid from")
    return grid


def effective_time(dataset: Dataset) -> np.ndarray:
    """T-tilde: T for exact rows, else R when finite, else L."""
    d = dataset.delta
    out = np.where(d, dataset.time,
                   np.where(np.isfinite(dataset.right), dataset.right, dataset.left))
    return out


class _EmWorkspace:
    """Grid, positions and scatter matrices shared by EM runs on one dataset.

    The update works in positions rather than dense masks: interval mass is
    a difference of the padded cumulative hazard at bracket positions, and
    per-grid sums are sparse scatters followed by a cumulative sum. Every
    operation is row-local, so rows of a batch evolve independently.
    """

    def __init__(self, dataset: Dataset):
        self.dataset = dataset
        grid = support_grid(dataset)
        self.grid = grid
        self.m = grid.size
        n = dataset.n
        m = self.m
        d = dataset.delta.astype(bool)
        tt = effective_time(dataset)
        self.ttilde = tt

        exact_idx = np.flatnonzero(d)
        pos_exact = np.searchsorted(grid, dataset.time[exact_idx])
        self.exact_scatter = sparse.csr_array(
            (np.ones(exact_idx.size), (pos_exact, exact_idx)), shape=(m, n))

        # at-risk count at s_j is the weight mass with T-tilde >= s_j
        pos_tt = np.searchsorted(grid, tt, side="right") - 1
        self.risk_scatter = sparse.csr_array(
            (np.ones(n), (pos_tt, np.arange(n))), shape=(m, n))

        # censored rows with a finite bracket: grid slots (lo..hi) lie in (L, R]
        cf = (~d) & np.isfinite(dataset.right)
        self.cf_idx = np.flatnonzero(cf)
        ncf = self.cf_idx.size
        self.lo = np.searchsorted(grid, dataset.left[self.cf_idx], side="right")
        self.hi = np.searchsorted(grid, dataset.right[self.cf_idx], side="right") - 1
        self.int_count_cf = self.hi - self.lo + 1
        rows = np.concatenate([self.lo, self.hi + 1])
        cols = np.tile(np.arange(ncf), 2)
        vals = np.concatenate([np.ones(ncf), -np.ones(ncf)])
        self.interval_scatter = sparse.csr_array((vals, (rows, cols)),
                                                 shape=(m + 1, ncf))

        # grid positions for the log-likelihood
        self.pos_t = np.searchsorted(grid, np.where(dataset.delta, dataset.time, grid[0]))
        self.pos_l = np.searchsorted(grid, dataset.left, side="right") - 1    # -1 if L = -inf
        self.pos_r = np.searchsorted(grid, np.where(np.isfinite(dataset.right),
                                                    dataset.right, grid[0]))

    # dense masks for the reference e/m-step implementations
    @cached_property
    def atrisk(self):
        return (self.grid[None, :] <= self.ttilde[:, None]).astype(float)

    @cached_property
    def exact_at(self):
        d = self.dataset.delta.astype(float)
        return d[:, None] * (self.dataset.time[:, None] == self.grid[None, :])

    @cached_property
    def intmask(self):
        ds = self.dataset
        s = self.grid[None, :]
        cens = 1.0 - ds.delta.astype(float)
        return cens[:, None] * (s > ds.left[:, None]) * (s <= ds.right[:, None])

    @cached_property
    def cens_finite(self):
        ds = self.dataset
        return ((1.0 - ds.delta) * np.isfinite(ds.right)).astype(float)

    @cached_property
    def int_count(self):
        return self.intmask.sum(axis=1)


def _em_batch(ws: _EmWorkspace, b: np.ndarray, dlam0: np.ndarray | None,
              tol: float, max_iter: int):
    """Run the EM for each row of b until its own max-norm delta passes tol.

    Returns (dlam, iterations, deltas, converged, dropped), leading dim k.
    All arithmetic is column-local in a grid-major (m, k) working layout, so
    every row's trajectory matches an independent run bit for bit; converged
    columns are flushed and dropped from the working set as they finish.
    Double precision throughout: interval masses span many orders of
    magnitude and single precision collapses the small ones to zero.
    """
    k, n = b.shape
    m = ws.m
    ncf = ws.cf_idx.size
    lo, hi1 = ws.lo, ws.hi + 1

    bt = np.ascontiguousarray(np.asarray(b, dtype=float).T)
    a_const = ws.exact_scatter @ bt                       # (m, k) exact mass
    risk = np.ascontiguousarray(np.cumsum((ws.risk_scatter @ bt)[::-1], axis=0)[::-1])
    # at-risk mass below round-off (relative to the column total, row 0)
    # bounds the numerator too, but dividing by it amplifies scatter-cumsum
    # residue into O(1) garbage increments; treat such slots as empty
    tiny = risk <= 1e-12 * risk[0]
    dropped = int(tiny.any())
    np.copyto(risk, 1.0, where=tiny)
    bcf = np.ascontiguousarray(bt[ws.cf_idx])             # (ncf, k)

    if dlam0 is None:
        dlam = np.full((m, k), 1.0 / m)
    else:
        d0 = np.asarray(dlam0, dtype=float)
        d0 = d0[:, None] if d0.ndim == 1 else np.ascontiguousarray(d0.T)
        dlam = np.empty((m, k))
        dlam[:] = d0

    lamz = np.zeros((m + 1, k))
    np.cumsum(dlam, axis=0, out=lamz[1:])
    lamz_next = np.zeros((m + 1, k))
    g1 = np.empty((ncf, k))
    g2 = np.empty((ncf, k))
    cbuf = np.empty((ncf, k))
    diff = np.empty((m, k))

    out_dlam = np.empty((k, m))
    iters = np.zeros(k, dtype=int)
    deltas = np.full(k, np.inf)
    converged = np.zeros(k, dtype=bool)
    idx = np.arange(k)

    for step in range(1, max_iter + 1):
        np.take(lamz, hi1, axis=0, out=g1)
        np.take(lamz, lo, axis=0, out=g2)
        np.subtract(g1, g2, out=g1)                       # interval mass
        np.negative(g1, out=g2)
        np.expm1(g2, out=g2)
        np.negative(g2, out=g2)                           # 1 - exp(-mass)
        # near-zero interval mass (incl. cancellation noise) would blow up
        # the conditional means; treat it like the exactly-degenerate case
        zero = g1 <= 1e-12
        degenerate = zero.any()
        if degenerate:
            np.copyto(g2, 1.0, where=zero)
        np.divide(bcf, g2, out=cbuf)
        if degenerate:
            np.copyto(cbuf, 0.0, where=zero)
        new = ws.interval_scatter @ cbuf                  # fresh (m+1, cols)
        np.cumsum(new, axis=0, out=new)
        new = new[:m]
        np.multiply(new, dlam, out=new)
        np.add(new, a_const, out=new)
        if degenerate:
            # degenerate subjects: pretend their interval increments are 1/m
            for j, t in zip(*np.nonzero(zero)):
                cnt = ws.int_count_cf[j]
                xi = (1.0 / m) / -np.expm1(-cnt / m)
                new[lo[j]:hi1[j], t] += bcf[j, t] * xi
        np.divide(new, risk, out=new)
        np.maximum(new, 0.0, out=new)  # clip scatter-cumsum residue
        np.cumsum(new, axis=0, out=lamz_next[1:])
        np.subtract(lamz_next[1:], lamz[1:], out=diff)
        np.abs(diff, out=diff)
        dl = diff.max(axis=0)

        iters[idx] = step
        deltas[idx] = dl
        done = dl <= tol
        if done.any():
            sel = np.flatnonzero(done)
            cols = idx[sel]
            out_dlam[cols] = new[:, sel].T
            converged[cols] = True
            keep = np.flatnonzero(~done)
            idx = idx[keep]
            if idx.size == 0:
                break
            dlam = np.ascontiguousarray(new[:, keep])
            lamz = np.ascontiguousarray(lamz_next[:, keep])
            a_const = np.ascontiguousarray(a_const[:, keep])
            risk = np.ascontiguousarray(risk[:, keep])
            bcf = np.ascontiguousarray(bcf[:, keep])
            ka = idx.size
            lamz_next = np.zeros((m + 1, ka))
            g1 = np.empty((ncf, ka))
            g2 = np.empty((ncf, ka))
            cbuf = np.empty((ncf, ka))
            diff = np.empty((m, ka))
        else:
            dlam = new
            lamz, lamz_next = lamz_next, lamz

    if idx.size:
        out_dlam[idx] = dlam.T
    return out_dlam, iters, deltas, converged, dropped


def loglikelihood(dataset: Dataset, weights, dlam) -> float:
    """Weighted observed-data log-likelihood of a hazard-increment vector.

    Exact rows contribute log dLam(T) - Lam(T); interval rows
    -Lam(L) + log(1 - exp(-(Lam(R) - Lam(L)))); right-censored rows -Lam(L),
    using Lam(+inf) = inf so their upper term vanishes.
    """
    ws = dataset if isinstance(dataset, _EmWorkspace) else _EmWorkspace(dataset)
    b = np.asarray(weights, dtype=float)
    dlam = np.asarray(dlam, dtype=float)
    lam = np.concatenate([[0.0], np.cumsum(dlam)])
    ds = ws.dataset

    terms = np.empty(ds.n)
    # grid slots no exact row sits on may hold zero or round-off-negative
    # increments; their logs are never read
    with np.errstate(divide="ignore", invalid="ignore"):
        log_d = np.log(dlam)
    for i in range(ds.n):
        if ds.delta[i]:
            j = ws.pos_t[i]
            terms[i] = log_d[j] - lam[j + 1]
        else:
            lam_l = lam[ws.pos_l[i] + 1] if ws.pos_l[i] >= 0 else 0.0
            if np.isfinite(ds.right[i]):
                mass = lam[ws.pos_r[i] + 1] - lam_l
                tail = -np.expm1(-mass)
                terms[i] = -lam_l + (np.log(tail) if tail > 0.0 else -np.inf)
            else:
                terms[i] = -lam_l
    return float(np.sum(b * terms))


def em_e_step(dataset: Dataset, dlam) -> np.ndarray:
    """Expected latent increments xi (n, m) given current hazard increments.

    xi_ij = I(s_j = T_i) on exact rows' observed support, the proportional
    interval split dLam_j / (1 - exp(-interval mass)) on a finite censoring
    interval, and dLam_j beyond the effective time.
    """
    ws = dataset if isinstance(dataset, _EmWorkspace) else _EmWorkspace(dataset)
    dlam = np.asarray(dlam, dtype=float)
    m = ws.m
    if dlam.shape != (m,):
        raise ValidationError(f"dlam must have length {m}")
    mass = ws.intmask @ dlam
    xi = ws.exact_at.copy()
    for i in range(ws.dataset.n):
        if ws.cens_finite[i] > 0.0:
            if mass[i] == 0.0:
                cnt = ws.int_count[i]
                xi[i] += ws.intmask[i] * (1.0 / m) / -np.expm1(-cnt / m)
            else:
                xi[i] += ws.intmask[i] * dlam / -np.expm1(-mass[i])
    beyond = ws.grid[None, :] > ws.ttilde[:, None]
    xi += beyond * dlam[None, :]
    return xi


def em_m_step(dataset: Dataset, xi, weights) -> np.ndarray:
    """Weighted at-risk average of xi: the updated hazard increments.

    Grid points with zero at-risk weight get increment 0 (dropped).
    """
    ws = dataset if isinstance(dataset, _EmWorkspace) else _EmWorkspace(dataset)
    xi = np.asarray(xi, dtype=float)
    b = np.asarray(weights, dtype=float)
    numer = b @ (xi * ws.atrisk)
    denom = b @ ws.atrisk
    return np.where(denom > 0.0, numer / np.where(denom > 0.0, denom, 1.0), 0.0)


def _finish_curve(ws: _EmWorkspace, dlam, iters, delta, converged,
                  trace=None) -> StepCdf:
    lam = np.cumsum(dlam)
    return StepCdf(times=ws.grid.copy(), values=-np.expm1(-lam),
                   iterations=int(iters), converged=bool(converged),
                   delta=float(delta), cum_hazard=lam,
                   loglik_trace=None if trace is None else tuple(trace))


def fit_weighted_cdf(dataset: Dataset, weights, tol: float = EM_TOL,
                     max_iter: int = EM_MAX_ITER, track_loglik: bool = False,
                     init=None) -> StepCdf:
    """EM with explicit subject weights (they are normalized to sum to one).

    init optionally supplies the starting hazard increments (default uniform
    1/m). track_loglik records the weighted log-likelihood at every iterate
    by stepping the same engine one iteration at a time.
    """
    ws = dataset if isinstance(dataset, _EmWorkspace) else _EmWorkspace(dataset)
    b = np.asarray(weights, dtype=float)
    if b.shape != (ws.dataset.n,):
        raise ValidationError("weights must be a length-n vector")
    if (b < 0).any() or not np.isfinite(b).all() or b.sum() <= 0.0:
        raise ValidationError("weights must be nonnegative, finite, not all zero")
    b = (b / b.sum())[None, :]

    if not track_loglik:
        dlam, iters, deltas, conv, _ = _em_batch(ws, b, init, tol, max_iter)
        return _finish_curve(ws, dlam[0], iters[0], deltas[0], conv[0])

    m = ws.m
    dlam = np.full((1, m), 1.0 / m) if init is None else np.asarray(init, float)[None, :]
    trace = [loglikelihood(ws, b[0], dlam[0])]
    iters, delta, conv = 0, np.inf, False
    for step in range(1, max_iter + 1):
        dlam, _, dl, _, _ = _em_batch(ws, b, dlam, tol, 1)
        delta = float(dl[0])
        trace.append(loglikelihood(ws, b[0], dlam[0]))
        iters = step
        if delta <= tol:
            conv = True
            break
    return _finish_curve(ws, dlam[0], iters, delta, conv, trace=trace)


def fit_local_cdf(dataset: Dataset, x0, kernel: KernelSpec | None = None,
                  tol: float = EM_TOL, max_iter: int = EM_MAX_ITER,
                  track_loglik: bool = False, init=None) -> StepCdf:
    """Kernel-localized distribution estimate F(. | x0).

    Nadaraya-Watson weights at x0 feed the latent-Poisson EM; increments
    start at init (uniform 1/m by default) and iterate to the max-norm
    tolerance on the cumulative hazard (cap max_iter, converged flag
    reports which happened).
    """
    if kernel is None:
        kernel = auto_kernel_spec(dataset)
    b = nw_weights(dataset, x0, kernel)
    return fit_weighted_cdf(dataset, b, tol=tol, max_iter=max_iter,
                            track_loglik=track_loglik, init=init)


class KernelCdfProvider:
    """CdfProvider backed by the local EM, one curve per covariate point."""

    def __init__(self, dataset: Dataset, kernel: KernelSpec | None = None,
                 tol: float = EM_TOL, max_iter: int = EM_MAX_ITER):
        self.dataset = dataset
        self.kernel = kernel if kernel is not None else auto_kernel_spec(dataset)
        self.tol = tol
        self.max_iter = max_iter
        self._cache: dict[bytes, StepCdf] = {}

    def curve(self, x) -> StepCdf:
        x = np.asarray(x, dtype=float)
        key = x.tobytes()
        hit = self._cache.get(key)
        if hit is None:
            hit = fit_local_cdf(self.dataset, x, self.kernel,
                                tol=self.tol, max_iter=self.max_iter)
            self._cache[key] = hit
        return hit

    def conditional_cdf(self, t: float, x) -> float:
        return float(self.curve(x).cdf(t))


def turnbull(dataset: Dataset, subject_weights=None, tol: float = EM_TOL,
             max_iter: int = TURNBULL_MAX_ITER) -> StepCdf:
    """Unconditional self-consistency estimate of the time distribution.

    Mass redistribution fixed point on the support grid (plus a tail atom
    beyond the last grid point when right-censored rows need one): each
    censored subject spreads its unit mass over its interval proportionally
    to the current masses, exact subjects keep theirs at T, and the weighted
    average is the next mass vector. On uncensored data this is the ECDF in
    a single step. subject_weights (default uniform) are the perturbation
    hook used by the bootstrap.
    """
    grid = support_grid(dataset)
    m = grid.size
    n = dataset.n
    d = dataset.delta.astype(float)
    cens = 1.0 - d
    if subject_weights is None:
        w = np.full(n, 1.0 / n)
    else:
        w = np.asarray(subject_weights, dtype=float)
        if w.shape != (n,) or (w < 0).any() or not np.isfinite(w).all() or w.sum() <= 0:
            raise ValidationError("subject_weights must be nonnegative, finite, not all zero")
        w = w / w.sum()

    s = grid[None, :]
    exact_at = d[:, None] * (dataset.time[:, None] == s)
    intmask = cens[:, None] * (s > dataset.left[:, None]) * (s <= dataset.right[:, None])
    tail_in = cens * np.isposinf(dataset.right)
    has_tail = bool(tail_in.any())

    slots = m + (1 if has_tail else 0)
    q = np.full(m, 1.0 / slots)
    tail = 1.0 / slots if has_tail else 0.0
    f = np.cumsum(q)
    exact_part = w @ exact_at                       # constant across iterations

    iters, delta, conv = 0, np.inf, False
    for step in range(1, max_iter + 1):
        p = intmask @ q + tail * tail_in            # (n,) interval probability
        degenerate = (cens > 0) & (p <= 0.0)
        if degenerate.any():
            # redistribute uniformly for subjects whose interval lost all mass
            slots_i = intmask.sum(axis=1) + tail_in
            p = np.where(degenerate, 1.0, p)
        c = np.where(cens > 0, w / np.where(p > 0.0, p, 1.0), 0.0)
        if degenerate.any():
            c = np.where(degenerate, 0.0, c)
        q_new = exact_part + q * (c @ intmask)
        tail_new = tail * float(c @ tail_in)
        if degenerate.any():
            for i in np.flatnonzero(degenerate):
                share = w[i] / slots_i[i]
                q_new += share * intmask[i]
                tail_new += share * tail_in[i]
        f_new = np.cumsum(q_new)
        delta = float(np.abs(f_new - f).max())
        q, tail, f = q_new, tail_new, f_new
        iters = step
        if delta <= tol:
            conv = True
            break

    return StepCdf(times=grid, values=f, iterations=iters, converged=conv,
                   delta=delta, mass=q, tail_mass=float(tail))


def self_consistency_residual(dataset: Dataset, cdf: StepCdf,
                              subject_weights=None) -> float:
    """Max absolute self-consistency violation over the support grid.

    The display averages, over subjects, I(T_i <= t) for exact rows and the
    conditional interval mass (F(R /\\ t) - F(L /\\ t)) / (F(R) - F(L)) for
    censored rows, and compares to F(t).
    """
    n = dataset.n
    if subject_weights is None:
        w = np.full(n, 1.0 / n)
    else:
        w = np.asarray(subject_weights, dtype=float)
        w = w / w.sum()
    grid = cdf.times
    f_grid = cdf.values
    d = dataset.delta

    total = np.zeros_like(f_grid)
    for i in range(n):
        if d[i]:
            total += w[i] * (dataset.time[i] <= grid)
        else:
            fl = cdf.cdf(dataset.left[i]) if np.isfinite(dataset.left[i]) else 0.0
            fr = cdf.cdf(dataset.right[i]) if np.isfinite(dataset.right[i]) else 1.0
            span = fr - fl
            if span <= 0.0:
                continue
            f_rt = np.minimum(fr, f_grid)
            f_lt = np.minimum(fl, f_grid)
            total += w[i] * (f_rt - f_lt) / span
    return float(np.abs(total - f_grid).max())
