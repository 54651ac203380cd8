import math

import numpy as np
import oracles
import pytest

from icqr import (
    Dataset,
    EstimatorSpec,
    FitContext,
    KernelCdfProvider,
    Observation,
    ValidationError,
    auto_kernel_spec,
    default_m_star,
    fit,
    quantile_process,
)


class FlatProvider:
    """Conditional CDF that returns the same value everywhere."""

    def __init__(self, value):
        self.value = value

    def conditional_cdf(self, t, x):
        return self.value


def exact_dataset(rng, n=9):
    x = np.column_stack([np.ones(n), rng.normal(size=n)])
    t = rng.normal(size=n)
    return Dataset.from_observations(
        [Observation.exact(float(t[i]), tuple(x[i])) for i in range(n)])


def two_group_panel(rng, n=80):
    """Interval-censored rows on a shared visit schedule, binary covariate."""
    visits = np.cumsum(rng.uniform(0.3, 0.8, size=8))
    rows = []
    for _ in range(n):
        x1 = float(rng.integers(0, 2))
        t = rng.normal(1.5 + 0.4 * x1, 0.6)
        j = np.searchsorted(visits, t)
        if j == 0:
            rows.append(Observation.censored(-math.inf, visits[0], (1.0, x1)))
        elif j == visits.size:
            rows.append(Observation.censored(visits[-1], math.inf, (1.0, x1)))
        else:
            rows.append(Observation.censored(visits[j - 1], visits[j], (1.0, x1)))
    return Dataset.from_observations(rows)


def test_all_exact_fit_matches_vertex_oracle():
    rng = np.random.default_rng(20)
    for _ in range(10):
        ds = exact_dataset(rng)
        tau = rng.uniform(0.2, 0.8)
        qf = fit(ds, tau)
        best, _ = oracles.vertex_minimum(ds.time, ds.covariates,
                                         np.ones(ds.n), tau)
        np.testing.assert_allclose(qf.objective, best, rtol=1e-8, atol=1e-12)


def test_high_left_cdf_collapses_to_left_endpoint():
    # F(L|x) >= tau puts the whole unit weight on the left endpoint, so the
    # fit must equal the all-exact fit on those endpoints
    rng = np.random.default_rng(21)
    rows = []
    pseudo = []
    for _ in range(12):
        x1 = rng.normal()
        left = rng.uniform(0.5, 2.0)
        rows.append(Observation.censored(left, left + 1.0, (1.0, x1)))
        pseudo.append(Observation.exact(left, (1.0, x1)))
    ds = Dataset.from_observations(rows)
    spec = EstimatorSpec(method="plugin", provider=FlatProvider(0.99))
    qf = fit(ds, 0.5, spec)
    qf_exact = fit(Dataset.from_observations(pseudo), 0.5)
    np.testing.assert_allclose(qf.beta, qf_exact.beta, atol=1e-10)


def test_zfd_equals_ks_weighting_without_indeterminates():
    # exact rows anchor the local curves well below the censoring intervals,
    # so at a low tau every interval sits above the quantile, nobody
    # straddles it, and zeroing indeterminate subjects changes nothing
    rng = np.random.default_rng(22)
    rows = [Observation.exact(float(t), (1.0, rng.normal()))
            for t in rng.uniform(0.0, 1.0, size=25)]
    rows += [Observation.censored(float(t), float(t) + 0.4, (1.0, rng.normal()))
             for t in rng.uniform(1.5, 2.5, size=10)]
    ds = Dataset.from_observations(rows)
    tau = 0.3
    ctx = FitContext(ds, EstimatorSpec(method="ks"))
    f_left, _, _ = ctx.endpoint_tables()
    assert (f_left[np.isfinite(f_left)] >= tau).all()
    a = fit(ds, tau, context=ctx)
    b = fit(ds, tau, context=ctx.with_spec(EstimatorSpec(method="zfd")))
    np.testing.assert_array_equal(a.beta, b.beta)


def test_zfd_all_indeterminate_leaves_too_few_rows():
    # identical intervals put all conditional mass strictly inside them, so
    # every subject straddles tau, zfd zeroes them all, and the solver has
    # nothing to work with
    ds = Dataset.from_observations([
        Observation.censored(0.5, 2.0, (1.0, 0.3)),
        Observation.censored(0.5, 2.0, (1.0, -0.7)),
        Observation.censored(0.5, 2.0, (1.0, 1.2)),
    ])
    with pytest.raises(ValidationError, match="positive weight"):
        fit(ds, 0.5, EstimatorSpec(method="zfd"))


def test_subgradient_within_bound_at_solution():
    rng = np.random.default_rng(23)
    ds = two_group_panel(rng, n=60)
    qf = fit(ds, 0.5)
    d = qf.diagnostics
    assert d["subgradient_max"] <= d["subgradient_bound"] + 1e-12
    assert d["method"] == "ks"
    np.testing.assert_allclose(d["m_star"], default_m_star(ds), rtol=1e-12)


def test_quantile_process_matches_per_tau_fits():
    rng = np.random.default_rng(24)
    ds = two_group_panel(rng, n=50)
    taus = [0.25, 0.5, 0.75]
    ctx = FitContext(ds, EstimatorSpec())
    process = quantile_process(ds, taus, context=ctx)
    for tau, qf in zip(taus, process):
        single = fit(ds, tau, context=ctx)
        assert qf.tau == tau
        np.testing.assert_array_equal(qf.beta, single.beta)


def test_fit_is_deterministic_across_contexts():
    rng = np.random.default_rng(25)
    ds = two_group_panel(rng, n=50)
    a = fit(ds, 0.5)
    b = fit(ds, 0.5)
    np.testing.assert_array_equal(a.beta, b.beta)
    assert a.objective == b.objective


def test_kernel_path_agrees_with_plugin_on_shared_curves():
    # the kernel method evaluates each censored subject's own local curve;
    # handing the same curves through the provider seam must reproduce the
    # endpoint tables up to EM tolerance
    rng = np.random.default_rng(26)
    ds = two_group_panel(rng, n=70)
    kernel = auto_kernel_spec(ds)
    ctx = FitContext(ds, EstimatorSpec(kernel=kernel))
    f_left, f_right, _ = ctx.endpoint_tables()
    provider = KernelCdfProvider(ds, kernel)
    ctx_p = FitContext(ds, EstimatorSpec(method="plugin", provider=provider))
    g_left, g_right, _ = ctx_p.endpoint_tables()
    mask_l = np.isfinite(f_left)
    mask_r = np.isfinite(f_right)
    np.testing.assert_allclose(f_left[mask_l], g_left[mask_l], atol=5e-4)
    np.testing.assert_allclose(f_right[mask_r], g_right[mask_r], atol=5e-4)


def test_with_spec_shares_workspace_for_weighting_variants():
    rng = np.random.default_rng(27)
    ds = two_group_panel(rng, n=40)
    ctx = FitContext(ds, EstimatorSpec(method="ks"))
    clone = ctx.with_spec(EstimatorSpec(method="zfd"))
    assert clone.workspace is ctx.workspace
    fit(ds, 0.5, context=ctx)
    # the cached endpoint table is shared, so the clone reuses it
    assert "table" in clone._cache
    fresh = ctx.with_spec(EstimatorSpec(method="ks", bandwidths=0.9))
    assert fresh._cache is not ctx._cache


def test_em_diagnostics_reported():
    rng = np.random.default_rng(28)
    ds = two_group_panel(rng, n=40)
    qf = fit(ds, 0.5)
    em = qf.diagnostics["em"]
    assert em["targets"] == int((~ds.delta).sum())
    assert 0 <= em["converged"] <= em["targets"]
    assert em["max_iterations"] >= 1
    assert "bandwidths" in qf.diagnostics


def test_all_exact_data_skips_cdf_stage():
    rng = np.random.default_rng(29)
    ds = exact_dataset(rng, n=12)
    qf = fit(ds, 0.5)
    assert qf.diagnostics["em"]["targets"] == 0
    assert qf.n_used == 12


def test_plugin_rejects_batched_multipliers():
    ds = Dataset.from_observations([
        Observation.censored(0.5, 2.0, (1.0,)),
        Observation.exact(1.0, (1.0,)),
    ])
    ctx = FitContext(ds, EstimatorSpec(method="plugin", provider=FlatProvider(0.6)))
    with pytest.raises(ValidationError, match="batch"):
        ctx.endpoint_tables(multipliers=np.ones((3, 2)))


def test_estimator_spec_validation():
    with pytest.raises(ValidationError, match="method"):
        EstimatorSpec(method="ols")
    with pytest.raises(ValidationError, match="provider"):
        EstimatorSpec(method="plugin")


def test_m_star_override_reaches_augmented_rows():
    ds = Dataset.from_observations([
        Observation.censored(-math.inf, 1.0, (1.0,)),
        Observation.exact(0.5, (1.0,)),
        Observation.exact(1.5, (1.0,)),
    ])
    spec = EstimatorSpec(method="plugin", provider=FlatProvider(0.2), m_star=55.0)
    qf = fit(ds, 0.5, spec)
    assert qf.diagnostics["m_star"] == 55.0
