import math

import numpy as np
import pytest

from icqr import (
    Dataset,
    KernelSpec,
    NumericalError,
    Observation,
    ValidationError,
    auto_kernel_spec,
    nw_weight_matrix,
    nw_weights,
    silverman_bandwidth,
)


def dataset_with_covariates(x):
    x = np.asarray(x, dtype=float)
    return Dataset.from_observations(
        [Observation.exact(float(i), row) for i, row in enumerate(x)])


def test_silverman_unit_sd_sample():
    # two-point sample spread so that the ddof=1 standard deviation is
    # exactly one and the iqr term is larger; the rule then reduces to
    # 1.06 * n^(-1/5)
    n = 200
    half = math.sqrt((n - 1) / n)
    x = np.array([-half, half] * (n // 2))
    assert np.std(x, ddof=1) == pytest.approx(1.0, abs=1e-15)
    h = silverman_bandwidth(x)
    np.testing.assert_allclose(h, 1.06 * n ** (-0.2), rtol=1e-12)
    np.testing.assert_allclose(h, 0.36737, rtol=1e-4)


def test_silverman_uses_smaller_of_sd_and_iqr():
    # heavy tails make sd >> iqr/1.349; the rule must pick the iqr term
    rng = np.random.default_rng(3)
    x = rng.standard_t(df=1.5, size=400)
    q1, q3 = np.percentile(x, [25.0, 75.0])
    expected = 1.06 * min(np.std(x, ddof=1), (q3 - q1) / 1.349) * 400 ** (-0.2)
    assert np.std(x, ddof=1) > (q3 - q1) / 1.349
    np.testing.assert_allclose(silverman_bandwidth(x), expected, rtol=1e-12)


def test_silverman_scale_equivariance():
    rng = np.random.default_rng(11)
    x = rng.normal(size=150)
    np.testing.assert_allclose(
        silverman_bandwidth(2.5 * x), 2.5 * silverman_bandwidth(x), rtol=1e-12)


def test_silverman_needs_two_points():
    with pytest.raises(ValidationError, match="two observations"):
        silverman_bandwidth([1.0])


def test_silverman_zero_spread_mentions_manual_bandwidth():
    with pytest.raises(ValidationError, match="bandwidth"):
        silverman_bandwidth(np.ones(50))


def test_kernel_spec_validation():
    with pytest.raises(ValidationError, match="align"):
        KernelSpec(kinds=("constant",), bandwidths=(math.nan, math.nan))
    with pytest.raises(ValidationError, match="kind"):
        KernelSpec(kinds=("cubic",), bandwidths=(1.0,))
    with pytest.raises(ValidationError, match="positive"):
        KernelSpec(kinds=("continuous",), bandwidths=(0.0,))
    with pytest.raises(ValidationError, match="mismatch"):
        KernelSpec(kinds=("discrete",), bandwidths=(math.nan,), mismatch=0.0)
    spec = KernelSpec(kinds=("constant", "continuous"), bandwidths=(math.nan, 0.4))
    assert spec.continuous_columns == (1,)


def test_auto_kernel_spec_detects_column_kinds():
    rng = np.random.default_rng(5)
    x = np.column_stack([
        np.ones(100),                       # intercept: constant
        rng.integers(0, 2, size=100),       # binary: discrete
        rng.normal(size=100),               # continuous
    ])
    spec = auto_kernel_spec(dataset_with_covariates(x))
    assert spec.kinds == ("constant", "discrete", "continuous")
    assert math.isnan(spec.bandwidths[0])
    assert math.isnan(spec.bandwidths[1])
    np.testing.assert_allclose(
        spec.bandwidths[2], silverman_bandwidth(x[:, 2]), rtol=1e-12)
    assert spec.mismatch == 0.1


def test_auto_kernel_spec_scalar_override():
    rng = np.random.default_rng(6)
    x = np.column_stack([np.ones(60), rng.normal(size=60), rng.normal(size=60)])
    spec = auto_kernel_spec(dataset_with_covariates(x), bandwidths=0.25)
    assert spec.bandwidths[1] == 0.25
    assert spec.bandwidths[2] == 0.25


def test_auto_kernel_spec_sequence_override_matches_continuous_order():
    rng = np.random.default_rng(7)
    x = np.column_stack([np.ones(60), rng.integers(0, 2, 60), rng.normal(size=60),
                         rng.normal(size=60)])
    spec = auto_kernel_spec(dataset_with_covariates(x), bandwidths=[0.3, 0.7])
    assert spec.bandwidths[2] == 0.3
    assert spec.bandwidths[3] == 0.7
    with pytest.raises(ValidationError, match="2 continuous"):
        auto_kernel_spec(dataset_with_covariates(x), bandwidths=[0.3])


def test_auto_kernel_spec_mapping_override_fills_missing_with_rule():
    rng = np.random.default_rng(8)
    x = np.column_stack([np.ones(80), rng.normal(size=80), rng.normal(size=80)])
    spec = auto_kernel_spec(dataset_with_covariates(x), bandwidths={1: 0.5})
    assert spec.bandwidths[1] == 0.5
    np.testing.assert_allclose(
        spec.bandwidths[2], silverman_bandwidth(x[:, 2]), rtol=1e-12)


def test_nw_weights_identical_points_are_uniform():
    x = np.column_stack([np.ones(8), np.full(8, 2.0)])
    # constant columns carry no information, so every subject gets 1/n
    spec = KernelSpec(kinds=("constant", "constant"), bandwidths=(math.nan,) * 2)
    w = nw_weights(dataset_with_covariates(x), [1.0, 2.0], spec)
    np.testing.assert_allclose(w, np.full(8, 0.125), rtol=1e-15)


def test_nw_weights_distance_in_bandwidths():
    # one subject at the target, one ten bandwidths away: the far subject's
    # gaussian factor is exp(-50) and vanishes after normalization
    h = 0.3
    x = np.array([[1.0, 0.0], [1.0, 10.0 * h]])
    spec = KernelSpec(kinds=("constant", "continuous"), bandwidths=(math.nan, h))
    w = nw_weights(dataset_with_covariates(x), [1.0, 0.0], spec)
    np.testing.assert_allclose(w, [1.0, 0.0], atol=1e-8)
    assert w[1] > 0.0


def test_nw_weights_sum_to_one_and_respect_permutation():
    rng = np.random.default_rng(9)
    x = np.column_stack([np.ones(40), rng.normal(size=(40, 2))])
    spec = KernelSpec(kinds=("constant", "continuous", "continuous"),
                      bandwidths=(math.nan, 0.5, 0.8))
    target = [1.0, 0.1, -0.2]
    w = nw_weights(dataset_with_covariates(x), target, spec)
    np.testing.assert_allclose(w.sum(), 1.0, rtol=1e-12)
    perm = rng.permutation(40)
    w_perm = nw_weights(dataset_with_covariates(x[perm]), target, spec)
    np.testing.assert_allclose(w_perm, w[perm], rtol=1e-12)


def test_nw_weights_discrete_mismatch_ratio():
    x = np.array([[1.0, 1.0], [1.0, 0.0]])
    spec = KernelSpec(kinds=("constant", "discrete"), bandwidths=(math.nan,) * 2,
                      mismatch=0.2)
    w = nw_weights(dataset_with_covariates(x), [1.0, 1.0], spec)
    np.testing.assert_allclose(w, [1.0 / 1.2, 0.2 / 1.2], rtol=1e-12)


def test_nw_weights_multipliers_reweight_subjects():
    x = np.ones((3, 1))
    spec = KernelSpec(kinds=("constant",), bandwidths=(math.nan,))
    w = nw_weights(dataset_with_covariates(x), [1.0], spec,
                   multipliers=np.array([1.0, 2.0, 1.0]))
    np.testing.assert_allclose(w, [0.25, 0.5, 0.25], rtol=1e-15)


def test_nw_weights_underflow_mentions_bandwidth():
    # every subject sits thousands of bandwidths away, so all kernel values
    # underflow to zero and normalization is impossible
    x = np.array([[1.0, 1000.0], [1.0, 2000.0]])
    spec = KernelSpec(kinds=("constant", "continuous"), bandwidths=(math.nan, 0.1))
    with pytest.raises(NumericalError, match="bandwidth"):
        nw_weights(dataset_with_covariates(x), [1.0, 0.0], spec)


def test_nw_weight_matrix_rows_match_single_target_calls():
    rng = np.random.default_rng(10)
    x = np.column_stack([np.ones(25), rng.normal(size=(25, 2))])
    ds = dataset_with_covariates(x)
    spec = auto_kernel_spec(ds)
    targets = np.column_stack([np.ones(6), rng.normal(size=(6, 2))])
    mat = nw_weight_matrix(ds, targets, spec)
    assert mat.shape == (6, 25)
    np.testing.assert_allclose(mat.sum(axis=1), np.ones(6), rtol=1e-12)
    for i in range(6):
        np.testing.assert_array_equal(mat[i], nw_weights(ds, targets[i], spec))


def test_nw_weight_matrix_rejects_bad_target_shape():
    ds = dataset_with_covariates(np.ones((5, 2)))
    spec = KernelSpec(kinds=("constant", "constant"), bandwidths=(math.nan,) * 2)
    with pytest.raises(ValidationError, match="targets"):
        nw_weight_matrix(ds, np.ones((3, 4)), spec)
