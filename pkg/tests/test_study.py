import numpy as np
import pytest

import icqr.study
from icqr import (
    BootstrapConfig,
    EstimatorSpec,
    NumericalError,
    SimScenario,
    TRUE_BETA,
    ValidationError,
    censoring_sweep,
    run_study,
)
from icqr.study import log_mse_scale


SMALL = SimScenario(n=60, seed=4)
ESTIMATORS = {"ks": EstimatorSpec(method="ks"), "zfd": EstimatorSpec(method="zfd")}


def test_run_study_metrics_are_well_formed():
    result = run_study(SMALL, ESTIMATORS, n_replicates=12)
    assert set(result.metrics) == {"ks", "zfd"}
    assert result.n_dropped == 0
    for name, m in result.metrics.items():
        assert m.estimator == name
        assert m.n_kept == 12
        assert m.bias.shape == (3,)
        np.testing.assert_allclose(
            m.mse, m.bias ** 2 + m.ese ** 2 * (m.n_kept - 1) / m.n_kept,
            rtol=1e-10)
        assert result.betas[name].shape == (12, 3)
    # the first estimator is the relative-efficiency reference
    np.testing.assert_allclose(result.metrics["ks"].re, np.ones(3), rtol=1e-12)
    assert result.metrics["ks"].re_agg == 1.0
    np.testing.assert_allclose(
        result.metrics["zfd"].re,
        result.metrics["ks"].mse / result.metrics["zfd"].mse, rtol=1e-12)


def test_run_study_is_deterministic_across_worker_counts():
    a = run_study(SMALL, ESTIMATORS, n_replicates=8, workers=1)
    b = run_study(SMALL, ESTIMATORS, n_replicates=8, workers=2)
    for name in ESTIMATORS:
        np.testing.assert_array_equal(a.betas[name], b.betas[name])


def test_run_study_bootstrap_summaries():
    cfg = BootstrapConfig(n_replicates=12)
    result = run_study(SMALL, {"ks": EstimatorSpec()}, n_replicates=6,
                       bootstrap_config=cfg, bootstrap_for=["ks"])
    m = result.metrics["ks"]
    assert m.bse.shape == (3,)
    assert (m.bse > 0).all()
    assert m.cp.shape == (3,)
    assert ((0.0 <= m.cp) & (m.cp <= 1.0)).all()


def test_run_study_fixed_offset_estimator(monkeypatch):
    # a fake fit returning beta0 + 0.1 pins every summary exactly
    def fake_fit(dataset, tau, spec=None, context=None):
        from icqr.data import QuantileFit
        return QuantileFit(beta=TRUE_BETA + 0.1, tau=tau, objective=0.0,
                           n_used=dataset.n)

    # patched functions do not cross process boundaries, so stay in-process
    monkeypatch.setattr(icqr.study, "fit", fake_fit)
    result = run_study(SMALL, {"ks": EstimatorSpec()}, n_replicates=5, workers=1)
    m = result.metrics["ks"]
    np.testing.assert_allclose(m.bias, np.full(3, 0.1), rtol=1e-12)
    np.testing.assert_allclose(m.ese, np.zeros(3), atol=1e-15)
    np.testing.assert_allclose(m.mse, np.full(3, 0.01), rtol=1e-12)
    np.testing.assert_allclose(m.mse_agg, 0.03, rtol=1e-12)
    np.testing.assert_allclose(log_mse_scale(result, "ks"), np.log(3.0),
                               rtol=1e-12)


def test_run_study_validation():
    with pytest.raises(ValidationError, match="estimator"):
        run_study(SMALL, {}, n_replicates=5)
    with pytest.raises(ValidationError, match="replicates"):
        run_study(SMALL, ESTIMATORS, n_replicates=1)


def test_run_study_drop_policy(monkeypatch):
    calls = {"count": 0}

    def flaky_fit(dataset, tau, spec=None, context=None):
        from icqr.data import QuantileFit
        calls["count"] += 1
        if calls["count"] % 2 == 0:
            raise NumericalError("synthetic failure")
        return QuantileFit(beta=TRUE_BETA.copy(), tau=tau, objective=0.0,
                           n_used=dataset.n)

    monkeypatch.setattr(icqr.study, "fit", flaky_fit)
    with pytest.raises(NumericalError, match="replicates failed"):
        run_study(SMALL, {"ks": EstimatorSpec()}, n_replicates=10, workers=1)


def test_censoring_sweep_rates_and_schemes():
    sweep = censoring_sweep(SimScenario(n=50, seed=9), rates=[0.5, 1.0],
                            estimators={"ks": EstimatorSpec()}, n_replicates=4)
    assert [rate for rate, _ in sweep] == [0.5, 1.0]
    partial, full = sweep[0][1], sweep[1][1]
    assert partial.scenario.scheme == "pic"
    assert 0.0 < partial.scenario.p0 < 1.0
    assert full.scenario.scheme == "ic"
    # PIC at rate 0.5 keeps roughly half the subjects exact; IC keeps none
    assert "ks" in partial.metrics and "ks" in full.metrics


def test_censoring_sweep_rejects_bad_rate():
    with pytest.raises(ValidationError, match="outside"):
        censoring_sweep(SimScenario(n=50), rates=[1.2],
                        estimators={"ks": EstimatorSpec()}, n_replicates=4)
