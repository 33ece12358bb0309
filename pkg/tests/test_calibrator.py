import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from kernelcal import KernelScoreCalibrator
from kernelcal.core_math import BoxDomain
from kernelcal.exceptions import ConfigError, NotPositiveDefiniteError
from kernelcal.kernels import gaussian
from kernelcal.simulator import generate_target_data


@pytest.fixture
def data(mm1_target):
    return generate_target_data(mm1_target, 200, np.random.default_rng(0))


@pytest.fixture
def est(mm1_model):
    return KernelScoreCalibrator(
        mm1_model, domain=BoxDomain((1.05,), (5.0,)), n=100, max_iter=60, averaging_window=20,
        n_c=500, random_state=0,
    )


def test_params_and_clone(est):
    params = est.get_params()
    assert params["n"] == 100 and params["max_iter"] == 60
    twin = clone(est)
    assert twin.get_params()["random_state"] == 0
    assert not hasattr(twin, "theta_")


def test_fit_attributes(est, data):
    assert est.fit(data) is est
    assert est.theta_.shape == (1,)
    assert est.domain.contains(est.theta_)
    assert est.score_trace_.shape == (60,)
    assert est.kernel_.kind == "riesz"
    assert est.n_features_in_ == 1
    assert est.confidence_set_ is not None and est.degenerate_reason_ is None
    assert est.contains(est.theta_)


def test_fit_reproducible(est, data):
    a = clone(est).fit(data)
    b = clone(est).fit(data)
    np.testing.assert_array_equal(a.theta_, b.theta_)
    np.testing.assert_array_equal(a.confidence_set_.whitener, b.confidence_set_.whitener)


def test_generator_random_state(est, data):
    a = clone(est).set_params(random_state=np.random.default_rng(3)).fit(data)
    b = clone(est).set_params(random_state=3).fit(data)
    np.testing.assert_array_equal(a.theta_, b.theta_)


def test_median_bandwidth_resolved_on_fit(est, data):
    est.set_params(kernel=gaussian(), confidence=False).fit(data)
    assert isinstance(est.kernel_.sigma, float)
    assert est.confidence_set_ is None


def test_score_and_sample(est, data):
    est.fit(data)
    assert np.isfinite(est.score(data, random_state=1))
    s = est.sample(30, random_state=2)
    assert s.shape == (30, 1) and np.all(s >= 0)
    with pytest.raises(ValueError):
        est.score(np.ones((5, 2)))


def test_not_fitted(est):
    with pytest.raises(NotFittedError):
        est.sample(3)


def test_on_degenerate(est):
    flat = np.full((50, 1), 0.3)
    with pytest.raises(NotPositiveDefiniteError):
        clone(est).fit(flat)
    fitted = clone(est).set_params(on_degenerate="ignore").fit(flat)
    assert fitted.confidence_set_ is None
    assert "definite" in fitted.degenerate_reason_
    with pytest.raises(ConfigError):
        fitted.contains((1.2,))


@pytest.mark.parametrize("kw", [{"domain": None}, {"alpha": 1.5}, {"on_degenerate": "warn"}])
def test_invalid_settings(est, data, kw):
    with pytest.raises(ConfigError):
        clone(est).set_params(**kw).fit(data)


def test_too_few_rows(est):
    with pytest.raises(ValueError):
        est.fit(np.ones((1, 1)))
