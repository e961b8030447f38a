import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from fqreg import FunctionalQuantileRegressor
from fqreg.estimator import fit_fqr
from fqreg.exceptions import ValidationError


@pytest.fixture(scope="module")
def data(design_data):
    return design_data.values, design_data.responses


def test_params_and_clone():
    est = FunctionalQuantileRegressor(quantiles=(0.25, 0.75), n_components="bic", grid_size=101)
    params = est.get_params()
    assert params["quantiles"] == (0.25, 0.75) and params["n_components"] == "bic"
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(n_components=2)
    assert est.n_components == 2


def test_matches_functional_api(data):
    X, y = data
    est = FunctionalQuantileRegressor(quantiles=(0.25, 0.5), n_components=3).fit(X, y)
    model = fit_fqr(X, y, [0.25, 0.5], 3)
    np.testing.assert_allclose(est.model_.coefficient_matrix(), model.coefficient_matrix(), atol=1e-12)
    assert est.coef_.shape == (2, 3) and est.intercept_.shape == (2,)
    assert est.slope_.shape == (2, 201)


def test_predict_shapes(data):
    X, y = data
    one = FunctionalQuantileRegressor(quantiles=(0.5,), n_components=2).fit(X, y)
    assert one.predict(X[:7]).shape == (7,)
    many = FunctionalQuantileRegressor(quantiles=(0.1, 0.5, 0.9), n_components=2).fit(X, y)
    assert many.predict(X[:7]).shape == (7, 3)
    assert many.transform(X[:7]).shape == (7, 2)


def test_transform_scores_are_centered(data):
    X, y = data
    est = FunctionalQuantileRegressor(n_components=3).fit(X, y)
    S = est.transform(X)
    np.testing.assert_allclose(S.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(S.var(axis=0), est.model_.eig.eigenvalues[:3], rtol=1e-6)


def test_criterion_selection(data):
    X, y = data
    est = FunctionalQuantileRegressor(n_components="bic", max_components=8).fit(X, y)
    assert 1 <= est.n_components_ <= 8
    assert est.n_components_ == min(est.criterion_scores_, key=est.criterion_scores_.get)


def test_monotonize_option(data):
    X, y = data
    levels = tuple(np.round(np.linspace(0.05, 0.95, 19), 2))
    est = FunctionalQuantileRegressor(quantiles=levels, n_components=4, monotonize="rearrange").fit(X, y)
    assert np.all(np.diff(est.predict(X), axis=1) >= 0)
    raw = est.set_params(monotonize=None).predict(X)
    np.testing.assert_array_equal(np.sort(raw, axis=1), est.set_params(monotonize="rearrange").predict(X))


def test_score(data):
    X, y = data
    est = FunctionalQuantileRegressor(quantiles=(0.5,), n_components=3).fit(X, y)
    assert est.score(X, y) == pytest.approx(-est.model_.fit_at(0.5).objective, abs=1e-12)


def test_sample_times(data):
    X, y = data
    t = np.linspace(0, 1, X.shape[1])
    a = FunctionalQuantileRegressor(n_components=2).fit(X, y).predict(X[:3])
    b = FunctionalQuantileRegressor(n_components=2).fit(X, y, sample_times=t).predict(X[:3], sample_times=t)
    np.testing.assert_array_equal(a, b)


def test_not_fitted(data):
    with pytest.raises(NotFittedError):
        FunctionalQuantileRegressor().predict(data[0])


def test_invalid_inputs(data):
    X, y = data
    with pytest.raises(ValidationError):
        FunctionalQuantileRegressor(quantiles=(0.5, 0.5)).fit(X, y)
    with pytest.raises(ValidationError):
        FunctionalQuantileRegressor(n_components="cv").fit(X, y)
    with pytest.raises(ValidationError):
        FunctionalQuantileRegressor(n_components=5).fit(X[:5], y[:5])
    with pytest.raises(ValidationError):
        FunctionalQuantileRegressor().fit(X, y[:-1])
