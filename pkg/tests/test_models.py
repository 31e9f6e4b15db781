import numpy as np
import pytest
from pmbench.errors import PmbenchError
from pmbench.models import (
    KnnRegressor,
    ModelLoader,
    ModelSpec,
    MlpRegressor,
    OlsRegressor,
)

FAST_PARAMS = {
    ModelLoader.MODEL_TYPE.OLS: {},
    ModelLoader.MODEL_TYPE.WLS: {"w_min": 0.5},
    ModelLoader.MODEL_TYPE.KNN: {"n_neighbors": 3, "weighting": "distance"},
    ModelLoader.MODEL_TYPE.RF: {"n_estimators": 10, "max_depth": 10},
    ModelLoader.MODEL_TYPE.ET: {"n_estimators": 10},
    ModelLoader.MODEL_TYPE.SVR: {"C": 1.0, "epsilon": 0.05},
    ModelLoader.MODEL_TYPE.MLP: {"units": 8, "max_epochs": 5},
}


@pytest.fixture
def regression(rng):
    X = rng.normal(size=(120, 3))
    y = 40.0 + 5.0 * X[:, 0] - 2.0 * X[:, 1] + 0.1 * rng.normal(size=120)
    groups = np.repeat(["a", "b", "c", "d"], 30)
    return X, y, groups


@pytest.mark.parametrize("model_type", ModelLoader.MODEL_TYPE.ALL)
def test_fit_predict_and_reload(model_type, regression):
    X, y, groups = regression
    model = ModelLoader.Utils.instantiate_model(
        model_type, FAST_PARAMS[model_type], seed=1
    )
    assert not model.is_fitted
    model.fit(X, y, groups)
    y_hat = model.predict(X)
    assert y_hat.shape == y.shape
    assert np.all(np.isfinite(y_hat))
    assert model.n_parameters > 0

    restored = ModelLoader.load(model.to_dict())
    assert type(restored) is type(model)
    np.testing.assert_array_equal(restored.predict(X), y_hat)
    assert restored.params == model.params


@pytest.mark.parametrize("model_type", [
    ModelLoader.MODEL_TYPE.OLS,
    ModelLoader.MODEL_TYPE.WLS,
    ModelLoader.MODEL_TYPE.SVR,
])
def test_fits_linear_signal(model_type, regression):
    X, y, groups = regression
    model = ModelLoader.Utils.instantiate_model(
        model_type, FAST_PARAMS[model_type]
    ).fit(X, y, groups)
    residual = model.predict(X) - y
    assert np.mean(residual ** 2) < 0.05 * np.var(y)


def test_standardized_target_is_mapped_back(regression):
    X, y, groups = regression
    model = ModelLoader.Utils.instantiate_model("svr", {"epsilon": 0.01})
    model.fit(X, y, groups)
    # Predictions live on the temperature scale, not the standardized one
    assert abs(np.mean(model.predict(X)) - np.mean(y)) < 1.0


def test_single_row_predict(regression):
    X, y, _ = regression
    model = OlsRegressor().fit(X, y)
    assert model.predict(X[0]).shape == (1,)


def test_predict_before_fit(regression):
    X, _, _ = regression
    with pytest.raises(PmbenchError):
        OlsRegressor().predict(X)


def test_knn_lowers_k(regression):
    X, y, _ = regression
    model = KnnRegressor({"n_neighbors": 500}).fit(X[:10], y[:10])
    assert model.model.k == 10
    assert model.predict(X[0])[0] == pytest.approx(np.mean(y[:10]))


def test_mlp_needs_groups(regression):
    X, y, _ = regression
    with pytest.raises(PmbenchError):
        MlpRegressor({"max_epochs": 1}).fit(X, y)


def test_mlp_keeps_history(regression):
    X, y, groups = regression
    model = MlpRegressor({"max_epochs": 3, "units": 4}).fit(X, y, groups)
    assert len(model.history) == 3


@pytest.mark.parametrize("model_type,params", [
    ("ols", {"alpha": 1.0}),
    ("wls", {"w_min": 0}),
    ("knn", {"n_neighbors": 0}),
    ("knn", {"n_neighbors": 4096}),
    ("knn", {"weighting": "gaussian"}),
    ("rf", {"n_estimators": 5}),
    ("rf", {"max_depth": 100}),
    ("et", {"min_samples_leaf": 11}),
    ("svr", {"C": 100.0}),
    ("svr", {"epsilon": 0.001}),
    ("svr", {"gamma": "auto"}),
    ("mlp", {"layers": 0}),
    ("mlp", {"units": 64}),
    ("mlp", {"activation": "tanh"}),
    ("mlp", {"dropout": 0.5}),
    ("mlp", {"l2": 1.0}),
    ("mlp", {"learn_rate": 0.5}),
    ("mlp", {"optimizer": "adagrad"}),
    ("gbm", {}),
])
def test_validate_params_ko(model_type, params):
    with pytest.raises(PmbenchError):
        ModelLoader.Utils.validate_params(model_type, params)


@pytest.mark.parametrize("model_type,params", [
    ("mlp", {"l2": 0}),
    ("mlp", {"l2": 1e-7, "layers": 3, "units": 32, "dropout": 0.3}),
    ("rf", {"max_depth": None, "n_estimators": 600}),
    ("svr", {"gamma": "scale", "C": 10}),
    ("svr", {"gamma": 0.3}),
    ("knn", {"n_neighbors": 2048, "algorithm": "brute"}),
])
def test_validate_params(model_type, params):
    ModelLoader.Utils.validate_params(model_type, params)


@pytest.mark.parametrize("description", [
    {},  # No type
    {"type": "gbm", "state": {}},  # Unknown type
    {"type": "ols"},  # No state
    {"type": "ols", "state": {"diagnostics": {}}},  # Incomplete state
])
def test_load_ko(description):
    with pytest.raises(PmbenchError):
        ModelLoader.load(description)


def test_model_spec(regression):
    X, y, groups = regression
    spec = ModelSpec("rf", {"n_estimators": 10}, seed=3)
    assert spec.stochastic
    assert not ModelSpec("ols").stochastic
    a = spec.build().fit(X, y, groups)
    b = spec.build(seed=3).fit(X, y, groups)
    c = spec.build(seed=4).fit(X, y, groups)
    np.testing.assert_array_equal(a.predict(X), b.predict(X))
    assert not np.array_equal(a.predict(X), c.predict(X))
    assert spec.to_dict() == {"type": "rf", "params": {"n_estimators": 10},
                              "seed": 3}
