import numpy as np
import pytest
from scipy.optimize import brentq
from pmbench.errors import PmbenchError
from pmbench.svr import (
    SvrModel,
    SvrParams,
    dual_objective,
    fit_svr,
    predict_svr,
    rbf_kernel,
    scale_gamma,
)


@pytest.fixture
def sine_xy():
    X = np.linspace(0, 2 * np.pi, 40)[:, None]
    y = np.sin(X[:, 0]) + 0.1 * np.cos(5 * X[:, 0])
    return X, y


def _qp_oracle(K, z, C, epsilon, iterations=5000):
    """Accelerated projected gradient on the 2n-variable dual"""
    n = len(z)
    signs = np.r_[np.ones(n), -np.ones(n)]
    Q = np.outer(signs, signs) * np.block([[K, K], [K, K]])
    p = np.r_[epsilon - z, epsilon + z]
    step = 1.0 / np.linalg.eigvalsh(Q)[-1]

    def project(v):
        def excess(lam):
            return signs @ np.clip(v - lam * signs, 0.0, C)
        lam = brentq(excess, -10 * C - np.abs(v).max() - 1,
                     10 * C + np.abs(v).max() + 1)
        return np.clip(v - lam * signs, 0.0, C)

    beta = previous = np.zeros(2 * n)
    momentum = 1.0
    for _ in range(iterations):
        grad = Q @ beta + p
        current = project(beta - step * grad)
        next_momentum = (1 + np.sqrt(1 + 4 * momentum ** 2)) / 2
        beta = current + (momentum - 1) / next_momentum * (current - previous)
        previous, momentum = current, next_momentum
    coef = previous[:n] - previous[n:]
    return dual_objective(K, z, coef, epsilon)


def test_rbf_kernel_vectors():
    a, b = np.array([0.0, 1.0]), np.array([1.0, 1.0])
    assert rbf_kernel(a, a, 0.5) == 1.0
    assert rbf_kernel(a, b, 0.5) == pytest.approx(np.exp(-0.5))


def test_rbf_kernel_matrix(rng):
    A, B = rng.normal(size=(5, 3)), rng.normal(size=(4, 3))
    K = rbf_kernel(A, B, 0.3)
    assert K.shape == (5, 4)
    assert K[2, 1] == pytest.approx(rbf_kernel(A[2], B[1], 0.3))
    np.testing.assert_allclose(rbf_kernel(A, B[1], 0.3), K[:, 1])


@pytest.mark.parametrize("a,b,gamma", [
    (np.zeros(2), np.zeros(3), 1.0),  # Dimension mismatch
    (np.zeros(2), np.zeros(2), 0.0),  # Non positive gamma
])
def test_rbf_kernel_ko(a, b, gamma):
    with pytest.raises(PmbenchError):
        rbf_kernel(a, b, gamma)


def test_scale_gamma():
    X = np.array([[0.0, 0.0], [2.0, 4.0]])
    # Column variances 1 and 4
    assert scale_gamma(X) == pytest.approx(1.0 / (2 * 2.5))
    assert scale_gamma(np.ones((3, 2))) == 1.0


def test_dual_objective_matches_qp_oracle(sine_xy):
    X, y = sine_xy
    params = SvrParams(C=1.0, epsilon=0.1, gamma=1.0, tol=1e-6)
    model = fit_svr(X, y, params)
    assert model.converged
    K = rbf_kernel(X, X, 1.0)
    oracle = _qp_oracle(K, y, 1.0, 0.1)
    assert model.diagnostics["objective"] == pytest.approx(oracle, abs=1e-3)


def test_reported_objective_matches_coefficients(sine_xy):
    X, y = sine_xy
    model = fit_svr(X, y, SvrParams(gamma=1.0, tol=1e-6))
    coef = np.zeros(len(y))
    rows = [int(np.flatnonzero(X[:, 0] == sv[0])[0])
            for sv in model.support_vectors]
    coef[rows] = model.dual_coef
    K = rbf_kernel(X, X, 1.0)
    assert model.diagnostics["objective"] == \
        pytest.approx(dual_objective(K, y, coef, 0.1), abs=1e-8)


def test_dual_constraints(sine_xy):
    X, y = sine_xy
    model = fit_svr(X, y, SvrParams(C=0.5, gamma=1.0, tol=1e-6))
    assert abs(np.sum(model.dual_coef)) < 1e-8
    assert np.all(np.abs(model.dual_coef) <= 0.5 + 1e-12)


def test_support_vectors_outside_tube(sine_xy):
    X, y = sine_xy
    params = SvrParams(C=1.0, epsilon=0.1, gamma=1.0, tol=1e-6)
    model = fit_svr(X, y, params)
    residual = np.abs(y - predict_svr(model, X))
    is_support = np.isin(X[:, 0], model.support_vectors[:, 0])
    assert np.all(residual[is_support] >= 0.1 - 1e-3)
    # Rows strictly inside the tube carry no weight
    assert np.all(residual[~is_support] <= 0.1 + 1e-3)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_wider_tube_never_adds_support_vectors(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-3, 3, size=(120, 2))
    y = np.sin(X[:, 0]) + 0.5 * X[:, 1] + 0.2 * rng.normal(size=120)
    counts = [
        fit_svr(X, y, SvrParams(C=1.0, epsilon=epsilon, gamma=0.5,
                                tol=1e-5)).n_support
        for epsilon in (0.025, 0.05, 0.1, 0.2, 0.4)
    ]
    assert all(b <= a for a, b in zip(counts, counts[1:]))
    assert counts[-1] < counts[0]


def test_fit_quality():
    X = np.linspace(0, 2 * np.pi, 40)[:, None]
    y = np.sin(X[:, 0])
    model = fit_svr(X, y, SvrParams(C=10.0, epsilon=0.05, gamma=1.0))
    assert np.max(np.abs(predict_svr(model, X) - y)) < 0.2


def test_zero_support_vectors_predicts_bias(rng):
    X = rng.normal(size=(20, 2))
    y = rng.uniform(1.0, 2.0, size=20)
    model = fit_svr(X, y, SvrParams(epsilon=1.0))
    assert model.n_support == 0
    assert model.bias == pytest.approx(0.5 * (y.max() + y.min()))
    np.testing.assert_allclose(predict_svr(model, X), model.bias)


def test_predict_matches_manual_expansion(sine_xy, rng):
    X, y = sine_xy
    model = fit_svr(X, y, SvrParams(gamma=0.7))
    x = rng.uniform(0, 6, size=1)
    expected = sum(
        c * np.exp(-0.7 * np.sum((sv - x) ** 2))
        for sv, c in zip(model.support_vectors, model.dual_coef)
    ) + model.bias
    assert predict_svr(model, x) == pytest.approx(expected, rel=1e-10)


def test_predict_ko(sine_xy):
    X, y = sine_xy
    model = fit_svr(X, y)
    with pytest.raises(PmbenchError):
        predict_svr(model, np.zeros((2, 3)))


def test_subsample(rng):
    X = rng.normal(size=(100, 2))
    y = X[:, 0]
    model = fit_svr(X, y, SvrParams(subsample=30, seed=2))
    assert model.diagnostics["n_train"] == 30
    again = fit_svr(X, y, SvrParams(subsample=30, seed=2))
    np.testing.assert_array_equal(model.dual_coef, again.dual_coef)


@pytest.mark.parametrize("params", [
    SvrParams(C=0.0),
    SvrParams(epsilon=-0.1),
    SvrParams(gamma=-1.0),
    SvrParams(tol=0.0),
    SvrParams(max_passes=0),
    SvrParams(subsample=1),
])
def test_svr_params_ko(params, sine_xy):
    X, y = sine_xy
    with pytest.raises(PmbenchError):
        fit_svr(X, y, params)


def test_fit_svr_ko():
    with pytest.raises(PmbenchError):
        fit_svr(np.zeros((1, 2)), np.zeros(1))
    with pytest.raises(PmbenchError):
        fit_svr(np.zeros((3, 2)), np.zeros(4))


def test_svr_dict(sine_xy):
    X, y = sine_xy
    model = fit_svr(X, y)
    restored = SvrModel.from_dict(model.to_dict())
    np.testing.assert_array_equal(predict_svr(restored, X),
                                  predict_svr(model, X))
    assert restored.n_parameters == model.n_support * 2 + 1


def test_svr_dict_without_support(rng):
    model = fit_svr(rng.normal(size=(5, 3)), np.ones(5),
                    SvrParams(epsilon=0.5))
    restored = SvrModel.from_dict(model.to_dict())
    assert restored.support_vectors.shape == (0, 3)
    assert predict_svr(restored, np.zeros(3)) == pytest.approx(1.0)
