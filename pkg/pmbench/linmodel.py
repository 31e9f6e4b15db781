"""Closed-form ordinary and weighted least squares.

The intercept is always fitted and never regularized. Normal equations are
solved by Cholesky factorization; when the factorization fails an escalating
diagonal jitter is tried before falling back to the minimal-norm solution.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from pmbench.errors import ArgumentError

logger = logging.getLogger(__name__)

JITTERS = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


@dataclass
class LinearModel:
    # Intercept first
    coefficients: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_features(self):
        return len(self.coefficients) - 1

    @property
    def n_parameters(self):
        return len(self.coefficients)

    def to_dict(self):
        return {
            "coefficients": self.coefficients.tolist(),
            "diagnostics": dict(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, args):
        return cls(
            coefficients=np.asarray(args["coefficients"], dtype=float),
            diagnostics=dict(args.get("diagnostics", {})),
        )


@dataclass
class ThermalWeightConfig:
    w_min: float = 0.33
    w_max: float = 1.0
    under_estimate_factor: float = math.sqrt(10)
    max_irls_iterations: int = 10

    def validate(self):
        if not 0 < self.w_min <= self.w_max:
            raise ArgumentError(
                "Thermal weights need 0 < w_min <= w_max, got {} and {}."
                .format(self.w_min, self.w_max)
            )
        if self.under_estimate_factor < 1:
            raise ArgumentError(
                "The under-estimate factor must be >= 1, got {}."
                .format(self.under_estimate_factor)
            )
        if self.max_irls_iterations < 1:
            raise ArgumentError(
                "At least one reweighting iteration is required."
            )


def _design(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return np.hstack([np.ones((X.shape[0], 1)), X])


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != y.shape[0]:
        raise ArgumentError(
            "X has {} rows but y has {} values."
            .format(X.shape[0], y.shape[0])
        )
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ArgumentError("Least squares inputs must be finite.")
    return X, y


def _cholesky(A):
    """Lower Cholesky factor, or None when A is numerically singular."""
    try:
        factor = linalg.cho_factor(A, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return None
    pivots = np.abs(np.diag(factor[0]))
    if pivots.min() <= 1e-8 * pivots.max():
        return None
    return factor


def solve_normal_equations(A, b):
    """Solve A beta = b for the symmetric Gram matrix A of a design with
    leading intercept column.

    Returns:
        tuple: The solution and a diagnostics dict
    """
    factor = _cholesky(A)
    if factor is not None:
        return linalg.cho_solve(factor, b, check_finite=False), \
            {"solver": "cholesky", "jitter": 0.0}

    scale = max(float(np.mean(np.diag(A)[1:])) if len(A) > 1 else 1.0, 1e-300)
    penalty = np.ones(len(A))
    penalty[0] = 0.0
    for jitter in JITTERS:
        factor = _cholesky(A + np.diag(penalty * jitter * scale))
        if factor is None:
            continue
        logger.warning(
            "Normal equations are not positive definite, solved with "
            "relative diagonal jitter %g.", jitter
        )
        return linalg.cho_solve(factor, b, check_finite=False), \
            {"solver": "cholesky", "jitter": jitter}

    logger.warning(
        "Normal equations are rank deficient, using the minimal-norm "
        "solution."
    )
    beta, _, rank, _ = linalg.lstsq(A, b, cond=None)
    return beta, {"solver": "lstsq", "jitter": None, "rank": int(rank)}


def fit_ols(X, y) -> LinearModel:
    X, y = _check_xy(X, y)
    if X.shape[0] <= X.shape[1]:
        logger.warning(
            "Fitting %d features on only %d rows.", X.shape[1], X.shape[0]
        )
    D = _design(X)
    beta, diagnostics = solve_normal_equations(D.T @ D, D.T @ y)
    return LinearModel(coefficients=beta, diagnostics=diagnostics)


def fit_wls(X, y, w) -> LinearModel:
    X, y = _check_xy(X, y)
    w = np.asarray(w, dtype=float)
    if w.shape != y.shape:
        raise ArgumentError(
            "Expected {} weights, got {}.".format(y.shape[0], w.shape[0])
        )
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ArgumentError("Weights must be finite and nonnegative.")
    if not np.any(w > 0):
        raise ArgumentError("At least one weight must be positive.")

    D = _design(X)
    Dw = D * w[:, None]
    beta, diagnostics = solve_normal_equations(D.T @ Dw, Dw.T @ y)
    return LinearModel(coefficients=beta, diagnostics=diagnostics)


def thermal_weights(y, config=None):
    """Weights rising linearly from w_min at the lowest to w_max at the
    highest target temperature.
    """
    config = config or ThermalWeightConfig()
    config.validate()
    y = np.asarray(y, dtype=float)
    low, high = np.min(y), np.max(y)
    if not high > low:
        raise ArgumentError(
            "Thermal weights need a non-constant target."
        )
    return config.w_min + (config.w_max - config.w_min) * \
        (y - low) / (high - low)


def fit_wls_thermal(X, y, config=None) -> LinearModel:
    """Thermal-weight WLS where under-estimated rows get their weight
    multiplied by the under-estimate factor. Refits until the set of
    under-estimated rows is stable or the iteration cap is reached.
    """
    config = config or ThermalWeightConfig()
    X, y = _check_xy(X, y)
    base = thermal_weights(y, config)
    tolerance = 1e-9 * max(1.0, float(np.max(np.abs(y))))

    model = fit_wls(X, y, base)
    under = (y - predict(model, X)) > tolerance
    iterations = 0
    while iterations < config.max_irls_iterations:
        iterations += 1
        weights = np.where(under, base * config.under_estimate_factor, base)
        model = fit_wls(X, y, weights)
        new_under = (y - predict(model, X)) > tolerance
        if np.array_equal(new_under, under):
            break
        under = new_under

    model.diagnostics["irls_iterations"] = iterations
    model.diagnostics["under_estimates"] = int(np.sum(under))
    return model


def predict(model, X):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != model.n_features:
        raise ArgumentError(
            "The model expects {} features, got {}."
            .format(model.n_features, X.shape[1])
        )
    y_hat = model.coefficients[0] + X @ model.coefficients[1:]
    return y_hat[0] if single else y_hat
