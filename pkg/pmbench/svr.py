"""Epsilon-insensitive support vector regression with an RBF kernel.

The dual is solved in its 2n-variable form

    min 1/2 b'Qb + p'b   s.t.  y'b = 0,  0 <= b <= C

with b = (alpha, alpha'), y = (+1, ..., -1, ...), p = (eps - z, eps + z) and
Q[s, t] = y_s y_t K(x_s, x_t), by sequential two-variable updates on the
maximal violating pair.
"""
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from pmbench.errors import ArgumentError

logger = logging.getLogger(__name__)

TAU = 1e-12


class GAMMA:
    SCALE = "scale"


@dataclass
class SvrParams:
    C: float = 1.0
    epsilon: float = 0.1
    # Either a positive float or "scale": 1 / (p * mean column variance)
    gamma: Union[float, str] = GAMMA.SCALE
    tol: float = 1e-3
    max_passes: int = 1000
    cache_rows: int = 2048
    # Uniform seeded row subsample, None trains on every row
    subsample: Optional[int] = None
    seed: int = 0

    def validate(self):
        if not self.C > 0:
            raise ArgumentError("C must be positive, got {}.".format(self.C))
        if not self.epsilon >= 0:
            raise ArgumentError(
                "epsilon must be nonnegative, got {}.".format(self.epsilon)
            )
        if self.gamma != GAMMA.SCALE and not float(self.gamma) > 0:
            raise ArgumentError(
                "gamma must be positive or '{}', got {}."
                .format(GAMMA.SCALE, self.gamma)
            )
        if not self.tol > 0:
            raise ArgumentError(
                "The solver tolerance must be positive, got {}."
                .format(self.tol)
            )
        if self.max_passes < 1:
            raise ArgumentError("max_passes must be >= 1.")
        if self.subsample is not None and self.subsample < 2:
            raise ArgumentError(
                "A subsample needs at least 2 rows, got {}."
                .format(self.subsample)
            )

    def to_dict(self):
        return {
            "C": self.C,
            "epsilon": self.epsilon,
            "gamma": self.gamma,
            "tol": self.tol,
            "max_passes": self.max_passes,
            "cache_rows": self.cache_rows,
            "subsample": self.subsample,
            "seed": self.seed,
        }


@dataclass
class SvrModel:
    support_vectors: np.ndarray
    # alpha - alpha' of every support vector
    dual_coef: np.ndarray
    bias: float
    gamma: float
    epsilon: float
    C: float
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_support(self):
        return len(self.dual_coef)

    @property
    def n_features(self):
        return self.support_vectors.shape[1]

    @property
    def n_parameters(self):
        m, p = self.support_vectors.shape
        return m * (p + 1) + 1

    def to_dict(self):
        return {
            "n_features": self.n_features,
            "support_vectors": self.support_vectors.tolist(),
            "dual_coef": self.dual_coef.tolist(),
            "bias": self.bias,
            "gamma": self.gamma,
            "epsilon": self.epsilon,
            "C": self.C,
            "converged": self.converged,
            "diagnostics": dict(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, args):
        vectors = np.asarray(args["support_vectors"], dtype=float)
        return cls(
            support_vectors=vectors.reshape(len(args["dual_coef"]),
                                            int(args["n_features"])),
            dual_coef=np.asarray(args["dual_coef"], dtype=float),
            bias=float(args["bias"]),
            gamma=float(args["gamma"]),
            epsilon=float(args["epsilon"]),
            C=float(args["C"]),
            converged=bool(args.get("converged", True)),
            diagnostics=dict(args.get("diagnostics", {})),
        )


def rbf_kernel(x, x_prime, gamma):
    """exp(-gamma ||x - x'||^2). Either argument may be a matrix of rows,
    in which case the full kernel matrix is returned.
    """
    if not gamma > 0:
        raise ArgumentError("gamma must be positive, got {}.".format(gamma))
    a = np.asarray(x, dtype=float)
    b = np.asarray(x_prime, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise ArgumentError(
            "Kernel arguments have {} and {} features."
            .format(a.shape[-1], b.shape[-1])
        )
    if a.ndim == 1 and b.ndim == 1:
        return float(np.exp(-gamma * np.sum((a - b) ** 2)))
    a2, b2 = np.atleast_2d(a), np.atleast_2d(b)
    sq = np.sum(a2 ** 2, axis=1)[:, None] + np.sum(b2 ** 2, axis=1)[None, :] \
        - 2.0 * a2 @ b2.T
    K = np.exp(-gamma * np.maximum(sq, 0.0))
    if a.ndim == 1:
        return K[0]
    if b.ndim == 1:
        return K[:, 0]
    return K


def scale_gamma(X):
    variance = float(np.mean(np.var(X, axis=0)))
    if not variance > 0:
        return 1.0
    return 1.0 / (X.shape[1] * variance)


class KernelCache:
    """LRU cache of kernel rows of the training set."""

    def __init__(self, X, gamma, capacity):
        self._X = X
        self._gamma = gamma
        self._capacity = max(2, int(capacity))
        self._rows = OrderedDict()

    def row(self, index):
        if index in self._rows:
            self._rows.move_to_end(index)
            return self._rows[index]
        values = rbf_kernel(self._X, self._X[index], self._gamma)
        values[index] = 1.0
        self._rows[index] = values
        if len(self._rows) > self._capacity:
            self._rows.popitem(last=False)
        return values


def _select_pair(G, beta, signs, C):
    """Maximal violating pair and the violation m - M."""
    minus_yG = -signs * G
    up = ((signs > 0) & (beta < C)) | ((signs < 0) & (beta > 0))
    low = ((signs > 0) & (beta > 0)) | ((signs < 0) & (beta < C))
    if not np.any(up) or not np.any(low):
        return None, None, 0.0
    up_values = np.where(up, minus_yG, -np.inf)
    low_values = np.where(low, minus_yG, np.inf)
    i = int(np.argmax(up_values))
    j = int(np.argmin(low_values))
    return i, j, float(up_values[i] - low_values[j])


def _bias(G, beta, signs, C):
    """Bias from the free variables, or the midpoint of the feasible
    interval when none is free.
    """
    yG = signs * G
    at_upper = beta >= C
    at_lower = beta <= 0
    free = ~(at_upper | at_lower)
    if np.any(free):
        rho = float(np.mean(yG[free]))
    else:
        ub_mask = (at_upper & (signs < 0)) | (at_lower & (signs > 0))
        lb_mask = (at_upper & (signs > 0)) | (at_lower & (signs < 0))
        ub = float(np.min(yG[ub_mask])) if np.any(ub_mask) else np.inf
        lb = float(np.max(yG[lb_mask])) if np.any(lb_mask) else -np.inf
        rho = 0.5 * (ub + lb)
    return -rho


def dual_objective(K, z, coef, epsilon):
    """Dual objective for coef = alpha - alpha' with complementary slack
    alpha * alpha' = 0.
    """
    return float(0.5 * coef @ K @ coef + epsilon * np.sum(np.abs(coef)) -
                 z @ coef)


def _subsample(X, y, params):
    if params.subsample is None or params.subsample >= X.shape[0]:
        return X, y
    rng = np.random.default_rng(params.seed)
    rows = np.sort(rng.choice(X.shape[0], size=params.subsample,
                              replace=False))
    logger.info(
        "Training the SVR on a subsample of %d out of %d rows.",
        params.subsample, X.shape[0]
    )
    return X[rows], y[rows]


def fit_svr(X, y, params=None) -> SvrModel:
    params = params or SvrParams()
    params.validate()
    X = np.asarray(X, dtype=float)
    z = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != z.shape[0]:
        raise ArgumentError(
            "Expected a 2-D matrix with one target per row."
        )
    if X.shape[0] < 2:
        raise ArgumentError("An SVR needs at least 2 training rows.")
    X, z = _subsample(X, z, params)

    n = X.shape[0]
    C = float(params.C)
    gamma = scale_gamma(X) if params.gamma == GAMMA.SCALE \
        else float(params.gamma)
    cache = KernelCache(X, gamma, params.cache_rows)

    signs = np.concatenate([np.ones(n), -np.ones(n)])
    beta = np.zeros(2 * n)
    G = np.concatenate([params.epsilon - z, params.epsilon + z])

    max_iterations = params.max_passes * 2 * n
    converged = False
    iterations = 0
    while iterations < max_iterations:
        i, j, violation = _select_pair(G, beta, signs, C)
        if i is None or violation < params.tol:
            converged = True
            break
        iterations += 1

        si, sj = i % n, j % n
        K_i, K_j = cache.row(si), cache.row(sj)
        curvature = max(K_i[si] + K_j[sj] - 2.0 * K_i[sj], TAU)
        # Along beta_i += y_i t, beta_j -= y_j t the objective slope is
        # y_i G_i - y_j G_j, negative for a violating pair
        step = (signs[j] * G[j] - signs[i] * G[i]) / curvature
        step = min(
            step,
            C - beta[i] if signs[i] > 0 else beta[i],
            beta[j] if signs[j] > 0 else C - beta[j],
        )
        step = max(step, 0.0)
        old_i, old_j = beta[i], beta[j]
        beta[i] = min(max(old_i + signs[i] * step, 0.0), C)
        beta[j] = min(max(old_j - signs[j] * step, 0.0), C)
        delta_i, delta_j = beta[i] - old_i, beta[j] - old_j

        # Column t of Q is y * y_t * K[:, t mod n]
        G += signs * np.concatenate([K_i, K_i]) * signs[i] * delta_i
        G += signs * np.concatenate([K_j, K_j]) * signs[j] * delta_j

    bias = _bias(G, beta, signs, C)
    # G = Q beta + p, so the objective is beta'(G + p) / 2
    p = np.concatenate([params.epsilon - z, params.epsilon + z])
    objective = 0.5 * float(beta @ (G + p))
    alpha, alpha_prime = beta[:n], beta[n:]
    overlap = np.minimum(alpha, alpha_prime)
    coef = (alpha - overlap) - (alpha_prime - overlap)
    objective -= 2.0 * params.epsilon * float(np.sum(overlap))

    if not converged:
        logger.warning(
            "The SVR solver stopped after %d iterations without reaching "
            "the tolerance %g.", iterations, params.tol
        )
    support = np.flatnonzero(coef != 0)
    return SvrModel(
        support_vectors=X[support].copy(),
        dual_coef=coef[support].copy(),
        bias=float(bias),
        gamma=gamma,
        epsilon=float(params.epsilon),
        C=C,
        converged=converged,
        diagnostics={
            "iterations": iterations,
            "n_train": n,
            "violation": float(_select_pair(G, beta, signs, C)[2]),
            "objective": objective,
        },
    )


def predict_svr(model, X):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != model.n_features:
        raise ArgumentError(
            "The model expects {} features, got {}."
            .format(model.n_features, X.shape[1])
        )
    if model.n_support == 0:
        out = np.full(X.shape[0], model.bias)
    else:
        out = rbf_kernel(X, model.support_vectors, model.gamma) @ \
            model.dual_coef + model.bias
    return float(out[0]) if single else out
