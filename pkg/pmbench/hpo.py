"""Bayesian hyperparameter optimization.

A Gaussian process with a Matern 5/2 kernel and one length scale per
encoded dimension models the (log-transformed) objective. Expected
improvement, probability of improvement and the confidence bound each
propose a candidate, and the proposal scoring best across all three is
evaluated next.
"""
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy import linalg, optimize as scipy_optimize
from scipy.stats import norm, qmc

try:
    import json
except ImportError:
    import simplejson as json

from pmbench.errors import ArgumentError, PmbenchError, SurrogateError

logger = logging.getLogger(__name__)

SPAN_NAMES = ["span_1", "span_2", "span_3", "span_4"]
SPAN_RANGE = (4, 10800)
JITTERS = (1e-10, 1e-8, 1e-6, 1e-4)


class KIND:
    REAL = "real"
    LOG_REAL = "log-real"
    INTEGER = "integer"
    LOG_INTEGER = "log-integer"
    CATEGORICAL = "categorical"
    NUMERIC = [REAL, LOG_REAL, INTEGER, LOG_INTEGER]
    ALL = NUMERIC + [CATEGORICAL]


class ACQUISITION:
    EI = "ei"
    PI = "pi"
    UCB = "ucb"
    ALL = [EI, PI, UCB]


@dataclass
class Dimension:
    name: str
    kind: str
    low: Optional[float] = None
    high: Optional[float] = None
    choices: Optional[List[Any]] = None

    def __post_init__(self):
        if self.kind not in KIND.ALL:
            raise ArgumentError(
                "The dimension kind '{}' is not valid. Please choose "
                "between: {}.".format(self.kind, ", ".join(KIND.ALL))
            )
        if self.kind == KIND.CATEGORICAL:
            if not self.choices:
                raise ArgumentError(
                    "The categorical dimension '{}' has no choices."
                    .format(self.name)
                )
            return
        if self.low is None or self.high is None or \
                not self.low <= self.high:
            raise ArgumentError(
                "The bounds of '{}' must be ordered, got {} and {}."
                .format(self.name, self.low, self.high)
            )
        if self.kind in (KIND.LOG_REAL, KIND.LOG_INTEGER) and \
                not self.low > 0:
            raise ArgumentError(
                "The log-scaled dimension '{}' needs positive bounds."
                .format(self.name)
            )
        if self.kind in (KIND.INTEGER, KIND.LOG_INTEGER):
            low, high = self.integer_bounds
            if low > high:
                raise ArgumentError(
                    "The integer dimension '{}' holds no integer between "
                    "{} and {}.".format(self.name, self.low, self.high)
                )

    @property
    def width(self):
        return len(self.choices) if self.kind == KIND.CATEGORICAL else 1

    @property
    def integer_bounds(self):
        return math.ceil(self.low), math.floor(self.high)

    def _scale(self, value):
        if self.kind in (KIND.LOG_REAL, KIND.LOG_INTEGER):
            return math.log(value), math.log(self.low), math.log(self.high)
        return value, self.low, self.high

    def contains(self, value):
        if self.kind == KIND.CATEGORICAL:
            return value in self.choices
        return self.low <= value <= self.high

    def encode(self, value):
        if not self.contains(value):
            raise ArgumentError(
                "The value {} is outside the dimension '{}'."
                .format(value, self.name)
            )
        if self.kind == KIND.CATEGORICAL:
            hot = np.zeros(len(self.choices))
            hot[self.choices.index(value)] = 1.0
            return hot
        v, lo, hi = self._scale(value)
        return np.array([(v - lo) / (hi - lo) if hi > lo else 0.0])

    def decode(self, u):
        """Point value of a unit-scaled encoding block."""
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        if self.kind == KIND.CATEGORICAL:
            return self.choices[int(np.argmax(u))]
        u = float(u[0])
        if self.kind == KIND.REAL:
            return self.low + u * (self.high - self.low)
        if self.kind == KIND.INTEGER:
            low, high = self.integer_bounds
            value = round(self.low + u * (self.high - self.low))
            return int(min(max(value, low), high))
        lo, hi = math.log(self.low), math.log(self.high)
        value = math.exp(lo + u * (hi - lo))
        if self.kind == KIND.LOG_REAL:
            return min(max(value, self.low), self.high)
        low, high = self.integer_bounds
        return int(min(max(round(value), low), high))

    def from_unit(self, u):
        """Point value of one uniform draw."""
        if self.kind == KIND.CATEGORICAL:
            return self.choices[min(int(u * len(self.choices)),
                                    len(self.choices) - 1)]
        return self.decode([u])


class HpoSpace:
    def __init__(self, dimensions):
        names = [d.name for d in dimensions]
        if len(set(names)) != len(names):
            raise ArgumentError("Dimension names must be unique.")
        self._dimensions = list(dimensions)
        self._span_names = [n for n in SPAN_NAMES if n in names]
        lowest = -math.inf
        for name in self._span_names:
            low, high = self.dimension(name).integer_bounds
            lowest = max(low, lowest + 1)
            if lowest > high:
                raise ArgumentError(
                    "The span bounds admit no strictly increasing values: "
                    "'{}' cannot exceed {}.".format(name, high)
                )

    def __repr__(self):
        return "<HpoSpace of {} dimensions>".format(len(self._dimensions))

    def __len__(self):
        return len(self._dimensions)

    @property
    def dimensions(self):
        return list(self._dimensions)

    @property
    def names(self):
        return [d.name for d in self._dimensions]

    @property
    def width(self):
        return sum(d.width for d in self._dimensions)

    def dimension(self, name):
        for d in self._dimensions:
            if d.name == name:
                return d
        raise ArgumentError("Unknown dimension '{}'.".format(name))

    def encode(self, point):
        try:
            return np.concatenate(
                [d.encode(point[d.name]) for d in self._dimensions]
            )
        except KeyError as err:
            raise ArgumentError(
                "The point is missing the dimension '{}'."
                .format(err.args[0])
            )

    def decode(self, vector):
        point, offset = {}, 0
        for d in self._dimensions:
            point[d.name] = d.decode(vector[offset:offset + d.width])
            offset += d.width
        return self.repair(point)

    def repair(self, point):
        """Make the span values strictly increasing within their bounds."""
        if len(self._span_names) < 2:
            return point
        bounds = [self.dimension(n).integer_bounds for n in self._span_names]
        values = sorted(int(point[n]) for n in self._span_names)
        last = len(values) - 1
        for k, (low, _) in enumerate(bounds):
            floor = low if k == 0 else max(low, values[k - 1] + 1)
            values[k] = max(values[k], floor)
        for k in range(last, -1, -1):
            high = bounds[k][1]
            ceiling = high if k == last else min(high, values[k + 1] - 1)
            values[k] = min(values[k], ceiling)
        point = dict(point)
        for name, value in zip(self._span_names, values):
            point[name] = value
        return point

    def contains(self, point):
        if not all(d.contains(point[d.name]) for d in self._dimensions):
            return False
        spans = [point[n] for n in self._span_names]
        return all(a < b for a, b in zip(spans, spans[1:]))

    def sample(self, rng):
        return self.repair({
            d.name: d.from_unit(rng.random()) for d in self._dimensions
        })

    def initial_points(self, n, seed):
        """Scrambled Halton points, one coordinate per dimension."""
        if n == 0:
            return []
        sampler = qmc.Halton(d=len(self._dimensions), scramble=True,
                             seed=seed)
        return [
            self.repair({d.name: d.from_unit(u)
                         for d, u in zip(self._dimensions, row)})
            for row in sampler.random(n)
        ]


def _span_dimensions():
    return [Dimension(n, KIND.LOG_INTEGER, *SPAN_RANGE) for n in SPAN_NAMES]


# Search intervals of every model family, spans excluded
SPACES = {
    "ols": [],
    "wls": [],
    "knn": [
        Dimension("n_neighbors", KIND.INTEGER, 1, 2048),
        Dimension("weighting", KIND.CATEGORICAL,
                  choices=["uniform", "distance"]),
    ],
    "rf": [
        Dimension("n_estimators", KIND.INTEGER, 10, 600),
        Dimension("max_depth", KIND.INTEGER, 10, 60),
        Dimension("min_samples_split", KIND.INTEGER, 2, 20),
        Dimension("min_samples_leaf", KIND.INTEGER, 1, 10),
        Dimension("bootstrap", KIND.CATEGORICAL, choices=[True, False]),
    ],
    "svr": [
        Dimension("C", KIND.LOG_REAL, 1e-3, 10),
        Dimension("epsilon", KIND.REAL, 1e-2, 1),
    ],
    "mlp": [
        Dimension("layers", KIND.INTEGER, 1, 3),
        Dimension("units", KIND.INTEGER, 4, 32),
        Dimension("activation", KIND.CATEGORICAL, choices=["selu", "relu"]),
        Dimension("dropout", KIND.REAL, 0, 0.3),
        Dimension("l2", KIND.LOG_REAL, 1e-9, 0.1),
        Dimension("learn_rate", KIND.LOG_REAL, 1e-6, 0.1),
        Dimension("optimizer", KIND.CATEGORICAL,
                  choices=["radam", "adam", "nadam", "adamax", "rmsprop",
                           "sgd"]),
    ],
}
SPACES["et"] = SPACES["rf"]


def space_for(model_type, include_spans=True, overrides=None) -> HpoSpace:
    """The search space of a model family.

    Args:
        model_type (str): A key of SPACES
        include_spans (bool): Add the four span dimensions
        overrides (dict): Per-dimension replacements of kind, low, high or
            choices
    """
    try:
        dimensions = list(SPACES[model_type])
    except KeyError:
        raise ArgumentError(
            "No search space is defined for the model type '{}'."
            .format(model_type)
        )
    if include_spans:
        dimensions += _span_dimensions()
    overrides = overrides or {}
    unknown = set(overrides) - {d.name for d in dimensions}
    if unknown:
        raise ArgumentError(
            "Cannot override unknown dimensions: {}."
            .format(", ".join(sorted(unknown)))
        )
    result = []
    for d in dimensions:
        if d.name in overrides:
            args = {"kind": d.kind, "low": d.low, "high": d.high,
                    "choices": d.choices}
            args.update(overrides[d.name])
            d = Dimension(d.name, **args)
        result.append(d)
    return HpoSpace(result)


def split_point(point):
    """Separate span values from model hyperparameters.

    Returns:
        tuple: The span list (None without span dimensions) and the
        parameter dict
    """
    spans = [int(point[n]) for n in SPAN_NAMES if n in point]
    params = {k: v for k, v in point.items() if k not in SPAN_NAMES}
    return (spans or None), params


@dataclass
class Trial:
    index: int
    point: Dict[str, Any]
    value: Optional[float] = None
    status: str = "ok"
    error: Optional[str] = None
    imputed: Optional[float] = None

    @property
    def ok(self):
        return self.status == "ok"

    def to_dict(self):
        return {
            "index": self.index,
            "point": dict(self.point),
            "value": self.value,
            "status": self.status,
            "error": self.error,
            "imputed": self.imputed,
        }

    @classmethod
    def from_dict(cls, args):
        return cls(**args)


class TrialLog:
    """Line-delimited JSON history, one trial per line."""

    def __init__(self, path):
        self._path = path

    @property
    def path(self):
        return self._path

    def load(self):
        if not os.path.exists(self._path):
            return []
        trials = []
        try:
            with open(self._path, "r") as file:
                lines = [line for line in file if line.strip()]
        except IOError as err:
            raise PmbenchError(
                "The trial history could not be read: {}.\n{}\n"
                .format(self._path, str(err))
            )
        for number, line in enumerate(lines):
            try:
                trials.append(Trial.from_dict(json.loads(line)))
            except (ValueError, TypeError) as err:
                if number == len(lines) - 1:
                    logger.warning(
                        "Ignoring the truncated last line of %s", self._path
                    )
                    break
                raise PmbenchError(
                    "The line {} of the trial history {} is not valid:\n{}"
                    .format(number + 1, self._path, str(err))
                )
        return trials

    def append(self, trial):
        try:
            with open(self._path, "a") as file:
                file.write(json.dumps(trial.to_dict()) + "\n")
        except IOError as err:
            raise PmbenchError(
                "The trial could not be saved to {}.\n{}\n"
                .format(self._path, str(err))
            )


def matern52(A, B, length_scales, signal_variance):
    A = np.atleast_2d(A) / length_scales
    B = np.atleast_2d(B) / length_scales
    sq = np.sum(A ** 2, axis=1)[:, None] + np.sum(B ** 2, axis=1)[None, :] \
        - 2.0 * A @ B.T
    r = np.sqrt(5.0 * np.maximum(sq, 0.0))
    return signal_variance * (1.0 + r + r * r / 3.0) * np.exp(-r)


@dataclass
class GpSurrogate:
    X: np.ndarray
    y: np.ndarray
    signal_variance: float
    length_scales: np.ndarray
    noise: float
    y_mean: float = 0.0
    y_std: float = 1.0
    chol: Optional[np.ndarray] = field(default=None, repr=False)
    alpha: Optional[np.ndarray] = field(default=None, repr=False)
    log_marginal_likelihood: float = 0.0

    @property
    def best(self):
        return float(np.min(self.y))


def gp_condition(X, y, signal_variance, length_scales, noise) -> GpSurrogate:
    """Exact GP regression on centered and scaled targets for fixed kernel
    hyperparameters.

    Raises:
        SurrogateError: The covariance stays singular after jitter
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if len(y) < 2:
        raise SurrogateError(
            "A surrogate needs at least 2 observations, got {}."
            .format(len(y))
        )
    noise = max(float(noise), 1e-10)
    length_scales = np.broadcast_to(
        np.asarray(length_scales, dtype=float), (X.shape[1],)
    ).copy()
    y_mean = float(np.mean(y))
    y_std = float(np.std(y))
    y_std = y_std if y_std > 0 else 1.0
    y_norm = (y - y_mean) / y_std

    K = matern52(X, X, length_scales, signal_variance)
    K[np.diag_indices_from(K)] += noise
    chol = None
    for jitter in (0.0,) + JITTERS:
        try:
            chol = linalg.cholesky(
                K + jitter * signal_variance * np.eye(len(y)), lower=True
            )
            break
        except linalg.LinAlgError:
            continue
    if chol is None:
        raise SurrogateError(
            "The surrogate covariance is not positive definite."
        )
    alpha = linalg.cho_solve((chol, True), y_norm)
    lml = -0.5 * float(y_norm @ alpha) - float(np.sum(np.log(np.diag(chol)))) \
        - 0.5 * len(y) * math.log(2 * math.pi)
    return GpSurrogate(
        X=X, y=y, signal_variance=float(signal_variance),
        length_scales=length_scales, noise=noise, y_mean=y_mean,
        y_std=y_std, chol=chol, alpha=alpha, log_marginal_likelihood=lml,
    )


def gp_fit(X, y, rng=None, n_restarts=4) -> GpSurrogate:
    """Condition a GP with kernel hyperparameters maximizing the marginal
    likelihood, searched by L-BFGS-B from several starting points.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if len(y) < 2:
        raise SurrogateError(
            "A surrogate needs at least 2 observations, got {}."
            .format(len(y))
        )
    rng = rng if rng is not None else np.random.default_rng(0)
    d = X.shape[1]
    # log signal variance, log length scales, log noise
    bounds = [(math.log(0.05), math.log(20.0))] + \
        [(math.log(0.01), math.log(10.0))] * d + \
        [(math.log(1e-10), math.log(1.0))]
    low = np.array([b[0] for b in bounds])
    high = np.array([b[1] for b in bounds])

    def negative_lml(theta):
        try:
            gp = gp_condition(X, y, math.exp(theta[0]), np.exp(theta[1:-1]),
                              math.exp(theta[-1]))
        except SurrogateError:
            return 1e25
        return -gp.log_marginal_likelihood

    starts = [np.concatenate([[0.0], np.full(d, math.log(0.3)),
                              [math.log(1e-4)]])]
    starts += [rng.uniform(low, high) for _ in range(n_restarts)]
    best_theta, best_value = None, np.inf
    for start in starts:
        result = scipy_optimize.minimize(
            negative_lml, start, method="L-BFGS-B", bounds=bounds
        )
        if np.isfinite(result.fun) and result.fun < best_value:
            best_theta, best_value = result.x, float(result.fun)
    if best_theta is None or best_value >= 1e25:
        raise SurrogateError(
            "No kernel hyperparameters gave a usable surrogate."
        )
    return gp_condition(X, y, math.exp(best_theta[0]),
                        np.exp(best_theta[1:-1]), math.exp(best_theta[-1]))


def gp_posterior(surrogate, x):
    """Posterior mean and standard deviation of the latent objective.

    Returns:
        tuple: Scalars for a single point, arrays for a matrix of points
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != surrogate.X.shape[1]:
        raise ArgumentError(
            "The surrogate expects {} encoded values, got {}."
            .format(surrogate.X.shape[1], x.shape[1])
        )
    k_star = matern52(surrogate.X, x, surrogate.length_scales,
                      surrogate.signal_variance)
    mean = k_star.T @ surrogate.alpha
    v = linalg.solve_triangular(surrogate.chol, k_star, lower=True)
    variance = np.maximum(
        surrogate.signal_variance - np.sum(v * v, axis=0), 0.0
    )
    mu = surrogate.y_mean + surrogate.y_std * mean
    sigma = surrogate.y_std * np.sqrt(variance)
    if single:
        return float(mu[0]), float(sigma[0])
    return mu, sigma


def acquisition(mu, sigma, best, kind=ACQUISITION.EI, xi=0.0, kappa=1.96):
    """Acquisition score for minimization, higher is more promising. Zero
    sigma takes the limit value.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    improvement = best - xi - mu
    positive = sigma > 0
    safe_sigma = np.where(positive, sigma, 1.0)
    z = improvement / safe_sigma
    if kind == ACQUISITION.EI:
        score = np.where(
            positive,
            improvement * norm.cdf(z) + sigma * norm.pdf(z),
            np.maximum(improvement, 0.0),
        )
    elif kind == ACQUISITION.PI:
        score = np.where(positive, norm.cdf(z),
                         (improvement > 0).astype(float))
    elif kind == ACQUISITION.UCB:
        score = -(mu - kappa * sigma)
    else:
        raise ArgumentError(
            "The acquisition '{}' is not valid. Please choose between: {}."
            .format(kind, ", ".join(ACQUISITION.ALL))
        )
    return float(score) if score.ndim == 0 else score


def _posterior(surrogate, x, failed=None):
    """gp_posterior, except at failed points where the imputed value is
    taken as known with zero uncertainty. The surrogate itself is never
    conditioned on them.
    """
    mu, sigma = gp_posterior(surrogate, x)
    if not failed:
        return mu, sigma
    single = np.ndim(x) == 1
    x = np.atleast_2d(x)
    mu, sigma = np.atleast_1d(mu).copy(), np.atleast_1d(sigma).copy()
    for point, imputed in failed:
        match = np.all(np.abs(x - point) <= 1e-12, axis=1)
        mu[match] = imputed
        sigma[match] = 0.0
    if single:
        return float(mu[0]), float(sigma[0])
    return mu, sigma


def _refine(surrogate, space, point, kind, rng, steps=20, scale=0.05,
            failed=None):
    """Random local search around point on one acquisition."""
    current = space.encode(point)
    mu, sigma = _posterior(surrogate, current, failed)
    value = acquisition(mu, sigma, surrogate.best, kind)
    for _ in range(steps):
        candidate = space.decode(
            current + rng.normal(0.0, scale, size=len(current))
        )
        encoded = space.encode(candidate)
        mu, sigma = _posterior(surrogate, encoded, failed)
        score = acquisition(mu, sigma, surrogate.best, kind)
        if score > value:
            current, value, point = encoded, score, candidate
    return point


def suggest(surrogate, space, rng, incumbent=None,
            acquisitions=ACQUISITION.ALL, n_candidates=1000,
            n_perturbations=10, failed=None):
    """Next point to evaluate.

    Every acquisition picks its maximizer over a random pool (plus
    perturbations of the incumbent) and refines it locally. Each proposal
    is then scored by every acquisition, min-max normalized over the pool,
    and the proposal with the highest total wins.

    Args:
        failed (list): (encoded point, imputed target) pairs of failed
            trials, scored at their imputed value
    """
    if surrogate is None:
        return space.sample(rng)
    pool = [space.sample(rng) for _ in range(n_candidates)]
    if incumbent is not None:
        base = space.encode(incumbent)
        pool += [
            space.decode(base + rng.normal(0.0, 0.1, size=len(base)))
            for _ in range(n_perturbations)
        ]
    encoded = np.array([space.encode(p) for p in pool])
    mu, sigma = _posterior(surrogate, encoded, failed)
    pool_scores = {
        kind: acquisition(mu, sigma, surrogate.best, kind)
        for kind in acquisitions
    }

    proposals = []
    for kind in acquisitions:
        start = pool[int(np.argmax(pool_scores[kind]))]
        proposals.append(
            _refine(surrogate, space, start, kind, rng, failed=failed)
        )

    mu_p, sigma_p = _posterior(
        surrogate, np.array([space.encode(p) for p in proposals]), failed
    )
    totals = np.zeros(len(proposals))
    for kind in acquisitions:
        scores = acquisition(mu_p, sigma_p, surrogate.best, kind)
        low, high = float(np.min(pool_scores[kind])), \
            float(np.max(pool_scores[kind]))
        spread = high - low if high > low else 1.0
        totals += (scores - low) / spread
    return proposals[int(np.argmax(totals))]


@dataclass
class HpoResult:
    best: Optional[Trial]
    history: List[Trial]

    @property
    def incumbent_trace(self):
        """Best objective after every trial, inf before the first success."""
        trace, best = [], np.inf
        for trial in self.history:
            if trial.ok and trial.value < best:
                best = trial.value
            trace.append(best)
        return trace


def _incumbent(history):
    best = None
    for trial in history:
        if trial.ok and (best is None or trial.value < best.value):
            best = trial
    return best


def _evaluate(objective, point, index, history):
    try:
        value = float(objective(point))
        if not math.isfinite(value):
            raise PmbenchError("The objective returned {}.".format(value))
    except Exception as err:
        values = [t.value for t in history if t.ok]
        logger.warning("Trial %d failed: %s", index, err)
        return Trial(
            index=index, point=point, status="failed", error=str(err),
            imputed=1.5 * max(values) if values else None,
        )
    logger.info("Trial %d: %.6g", index, value)
    return Trial(index=index, point=point, value=value)


def optimize(objective, space, n_init=30, n_iter=100, seed=0, log=None,
             acquisitions=ACQUISITION.ALL, n_candidates=1000,
             transform=np.log1p) -> HpoResult:
    """Minimize objective over space.

    The first n_init points come from a scrambled Halton sequence, the next
    n_iter from the surrogate. With a TrialLog, trials already recorded are
    reused instead of evaluated, so an interrupted run resumes where it
    stopped.
    """
    if n_init < 0 or n_iter < 0:
        raise ArgumentError("Trial counts must be nonnegative.")
    history = log.load() if log is not None else []
    total = n_init + n_iter
    if history:
        logger.info("Resuming after %d recorded trials", len(history))
    initial = space.initial_points(n_init, seed)

    for index in range(len(history), total):
        if index < n_init:
            point = initial[index]
        else:
            rng = np.random.default_rng([seed, index])
            ok = [t for t in history if t.ok]
            try:
                values = np.array([t.value for t in ok])
                scale = transform
                targets = scale(values)
                if not np.all(np.isfinite(targets)):
                    scale, targets = np.asarray, values
                failed = [
                    (space.encode(t.point), float(scale(t.imputed)))
                    for t in history
                    if not t.ok and t.imputed is not None
                ]
                failed = [f for f in failed if math.isfinite(f[1])]
                surrogate = gp_fit(
                    np.array([space.encode(t.point) for t in ok]),
                    targets, rng,
                )
                best = _incumbent(history)
                point = suggest(
                    surrogate, space, rng,
                    incumbent=best.point if best else None,
                    acquisitions=acquisitions, n_candidates=n_candidates,
                    failed=failed,
                )
            except SurrogateError as err:
                logger.warning(
                    "Surrogate unavailable (%s), sampling at random.", err
                )
                point = space.sample(rng)
        trial = _evaluate(objective, point, index, history)
        history.append(trial)
        if log is not None:
            log.append(trial)

    return HpoResult(best=_incumbent(history), history=history)


def random_search(objective, space, n_trials, seed=0) -> HpoResult:
    rng = np.random.default_rng(seed)
    history = []
    for index in range(n_trials):
        trial = _evaluate(objective, space.sample(rng), index, history)
        history.append(trial)
    return HpoResult(best=_incumbent(history), history=history)
