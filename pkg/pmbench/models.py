"""The model families behind one regression interface, and the registry
that validates hyperparameters and instantiates them.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from jsonschema import validate
from jsonschema.exceptions import ValidationError

from pmbench import forest, linmodel, mlp, neighbors, svr
from pmbench.errors import ArgumentError, ConfigurationError, PmbenchError

logger = logging.getLogger(__name__)


class Regressor(ABC):
    """A trained or trainable predictor of the magnet temperature.

    Families whose optimization depends on the target scale work on the
    standardized target and map their predictions back.
    """
    TYPE = None
    STANDARDIZE_TARGET = False
    STOCHASTIC = False

    def __init__(self, params=None, seed=0):
        self._params = dict(params or {})
        self._seed = int(seed)
        self._model = None
        self._target_mean = 0.0
        self._target_std = 1.0
        self.history = None

    def __repr__(self):
        return "<{} model, {}fitted>".format(
            self.TYPE, "" if self.is_fitted else "not "
        )

    @property
    def params(self):
        return dict(self._params)

    @property
    def seed(self):
        return self._seed

    @property
    def is_fitted(self):
        return self._model is not None

    @property
    def model(self):
        return self._model

    @property
    def n_parameters(self):
        self._check_fitted()
        return int(self._model.n_parameters)

    @property
    def diagnostics(self):
        return dict(getattr(self._model, "diagnostics", {}) or {})

    def _check_fitted(self):
        if self._model is None:
            raise ArgumentError(
                "The {} model has not been fitted.".format(self.TYPE)
            )

    def fit(self, X, y, groups=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
            raise ArgumentError(
                "Expected a non-empty 2-D matrix with one target per row."
            )
        if self.STANDARDIZE_TARGET:
            self._target_mean = float(np.mean(y))
            std = float(np.std(y))
            self._target_std = std if std > 0 else 1.0
            y = (y - self._target_mean) / self._target_std
        self._model = self._fit(X, y, groups)
        return self

    def predict(self, X):
        self._check_fitted()
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        y_hat = np.asarray(self._predict(X), dtype=float)
        return y_hat * self._target_std + self._target_mean

    @abstractmethod
    def _fit(self, X, y, groups):
        pass

    @abstractmethod
    def _predict(self, X):
        pass

    @classmethod
    @abstractmethod
    def _load(cls, state):
        pass

    def to_dict(self):
        self._check_fitted()
        return {
            "type": self.TYPE,
            "params": self.params,
            "seed": self._seed,
            "target": [self._target_mean, self._target_std],
            "state": self._model.to_dict(),
        }

    @classmethod
    def from_dict(cls, args):
        regressor = cls(args.get("params"), args.get("seed", 0))
        regressor._target_mean, regressor._target_std = \
            (float(v) for v in args.get("target", [0.0, 1.0]))
        regressor._model = cls._load(args["state"])
        return regressor


class OlsRegressor(Regressor):
    TYPE = "ols"

    def _fit(self, X, y, groups):
        return linmodel.fit_ols(X, y)

    def _predict(self, X):
        return linmodel.predict(self._model, X)

    @classmethod
    def _load(cls, state):
        return linmodel.LinearModel.from_dict(state)


class WlsRegressor(OlsRegressor):
    TYPE = "wls"

    def _fit(self, X, y, groups):
        return linmodel.fit_wls_thermal(
            X, y, linmodel.ThermalWeightConfig(**self._params)
        )


class KnnRegressor(Regressor):
    TYPE = "knn"

    def _fit(self, X, y, groups):
        k = int(self._params.get("n_neighbors", 5))
        if k > X.shape[0]:
            logger.warning(
                "Only %d training rows, lowering k from %d.", X.shape[0], k
            )
            k = X.shape[0]
        return neighbors.fit_knn(
            X, y, k,
            self._params.get("weighting", neighbors.WEIGHTING.UNIFORM),
            self._params.get("algorithm", neighbors.ALGORITHM.AUTO),
        )

    def _predict(self, X):
        return neighbors.predict_knn(self._model, X)

    @classmethod
    def _load(cls, state):
        return neighbors.KnnModel.from_dict(state)


class RandomForestRegressor(Regressor):
    TYPE = "rf"
    STOCHASTIC = True
    MODE = forest.SPLIT_MODE.BEST

    def _fit(self, X, y, groups):
        tree_params = forest.TreeParams(
            max_depth=self._params.get("max_depth"),
            min_samples_split=self._params.get("min_samples_split", 2),
            min_samples_leaf=self._params.get("min_samples_leaf", 1),
            max_features=self._params.get("max_features"),
            mode=self.MODE,
        )
        return forest.fit_ensemble(
            X, y, tree_params,
            n_estimators=self._params.get("n_estimators", 100),
            bootstrap=self._params.get("bootstrap", True),
            seed=self._seed,
            n_jobs=self._params.get("n_jobs", 1),
        )

    def _predict(self, X):
        return forest.predict_forest(self._model, X)

    @classmethod
    def _load(cls, state):
        return forest.Forest.from_dict(state)


class ExtraTreesRegressor(RandomForestRegressor):
    TYPE = "et"
    MODE = forest.SPLIT_MODE.RANDOM


class SvrRegressor(Regressor):
    TYPE = "svr"
    STANDARDIZE_TARGET = True

    def _fit(self, X, y, groups):
        params = svr.SvrParams(seed=self._seed, **self._params)
        model = svr.fit_svr(X, y, params)
        if not model.converged:
            logger.warning("The SVR fit did not converge.")
        return model

    def _predict(self, X):
        return svr.predict_svr(self._model, X)

    @classmethod
    def _load(cls, state):
        return svr.SvrModel.from_dict(state)


class MlpRegressor(Regressor):
    TYPE = "mlp"
    STANDARDIZE_TARGET = True
    STOCHASTIC = True
    SCHEDULE_KEYS = ["max_epochs", "early_stop_patience", "min_delta"]

    def _fit(self, X, y, groups):
        config = mlp.MlpConfig(
            seed=self._seed,
            **{k: v for k, v in self._params.items()
               if k not in self.SCHEDULE_KEYS}
        )
        schedule = mlp.TrainSchedule(
            **{k: v for k, v in self._params.items()
               if k in self.SCHEDULE_KEYS}
        )
        if groups is None:
            raise ArgumentError(
                "MLP training needs the profile of every row to hold out a "
                "validation set."
            )
        net = mlp.init_mlp(config, X.shape[1])
        net, self.history = mlp.train(net, X, y, groups, schedule)
        return net

    def _predict(self, X):
        return mlp.predict_mlp(self._model, X)

    @classmethod
    def _load(cls, state):
        return mlp.Mlp.from_dict(state)


def _schema(properties):
    return {
        "$schema": "http://json-schema.org/draft-07/schema#",
        "$id": "http://example.com/product.schema.json",
        "type": "object",
        "additionalProperties": False,
        "properties": properties,
    }


_FOREST_SCHEMA = _schema({
    "n_estimators": {"type": "integer", "minimum": 10, "maximum": 600},
    "max_depth": {
        "anyOf": [
            {"type": "integer", "minimum": 10, "maximum": 60},
            {"type": "null"},
        ]
    },
    "min_samples_split": {"type": "integer", "minimum": 2, "maximum": 20},
    "min_samples_leaf": {"type": "integer", "minimum": 1, "maximum": 10},
    "max_features": {
        "anyOf": [{"type": "integer", "minimum": 1}, {"type": "null"}]
    },
    "bootstrap": {"type": "boolean"},
    "n_jobs": {"type": "integer"},
})


class ModelLoader:
    class MODEL_TYPE:
        OLS = "ols"
        WLS = "wls"
        KNN = "knn"
        RF = "rf"
        ET = "et"
        SVR = "svr"
        MLP = "mlp"
        ALL = [OLS, WLS, KNN, RF, ET, SVR, MLP]

    CLASSES = {
        MODEL_TYPE.OLS: OlsRegressor,
        MODEL_TYPE.WLS: WlsRegressor,
        MODEL_TYPE.KNN: KnnRegressor,
        MODEL_TYPE.RF: RandomForestRegressor,
        MODEL_TYPE.ET: ExtraTreesRegressor,
        MODEL_TYPE.SVR: SvrRegressor,
        MODEL_TYPE.MLP: MlpRegressor,
    }

    # Hyperparameter intervals of every family
    SCHEMAS = {
        MODEL_TYPE.OLS: _schema({}),
        MODEL_TYPE.WLS: _schema({
            "w_min": {"type": "number", "exclusiveMinimum": 0},
            "w_max": {"type": "number", "exclusiveMinimum": 0},
            "under_estimate_factor": {"type": "number", "minimum": 1},
            "max_irls_iterations": {"type": "integer", "minimum": 1},
        }),
        MODEL_TYPE.KNN: _schema({
            "n_neighbors": {"type": "integer", "minimum": 1,
                            "maximum": 2048},
            "weighting": {"type": "string",
                          "enum": neighbors.WEIGHTING.ALL},
            "algorithm": {"type": "string",
                          "enum": neighbors.ALGORITHM.ALL},
        }),
        MODEL_TYPE.RF: _FOREST_SCHEMA,
        MODEL_TYPE.ET: _FOREST_SCHEMA,
        MODEL_TYPE.SVR: _schema({
            "C": {"type": "number", "minimum": 1e-3, "maximum": 10},
            "epsilon": {"type": "number", "minimum": 1e-2, "maximum": 1},
            "gamma": {
                "anyOf": [
                    {"type": "number", "exclusiveMinimum": 0},
                    {"type": "string", "enum": [svr.GAMMA.SCALE]},
                ]
            },
            "tol": {"type": "number", "exclusiveMinimum": 0},
            "max_passes": {"type": "integer", "minimum": 1},
            "cache_rows": {"type": "integer", "minimum": 2},
            "subsample": {
                "anyOf": [{"type": "integer", "minimum": 2},
                          {"type": "null"}]
            },
        }),
        MODEL_TYPE.MLP: _schema({
            "layers": {"type": "integer", "minimum": 1, "maximum": 3},
            "units": {"type": "integer", "minimum": 4, "maximum": 32},
            "activation": {"type": "string", "enum": mlp.ACTIVATION.ALL},
            "dropout": {"type": "number", "minimum": 0, "maximum": 0.3},
            "l2": {
                "anyOf": [
                    {"type": "number", "minimum": 1e-9, "maximum": 0.1},
                    {"const": 0},
                ]
            },
            "learn_rate": {"type": "number", "minimum": 1e-6,
                           "maximum": 0.1},
            "optimizer": {"type": "string", "enum": mlp.OPTIMIZER.ALL},
            "max_epochs": {"type": "integer", "minimum": 1},
            "early_stop_patience": {"type": "integer", "minimum": 1},
            "min_delta": {"type": "number", "minimum": 0},
        }),
    }

    class Utils:
        @staticmethod
        def validate_params(model_type, params):
            """Check hyperparameters against the intervals of the model
            family.

            Raises:
                ConfigurationError: Unknown type or invalid parameters
            """
            try:
                schema = ModelLoader.SCHEMAS[model_type]
            except KeyError:
                raise ConfigurationError(
                    "The model type '{}' is not valid. Please choose "
                    "between: {}."
                    .format(model_type, ", ".join(ModelLoader.MODEL_TYPE.ALL))
                )
            try:
                validate(instance=params, schema=schema)
            except ValidationError as err:
                raise ConfigurationError(
                    "The hyperparameters of the '{}' model are not valid: "
                    "\n{}\n{}.".format(model_type, err.instance, err.message)
                )

        @staticmethod
        def instantiate_model(model_type, params=None, seed=0):
            """Instantiate and return an unfitted model of the given type."""
            params = dict(params or {})
            ModelLoader.Utils.validate_params(model_type, params)
            model_class = ModelLoader.CLASSES[model_type]
            try:
                return model_class(params, seed)
            except TypeError:
                raise ConfigurationError(
                    "The arguments given to the '{}' model are not valid."
                    .format(model_type)
                )

    @staticmethod
    def load(description):
        """Rebuild a fitted model from its to_dict description."""
        try:
            model_type = description["type"]
            model_class = ModelLoader.CLASSES[model_type]
        except KeyError as err:
            raise PmbenchError(
                "The model description has no valid type: {}"
                .format(err.args[0])
            )
        try:
            return model_class.from_dict(description)
        except (KeyError, TypeError, ValueError) as err:
            raise PmbenchError(
                "The '{}' model could not be restored:\n{}"
                .format(model_type, str(err))
            )


@dataclass
class ModelSpec:
    """What to train: a model family, its hyperparameters and a seed."""
    model_type: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def stochastic(self):
        return ModelLoader.CLASSES[self.model_type].STOCHASTIC

    def build(self, seed=None):
        return ModelLoader.Utils.instantiate_model(
            self.model_type, self.params,
            self.seed if seed is None else seed
        )

    def to_dict(self):
        return {
            "type": self.model_type,
            "params": dict(self.params),
            "seed": self.seed,
        }
