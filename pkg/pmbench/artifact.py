"""Self-describing model documents.

One JSON document holds everything inference needs: the fitted model, the
feature scaler and the span set, plus the hash of the configuration that
produced it.
"""
import hashlib
import logging

try:
    import json
except ImportError:
    import simplejson as json

from pmbench.errors import PmbenchError, SchemaError
from pmbench.features import Scaler, SpanSet, apply_scaler
from pmbench.models import ModelLoader

logger = logging.getLogger(__name__)

FORMAT = "pmbench-model"
VERSION = 1


def _native(value):
    """JSON fallback for numpy scalars and arrays."""
    if hasattr(value, "tolist"):
        return value.tolist()
    raise TypeError("{} is not JSON serializable".format(type(value)))


def config_hash(configuration):
    text = json.dumps(configuration, sort_keys=True, default=str)
    return hashlib.sha1(text.encode("utf-8")).hexdigest()


class Artifact:
    def __init__(self, model, scaler, spans, config_hash="", metrics=None,
                 seeds=None):
        self._model = model
        self._scaler = scaler
        self._spans = spans if isinstance(spans, SpanSet) \
            else SpanSet(tuple(spans))
        self._config_hash = config_hash
        self._metrics = dict(metrics or {})
        self._seeds = list(seeds or [])

    def __repr__(self):
        return "<Artifact of a {} model on spans {}>".format(
            self._model.TYPE, self._spans.to_list()
        )

    @property
    def model(self):
        return self._model

    @property
    def scaler(self):
        return self._scaler

    @property
    def spans(self):
        return self._spans

    @property
    def config_hash(self):
        return self._config_hash

    @property
    def metrics(self):
        return dict(self._metrics)

    @property
    def seeds(self):
        return list(self._seeds)

    def predict(self, X):
        """Predictions for unscaled feature rows."""
        return self._model.predict(apply_scaler(self._scaler, X))

    def to_dict(self):
        return {
            "format": FORMAT,
            "version": VERSION,
            "config_hash": self._config_hash,
            "spans": self._spans.to_list(),
            "scaler": self._scaler.to_dict(),
            "model": self._model.to_dict(),
            "n_parameters": self._model.n_parameters,
            "metrics": self._metrics,
            "seeds": self._seeds,
        }

    @classmethod
    def from_dict(cls, document):
        if document.get("format") != FORMAT:
            raise SchemaError(
                "The document is not a model artifact (format '{}')."
                .format(document.get("format"))
            )
        if document.get("version") != VERSION:
            raise SchemaError(
                "The artifact version {} is not supported."
                .format(document.get("version"))
            )
        try:
            return cls(
                model=ModelLoader.load(document["model"]),
                scaler=Scaler.from_dict(document["scaler"]),
                spans=document["spans"],
                config_hash=document.get("config_hash", ""),
                metrics=document.get("metrics"),
                seeds=document.get("seeds"),
            )
        except KeyError as err:
            raise SchemaError(
                "The artifact is missing the key '{}'.".format(err.args[0])
            )
        except PmbenchError as err:
            raise SchemaError(
                "The artifact could not be restored:\n{}".format(str(err))
            )


def save_artifact(artifact, path):
    try:
        with open(path, "w") as file:
            json.dump(artifact.to_dict(), file, default=_native)
    except (IOError, OSError) as err:
        raise PmbenchError(
            "The artifact could not be written to {}.\n{}\n"
            .format(path, str(err))
        )
    logger.info("Saved %r to %s", artifact, path)


def load_artifact(path) -> Artifact:
    try:
        with open(path, "r") as file:
            document = json.load(file)
    except IOError as err:
        raise PmbenchError(
            "The artifact could not be opened: {}.\n{}\n"
            .format(path, str(err))
        )
    except ValueError as err:
        raise SchemaError(
            "There was an error during the parsing of '{}'.\n{}\n"
            .format(path, str(err))
        )
    return Artifact.from_dict(document)
