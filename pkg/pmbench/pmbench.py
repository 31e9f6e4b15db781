#!/usr/bin/env python3
import argparse
import copy
import glob
import logging
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import pandas as pd
import yaml
from jsonschema import validate
from jsonschema.exceptions import ValidationError

try:
    import json
except ImportError:
    import simplejson as json

from pmbench import hpo
from pmbench.artifact import (
    Artifact, config_hash, load_artifact, save_artifact
)
from pmbench.data import (
    COLUMNS, Dataset, RawSample, SyntheticConfig, generate_synthetic,
    load_dataset, save_dataset, split_profiles
)
from pmbench.errors import ConfigurationError, ParseError, PmbenchError
from pmbench.eval import (
    benchmark_table, compute_metrics, cross_validate, fit_pipeline,
    learn_curve, make_fold_plan, metrics_row, pca_project, predict_pipeline,
    residual_frame, summary, trace_frame
)
from pmbench.features import (
    FeatureStreamer, apply_scaler, build_features, fit_scaler
)
from pmbench.models import ModelLoader, ModelSpec

logger = logging.getLogger(__name__)

# The name of the Environment variable where to find the path towards the
# configuration file
DEFAULT_ENV_CONFIG_FILE = "PMBENCH_CONFIG_FILE"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class COMMAND:
    TUNE = "tune"
    TRAIN = "train"
    EVAL = "eval"
    LEARNCURVE = "learncurve"
    PCA = "pca"
    INFER = "infer"
    REPORT = "report"
    SYNTH = "synth"
    ALL = [TUNE, TRAIN, EVAL, LEARNCURVE, PCA, INFER, REPORT, SYNTH]
    # Commands reading a dataset, and those reading a model artifact
    NEEDS_DATA = [TUNE, TRAIN, EVAL, LEARNCURVE, PCA, SYNTH]
    NEEDS_ARTIFACT = [EVAL, INFER]
    NEEDS_MODEL = [TUNE, TRAIN, LEARNCURVE]


def _section(properties, required=()):
    return {
        "$schema": "http://json-schema.org/draft-07/schema#",
        "$id": "http://example.com/product.schema.json",
        "type": "object",
        "additionalProperties": False,
        "required": list(required),
        "properties": properties,
    }


_SPANS = {
    "type": "array",
    "minItems": 1,
    "items": {"type": "integer", "minimum": 1},
}


class Validator:
    class Dataset:
        @staticmethod
        def validate_configuration(configuration):
            Validator.Utils.validate_section("dataset", configuration,
                                             _section({
                "path": {"type": "string", "minLength": 1},
                "sample_rate_hz": {"type": "number", "exclusiveMinimum": 0},
                "test_profiles": {
                    "type": "array",
                    "items": {"type": ["string", "integer"]},
                },
            }))

    class Synthetic:
        @staticmethod
        def validate_configuration(configuration):
            pair = {"type": "array", "minItems": 2, "maxItems": 2,
                    "items": {"type": "number"}}
            Validator.Utils.validate_section("synthetic", configuration,
                                             _section({
                "rc_time_constants": pair,
                "conductances": pair,
                "coupling_conductance": {"type": "number", "minimum": 0},
                "loss_coefficients": {"type": "array", "minItems": 2,
                                      "maxItems": 2, "items": pair},
                "duration_s": {"type": "number"},
                "n_profiles": {"type": "integer", "minimum": 1},
                "idle_s": {"type": "number", "minimum": 0},
                "min_hold_s": {"type": "number"},
                "max_hold_s": {"type": "number"},
                "max_speed": {"type": "number", "minimum": 0},
                "max_current": {"type": "number", "minimum": 0},
                "ambient_c": {"type": "number"},
                "coolant_c": {"type": "number"},
                "temperature_spread": {"type": "number", "minimum": 0},
                "sample_rate_hz": {"type": "number", "exclusiveMinimum": 0},
            }))

    class Features:
        @staticmethod
        def validate_configuration(configuration):
            Validator.Utils.validate_section("features", configuration,
                                             _section({
                "spans": {
                    "anyOf": [_SPANS, {"type": "string", "enum": ["tune"]}]
                },
            }, required=["spans"]))

    class Model:
        @staticmethod
        def validate_configuration(configuration):
            Validator.Utils.validate_section("model", configuration,
                                             _section({
                "type": {"type": "string",
                         "enum": ModelLoader.MODEL_TYPE.ALL},
                "params": {"type": "object"},
                "params_from": {"type": "string", "minLength": 1},
            }, required=["type"]))
            ModelLoader.Utils.validate_params(
                configuration["type"], configuration.get("params", {})
            )

    class Tune:
        @staticmethod
        def validate_configuration(configuration):
            Validator.Utils.validate_section("tune", configuration, _section({
                "n_init": {"type": "integer", "minimum": 0},
                "n_iter": {"type": "integer", "minimum": 0},
                "folds": {"type": "integer", "minimum": 2},
                "acquisitions": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "string",
                              "enum": hpo.ACQUISITION.ALL},
                },
                "n_candidates": {"type": "integer", "minimum": 1},
                "space": {
                    "type": "object",
                    "additionalProperties": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "kind": {"type": "string",
                                     "enum": hpo.KIND.ALL},
                            "low": {"type": "number"},
                            "high": {"type": "number"},
                            "choices": {"type": "array", "minItems": 1},
                        },
                    },
                },
            }))

    class Train:
        @staticmethod
        def validate_configuration(configuration):
            Validator.Utils.validate_section("train", configuration,
                                             _section({
                "repetitions": {"type": "integer", "minimum": 1},
            }))

    class LearnCurve:
        @staticmethod
        def validate_configuration(configuration):
            Validator.Utils.validate_section("learncurve", configuration,
                                             _section({
                "fractions": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "number", "exclusiveMinimum": 0,
                              "maximum": 1},
                },
                "repeats": {"type": "integer", "minimum": 1},
            }))

    class Report:
        @staticmethod
        def validate_configuration(configuration):
            Validator.Utils.validate_section("report", configuration,
                                             _section({
                "models": {
                    "type": "array",
                    "items": {"type": "string",
                              "enum": ModelLoader.MODEL_TYPE.ALL},
                },
            }))

    class Utils:
        @staticmethod
        def validate_section(name, configuration, schema):
            try:
                validate(instance=configuration, schema=schema)
            except ValidationError as err:
                raise ConfigurationError(
                    "The configuration file parsing failed due to an error "
                    "in the '{}' section: \n{}\n{}.".format(
                        name, err.instance, err.message
                    )
                )

    SECTIONS = {
        "dataset": Dataset,
        "synthetic": Synthetic,
        "features": Features,
        "model": Model,
        "tune": Tune,
        "train": Train,
        "learncurve": LearnCurve,
        "report": Report,
    }

    @staticmethod
    def validate_configuration(configuration, command):
        """Validate every present section and the sections the command
        needs.
        """
        if not isinstance(configuration, dict):
            raise ConfigurationError(
                "The configuration file must hold a mapping."
            )
        unknown = set(configuration) - set(Validator.SECTIONS) - \
            {"seed", "output_dir", "jobs"}
        if unknown:
            raise ConfigurationError(
                "Unknown configuration section(s): {}."
                .format(", ".join(sorted(unknown)))
            )
        if not isinstance(configuration.get("seed", 0), int):
            raise ConfigurationError("The seed must be an integer.")
        if not isinstance(configuration.get("output_dir", ""), str):
            raise ConfigurationError("The output_dir must be a string.")

        required = []
        if command in COMMAND.NEEDS_MODEL:
            required = ["model", "features"]
        elif command == COMMAND.PCA:
            required = ["features"]
        try:
            for name in required:
                configuration[name]
        except KeyError as err:
            raise ConfigurationError(
                "The '{}' key is missing from the configuration file."
                .format(err.args[0])
            )
        for name, section in Validator.SECTIONS.items():
            if name in configuration:
                section.validate_configuration(configuration[name])


@dataclass
class Experiment:
    """Everything a command runs on, resolved from the configuration."""
    configuration: dict
    command: str
    seed: int
    out_dir: str
    jobs: int
    dataset: Optional[Dataset] = None
    train: Optional[Dataset] = None
    test: Optional[Dataset] = None
    artifact: Optional[Artifact] = None
    spec: Optional[ModelSpec] = None
    spans: Any = None
    extra: dict = field(default_factory=dict)

    @property
    def model_dir(self):
        name = self.spec.model_type if self.spec is not None \
            else self.artifact.model.TYPE
        return os.path.join(self.out_dir, name)

    def fixed_spans(self):
        if self.spans is None or self.spans == "tune":
            raise PmbenchError(
                "The '{}' command needs fixed spans: set features.spans or "
                "point model.params_from to a tuning result."
                .format(self.command)
            )
        return self.spans


class Utils:
    @staticmethod
    def exit(error, code):
        """Write an error message on stderr and exit the program with the
        given return code.

        Args:
            error (str): The message
            code (int): The return code

        """
        sys.stderr.write(str(error) + "\n")
        sys.exit(code)

    @staticmethod
    def parse_cli_args(script_args):
        """Declare and configure script argument parser

        Args:
                script_args (list): The list of script arguments

        Returns:
                obj: The parsed arguments in an object.
                     See argparse documention
                     (https://docs.python.org/3.7/library/argparse.html)
                     for more information.
        """
        parser = argparse.ArgumentParser(prog="pmbench")
        parser.add_argument(
            'command', choices=COMMAND.ALL,
            help="""The pipeline step to run."""
        )
        parser.add_argument(
            '-c', '--config-file', '--config',
            default=os.getenv(
                DEFAULT_ENV_CONFIG_FILE, os.getcwd() + "/pmbench.yml"
            ),
            help="""Path for script's configuration file. If None is specified,
                    default value is %s environment variable or pmbench.yml
                    in the current dir.""" % DEFAULT_ENV_CONFIG_FILE
        )
        parser.add_argument(
            '--seed', type=int, default=None,
            help="""Seed overriding the configuration file."""
        )
        parser.add_argument(
            '--out', default=None,
            help="""Output directory overriding the configuration file."""
        )
        parser.add_argument(
            '--jobs', type=int, default=None,
            help="""Number of parallel jobs for folds, repeats and trees."""
        )
        parser.add_argument(
            '--model', default=None,
            help="""Model artifact read by eval and infer. Defaults to
                    model.json in the model's output directory."""
        )
        parser.add_argument(
            '--input', default="-",
            help="""CSV stream read by infer, '-' for standard input."""
        )
        parser.add_argument(
            '-v', '--verbose', action='store_true', default=False,
            help="""Log debug messages."""
        )

        # Parse script arguments and return the result
        return parser.parse_args(script_args)

    @staticmethod
    def configure_logging(verbose):
        logging.basicConfig(
            stream=sys.stderr,
            level=logging.DEBUG if verbose else logging.INFO,
            format=LOG_FORMAT,
        )

    @staticmethod
    def load_config_file(config_file_path):
        """Load the configuration file and returns its parsed content.

        Args:
            config_file_path (str): The path towards the configuration file
        """
        try:
            with open(config_file_path, 'r') as file:
                parsed_config = yaml.safe_load(file)
        except IOError:
            # Handle file level exception
            raise ConfigurationError(
                "The configuration file could not be found: {}"
                .format(config_file_path)
            )
        except yaml.YAMLError as yaml_error:
            raise ConfigurationError(
                "There was an error during the parsing of the configuration "
                "file.\n{}\n{}\n"
                .format(config_file_path, str(yaml_error))
            )

        return parsed_config if parsed_config is not None else {}

    @staticmethod
    def apply_overrides(configuration, args):
        """Command line flags take precedence over the file."""
        configuration = copy.deepcopy(configuration)
        if args.get("seed") is not None:
            configuration["seed"] = args["seed"]
        if args.get("out") is not None:
            configuration["output_dir"] = args["out"]
        if args.get("jobs") is not None:
            configuration["jobs"] = args["jobs"]
        return configuration

    @staticmethod
    def load_json(path):
        try:
            with open(path, 'r') as file:
                return json.load(file)
        except IOError as err:
            raise PmbenchError(
                "The specified file could not be opened: {}.\n{}\n"
                .format(path, str(err))
            )
        except ValueError as err:
            raise PmbenchError(
                "There was an error during the parsing of '{}'.\n{}\n"
                .format(path, err)
            )

    @staticmethod
    def new_experiment(configuration, args):
        return Experiment(
            configuration=configuration,
            command=args["command"],
            seed=int(configuration.get("seed", 0)),
            out_dir=configuration.get("output_dir", "results"),
            jobs=int(configuration.get("jobs", 1)),
        )

    @staticmethod
    def load_data(experiment, args):
        """Read or generate the dataset, split it, and read the artifact
        of the commands that need one.
        """
        configuration = experiment.configuration
        if experiment.command in COMMAND.NEEDS_ARTIFACT:
            path = args.get("model") or os.path.join(
                experiment.out_dir,
                configuration.get("model", {}).get("type", ""),
                "model.json",
            )
            experiment.artifact = load_artifact(path)
        if experiment.command not in COMMAND.NEEDS_DATA:
            return experiment

        ds_cfg = configuration.get("dataset", {})
        if ds_cfg.get("path") and experiment.command != COMMAND.SYNTH:
            dataset = load_dataset(
                ds_cfg["path"], ds_cfg.get("sample_rate_hz", 2.0)
            )
            default_test = []
        else:
            synthetic = SyntheticConfig.from_dict(
                configuration.get("synthetic", {})
            )
            dataset = generate_synthetic(synthetic, experiment.seed)
            default_test = dataset.profile_ids[-1:]
        test_ids = ds_cfg.get("test_profiles", default_test)
        experiment.dataset = dataset
        experiment.train, experiment.test = split_profiles(dataset, test_ids)
        logger.info(
            "Training on %d profiles (%.2f h), testing on %d (%.2f h)",
            len(experiment.train.profile_ids), experiment.train.hours(),
            len(experiment.test.profile_ids), experiment.test.hours(),
        )
        return experiment

    @staticmethod
    def prepare_experiment(experiment):
        """Resolve the model specification and the span set."""
        configuration = experiment.configuration
        model_cfg = configuration.get("model")
        spans = configuration.get("features", {}).get("spans")
        if model_cfg is not None and experiment.artifact is None:
            params = {}
            if model_cfg.get("params_from"):
                best = Utils.load_json(model_cfg["params_from"])
                if best.get("model") != model_cfg["type"]:
                    raise PmbenchError(
                        "The tuning result {} belongs to a '{}' model."
                        .format(model_cfg["params_from"], best.get("model"))
                    )
                params.update(best.get("params", {}))
                if spans == "tune" and best.get("spans"):
                    spans = best["spans"]
            params.update(model_cfg.get("params", {}))
            ModelLoader.Utils.validate_params(model_cfg["type"], params)
            experiment.spec = ModelSpec(
                model_cfg["type"], params, experiment.seed
            )
        if experiment.artifact is not None:
            spans = experiment.artifact.spans.to_list()
        experiment.spans = spans
        return experiment

    @staticmethod
    def ensure_dir(path):
        try:
            os.makedirs(path, exist_ok=True)
        except OSError as err:
            raise PmbenchError(
                "The output directory {} could not be created.\n{}\n"
                .format(path, str(err))
            )

    @staticmethod
    def write_outputs(out_dir, outputs):
        """Write every output under out_dir, by type: data frames as CSV,
        dictionaries as JSON, strings as text.
        """
        for name, value in outputs.items():
            path = os.path.join(out_dir, name)
            Utils.ensure_dir(os.path.dirname(path))
            if isinstance(value, Artifact):
                save_artifact(value, path)
            elif isinstance(value, Dataset):
                save_dataset(value, path)
            elif isinstance(value, pd.DataFrame):
                try:
                    value.to_csv(path, index=False)
                except (IOError, OSError) as err:
                    raise PmbenchError(
                        "The table {} could not be written.\n{}\n"
                        .format(path, str(err))
                    )
            else:
                try:
                    with open(path, 'w') as file:
                        if isinstance(value, str):
                            file.write(value)
                        else:
                            json.dump(value, file, indent=2, default=str)
                except (IOError, OSError) as err:
                    raise PmbenchError(
                        "The file {} could not be written.\n{}\n"
                        .format(path, str(err))
                    )
            logger.info("Wrote %s", path)


def _relative(experiment, name):
    return os.path.relpath(os.path.join(experiment.model_dir, name),
                           experiment.out_dir)


def cmd_tune(experiment):
    """Bayesian search of the hyperparameters (and spans) minimizing the
    cross-validated MSE on the training profiles.
    """
    cfg = experiment.configuration.get("tune", {})
    spec = experiment.spec
    tune_spans = experiment.spans == "tune"
    space = hpo.space_for(spec.model_type, include_spans=tune_spans,
                          overrides=cfg.get("space"))
    if len(space) == 0:
        raise PmbenchError(
            "Nothing to tune: the '{}' model has no hyperparameters and "
            "the spans are fixed.".format(spec.model_type)
        )
    plan = make_fold_plan(experiment.train, cfg.get("folds", 3),
                          experiment.seed)

    def objective(point):
        spans, params = hpo.split_point(point)
        merged = dict(spec.params)
        merged.update(params)
        trial_spec = ModelSpec(spec.model_type, merged, spec.seed)
        return cross_validate(
            trial_spec, experiment.train,
            spans if spans is not None else experiment.spans,
            plan, n_jobs=experiment.jobs,
        ).mean_mse

    Utils.ensure_dir(experiment.model_dir)
    log = hpo.TrialLog(os.path.join(experiment.model_dir,
                                    "tune_history.jsonl"))
    result = hpo.optimize(
        objective, space,
        n_init=cfg.get("n_init", 30),
        n_iter=cfg.get("n_iter", 100),
        seed=experiment.seed,
        log=log,
        acquisitions=cfg.get("acquisitions", hpo.ACQUISITION.ALL),
        n_candidates=cfg.get("n_candidates", 1000),
    )
    if result.best is None:
        raise PmbenchError("Every tuning trial failed.")

    spans, params = hpo.split_point(result.best.point)
    merged = dict(spec.params)
    merged.update(params)
    best = {
        "model": spec.model_type,
        "params": merged,
        "spans": spans if spans is not None else experiment.spans,
        "cv_mse": result.best.value,
        "trial": result.best.index,
        "n_trials": len(result.history),
    }
    logger.info("Best CV MSE %.4f at trial %d", result.best.value,
                result.best.index)
    trace = pd.DataFrame({
        "trial": [t.index for t in result.history],
        "value": [t.value for t in result.history],
        "status": [t.status for t in result.history],
        "incumbent": result.incumbent_trace,
    })
    return {
        _relative(experiment, "best.json"): best,
        _relative(experiment, "tune_trace.csv"): trace,
    }


def _test_outputs(experiment, y, y_hat, groups):
    return {
        _relative(experiment, "trace.csv"): trace_frame(y, y_hat, groups),
        _relative(experiment, "residuals.csv"): residual_frame(y, y_hat),
    }


def cmd_train(experiment):
    """Fit on the training profiles and score on the test profiles. For
    stochastic models the repetition with the lowest test MSE is kept.
    """
    spans = experiment.fixed_spans()
    if len(experiment.test) == 0:
        raise PmbenchError("Training needs at least one test profile.")
    spec = experiment.spec
    train_features = build_features(experiment.train, spans)
    test_features = build_features(experiment.test, spans)

    repetitions = experiment.configuration.get("train", {}) \
        .get("repetitions", 10) if spec.stochastic else 1
    seeds = [spec.seed + r for r in range(repetitions)]
    runs, best = [], None
    for seed in seeds:
        model, scaler = fit_pipeline(spec, train_features, seed)
        y_hat = predict_pipeline(model, scaler, test_features)
        metrics = compute_metrics(test_features.y, y_hat)
        runs.append(metrics_row(spec.model_type, metrics, model.n_parameters,
                                seed=seed))
        logger.info("%s seed %d: test MSE %.4f", spec.model_type, seed,
                    metrics.mse)
        if best is None or metrics.mse < best[2].mse:
            best = (model, scaler, metrics, y_hat, seed)

    model, scaler, metrics, y_hat, seed = best
    row = metrics_row(spec.model_type, metrics, model.n_parameters,
                      seed=seed, seeds=seeds)
    artifact = Artifact(model, scaler, spans,
                        config_hash=config_hash(experiment.configuration),
                        metrics=row, seeds=seeds)
    outputs = {
        _relative(experiment, "model.json"): artifact,
        _relative(experiment, "metrics.json"): row,
        _relative(experiment, "runs.csv"): pd.DataFrame(runs),
    }
    outputs.update(_test_outputs(experiment, test_features.y, y_hat,
                                 test_features.groups))
    if model.history is not None:
        outputs[_relative(experiment, "history.csv")] = model.history
    return outputs


def cmd_eval(experiment):
    """Score a saved artifact on the test profiles."""
    artifact = experiment.artifact
    if len(experiment.test) == 0:
        raise PmbenchError("Evaluation needs at least one test profile.")
    features = build_features(experiment.test, artifact.spans)
    y_hat = artifact.predict(features.X)
    metrics = compute_metrics(features.y, y_hat)
    row = metrics_row(artifact.model.TYPE, metrics,
                      artifact.model.n_parameters)
    outputs = {_relative(experiment, "eval.json"): row}
    outputs.update(_test_outputs(experiment, features.y, y_hat,
                                 features.groups))
    return outputs


def cmd_learncurve(experiment):
    cfg = experiment.configuration.get("learncurve", {})
    curve = learn_curve(
        experiment.spec, experiment.train, experiment.test,
        experiment.fixed_spans(),
        cfg.get("fractions", [0.125, 0.25, 0.5, 1.0]),
        repeats=cfg.get("repeats", 10),
        seed=experiment.seed,
        n_jobs=experiment.jobs,
    )
    curve.insert(0, "model", experiment.spec.model_type)
    return {_relative(experiment, "learncurve.csv"): curve}


def cmd_pca(experiment):
    """Project the scaled features of every profile onto the first two
    principal components.
    """
    features = build_features(experiment.dataset, experiment.fixed_spans())
    scaled = apply_scaler(fit_scaler(features), features)
    result = pca_project(scaled.X, components=2)
    test_ids = set(experiment.test.profile_ids)
    frame = pd.DataFrame({
        "pc1": result.projection[:, 0],
        "pc2": result.projection[:, 1],
        COLUMNS.PROFILE: features.groups,
        COLUMNS.TARGET: features.y,
        "split": ["test" if g in test_ids else "train"
                  for g in features.groups],
    })
    return {
        os.path.join("pca", "pca.csv"): frame,
        os.path.join("pca", "pca.json"): {
            "explained_variance_ratio":
                result.explained_variance_ratio.tolist(),
            "components": result.components.tolist(),
            "features": list(scaled.names),
        },
    }


class StreamReader:
    """Parse CSV lines into samples, the first line being the header."""
    FIELDS = COLUMNS.INPUTS

    def __init__(self, header):
        names = [n.strip() for n in header.strip().split(",")]
        missing = [c for c in self.FIELDS if c not in names]
        if missing:
            raise ParseError(
                "The stream header is missing the column(s): {}."
                .format(", ".join(missing))
            )
        self._index = {n: i for i, n in enumerate(names)}
        self._width = len(names)

    def parse(self, line):
        cells = [c.strip() for c in line.rstrip("\r\n").split(",")]
        if len(cells) != self._width:
            raise ParseError(
                "Expected {} cells, got {}.".format(self._width, len(cells))
            )
        values = {}
        for name in self.FIELDS:
            try:
                value = float(cells[self._index[name]])
            except ValueError:
                raise ParseError(
                    "Non-numeric value '{}' in column '{}'."
                    .format(cells[self._index[name]], name)
                )
            if not np.isfinite(value):
                raise ParseError(
                    "Non-finite value in column '{}'.".format(name)
                )
            values[name] = value
        profile = cells[self._index[COLUMNS.PROFILE]] \
            if COLUMNS.PROFILE in self._index else ""
        return RawSample(profile_id=profile, **values)


def cmd_infer_stream(artifact, lines, out, err=None):
    """Predict the magnet temperature of every streamed sample with a
    constant-memory feature state.

    Args:
        artifact (Artifact): The model document
        lines (iterable): CSV lines, header first
        out (file): Receives "index,pm_hat" lines
        err (file): Receives "error,index,message" records

    Returns:
        int: The number of predictions written
    """
    err = err if err is not None else sys.stderr
    streamer = FeatureStreamer(artifact.spans)
    reader = None
    written = 0
    index = -1
    for line in lines:
        if not line.strip():
            continue
        if reader is None:
            reader = StreamReader(line)
            continue
        index += 1
        try:
            sample = reader.parse(line)
        except ParseError as error:
            err.write("error,{},{}\n".format(index, error))
            continue
        row = streamer.push(sample)
        y_hat = float(artifact.predict(row[None, :])[0])
        out.write("{},{!r}\n".format(index, y_hat))
        written += 1
    out.flush()
    return written


def cmd_infer(experiment, args):
    source = args.get("input", "-")
    try:
        if source == "-":
            count = cmd_infer_stream(experiment.artifact, sys.stdin,
                                     sys.stdout)
        else:
            with open(source, 'r') as file:
                count = cmd_infer_stream(experiment.artifact, file,
                                         sys.stdout)
    except IOError as error:
        raise PmbenchError(
            "The input stream could not be read: {}.\n{}\n"
            .format(source, str(error))
        )
    logger.info("Streamed %d predictions", count)
    return {}


def cmd_report(experiment):
    """Collect the metrics of every trained model into the benchmark table
    and merge the plot-ready frames: test traces, residuals, learn curves
    and the PCA projection.
    """
    out_dir = experiment.out_dir
    rows = []
    for path in sorted(glob.glob(os.path.join(out_dir, "*", "metrics.json"))):
        rows.append(Utils.load_json(path))
    expected = experiment.configuration.get("report", {}).get("models", [])
    found = {row["model"] for row in rows}
    missing = [m for m in expected if m not in found]
    if missing:
        logger.warning("No results for: %s", ", ".join(missing))
    if not rows:
        raise PmbenchError(
            "No trained model results were found in {}.".format(out_dir)
        )

    table = benchmark_table(rows)
    if missing:
        table += "\nMissing runs: {}\n".format(", ".join(missing))
    columns = ["model", "mse", "mae", "r2", "linf", "n_parameters"]
    frame = pd.DataFrame(rows)[columns].sort_values("mse", ascending=False)
    outputs = {
        "benchmark.md": table,
        "benchmark.csv": frame,
        "summary.json": {"models": summary(rows), "missing": missing},
    }
    curves = sorted(glob.glob(os.path.join(out_dir, "*", "learncurve.csv")))
    if curves:
        outputs["learn_curves.csv"] = pd.concat(
            [pd.read_csv(c) for c in curves], ignore_index=True
        )
    for name, merged in [("trace.csv", "traces.csv"),
                         ("residuals.csv", "residuals.csv")]:
        frames = []
        for path in sorted(glob.glob(os.path.join(out_dir, "*", name))):
            frame = pd.read_csv(path)
            frame.insert(0, "model", os.path.basename(os.path.dirname(path)))
            frames.append(frame)
        if frames:
            outputs[merged] = pd.concat(frames, ignore_index=True)
    projection = os.path.join(out_dir, "pca", "pca.csv")
    if os.path.isfile(projection):
        outputs["pca.csv"] = pd.read_csv(projection)
    return outputs


def cmd_synth(experiment):
    return {"synthetic.csv": experiment.dataset}


COMMANDS = {
    COMMAND.TUNE: cmd_tune,
    COMMAND.TRAIN: cmd_train,
    COMMAND.EVAL: cmd_eval,
    COMMAND.LEARNCURVE: cmd_learncurve,
    COMMAND.PCA: cmd_pca,
    COMMAND.REPORT: cmd_report,
    COMMAND.SYNTH: cmd_synth,
}


def cli(cli_argv):
    # Parse cli args
    args = vars(Utils.parse_cli_args(cli_argv[1:]))
    Utils.configure_logging(args['verbose'])
    # Parse and validate the configuration file
    try:
        configuration = Utils.load_config_file(args['config_file'])
    except PmbenchError as err:
        Utils.exit(err, 6)
    # Configuration structure validation
    try:
        configuration = Utils.apply_overrides(configuration, args)
        Validator.validate_configuration(configuration, args['command'])
        experiment = Utils.new_experiment(configuration, args)
    except PmbenchError as err:
        Utils.exit(err, 1)

    # Load data --------------------------------------------------------------
    try:
        Utils.load_data(experiment, args)
    except PmbenchError as err:
        Utils.exit(err, 2)

    # Resolve model and features ---------------------------------------------
    try:
        Utils.prepare_experiment(experiment)
    except PmbenchError as err:
        Utils.exit(err, 3)

    # Run the command --------------------------------------------------------
    try:
        if args['command'] == COMMAND.INFER:
            outputs = cmd_infer(experiment, args)
        else:
            outputs = COMMANDS[args['command']](experiment)
    except PmbenchError as err:
        Utils.exit(err, 4)

    try:
        Utils.write_outputs(experiment.out_dir, outputs)
    except PmbenchError as err:
        Utils.exit(err, 5)


if __name__ == '__main__':
    cli(sys.argv)
