"""Scoring, cross-validation and data inspection."""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from pmbench.data import COLUMNS
from pmbench.errors import ArgumentError, PmbenchError
from pmbench.features import apply_scaler, build_features, fit_scaler

logger = logging.getLogger(__name__)

# Number of max-temperature strata used to balance the folds
MAX_LEVELS = 4


@dataclass
class Metrics:
    mse: float
    mae: float
    r2: float
    linf: float
    # False when the target is constant and r2 is undefined
    r2_defined: bool = True

    def to_dict(self):
        return {
            "mse": self.mse,
            "mae": self.mae,
            "r2": self.r2,
            "linf": self.linf,
            "r2_defined": self.r2_defined,
        }


def compute_metrics(y, y_hat) -> Metrics:
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.shape != y_hat.shape:
        raise ArgumentError(
            "Got {} targets but {} predictions."
            .format(len(y), len(y_hat))
        )
    if len(y) == 0:
        raise ArgumentError("Cannot score an empty prediction.")
    residual = y - y_hat
    ss_res = float(np.sum(residual ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    defined = ss_tot > 0
    return Metrics(
        mse=float(np.mean(residual ** 2)),
        mae=float(np.mean(np.abs(residual))),
        r2=1.0 - ss_res / ss_tot if defined else float("nan"),
        linf=float(np.max(np.abs(residual))),
        r2_defined=defined,
    )


@dataclass
class FoldPlan:
    folds: List[List[str]]
    # Stratum of every profile, 0 for the coolest
    levels: Dict[str, int] = field(default_factory=dict)

    @property
    def k(self):
        return len(self.folds)

    def validate(self, profile_ids):
        """Check that the folds partition the given profiles.

        Raises:
            ArgumentError: A profile is missing, unknown or in two folds
        """
        seen = {}
        for index, fold in enumerate(self.folds):
            for pid in fold:
                if pid in seen:
                    raise ArgumentError(
                        "The profile '{}' appears in folds {} and {}."
                        .format(pid, seen[pid], index)
                    )
                seen[pid] = index
        expected = set(profile_ids)
        missing = expected - set(seen)
        unknown = set(seen) - expected
        if missing or unknown:
            raise ArgumentError(
                "The fold plan does not match the dataset (missing: {}, "
                "unknown: {}).".format(sorted(missing), sorted(unknown))
            )

    def level_histogram(self):
        n_levels = max(self.levels.values()) + 1 if self.levels else 0
        histogram = np.zeros((self.k, n_levels), dtype=int)
        for index, fold in enumerate(self.folds):
            for pid in fold:
                histogram[index, self.levels[pid]] += 1
        return histogram

    def to_dict(self):
        return {"folds": [list(f) for f in self.folds],
                "levels": dict(self.levels)}


def make_fold_plan(dataset, k=3, seed=0) -> FoldPlan:
    """Stratified group folds.

    Profiles are ranked by their maximum magnet temperature and cut into
    equally populated levels. Within each level the profiles are dealt,
    largest first, to the fold holding the fewest profiles of that level,
    ties going to the fold with the fewest samples.
    """
    if k < 2:
        raise ArgumentError("At least 2 folds are needed, got {}.".format(k))
    frame = dataset.frame
    per_profile = frame.groupby(COLUMNS.PROFILE, sort=False)[COLUMNS.TARGET] \
        .agg(["max", "size"])
    if len(per_profile) < k:
        raise ArgumentError(
            "Cannot make {} folds out of {} profiles."
            .format(k, len(per_profile))
        )

    rng = np.random.default_rng(seed)
    ids = list(per_profile.index)
    n_levels = min(MAX_LEVELS, max(1, len(ids) // k))
    # Random tie order first, then a stable sort by temperature
    shuffled = rng.permutation(len(ids))
    maxima = per_profile["max"].to_numpy()[shuffled]
    ranked = shuffled[np.argsort(maxima, kind="stable")]
    levels = {}
    for rank, index in enumerate(ranked):
        levels[ids[index]] = int(rank * n_levels // len(ids))

    folds = [[] for _ in range(k)]
    level_counts = np.zeros((k, n_levels), dtype=int)
    sizes = np.zeros(k, dtype=int)
    for level in range(n_levels - 1, -1, -1):
        members = [i for i in shuffled if levels[ids[i]] == level]
        members.sort(key=lambda i: -int(per_profile["size"].iloc[i]))
        for i in members:
            target = min(
                range(k), key=lambda f: (level_counts[f, level], sizes[f], f)
            )
            folds[target].append(ids[i])
            level_counts[target, level] += 1
            sizes[target] += int(per_profile["size"].iloc[i])

    logger.debug("Fold sizes: %s", sizes.tolist())
    return FoldPlan(folds=folds, levels=levels)


def fit_pipeline(spec, features, seed=None):
    """Fit the scaler and the model on the given feature rows only.

    Returns:
        tuple: The fitted model and scaler
    """
    scaler = fit_scaler(features)
    scaled = apply_scaler(scaler, features)
    model = spec.build(seed)
    model.fit(scaled.X, scaled.y, scaled.groups)
    return model, scaler


def predict_pipeline(model, scaler, features):
    return model.predict(apply_scaler(scaler, features.X))


def _run_fold(spec, features, held_out):
    test_mask = np.isin(features.groups, held_out)
    train, test = features.select(~test_mask), features.select(test_mask)
    model, scaler = fit_pipeline(spec, train)
    return compute_metrics(test.y, predict_pipeline(model, scaler, test))


@dataclass
class CvResult:
    folds: List[Metrics]

    @property
    def mean_mse(self):
        return float(np.mean([m.mse for m in self.folds]))

    def to_frame(self, model_name=""):
        return pd.DataFrame([
            dict(model=model_name, fold=i, **m.to_dict())
            for i, m in enumerate(self.folds)
        ])


def cross_validate(spec, dataset, spans, plan, n_jobs=1) -> CvResult:
    """Score a model specification on every fold of the plan. The scaler is
    refitted on the training folds each time.
    """
    plan.validate(dataset.profile_ids)
    features = build_features(dataset, spans)
    try:
        folds = Parallel(n_jobs=n_jobs)(
            delayed(_run_fold)(spec, features, fold) for fold in plan.folds
        )
    except PmbenchError as err:
        raise PmbenchError(
            "The cross-validation of the '{}' model failed:\n{}"
            .format(spec.model_type, str(err))
        )
    result = CvResult(folds=list(folds))
    logger.info(
        "%s CV mean MSE %.4f over %d folds",
        spec.model_type, result.mean_mse, plan.k
    )
    return result


def sample_profiles(sizes, fraction, rng):
    """Whole profiles drawn without replacement, in random order, keeping
    every one that still fits into the fraction of the total rows.
    """
    ids = list(sizes)
    total = sum(sizes.values())
    budget = fraction * total * (1 + 1e-12)
    chosen, covered = [], 0
    for index in rng.permutation(len(ids)):
        pid = ids[index]
        if covered + sizes[pid] <= budget:
            chosen.append(pid)
            covered += sizes[pid]
    return chosen


def _learn_curve_run(spec, train_features, test_features, chosen):
    model, scaler = fit_pipeline(spec, train_features.select_profiles(chosen))
    return compute_metrics(
        test_features.y, predict_pipeline(model, scaler, test_features)
    ).mse


def learn_curve(spec, train, test, spans, fractions, repeats=10, seed=0,
                n_jobs=1):
    """Test MSE of models fitted on growing random subsets of the training
    profiles, against a constant test set.

    Returns:
        pd.DataFrame: One row per fraction (fraction, mean_mse, std_mse,
        runs)
    """
    if len(test) == 0:
        raise ArgumentError("A learn curve needs a non-empty test set.")
    for fraction in fractions:
        if not 0 < fraction <= 1:
            raise ArgumentError(
                "Fractions must lie in (0, 1], got {}.".format(fraction)
            )
    train_features = build_features(train, spans)
    test_features = build_features(test, spans)
    sizes = train.profile_sizes()

    rows = []
    for f_index, fraction in enumerate(fractions):
        subsets = []
        for repeat in range(repeats):
            rng = np.random.default_rng([seed, f_index, repeat])
            chosen = sample_profiles(sizes, fraction, rng)
            if chosen:
                subsets.append(chosen)
        if not subsets:
            logger.warning(
                "The fraction %g selects no whole profile, skipped.", fraction
            )
            continue
        scores = Parallel(n_jobs=n_jobs)(
            delayed(_learn_curve_run)(spec, train_features, test_features, c)
            for c in subsets
        )
        rows.append({
            "fraction": fraction,
            "mean_mse": float(np.mean(scores)),
            "std_mse": float(np.std(scores)),
            "runs": len(scores),
        })
        logger.info(
            "Fraction %g: mean MSE %.4f over %d runs",
            fraction, rows[-1]["mean_mse"], len(scores)
        )
    return pd.DataFrame(rows,
                        columns=["fraction", "mean_mse", "std_mse", "runs"])


@dataclass
class PcaResult:
    projection: np.ndarray
    components: np.ndarray
    explained_variance_ratio: np.ndarray
    mean: np.ndarray


def pca_project(X, components=2) -> PcaResult:
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if components > p:
        raise ArgumentError(
            "Cannot extract {} components from {} features."
            .format(components, p)
        )
    if n <= components:
        raise ArgumentError(
            "Need more than {} rows, got {}.".format(components, n)
        )
    mean = X.mean(axis=0)
    centered = X - mean
    covariance = centered.T @ centered / (n - 1)
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.maximum(eigenvalues[order], 0.0)
    eigenvectors = eigenvectors[:, order]

    loadings = eigenvectors[:, :components].T
    # Largest-magnitude loading of every component is positive
    pivots = loadings[np.arange(components),
                      np.argmax(np.abs(loadings), axis=1)]
    loadings = loadings * np.where(pivots < 0, -1.0, 1.0)[:, None]
    total = float(np.sum(eigenvalues))
    ratio = eigenvalues[:components] / total if total > 0 \
        else np.zeros(components)
    return PcaResult(
        projection=centered @ loadings.T,
        components=loadings,
        explained_variance_ratio=ratio,
        mean=mean,
    )


def metrics_row(model_name, metrics, n_parameters, **extra):
    row = {"model": model_name}
    row.update(metrics.to_dict())
    row["n_parameters"] = int(n_parameters)
    row.update(extra)
    return row


def trace_frame(y, y_hat, groups):
    """Ground truth, prediction and residual of every test row."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    return pd.DataFrame({
        COLUMNS.PROFILE: groups,
        COLUMNS.TARGET: y,
        "pm_hat": y_hat,
        "residual": y - y_hat,
    })


def residual_frame(y, y_hat):
    """Residual against the true magnet temperature."""
    y = np.asarray(y, dtype=float)
    return pd.DataFrame({
        COLUMNS.TARGET: y,
        "residual": y - np.asarray(y_hat, dtype=float),
    })


def _format_size(n):
    if n >= 1e6:
        return "{:.1f}M".format(n / 1e6)
    if n >= 1e3:
        return "{:.1f}k".format(n / 1e3)
    return str(int(n))


def benchmark_table(rows):
    """Markdown benchmark table, worst MSE first.

    Args:
        rows (list): metrics_row dictionaries
    """
    lines = [
        "| Model | MSE (°C²) | MAE (°C) | R² | ℓ∞ (°C) | Model size |",
        "|---|---|---|---|---|---|",
    ]
    for row in sorted(rows, key=lambda r: -r["mse"]):
        r2 = "{:.2f}".format(row["r2"]) if row.get("r2_defined", True) \
            and not math.isnan(row["r2"]) else "n/a"
        lines.append("| {} | {:.2f} | {:.2f} | {} | {:.2f} | {} |".format(
            row["model"], row["mse"], row["mae"], r2, row["linf"],
            _format_size(row["n_parameters"])
        ))
    return "\n".join(lines) + "\n"


def summary(rows):
    """The benchmark table as a JSON-ready dictionary keyed by model."""
    return {
        row["model"]: {
            "mse": row["mse"],
            "mae": row["mae"],
            "r2": row["r2"],
            "linf": row["linf"],
            "model_size": row["n_parameters"],
        }
        for row in sorted(rows, key=lambda r: -r["mse"])
    }
