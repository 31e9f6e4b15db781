import math

import numpy as np
import pandas as pd
import pytest
from pmbench import eval as evaluation
from pmbench.data import (
    Dataset,
    SyntheticConfig,
    generate_synthetic,
    split_profiles,
)
from pmbench.errors import PmbenchError
from pmbench.eval import (
    FoldPlan,
    benchmark_table,
    compute_metrics,
    cross_validate,
    fit_pipeline,
    learn_curve,
    make_fold_plan,
    metrics_row,
    pca_project,
    predict_pipeline,
    residual_frame,
    sample_profiles,
    summary,
    trace_frame,
)
from pmbench.features import build_features, spans_from_time_constants
from pmbench.models import ModelSpec


def _profiles_dataset(maxima, sizes=None, constant=None):
    """One profile per maximum; pm ramps up to it unless constant"""
    frames = []
    sizes = sizes or [20] * len(maxima)
    for index, (top, size) in enumerate(zip(maxima, sizes)):
        pm = np.full(size, constant) if constant is not None \
            else np.linspace(20.0, top, size)
        frames.append(pd.DataFrame({
            "ambient": 20.0, "coolant": np.linspace(18, 30, size),
            "u_d": np.linspace(-5, 5, size), "u_q": 10.0,
            "motor_speed": np.linspace(0, 3000, size), "i_d": -2.0,
            "i_q": np.linspace(0, 50, size), "pm": pm,
            "profile_id": "p{:02d}".format(index),
        }))
    return Dataset(pd.concat(frames, ignore_index=True))


def test_compute_metrics():
    m = compute_metrics([1.0, 2.0, 3.0], [1.0, 2.0, 5.0])
    assert m.mse == pytest.approx(4.0 / 3)
    assert m.mae == pytest.approx(2.0 / 3)
    assert m.linf == pytest.approx(2.0)
    assert m.r2 == pytest.approx(1 - 4.0 / 2.0)
    assert m.r2_defined


def test_compute_metrics_perfect():
    m = compute_metrics([1.0, 2.0], [1.0, 2.0])
    assert (m.mse, m.mae, m.r2, m.linf) == (0.0, 0.0, 1.0, 0.0)


def test_compute_metrics_constant_target():
    m = compute_metrics([3.0, 3.0], [3.0, 4.0])
    assert not m.r2_defined
    assert math.isnan(m.r2)


@pytest.mark.parametrize("y,y_hat", [
    ([1.0, 2.0], [1.0]),
    ([], []),
])
def test_compute_metrics_ko(y, y_hat):
    with pytest.raises(PmbenchError):
        compute_metrics(y, y_hat)


def test_fold_plan_partitions_profiles():
    ds = _profiles_dataset(np.linspace(50, 120, 12))
    plan = make_fold_plan(ds, k=3, seed=1)
    plan.validate(ds.profile_ids)
    assert plan.k == 3
    assert sorted(sum(plan.folds, [])) == sorted(ds.profile_ids)
    # 4 levels of 3 profiles, one of each level per fold
    np.testing.assert_array_equal(plan.level_histogram(), np.ones((3, 4)))


def test_fold_plan_balances_levels():
    ds = _profiles_dataset(np.linspace(50, 120, 14))
    plan = make_fold_plan(ds, k=3, seed=0)
    histogram = plan.level_histogram()
    assert np.all(histogram.max(axis=0) - histogram.min(axis=0) <= 1)


def test_fold_plan_is_seeded():
    ds = _profiles_dataset([60.0] * 9)
    assert make_fold_plan(ds, 3, seed=5).to_dict() == \
        make_fold_plan(ds, 3, seed=5).to_dict()


@pytest.mark.parametrize("k", [1, 7])
def test_fold_plan_ko(k):
    with pytest.raises(PmbenchError):
        make_fold_plan(_profiles_dataset([60.0] * 6), k=k)


@pytest.mark.parametrize("folds", [
    [["p00", "p01"], ["p01", "p02"]],  # Leaked profile
    [["p00"], ["p01"]],  # Missing profile
    [["p00", "p01"], ["p02", "p99"]],  # Unknown profile
])
def test_fold_plan_validate_ko(folds):
    with pytest.raises(PmbenchError):
        FoldPlan(folds=folds).validate(["p00", "p01", "p02"])


def test_fit_pipeline_scales_on_training_rows_only(synth_ds, spans, mocker):
    features = build_features(synth_ds, spans)
    train = features.select_profiles(["synth-01", "synth-02"])
    spy = mocker.spy(evaluation, "fit_scaler")
    model, scaler = fit_pipeline(ModelSpec("ols"), train)
    assert spy.call_count == 1
    assert len(spy.call_args[0][0]) == len(train)
    assert len(predict_pipeline(model, scaler, features)) == len(features)


def test_cross_validate_constant_target():
    ds = _profiles_dataset([0] * 6, constant=55.0)
    plan = make_fold_plan(ds, k=3)
    result = cross_validate(ModelSpec("ols"), ds, [2, 4], plan)
    assert result.mean_mse == pytest.approx(0.0, abs=1e-12)
    assert len(result.to_frame("ols")) == 3


def test_cross_validate_rejects_leaks():
    ds = _profiles_dataset([60.0] * 4)
    plan = FoldPlan(folds=[["p00", "p01"], ["p01", "p02", "p03"]])
    with pytest.raises(PmbenchError):
        cross_validate(ModelSpec("ols"), ds, [2], plan)


def test_cross_validate_close_to_split_mse(synth_cfg):
    synth_cfg.n_profiles = 6
    synth_cfg.duration_s = 1800.0
    ds = generate_synthetic(synth_cfg, seed=2)
    spec = ModelSpec("ols")
    spans = [8, 32, 128]
    cv = cross_validate(spec, ds, spans, make_fold_plan(ds, k=3, seed=0))
    train, test = split_profiles(ds, ds.profile_ids[-2:])
    model, scaler = fit_pipeline(spec, build_features(train, spans))
    test_features = build_features(test, spans)
    split_mse = compute_metrics(
        test_features.y, predict_pipeline(model, scaler, test_features)
    ).mse
    assert 0 < cv.mean_mse <= 2 * split_mse


def test_cross_validate_parallel_matches(synth_ds, spans):
    plan = make_fold_plan(synth_ds, k=3)
    spec = ModelSpec("knn", {"n_neighbors": 3})
    serial = cross_validate(spec, synth_ds, spans, plan)
    parallel = cross_validate(spec, synth_ds, spans, plan, n_jobs=2)
    assert serial.mean_mse == parallel.mean_mse


def test_sample_profiles():
    sizes = {"a": 10, "b": 20, "c": 30, "d": 40}
    rng = np.random.default_rng(0)
    chosen = sample_profiles(sizes, 0.5, rng)
    assert sum(sizes[c] for c in chosen) <= 50
    assert len(set(chosen)) == len(chosen)
    assert sorted(sample_profiles(sizes, 1.0, rng)) == ["a", "b", "c", "d"]


def test_learn_curve(synth_cfg, spans):
    synth_cfg.n_profiles = 5
    synth_cfg.duration_s = 1000.0
    ds = generate_synthetic(synth_cfg, seed=1)
    train, test = split_profiles(ds, ["synth-05"])
    curve = learn_curve(ModelSpec("ols"), train, test, spans,
                        [0.3, 0.5, 1.0], repeats=3, seed=0)
    assert list(curve.columns) == ["fraction", "mean_mse", "std_mse", "runs"]
    full = curve[curve["fraction"] == 1.0].iloc[0]
    # Every repeat of the full fraction sees the same data
    assert full["std_mse"] == pytest.approx(0.0, abs=1e-12)
    assert full["runs"] == 3
    again = learn_curve(ModelSpec("ols"), train, test, spans,
                        [0.3, 0.5, 1.0], repeats=3, seed=0)
    pd.testing.assert_frame_equal(curve, again)


def test_learn_curve_ko(synth_ds, spans):
    train, test = split_profiles(synth_ds, ["synth-03"])
    with pytest.raises(PmbenchError):
        learn_curve(ModelSpec("ols"), train, test, spans, [0.0])
    with pytest.raises(PmbenchError):
        learn_curve(ModelSpec("ols"), train, test.select_profiles([]), spans,
                    [0.5])


def test_pca_axis_aligned(rng):
    X = np.column_stack([rng.normal(scale=5.0, size=500),
                         rng.normal(scale=1.0, size=500)])
    X -= X.mean(axis=0)
    result = pca_project(X, components=2)
    np.testing.assert_allclose(np.abs(result.components), np.eye(2),
                               atol=0.05)
    assert np.all(result.components.max(axis=1) > 0)
    assert result.explained_variance_ratio.sum() <= 1 + 1e-12


def test_pca_matches_svd_reconstruction(rng):
    X = rng.normal(size=(100, 5)) @ rng.normal(size=(5, 5))
    result = pca_project(X, components=2)
    reconstruction = result.projection @ result.components + result.mean
    centered = X - X.mean(axis=0)
    U, s, Vt = np.linalg.svd(centered, full_matrices=False)
    oracle = (U[:, :2] * s[:2]) @ Vt[:2] + X.mean(axis=0)
    np.testing.assert_allclose(
        np.sum((X - reconstruction) ** 2), np.sum((X - oracle) ** 2),
        rtol=1e-8,
    )
    np.testing.assert_allclose(
        result.explained_variance_ratio, s[:2] ** 2 / np.sum(s ** 2),
        rtol=1e-8,
    )


@pytest.mark.parametrize("shape,components", [((10, 1), 2), ((2, 3), 2)])
def test_pca_ko(shape, components):
    with pytest.raises(PmbenchError):
        pca_project(np.zeros(shape), components)


def test_trace_and_residual_frames():
    trace = trace_frame([50.0, 60.0], [49.0, 62.0], ["a", "b"])
    assert list(trace.columns) == ["profile_id", "pm", "pm_hat", "residual"]
    assert trace["residual"].tolist() == [1.0, -2.0]
    residual = residual_frame([50.0, 60.0], [49.0, 62.0])
    assert residual["residual"].tolist() == [1.0, -2.0]


def test_benchmark_table_sorted_worst_first():
    rows = [
        metrics_row("ols", compute_metrics([1, 2, 3], [1, 2, 4]), 109),
        metrics_row("mlp", compute_metrics([1, 2, 3], [1, 2, 3.1]), 1761),
        metrics_row("knn", compute_metrics([1, 2, 3], [3, 2, 1]), 2_000_000),
    ]
    lines = benchmark_table(rows).splitlines()
    assert lines[0].startswith("| Model | MSE")
    assert [line.split("|")[1].strip() for line in lines[2:]] == \
        ["knn", "ols", "mlp"]
    assert "1.8k" in lines[4]
    assert "2.0M" in lines[2]
    assert list(summary(rows)) == ["knn", "ols", "mlp"]
    assert summary(rows)["mlp"]["model_size"] == 1761


def test_benchmark_table_undefined_r2():
    rows = [metrics_row("ols", compute_metrics([2, 2], [2, 3]), 1)]
    assert "n/a" in benchmark_table(rows)


def test_ols_on_synthetic_matched_spans():
    config = SyntheticConfig()
    ds = generate_synthetic(config, seed=0)
    spans = spans_from_time_constants(
        list(config.rc_time_constants) + [30.0, 1200.0],
        1.0 / config.sample_rate_hz,
    )
    train, test = split_profiles(ds, ds.profile_ids[-1:])
    model, scaler = fit_pipeline(ModelSpec("ols"), build_features(train, spans))
    test_features = build_features(test, spans)
    metrics = compute_metrics(
        test_features.y, predict_pipeline(model, scaler, test_features)
    )
    assert metrics.r2 >= 0.95


def test_learn_curve_plateaus(synth_cfg, spans):
    synth_cfg.n_profiles = 12
    synth_cfg.duration_s = 12 * 300.0
    ds = generate_synthetic(synth_cfg, seed=3)
    train, test = split_profiles(ds, ds.profile_ids[-1:])
    curve = learn_curve(ModelSpec("ols"), train, test, spans,
                        [0.25, 0.5, 1.0], repeats=10, seed=0)
    rows = curve.to_dict("records")
    for small, large in zip(rows, rows[1:]):
        pooled = math.sqrt((small["std_mse"] ** 2 + large["std_mse"] ** 2) / 2)
        assert large["mean_mse"] <= small["mean_mse"] + pooled
