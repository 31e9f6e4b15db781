import json
import math

import numpy as np
import pytest
from scipy.stats import norm
from pmbench import hpo
from pmbench.errors import PmbenchError, SurrogateError
from pmbench.hpo import (
    ACQUISITION,
    KIND,
    Dimension,
    HpoSpace,
    Trial,
    TrialLog,
    acquisition,
    gp_condition,
    gp_fit,
    gp_posterior,
    matern52,
    optimize,
    random_search,
    space_for,
    split_point,
    suggest,
)

BRANIN_MINIMUM = 0.397887


def branin(point):
    x1, x2 = point["x1"], point["x2"]
    b = 5.1 / (4 * math.pi ** 2)
    c = 5.0 / math.pi
    t = 1.0 / (8 * math.pi)
    return (x2 - b * x1 ** 2 + c * x1 - 6) ** 2 + \
        10 * (1 - t) * math.cos(x1) + 10


@pytest.fixture
def branin_space():
    return HpoSpace([
        Dimension("x1", KIND.REAL, -5.0, 10.0),
        Dimension("x2", KIND.REAL, 0.0, 15.0),
    ])


@pytest.fixture
def sine_gp():
    X = np.linspace(0, 1, 8)[:, None]
    y = np.sin(6 * X[:, 0])
    return X, y


def test_log_dimension_midpoint():
    dim = Dimension("C", KIND.LOG_REAL, 1.0, 100.0)
    assert dim.encode(10.0)[0] == pytest.approx(0.5)
    assert dim.decode([0.5]) == pytest.approx(10.0)


@pytest.mark.parametrize("dim,u,expected", [
    (Dimension("n", KIND.INTEGER, 1, 11), 0.54, 6),
    (Dimension("n", KIND.LOG_INTEGER, 4, 10800), 1.0, 10800),
    (Dimension("n", KIND.LOG_INTEGER, 4, 10800), 0.0, 4),
    (Dimension("x", KIND.REAL, 0, 1), 1.7, 1.0),  # Clipped
    (Dimension("n", KIND.INTEGER, 1.5, 4.5), 0.0, 2),
    (Dimension("n", KIND.INTEGER, 1.5, 4.5), 1.0, 4),
    (Dimension("n", KIND.LOG_INTEGER, 3.5, 9.5), 1.0, 9),
])
def test_dimension_decode(dim, u, expected):
    assert dim.decode([u]) == expected


def test_categorical_dimension():
    dim = Dimension("opt", KIND.CATEGORICAL, choices=["adam", "sgd", "radam"])
    np.testing.assert_array_equal(dim.encode("sgd"), [0.0, 1.0, 0.0])
    assert dim.decode([0.1, 0.2, 0.7]) == "radam"
    assert dim.from_unit(0.99) == "radam"
    assert dim.width == 3


@pytest.mark.parametrize("args", [
    {"name": "x", "kind": "normal", "low": 0, "high": 1},
    {"name": "x", "kind": KIND.REAL, "low": 2, "high": 1},
    {"name": "x", "kind": KIND.REAL, "low": None, "high": 1},
    {"name": "x", "kind": KIND.LOG_REAL, "low": 0, "high": 1},
    {"name": "x", "kind": KIND.CATEGORICAL, "choices": []},
    {"name": "n", "kind": KIND.INTEGER, "low": 1.2, "high": 1.8},
])
def test_dimension_ko(args):
    with pytest.raises(PmbenchError):
        Dimension(**args)


def test_encode_out_of_bounds():
    with pytest.raises(PmbenchError):
        Dimension("x", KIND.REAL, 0, 1).encode(1.5)
    with pytest.raises(PmbenchError):
        Dimension("x", KIND.CATEGORICAL, choices=["a"]).encode("b")


def test_space_encode_decode(branin_space):
    point = {"x1": 2.5, "x2": 7.5}
    np.testing.assert_allclose(branin_space.encode(point), [0.5, 0.5])
    assert branin_space.decode(np.array([0.5, 0.5])) == point
    with pytest.raises(PmbenchError):
        branin_space.encode({"x1": 0.0})


def test_space_duplicate_names():
    with pytest.raises(PmbenchError):
        HpoSpace([Dimension("x", KIND.REAL, 0, 1)] * 2)


@pytest.mark.parametrize("values,expected", [
    ([10, 10, 10, 10], [10, 11, 12, 13]),
    ([500, 20, 100, 7], [7, 20, 100, 500]),
    ([10800] * 4, [10797, 10798, 10799, 10800]),
])
def test_space_repair_keeps_spans_increasing(values, expected):
    space = space_for("ols")
    names = ["span_1", "span_2", "span_3", "span_4"]
    repaired = space.repair(dict(zip(names, values)))
    assert [repaired[n] for n in names] == expected
    assert space.contains(repaired)


NARROW_SPANS = {
    "span_1": {"low": 4, "high": 6},
    "span_2": {"low": 5, "high": 8},
    "span_3": {"low": 7, "high": 9},
    "span_4": {"low": 8, "high": 10},
}


@pytest.mark.parametrize("values,expected", [
    ([6, 5, 7, 8], [5, 6, 7, 8]),
    ([6, 8, 9, 10], [6, 8, 9, 10]),
    ([4, 4, 4, 4], [4, 5, 7, 8]),
    ([10, 10, 10, 10], [6, 8, 9, 10]),
])
def test_space_repair_respects_narrow_bounds(values, expected):
    space = space_for("ols", overrides=NARROW_SPANS)
    names = ["span_1", "span_2", "span_3", "span_4"]
    repaired = space.repair(dict(zip(names, values)))
    assert [repaired[n] for n in names] == expected
    assert space.contains(repaired)


def test_space_decode_with_narrow_bounds(rng):
    space = space_for("ols", overrides=NARROW_SPANS)
    for _ in range(200):
        point = space.decode(rng.uniform(-0.2, 1.2, size=space.width))
        assert space.contains(point)
        assert space.contains(space.sample(rng))


def test_space_infeasible_span_bounds():
    overrides = {n: {"low": 4, "high": 6}
                 for n in ["span_1", "span_2", "span_3", "span_4"]}
    with pytest.raises(PmbenchError):
        space_for("ols", overrides=overrides)


def test_optimize_with_narrow_span_bounds():
    space = space_for("ols", overrides=NARROW_SPANS)
    result = optimize(lambda p: float(sum(split_point(p)[0])), space,
                      n_init=4, n_iter=4, seed=0, n_candidates=50)
    assert len(result.history) == 8
    assert all(space.contains(t.point) for t in result.history)
    assert result.best.value >= 4 + 5 + 7 + 8


def test_space_samples_are_valid(rng):
    space = space_for("mlp")
    for _ in range(50):
        assert space.contains(space.sample(rng))


def test_initial_points_are_seeded():
    space = space_for("knn")
    a = space.initial_points(10, seed=3)
    assert a == space.initial_points(10, seed=3)
    assert a != space.initial_points(10, seed=4)
    assert all(space.contains(p) for p in a)
    assert space.initial_points(0, seed=3) == []


def test_space_for():
    assert len(space_for("ols")) == 4
    assert len(space_for("svr", include_spans=False)) == 2
    space = space_for("svr", overrides={"C": {"high": 1.0}})
    assert space.dimension("C").high == 1.0
    assert space.dimension("C").kind == KIND.LOG_REAL


@pytest.mark.parametrize("model_type,overrides", [
    ("gbm", None),
    ("svr", {"gamma": {"low": 0.1}}),
    ("svr", {"C": {"low": 0.0}}),
])
def test_space_for_ko(model_type, overrides):
    with pytest.raises(PmbenchError):
        space_for(model_type, overrides=overrides)


def test_split_point():
    spans, params = split_point({"span_1": 4, "span_2": 9, "C": 1.0})
    assert spans == [4, 9]
    assert params == {"C": 1.0}
    assert split_point({"C": 1.0}) == (None, {"C": 1.0})


def test_trial_log(tmp_path):
    log = TrialLog(str(tmp_path / "trials.jsonl"))
    assert log.load() == []
    first = Trial(index=0, point={"x": 1.0}, value=3.0)
    second = Trial(index=1, point={"x": 2.0}, status="failed", error="boom",
                   imputed=4.5)
    log.append(first)
    log.append(second)
    assert log.load() == [first, second]
    with open(log.path) as file:
        assert json.loads(file.readline())["value"] == 3.0


def test_trial_log_truncated_last_line(tmp_path):
    log = TrialLog(str(tmp_path / "trials.jsonl"))
    log.append(Trial(index=0, point={"x": 1.0}, value=3.0))
    with open(log.path, "a") as file:
        file.write('{"index": 1, "point": {"x"')
    assert len(log.load()) == 1


def test_trial_log_corrupt_middle_line(tmp_path):
    path = tmp_path / "trials.jsonl"
    path.write_text('{"index": 0\n' + json.dumps(
        Trial(index=1, point={}, value=1.0).to_dict()) + "\n")
    with pytest.raises(PmbenchError):
        TrialLog(str(path)).load()


def test_matern52_diagonal(rng):
    X = rng.uniform(size=(5, 2))
    K = matern52(X, X, np.array([0.3, 0.5]), 2.0)
    np.testing.assert_allclose(np.diag(K), 2.0)
    np.testing.assert_allclose(K, K.T)
    assert np.all(np.linalg.eigvalsh(K) > -1e-10)


def test_gp_interpolates_training_points(sine_gp):
    X, y = sine_gp
    gp = gp_condition(X, y, 1.0, 0.2, 1e-8)
    mu, sigma = gp_posterior(gp, X)
    np.testing.assert_allclose(mu, y, atol=1e-4)
    assert np.all(sigma < 1e-2)


def test_gp_reverts_to_prior_far_from_data(sine_gp):
    X, y = sine_gp
    gp = gp_condition(X, y, 1.5, 0.1, 1e-6)
    mu, sigma = gp_posterior(gp, np.array([50.0]))
    assert mu == pytest.approx(np.mean(y), abs=1e-8)
    assert sigma == pytest.approx(np.std(y) * math.sqrt(1.5), rel=1e-6)


def test_gp_matches_dense_solve(sine_gp):
    X, y = sine_gp
    gp = gp_condition(X, y, 0.8, 0.3, 1e-3)
    x = np.linspace(-0.2, 1.2, 15)[:, None]
    y_norm = (y - y.mean()) / y.std()
    K = matern52(X, X, 0.3, 0.8) + 1e-3 * np.eye(len(y))
    k_star = matern52(X, x, 0.3, 0.8)
    mean = y.mean() + y.std() * k_star.T @ np.linalg.solve(K, y_norm)
    variance = 0.8 - np.sum(k_star * np.linalg.solve(K, k_star), axis=0)
    mu, sigma = gp_posterior(gp, x)
    np.testing.assert_allclose(mu, mean, atol=1e-6)
    np.testing.assert_allclose(sigma, y.std() * np.sqrt(variance), atol=1e-6)


def test_gp_posterior_single_point(sine_gp):
    X, y = sine_gp
    gp = gp_condition(X, y, 1.0, 0.2, 1e-6)
    mu, sigma = gp_posterior(gp, np.array([0.5]))
    assert isinstance(mu, float) and isinstance(sigma, float)
    with pytest.raises(PmbenchError):
        gp_posterior(gp, np.zeros(2))


def test_gp_needs_two_points():
    with pytest.raises(SurrogateError):
        gp_condition(np.zeros((1, 1)), np.zeros(1), 1.0, 1.0, 1e-6)
    with pytest.raises(SurrogateError):
        gp_fit(np.zeros((1, 1)), np.zeros(1))


def test_gp_fit_duplicate_points():
    X = np.zeros((4, 2))
    gp = gp_fit(X, np.array([1.0, 1.1, 0.9, 1.0]))
    mu, sigma = gp_posterior(gp, np.zeros(2))
    assert mu == pytest.approx(1.0, abs=0.05)
    assert math.isfinite(sigma)


def test_gp_fit_beats_default_likelihood(sine_gp):
    X, y = sine_gp
    fitted = gp_fit(X, y, np.random.default_rng(0))
    default = gp_condition(X, y, 1.0, 0.3, 1e-4)
    assert fitted.log_marginal_likelihood >= \
        default.log_marginal_likelihood - 1e-6


def test_expected_improvement_at_incumbent():
    assert acquisition(1.0, 1.0, 1.0, ACQUISITION.EI) == \
        pytest.approx(norm.pdf(0.0))
    assert acquisition(1.0, 1.0, 1.0, ACQUISITION.EI) == \
        pytest.approx(0.3989, abs=1e-4)


@pytest.mark.parametrize("mu,kind,expected", [
    (2.0, ACQUISITION.EI, 0.0),
    (2.0, ACQUISITION.PI, 0.0),
    (0.5, ACQUISITION.EI, 0.5),
    (0.5, ACQUISITION.PI, 1.0),
    (2.0, ACQUISITION.UCB, -2.0),
])
def test_acquisition_zero_sigma(mu, kind, expected):
    assert acquisition(mu, 0.0, 1.0, kind) == expected


def test_acquisition_vectorized():
    mu = np.array([0.0, 1.0, 2.0])
    sigma = np.array([1.0, 1.0, 1.0])
    ei = acquisition(mu, sigma, 1.0, ACQUISITION.EI)
    pi = acquisition(mu, sigma, 1.0, ACQUISITION.PI)
    ucb = acquisition(mu, sigma, 1.0, ACQUISITION.UCB, kappa=2.0)
    assert np.all(np.diff(ei) < 0)
    np.testing.assert_allclose(pi, norm.cdf([1.0, 0.0, -1.0]))
    np.testing.assert_allclose(ucb, [2.0, 1.0, 0.0])


def test_acquisition_ko():
    with pytest.raises(PmbenchError):
        acquisition(0.0, 1.0, 0.0, "thompson")


def test_suggest_without_surrogate(branin_space, rng):
    assert branin_space.contains(suggest(None, branin_space, rng))


def test_suggest_is_seeded_and_in_bounds(branin_space):
    points = branin_space.initial_points(8, seed=0)
    X = np.array([branin_space.encode(p) for p in points])
    gp = gp_fit(X, np.log1p([branin(p) for p in points]))
    a = suggest(gp, branin_space, np.random.default_rng(5), points[0],
                n_candidates=100)
    b = suggest(gp, branin_space, np.random.default_rng(5), points[0],
                n_candidates=100)
    assert a == b
    assert branin_space.contains(a)


def test_suggest_scores_failed_points_at_imputed_value():
    space = HpoSpace([Dimension("k", KIND.INTEGER, 1, 5)])
    points = [{"k": k} for k in (1, 2, 4, 5)]
    X = np.array([space.encode(p) for p in points])
    gp = gp_fit(X, np.log1p([(p["k"] - 3) ** 2 + 1 for p in points]))
    failed = [(space.encode({"k": 3}), float(np.log1p(7.5)))]
    for seed in range(5):
        point = suggest(gp, space, np.random.default_rng(seed),
                        n_candidates=20, failed=failed)
        assert point != {"k": 3}


def test_optimize_passes_failed_trials_to_suggest(branin_space, mocker):
    spy = mocker.spy(hpo, "suggest")

    def objective(point):
        if point["x1"] > 2.5:
            raise PmbenchError("did not converge")
        return branin(point)

    result = optimize(objective, branin_space, n_init=8, n_iter=1, seed=1,
                      n_candidates=50)
    failed = [t for t in result.history[:8]
              if not t.ok and t.imputed is not None]
    assert failed
    passed = spy.call_args.kwargs["failed"]
    assert len(passed) == len(failed)
    for (point, target), trial in zip(passed, failed):
        np.testing.assert_allclose(point, branin_space.encode(trial.point))
        assert target == pytest.approx(np.log1p(trial.imputed))


def test_optimize_constant_objective(branin_space):
    result = optimize(lambda point: 2.0, branin_space, n_init=3, n_iter=2,
                      n_candidates=50)
    assert result.best.index == 0
    assert result.best.value == 2.0
    assert len(result.history) == 5


def test_optimize_on_branin(branin_space):
    finals, randoms = [], []
    for seed in range(5):
        result = optimize(branin, branin_space, n_init=10, n_iter=50,
                          seed=seed, n_candidates=200)
        trace = result.incumbent_trace
        assert len(trace) == 60
        assert all(b <= a for a, b in zip(trace, trace[1:]))
        finals.append(result.best.value)
        randoms.append(
            random_search(branin, branin_space, 60, seed=seed).best.value
        )
    assert np.median(finals) - BRANIN_MINIMUM < 0.5
    assert np.median(finals) <= np.median(randoms)


def test_optimize_replays_identically(branin_space):
    def run():
        result = optimize(branin, branin_space, n_init=4, n_iter=3, seed=2,
                          n_candidates=50)
        return [t.point for t in result.history]
    assert run() == run()


def test_optimize_failed_trials(branin_space):
    def objective(point):
        if point["x1"] > 2.5:
            raise PmbenchError("did not converge")
        return branin(point)

    result = optimize(objective, branin_space, n_init=8, n_iter=4, seed=1,
                      n_candidates=50)
    failed = [t for t in result.history if not t.ok]
    assert failed
    for trial in failed:
        assert trial.value is None
        assert trial.error == "did not converge"
        earlier = [t.value for t in result.history[:trial.index] if t.ok]
        expected = 1.5 * max(earlier) if earlier else None
        assert trial.imputed == expected
    assert result.best.ok
    assert result.best.point["x1"] <= 2.5


def test_optimize_non_finite_objective(branin_space):
    result = optimize(lambda point: float("nan"), branin_space, n_init=2,
                      n_iter=0)
    assert all(t.status == "failed" for t in result.history)
    assert result.best is None
    assert result.incumbent_trace == [np.inf, np.inf]


def test_optimize_resumes_from_log(branin_space, tmp_path, mocker):
    log = TrialLog(str(tmp_path / "trials.jsonl"))
    optimize(branin, branin_space, n_init=3, n_iter=0, seed=4, log=log)
    objective = mocker.Mock(side_effect=branin)
    result = optimize(objective, branin_space, n_init=5, n_iter=0, seed=4,
                      log=log)
    assert objective.call_count == 2
    fresh = optimize(branin, branin_space, n_init=5, n_iter=0, seed=4)
    assert [t.point for t in result.history] == \
        [t.point for t in fresh.history]
    assert len(log.load()) == 5

    # A completed history evaluates nothing new
    objective.reset_mock()
    optimize(objective, branin_space, n_init=5, n_iter=0, seed=4, log=log)
    objective.assert_not_called()


def test_optimize_ko(branin_space):
    with pytest.raises(PmbenchError):
        optimize(branin, branin_space, n_init=-1)


def test_random_search_is_seeded(branin_space):
    a = random_search(branin, branin_space, 10, seed=3)
    b = random_search(branin, branin_space, 10, seed=3)
    assert [t.point for t in a.history] == [t.point for t in b.history]
    assert a.best.value == min(t.value for t in a.history)
