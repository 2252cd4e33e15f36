import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import kmeans_brute_force, knn_fill_oracle
from survrules.brl import BayesianRuleList, BrlHyper
from survrules.data import CategoricalDataset, Feature, FeatureSchema
from survrules.preprocess import (BIN_COUNTS, DISCRETISERS, Discretiser, RawColumn, add_discretised_feature,
                                  apply_discretiser, fit_discretiser, impute_baseline, impute_knn,
                                  impute_regression, kmeans_1d, select_discretiser, select_imputer)

cat = lambda name, vals: RawColumn(name, "categorical", vals)  # noqa: E731
num = lambda name, vals: RawColumn(name, "continuous", vals)  # noqa: E731


@pytest.mark.parametrize("col,filled", [
    (cat("c", ["A", "A", "B", None]), "A"),
    (num("x", [2.0, 4.0, None]), 3.0),
    (cat("c", ["B", "A", None]), "A"),
])
def test_baseline_examples(col, filled):
    out = impute_baseline(col)
    assert out.values[-1] == filled
    assert not out.missing.any()


def test_baseline_all_missing():
    with pytest.raises(ValueError):
        impute_baseline(num("x", [None, None]))


def test_bounds_are_enforced():
    with pytest.raises(ValueError):
        RawColumn("size", "continuous", [5.0, 130.0], bounds=(0, 120))


def test_knn_duplicate_row_is_copied():
    target = num("t", [7.0, 1.0, None])
    preds = [cat("g", ["a", "b", "a"]), num("z", [0.3, 0.9, 0.3])]
    assert impute_knn(target, preds, k=1).values[2] == 7.0


def test_knn_six_rows_against_oracle():
    target = [1.0, None, 3.0, 4.0, None, 10.0]
    preds = [("categorical", ["a", "b", "a", "b", "a", "b"]), ("continuous", [0.0, 1.5, 3.0, 2.0, 9.0, 1.0])]
    cols = [RawColumn(f"p{i}", kind, vals) for i, (kind, vals) in enumerate(preds)]
    for normalize in (True, False):
        got = impute_knn(num("t", target), cols, k=3, normalize=normalize).values
        assert list(got) == pytest.approx(knn_fill_oracle(target, preds, 3, normalize))


def test_knn_scaling_flips_nearest_neighbour():
    # unscaled, the large-range column dominates; scaled, the small-range column does
    preds = [num("big", [0.0, 50.0, 20.0, 100.0]), num("small", [0.0, 1.0, 1.0, 0.0])]
    target = num("t", [1.0, 2.0, None, 5.0])
    raw = impute_knn(target, preds, k=1, normalize=False).values[2]
    scaled = impute_knn(target, preds, k=1, normalize=True).values[2]
    assert raw == 1.0 and scaled == 2.0
    oracle_preds = [("continuous", list(p.values)) for p in preds]
    assert knn_fill_oracle(list(target.values), oracle_preds, 1, False)[2] == raw
    assert knn_fill_oracle(list(target.values), oracle_preds, 1, True)[2] == scaled


def test_knn_categorical_majority_and_errors():
    target = cat("t", ["x", "y", "y", None])
    preds = [num("z", [0.0, 0.1, 0.2, 0.15])]
    assert impute_knn(target, preds, k=3).values[3] == "y"
    with pytest.raises(ValueError):
        impute_knn(cat("t", [None, None]), [num("z", [0.0, 1.0])], k=1)
    with pytest.raises(ValueError):
        impute_knn(target, preds, k=4)


def test_regression_exact_line():
    xs = [0.0, 1.0, 2.5, 4.0, 7.0]
    target = num("y", [2 * x + 1 if i != 3 else None for i, x in enumerate(xs)])
    out = impute_regression(target, [num("x", xs)])
    assert abs(out.values[3] - 9.0) < 1e-8


def test_regression_constant_target():
    target = num("y", [4.0, 4.0, None, 4.0, None])
    out = impute_regression(target, [num("x", [1.0, 2.0, 3.0, 4.0, 5.0])])
    assert out.values[2] == pytest.approx(4.0, abs=1e-8) and out.values[4] == pytest.approx(4.0, abs=1e-8)


def test_regression_three_rows_normal_equations():
    x = [1.0, 2.0, 4.0, 3.0]
    y = [1.0, 4.0, 5.0, None]
    # normal equations for y = a + b x over rows 0..2
    # [3, 7; 7, 21] [a, b] = [10, 29]  ->  det 14, a = (210 - 203)/14, b = (87 - 70)/14
    a, b = 7 / 14, 17 / 14
    out = impute_regression(num("y", y), [num("x", x)])
    assert out.values[3] == pytest.approx(a + 3 * b, abs=1e-6)


def test_regression_categorical_target():
    g = ["a", "a", "b", "b", "a", "b"]
    target = cat("t", ["lo", "lo", "hi", "hi", None, None])
    assert impute_regression(target, [cat("g", g)]).values[4:] == ("lo", "hi")


def test_select_imputer_prefers_regression_on_linear_target():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 10, 60)
    y = [3 * v - 2 if i % 7 else None for i, v in enumerate(x)]
    name, score, report = select_imputer(num("y", y), [num("x", x.tolist())])
    assert name == "regression" and score < 1e-10
    assert [r["candidate"] for r in report] == ["baseline", "knn", "regression"]
    assert sum(r["chosen"] for r in report) == 1


def test_select_imputer_noise_majority_baseline():
    wins = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=80).tolist()
        y = rng.normal(size=80).tolist()
        wins += select_imputer(num("y", y), [num("x", x)], seed=seed)[0] == "baseline"
    assert wins >= 6


def test_select_imputer_constant_target_ties_to_baseline():
    y = cat("t", ["k"] * 30)
    assert select_imputer(y, [num("x", list(map(float, range(30))))])[0] == "baseline"


def test_select_imputer_disqualifies_and_requires_rows():
    y = num("y", [1.0, 2.0] * 5 + [None])
    wide = [num(f"x{i}", list(np.random.default_rng(i).normal(size=11))) for i in range(12)]
    name, _, report = select_imputer(y, wide, candidates=("regression", "baseline"))
    assert name == "baseline" and "error" in report[0]
    with pytest.raises(ValueError):
        select_imputer(num("y", [1.0] * 5), [])


def test_uniform_twelve_bins_on_tumour_range():
    d = fit_discretiser(np.linspace(0, 120, 50), "uniform", 12)
    assert d.cut_points == pytest.approx([10.0 * i for i in range(1, 12)])


def test_quantile_median_split():
    d = fit_discretiser(range(1, 11), "quantile", 2)
    assert d.cut_points == (5.5,)
    assert [apply_discretiser(d, v) for v in range(1, 11)] == [0] * 5 + [1] * 5


def test_kmeans_two_clusters():
    d = fit_discretiser([1, 2, 3, 10, 11, 12], "kmeans", 2)
    assert 3 < d.cut_points[0] < 10


def test_too_few_distinct_values():
    with pytest.raises(ValueError):
        fit_discretiser([1, 1, 2], "kmeans", 4)
    with pytest.raises(ValueError):
        fit_discretiser([1, 1, 1], "uniform", 2)


def test_discretiser_validates_cut_points():
    with pytest.raises(ValueError):
        Discretiser("uniform", 3, (2.0, 1.0))


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(-50, 50), min_size=2, max_size=12), st.integers(1, 6))
def test_kmeans_dp_is_optimal(values, k):
    k = min(k, len(set(values)))
    clusters = kmeans_1d(values, k)
    sse = sum(float(np.sum((np.array(c) - np.mean(c)) ** 2)) for c in clusters)
    assert sse <= kmeans_brute_force(values, k) + 1e-9
    assert sorted(v for c in clusters for v in c) == sorted(values)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=12, max_size=60), st.sampled_from(DISCRETISERS),
       st.sampled_from(BIN_COUNTS))
def test_bins_partition_and_apply_is_monotone(values, method, bins):
    try:
        d = fit_discretiser(values, method, bins)
    except ValueError:
        return
    assert min(values) <= d.cut_points[0] and d.cut_points[-1] <= max(values)
    ordered = sorted(values + [-1e9, 1e9])
    idx = [apply_discretiser(d, v) for v in ordered]
    assert all(a <= b for a, b in zip(idx, idx[1:]))
    assert idx[0] == 0 and idx[-1] == bins - 1


def _base(labels):
    schema = FeatureSchema((Feature("noise", ("a", "b")),))
    rng = np.random.default_rng(len(labels))
    labels = np.asarray(labels)
    return CategoricalDataset(schema, rng.integers(0, 2, (len(labels), 1)), np.where(labels == 1, 500, 100),
                              np.ones(len(labels), bool))


def _light_brl():
    return BayesianRuleList(BrlHyper(iterations=400, burn_in=200, chains=1))


def test_add_discretised_feature_appends_labels():
    ds = _base([0, 1, 1, 0])
    d = fit_discretiser([1.0, 2.0, 3.0, 4.0], "uniform", 2)
    out = add_discretised_feature(ds, "size", [1.0, 2.0, 3.0, 4.0], d)
    assert out.schema.names == ["noise", "size"]
    assert out.category_names(3)[1] == ">= 2.5"


def test_constant_label_ties_to_two_uniform_bins():
    values = np.random.default_rng(0).uniform(0, 100, 60)
    choice, report = select_discretiser(_base([1] * 60), "size", values, learner_factory=_light_brl)
    assert choice == ("uniform", 2)
    assert len(report) == 18


def test_planted_threshold_favours_two_quantile_bins():
    hits = 0
    for seed in range(5):
        values = np.random.default_rng(seed).uniform(0, 100, 120)
        labels = (values > np.median(values)).astype(int)
        choice, report = select_discretiser(_base(labels), "size", values, methods=("quantile", "kmeans"),
                                            bin_counts=(2, 4), seed=seed, learner_factory=_light_brl)
        top = max(r["mean"] for r in report if r["mean"] is not None)
        q2 = next(r for r in report if r["candidate"] == {"method": "quantile", "bin_count": 2})
        hits += q2["mean"] == top
    assert hits >= 4


def test_select_discretiser_is_deterministic():
    values = np.random.default_rng(3).uniform(0, 10, 50)
    labels = (values > 4).astype(int)
    a = select_discretiser(_base(labels), "v", values, bin_counts=(2, 4), learner_factory=_light_brl)
    b = select_discretiser(_base(labels), "v", values, bin_counts=(2, 4), learner_factory=_light_brl)
    assert a == b


def test_imputers_without_predictors_fall_back_to_intercept():
    col = num("y", [1.0, 3.0, None])
    assert impute_regression(col, []).values[2] == pytest.approx(2.0)
    assert impute_knn(col, [], k=2).values[2] == pytest.approx(2.0)
