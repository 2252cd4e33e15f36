import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import grid_argmax, naive_partial_loglik
from survrules.coxph import (PENALIZER_GRID, CoxClassifier, CoxModel, cox_fit, cox_importance,
                             cox_predict_survival_days, partial_log_likelihood, select_penalizer)
from survrules.data import paper_synth_spec, synth_generate

BASE_RATE = 1 / 500


def two_group(seed, n=5000, ratio=2.0):
    rng = np.random.default_rng(seed)
    x = (np.arange(n) % 2).astype(float)
    t = rng.exponential(1 / (BASE_RATE * ratio ** x))
    return x, np.ceil(t), np.ones(n, bool)


def test_hazard_ratio_two_recovered():
    x, t, e = two_group(0)
    m = cox_fit(x, t, e, 0.0)
    assert abs(m.beta[0] - math.log(2)) <= 0.1
    coarse = grid_argmax(lambda b: naive_partial_loglik(x, t, e, b), 0.0, 1.5, 0.01)
    fine = grid_argmax(lambda b: naive_partial_loglik(x, t, e, b), coarse - 0.01, coarse + 0.01, 1e-4)
    assert abs(m.beta[0] - fine) <= 1e-3


def test_identical_covariates_give_zero():
    rng = np.random.default_rng(1)
    X = np.ones((50, 2))
    m = cox_fit(X, rng.integers(1, 100, 50), np.ones(50, bool), 0.1)
    assert np.all(m.beta == 0.0)


def test_four_rows_hand_expansion():
    x = np.array([1.0, 0.0, 2.0, 0.5])
    t = np.array([1, 3, 2, 4])
    e = np.array([True, True, True, False])
    b = 0.3
    # t=1 (row 0): risk set all four; t=2 (row 2): rows 1,2,3; t=3 (row 1): rows 1,3
    w = np.exp(b * x)
    hand = (math.log(w[0] / w.sum()) + math.log(w[2] / (w[1] + w[2] + w[3])) + math.log(w[1] / (w[1] + w[3])))
    assert partial_log_likelihood(x, t, e, b) == pytest.approx(hand, abs=1e-12)
    m = cox_fit(x, t, e, 0.0)
    assert m.beta[0] == pytest.approx(grid_argmax(lambda v: naive_partial_loglik(x, t, e, v), -5, 5, 1e-4), abs=1e-4)


def _mixed(seed, n=300, p=4):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 2, (n, p)).astype(float)
    t = np.ceil(rng.exponential(100 * np.exp(-X @ rng.normal(0, 0.7, p))))
    e = rng.random(n) < 0.7
    return X, t, e


@pytest.mark.parametrize("pen", [0.0, 0.01, 1.0])
def test_score_equation_at_optimum(pen):
    X, t, e = _mixed(2)
    m = cox_fit(X, t, e, pen)
    assert m.gradient_norm < 1e-6
    h = 1e-6
    for j in range(X.shape[1]):
        step = np.eye(X.shape[1])[j] * h
        num = (partial_log_likelihood(X, t, e, m.beta + step) - partial_log_likelihood(X, t, e, m.beta - step)) / (2 * h)
        assert abs(num - pen * m.beta[j]) < 1e-4


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_row_permutation_invariance(seed):
    X, t, e = _mixed(seed, n=120)
    perm = np.random.default_rng(seed + 1).permutation(len(t))
    a = cox_fit(X, t, e, 0.01)
    b = cox_fit(X[perm], t[perm], e[perm], 0.01)
    assert np.allclose(a.beta, b.beta, atol=1e-10, rtol=0)


def test_baseline_steps_at_event_times():
    X, t, e = _mixed(3)
    m = cox_fit(X, t, e, 0.01)
    assert np.all(np.diff(m.cumulative_hazard) >= 0)
    assert set(m.event_times.tolist()) == set(t[e].tolist())


def test_zero_beta_predicts_baseline_median():
    rng = np.random.default_rng(4)
    t = rng.integers(1, 900, 200)
    e = rng.random(200) < 0.8
    m = CoxModel(["x"], np.zeros(1), 0.0, *_nelson_aalen(t, e), int(t.max()))
    expected = next(s for s, h in zip(*_nelson_aalen(t, e)) if math.exp(-h) <= 0.5)
    preds = cox_predict_survival_days(m, rng.normal(size=(10, 1)))
    assert preds.tolist() == [expected] * 10


def _nelson_aalen(t, e):
    times = sorted(set(t[e].tolist()))
    H, out = 0.0, []
    for s in times:
        H += np.sum((t == s) & e) / np.sum(t >= s)
        out.append(H)
    return np.array(times, dtype=float), np.array(out)


def test_predictions_fall_with_risk():
    X, t, e = _mixed(5)
    m = cox_fit(X, t, e, 0.01)
    probe = np.random.default_rng(0).integers(0, 2, (64, X.shape[1])).astype(float)
    lp = probe @ m.beta
    days = cox_predict_survival_days(m, probe)
    order = np.argsort(lp)
    assert np.all(np.diff(days[order]) <= 0)


def test_group_medians_match_exponential():
    x, t, e = two_group(6, n=4000)
    m = cox_fit(x, t, e, 0.0)
    d0, d1 = cox_predict_survival_days(m, [[0.0], [1.0]])
    assert abs(d0 - math.log(2) / BASE_RATE) / (math.log(2) / BASE_RATE) < 0.15
    assert abs(d1 - math.log(2) / (2 * BASE_RATE)) / (math.log(2) / (2 * BASE_RATE)) < 0.15


def test_never_below_half_maps_past_horizon():
    t = np.array([10, 20, 30, 40])
    e = np.array([True, False, False, False])
    m = cox_fit(np.zeros(4), t, e, 0.0)
    assert cox_predict_survival_days(m, [[0.0]]).tolist() == [41]


def test_importance_identical_folds_and_size():
    X, t, e = _mixed(7, p=12)
    m = cox_fit(X, t, e, 0.01, [f"c{j}" for j in range(12)])
    rep = cox_importance([m, m, m])
    assert all(r["std"] == 0 for r in rep["coefficients"])
    assert len(rep["most_negative"]) + len(rep["most_positive"]) == 10
    with pytest.raises(ValueError):
        cox_importance([])


def test_protective_covariate_ranks_negative():
    rng = np.random.default_rng(8)
    n = 3000
    X = rng.integers(0, 2, (n, 8)).astype(float)
    t = np.ceil(rng.exponential(1 / (BASE_RATE * 0.5 ** X[:, 3])))
    models = []
    for f in range(5):
        keep = np.arange(n) % 5 != f
        models.append(cox_fit(X[keep], t[keep], np.ones(keep.sum(), bool), 0.01, [f"c{j}" for j in range(8)]))
    rep = cox_importance(models)
    assert rep["most_negative"][0]["column"] == "c3"


def test_full_schema_report_covers_ten_rows():
    ds = synth_generate(paper_synth_spec(), 600, 0)
    m = CoxClassifier(grid=(0.1,)).fit(ds)
    assert len(m.model.beta) == 75
    rep = cox_importance([m.model])
    assert len(rep["most_negative"]) == 5 and len(rep["most_positive"]) == 5


def test_single_element_grid():
    X, t, e = _mixed(9)
    assert select_penalizer(X, t, e, [0.1])[0] == 0.1
    with pytest.raises(ValueError):
        select_penalizer(X, t, e, [])


def _collinear(seed, n=60):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=n)
    X = np.column_stack([z + 0.01 * rng.normal(size=n) for _ in range(4)] + [rng.normal(size=(n, 6))])
    death = rng.exponential(1 / np.exp(0.5 * z))
    censor = rng.exponential(2, size=n)
    return X, np.minimum(death, censor), death <= censor


def test_collinear_covariates_pick_real_penalty():
    chosen = [select_penalizer(*_collinear(s), PENALIZER_GRID, seed=s)[0] for s in range(5)]
    assert sum(c > 1e-3 for c in chosen) >= 4


def test_classifier_round_trip():
    ds = synth_generate(paper_synth_spec(), 400, 1)
    m = CoxClassifier(seed=1).fit(ds)
    again = CoxClassifier.from_dict(m.to_dict())
    probe = synth_generate(paper_synth_spec(), 100, 2)
    assert np.array_equal(again.predict(probe), m.predict(probe))
    assert set(np.unique(m.predict(probe))) <= {0, 1}


def test_fit_requires_events():
    with pytest.raises(ValueError):
        cox_fit(np.zeros(3), [1, 2, 3], [False] * 3)
