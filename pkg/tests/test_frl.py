import itertools
import math
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import log_beta_ratio
from survrules.data import CategoricalDataset, Feature, FeatureSchema, paper_synth_spec, synth_generate
from survrules.frl import (FallingRuleList, FallingRuleListClassifier, FrlHyper, frl_fit, frl_predict, frl_score,
                           isotonic_decreasing, log_list_prior)
from survrules.rulelist import match_index

SCHEMA4 = FeatureSchema(tuple(Feature(n, ("0", "1")) for n in "ABCD"))
POOL4 = ([((f, v),) for f in range(4) for v in (0, 1)]
         + [((f, v), (g, w)) for f, g in itertools.combinations(range(4), 2) for v in (0, 1) for w in (0, 1)])


def make_ds(rows, labels, schema=SCHEMA4):
    labels = np.asarray(labels)
    return CategoricalDataset(schema, np.asarray(rows), np.where(labels == 1, 500, 100), np.ones(len(labels), bool))


def planted(seed, n=2000, rates=(0.9, 0.6, 0.15)):
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, 2, (n, 4))
    p = np.where(rows[:, 0] == 1, rates[0], np.where(rows[:, 1] == 1, rates[1], rates[2]))
    return make_ds(rows, (rng.random(n) < p).astype(int))


def test_empty_list_score_is_single_marginal():
    ds = make_ds([(i % 2, 0, 0, 0) for i in range(20)], [i % 2 for i in range(20)])
    h = FrlHyper(lam=3.0)
    length_term = -3.0  # log Poisson(0; 3)
    assert frl_score([], ds, h) == pytest.approx(length_term + log_beta_ratio(10, 10), abs=1e-12)
    pooled = log_list_prior(0, 3.0, 5)
    assert frl_score([], ds, h, pool_size=5) == pytest.approx(pooled + log_beta_ratio(10, 10), abs=1e-12)


def test_planted_rule_beats_empty_list():
    rng = np.random.default_rng(3)
    rows = rng.integers(0, 2, (400, 4))
    y = (rng.random(400) < np.where(rows[:, 0] == 1, 0.9, 0.2)).astype(int)
    ds = make_ds(rows, y)
    assert frl_score([((0, 1),)], ds) > frl_score([], ds)


def test_rising_order_is_an_error():
    ds = planted(0, 500)
    with pytest.raises(ValueError):
        frl_score([((1, 1),), ((0, 1),)], make_ds(ds.rows[ds.rows[:, 0] + ds.rows[:, 1] == 1],
                                                  ds.label[ds.rows[:, 0] + ds.rows[:, 1] == 1]))
    bad = FallingRuleList((((0, 1),),), [0.2, 0.8], [10, 10])
    with pytest.raises(ValueError):
        frl_score(bad, ds)


def test_list_prior_sums_to_one():
    P, lam = 4, 1.7
    total = sum(math.exp(log_list_prior(len(s), lam, P))
                for k in range(P + 1) for s in itertools.permutations(range(P), k))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_isotonic_pools_violators():
    fitted, blocks = isotonic_decreasing([0.5, 0.7, 0.2], [1, 1, 1])
    assert fitted.tolist() == pytest.approx([0.6, 0.6, 0.2])
    assert blocks == [[0, 1], [2]]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0.1, 10)), min_size=1, max_size=15))
def test_isotonic_is_non_increasing_and_preserves_mass(pairs):
    v, w = map(np.asarray, zip(*pairs))
    fitted, blocks = isotonic_decreasing(v, w)
    assert np.all(np.diff(fitted) <= 1e-12)
    assert float(fitted @ w) == pytest.approx(float(v @ w), rel=1e-9, abs=1e-9)
    assert sorted(i for b in blocks for i in b) == list(range(len(v)))


def test_planted_two_rules_recovered():
    hits = 0
    for seed in range(5):
        ds = planted(seed)
        fitted = frl_fit(ds, POOL4, FrlHyper(seed=seed))
        truth = match_index((((0, 1),), ((1, 1),)), ds)
        # {A=0, B=1} after {A=1} captures the same rows as {B=1}; compare the partition
        hits += len(fitted) == 2 and np.array_equal(fitted.rule_index(ds), truth)
    assert hits >= 4


def test_all_negative_labels_give_default_only():
    rng = np.random.default_rng(0)
    ds = make_ds(rng.integers(0, 2, (300, 4)), np.zeros(300, int))
    fitted = frl_fit(ds, POOL4, FrlHyper(iterations=2000))
    assert len(fitted) == 0
    assert fitted.risk[0] == pytest.approx(1 / 302)
    assert fitted.support.tolist() == [300]


def test_empty_pool_is_an_error():
    with pytest.raises(ValueError):
        frl_fit(planted(0, 50), [])


@pytest.mark.parametrize("seed", range(50))
def test_fitted_risks_never_rise(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(20, 200))
    rows = rng.integers(0, 2, (n, 4))
    logits = rng.normal(0, 2, 4) @ rows.T.astype(float) - 1
    y = (rng.random(n) < 1 / (1 + np.exp(-logits))).astype(int)
    ds = make_ds(rows, y)
    fitted = frl_fit(ds, POOL4, FrlHyper(seed=seed, iterations=1500, warm_iterations=300, restarts=2))
    assert fitted.is_falling
    assert fitted.support.sum() == n


def _two_rule_list():
    return FallingRuleList((((0, 1),), ((1, 1),)), [0.9, 0.6, 0.1], [5, 5, 10])


def test_predict_examples():
    frl = _two_rule_list()
    assert frl_predict(frl, (1, 1, 0, 0)) == (0.9, 0)
    assert frl_predict(frl, (0, 1, 0, 0)) == (0.6, 1)
    assert frl_predict(frl, (0, 0, 1, 1)) == (0.1, 2)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(*[st.integers(0, 1)] * 4), min_size=2, max_size=30))
def test_risk_stratification(rows):
    frl = _two_rule_list()
    out = [frl_predict(frl, r) for r in rows]
    for (p, i), (q, j) in itertools.combinations(out, 2):
        if i < j:
            assert p >= q
        elif j < i:
            assert q >= p


def test_short_lists_on_noise_with_small_lambda():
    lengths = []
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        ds = make_ds(rng.integers(0, 2, (200, 4)), rng.integers(0, 2, 200))
        lengths.append(len(frl_fit(ds, POOL4, FrlHyper(lam=0.5, seed=seed, iterations=1500, restarts=2))))
    assert max(set(lengths), key=lengths.count) == 0


def test_classifier_round_trip_and_render():
    ds = synth_generate(paper_synth_spec(), 1018, 0)
    m = FallingRuleListClassifier(FrlHyper(iterations=3000)).fit(ds)
    assert m.rule_list.is_falling
    again = FallingRuleListClassifier.from_dict(m.to_dict())
    probe = synth_generate(paper_synth_spec(), 100, 5)
    assert np.array_equal(again.predict_proba(probe), m.predict_proba(probe))
    assert again.render() == m.render()
    lines = m.render().splitlines()
    rule = re.compile(r"^(IF|ELSE IF) .+ THEN probability of survival > 1 yr: \d{1,3}% \(support: \d+\)$")
    assert all(rule.match(x) for x in lines[:-1])
    assert re.match(r"^ELSE probability of survival > 1 yr: \d{1,3}% \(support: \d+\)$", lines[-1])
    assert sum(int(re.search(r"support: (\d+)", x).group(1)) for x in lines) == len(ds)
