import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_itemsets
from survrules.data import CategoricalDataset, Feature, FeatureSchema, paper_synth_spec, synth_generate
from survrules.rulemine import (confidence, coverage, fp_growth, itemset_from_names, make_itemset,
                                mine_antecedents, min_count, support)

MARKET = [
    ["bread", "milk"],
    ["bread", "diapers", "beer", "eggs"],
    ["milk", "diapers", "beer", "cola"],
    ["bread", "milk", "diapers", "beer"],
    ["bread", "milk", "diapers", "cola"],
]


def toy():
    schema = FeatureSchema((Feature("A", ("0", "1")), Feature("B", ("0", "1"))))
    rows = [[1, 0], [0, 1], [1, 1], [0, 0]]
    return CategoricalDataset(schema, rows, [400, 400, 100, 400], [True] * 4)


def test_market_basket_matches_oracle():
    for s in (0.2, 0.4, 0.6, 1.0):
        assert dict(fp_growth(MARKET, s)) == brute_force_itemsets(MARKET, s)


def test_full_support_returns_common_items_only():
    got = dict(fp_growth([["a", "b"], ["a", "c"], ["a"]], 1.0))
    assert got == {(): 3, ("a",): 3}


def test_empty_transactions():
    assert fp_growth([], 0.5) == []
    with pytest.raises(ValueError):
        fp_growth(MARKET, 0.0)


def test_threshold_float_boundary():
    assert min_count(0.3, 10) == 3
    assert min_count(0.10, 1018) == 102


def test_canonical_order_and_downward_closure():
    out = fp_growth(MARKET, 0.4)
    keys = [k for k, _ in out]
    assert keys == sorted(keys, key=lambda k: (len(k), k))
    found = set(keys)
    for k in keys:
        for r in range(len(k)):
            for sub in itertools.combinations(k, r):
                assert sub in found


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.integers(0, 11), max_size=12), max_size=64),
       st.floats(0.05, 1.0))
def test_fp_growth_property(transactions, min_support):
    assert dict(fp_growth(transactions, min_support)) == brute_force_itemsets(transactions, min_support)


def test_support_examples():
    ds = toy()
    assert support((), ds) == 1.0
    assert support(make_itemset([(0, 1)]), ds) == 0.5
    big = synth_generate(paper_synth_spec(), 100000, 2)
    assert abs(support(itemset_from_names(big.schema, [("Sex", "Male")]), big) - 0.505) <= 0.01


def test_confidence_examples():
    ds = toy()
    assert confidence(((1, 0),), 1, ds) == 1.0
    schema = FeatureSchema((Feature("A", ("0", "1")),))
    ds4 = CategoricalDataset(schema, [[1]] * 4 + [[0]] * 2, [400, 400, 400, 100, 100, 100], [True] * 6)
    assert confidence(((0, 1),), 1, ds4) == 0.75
    ds_none = CategoricalDataset(schema, [[0], [0]], [400, 400], [True, True])
    with pytest.raises(ValueError):
        confidence(((0, 1),), 1, ds_none)


def test_itemset_rejects_two_items_on_one_feature():
    with pytest.raises(ValueError):
        make_itemset([(0, 0), (0, 1)])


def _planted(n=2000, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.random(n) < 0.5
    b = rng.integers(0, 3, n)
    y = np.where(a, rng.random(n) < 0.9, rng.random(n) < 0.3)
    schema = FeatureSchema((Feature("A", ("0", "1")), Feature("B", ("x", "y", "z"))))
    return CategoricalDataset(schema, np.column_stack([a, b]).astype(int), np.where(y, 500, 100),
                              np.ones(n, bool))


def test_mine_recovers_planted_antecedent():
    ds = _planted()
    rules = {r.antecedent: r for r in mine_antecedents(ds, 0.10, 0.80, 2)}
    r = rules[((0, 1),)]
    assert abs(r.confidence - 0.9) < 0.03
    assert abs(r.support - 0.5) < 0.03


def test_mined_rules_satisfy_thresholds_and_cardinality():
    ds = synth_generate(paper_synth_spec(), 1018, 4)
    for card in (1, 2):
        rules = mine_antecedents(ds, 0.10, 0.80, card)
        assert rules
        for r in rules:
            mask = coverage(r.antecedent, ds)
            assert len(r.antecedent) <= card
            assert r.n == mask.sum()
            assert r.support == pytest.approx(mask.mean()) and r.support >= 0.10
            assert r.confidence == pytest.approx(max(confidence(r.antecedent, v, ds) for v in (0, 1)))
            assert r.confidence >= 0.80 - 1e-12
    assert mine_antecedents(ds, 0.10, 1.0, 2) == []


def test_mine_output_is_stable_json():
    ds = synth_generate(paper_synth_spec(), 600, 9)
    a = json.dumps([r.to_json(ds.schema) for r in mine_antecedents(ds)])
    b = json.dumps([r.to_json(ds.schema) for r in mine_antecedents(ds)])
    assert a == b
