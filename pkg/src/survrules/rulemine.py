"""Frequent itemset mining (FP-Growth) and antecedent generation."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np

from .data import CategoricalDataset, FeatureSchema

# (feature_index, category_index)
Item = tuple[int, int]
Itemset = tuple[Item, ...]


def make_itemset(items: Iterable[Item]) -> Itemset:
    """Sort, deduplicate and check per-feature uniqueness."""
    items = tuple(sorted(set((int(f), int(c)) for f, c in items)))
    feats = [f for f, _ in items]
    if len(set(feats)) != len(feats):
        raise ValueError(f"itemset {items} has two items on one feature")
    return items


def itemset_from_names(schema: FeatureSchema, pairs: Iterable[tuple[str, str]]) -> Itemset:
    out = []
    for name, cat in pairs:
        j = schema.feature_index(name)
        out.append((j, schema[j].index(cat)))
    return make_itemset(out)


def describe(itemset: Itemset, schema: FeatureSchema) -> str:
    return " AND ".join(f"{schema[f].name}: {schema[f].categories[c]}" for f, c in itemset)


def itemset_to_json(itemset: Itemset, schema: FeatureSchema) -> list[dict]:
    return [{"feature": schema[f].name, "category": schema[f].categories[c]} for f, c in itemset]


def itemset_from_json(doc: Sequence[dict], schema: FeatureSchema) -> Itemset:
    return itemset_from_names(schema, [(d["feature"], d["category"]) for d in doc])


def min_count(min_support: float, n: int) -> int:
    """Absolute count threshold ``ceil(min_support * n)``.

    Rounded to 9 decimals first so that e.g. 0.3 * 10 does not become 4.
    """
    return int(math.ceil(round(min_support * n, 9)))


def coverage(itemset: Itemset, ds: CategoricalDataset) -> np.ndarray:
    """Boolean mask of rows satisfying every item."""
    mask = np.ones(len(ds), dtype=bool)
    for f, c in itemset:
        mask &= ds.rows[:, f] == c
    return mask


def support(itemset: Itemset, ds: CategoricalDataset) -> float:
    if len(ds) == 0:
        return 0.0
    return float(coverage(itemset, ds).sum()) / len(ds)


def confidence(itemset: Itemset, label_value: int, ds: CategoricalDataset) -> float:
    mask = coverage(itemset, ds)
    n = int(mask.sum())
    if n == 0:
        raise ValueError("confidence undefined for an itemset with zero support")
    return float(np.sum(ds.label[mask] == label_value)) / n


# --------------------------------------------------------------------------- #
# FP-Growth

class _Node:
    __slots__ = ("item", "count", "parent", "children", "link")

    def __init__(self, item, parent):
        self.item = item
        self.count = 0
        self.parent = parent
        self.children = {}
        self.link = None


def _build_tree(paths):
    """FP-tree from (ordered items, weight) pairs; returns the header table."""
    root = _Node(None, None)
    header: dict = {}
    for items, weight in paths:
        node = root
        for item in items:
            child = node.children.get(item)
            if child is None:
                child = _Node(item, node)
                node.children[item] = child
                child.link = header.get(item)
                header[item] = child
            child.count += weight
            node = child
    return header


def _mine(paths, threshold, suffix, max_len, out):
    counts: Counter = Counter()
    for items, w in paths:
        for item in items:
            counts[item] += w
    frequent = {i: c for i, c in counts.items() if c >= threshold}
    if not frequent:
        return
    # descending frequency, ties by item identity
    order = sorted(frequent, key=lambda i: (-frequent[i], i))
    rank = {i: r for r, i in enumerate(order)}
    ordered_paths = []
    for items, w in paths:
        kept = sorted((i for i in items if i in rank), key=rank.__getitem__)
        if kept:
            ordered_paths.append((kept, w))
    header = _build_tree(ordered_paths)
    for item in reversed(order):
        new_suffix = suffix + (item,)
        out[tuple(sorted(new_suffix))] = frequent[item]
        if max_len is not None and len(new_suffix) >= max_len:
            continue
        cond = []
        node = header[item]
        while node is not None:
            prefix = []
            p = node.parent
            while p.item is not None:
                prefix.append(p.item)
                p = p.parent
            if prefix:
                cond.append((prefix, node.count))
            node = node.link
        if cond:
            _mine(cond, threshold, new_suffix, max_len, out)


def canonical_order(itemset: tuple) -> tuple:
    return (len(itemset), itemset)


def fp_growth(transactions: Sequence[Iterable[Hashable]], min_support: float,
              max_len: int | None = None) -> list[tuple[tuple, int]]:
    """All itemsets with count >= ceil(min_support * N), with their counts.

    Includes the empty itemset (count N). Output is sorted by size and then
    lexicographically, so items must be mutually orderable.
    """
    if not 0 < min_support <= 1:
        raise ValueError("min_support must be in (0, 1]")
    n = len(transactions)
    if n == 0:
        return []
    threshold = min_count(min_support, n)
    out: dict = {(): n}
    if max_len is None or max_len > 0:
        _mine([(list(set(t)), 1) for t in transactions], threshold, (), max_len, out)
    return sorted(out.items(), key=lambda kv: canonical_order(kv[0]))


@dataclass(frozen=True)
class MinedRule:
    antecedent: Itemset
    n_neg: int
    n_pos: int
    support: float
    confidence: float

    @property
    def n(self) -> int:
        return self.n_neg + self.n_pos

    @property
    def majority(self) -> int:
        return int(self.n_pos >= self.n_neg)

    def to_json(self, schema: FeatureSchema) -> dict:
        return {
            "items": itemset_to_json(self.antecedent, schema),
            "support": self.support,
            "confidence": self.confidence,
            "counts": {"n_neg": self.n_neg, "n_pos": self.n_pos},
        }


def dataset_transactions(ds: CategoricalDataset) -> list[list[Item]]:
    return [[(j, int(c)) for j, c in enumerate(row)] for row in ds.rows]


def mine_antecedents(ds: CategoricalDataset, min_support: float = 0.10,
                     min_confidence: float = 0.80, max_cardinality: int = 2) -> list[MinedRule]:
    """Frequent, confident antecedents of bounded size.

    Support is counted over all rows; confidence is that of the majority
    label among the rows the antecedent covers.
    """
    if not (0 < min_support <= 1 and 0 < min_confidence <= 1):
        raise ValueError("thresholds must be in (0, 1]")
    if max_cardinality < 1:
        raise ValueError("max_cardinality must be at least 1")
    n = len(ds)
    if n == 0:
        return []
    itemsets = fp_growth(dataset_transactions(ds), min_support, max_len=max_cardinality)
    pos = ds.label == 1
    out = []
    for itemset, count in itemsets:
        if not itemset:
            continue
        mask = coverage(itemset, ds)
        n_pos = int(np.sum(mask & pos))
        n_neg = count - n_pos
        conf = max(n_pos, n_neg) / count
        if conf + 1e-12 >= min_confidence:
            out.append(MinedRule(itemset, n_neg, n_pos, count / n, conf))
    return out
