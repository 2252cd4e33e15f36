"""Falling Rule Lists: decision lists whose positive-label risk never increases down the list."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import CategoricalDataset, FeatureSchema
from .rulelist import (OUTCOME, MarginalTable, RulePool, capture_counts, log_poisson, log_trunc_poisson,
                       match_index, pct, propose, rule_conditions)
from .rulemine import Itemset, itemset_from_json, itemset_to_json, mine_antecedents


@dataclass(frozen=True)
class FrlHyper:
    lam: float = 3.0
    alpha: tuple[float, float] = (1.0, 1.0)
    iterations: int = 20000
    warm_iterations: int = 2000
    t0: float = 1.0
    decay: float = 0.995
    t_min: float = 1e-3
    restarts: int = 5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        if not 0 < self.decay < 1:
            raise ValueError("decay must be in (0, 1)")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.lam <= 0 or min(self.alpha) <= 0 or self.t0 <= 0 or self.t_min <= 0:
            raise ValueError("lam, alpha and temperatures must be positive")


def isotonic_decreasing(values: Sequence[float], weights: Sequence[float]) -> tuple[np.ndarray, list[list[int]]]:
    """Weighted least-squares non-increasing fit by pool-adjacent-violators.

    Returns the fitted values and the blocks of pooled positions.
    """
    blocks: list[list] = []  # [mean, weight, positions]
    for i, (v, w) in enumerate(zip(values, weights)):
        blocks.append([float(v), float(w), [i]])
        while len(blocks) > 1 and blocks[-2][0] < blocks[-1][0]:
            m2, w2, p2 = blocks.pop()
            m1, w1, p1 = blocks.pop()
            blocks.append([(m1 * w1 + m2 * w2) / (w1 + w2), w1 + w2, p1 + p2])
    fitted = np.empty(len(values))
    for m, _, pos in blocks:
        fitted[pos] = m
    return fitted, [b[2] for b in blocks]


def smoothed_rates(counts, alpha) -> np.ndarray:
    counts = np.asarray(counts, dtype=float).reshape(-1, 2)
    a0, a1 = alpha
    return (counts[:, 1] + a1) / (counts.sum(axis=1) + a0 + a1)


def _is_falling(rates) -> bool:
    return all(rates[i] >= rates[i + 1] for i in range(len(rates) - 1))


@dataclass(frozen=True, eq=False)
class FallingRuleList:
    """Ordered antecedents with non-increasing risk; the default rule is last."""

    antecedents: tuple[Itemset, ...]
    risk: np.ndarray
    support: np.ndarray
    counts: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "antecedents", tuple(tuple(a) for a in self.antecedents))
        risk = np.asarray(self.risk, dtype=float)
        support = np.asarray(self.support, dtype=np.int64)
        if len(risk) != len(self.antecedents) + 1 or len(support) != len(risk):
            raise ValueError("need one risk and support per rule plus the default")
        object.__setattr__(self, "risk", risk)
        object.__setattr__(self, "support", support)
        if self.counts is not None:
            object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64).reshape(-1, 2))

    @classmethod
    def from_data(cls, antecedents, ds: CategoricalDataset, alpha=(1.0, 1.0),
                  project: bool = True) -> "FallingRuleList":
        """Risks from smoothed captured-label rates, optionally isotonic-projected."""
        counts = capture_counts(tuple(antecedents), ds)
        rates = smoothed_rates(counts, alpha)
        if project:
            rates, _ = isotonic_decreasing(rates, counts.sum(axis=1) + sum(alpha))
        return cls(tuple(antecedents), rates, counts.sum(axis=1), counts)

    def __len__(self):
        return len(self.antecedents)

    @property
    def is_falling(self) -> bool:
        return _is_falling(self.risk)

    def rule_index(self, ds: CategoricalDataset) -> np.ndarray:
        return match_index(self.antecedents, ds)

    def predict_proba(self, ds: CategoricalDataset) -> np.ndarray:
        return self.risk[self.rule_index(ds)]

    def to_json(self, schema: FeatureSchema) -> list[dict]:
        items = [itemset_to_json(a, schema) for a in self.antecedents] + [[]]
        return [{"items": it, "risk": float(r), "support": int(s)}
                for it, r, s in zip(items, self.risk, self.support)]

    @classmethod
    def from_json(cls, rules: Sequence[dict], schema: FeatureSchema) -> "FallingRuleList":
        ants = tuple(itemset_from_json(r["items"], schema) for r in rules[:-1])
        return cls(ants, [r["risk"] for r in rules], [r["support"] for r in rules])

    def render(self, schema: FeatureSchema) -> str:
        """``IF ... THEN probability of survival > 1 yr: NN% (support: K)`` per rule."""
        lines = []
        for cond, r, s in zip(rule_conditions(self.antecedents, schema), self.risk, self.support):
            head = cond if cond == "ELSE" else cond + " THEN"
            lines.append(f"{head} {OUTCOME}: {pct(r)} (support: {int(s)})")
        return "\n".join(lines)


def frl_predict(frl: FallingRuleList, row: Sequence[int]) -> tuple[float, int]:
    """Risk of the first rule the row satisfies, and that rule's index."""
    for i, a in enumerate(frl.antecedents):
        if all(row[f] == c for f, c in a):
            return float(frl.risk[i]), i
    k = len(frl.antecedents)
    return float(frl.risk[k]), k


# --------------------------------------------------------------------------- #
# objective

def log_list_prior(length: int, lam: float, pool_size: int) -> float:
    """Truncated-Poisson length times a uniform ordered choice of distinct antecedents."""
    return (log_trunc_poisson(length, lam, range(pool_size + 1))
            - sum(math.log(pool_size - j) for j in range(length)))


class _Objective:
    """List prior plus Beta-Bernoulli marginals of isotonic blocks.

    Consecutive rules whose smoothed rates would rise are pooled into one
    block sharing a single risk. ``feasible`` is true when no pooling was
    needed.
    """

    def __init__(self, pool: RulePool, hyper: FrlHyper):
        self.pool = pool
        self.alpha = hyper.alpha
        P = len(pool)
        self._len_lp = [log_list_prior(k, hyper.lam, P) for k in range(P + 1)]
        self._marg = MarginalTable(hyper.alpha)
        self._cache: dict = {}

    def __call__(self, state: tuple[int, ...]) -> tuple[float, bool]:
        hit = self._cache.get(state)
        if hit is not None:
            return hit
        counts = self.pool.counts(state)
        a0, a1 = self.alpha
        rates = [(p + a1) / (n + p + a0 + a1) for n, p in counts]
        feasible = _is_falling(rates)
        if feasible:
            score = sum(self._marg(n, p) for n, p in counts)
        else:
            _, blocks = isotonic_decreasing(rates, [n + p + a0 + a1 for n, p in counts])
            score = 0.0
            for b in blocks:
                score += self._marg(sum(counts[i][0] for i in b), sum(counts[i][1] for i in b))
        out = (score + self._len_lp[len(state)], feasible)
        self._cache[state] = out
        return out


def frl_score(frl: FallingRuleList | Sequence[Itemset], ds: CategoricalDataset,
              hyper: FrlHyper = FrlHyper(), pool_size: int | None = None) -> float:
    """Log list prior plus per-rule Beta-Bernoulli log marginals (higher is better).

    With ``pool_size`` the prior is the one used during fitting (length
    truncated at the pool size, uniform ordered antecedent choice); without
    it only an untruncated Poisson(lam) length term is applied.
    Raises ``ValueError`` when the list's risks are not non-increasing, either
    as stored or as estimated from ``ds``.
    """
    if isinstance(frl, FallingRuleList):
        if not frl.is_falling:
            raise ValueError("risks increase down the list")
        ants = frl.antecedents
    else:
        ants = tuple(frl)
    counts = capture_counts(ants, ds)
    if not _is_falling(smoothed_rates(counts, hyper.alpha)):
        raise ValueError("captured-label rates increase down the list")
    marg = MarginalTable(hyper.alpha)
    if pool_size is None:
        length_lp = log_poisson(len(ants), hyper.lam)
    else:
        length_lp = log_list_prior(len(ants), hyper.lam, pool_size)
    return length_lp + sum(marg(int(n), int(p)) for n, p in counts)


# --------------------------------------------------------------------------- #
# search

def _restart(obj: _Objective, hyper: FrlHyper, restart: int):
    rng = random.Random(f"frl:{hyper.seed}:{restart}")
    P = len(obj.pool)
    # random feasible start: drop trailing rules until the list falls
    length = min(P, int(rng.expovariate(1.0 / hyper.lam)))
    state = tuple(rng.sample(range(P), length))
    while not obj(state)[1]:
        state = state[:-1]
    cur, _ = obj(state)
    best, best_score = state, cur

    # Metropolis-Hastings warm start restricted to falling lists
    for _ in range(hyper.warm_iterations):
        new, log_q = propose(state, P, rng)
        s, ok = obj(new)
        if not ok:
            continue
        delta = s - cur + log_q
        if delta >= 0 or rng.random() < math.exp(delta):
            state, cur = new, s
            if cur > best_score:
                best, best_score = state, cur

    # annealing; pooled (infeasible) states may be visited but never returned
    temp = hyper.t0
    for _ in range(hyper.iterations):
        new, _ = propose(state, P, rng)
        s, ok = obj(new)
        delta = s - cur
        if delta >= 0 or rng.random() < math.exp(delta / temp):
            state, cur = new, s
            if ok and cur > best_score:
                best, best_score = state, cur
        temp = max(hyper.t_min, temp * hyper.decay)
    return best, best_score


def frl_fit(ds: CategoricalDataset, pool, hyper: FrlHyper = FrlHyper()) -> FallingRuleList:
    """Best falling list over all restarts (ties keep the earliest restart)."""
    if not isinstance(pool, RulePool):
        pool = RulePool([getattr(a, "antecedent", a) for a in pool], ds)
    if len(pool) == 0:
        raise ValueError("antecedent pool is empty")
    obj = _Objective(pool, hyper)
    best, best_score = None, -math.inf
    for r in range(hyper.restarts):
        state, score = _restart(obj, hyper, r)
        if score > best_score:
            best, best_score = state, score
    ants = tuple(pool.antecedents[i] for i in best)
    return FallingRuleList.from_data(ants, ds, hyper.alpha, project=False)


@dataclass
class FallingRuleListClassifier:
    """Mine positive-leaning antecedents and fit a falling list over them."""

    hyper: FrlHyper = field(default_factory=FrlHyper)
    min_support: float = 0.10
    min_confidence: float = 0.80
    max_cardinality: int = 2
    positive_only: bool = True
    threshold: float = 0.5
    rule_list: FallingRuleList | None = None
    schema: FeatureSchema | None = None
    n_antecedents: int = 0

    def fit(self, ds: CategoricalDataset) -> "FallingRuleListClassifier":
        mined = mine_antecedents(ds, self.min_support, self.min_confidence, self.max_cardinality)
        if self.positive_only:
            mined = [r for r in mined if r.majority == 1]
        self.n_antecedents = len(mined)
        self.schema = ds.schema
        if mined:
            self.rule_list = frl_fit(ds, [r.antecedent for r in mined], self.hyper)
        else:
            self.rule_list = FallingRuleList.from_data((), ds, self.hyper.alpha)
        return self

    def predict_proba(self, ds: CategoricalDataset) -> np.ndarray:
        if self.rule_list is None:
            raise RuntimeError("model is not fitted")
        return self.rule_list.predict_proba(ds)

    def predict(self, ds: CategoricalDataset) -> np.ndarray:
        return (self.predict_proba(ds) >= self.threshold).astype(np.int64)

    def render(self) -> str:
        return self.rule_list.render(self.schema)

    def to_dict(self) -> dict:
        h = self.hyper
        return {
            "model": "frl",
            "schema": self.schema.to_dict(),
            "hyper": {"lam": h.lam, "alpha": list(h.alpha), "iterations": h.iterations,
                      "warm_iterations": h.warm_iterations, "t0": h.t0, "decay": h.decay,
                      "t_min": h.t_min, "restarts": h.restarts, "seed": h.seed},
            "mining": {"min_support": self.min_support, "min_confidence": self.min_confidence,
                       "max_cardinality": self.max_cardinality, "positive_only": self.positive_only,
                       "n_antecedents": self.n_antecedents},
            "threshold": self.threshold,
            "rules": self.rule_list.to_json(self.schema),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FallingRuleListClassifier":
        schema = FeatureSchema.from_dict(doc["schema"])
        h = dict(doc["hyper"])
        h["alpha"] = tuple(h["alpha"])
        m = doc.get("mining", {})
        model = cls(FrlHyper(**h), m.get("min_support", 0.10), m.get("min_confidence", 0.80),
                    m.get("max_cardinality", 2), m.get("positive_only", True), doc.get("threshold", 0.5))
        model.schema = schema
        model.n_antecedents = m.get("n_antecedents", 0)
        model.rule_list = FallingRuleList.from_json(doc["rules"], schema)
        return model
