"""Bayesian Rule Lists.

A decision list is an ordered sequence of antecedents from a pre-mined pool,
closed by a default rule. The prior draws the list length from a truncated
Poisson, then for each rule a cardinality (truncated Poisson over the
cardinalities still available) and an unused antecedent of that cardinality
uniformly. Each rule's label counts get a Dirichlet(alpha) consequent, which
integrates out to a Beta-function marginal. The posterior over lists is
sampled by Metropolis-Hastings with insert / remove / swap moves.
"""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import beta as beta_dist

from .data import CategoricalDataset, FeatureSchema
from .rulelist import (OUTCOME, MarginalTable, RulePool, capture_counts, dirichlet_marginal,
                       log_trunc_poisson, match_index, pct, propose, rule_conditions,
                       sample_trunc_poisson)
from .rulemine import Itemset, itemset_from_json, itemset_to_json, mine_antecedents


@dataclass(frozen=True)
class BrlHyper:
    lam: float = 3.0
    eta: float = 1.0
    alpha: tuple[float, float] = (1.0, 1.0)
    chains: int = 3
    iterations: int = 30000
    burn_in: int = 15000
    thin: int = 10
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        if self.lam <= 0 or self.eta <= 0 or min(self.alpha) <= 0:
            raise ValueError("lam, eta and alpha must be positive")
        if self.chains < 1 or self.thin < 1 or not 0 <= self.burn_in < self.iterations:
            raise ValueError("need chains >= 1, thin >= 1 and 0 <= burn_in < iterations")


@dataclass(frozen=True, eq=False)
class DecisionList:
    """Ordered antecedents with first-match label counts (default rule last)."""

    antecedents: tuple[Itemset, ...]
    counts: np.ndarray
    alpha: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "antecedents", tuple(tuple(a) for a in self.antecedents))
        counts = np.asarray(self.counts, dtype=np.int64).reshape(-1, 2)
        if counts.shape[0] != len(self.antecedents) + 1:
            raise ValueError("need one count pair per rule plus the default")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def fit_counts(cls, antecedents, ds: CategoricalDataset, alpha=(1.0, 1.0)) -> "DecisionList":
        return cls(tuple(antecedents), capture_counts(antecedents, ds), tuple(alpha))

    def __len__(self):
        return len(self.antecedents)

    @property
    def mean_cardinality(self) -> float:
        return float(np.mean([len(a) for a in self.antecedents])) if self.antecedents else 0.0

    @property
    def probabilities(self) -> np.ndarray:
        a0, a1 = self.alpha
        n_neg, n_pos = self.counts[:, 0], self.counts[:, 1]
        return (n_pos + a1) / (n_neg + n_pos + a0 + a1)

    def intervals(self, level: float = 0.95) -> np.ndarray:
        """Central credible interval of each rule's Beta posterior, shape (L+1, 2)."""
        a0, a1 = self.alpha
        tail = (1 - level) / 2
        a = self.counts[:, 1] + a1
        b = self.counts[:, 0] + a0
        return np.column_stack([beta_dist.ppf(tail, a, b), beta_dist.ppf(1 - tail, a, b)])

    def rule_index(self, ds: CategoricalDataset) -> np.ndarray:
        return match_index(self.antecedents, ds)

    def predict_proba(self, ds: CategoricalDataset) -> np.ndarray:
        return self.probabilities[self.rule_index(ds)]

    def predict_row(self, row: Sequence[int]) -> tuple[float, tuple[float, float]]:
        """Posterior mean and 95% interval for one row of category indices."""
        k = len(self.antecedents)
        for i, a in enumerate(self.antecedents):
            if all(row[f] == c for f, c in a):
                k = i
                break
        lo, hi = self.intervals()[k]
        return float(self.probabilities[k]), (float(lo), float(hi))

    def to_json(self, schema: FeatureSchema) -> list[dict]:
        probs, ci = self.probabilities, self.intervals()
        items = [itemset_to_json(a, schema) for a in self.antecedents] + [[]]
        return [
            {"items": it, "n_neg": int(c[0]), "n_pos": int(c[1]),
             "prob": float(p), "ci_low": float(lo), "ci_high": float(hi)}
            for it, c, p, (lo, hi) in zip(items, self.counts, probs, ci)
        ]

    @classmethod
    def from_json(cls, rules: Sequence[dict], schema: FeatureSchema, alpha=(1.0, 1.0)) -> "DecisionList":
        ants = tuple(itemset_from_json(r["items"], schema) for r in rules[:-1])
        counts = [(r["n_neg"], r["n_pos"]) for r in rules]
        return cls(ants, counts, tuple(alpha))

    def render(self, schema: FeatureSchema) -> str:
        """One line per rule: ``IF ... THEN probability of survival > 1 yr: NN% (LL%, UU%)``."""
        lines = []
        for cond, p, (lo, hi) in zip(rule_conditions(self.antecedents, schema),
                                     self.probabilities, self.intervals()):
            head = cond if cond == "ELSE" else cond + " THEN"
            lines.append(f"{head} {OUTCOME}: {pct(p)} ({pct(lo)}, {pct(hi)})")
        return "\n".join(lines)


# --------------------------------------------------------------------------- #
# posterior

class _Scorer:
    """Cached log prior / log likelihood of index-tuple lists over a pool."""

    def __init__(self, pool: RulePool, hyper: BrlHyper):
        self.pool = pool
        self.hyper = hyper
        P = len(pool)
        self.card_counts = Counter(pool.cards)
        self._len_lp = [log_trunc_poisson(k, hyper.lam, range(P + 1)) for k in range(P + 1)]
        self._card_lp: dict = {}
        self._marg = MarginalTable(hyper.alpha)
        self._cache: dict = {}

    def log_prior(self, state: Sequence[int]) -> float:
        if len(state) > len(self.pool):
            return -math.inf
        lp = self._len_lp[len(state)]
        remaining = dict(self.card_counts)
        for r in state:
            c = self.pool.cards[r]
            avail = tuple(sorted(k for k, v in remaining.items() if v > 0))
            key = (c, avail)
            v = self._card_lp.get(key)
            if v is None:
                v = log_trunc_poisson(c, self.hyper.eta, avail)
                self._card_lp[key] = v
            lp += v - math.log(remaining[c])
            remaining[c] -= 1
        return lp

    def log_likelihood(self, state: Sequence[int]) -> float:
        return sum(self._marg(n0, n1) for n0, n1 in self.pool.counts(state))

    def __call__(self, state: tuple[int, ...]) -> float:
        v = self._cache.get(state)
        if v is None:
            v = self.log_prior(state) + self.log_likelihood(state)
            self._cache[state] = v
        return v

    def sample_prior(self, rng: random.Random) -> tuple[int, ...]:
        P = len(self.pool)
        length = sample_trunc_poisson(rng, self.hyper.lam, range(P + 1))
        unused = set(range(P))
        state = []
        for _ in range(length):
            by_card: dict = {}
            for r in sorted(unused):
                by_card.setdefault(self.pool.cards[r], []).append(r)
            c = sample_trunc_poisson(rng, self.hyper.eta, sorted(by_card))
            r = rng.choice(by_card[c])
            unused.discard(r)
            state.append(r)
        return tuple(state)


def _as_pool(pool, ds: CategoricalDataset | None) -> RulePool:
    if isinstance(pool, RulePool):
        return pool
    return RulePool([getattr(a, "antecedent", a) for a in pool], ds)


def log_prior(antecedents: Sequence[Itemset], pool, hyper: BrlHyper) -> float:
    """Log prior probability of an ordered antecedent list drawn from ``pool``."""
    pool = _as_pool(pool, None)
    return _Scorer(pool, hyper).log_prior(pool.lookup(antecedents))


def log_likelihood(d: DecisionList | Sequence[Itemset], ds: CategoricalDataset, alpha=(1.0, 1.0)) -> float:
    """Sum over rules (default included) of the Dirichlet-multinomial log marginal."""
    ants = d.antecedents if isinstance(d, DecisionList) else tuple(d)
    counts = capture_counts(ants, ds)
    return float(sum(dirichlet_marginal(int(n0), int(n1), tuple(alpha)) for n0, n1 in counts))


@dataclass(eq=False)
class BrlPosterior:
    """Retained MCMC samples: index tuples into ``pool`` with their log posterior."""

    pool: RulePool
    states: list[tuple[int, ...]]
    log_posteriors: list[float]
    hyper: BrlHyper
    counts: dict = field(default_factory=dict, repr=False)

    @property
    def samples(self) -> list[tuple[tuple[Itemset, ...], float]]:
        ants = self.pool.antecedents
        return [(tuple(ants[r] for r in s), lp) for s, lp in zip(self.states, self.log_posteriors)]

    def decision_list(self, state: tuple[int, ...]) -> DecisionList:
        c = self.counts.get(state)
        if c is None:
            c = self.pool.counts(state)
            self.counts[state] = c
        return DecisionList(tuple(self.pool.antecedents[r] for r in state), c, self.hyper.alpha)

    def frequencies(self) -> dict[tuple[Itemset, ...], float]:
        n = len(self.states)
        ants = self.pool.antecedents
        return {tuple(ants[r] for r in s): k / n for s, k in Counter(self.states).items()}


def _chain(scorer: _Scorer, hyper: BrlHyper, chain: int):
    rng = random.Random(f"brl:{hyper.seed}:{chain}")
    P = len(scorer.pool)
    state = scorer.sample_prior(rng)
    cur = scorer(state)
    states, lps = [], []
    for it in range(hyper.iterations):
        new, log_q = propose(state, P, rng)
        lp = scorer(new)
        delta = lp - cur + log_q
        if delta >= 0 or rng.random() < math.exp(delta):
            state, cur = new, lp
        if it >= hyper.burn_in and (it - hyper.burn_in) % hyper.thin == 0:
            states.append(state)
            lps.append(cur)
    return states, lps


def mcmc_sample(ds: CategoricalDataset, pool, hyper: BrlHyper = BrlHyper()) -> BrlPosterior:
    """Metropolis-Hastings over decision lists; chains are concatenated in order."""
    pool = _as_pool(pool, ds)
    if len(pool) == 0:
        raise ValueError("antecedent pool is empty")
    scorer = _Scorer(pool, hyper)
    states, lps = [], []
    for chain in range(hyper.chains):
        s, l = _chain(scorer, hyper, chain)
        states += s
        lps += l
    return BrlPosterior(pool, states, lps, hyper)


def brl_point(posterior: BrlPosterior) -> DecisionList:
    """Highest-posterior sample among those of posterior-mean length and cardinality.

    Length must equal the rounded posterior mean length and average
    cardinality must lie within 0.5 of its posterior mean (taken over the
    non-empty samples). If no sample
    qualifies, the nearest available length is used instead; ties keep the
    first sample encountered.
    """
    states, lps = posterior.states, posterior.log_posteriors
    if not states:
        raise ValueError("posterior has no samples")
    cards = posterior.pool.cards
    lengths = np.array([len(s) for s in states])
    avg_card = np.array([np.mean([cards[r] for r in s]) if s else 0.0 for s in states])
    m = math.floor(lengths.mean() + 0.5)
    # an empty list has no average cardinality; it neither sets nor fails the window
    c = avg_card[lengths > 0].mean() if (lengths > 0).any() else 0.0

    def best(mask):
        idx = np.flatnonzero(mask)
        if not len(idx):
            return None
        k = idx[np.argmax(np.asarray(lps)[idx])]
        return states[k]

    window = (np.abs(avg_card - c) <= 0.5) | (lengths == 0)
    for L in sorted(set(lengths.tolist()), key=lambda L: (abs(L - m), L)):
        pick = best((lengths == L) & window)
        if pick is None:
            pick = best(lengths == L)
        if pick is not None:
            return posterior.decision_list(pick)
    raise AssertionError("unreachable")


# --------------------------------------------------------------------------- #
# estimator

@dataclass
class BayesianRuleList:
    """Mine antecedents, sample the posterior, keep the BRL-point list.

    ``mode="post"`` predicts by averaging the per-sample predictive over all
    retained samples instead of using the point list.
    """

    hyper: BrlHyper = field(default_factory=BrlHyper)
    min_support: float = 0.10
    min_confidence: float = 0.80
    max_cardinality: int = 2
    threshold: float = 0.5
    mode: str = "point"
    decision_list: DecisionList | None = None
    schema: FeatureSchema | None = None
    posterior: BrlPosterior | None = field(default=None, repr=False)
    n_antecedents: int = 0

    def fit(self, ds: CategoricalDataset) -> "BayesianRuleList":
        mined = mine_antecedents(ds, self.min_support, self.min_confidence, self.max_cardinality)
        self.n_antecedents = len(mined)
        self.schema = ds.schema
        if not mined:
            self.posterior = None
            self.decision_list = DecisionList.fit_counts((), ds, self.hyper.alpha)
            return self
        self.posterior = mcmc_sample(ds, [r.antecedent for r in mined], self.hyper)
        self.decision_list = brl_point(self.posterior)
        return self

    def predict_proba(self, ds: CategoricalDataset) -> np.ndarray:
        if self.decision_list is None:
            raise RuntimeError("model is not fitted")
        if self.mode == "post" and self.posterior is not None:
            freq = Counter(self.posterior.states)
            total = sum(freq.values())
            out = np.zeros(len(ds))
            for state, k in freq.items():
                out += (k / total) * self.posterior.decision_list(state).predict_proba(ds)
            return out
        return self.decision_list.predict_proba(ds)

    def predict(self, ds: CategoricalDataset) -> np.ndarray:
        return (self.predict_proba(ds) >= self.threshold).astype(np.int64)

    def render(self) -> str:
        return self.decision_list.render(self.schema)

    def to_dict(self) -> dict:
        h = self.hyper
        return {
            "model": "brl",
            "schema": self.schema.to_dict(),
            "hyper": {"lam": h.lam, "eta": h.eta, "alpha": list(h.alpha), "chains": h.chains,
                      "iterations": h.iterations, "burn_in": h.burn_in, "thin": h.thin, "seed": h.seed},
            "mining": {"min_support": self.min_support, "min_confidence": self.min_confidence,
                       "max_cardinality": self.max_cardinality, "n_antecedents": self.n_antecedents},
            "threshold": self.threshold,
            "rules": self.decision_list.to_json(self.schema),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "BayesianRuleList":
        schema = FeatureSchema.from_dict(doc["schema"])
        h = doc["hyper"]
        hyper = BrlHyper(h["lam"], h["eta"], tuple(h["alpha"]), h["chains"], h["iterations"],
                         h["burn_in"], h["thin"], h["seed"])
        mining = doc.get("mining", {})
        model = cls(hyper, mining.get("min_support", 0.10), mining.get("min_confidence", 0.80),
                    mining.get("max_cardinality", 2), doc.get("threshold", 0.5))
        model.schema = schema
        model.n_antecedents = mining.get("n_antecedents", 0)
        model.decision_list = DecisionList.from_json(doc["rules"], schema, hyper.alpha)
        return model
