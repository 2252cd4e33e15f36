"""Machinery shared by the rule-list learners: bitset pools, priors, proposals, rendering."""

from __future__ import annotations

import math
import random
from typing import Sequence

import numpy as np
from scipy.special import betaln

from .data import CategoricalDataset, FeatureSchema
from .rulemine import Itemset, coverage, describe

MOVES = ("insert", "remove", "swap")
MOVE_WEIGHTS = (0.45, 0.45, 0.10)


def to_bits(mask: np.ndarray) -> int:
    """Pack a boolean row mask into a Python int (bit i = row i)."""
    return int.from_bytes(np.packbits(np.asarray(mask, dtype=bool), bitorder="little").tobytes(), "little")


class RulePool:
    """Candidate antecedents with their row coverage stored as int bitsets."""

    def __init__(self, antecedents: Sequence[Itemset], ds: CategoricalDataset | None):
        antecedents = tuple(tuple(a) for a in antecedents)
        if len(set(antecedents)) != len(antecedents):
            raise ValueError("duplicate antecedents in pool")
        self.antecedents = antecedents
        self.index = {a: i for i, a in enumerate(antecedents)}
        self.cards = [len(a) for a in antecedents]
        if ds is None:
            # data-free pool, enough for prior computations
            self.n, self.full, self.pos = 0, 0, 0
            self.masks = [0] * len(antecedents)
            return
        self.n = len(ds)
        self.full = (1 << self.n) - 1
        self.pos = to_bits(ds.label == 1)
        self.masks = [to_bits(coverage(a, ds)) for a in antecedents]

    def __len__(self):
        return len(self.antecedents)

    def lookup(self, antecedents: Sequence[Itemset]) -> tuple[int, ...]:
        try:
            return tuple(self.index[tuple(a)] for a in antecedents)
        except KeyError as exc:
            raise ValueError(f"antecedent {exc.args[0]} is not in the pool") from None

    def counts(self, state: Sequence[int]) -> list[tuple[int, int]]:
        """First-match (n_neg, n_pos) per rule, default rule last."""
        remaining = self.full
        pos = self.pos
        out = []
        for r in state:
            cap = self.masks[r] & remaining
            remaining &= ~cap
            n = cap.bit_count()
            p = (cap & pos).bit_count()
            out.append((n - p, p))
        n = remaining.bit_count()
        p = (remaining & pos).bit_count()
        out.append((n - p, p))
        return out


def capture_counts(antecedents: Sequence[Itemset], ds: CategoricalDataset) -> np.ndarray:
    """(L+1, 2) array of first-match (n_neg, n_pos), default rule last."""
    idx = match_index(antecedents, ds)
    out = np.zeros((len(antecedents) + 1, 2), dtype=np.int64)
    np.add.at(out, (idx, ds.label), 1)
    return out


def match_index(antecedents: Sequence[Itemset], ds: CategoricalDataset) -> np.ndarray:
    """Index of the first rule each row satisfies (len(antecedents) for the default)."""
    idx = np.full(len(ds), len(antecedents), dtype=np.int64)
    free = np.ones(len(ds), dtype=bool)
    for k, a in enumerate(antecedents):
        hit = free & coverage(a, ds)
        idx[hit] = k
        free &= ~hit
    return idx


# --------------------------------------------------------------------------- #
# priors

def log_poisson(k: int, lam: float) -> float:
    return k * math.log(lam) - lam - math.lgamma(k + 1)


def log_trunc_poisson(k: int, lam: float, support: Sequence[int]) -> float:
    """log P(k) for Poisson(lam) restricted to the integers in ``support``."""
    logs = [log_poisson(j, lam) for j in support]
    m = max(logs)
    return log_poisson(k, lam) - (m + math.log(sum(math.exp(v - m) for v in logs)))


def sample_trunc_poisson(rng: random.Random, lam: float, support: Sequence[int]) -> int:
    support = list(support)
    logs = [log_poisson(j, lam) for j in support]
    m = max(logs)
    w = [math.exp(v - m) for v in logs]
    return rng.choices(support, weights=w)[0]


def dirichlet_marginal(n_neg: int, n_pos: int, alpha: tuple[float, float]) -> float:
    """log B(n_neg + a0, n_pos + a1) - log B(a0, a1)."""
    a0, a1 = alpha
    return float(betaln(n_neg + a0, n_pos + a1) - betaln(a0, a1))


class MarginalTable:
    """Memoised Beta-Bernoulli log marginals for integer counts."""

    def __init__(self, alpha):
        self.alpha = (float(alpha[0]), float(alpha[1]))
        self._base = math.lgamma(self.alpha[0]) + math.lgamma(self.alpha[1]) - math.lgamma(sum(self.alpha))
        self._cache: dict = {}

    def __call__(self, n_neg: int, n_pos: int) -> float:
        key = (n_neg, n_pos)
        v = self._cache.get(key)
        if v is None:
            a0, a1 = self.alpha
            v = (math.lgamma(n_neg + a0) + math.lgamma(n_pos + a1)
                 - math.lgamma(n_neg + n_pos + a0 + a1) - self._base)
            self._cache[key] = v
        return v


# --------------------------------------------------------------------------- #
# proposals

def _move_probs(length: int, pool_size: int) -> dict[str, float]:
    feasible = {
        "insert": length < pool_size,
        "remove": length > 0,
        "swap": length >= 2,
    }
    total = sum(w for m, w in zip(MOVES, MOVE_WEIGHTS) if feasible[m])
    return {m: (w / total if feasible[m] else 0.0) for m, w in zip(MOVES, MOVE_WEIGHTS)}


def propose(state: tuple[int, ...], pool_size: int, rng: random.Random):
    """Random insert / remove / swap neighbour.

    Returns ``(new_state, log q(state | new) - log q(new | state))``.
    """
    L = len(state)
    probs = _move_probs(L, pool_size)
    u = rng.random()
    if u < probs["insert"]:
        move = "insert"
    elif u < probs["insert"] + probs["remove"]:
        move = "remove"
    else:
        move = "swap"

    if move == "insert":
        used = set(state)
        k = rng.randrange(pool_size - L)
        # k-th unused pool index
        for r in range(pool_size):
            if r in used:
                continue
            if k == 0:
                break
            k -= 1
        at = rng.randrange(L + 1)
        new = state[:at] + (r,) + state[at:]
        back = _move_probs(L + 1, pool_size)["remove"]
        return new, math.log(back) - math.log(probs["insert"]) + math.log(pool_size - L)
    if move == "remove":
        at = rng.randrange(L)
        new = state[:at] + state[at + 1:]
        back = _move_probs(L - 1, pool_size)["insert"]
        return new, math.log(back) - math.log(pool_size - L + 1) - math.log(probs["remove"])
    i, j = sorted(rng.sample(range(L), 2))
    lst = list(state)
    lst[i], lst[j] = lst[j], lst[i]
    return tuple(lst), 0.0


# --------------------------------------------------------------------------- #
# rendering

OUTCOME = "probability of survival > 1 yr"


def rule_conditions(antecedents: Sequence[Itemset], schema: FeatureSchema) -> list[str]:
    """Text of each rule's IF clause, default rule last."""
    if not antecedents:
        return ["IF TRUE"]
    lines = []
    for k, a in enumerate(antecedents):
        lines.append(("IF " if k == 0 else "ELSE IF ") + describe(a, schema))
    lines.append("ELSE")
    return lines


def pct(x: float) -> str:
    return f"{100 * x:.0f}%"
