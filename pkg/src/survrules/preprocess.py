"""Imputation of missing values and discretisation of continuous columns."""

from __future__ import annotations

import bisect
import math
from collections import Counter
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .data import CategoricalDataset, Feature, FeatureSchema

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class RawColumn:
    """A column that may contain missing entries (``None``)."""

    name: str
    kind: str
    values: tuple
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise ValueError(f"unknown column kind {self.kind!r}")
        object.__setattr__(self, "values", tuple(self.values))
        if self.kind == CONTINUOUS and self.bounds is not None:
            lo, hi = self.bounds
            for v in self.values:
                if v is not None and not lo <= v <= hi:
                    raise ValueError(f"{self.name}: value {v} outside bounds {self.bounds}")

    def __len__(self):
        return len(self.values)

    @property
    def missing(self) -> np.ndarray:
        return np.array([v is None for v in self.values], dtype=bool)

    @property
    def present(self) -> list:
        return [v for v in self.values if v is not None]

    def with_values(self, values) -> "RawColumn":
        return replace(self, values=tuple(values))

    def masked(self, index) -> "RawColumn":
        vals = list(self.values)
        for i in index:
            vals[i] = None
        return self.with_values(vals)


def _mode(values) -> object:
    counts = Counter(values)
    top = max(counts.values())
    return min(v for v, c in counts.items() if c == top)


def impute_baseline(col: RawColumn) -> RawColumn:
    """Fill with the mode (smallest category on ties) or the mean."""
    present = col.present
    if not present:
        raise ValueError(f"{col.name}: every value is missing")
    fill = _mode(present) if col.kind == CATEGORICAL else float(np.mean(present))
    return col.with_values(fill if v is None else v for v in col.values)


def _check_predictors(col: RawColumn, predictors: Sequence[RawColumn]):
    for p in predictors:
        if len(p) != len(col):
            raise ValueError(f"predictor {p.name} has {len(p)} rows, target has {len(col)}")
        if p.missing.any():
            raise ValueError(f"predictor {p.name} has missing values")


def _knn_distances(predictors: Sequence[RawColumn], rows_a, rows_b, normalize: bool) -> np.ndarray:
    dist = np.zeros((len(rows_a), len(rows_b)))
    for p in predictors:
        vals = np.array(p.values, dtype=object)
        a, b = vals[rows_a], vals[rows_b]
        if p.kind == CATEGORICAL:
            dist += a[:, None] != b[None, :]
        else:
            a = a.astype(float)
            b = b.astype(float)
            if normalize:
                allv = np.array(p.values, dtype=float)
                span = allv.max() - allv.min()
                if span > 0:
                    a = (a - allv.min()) / span
                    b = (b - allv.min()) / span
            dist += (a[:, None] - b[None, :]) ** 2
    return dist


def impute_knn(target: RawColumn, predictors: Sequence[RawColumn], k: int = 5,
               normalize: bool = True) -> RawColumn:
    """Fill each missing entry from its ``k`` nearest rows with the target present.

    Distance is a Hamming count over categorical predictors plus squared
    differences over continuous ones (min-max scaled when ``normalize``).
    Equal distances are resolved in favour of the lower row index.
    """
    _check_predictors(target, predictors)
    miss = np.flatnonzero(target.missing)
    donors = np.flatnonzero(~target.missing)
    if len(donors) == 0:
        raise ValueError(f"{target.name}: no complete rows to borrow from")
    if not 1 <= k <= len(donors):
        raise ValueError(f"k={k} must be between 1 and the {len(donors)} complete rows")
    if len(miss) == 0:
        return target
    dist = _knn_distances(predictors, miss, donors, normalize)
    vals = list(target.values)
    for r, i in enumerate(miss):
        nearest = donors[np.lexsort((donors, dist[r]))[:k]]
        neigh = [target.values[j] for j in nearest]
        vals[i] = _mode(neigh) if target.kind == CATEGORICAL else float(np.mean(neigh))
    return target.with_values(vals)


def _design(predictors: Sequence[RawColumn], n: int) -> np.ndarray:
    """Intercept, continuous columns as-is and categorical columns one-hot."""
    rows = np.arange(n)
    cols = [np.ones(len(rows))]
    for p in predictors:
        vals = np.array(p.values, dtype=object)
        if p.kind == CONTINUOUS:
            cols.append(vals[rows].astype(float))
        else:
            for cat in sorted(set(p.values)):
                cols.append((vals[rows] == cat).astype(float))
    return np.column_stack(cols)


RIDGE = 1e-8


def _ridge_solve(A: np.ndarray, Y: np.ndarray) -> np.ndarray:
    # the intercept (column 0) is left unpenalized so constant targets are reproduced exactly
    penalty = RIDGE * np.eye(A.shape[1])
    penalty[0, 0] = 0.0
    gram = A.T @ A + penalty
    coef = np.linalg.solve(gram, A.T @ Y)
    if not np.all(np.isfinite(coef)):
        raise np.linalg.LinAlgError("normal equations are singular")
    return coef


def impute_regression(target: RawColumn, predictors: Sequence[RawColumn]) -> RawColumn:
    """Least-squares fill; categorical targets use one-vs-rest scores and take the argmax."""
    _check_predictors(target, predictors)
    miss = np.flatnonzero(target.missing)
    have = np.flatnonzero(~target.missing)
    A = _design(predictors, len(target))
    if len(have) < len(predictors) + 1:
        raise ValueError(f"{target.name}: {len(have)} complete rows is too few for regression")
    if len(miss) == 0:
        return target
    vals = list(target.values)
    if target.kind == CONTINUOUS:
        y = np.array([target.values[i] for i in have], dtype=float)
        coef = _ridge_solve(A[have], y)
        for i, v in zip(miss, A[miss] @ coef):
            vals[i] = float(v)
    else:
        cats = sorted(set(target.present))
        Y = np.array([[target.values[i] == c for c in cats] for i in have], dtype=float)
        scores = A[miss] @ _ridge_solve(A[have], Y)
        for i, s in zip(miss, scores):
            vals[i] = cats[int(np.argmax(s))]
    return target.with_values(vals)


IMPUTERS: dict[str, Callable] = {
    "baseline": lambda col, preds: impute_baseline(col),
    "knn": lambda col, preds: impute_knn(col, preds),
    "regression": impute_regression,
}


def select_imputer(col: RawColumn, predictors: Sequence[RawColumn],
                   candidates: Sequence[str] = ("baseline", "knn", "regression"),
                   folds: int = 10, seed: int = 0) -> tuple[str, float, list[dict]]:
    """Cross-validated choice of imputer.

    Present entries are hidden one fold at a time and refilled by each
    candidate. Categorical targets are scored by accuracy (higher wins),
    continuous ones by mean squared error (lower wins). Candidates listed
    earlier win ties. A candidate that raises is disqualified.
    """
    have = np.flatnonzero(~col.missing)
    if len(have) < folds:
        raise ValueError(f"{col.name}: need at least {folds} present values")
    perm = np.random.default_rng(seed).permutation(have)
    splits = np.array_split(perm, folds)
    report = []
    for name in candidates:
        fold_scores = []
        try:
            for test in splits:
                filled = IMPUTERS[name](col.masked(test), predictors)
                truth = [col.values[i] for i in test]
                guess = [filled.values[i] for i in test]
                if col.kind == CATEGORICAL:
                    fold_scores.append(float(np.mean([a == b for a, b in zip(truth, guess)])))
                else:
                    fold_scores.append(float(np.mean((np.array(truth, float) - np.array(guess, float)) ** 2)))
        except (ValueError, np.linalg.LinAlgError) as exc:
            report.append({"candidate": name, "fold_scores": [], "mean": None, "chosen": False,
                           "error": str(exc)})
            continue
        report.append({"candidate": name, "fold_scores": fold_scores, "mean": float(np.mean(fold_scores)),
                       "chosen": False})
    scored = [r for r in report if r["mean"] is not None]
    if not scored:
        raise ValueError(f"{col.name}: every imputation candidate failed")
    sign = 1 if col.kind == CATEGORICAL else -1
    best = max(scored, key=lambda r: sign * round(r["mean"], 12))  # max keeps the earliest on ties
    best["chosen"] = True
    return best["candidate"], best["mean"], report


# --------------------------------------------------------------------------- #
# discretisation

DISCRETISERS = ("uniform", "quantile", "kmeans")
BIN_COUNTS = (2, 4, 6, 8, 10, 12)


@dataclass(frozen=True)
class Discretiser:
    method: str
    bin_count: int
    cut_points: tuple[float, ...]

    def __post_init__(self):
        if self.method not in DISCRETISERS:
            raise ValueError(f"unknown discretisation method {self.method!r}")
        if len(self.cut_points) != self.bin_count - 1:
            raise ValueError("need bin_count - 1 cut points")
        if any(b <= a for a, b in zip(self.cut_points, self.cut_points[1:])):
            raise ValueError("cut points must be strictly ascending")

    def labels(self, fmt: str = "{:g}") -> list[str]:
        edges = [fmt.format(c) for c in self.cut_points]
        if not edges:
            return ["all"]
        return [f"< {edges[0]}"] + [f"{a} - {b}" for a, b in zip(edges, edges[1:])] + [f">= {edges[-1]}"]

    def to_dict(self) -> dict:
        return {"method": self.method, "bin_count": self.bin_count, "cut_points": list(self.cut_points)}


def kmeans_1d(values: Sequence[float], k: int) -> list[list[float]]:
    """Exact 1-D k-means by dynamic programming over the sorted values.

    Returns the clusters (each a list of sorted values) of a partition that
    minimises the within-cluster sum of squares. Equal values always share a
    cluster, so the recursion runs over distinct values weighted by count.
    """
    x = np.sort(np.asarray(values, dtype=float))
    uniq, counts = np.unique(x, return_counts=True)
    n = len(uniq)
    if not 1 <= k <= n:
        raise ValueError("k must be between 1 and the number of distinct values")
    w0 = np.concatenate([[0.0], np.cumsum(counts)])
    w1 = np.concatenate([[0.0], np.cumsum(counts * uniq)])
    w2 = np.concatenate([[0.0], np.cumsum(counts * uniq * uniq)])

    cost = np.full((k + 1, n + 1), np.inf)
    back = np.zeros((k + 1, n + 1), dtype=np.int64)
    cost[0, 0] = 0.0
    for c in range(1, k + 1):
        for j in range(c, n + 1):
            i = np.arange(c - 1, j)
            t = w1[j] - w1[i]
            sse = np.maximum(w2[j] - w2[i] - t * t / (w0[j] - w0[i]), 0.0)
            total = cost[c - 1, i] + sse
            arg = int(np.argmin(total))
            cost[c, j], back[c, j] = total[arg], i[arg]
    clusters, j = [], n
    for c in range(k, 0, -1):
        i = back[c, j]
        clusters.append(np.repeat(uniq[i:j], counts[i:j]).tolist())
        j = i
    return clusters[::-1]


def fit_discretiser(values: Sequence[float], method: str, bin_count: int) -> Discretiser:
    x = np.asarray(values, dtype=float)
    if bin_count < 2:
        raise ValueError("bin_count must be at least 2")
    distinct = np.unique(x)
    if method == "uniform":
        if len(distinct) < 2:
            raise ValueError("uniform binning needs a non-degenerate range")
        lo, hi = float(x.min()), float(x.max())
        cuts = [lo + (hi - lo) * i / bin_count for i in range(1, bin_count)]
    elif method in ("quantile", "kmeans"):
        if len(distinct) < bin_count:
            raise ValueError(f"{method} binning into {bin_count} bins needs {bin_count} distinct values, "
                             f"got {len(distinct)}")
        if method == "quantile":
            cuts = np.quantile(x, [i / bin_count for i in range(1, bin_count)]).tolist()
            if any(b <= a for a, b in zip(cuts, cuts[1:])):
                raise ValueError("quantile cuts collide on repeated values")
        else:
            clusters = kmeans_1d(x, bin_count)
            cuts = [(a[-1] + b[0]) / 2 for a, b in zip(clusters, clusters[1:])]
    else:
        raise ValueError(f"unknown discretisation method {method!r}")
    return Discretiser(method, bin_count, tuple(float(c) for c in cuts))


def apply_discretiser(d: Discretiser, value: float) -> int:
    """Bin index; values beyond the fitted range fall in the end bins."""
    return bisect.bisect_right(d.cut_points, value)


def discretise_column(d: Discretiser, values) -> np.ndarray:
    return np.searchsorted(np.asarray(d.cut_points), np.asarray(values, dtype=float), side="right")


def _with_feature(ds: CategoricalDataset, name: str, categories: Sequence[str], codes: np.ndarray,
                  replace_index: int | None) -> CategoricalDataset:
    feats = list(ds.schema.features)
    feat = Feature(name, tuple(categories), "ordinal-categorical")
    rows = np.array(ds.rows)
    if replace_index is None:
        feats.append(feat)
        rows = np.column_stack([rows, codes]) if len(feats) > 1 else codes[:, None]
    else:
        feats[replace_index] = feat
        rows[:, replace_index] = codes
    return CategoricalDataset(FeatureSchema(tuple(feats)), rows, ds.survival_days, ds.event_observed, ds.label)


def add_discretised_feature(ds: CategoricalDataset, name: str, values, d: Discretiser) -> CategoricalDataset:
    """Append (or overwrite, if ``name`` exists) a discretised continuous column."""
    codes = discretise_column(d, values)
    idx = ds.schema.names.index(name) if name in ds.schema.names else None
    return _with_feature(ds, name, d.labels(), codes, idx)


def select_discretiser(ds: CategoricalDataset, name: str, values, methods: Sequence[str] = DISCRETISERS,
                       bin_counts: Sequence[int] = BIN_COUNTS, folds: int = 5, seed: int = 0,
                       learner_factory: Callable | None = None) -> tuple[tuple[str, int] | None, list[dict]]:
    """Pick a binning of ``values`` by cross-validated rule-list accuracy.

    ``ds`` holds the already-categorical features and labels; ``values`` is
    the continuous column. For each (method, bin_count) the column is binned
    on the training folds only, added to ``ds`` as ``name`` and a learner
    (default: BRL with default settings) is scored on the held-out fold.
    Best mean accuracy wins; ties go to fewer bins, then to the earlier
    method in ``uniform, quantile, kmeans``.
    """
    from .brl import BayesianRuleList
    from .evaluation import stratified_folds

    factory = learner_factory or BayesianRuleList
    values = np.asarray(values, dtype=float)
    splits = stratified_folds(ds.label, folds, seed)
    report = []
    for method in methods:
        for bins in bin_counts:
            entry = {"candidate": {"method": method, "bin_count": bins}, "fold_scores": [], "mean": None,
                     "chosen": False}
            try:
                for test in splits:
                    train = np.setdiff1d(np.arange(len(ds)), test)
                    d = fit_discretiser(values[train], method, bins)
                    full = add_discretised_feature(ds, name, values, d)
                    model = factory().fit(full.subset(train))
                    pred = model.predict(full.subset(test))
                    entry["fold_scores"].append(float(np.mean(pred == full.label[test])))
                entry["mean"] = float(np.mean(entry["fold_scores"]))
            except (ValueError, RuntimeError) as exc:
                entry["error"] = str(exc)
                entry["fold_scores"] = []
            report.append(entry)
    scored = [r for r in report if r["mean"] is not None]
    if not scored:
        return None, report
    rank = {m: i for i, m in enumerate(DISCRETISERS)}
    best = min(scored, key=lambda r: (-round(r["mean"], 12), r["candidate"]["bin_count"],
                                      rank.get(r["candidate"]["method"], math.inf)))
    best["chosen"] = True
    return (best["candidate"]["method"], best["candidate"]["bin_count"]), report
