"""Black-box comparators and post-hoc explanation tools.

The random forest is grown with scikit-learn and then copied into plain
arrays so it can be serialised and evaluated without the library object.
Logistic regression, permutation importance, forward selection and the
local surrogate are implemented here directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import CategoricalDataset, FeatureSchema, one_hot_encode
from .evaluation import accuracy, auroc, stratified_folds

TREE_GRID = (100, 200, 500)
C_GRID = tuple(2.0 ** k for k in range(-4, 5))


def _check_two_classes(y):
    if len(np.unique(y)) < 2:
        raise ValueError("labels contain a single class")


# --------------------------------------------------------------------------- #
# random forest

@dataclass
class Tree:
    left: np.ndarray
    right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    # class-1 frequency at each node (only read at leaves)
    pos_rate: np.ndarray

    def leaf_rate(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.left[node] >= 0
        while active.any():
            r = rows[active]
            nd = node[r]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active[r] = self.left[node[r]] >= 0
        return self.pos_rate[node]

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("left", "right", "feature", "threshold", "pos_rate")}

    @classmethod
    def from_dict(cls, doc: dict) -> "Tree":
        return cls(np.asarray(doc["left"], dtype=np.int64), np.asarray(doc["right"], dtype=np.int64),
                   np.asarray(doc["feature"], dtype=np.int64), np.asarray(doc["threshold"], dtype=float),
                   np.asarray(doc["pos_rate"], dtype=float))


@dataclass
class ForestModel:
    trees: list[Tree]
    seed: int
    max_features: int

    @property
    def tree_count(self) -> int:
        return len(self.trees)

    def truncated(self, k: int) -> "ForestModel":
        return ForestModel(self.trees[:k], self.seed, self.max_features)

    def predict_proba(self, X) -> np.ndarray:
        """Class-1 probability: mean over trees of the leaf class-1 frequency."""
        X = np.asarray(X, dtype=float)
        total = np.zeros(len(X))
        for t in self.trees:
            total += t.leaf_rate(X)
        return total / len(self.trees)

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int64)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "max_features": self.max_features, "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, doc: dict) -> "ForestModel":
        return cls([Tree.from_dict(t) for t in doc["trees"]], doc["seed"], doc["max_features"])


def _grow_forest(X, y, tree_count: int, seed: int, threads: int = 1) -> ForestModel:
    from sklearn.ensemble import RandomForestClassifier

    rf = RandomForestClassifier(n_estimators=tree_count, criterion="gini", max_features="sqrt",
                                bootstrap=True, random_state=seed, n_jobs=threads)
    rf.fit(X, y)
    pos = list(rf.classes_).index(1)
    trees = []
    for est in rf.estimators_:
        t = est.tree_
        value = t.value[:, 0, :]
        rate = value[:, pos] / value.sum(axis=1)
        trees.append(Tree(t.children_left.astype(np.int64), t.children_right.astype(np.int64),
                          t.feature.astype(np.int64), t.threshold.astype(float), rate.astype(float)))
    return ForestModel(trees, seed, max(1, int(math.floor(math.sqrt(X.shape[1])))))


def rf_fit(X, y, tree_count_grid: Sequence[int] = TREE_GRID, seed: int = 0, folds: int = 3,
           threads: int = 1) -> tuple[ForestModel, dict[int, float]]:
    """Random forest with the tree count chosen by cross-validated accuracy.

    Within one fold, forests of every size come from a single forest of the
    largest size truncated to its first k trees; with a shared seed these
    are exactly the forests a smaller ``n_estimators`` would grow. Ties in
    accuracy go to fewer trees.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    _check_two_classes(y)
    grid = sorted(set(int(k) for k in tree_count_grid))
    scores = {k: [] for k in grid}
    if len(grid) > 1:
        for test in stratified_folds(y, folds, seed):
            train = np.setdiff1d(np.arange(len(y)), test)
            if len(np.unique(y[train])) < 2:
                continue
            big = _grow_forest(X[train], y[train], grid[-1], seed, threads)
            for k in grid:
                scores[k].append(accuracy(big.truncated(k).predict(X[test]), y[test]))
    means = {k: float(np.mean(v)) if v else float("nan") for k, v in scores.items()}
    finite = {k: v for k, v in means.items() if not math.isnan(v)}
    best = min(finite, key=lambda k: (-finite[k], k)) if finite else grid[0]
    return _grow_forest(X, y, best, seed, threads), means


# --------------------------------------------------------------------------- #
# logistic regression

@dataclass
class LogisticModel:
    weights: np.ndarray
    intercept: float
    C: float
    iterations: int = 0

    def decision(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.weights + self.intercept

    def predict_proba(self, X) -> np.ndarray:
        z = self.decision(X)
        return 0.5 * (1.0 + np.tanh(0.5 * z))

    def predict(self, X) -> np.ndarray:
        return (self.decision(X) >= 0).astype(np.int64)

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "intercept": self.intercept, "C": self.C}

    @classmethod
    def from_dict(cls, doc: dict) -> "LogisticModel":
        return cls(np.asarray(doc["weights"], dtype=float), float(doc["intercept"]), float(doc["C"]))


def lr_objective(w: np.ndarray, b: float, X, y, C: float) -> float:
    """Mean Bernoulli log-likelihood minus ||w||^2 / (2C)."""
    z = np.asarray(X, dtype=float) @ w + b
    ll = np.mean(y * z - np.logaddexp(0.0, z))
    return float(ll - 0.5 * (w @ w) / C)


def lr_fit_single(X, y, C: float, tol: float = 1e-6, max_iter: int = 200) -> LogisticModel:
    """Newton ascent with backtracking line search on :func:`lr_objective`."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    A = np.column_stack([X, np.ones(n)])
    theta = np.zeros(p + 1)
    pen = np.full(p + 1, 1.0 / C)
    pen[-1] = 0.0

    def value(th):
        z = A @ th
        return float(np.mean(y * z - np.logaddexp(0.0, z)) - 0.5 * np.sum(pen * th * th))

    obj = value(theta)
    for it in range(1, max_iter + 1):
        z = A @ theta
        prob = 0.5 * (1.0 + np.tanh(0.5 * z))
        grad = A.T @ (y - prob) / n - pen * theta
        gnorm = float(np.linalg.norm(grad))
        if gnorm < tol:
            return LogisticModel(theta[:-1].copy(), float(theta[-1]), float(C), it - 1)
        H = (A * (prob * (1 - prob))[:, None]).T @ A / n + np.diag(pen)
        try:
            step = np.linalg.solve(H + 1e-12 * np.eye(p + 1), grad)
        except np.linalg.LinAlgError:
            step = grad
        scale = 1.0
        while scale > 1e-12:
            cand = theta + scale * step
            new = value(cand)
            if new >= obj + 1e-4 * scale * (grad @ step):
                break
            scale *= 0.5
        else:
            cand, new = theta, obj
        if np.array_equal(cand, theta):
            break
        theta, obj = cand, new
    raise RuntimeError(f"logistic regression did not converge (gradient norm {gnorm:.3g})")


def lr_fit(X, y, C_grid: Sequence[float] = C_GRID, seed: int = 0,
           folds: int = 3) -> tuple[LogisticModel, dict[float, float]]:
    """L2 logistic regression with C picked by cross-validated accuracy (ties: larger C)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    _check_two_classes(y)
    grid = sorted(float(c) for c in C_grid)
    means: dict[float, float] = {}
    if len(grid) == 1:
        means[grid[0]] = float("nan")
    else:
        splits = stratified_folds(y, folds, seed)
        for C in grid:
            accs = []
            try:
                for test in splits:
                    train = np.setdiff1d(np.arange(len(y)), test)
                    accs.append(accuracy(lr_fit_single(X[train], y[train], C).predict(X[test]), y[test]))
                means[C] = float(np.mean(accs))
            except RuntimeError:
                means[C] = float("nan")
    finite = {c: v for c, v in means.items() if not math.isnan(v)}
    best = max(finite, key=lambda c: (finite[c], c)) if finite else grid[-1]
    return lr_fit_single(X, y, best), means


# --------------------------------------------------------------------------- #
# classifiers on categorical datasets

@dataclass
class RandomForestClassifier:
    tree_count_grid: tuple = TREE_GRID
    seed: int = 0
    threads: int = 1
    forest: ForestModel | None = None
    schema: FeatureSchema | None = None
    cv_scores: dict = field(default_factory=dict)

    def fit(self, ds: CategoricalDataset) -> "RandomForestClassifier":
        X = one_hot_encode(ds).values
        self.forest, self.cv_scores = rf_fit(X, ds.label, self.tree_count_grid, self.seed, threads=self.threads)
        self.schema = ds.schema
        return self

    def predict_proba(self, ds: CategoricalDataset) -> np.ndarray:
        return self.forest.predict_proba(one_hot_encode(ds).values)

    def predict(self, ds: CategoricalDataset) -> np.ndarray:
        return (self.predict_proba(ds) >= 0.5).astype(np.int64)

    def to_dict(self) -> dict:
        return {"model": "rf", "schema": self.schema.to_dict(), "tree_count_grid": list(self.tree_count_grid),
                "forest": self.forest.to_dict()}

    @classmethod
    def from_dict(cls, doc: dict) -> "RandomForestClassifier":
        forest = ForestModel.from_dict(doc["forest"])
        m = cls(tuple(doc.get("tree_count_grid", TREE_GRID)), forest.seed)
        m.forest = forest
        m.schema = FeatureSchema.from_dict(doc["schema"])
        return m


@dataclass
class LogisticClassifier:
    C_grid: tuple = C_GRID
    seed: int = 0
    model: LogisticModel | None = None
    schema: FeatureSchema | None = None
    cv_scores: dict = field(default_factory=dict)

    def fit(self, ds: CategoricalDataset) -> "LogisticClassifier":
        self.model, self.cv_scores = lr_fit(one_hot_encode(ds).values, ds.label, self.C_grid, self.seed)
        self.schema = ds.schema
        return self

    def predict_proba(self, ds: CategoricalDataset) -> np.ndarray:
        return self.model.predict_proba(one_hot_encode(ds).values)

    def predict(self, ds: CategoricalDataset) -> np.ndarray:
        return self.model.predict(one_hot_encode(ds).values)

    def to_dict(self) -> dict:
        return {"model": "lr", "schema": self.schema.to_dict(), "columns": self.schema.column_names(),
                "C_grid": list(self.C_grid), "logistic": self.model.to_dict()}

    @classmethod
    def from_dict(cls, doc: dict) -> "LogisticClassifier":
        m = cls(tuple(doc.get("C_grid", C_GRID)))
        m.model = LogisticModel.from_dict(doc["logistic"])
        m.schema = FeatureSchema.from_dict(doc["schema"])
        return m


# --------------------------------------------------------------------------- #
# importance and selection

def permutation_importance(predict_proba: Callable, X, y, groups: Sequence[Sequence[int]] | None = None,
                           repeats: int = 10, seed: int = 0) -> list[dict]:
    """Drop in AUROC when each column group is shuffled (jointly, across rows).

    ``groups`` defaults to one group per column; pass one-hot feature groups
    so that every shuffled row remains a valid encoding.
    """
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    groups = [list(g) for g in groups] if groups is not None else [[j] for j in range(X.shape[1])]
    base = auroc(predict_proba(X), y)
    rng = np.random.default_rng(seed)
    out = []
    for g in groups:
        drops = []
        for _ in range(repeats):
            Xp = X.copy()
            Xp[:, g] = X[rng.permutation(len(X))][:, g]
            drops.append(base - auroc(predict_proba(Xp), y))
        out.append({"columns": g, "mean": float(np.mean(drops)), "std": float(np.std(drops))})
    return out


def sequential_feature_selection(X, y, k: int = 10, folds: int = 5, seed: int = 0,
                                 tree_count: int = 100, threads: int = 1) -> list[int]:
    """Greedy forward selection by cross-validated random-forest AUROC.

    Returns ``k`` column indices in the order they were added. Candidates
    with equal scores resolve to the lower column index.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if k > X.shape[1]:
        raise ValueError(f"k={k} exceeds the {X.shape[1]} available columns")
    splits = stratified_folds(y, folds, seed)
    chosen: list[int] = []
    for _ in range(k):
        best, best_score = None, -np.inf
        for j in range(X.shape[1]):
            if j in chosen:
                continue
            cols = chosen + [j]
            scores = []
            for test in splits:
                train = np.setdiff1d(np.arange(len(y)), test)
                forest = _grow_forest(X[train][:, cols], y[train], tree_count, seed, threads)
                scores.append(auroc(forest.predict_proba(X[test][:, cols]), y[test]))
            score = float(np.mean(scores))
            if score > best_score + 1e-12:
                best, best_score = j, score
        chosen.append(best)
    return chosen


# --------------------------------------------------------------------------- #
# local surrogate

@dataclass
class LocalExplanation:
    instance: int | None
    weights: dict[str, float]
    top: list[dict]
    intercept: float
    fidelity: float

    def to_dict(self) -> dict:
        return {"instance": self.instance, "top": self.top, "intercept": self.intercept,
                "fidelity_r2": self.fidelity, "weights": self.weights}


def local_surrogate_explain(predict_proba: Callable, instance: Sequence[int], background: CategoricalDataset,
                            n_samples: int = 5000, kernel_width: float = 0.25, seed: int = 0,
                            ridge: float = 1e-3, top: int = 10, instance_id: int | None = None) -> LocalExplanation:
    """Explain one prediction with a proximity-weighted linear fit.

    Each perturbation redraws every feature, with probability 1/2, from the
    category frequencies of ``background``. Samples are weighted by
    ``exp(-d^2 / kernel_width^2)``, ``d`` being the fraction of features that
    differ from ``instance``. ``predict_proba`` receives one-hot rows over all
    categories and returns class-1 probabilities; the surrogate is fitted in
    that same one-hot space.
    """
    schema = background.schema
    instance = np.asarray(instance, dtype=np.int64)
    n_feat = len(schema)
    rng = np.random.default_rng(seed)
    rows = np.tile(instance, (n_samples, 1))
    redraw = rng.random((n_samples, n_feat)) < 0.5
    for j in range(n_feat):
        freq = np.bincount(background.rows[:, j], minlength=schema.sizes[j]).astype(float)
        freq /= freq.sum()
        draws = rng.choice(schema.sizes[j], size=n_samples, p=freq)
        rows[:, j] = np.where(redraw[:, j], draws, rows[:, j])
    rows[0] = instance
    if np.all(rows == instance):
        raise ValueError("every perturbed sample equals the instance; nothing to fit")
    offsets = np.concatenate([[0], np.cumsum(schema.sizes)[:-1]]).astype(np.int64)
    X = np.zeros((n_samples, sum(schema.sizes)))
    X[np.arange(n_samples)[:, None], rows + offsets] = 1.0
    target = np.asarray(predict_proba(X), dtype=float)
    dist = np.mean(rows != instance, axis=1)
    w = np.exp(-(dist ** 2) / kernel_width ** 2)

    A = np.column_stack([np.ones(n_samples), X])
    pen = np.full(A.shape[1], ridge)
    pen[0] = 0.0
    Aw = A * w[:, None]
    coef = np.linalg.solve(A.T @ Aw + np.diag(pen), Aw.T @ target)
    fitted = A @ coef
    ybar = np.sum(w * target) / np.sum(w)
    ss_tot = float(np.sum(w * (target - ybar) ** 2))
    ss_res = float(np.sum(w * (target - fitted) ** 2))
    fidelity = 1.0 - ss_res / ss_tot if ss_tot > 1e-300 else 0.0

    names = schema.column_names()
    weights = coef[1:]
    order = sorted(range(len(names)), key=lambda j: (-abs(weights[j]), j))[:top]
    ranked = [{"column": names[j], "weight": float(weights[j]),
               "direction": "positive" if weights[j] > 0 else ("negative" if weights[j] < 0 else "none")}
              for j in order]
    return LocalExplanation(instance_id, {n: float(v) for n, v in zip(names, weights)}, ranked,
                            float(coef[0]), float(fidelity))
