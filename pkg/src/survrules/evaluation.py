"""Classification metrics, stratified folds and the nested cross-validation harness."""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from .data import CategoricalDataset

# --------------------------------------------------------------------------- #
# metrics


def _pair(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return a, b


def accuracy(preds, labels) -> float:
    preds, labels = _pair(preds, labels)
    if len(labels) == 0:
        raise ValueError("no predictions to score")
    return float(np.mean(preds == labels))


def confusion(preds, labels) -> dict[str, int]:
    preds, labels = _pair(preds, labels)
    return {
        "tp": int(np.sum((preds == 1) & (labels == 1))),
        "fp": int(np.sum((preds == 1) & (labels == 0))),
        "fn": int(np.sum((preds == 0) & (labels == 1))),
        "tn": int(np.sum((preds == 0) & (labels == 0))),
    }


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def macro_f1(preds, labels) -> float:
    """Unweighted mean of the two per-class F1 scores (an empty class scores 0)."""
    c = confusion(preds, labels)
    return 0.5 * (_f1(c["tp"], c["fp"], c["fn"]) + _f1(c["tn"], c["fn"], c["fp"]))


def auroc(scores, labels) -> float:
    """Mann-Whitney estimate: P(score of a positive > score of a negative), ties count 1/2."""
    scores, labels = _pair(np.asarray(scores, dtype=float), labels)
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both classes")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def roc_curve(scores, labels) -> list[tuple[float, float]]:
    """(FPR, TPR) at every distinct threshold, from (0, 0) to (1, 1)."""
    scores, labels = _pair(np.asarray(scores, dtype=float), labels)
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC curve needs both classes")
    order = np.argsort(-scores, kind="stable")
    s, p = scores[order], pos[order]
    tp = np.cumsum(p)
    fp = np.cumsum(~p)
    last = np.r_[s[1:] != s[:-1], True]  # end of each block of equal scores
    pts = [(0.0, 0.0)] + [(float(f / n_neg), float(t / n_pos)) for f, t in zip(fp[last], tp[last])]
    return pts


def trapezoid_area(points: Sequence[tuple[float, float]]) -> float:
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2
    return area


# --------------------------------------------------------------------------- #
# folds


def stratified_folds(labels, k: int, seed: int) -> list[np.ndarray]:
    """Split row indices into ``k`` folds, each class dealt round-robin after a seeded shuffle.

    Every fold receives floor or ceil of each class's share.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError("need at least 2 folds")
    if len(labels) < k:
        raise ValueError(f"{len(labels)} rows cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(labels), dtype=np.int64)
    start = 0
    for cls in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        fold_of[idx] = (start + np.arange(len(idx))) % k
        start += len(idx)
    return [np.flatnonzero(fold_of == f) for f in range(k)]


# --------------------------------------------------------------------------- #
# learners


@dataclass
class LearnerSpec:
    """How to build a model for the harness.

    ``factory(params, seed)`` returns an unfitted object with ``fit(ds)``,
    ``predict(ds)`` and, when ``scores`` is true, ``predict_proba(ds)``.
    ``grid`` lists candidate parameter dicts for the inner search.
    """

    name: str
    factory: Callable[[dict, int], Any]
    grid: list[dict] = field(default_factory=lambda: [{}])
    scores: bool = True


class MajorityClassifier:
    def __init__(self):
        self.rate = None

    def fit(self, ds: CategoricalDataset) -> "MajorityClassifier":
        self.rate = float(np.mean(ds.label)) if len(ds) else 0.5
        return self

    def predict_proba(self, ds):
        return np.full(len(ds), self.rate)

    def predict(self, ds):
        return np.full(len(ds), int(self.rate >= 0.5), dtype=np.int64)


def _grid(**axes) -> list[dict]:
    keys = sorted(axes)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(axes[k] for k in keys))]


def learner(name: str, grid: dict[str, Sequence] | None = None, **fixed) -> LearnerSpec:
    """Harness spec for one of ``brl, frl, cox, rf, lr, majority``.

    ``grid`` maps parameter names to candidate values for the inner search
    (default: none, i.e. one candidate). ``fixed`` values are passed through
    unchanged. For brl/frl, keys that belong to the hyperparameter record
    (``lam``, ``eta``, ``iterations``...) are routed there; mining keys
    (``min_support``, ``min_confidence``, ``max_cardinality``) go to the
    estimator.
    """
    cands = _grid(**grid) if grid else [{}]

    if name in ("brl", "frl"):
        from .brl import BayesianRuleList, BrlHyper
        from .frl import FallingRuleListClassifier, FrlHyper

        hyper_cls, est_cls = (BrlHyper, BayesianRuleList) if name == "brl" else (FrlHyper, FallingRuleListClassifier)
        hyper_keys = set(hyper_cls.__dataclass_fields__)

        def factory(params, seed):
            p = {**fixed, **params}
            h = {k: v for k, v in p.items() if k in hyper_keys}
            h["seed"] = seed
            rest = {k: v for k, v in p.items() if k not in hyper_keys}
            return est_cls(hyper=hyper_cls(**h), **rest)
        return LearnerSpec(name, factory, cands)
    if name == "cox":
        from .coxph import CoxClassifier
        return LearnerSpec(name, lambda params, seed: CoxClassifier(seed=seed, **{**fixed, **params}),
                           cands, scores=False)
    if name == "rf":
        from .baselines import RandomForestClassifier
        return LearnerSpec(name, lambda params, seed: RandomForestClassifier(seed=seed, **{**fixed, **params}),
                           cands)
    if name == "lr":
        from .baselines import LogisticClassifier
        return LearnerSpec(name, lambda params, seed: LogisticClassifier(seed=seed, **{**fixed, **params}), cands)
    if name == "majority":
        return LearnerSpec(name, lambda params, seed: MajorityClassifier(), cands)
    raise ValueError(f"unknown learner {name!r}")


# --------------------------------------------------------------------------- #
# nested CV


@dataclass
class EvalReport:
    model: str
    runs: list[dict]
    failed: list[dict]

    METRICS = ("accuracy", "macro_f1", "auroc")

    def summary(self) -> dict[str, dict[str, float | None]]:
        out = {}
        for m in self.METRICS:
            vals = [r[m] for r in self.runs if r.get(m) is not None]
            out[m] = {"mean": float(np.mean(vals)), "std": float(np.std(vals))} if vals else None
        return out

    def to_dict(self) -> dict:
        return {"model": self.model, "n_runs": len(self.runs), "summary": self.summary(),
                "runs": self.runs, "failed": self.failed}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def roc_rows(self) -> list[tuple]:
        return [(self.model, r["seed"], r["fold"], fpr, tpr)
                for r in self.runs for fpr, tpr in (r.get("roc") or [])]

    def write_roc_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "seed", "fold", "fpr", "tpr"])
            for row in self.roc_rows():
                w.writerow([row[0], row[1], row[2], repr(row[3]), repr(row[4])])


def _short(x: float) -> str:
    s = f"{x:.3f}"
    return s[1:] if s.startswith("0.") else s


def format_table(reports: Sequence[EvalReport]) -> str:
    """Plain-text table: one row per model, ``mean (std)`` with three decimals."""
    header = ("Model", "Accuracy", "Macro-F1", "AUROC")
    rows = []
    for rep in reports:
        s = rep.summary()
        cells = [rep.model.upper()]
        for m in EvalReport.METRICS:
            cells.append("-" if s[m] is None else f"{_short(s[m]['mean'])} ({_short(s[m]['std'])})")
        rows.append(cells)
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(4)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
    return "\n".join(lines)


def _select_params(spec: LearnerSpec, train: CategoricalDataset, inner: int, seed: int):
    if len(spec.grid) == 1:
        return spec.grid[0], None
    folds = stratified_folds(train.label, inner, seed)
    means = []
    for params in spec.grid:
        accs = []
        for test in folds:
            fit_idx = np.setdiff1d(np.arange(len(train)), test)
            try:
                m = spec.factory(params, seed).fit(train.subset(fit_idx))
                accs.append(accuracy(m.predict(train.subset(test)), train.label[test]))
            except (ValueError, RuntimeError, np.linalg.LinAlgError):
                accs.append(-math.inf)
        means.append(float(np.mean(accs)))
    best = int(np.argmax(means))  # first of equal candidates
    return spec.grid[best], means


def nested_cv(spec: LearnerSpec, ds: CategoricalDataset, inner: int = 3, outer: int = 5, seeds: int = 3,
              base_seed: int = 0, max_failures: int = 3, trace: list | None = None,
              preprocess: Callable | None = None) -> EvalReport:
    """Repeated stratified outer CV with an inner grid search on each training part.

    ``preprocess(train_ds)`` may return a transform ``f(ds) -> ds`` that is
    fitted on outer-training rows and then applied to both parts. When
    ``trace`` is a list, the row indices given to fitting and scoring are
    appended to it for leakage audits.
    """
    if len(ds) < outer:
        raise ValueError(f"{len(ds)} rows cannot fill {outer} outer folds")
    runs, failed = [], []
    for s in range(seeds):
        seed = base_seed + s
        for f, test in enumerate(stratified_folds(ds.label, outer, seed)):
            train = np.setdiff1d(np.arange(len(ds)), test)
            run_seed = seed * 1000 + f
            if trace is not None:
                trace.append({"seed": seed, "fold": f, "train": train.tolist(), "test": test.tolist()})
            try:
                tr, te = ds.subset(train), ds.subset(test)
                if preprocess is not None:
                    transform = preprocess(tr)
                    tr, te = transform(tr), transform(te)
                params, inner_scores = _select_params(spec, tr, inner, run_seed)
                model = spec.factory(params, run_seed).fit(tr)
                pred = np.asarray(model.predict(te))
                run = {"seed": seed, "fold": f, "n_train": int(len(train)), "n_test": int(len(test)),
                       "params": params, "inner_scores": inner_scores,
                       "accuracy": accuracy(pred, te.label), "macro_f1": macro_f1(pred, te.label),
                       "auroc": None, "roc": None}
                if spec.scores and len(np.unique(te.label)) == 2:
                    prob = np.asarray(model.predict_proba(te), dtype=float)
                    run["auroc"] = auroc(prob, te.label)
                    run["roc"] = [list(p) for p in roc_curve(prob, te.label)]
                runs.append(run)
            except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
                failed.append({"seed": seed, "fold": f, "error": f"{type(exc).__name__}: {exc}"})
                if len(failed) > max_failures:
                    raise RuntimeError(f"{spec.name}: {len(failed)} outer folds failed; last error: {exc}") from exc
    return EvalReport(spec.name, runs, failed)
