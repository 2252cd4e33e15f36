"""Penalized Cox proportional-hazards model with Breslow ties and baseline hazard."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import LABEL_THRESHOLD_DAYS, CategoricalDataset, FeatureSchema, one_hot_encode

PENALIZER_GRID = (1e-3, 1e-2, 1e-1, 1e0, 1e1)


class ConvergenceError(RuntimeError):
    pass


@dataclass
class CoxModel:
    column_names: list[str]
    beta: np.ndarray
    penalizer: float
    event_times: np.ndarray
    cumulative_hazard: np.ndarray
    horizon: int
    iterations: int = 0
    gradient_norm: float = 0.0

    def linear_predictor(self, covariates) -> np.ndarray:
        return np.asarray(covariates, dtype=float) @ self.beta

    def to_dict(self) -> dict:
        return {
            "columns": list(self.column_names),
            "beta": self.beta.tolist(),
            "penalizer": self.penalizer,
            "baseline": {"time": self.event_times.tolist(), "cumhaz": self.cumulative_hazard.tolist()},
            "horizon": self.horizon,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CoxModel":
        return cls(list(doc["columns"]), np.asarray(doc["beta"], dtype=float), float(doc["penalizer"]),
                   np.asarray(doc["baseline"]["time"], dtype=float),
                   np.asarray(doc["baseline"]["cumhaz"], dtype=float), int(doc["horizon"]))


class _RiskSets:
    """Sorted view of survival data for fast risk-set sums.

    Rows are ordered by ascending time; ``start[g]`` is the first sorted row
    of distinct event-time group ``g`` so the risk set is ``order[start[g]:]``.
    """

    def __init__(self, X, time, event):
        self.X = np.asarray(X, dtype=float)
        time = np.asarray(time, dtype=float)
        event = np.asarray(event, dtype=bool)
        order = np.argsort(time, kind="stable")
        self.Xs = self.X[order]
        self.ts = time[order]
        self.es = event[order]
        self.times = np.unique(self.ts[self.es])
        self.start = np.searchsorted(self.ts, self.times, side="left")
        # per event-time group: number of deaths and summed covariates of the deaths
        grp = np.searchsorted(self.times, self.ts[self.es])
        self.deaths = np.bincount(grp, minlength=len(self.times)).astype(float)
        self.death_x = np.zeros((len(self.times), self.X.shape[1]))
        np.add.at(self.death_x, grp, self.Xs[self.es])

    def _reverse_cumsum(self, a):
        return np.cumsum(a[::-1], axis=0)[::-1]

    def evaluate(self, beta, hessian=True):
        """Partial log-likelihood, score and (optionally) Hessian at ``beta``.

        Far from the optimum a risk-set sum can underflow; the result is then
        non-finite and the caller's step halving backs away from it.
        """
        with np.errstate(all="ignore"):
            return self._evaluate(beta, hessian)

    def _evaluate(self, beta, hessian):
        eta = self.Xs @ beta
        shift = eta.max() if len(eta) else 0.0
        w = np.exp(eta - shift)
        s0 = self._reverse_cumsum(w)[self.start]
        s1 = self._reverse_cumsum(w[:, None] * self.Xs)[self.start]
        d = self.deaths
        loglik = float(np.sum(self.death_x @ beta) - np.sum(d * (np.log(s0) + shift)))
        mean = s1 / s0[:, None]
        grad = self.death_x.sum(axis=0) - (d[:, None] * mean).sum(axis=0)
        if not hessian:
            return loglik, grad, None
        # sum_g d_g S2_g / S0_g == X' diag(w * c) X with c the running sum of d_g / S0_g
        c = np.zeros(len(w))
        np.add.at(c, self.start, d / s0)
        c = np.cumsum(c)
        hess = -((self.Xs * (w * c)[:, None]).T @ self.Xs) + (mean * d[:, None]).T @ mean
        return loglik, grad, hess

    def baseline(self, beta):
        w = np.exp(self.Xs @ beta)
        s0 = self._reverse_cumsum(w)[self.start]
        return self.times.copy(), np.cumsum(self.deaths / s0)


def partial_log_likelihood(X, time, event, beta) -> float:
    """Breslow partial log-likelihood (unpenalized)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return _RiskSets(X, time, event).evaluate(np.atleast_1d(np.asarray(beta, dtype=float)), hessian=False)[0]


def cox_fit(X, time, event, penalizer: float = 0.0, column_names: Sequence[str] | None = None,
            max_iter: int = 100, tol: float = 1e-7) -> CoxModel:
    """Newton-Raphson with step halving on the ridge-penalized partial likelihood."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    event = np.asarray(event, dtype=bool)
    if not event.any():
        raise ValueError("at least one observed event is required")
    if penalizer < 0:
        raise ValueError("penalizer must be non-negative")
    rs = _RiskSets(X, time, event)
    p = X.shape[1]
    beta = np.zeros(p)

    def objective(b):
        ll, g, h = rs.evaluate(b)
        return ll - 0.5 * penalizer * b @ b, g - penalizer * b, h - penalizer * np.eye(p)

    obj, grad, hess = objective(beta)
    for it in range(1, max_iter + 1):
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(-hess, grad, rcond=None)[0]
        scale = 1.0
        while True:
            cand = beta + scale * step
            new_obj, new_grad, new_hess = objective(cand)
            if np.isfinite(new_obj) and new_obj >= obj - 1e-12 * abs(obj):
                break
            scale *= 0.5
            if scale < 1e-10:
                raise ConvergenceError(f"Cox fit: step halving stalled at iteration {it} "
                                       f"(gradient norm {np.linalg.norm(grad):.3g})")
        delta = np.max(np.abs(cand - beta)) if p else 0.0
        beta, obj, grad, hess = cand, new_obj, new_grad, new_hess
        if delta < tol:
            times, cumhaz = rs.baseline(beta)
            names = list(column_names) if column_names is not None else [f"x{j}" for j in range(p)]
            return CoxModel(names, beta, float(penalizer), times, cumhaz,
                            int(np.max(time)), it, float(np.linalg.norm(grad)))
    raise ConvergenceError(f"Cox fit did not converge in {max_iter} iterations "
                           f"(gradient norm {np.linalg.norm(grad):.3g})")


def _folds(n: int, k: int, seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def select_penalizer(X, time, event, grid: Sequence[float] = PENALIZER_GRID, folds: int = 5,
                     seed: int = 0) -> tuple[float, dict[float, float]]:
    """Penalizer with the best mean held-out partial log-likelihood.

    Returns the choice and the per-candidate mean score (``-inf`` for a
    candidate whose fit failed on any fold). Ties go to the larger value.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("penalizer grid is empty")
    X = np.asarray(X, dtype=float)
    time = np.asarray(time)
    event = np.asarray(event, dtype=bool)
    if len(grid) == 1:
        return float(grid[0]), {float(grid[0]): float("nan")}
    splits = _folds(len(time), folds, seed)
    scores: dict[float, float] = {}
    for pen in grid:
        vals = []
        try:
            for test in splits:
                train = np.setdiff1d(np.arange(len(time)), test)
                if not event[test].any():
                    continue
                m = cox_fit(X[train], time[train], event[train], pen)
                vals.append(partial_log_likelihood(X[test], time[test], event[test], m.beta))
            scores[float(pen)] = float(np.mean(vals)) if vals else float("-inf")
        except (ConvergenceError, ValueError, np.linalg.LinAlgError):
            scores[float(pen)] = float("-inf")
    finite = {k: v for k, v in scores.items() if np.isfinite(v)}
    if not finite:
        raise ConvergenceError("every penalizer candidate failed")
    best = max(finite.values())
    return max(k for k, v in finite.items() if v == best), scores


def survival_curve(model: CoxModel, covariates) -> np.ndarray:
    """S(t) at each baseline event time, one row per covariate vector."""
    eta = np.atleast_1d(model.linear_predictor(np.atleast_2d(covariates)))
    return np.exp(-np.outer(np.exp(eta), model.cumulative_hazard))


def cox_predict_survival_days(model: CoxModel, covariates) -> np.ndarray:
    """Median survival time; ``horizon + 1`` where the curve never drops to 0.5."""
    surv = survival_curve(model, covariates)
    below = surv <= 0.5
    hit = below.any(axis=1)
    first = np.argmax(below, axis=1)
    out = np.full(surv.shape[0], model.horizon + 1, dtype=np.int64)
    if len(model.event_times):
        out[hit] = np.ceil(model.event_times[first[hit]]).astype(np.int64)
    return out


def cox_importance(models: Sequence[CoxModel], top: int = 5) -> dict:
    """Mean/std of each coefficient over fitted models plus the extreme ``top`` at both ends.

    Positive coefficients mean higher hazard, i.e. shorter survival.
    """
    if not models:
        raise ValueError("need at least one model")
    names = models[0].column_names
    if any(m.column_names != names for m in models):
        raise ValueError("models were fitted on different columns")
    B = np.vstack([m.beta for m in models])
    shifted = B - B[0]  # exact zeros when every fold agrees
    mean, std = B[0] + shifted.mean(axis=0), shifted.std(axis=0)
    order = np.argsort(mean, kind="stable")
    neg = [int(j) for j in order[:top]]
    pos = [int(j) for j in order[::-1][:top] if int(j) not in neg]
    row = lambda j: {"column": names[j], "mean": float(mean[j]), "std": float(std[j])}  # noqa: E731
    return {
        "coefficients": [row(j) for j in range(len(names))],
        "most_negative": [row(j) for j in neg],
        "most_positive": [row(j) for j in pos],
    }


@dataclass
class CoxClassifier:
    """One-year survival labels from the median predicted survival time."""

    grid: tuple = PENALIZER_GRID
    threshold_days: int = LABEL_THRESHOLD_DAYS
    seed: int = 0
    model: CoxModel | None = None
    schema: FeatureSchema | None = None
    cv_scores: dict = field(default_factory=dict)

    def _design(self, ds: CategoricalDataset) -> np.ndarray:
        return one_hot_encode(ds, drop_first=True).values.astype(float)

    def fit(self, ds: CategoricalDataset) -> "CoxClassifier":
        X = self._design(ds)
        pen, self.cv_scores = select_penalizer(X, ds.survival_days, ds.event_observed, self.grid, seed=self.seed)
        self.model = cox_fit(X, ds.survival_days, ds.event_observed, pen,
                             ds.schema.column_names(drop_first=True))
        self.schema = ds.schema
        return self

    def predict_days(self, ds: CategoricalDataset) -> np.ndarray:
        return cox_predict_survival_days(self.model, self._design(ds))

    def predict(self, ds: CategoricalDataset) -> np.ndarray:
        return (self.predict_days(ds) > self.threshold_days).astype(np.int64)

    def to_dict(self) -> dict:
        return {"model": "cox", "schema": self.schema.to_dict(), "threshold_days": self.threshold_days,
                "grid": list(self.grid), "seed": self.seed, "cox": self.model.to_dict()}

    @classmethod
    def from_dict(cls, doc: dict) -> "CoxClassifier":
        m = cls(tuple(doc.get("grid", PENALIZER_GRID)), doc.get("threshold_days", LABEL_THRESHOLD_DAYS),
                doc.get("seed", 0))
        m.schema = FeatureSchema.from_dict(doc["schema"])
        m.model = CoxModel.from_dict(doc["cox"])
        return m
