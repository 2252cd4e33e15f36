"""Categorical cohort model, CSV ingestion, encodings and the synthetic cohort generator."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

LABEL_THRESHOLD_DAYS = 365
REQUIRED_COLUMNS = ("survival_days", "event_observed")

_TRUE = {"1", "true", "t", "yes", "y"}
_FALSE = {"0", "false", "f", "no", "n"}


class SchemaError(ValueError):
    """Input does not conform to the feature schema."""


@dataclass(frozen=True)
class Feature:
    name: str
    categories: tuple[str, ...]
    kind: str = "categorical"

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        if self.kind not in ("categorical", "ordinal-categorical"):
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if len(self.categories) < 2:
            raise SchemaError(f"feature {self.name!r} needs at least 2 categories")
        if len(set(self.categories)) != len(self.categories):
            raise SchemaError(f"feature {self.name!r} has duplicate categories")

    def index(self, category: str) -> int:
        try:
            return self.categories.index(category)
        except ValueError:
            raise SchemaError(f"feature {self.name!r} has no category {category!r}") from None


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered list of categorical features."""

    features: tuple[Feature, ...]

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")

    def __len__(self):
        return len(self.features)

    def __iter__(self):
        return iter(self.features)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def sizes(self) -> list[int]:
        return [len(f.categories) for f in self.features]

    def feature_index(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise SchemaError(f"unknown feature {name!r}")

    def __getitem__(self, key):
        if isinstance(key, str):
            return self.features[self.feature_index(key)]
        return self.features[key]

    def column_names(self, drop_first: bool = False) -> list[str]:
        start = 1 if drop_first else 0
        return [f"{f.name}: {c}" for f in self.features for c in f.categories[start:]]

    def column_groups(self, drop_first: bool = False) -> list[np.ndarray]:
        """Column indices of each feature's one-hot block."""
        groups, offset = [], 0
        for size in self.sizes:
            width = size - 1 if drop_first else size
            groups.append(np.arange(offset, offset + width))
            offset += width
        return groups

    def to_dict(self) -> dict:
        return {
            "features": [
                {"name": f.name, "kind": f.kind, "categories": list(f.categories)}
                for f in self.features
            ]
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "FeatureSchema":
        try:
            return cls(tuple(
                Feature(d["name"], tuple(d["categories"]), d.get("kind", "categorical"))
                for d in doc["features"]
            ))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema document: {exc}") from None


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CategoricalDataset:
    """Rows of category indices with survival outcome and derived one-year label.

    ``rows`` has shape (n, n_features); labels are 1 for survival beyond
    ``LABEL_THRESHOLD_DAYS``.
    """

    schema: FeatureSchema
    rows: np.ndarray
    survival_days: np.ndarray
    event_observed: np.ndarray
    label: np.ndarray = field(default=None)

    def __post_init__(self):
        rows = _frozen(self.rows, np.int64).reshape(-1, len(self.schema))
        days = _frozen(self.survival_days, np.int64)
        event = _frozen(self.event_observed, bool)
        n = rows.shape[0]
        if not (len(days) == len(event) == n):
            raise SchemaError("rows, survival_days and event_observed differ in length")
        for j, size in enumerate(self.schema.sizes):
            col = rows[:, j]
            if n and (col.min() < 0 or col.max() >= size):
                raise SchemaError(f"invalid category index for feature {self.schema[j].name!r}")
        label = self.label
        if label is None:
            label = make_labels(days, event)
        label = _frozen(label, np.int64)
        if len(label) != n:
            raise SchemaError("label length mismatch")
        if np.any(~event & (label == 0)):
            raise SchemaError("censored row labelled as short survival")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "survival_days", days)
        object.__setattr__(self, "event_observed", event)
        object.__setattr__(self, "label", label)

    def __len__(self):
        return self.rows.shape[0]

    def subset(self, index) -> "CategoricalDataset":
        index = np.asarray(index)
        return CategoricalDataset(self.schema, self.rows[index], self.survival_days[index],
                                  self.event_observed[index], self.label[index])

    def with_labels(self, label) -> "CategoricalDataset":
        """Copy with labels replaced (survival columns untouched)."""
        return CategoricalDataset(self.schema, self.rows, self.survival_days,
                                  self.event_observed, label)

    def equals(self, other: "CategoricalDataset") -> bool:
        return (
            self.schema == other.schema
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.survival_days, other.survival_days)
            and np.array_equal(self.event_observed, other.event_observed)
            and np.array_equal(self.label, other.label)
        )

    def category_names(self, i: int) -> list[str]:
        return [self.schema[j].categories[c] for j, c in enumerate(self.rows[i])]


def make_labels(survival_days, event_observed, threshold: int = LABEL_THRESHOLD_DAYS):
    """One-year survival label: 1 iff ``survival_days > threshold``.

    Censored records are always labelled 1; a censored record at or below the
    threshold is rejected because its outcome cannot be determined.
    Scalars in, scalar out; arrays in, array out.
    """
    days = np.asarray(survival_days)
    event = np.asarray(event_observed, dtype=bool)
    if np.any(days < 0):
        raise ValueError("survival_days must be non-negative")
    bad = ~event & (days <= threshold)
    if np.any(bad):
        where = np.flatnonzero(np.atleast_1d(bad))
        raise ValueError(f"censored record with survival_days <= {threshold} (index {where[:5].tolist()})")
    label = (days > threshold).astype(np.int64)
    if label.ndim == 0:
        return int(label)
    return label


@dataclass(frozen=True, eq=False)
class BinaryMatrix:
    column_names: list[str]
    values: np.ndarray


def one_hot_encode(ds: CategoricalDataset, drop_first: bool = False) -> BinaryMatrix:
    """Indicator columns in schema order (categories in schema order).

    With ``drop_first`` the first category of each feature is omitted, which
    is the reference coding used by the hazard model.
    """
    sizes = ds.schema.sizes
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    full = np.zeros((len(ds), sum(sizes)), dtype=np.int8)
    if len(ds):
        full[np.arange(len(ds))[:, None], ds.rows + offsets] = 1
    if drop_first:
        full = np.delete(full, offsets, axis=1)
    return BinaryMatrix(ds.schema.column_names(drop_first), full)


def load_csv(path, schema: FeatureSchema, threshold: int = LABEL_THRESHOLD_DAYS) -> CategoricalDataset:
    """Read a comma-delimited UTF-8 file with a header row.

    The header must hold every schema feature plus ``survival_days`` and
    ``event_observed``; extra columns are ignored.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        missing = [c for c in list(schema.names) + list(REQUIRED_COLUMNS) if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing required column(s) {missing}")
        pos = {name: header.index(name) for name in header}
        rows, days, events = [], [], []
        for line_no, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise SchemaError(f"{path}: row {line_no}: expected {len(header)} fields, got {len(rec)}")
            row = []
            for f in schema:
                value = rec[pos[f.name]]
                try:
                    row.append(f.categories.index(value))
                except ValueError:
                    raise SchemaError(
                        f"{path}: row {line_no}, column {f.name!r}: unknown category {value!r}"
                    ) from None
            raw_days = rec[pos["survival_days"]].strip()
            try:
                d = float(raw_days)
            except ValueError:
                raise SchemaError(f"{path}: row {line_no}: non-numeric survival_days {raw_days!r}") from None
            if not d.is_integer() or d < 0:
                raise SchemaError(f"{path}: row {line_no}: survival_days must be a non-negative integer")
            raw_event = rec[pos["event_observed"]].strip().lower()
            if raw_event in _TRUE:
                e = True
            elif raw_event in _FALSE:
                e = False
            else:
                raise SchemaError(f"{path}: row {line_no}: bad event_observed {raw_event!r}")
            rows.append(row)
            days.append(int(d))
            events.append(e)
    rows = np.array(rows, dtype=np.int64).reshape(-1, len(schema))
    try:
        label = make_labels(np.array(days, dtype=np.int64), np.array(events, dtype=bool), threshold)
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from None
    return CategoricalDataset(schema, rows, days, events, label)


def write_csv(ds: CategoricalDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(ds.schema.names) + list(REQUIRED_COLUMNS))
        for i in range(len(ds)):
            w.writerow(ds.category_names(i) + [int(ds.survival_days[i]), int(ds.event_observed[i])])


@dataclass(frozen=True)
class MergeRule:
    """Collapse several source features into one merged feature.

    ``mapping`` sends a tuple of source category names (in ``sources`` order)
    to a merged category name.
    """

    sources: tuple[str, ...]
    merged: str
    categories: tuple[str, ...]
    mapping: Mapping[tuple[str, ...], str]


def merge_collinear(ds: CategoricalDataset, merge_spec: Sequence[MergeRule]) -> CategoricalDataset:
    """Replace groups of correlated features by a single combined feature.

    Source features are dropped and each merged feature is appended after the
    remaining ones, in ``merge_spec`` order.
    """
    schema, rows = ds.schema, ds.rows
    keep = list(range(len(schema)))
    new_cols, new_feats = [], []
    for rule in merge_spec:
        src = [schema.feature_index(s) for s in rule.sources]
        merged_feat = Feature(rule.merged, tuple(rule.categories))
        combos, inverse = np.unique(rows[:, src], axis=0, return_inverse=True)
        codes = np.empty(len(combos), dtype=np.int64)
        for k, combo in enumerate(combos):
            key = tuple(schema[j].categories[c] for j, c in zip(src, combo))
            if key not in rule.mapping:
                raise SchemaError(f"merge {rule.merged!r}: combination {key} is not covered")
            codes[k] = merged_feat.index(rule.mapping[key])
        new_cols.append(codes[np.asarray(inverse).ravel()] if len(rows) else np.zeros(0, np.int64))
        new_feats.append(merged_feat)
        keep = [j for j in keep if j not in src]
    out_schema = FeatureSchema(tuple(schema[j] for j in keep) + tuple(new_feats))
    out_rows = np.column_stack([rows[:, keep]] + new_cols) if new_cols else rows[:, keep]
    return CategoricalDataset(out_schema, out_rows, ds.survival_days, ds.event_observed, ds.label)


def reorder_features(ds: CategoricalDataset, names: Sequence[str]) -> CategoricalDataset:
    idx = [ds.schema.feature_index(n) for n in names]
    schema = FeatureSchema(tuple(ds.schema[j] for j in idx))
    return CategoricalDataset(schema, ds.rows[:, idx], ds.survival_days, ds.event_observed, ds.label)


# --------------------------------------------------------------------------- #
# synthetic cohorts

@dataclass(frozen=True)
class SynthSpec:
    """Independent categorical marginals plus an ordered list of planted label rules.

    ``planted_rules`` entries are ``(items, p)`` with ``items`` a sequence of
    ``(feature name, category name)`` pairs; a row takes the positive-label
    probability of the first rule it satisfies.
    """

    schema: FeatureSchema
    marginals: Mapping[str, Sequence[float]]
    planted_rules: Sequence[tuple[Sequence[tuple[str, str]], float]] = ()
    default_positive_prob: float = 0.5
    censor_prob_given_survivor: float = 0.0

    def __post_init__(self):
        margs = {}
        for f in self.schema:
            if f.name not in self.marginals:
                raise SchemaError(f"no marginal for feature {f.name!r}")
            p = np.asarray(self.marginals[f.name], dtype=float)
            if p.shape != (len(f.categories),) or np.any(p < 0):
                raise SchemaError(f"bad marginal for feature {f.name!r}")
            if abs(p.sum() - 1.0) > 1e-9:
                raise SchemaError(f"marginal for {f.name!r} sums to {p.sum()}")
            margs[f.name] = tuple(float(x) for x in p)
        object.__setattr__(self, "marginals", margs)
        rules = []
        for items, p in self.planted_rules:
            items = tuple((str(a), str(b)) for a, b in items)
            for name, cat in items:
                self.schema[name].index(cat)
            if not 0.0 <= p <= 1.0:
                raise SchemaError("planted rule probability outside [0, 1]")
            rules.append((items, float(p)))
        object.__setattr__(self, "planted_rules", tuple(rules))
        for q in (self.default_positive_prob, self.censor_prob_given_survivor):
            if not 0.0 <= q <= 1.0:
                raise SchemaError("probability outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "schema": self.schema.to_dict(),
            "marginals": {
                f.name: [{"category": c, "probability": p}
                         for c, p in zip(f.categories, self.marginals[f.name])]
                for f in self.schema
            },
            "planted_rules": [
                {"items": [{"feature": a, "category": b} for a, b in items], "p": p}
                for items, p in self.planted_rules
            ],
            "default_positive_prob": self.default_positive_prob,
            "censor_prob_given_survivor": self.censor_prob_given_survivor,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SynthSpec":
        try:
            schema = FeatureSchema.from_dict(doc["schema"])
            marginals = {}
            for f in schema:
                entries = {e["category"]: float(e["probability"]) for e in doc["marginals"][f.name]}
                marginals[f.name] = [entries.get(c, 0.0) for c in f.categories]
            rules = [
                ([(it["feature"], it["category"]) for it in r["items"]], float(r["p"]))
                for r in doc.get("planted_rules", [])
            ]
            return cls(schema, marginals, rules,
                       float(doc.get("default_positive_prob", 0.5)),
                       float(doc.get("censor_prob_given_survivor", 0.0)))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed synth spec: {exc}") from None


def synth_generate(spec: SynthSpec, n: int, seed: int) -> CategoricalDataset:
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    schema = spec.schema
    rows = np.empty((n, len(schema)), dtype=np.int64)
    for j, f in enumerate(schema):
        p = np.asarray(spec.marginals[f.name])
        rows[:, j] = rng.choice(len(p), size=n, p=p)

    prob = np.full(n, spec.default_positive_prob)
    assigned = np.zeros(n, dtype=bool)
    for items, p in spec.planted_rules:
        match = np.ones(n, dtype=bool)
        for name, cat in items:
            j = schema.feature_index(name)
            match &= rows[:, j] == schema[j].index(cat)
        fresh = match & ~assigned
        prob[fresh] = p
        assigned |= match
    label = (rng.random(n) < prob).astype(np.int64)
    days = np.where(label == 1,
                    rng.integers(LABEL_THRESHOLD_DAYS + 1, 2001, size=n),
                    rng.integers(1, LABEL_THRESHOLD_DAYS + 1, size=n))
    censored = (label == 1) & (rng.random(n) < spec.censor_prob_given_survivor)
    return CategoricalDataset(schema, rows, days, ~censored, label)


# --------------------------------------------------------------------------- #
# published cohort summary (final 19-variable dataset)

PAPER_FEATURES: list[tuple[str, str, list[tuple[str, float]]]] = [
    ("Age", "ordinal-categorical", [
        ("0-44", 17.1), ("45-54", 18.7), ("55-61", 16.0), ("62-67", 15.8),
        ("68-74", 16.9), ("75+", 15.5)]),
    ("Sex", "categorical", [("Male", 50.5), ("Female", 49.5)]),
    ("History of Cancer", "categorical", [("Yes", 18.2), ("No", 81.8)]),
    ("Comorbidity", "categorical", [("Yes", 47.7), ("No", 52.3)]),
    ("SIMD", "ordinal-categorical", [
        ("1", 13.9), ("2", 22.6), ("3", 21.0), ("4", 18.8), ("5", 23.7)]),
    ("KP Score", "ordinal-categorical", [
        ("100", 37.6), ("90", 28.6), ("80", 14.6), ("<=70", 19.2)]),
    ("Symptom 1", "categorical", [
        ("Focal Neurology", 34.6), ("Headache", 28.4), ("Fits/Faints/Falls", 17.1),
        ("Behavioural/Cognitive", 16.7), ("Other/Non-specific", 2.4),
        ("Non-specific Neurological", 0.8)]),
    ("Symptom 1 Duration", "ordinal-categorical", [
        ("0-2 weeks", 20.6), ("3-4 weeks", 20.1), ("5-8 weeks", 19.5),
        ("9-20 weeks", 20.4), ("20-52 weeks", 19.4)]),
    ("Symptom 2", "categorical", [
        ("Focal Neurology", 31.3), ("No Symptoms", 30.4), ("Behavioural/Cognitive", 18.9),
        ("Fits/Faints/Falls", 9.1), ("Headache", 6.4), ("Other/Non-specific", 3.9)]),
    ("Sign 1", "categorical", [
        ("No Signs", 42.7), ("Neurological", 36.2), ("Cognitive", 15.0),
        ("Cranial Nerve", 5.0), ("Other", 0.8), ("Behavioural", 0.3)]),
    ("Urgency of Referral", "categorical", [
        ("Emergency", 59.7), ("Suspicion of Cancer (within 2 weeks)", 17.3),
        ("Soon (up to 3-4 weeks)", 2.9), ("Routine (up to 12 weeks)", 20.1)]),
    ("Diagnosis", "categorical", [
        ("Glioma Malignant", 46.5), ("Metastasis", 19.0), ("Meningioma Benign", 13.6),
        ("Glioma Benign", 7.1), ("Rare Tumour Benign", 4.7), ("Lymphoma Malignant", 4.1),
        ("Meningioma Malignant", 2.3), ("Rare Tumour Malignant", 1.5),
        ("Hemangioblastoma Benign", 1.2)]),
    ("Max Size", "ordinal-categorical", [
        ("<=20", 19.7), ("21-40", 38.1), ("41-60", 30.8), (">=61", 11.4)]),
    ("Side", "categorical", [
        ("Left", 41.9), ("Right", 41.2), ("Both Left and Right", 11.6), ("Midline", 5.3)]),
    ("Lobe", "categorical", [
        ("Frontal", 34.2), ("Temporal", 21.6), ("Parietal", 14.6), ("Multiple", 12.2),
        ("Cerebellar", 7.3), ("Brainstem", 5.7), ("Occipital", 4.4)]),
    ("Morphology", "categorical", [("Heterogenous", 68.5), ("Homogenous", 31.5)]),
    ("Midline Shift", "ordinal-categorical", [
        ("0", 43.3), ("<5mm", 28.1), ("5-10mm", 17.4), (">10mm", 11.2)]),
    ("First Treatment", "categorical", [
        ("Surgery Removal 100%", 16.0), ("Surgery Removal 90-99%", 24.4),
        ("Surgery Removal 50-89%", 6.4), ("Surgery Removal <50%", 4.9), ("Biopsy", 16.9),
        ("Radiotherapy", 5.5), ("Chemotherapy", 0.9), ("Other (e.g. steroids)", 2.5),
        ("No Treatment", 22.5)]),
    ("Post-op Performance Status", "ordinal-categorical", [
        ("0", 31.5), ("1", 27.4), ("2", 6.2), ("3", 1.9), ("4", 1.4), ("5", 0.2),
        ("No Surgery", 31.4)]),
]

PAPER_SCHEMA = FeatureSchema(tuple(
    Feature(name, tuple(c for c, _ in cats), kind) for name, kind, cats in PAPER_FEATURES
))


def paper_marginals() -> dict[str, list[float]]:
    """Published category percentages, renormalised to sum to one per feature."""
    out = {}
    for name, _, cats in PAPER_FEATURES:
        p = np.array([v for _, v in cats], dtype=float)
        out[name] = (p / p.sum()).tolist()
    return out


# 35% of the cohort was censored, all of them long survivors (56.5% of rows)
PAPER_CENSOR_PROB = round(0.35 / (575 / 1018), 3)

# label mechanism used for desk-scale evaluation; positive rates 0.9 / 0.8 / 0.2, default 0.45
DEMO_PLANTED_RULES = (
    ((("KP Score", "100"),), 0.9),
    ((("Post-op Performance Status", "0"),), 0.8),
    ((("Morphology", "Heterogenous"),), 0.2),
)
DEMO_DEFAULT_PROB = 0.45


def paper_synth_spec(planted_rules=DEMO_PLANTED_RULES, default_positive_prob=DEMO_DEFAULT_PROB,
                     censor_prob_given_survivor=PAPER_CENSOR_PROB) -> SynthSpec:
    return SynthSpec(PAPER_SCHEMA, paper_marginals(), planted_rules,
                     default_positive_prob, censor_prob_given_survivor)


# raw tumour-type x grade and treatment x resection merges
RAW_TUMOUR_TYPES = ("Glioma", "Meningioma", "Metastasis", "Lymphoma", "Rare Tumour", "Hemangioblastoma")
RAW_GRADES = ("Grade I", "Grade II", "Grade III", "Grade IV")
RAW_TREATMENTS = ("Surgery", "Biopsy", "Radiotherapy", "Chemotherapy", "Other (e.g. steroids)", "No Treatment")
RAW_RESECTION = ("EOR 100%", "EOR 90-99%", "EOR 50-89%", "EOR <50%", "Not Applicable")


def _diagnosis_mapping() -> dict:
    out = {}
    for t in RAW_TUMOUR_TYPES:
        for g in RAW_GRADES:
            malignant = g in ("Grade III", "Grade IV")
            if t == "Metastasis":
                out[(t, g)] = "Metastasis"
            elif t == "Lymphoma":
                out[(t, g)] = "Lymphoma Malignant"
            elif t == "Hemangioblastoma":
                out[(t, g)] = "Hemangioblastoma Benign"
            else:
                out[(t, g)] = f"{t} {'Malignant' if malignant else 'Benign'}"
    return out


def _treatment_mapping() -> dict:
    out = {}
    for eor in RAW_RESECTION[:-1]:
        out[("Surgery", eor)] = "Surgery Removal " + eor.removeprefix("EOR ")
    for t in RAW_TREATMENTS[1:]:
        out[(t, "Not Applicable")] = t
    return out


PAPER_MERGES = (
    MergeRule(("Tumour Type", "Likely Grade"), "Diagnosis",
              PAPER_SCHEMA["Diagnosis"].categories, _diagnosis_mapping()),
    MergeRule(("First Treatment", "Extent of Resection"), "First Treatment",
              PAPER_SCHEMA["First Treatment"].categories, _treatment_mapping()),
)


def load_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def dump_json(doc, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n", encoding="utf-8")
