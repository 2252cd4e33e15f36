"""``survrules`` command-line interface.

Every subcommand reads its options from flags and, optionally, a JSON file
given with ``--config``; flags win over the file. The fully resolved option
set is written next to each output as ``<out>.config.json``.

Exit codes: 0 success, 1 runtime failure, 2 bad command line,
3 malformed config file, 4 data/schema mismatch. Errors are reported as a
single line on stderr: ``survrules: error[<kind>]: <message>``.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import data as D
from .brl import BayesianRuleList, BrlHyper
from .coxph import PENALIZER_GRID, CoxClassifier, cox_fit, cox_importance
from .data import SchemaError
from .frl import FallingRuleListClassifier, FrlHyper

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_CONFIG, EXIT_SCHEMA = 0, 1, 2, 3, 4


class ConfigError(Exception):
    pass


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # one line, distinct exit code
        raise UsageError(message)


# option tables: dest -> (flag, type, default, nargs, help)
_COMMON = {
    "input": ("--in", str, None, None, "input CSV"),
    "out": ("--out", str, None, None, "output path"),
    "seed": ("--seed", int, 0, None, "master random seed"),
    "threads": ("--threads", int, 1, None, "worker threads for parallel sections"),
    "schema": ("--schema", str, None, None, "schema JSON (default: <in>.schema.json)"),
    "label_days": ("--label-days", int, D.LABEL_THRESHOLD_DAYS, None, "survival threshold in days"),
}
_MINING = {
    "min_support": ("--min-support", float, 0.10, None, "minimum antecedent support"),
    "min_confidence": ("--min-confidence", float, 0.80, None, "minimum majority-class confidence"),
    "max_card": ("--max-card", int, 2, None, "maximum antecedent cardinality"),
}
_BRL = {
    "lam": ("--lam", float, 3.0, None, "expected list length"),
    "eta": ("--eta", float, 1.0, None, "expected rule cardinality (brl)"),
    "alpha": ("--alpha", float, [1.0, 1.0], 2, "Beta pseudo-counts (negative, positive)"),
    "chains": ("--chains", int, 3, None, "MCMC chains (brl)"),
    "iterations": ("--iterations", int, None, None, "MCMC / annealing iterations"),
    "burn_in": ("--burn-in", int, None, None, "burn-in iterations (brl)"),
    "thin": ("--thin", int, 10, None, "thinning interval (brl)"),
    "warm_iterations": ("--warm-iterations", int, 2000, None, "MH warm-start steps (frl)"),
    "t0": ("--t0", float, 1.0, None, "initial annealing temperature (frl)"),
    "decay": ("--decay", float, 0.995, None, "geometric temperature decay (frl)"),
    "t_min": ("--t-min", float, 1e-3, None, "temperature floor (frl)"),
    "restarts": ("--restarts", int, 5, None, "annealing restarts (frl)"),
    "trees": ("--trees", int, [100, 200, 500], "+", "tree-count grid (rf)"),
    "c_grid": ("--c-grid", float, [2.0 ** k for k in range(-4, 5)], "+", "C grid (lr)"),
    "penalizers": ("--penalizers", float, list(PENALIZER_GRID), "+", "penalizer grid (cox)"),
    "threshold": ("--threshold", float, 0.5, None, "decision threshold on P(label 1)"),
}
_COMMANDS: dict[str, dict[str, tuple]] = {
    "synth": {
        "spec": ("--spec", str, None, None, "SynthSpec JSON (default: built-in cohort description)"),
        "n": ("--n", int, 1018, None, "rows to generate"),
        "seed": _COMMON["seed"], "out": _COMMON["out"], "threads": _COMMON["threads"],
    },
    "preprocess": {
        "input": _COMMON["input"], "out": _COMMON["out"], "seed": _COMMON["seed"],
        "threads": _COMMON["threads"], "label_days": _COMMON["label_days"],
        "columns": ("--columns", str, None, None, "JSON describing raw column kinds"),
        "report": ("--report", str, None, None, "selection report JSON (default: <out>.report.json)"),
        "methods": ("--methods", str, ["uniform", "quantile", "kmeans"], "+", "discretisation methods"),
        "bins": ("--bins", int, [2, 4, 6, 8, 10, 12], "+", "candidate bin counts"),
        "iterations": ("--iterations", int, 30000, None, "BRL iterations used while scoring binnings"),
    },
    "mine": {
        "input": _COMMON["input"], "out": _COMMON["out"], "schema": _COMMON["schema"],
        "seed": _COMMON["seed"], "threads": _COMMON["threads"], "label_days": _COMMON["label_days"],
        **_MINING,
    },
    "train": {
        "input": _COMMON["input"], "out": _COMMON["out"], "schema": _COMMON["schema"],
        "seed": _COMMON["seed"], "threads": _COMMON["threads"], "label_days": _COMMON["label_days"],
        "model": ("--model", str, "brl", None, "brl | frl | cox | rf | lr"),
        **_MINING, **_BRL,
    },
    "eval": {
        "input": _COMMON["input"], "out": _COMMON["out"], "schema": _COMMON["schema"],
        "seed": _COMMON["seed"], "threads": _COMMON["threads"], "label_days": _COMMON["label_days"],
        "model": ("--model", str, "brl", None, "brl | frl | cox | rf | lr | majority"),
        "inner": ("--inner", int, 3, None, "inner folds"),
        "outer": ("--outer", int, 5, None, "outer folds"),
        "seeds": ("--seeds", int, 3, None, "outer repetitions"),
        "grid": ("--grid", json.loads, None, None, "inner search grid as JSON, e.g. '{\"lam\": [2, 3]}'"),
        **_MINING, **_BRL,
    },
    "explain": {
        "model_path": ("--model", str, None, None, "trained model JSON"),
        "input": _COMMON["input"], "out": _COMMON["out"], "schema": _COMMON["schema"],
        "seed": _COMMON["seed"], "threads": _COMMON["threads"], "label_days": _COMMON["label_days"],
        "instance": ("--instance", int, 0, None, "row of --in to explain (surrogate)"),
        "method": ("--method", str, "surrogate", None, "surrogate | permutation | cox-coef"),
        "samples": ("--samples", int, 5000, None, "perturbation samples (surrogate)"),
        "kernel_width": ("--kernel-width", float, 0.25, None, "proximity kernel width (surrogate)"),
        "repeats": ("--repeats", int, 10, None, "shuffles per feature (permutation)"),
    },
}
_REQUIRED = {"synth": ["out"], "preprocess": ["input", "out", "columns"], "mine": ["input", "out"],
             "train": ["input", "out"], "eval": ["input", "out"], "explain": ["model_path", "input", "out"]}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="survrules", description="Rule-list survival classifiers and comparators.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, table in _COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=argparse.SUPPRESS, help="JSON file of option values")
        for dest, (flag, typ, _default, nargs, help_) in table.items():
            kw = {"dest": dest, "type": typ, "default": argparse.SUPPRESS, "help": help_}
            if nargs is not None:
                kw["nargs"] = nargs
            p.add_argument(flag, **kw)
    return parser


def _coerce(key, value, spec, path):
    """Check a config-file value against the option's flag type."""
    _flag, typ, _default, nargs, _help = spec
    if value is None:
        return None

    def one(v):
        if typ is json.loads:
            if not isinstance(v, dict):
                raise ConfigError(f"config {path}: {key} must be a JSON object")
            return v
        if typ is float and isinstance(v, (int, float)) and not isinstance(v, bool):
            return float(v)
        if typ is int and isinstance(v, int) and not isinstance(v, bool):
            return v
        if typ is str and isinstance(v, str):
            return v
        raise ConfigError(f"config {path}: {key} has value {v!r}, expected {typ.__name__}")

    if nargs is None:
        return one(value)
    if not isinstance(value, list) or (isinstance(nargs, int) and len(value) != nargs) or not value:
        raise ConfigError(f"config {path}: {key} must be a list" + (f" of {nargs}" if isinstance(nargs, int) else ""))
    return [one(v) for v in value]


def resolve(argv) -> tuple[str, dict]:
    """Parse ``argv`` into (command, options): defaults, then config file, then flags."""
    ns = vars(build_parser().parse_args(argv))
    command = ns.pop("command")
    if command is None:
        raise UsageError("a subcommand is required: " + ", ".join(_COMMANDS))
    table = _COMMANDS[command]
    opts = {dest: spec[2] for dest, spec in table.items()}
    if "config" in ns:
        path = ns.pop("config")
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        unknown = sorted(set(doc) - set(table))
        if unknown:
            raise ConfigError(f"config {path}: unknown key(s) {unknown}")
        for key, value in doc.items():
            opts[key] = _coerce(key, value, table[key], path)
    opts.update(ns)
    missing = [table[d][0] for d in _REQUIRED[command] if opts.get(d) is None]
    if missing:
        raise UsageError(f"{command}: missing required option(s) {' '.join(missing)}")
    return command, opts


# --------------------------------------------------------------------------- #
# helpers

def _write_text(path, text: str) -> None:
    Path(path).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


def _write_json(path, doc) -> None:
    _write_text(path, json.dumps(doc, indent=2, sort_keys=True))


def _echo_config(out: str, command: str, opts: dict) -> None:
    _write_json(f"{out}.config.json", {"command": command, **opts})


def _schema_path(opts) -> Path:
    if opts.get("schema"):
        return Path(opts["schema"])
    return Path(opts["input"]).with_suffix(".schema.json")


def _load_dataset(opts) -> D.CategoricalDataset:
    path = _schema_path(opts)
    if not path.exists():
        raise SchemaError(f"schema file {path} not found (pass --schema)")
    try:
        schema = D.FeatureSchema.from_dict(D.load_json(path))
    except (ValueError, KeyError, TypeError) as exc:
        raise SchemaError(f"bad schema file {path}: {exc}") from None
    return D.load_csv(opts["input"], schema, opts["label_days"])


def _brl_hyper(opts) -> BrlHyper:
    iters = opts["iterations"] if opts["iterations"] is not None else 30000
    burn = opts["burn_in"] if opts["burn_in"] is not None else iters // 2
    return BrlHyper(lam=opts["lam"], eta=opts["eta"], alpha=tuple(opts["alpha"]), chains=opts["chains"],
                    iterations=iters, burn_in=burn, thin=opts["thin"], seed=opts["seed"])


def _frl_hyper(opts) -> FrlHyper:
    iters = opts["iterations"] if opts["iterations"] is not None else 20000
    return FrlHyper(lam=opts["lam"], alpha=tuple(opts["alpha"]), iterations=iters,
                    warm_iterations=opts["warm_iterations"], t0=opts["t0"], decay=opts["decay"],
                    t_min=opts["t_min"], restarts=opts["restarts"], seed=opts["seed"])


def make_estimator(opts: dict, seed: int | None = None):
    """Unfitted estimator for ``opts['model']`` built from resolved options."""
    from .baselines import LogisticClassifier, RandomForestClassifier

    seed = opts["seed"] if seed is None else seed
    o = {**opts, "seed": seed}
    mining = dict(min_support=o["min_support"], min_confidence=o["min_confidence"], max_cardinality=o["max_card"])
    model = o["model"]
    if model == "brl":
        return BayesianRuleList(_brl_hyper(o), threshold=o["threshold"], **mining)
    if model == "frl":
        return FallingRuleListClassifier(_frl_hyper(o), threshold=o["threshold"], **mining)
    if model == "cox":
        return CoxClassifier(tuple(o["penalizers"]), o["label_days"], seed)
    if model == "rf":
        return RandomForestClassifier(tuple(o["trees"]), seed, o["threads"])
    if model == "lr":
        return LogisticClassifier(tuple(o["c_grid"]), seed)
    raise UsageError(f"unknown model {model!r}")


def load_model(doc: dict):
    from .baselines import LogisticClassifier, RandomForestClassifier

    kinds = {"brl": BayesianRuleList, "frl": FallingRuleListClassifier, "cox": CoxClassifier,
             "rf": RandomForestClassifier, "lr": LogisticClassifier}
    kind = doc.get("model")
    if kind not in kinds:
        raise SchemaError(f"unrecognised model document (model={kind!r})")
    return kinds[kind].from_dict(doc)


def _onehot_proba(model, schema: D.FeatureSchema):
    """Adapt a dataset-level predictor to one-hot input rows."""
    groups = schema.column_groups()

    def f(X):
        X = np.asarray(X)
        rows = np.column_stack([np.argmax(X[:, g], axis=1) for g in groups])
        n = len(rows)
        ds = D.CategoricalDataset(schema, rows, np.full(n, 1000), np.zeros(n, dtype=bool))
        return model.predict_proba(ds)
    return f


def _check_schema(model, ds: D.CategoricalDataset) -> None:
    if model.schema is not None and model.schema.to_dict() != ds.schema.to_dict():
        raise SchemaError("dataset schema differs from the schema the model was trained on")


# --------------------------------------------------------------------------- #
# commands

def cmd_synth(o: dict) -> None:
    spec = D.SynthSpec.from_dict(D.load_json(o["spec"])) if o["spec"] else D.paper_synth_spec()
    ds = D.synth_generate(spec, o["n"], o["seed"])
    D.write_csv(ds, o["out"])
    _write_json(Path(o["out"]).with_suffix(".schema.json"), ds.schema.to_dict())
    _echo_config(o["out"], "synth", o)


def _read_raw(path, columns_doc, label_days):
    from .preprocess import CONTINUOUS, RawColumn

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        recs = list(reader)
        header = reader.fieldnames or []
    specs = columns_doc["columns"]
    for c in [s["name"] for s in specs] + list(D.REQUIRED_COLUMNS):
        if c not in header:
            raise SchemaError(f"{path}: missing required column {c!r}")
    cols = []
    for s in specs:
        vals = []
        for i, r in enumerate(recs, start=2):
            v = r[s["name"]].strip()
            if v == "":
                vals.append(None)
            elif s["kind"] == CONTINUOUS:
                try:
                    vals.append(float(v))
                except ValueError:
                    raise SchemaError(f"{path}: row {i}, column {s['name']!r}: non-numeric value {v!r}") from None
            else:
                vals.append(v)
        bounds = tuple(s["bounds"]) if s.get("bounds") else None
        cols.append(RawColumn(s["name"], s["kind"], vals, bounds))
    try:
        days = np.array([int(float(r["survival_days"])) for r in recs], dtype=np.int64)
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric survival_days ({exc})") from None
    events = np.array([r["event_observed"].strip().lower() in D._TRUE for r in recs], dtype=bool)
    return cols, days, events


def cmd_preprocess(o: dict) -> None:
    from .preprocess import (CATEGORICAL, add_discretised_feature, fit_discretiser, select_discretiser,
                             select_imputer, IMPUTERS)

    columns_doc = D.load_json(o["columns"])
    cols, days, events = _read_raw(o["input"], columns_doc, o["label_days"])
    report = {"imputation": {}, "discretisation": {}}
    complete = [c for c in cols if not c.missing.any()]
    filled = []
    for c in cols:
        if c.missing.any():
            method, score, rows = select_imputer(c, complete, seed=o["seed"])
            report["imputation"][c.name] = {"chosen": method, "score": score, "candidates": rows}
            c = IMPUTERS[method](c, complete)
        filled.append(c)
    cat_cols = [c for c in filled if c.kind == CATEGORICAL]
    feats = tuple(D.Feature(c.name, tuple(sorted(set(c.values)))) for c in cat_cols)
    rows = np.array([[f.categories.index(v) for v in c.values] for f, c in zip(feats, cat_cols)],
                    dtype=np.int64).T.reshape(len(days), len(feats))
    ds = D.CategoricalDataset(D.FeatureSchema(feats), rows, days, events,
                              D.make_labels(days, events, o["label_days"]))
    hyper = BrlHyper(iterations=o["iterations"], burn_in=o["iterations"] // 2, seed=o["seed"])
    for c in filled:
        if c.kind == CATEGORICAL:
            continue
        values = np.array(c.values, dtype=float)
        choice, rows_ = select_discretiser(ds, c.name, values, o["methods"], o["bins"], seed=o["seed"],
                                           learner_factory=lambda: BayesianRuleList(hyper))
        if choice is None:
            raise RuntimeError(f"no discretisation candidate succeeded for {c.name!r}")
        d = fit_discretiser(values, *choice)
        report["discretisation"][c.name] = {"chosen": d.to_dict(), "candidates": rows_}
        ds = add_discretised_feature(ds, c.name, values, d)
    D.write_csv(ds, o["out"])
    _write_json(Path(o["out"]).with_suffix(".schema.json"), ds.schema.to_dict())
    _write_json(o["report"] or f"{o['out']}.report.json", report)
    _echo_config(o["out"], "preprocess", o)


def cmd_mine(o: dict) -> None:
    from .rulemine import mine_antecedents

    ds = _load_dataset(o)
    rules = mine_antecedents(ds, o["min_support"], o["min_confidence"], o["max_card"])
    _write_json(o["out"], [r.to_json(ds.schema) for r in rules])
    _echo_config(o["out"], "mine", o)


def cmd_train(o: dict) -> None:
    ds = _load_dataset(o)
    model = make_estimator(o).fit(ds)
    _write_json(o["out"], model.to_dict())
    if hasattr(model, "render"):
        text = model.render()
        _write_text(f"{o['out']}.txt", text)
        print(text)
    _echo_config(o["out"], "train", o)


def cmd_eval(o: dict) -> None:
    from .evaluation import LearnerSpec, _grid, format_table, learner, nested_cv

    ds = _load_dataset(o)
    grid = _grid(**o["grid"]) if o["grid"] else [{}]
    if o["model"] == "majority":
        spec = learner("majority")
    else:
        def factory(params, seed):
            return make_estimator({**o, **params}, seed)
        spec = LearnerSpec(o["model"], factory, grid, scores=o["model"] != "cox")
    report = nested_cv(spec, ds, o["inner"], o["outer"], o["seeds"], base_seed=o["seed"])
    _write_text(f"{o['out']}", report.to_json())
    _write_text(f"{o['out']}.table.txt", format_table([report]))
    report.write_roc_csv(f"{o['out']}.roc.csv")
    print(format_table([report]))
    _echo_config(o["out"], "eval", o)


def cmd_explain(o: dict) -> None:
    from .baselines import local_surrogate_explain, permutation_importance
    from .evaluation import stratified_folds

    model = load_model(D.load_json(o["model_path"]))
    ds = _load_dataset(o)
    _check_schema(model, ds)
    method = o["method"]
    if method == "surrogate":
        if isinstance(model, CoxClassifier):
            raise UsageError("the surrogate needs a probabilistic model (brl, frl, rf, lr)")
        if not 0 <= o["instance"] < len(ds):
            raise UsageError(f"--instance {o['instance']} outside 0..{len(ds) - 1}")
        exp = local_surrogate_explain(_onehot_proba(model, ds.schema), ds.rows[o["instance"]], ds,
                                      o["samples"], o["kernel_width"], o["seed"], instance_id=o["instance"])
        doc = {"method": "surrogate", **exp.to_dict()}
    elif method == "permutation":
        if isinstance(model, CoxClassifier):
            raise UsageError("permutation importance needs a probabilistic model (brl, frl, rf, lr)")
        X = D.one_hot_encode(ds).values
        imp = permutation_importance(_onehot_proba(model, ds.schema), X, ds.label, ds.schema.column_groups(),
                                     o["repeats"], o["seed"])
        doc = {"method": "permutation",
               "features": [{"feature": name, "mean": r["mean"], "std": r["std"]}
                            for name, r in zip(ds.schema.names, imp)]}
    elif method == "cox-coef":
        if not isinstance(model, CoxClassifier):
            raise UsageError("cox-coef needs a cox model")
        X = D.one_hot_encode(ds, drop_first=True).values
        names = ds.schema.column_names(drop_first=True)
        fits = []
        for test in stratified_folds(ds.label, 5, o["seed"]):
            tr = np.setdiff1d(np.arange(len(ds)), test)
            fits.append(cox_fit(X[tr], ds.survival_days[tr], ds.event_observed[tr], model.model.penalizer, names))
        doc = {"method": "cox-coef", "penalizer": model.model.penalizer, **cox_importance(fits)}
    else:
        raise UsageError(f"unknown explanation method {method!r}")
    _write_json(o["out"], doc)
    _echo_config(o["out"], "explain", o)


_HANDLERS = {"synth": cmd_synth, "preprocess": cmd_preprocess, "mine": cmd_mine, "train": cmd_train,
             "eval": cmd_eval, "explain": cmd_explain}


def _fail(kind: str, message: str, code: int) -> int:
    print(f"survrules: error[{kind}]: {' '.join(str(message).split())}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        command, opts = resolve(argv)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except ConfigError as exc:
        return _fail("config", exc, EXIT_CONFIG)
    try:
        _HANDLERS[command](opts)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except SchemaError as exc:
        return _fail("schema", exc, EXIT_SCHEMA)
    except Exception as exc:  # noqa: BLE001 - the CLI reports every failure as one line
        return _fail("runtime", f"{type(exc).__name__}: {exc}", EXIT_RUNTIME)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
