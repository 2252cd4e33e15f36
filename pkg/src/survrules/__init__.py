"""Interpretable one-year survival classifiers built from mined rules.

The package turns a categorical patient table into ordered IF/ELSE rule
lists (Bayesian and falling variants), compares them with a penalized Cox
model, a random forest and logistic regression under nested
cross-validation, and offers permutation importance and local surrogate
explanations for the black-box models.
"""

from .brl import BayesianRuleList, BrlHyper, DecisionList, brl_point, log_likelihood, log_prior, mcmc_sample
from .coxph import CoxClassifier, CoxModel, cox_fit, cox_importance, cox_predict_survival_days, select_penalizer
from .data import (PAPER_SCHEMA, BinaryMatrix, CategoricalDataset, Feature, FeatureSchema, MergeRule, SchemaError,
                   SynthSpec, load_csv, make_labels, merge_collinear, one_hot_encode, paper_synth_spec,
                   synth_generate, write_csv)
from .evaluation import (EvalReport, accuracy, auroc, format_table, learner, macro_f1, nested_cv, roc_curve,
                         stratified_folds)
from .frl import FallingRuleList, FallingRuleListClassifier, FrlHyper, frl_fit, frl_predict, frl_score
from .rulemine import MinedRule, confidence, fp_growth, mine_antecedents, support

__all__ = [
    "BayesianRuleList", "BinaryMatrix", "BrlHyper", "CategoricalDataset", "CoxClassifier", "CoxModel",
    "DecisionList", "EvalReport", "FallingRuleList", "FallingRuleListClassifier", "Feature", "FeatureSchema",
    "FrlHyper", "MergeRule", "MinedRule", "PAPER_SCHEMA", "SchemaError", "SynthSpec", "accuracy", "auroc",
    "brl_point", "confidence", "cox_fit", "cox_importance", "cox_predict_survival_days", "format_table",
    "fp_growth", "frl_fit", "frl_predict", "frl_score", "learner", "load_csv", "log_likelihood", "log_prior",
    "macro_f1", "make_labels", "mcmc_sample", "merge_collinear", "mine_antecedents", "nested_cv",
    "one_hot_encode", "paper_synth_spec", "roc_curve", "select_penalizer", "stratified_folds", "support",
    "synth_generate", "write_csv",
]
