"""
Imputation and discretisation
=============================

Raw clinical columns have gaps and continuous values. Each gap-filling method
is scored by hiding known values fold by fold. Each binning of a continuous
column is scored by the cross-validated accuracy of a rule list trained with
it.
"""

import numpy as np

from survrules.brl import BayesianRuleList, BrlHyper
from survrules.data import CategoricalDataset, Feature, FeatureSchema
from survrules.preprocess import RawColumn, fit_discretiser, select_discretiser, select_imputer

rng = np.random.default_rng(0)
n = 300
age = rng.uniform(20, 90, n)
grade = rng.choice(["low", "high"], n)
size = np.clip(20 + 0.8 * age + rng.normal(0, 5, n), 0, 120)
size_obs = [None if rng.random() < 0.1 else float(v) for v in size]

cols = [RawColumn("age", "continuous", age.tolist()), RawColumn("grade", "categorical", grade.tolist())]
choice, score, report = select_imputer(RawColumn("size", "continuous", size_obs, (0, 120)), cols, seed=0)
print(f"imputer for size: {choice} (MSE {score:.2f})")
for r in report:
    print(f"  {r['candidate']:10s} {r['mean']}")

label = ((age < 60) ^ (rng.random(n) < 0.1)).astype(int)
schema = FeatureSchema((Feature("grade", ("low", "high")),))
ds = CategoricalDataset(schema, (grade == "high").astype(int)[:, None], np.where(label == 1, 500, 100),
                        np.ones(n, bool))
pick, _ = select_discretiser(ds, "age", age, bin_counts=(2, 4, 6),
                             learner_factory=lambda: BayesianRuleList(BrlHyper(iterations=2000, burn_in=1000)))
print("\nbest binning for age:", pick)
print("cut points:", fit_discretiser(age, *pick).cut_points)
