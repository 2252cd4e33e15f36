"""
Explaining the black boxes
==========================

Random forest and logistic regression are the accuracy references. Three
post-hoc views follow: permutation importance (AUROC drop per shuffled
feature), greedy forward feature selection, and a local linear surrogate for
a single patient.
"""

from survrules.baselines import (RandomForestClassifier, local_surrogate_explain, permutation_importance,
                                 sequential_feature_selection)
from survrules.data import one_hot_encode, paper_synth_spec, synth_generate

train = synth_generate(paper_synth_spec(), 1018, seed=0)
test = synth_generate(paper_synth_spec(), 500, seed=1)
forest = RandomForestClassifier(tree_count_grid=(100,), seed=0).fit(train)
X_test = one_hot_encode(test).values

importance = permutation_importance(forest.forest.predict_proba, X_test, test.label,
                                    test.schema.column_groups(), repeats=5, seed=0)
ranked = sorted(zip(test.schema.names, importance), key=lambda kv: -kv[1]["mean"])
print("permutation importance (AUROC drop):")
for name, r in ranked[:5]:
    print(f"  {name:28s} {r['mean']:.3f} +/- {r['std']:.3f}")

# Forward selection is slow with many columns; a small forest keeps it quick.
X_train = one_hot_encode(train).values
picked = sequential_feature_selection(X_train, train.label, k=3, folds=3, tree_count=20)
print("\nforward selection:", [one_hot_encode(train).column_names[j] for j in picked])

exp = local_surrogate_explain(forest.forest.predict_proba, test.rows[0], train, n_samples=3000, seed=0,
                              instance_id=0)
print(f"\nlocal surrogate for patient 0 (weighted R2 {exp.fidelity:.2f}):")
for t in exp.top[:5]:
    print(f"  {t['column']:45s} {t['weight']:+.3f}")
