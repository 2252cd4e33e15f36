"""
Bayesian Rule Lists
===================

A Bayesian rule list is sampled by Metropolis-Hastings over orderings of the
mined antecedents. The reported list is the best sample whose length and
rule sizes match the posterior averages; every rule carries a 95% credible
interval.
"""

from survrules.brl import BayesianRuleList, BrlHyper
from survrules.data import paper_synth_spec, synth_generate

train = synth_generate(paper_synth_spec(), 1018, seed=0)
test = synth_generate(paper_synth_spec(), 500, seed=1)

model = BayesianRuleList(BrlHyper(lam=3.0, eta=1.0, iterations=10_000, burn_in=5_000, seed=0)).fit(train)
print(model.render())
print(f"\n{model.n_antecedents} mined antecedents; held-out accuracy {(model.predict(test) == test.label).mean():.3f}")

# mode="post" averages predictions over all posterior samples instead of using one list.
averaged = BayesianRuleList(BrlHyper(iterations=4_000, burn_in=2_000), mode="post").fit(train)
print("posterior-averaged accuracy", round(float((averaged.predict(test) == test.label).mean()), 3))
