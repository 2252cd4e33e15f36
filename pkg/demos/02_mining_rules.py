"""
Mining candidate antecedents
============================

Rule lists choose from a pool of frequent itemsets. FP-Growth finds every
feature-value combination above a support threshold; we then keep those
whose majority label is confident enough.
"""

from survrules.data import paper_synth_spec, synth_generate
from survrules.rulemine import describe, fp_growth, mine_antecedents

cohort = synth_generate(paper_synth_spec(), 1018, seed=0)

# FP-Growth works on any list of transactions.
baskets = [["bread", "milk"], ["bread", "beer"], ["milk", "beer", "bread"], ["milk"]]
for itemset, count in fp_growth(baskets, 0.5):
    print(itemset, count)

rules = mine_antecedents(cohort, min_support=0.10, min_confidence=0.80, max_cardinality=2)
print(f"\n{len(rules)} antecedents pass 10% support and 80% confidence")
for r in sorted(rules, key=lambda r: -r.confidence)[:8]:
    print(f"  {describe(r.antecedent, cohort.schema):60s} support {r.support:.2f}  "
          f"confidence {r.confidence:.2f} -> label {r.majority}")
