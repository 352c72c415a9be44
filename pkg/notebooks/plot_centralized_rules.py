"""
Rules from an imbalanced table
==============================

Plant two rules in a synthetic table with 1% positives and learn them back.
"""

import numpy as np

from fedfeare import HyperParams, SyntheticSpec, format_table, gen_synthetic, learn_rule_set

# integer grid 0..99 on every feature; positives come from two conjunctions
spec = SyntheticSpec.from_dict({
    "n_rows": 10_000, "n_features": 6, "positive_rate": 0.01, "seed": 1,
    "low": 0, "high": 100, "levels": 100,
    "rules": [
        [{"feature": "x0", "op": "gt", "threshold": 98.5}, {"feature": "x1", "op": "gt", "threshold": 49.5}],
        [{"feature": "x0", "op": "le", "threshold": 0.5}, {"feature": "x2", "op": "le", "threshold": 49.5}],
    ],
})
data, truth = gen_synthetic(spec)
print(data, "positives:", data.n_positive)

rs = learn_rule_set(data, HyperParams())
print(format_table(rs))

# the learned rules cover exactly the planted rows
for planted in truth.rules:
    hit = any(np.array_equal(planted.mask(data), r.mask(data)) for r in rs.rules)
    print(planted, "->", "recovered" if hit else "missed")

# beta < 1 leans toward precision, beta > 1 toward recall
for beta in (0.5, 2.0):
    alt = learn_rule_set(data, HyperParams(beta=beta))
    print(f"beta={beta}:", [str(r) for r in alt.rules])
