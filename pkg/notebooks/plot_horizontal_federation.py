"""
Three banks, one schema
=======================

Each guest holds different rows. A coordinator holds the key, and masked
encrypted histograms travel around the ring of guests.
"""

import random

from fedfeare import HyperParams, SyntheticSpec, format_table, gen_synthetic, learn_rule_set
from fedfeare.federation import horizontal_oracle, simulate_horizontal, split_rows

data, _ = gen_synthetic(SyntheticSpec.from_dict({
    "n_rows": 3000, "n_features": 3, "seed": 5, "levels": 25, "noise": 0.002,
    "rules": [[{"feature": "x1", "op": "gt", "threshold": 0.8}, {"feature": "x2", "op": "gt", "threshold": 0.5}]],
}))
parts = split_rows(data, 3, random.Random(0))

# one guest alone
print(format_table(learn_rule_set(parts[0])))

res = simulate_horizontal(parts, HyperParams(), key_bits=256, seed=0, keep_histograms=True)
print(format_table(res.ruleset))
print("same as pooled training:", res.ruleset.same_rules(horizontal_oracle(parts, HyperParams())))

# the coordinator decrypts only ring totals; guests see ciphertexts
first = res.report.global_histograms[0][1]
print("x1 totals per bin:", [t for t, _ in first.bins])
print("passes:", res.report.passes, "histograms:", res.report.histograms)
