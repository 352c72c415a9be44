"""
Two parties, one set of rows
============================

The active party holds labels and some columns; the passive party holds the
other columns. Thresholds on passive columns never leave the passive party.
"""

from fedfeare import HyperParams, SyntheticSpec, format_table, gen_synthetic
from fedfeare.federation import simulate_vertical, split_columns, vertical_oracle

data, _ = gen_synthetic(SyntheticSpec.from_dict({
    "n_rows": 2000, "n_features": 4, "seed": 3, "levels": 20,
    "rules": [[{"feature": "x0", "op": "gt", "threshold": 0.7}, {"feature": "x3", "op": "le", "threshold": 0.3}]],
}))
active, passive = split_columns(data, 2)
print("active:", active.feature_names, "passive:", passive.feature_names)

# 256-bit keys keep the demo quick; use 1024 or more for anything real
res = simulate_vertical(active, passive, HyperParams(), key_bits=256, seed=0)

# what the active party sees: passive conditions are table references
print(format_table(res.ruleset))
print("passive split table:", res.table.to_dict()["entries"])

# joining the two views gives the centralized answer
central = vertical_oracle(active, passive, HyperParams())
print("same as centralized:", res.plaintext_ruleset.same_rules(central))

kinds = [m.kind for m in res.transcript.messages()]
print({k: kinds.count(k) for k in sorted(set(kinds))})
