import csv
import io
import json

import numpy as np
import pytest

from fedfeare import (
    Condition,
    Dataset,
    Direction,
    HyperParams,
    OpaqueSplit,
    Rule,
    RuleSet,
    learn_rule_set,
    ruleset_from_json,
    ruleset_to_json,
)
from fedfeare.errors import SchemaError
from fedfeare.serialize import format_table, report_csv, report_header
from conftest import random_dataset


def trained():
    return learn_rule_set(random_dataset(np.random.default_rng(3), n_rows=80, n_features=3, distinct=6))


def test_round_trip_trained():
    rs = trained()
    back = ruleset_from_json(ruleset_to_json(rs))
    assert back.same_rules(rs)
    assert back.per_rule_metrics == rs.per_rule_metrics
    assert back.params == rs.params


def test_thresholds_exact():
    t = 0.1 + 0.2  # not representable in few digits
    rs = RuleSet((Rule((Condition("x", Direction.LE, t),)),), HyperParams())
    assert ruleset_from_json(ruleset_to_json(rs)).rules[0].conditions[0].threshold == t


def test_opaque_has_no_threshold():
    c = Condition.opaque(OpaqueSplit("A", 1, 2), Direction.GT)
    rs = RuleSet((Rule((c,)),), HyperParams())
    d = json.loads(ruleset_to_json(rs))
    (cond,) = d["rules"][0]["conditions"]
    assert "threshold" not in cond and "feature" not in cond
    assert cond["opaque"] == {"party": "A", "feature_id": 1, "split_index": 2}
    assert ruleset_from_json(ruleset_to_json(rs)).same_rules(rs)


def base_doc():
    return {"version": 1, "params": HyperParams().to_dict(),
            "rules": [{"conditions": [{"feature": "x", "op": "le", "threshold": 1.0}]}]}


@pytest.mark.parametrize("mutate", [
    lambda d: d["rules"][0]["conditions"][0].update(op="ge"),
    lambda d: d.update(version=2),
    lambda d: d["rules"][0]["conditions"][0].pop("threshold"),
    lambda d: d["rules"][0]["conditions"][0].update(threshold="1"),
    lambda d: d["rules"][0].update(conditions=[]),
    lambda d: d["params"].update(max_depth=0),
    lambda d: d["rules"][0]["conditions"][0].update(opaque={"party": "A", "feature_id": 0, "split_index": 0}),
])
def test_schema_violations(mutate):
    d = base_doc()
    mutate(d)
    with pytest.raises(SchemaError):
        ruleset_from_json(json.dumps(d))


def test_not_json():
    with pytest.raises(SchemaError):
        ruleset_from_json("{")


def test_report_columns():
    rs = trained()
    rows = list(csv.reader(io.StringIO(report_csv(rs))))
    assert rows[0] == report_header(3) == [
        "rule", "node_logic_1", "node_logic_2", "node_logic_3",
        "pi", "cpi", "f_score", "precision", "recall", "cp", "cr", "cl"]
    assert len(rows) == 1 + len(rs.rules)
    assert all(len(r) == 12 for r in rows)


def test_report_pads_with_null():
    d = Dataset.from_arrays([[0.0], [1.0], [2.0], [3.0]], [0, 0, 1, 1])
    rs = learn_rule_set(d)
    row = list(csv.reader(io.StringIO(report_csv(rs))))[1]
    assert row[1] == "x0 > 1.5" and row[2:4] == ["null", "null"]


def test_table_layout():
    text = format_table(trained())
    labels = [line.split("  ")[0].strip() for line in text.splitlines()]
    assert labels == ["rule number", "node logic", "node logic", "node logic", "pi", "cpi",
                      "F-score", "precision", "recall", "cp", "cr", "cl"]
