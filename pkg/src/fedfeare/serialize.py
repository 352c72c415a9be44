"""Rule-set JSON and tabular metric reports."""
from __future__ import annotations

import csv
import io
import json
import math
from typing import Sequence

from .core import (
    Condition,
    Direction,
    HyperParams,
    OpaqueSplit,
    Rule,
    RuleMetrics,
    RuleSet,
)
from .errors import FedFeareError, SchemaError

SCHEMA_VERSION = 1

REPORT_METRICS = RuleMetrics.FIELDS


def condition_to_dict(c: Condition) -> dict:
    if c.is_opaque:
        s = c.threshold
        return {"op": c.direction.value,
                "opaque": {"party": s.party, "feature_id": s.feature_id, "split_index": s.split_index}}
    return {"feature": c.feature, "op": c.direction.value, "threshold": c.threshold}


def condition_from_dict(d) -> Condition:
    if not isinstance(d, dict):
        raise SchemaError("condition must be an object")
    op = d.get("op")
    if op not in ("le", "gt"):
        raise SchemaError(f"condition op must be 'le' or 'gt', got {op!r}")
    try:
        if "opaque" in d:
            if "threshold" in d:
                raise SchemaError("opaque condition must not carry a threshold")
            o = d["opaque"]
            split = OpaqueSplit(str(o["party"]), _int(o["feature_id"]), _int(o["split_index"]))
            return Condition.opaque(split, Direction(op))
        t = d["threshold"]
        if isinstance(t, bool) or not isinstance(t, (int, float)):
            raise SchemaError("threshold must be a number")
        return Condition(str(d["feature"]), Direction(op), float(t))
    except KeyError as e:
        raise SchemaError(f"condition lacks field {e}") from None
    except FedFeareError as e:
        if isinstance(e, SchemaError):
            raise
        raise SchemaError(str(e)) from None


def _int(v) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaError(f"expected integer, got {v!r}")
    return v


def ruleset_to_dict(rs: RuleSet) -> dict:
    rules = []
    for i, rule in enumerate(rs.rules):
        entry = {"conditions": [condition_to_dict(c) for c in rule]}
        if rs.per_rule_metrics:
            entry["metrics"] = rs.per_rule_metrics[i].to_dict()
        rules.append(entry)
    out = {"version": SCHEMA_VERSION, "params": rs.params.to_dict(), "rules": rules}
    if rs.encodings:
        out["encodings"] = {k: dict(v) for k, v in rs.encodings.items()}
    return out


def ruleset_from_dict(d) -> RuleSet:
    if not isinstance(d, dict):
        raise SchemaError("rule set must be an object")
    if d.get("version") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported rule-set version {d.get('version')!r}")
    try:
        params = HyperParams(**d["params"])
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"bad params: {e}") from None
    rules, metrics = [], []
    raw_rules = d.get("rules")
    if not isinstance(raw_rules, list):
        raise SchemaError("rules must be a list")
    for r in raw_rules:
        if not isinstance(r, dict) or not isinstance(r.get("conditions"), list):
            raise SchemaError("each rule needs a conditions list")
        try:
            rules.append(Rule(tuple(condition_from_dict(c) for c in r["conditions"])))
        except FedFeareError as e:
            raise SchemaError(str(e)) from None
        if "metrics" in r:
            m = r["metrics"]
            try:
                metrics.append(RuleMetrics(**{k: float(m[k]) for k in REPORT_METRICS}))
            except (KeyError, TypeError, ValueError) as e:
                raise SchemaError(f"bad metrics: {e}") from None
    if metrics and len(metrics) != len(rules):
        raise SchemaError("metrics present for only some rules")
    try:
        return RuleSet(tuple(rules), params, tuple(metrics), d.get("encodings", {}))
    except FedFeareError as e:
        raise SchemaError(str(e)) from None


def ruleset_to_json(rs: RuleSet) -> str:
    return json.dumps(ruleset_to_dict(rs), indent=2, allow_nan=False) + "\n"


def ruleset_from_json(text: str) -> RuleSet:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"invalid JSON: {e}") from None
    return ruleset_from_dict(d)


# ---------------------------------------------------------------------------
# reports

def report_header(max_depth: int) -> list[str]:
    return ["rule"] + [f"node_logic_{i + 1}" for i in range(max_depth)] + list(REPORT_METRICS)


def report_rows(rs: RuleSet, metrics: Sequence[RuleMetrics] | None = None) -> list[list[str]]:
    """One row per rule: rule number, node logic per depth ('null' if absent), metrics."""
    metrics = rs.per_rule_metrics if metrics is None else metrics
    depth = rs.params.max_depth
    rows = []
    for i, (rule, m) in enumerate(zip(rs.rules, metrics)):
        logic = [_logic(c) for c in rule] + ["null"] * (depth - len(rule))
        rows.append([str(i + 1)] + logic + [_fmt(getattr(m, k)) for k in REPORT_METRICS])
    return rows


def _logic(c: Condition) -> str:
    # exact threshold, unlike the rounded str() used for display
    if c.is_opaque:
        return str(c)
    return f"{c.feature} {c.direction.symbol} {float(c.threshold)!r}"


def _fmt(x: float) -> str:
    if math.isfinite(x):
        return repr(float(x))
    raise ValueError(f"non-finite metric {x}")


def report_csv(rs: RuleSet, metrics: Sequence[RuleMetrics] | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(report_header(rs.params.max_depth))
    w.writerows(report_rows(rs, metrics))
    return buf.getvalue()


def format_table(rs: RuleSet, metrics: Sequence[RuleMetrics] | None = None) -> str:
    """Transposed, human-readable table in the layout of a printed rule-set table."""
    metrics = rs.per_rule_metrics if metrics is None else metrics
    cols = [[f'"{i + 1}"'] for i in range(len(rs.rules))]
    labels = ["rule number"]
    for d in range(rs.params.max_depth):
        labels.append("node logic")
        for c, rule in zip(cols, rs.rules):
            c.append(str(rule.conditions[d]) if d < len(rule) else "null")
    pct = {"pi", "cpi", "precision", "recall", "cp", "cr"}
    for k in REPORT_METRICS:
        labels.append(k.replace("f_score", "F-score"))
        for c, m in zip(cols, metrics):
            v = getattr(m, k)
            c.append(f"{100 * v:.3g}%" if k in pct else f"{v:.3g}")
    widths = [max(len(x) for x in labels)] + [max(len(x) for x in c) for c in cols]
    lines = []
    for i, lab in enumerate(labels):
        cells = [lab.ljust(widths[0])] + [c[i].ljust(w) for c, w in zip(cols, widths[1:])]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"
