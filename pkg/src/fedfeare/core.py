"""Domain types and rule/metric arithmetic.

Everything here is shared by the centralized inducer and the federated
parties, so that both paths compute F-scores with the very same floating
point operations.
"""
from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    InvalidDataError,
    InvalidRuleError,
    LabelDomainError,
    MissingLabelsError,
    OpaqueConditionError,
)

NUMERIC = "numeric"
CATEGORICAL = "categorical"


class Direction(str, enum.Enum):
    LE = "le"
    GT = "gt"

    @property
    def symbol(self) -> str:
        return "<=" if self is Direction.LE else ">"


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Columnar table with optional binary labels and stable instance ids.

    Numeric columns are float64 with NaN marking a missing value.
    Categorical columns are object arrays; see :func:`encode_categoricals`.
    """

    feature_names: tuple
    feature_kinds: tuple
    columns: tuple
    labels: np.ndarray | None = None
    instance_ids: tuple | None = None
    encodings: Mapping[str, Mapping[str, int]] = field(default_factory=dict)

    def __post_init__(self):
        names = tuple(str(n) for n in self.feature_names)
        kinds = tuple(self.feature_kinds)
        if len(set(names)) != len(names):
            raise InvalidDataError("duplicate feature names")
        if len(kinds) != len(names) or len(self.columns) != len(names):
            raise InvalidDataError("feature_names, feature_kinds and columns differ in length")
        cols = []
        n = None
        for name, kind, col in zip(names, kinds, self.columns):
            if kind == NUMERIC:
                arr = np.array(col, dtype=np.float64)
                if np.isinf(arr).any():
                    raise InvalidDataError(f"non-finite value in column {name!r}")
            elif kind == CATEGORICAL:
                arr = np.array(col, dtype=object)
            else:
                raise InvalidDataError(f"unknown feature kind {kind!r}")
            if arr.ndim != 1:
                raise InvalidDataError(f"column {name!r} is not one-dimensional")
            if n is None:
                n = len(arr)
            elif len(arr) != n:
                raise InvalidDataError(f"column {name!r} has length {len(arr)}, expected {n}")
            cols.append(_frozen(arr))

        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels)
            if labels.ndim != 1:
                raise InvalidDataError("labels must be one-dimensional")
            if n is None:
                n = len(labels)
            elif len(labels) != n:
                raise InvalidDataError(f"labels have length {len(labels)}, expected {n}")
            if labels.size and not np.isin(labels, (0, 1)).all():
                raise LabelDomainError("labels must be 0 or 1")
            labels = _frozen(labels.astype(np.int64))

        ids = self.instance_ids
        if ids is None:
            ids = tuple(str(i) for i in range(n or 0))
        else:
            ids = tuple(str(i) for i in ids)
            if n is None:
                n = len(ids)
            elif len(ids) != n:
                raise InvalidDataError(f"instance_ids have length {len(ids)}, expected {n}")
            if len(set(ids)) != len(ids):
                raise InvalidDataError("instance_ids are not unique")

        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "feature_kinds", kinds)
        object.__setattr__(self, "columns", tuple(cols))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "instance_ids", ids)
        object.__setattr__(self, "encodings", dict(self.encodings))

    # -- construction -----------------------------------------------------

    @classmethod
    def from_columns(cls, columns: Mapping[str, Sequence], labels=None, instance_ids=None,
                     kinds: Mapping[str, str] | None = None) -> "Dataset":
        """Build from a ``{name: values}`` mapping; kinds default to numeric."""
        kinds = kinds or {}
        names = list(columns)
        return cls(
            feature_names=tuple(names),
            feature_kinds=tuple(kinds.get(k, NUMERIC) for k in names),
            columns=tuple(columns[k] for k in names),
            labels=labels,
            instance_ids=instance_ids,
        )

    @classmethod
    def from_arrays(cls, X, y=None, feature_names=None, instance_ids=None) -> "Dataset":
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise InvalidDataError("X must be two-dimensional")
        if feature_names is None:
            feature_names = [f"x{i}" for i in range(X.shape[1])]
        return cls(
            feature_names=tuple(feature_names),
            feature_kinds=(NUMERIC,) * X.shape[1],
            columns=tuple(X[:, i] for i in range(X.shape[1])),
            labels=y,
            instance_ids=instance_ids,
        )

    # -- accessors --------------------------------------------------------

    @property
    def n_rows(self) -> int:
        if self.columns:
            return len(self.columns[0])
        return len(self.instance_ids)

    def __len__(self) -> int:
        return self.n_rows

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    @property
    def n_positive(self) -> int:
        self.require_labels()
        return int(self.labels.sum())

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            raise MissingLabelsError("dataset has no labels")
        return self.labels

    def index_of(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise InvalidRuleError(f"unknown feature {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.columns[self.index_of(name)]

    def take(self, rows) -> "Dataset":
        """Row subset, by integer indices or boolean mask."""
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        ids = self.instance_ids
        return Dataset(
            feature_names=self.feature_names,
            feature_kinds=self.feature_kinds,
            columns=tuple(c[rows] for c in self.columns),
            labels=None if self.labels is None else self.labels[rows],
            instance_ids=tuple(ids[i] for i in rows),
            encodings=self.encodings,
        )

    def select(self, names: Iterable[str]) -> "Dataset":
        idx = [self.index_of(n) for n in names]
        return Dataset(
            feature_names=tuple(self.feature_names[i] for i in idx),
            feature_kinds=tuple(self.feature_kinds[i] for i in idx),
            columns=tuple(self.columns[i] for i in idx),
            labels=self.labels,
            instance_ids=self.instance_ids,
            encodings={k: v for k, v in self.encodings.items() if k in set(names)},
        )

    def without_labels(self) -> "Dataset":
        return Dataset(self.feature_names, self.feature_kinds, self.columns, None,
                       self.instance_ids, self.encodings)

    def with_labels(self, labels) -> "Dataset":
        return Dataset(self.feature_names, self.feature_kinds, self.columns, labels,
                       self.instance_ids, self.encodings)

    def __repr__(self) -> str:
        lab = "labeled" if self.has_labels else "unlabeled"
        return f"Dataset(n_rows={self.n_rows}, features={list(self.feature_names)}, {lab})"


def concat_rows(parts: Sequence[Dataset]) -> Dataset:
    """Stack row-partitioned datasets that share one schema."""
    first = parts[0]
    for p in parts[1:]:
        if p.feature_names != first.feature_names or p.feature_kinds != first.feature_kinds:
            raise InvalidDataError("row partitions do not share a schema")
    labels = None
    if all(p.has_labels for p in parts):
        labels = np.concatenate([p.labels for p in parts])
    return Dataset(
        feature_names=first.feature_names,
        feature_kinds=first.feature_kinds,
        columns=tuple(np.concatenate([p.columns[i] for p in parts]) for i in range(first.n_features)),
        labels=labels,
        instance_ids=tuple(i for p in parts for i in p.instance_ids),
    )


def concat_columns(parts: Sequence[Dataset]) -> Dataset:
    """Join column-partitioned datasets on aligned instance ids; labels from whichever part has them."""
    first = parts[0]
    for p in parts[1:]:
        if p.instance_ids != first.instance_ids:
            raise InvalidDataError("column partitions are not aligned on instance_ids")
    labelled = [p for p in parts if p.has_labels]
    return Dataset(
        feature_names=tuple(n for p in parts for n in p.feature_names),
        feature_kinds=tuple(k for p in parts for k in p.feature_kinds),
        columns=tuple(c for p in parts for c in p.columns),
        labels=labelled[0].labels if labelled else None,
        instance_ids=first.instance_ids,
    )


# ---------------------------------------------------------------------------
# rules

@dataclass(frozen=True)
class OpaqueSplit:
    """Reference to a threshold that only the passive party knows."""

    party: str
    feature_id: int
    split_index: int

    def __post_init__(self):
        if self.split_index < 0:
            raise InvalidRuleError("split_index must be >= 0")
        if self.feature_id < 0:
            raise InvalidRuleError("feature_id must be >= 0")

    @property
    def feature_ref(self) -> str:
        return f"{self.party}:{self.feature_id}"


@dataclass(frozen=True)
class Condition:
    feature: str
    direction: Direction
    threshold: float | OpaqueSplit

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        if isinstance(self.threshold, OpaqueSplit):
            object.__setattr__(self, "feature", self.threshold.feature_ref)
        elif isinstance(self.threshold, (int, float, np.floating, np.integer)) \
                and not isinstance(self.threshold, bool):
            t = float(self.threshold)
            if not np.isfinite(t):
                raise InvalidRuleError("threshold must be finite")
            object.__setattr__(self, "threshold", t)
        else:
            raise InvalidRuleError(f"bad threshold {self.threshold!r}")

    @classmethod
    def opaque(cls, split: OpaqueSplit, direction: Direction) -> "Condition":
        return cls(split.feature_ref, direction, split)

    @property
    def is_opaque(self) -> bool:
        return isinstance(self.threshold, OpaqueSplit)

    def mask(self, values: np.ndarray) -> np.ndarray:
        """Rows satisfying the condition; missing values are never covered."""
        if self.is_opaque:
            raise OpaqueConditionError(f"condition on {self.feature} has an opaque threshold")
        return apply_direction(values, self.direction, self.threshold)

    def __str__(self) -> str:
        if self.is_opaque:
            s = self.threshold
            return f"{s.party}.f{s.feature_id} {self.direction.symbol} S[{s.split_index}]"
        return f"{self.feature} {self.direction.symbol} {self.threshold:g}"


def apply_direction(values: np.ndarray, direction: Direction, threshold: float) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        if direction is Direction.LE:
            return values <= threshold
        return values > threshold


@dataclass(frozen=True)
class Rule:
    """Conjunction of conditions in root-to-leaf order."""

    conditions: tuple

    def __post_init__(self):
        conds = tuple(self.conditions)
        if not conds:
            raise InvalidRuleError("a rule needs at least one condition")
        object.__setattr__(self, "conditions", conds)

    def __len__(self) -> int:
        return len(self.conditions)

    def __iter__(self):
        return iter(self.conditions)

    @property
    def is_plaintext(self) -> bool:
        return not any(c.is_opaque for c in self.conditions)

    def mask(self, data: Dataset) -> np.ndarray:
        m = np.ones(data.n_rows, dtype=bool)
        for c in self.conditions:
            if c.is_opaque:
                raise OpaqueConditionError(
                    f"rule holds opaque condition {c}; use joint_predict_vertical")
            m &= c.mask(data.column(c.feature))
        return m

    def __str__(self) -> str:
        return " AND ".join(str(c) for c in self.conditions)


@dataclass(frozen=True)
class HyperParams:
    max_depth: int = 3
    tree_number: int = 3
    pruning_min: float = 0.01
    beta: float = 1.0

    def __post_init__(self):
        if int(self.max_depth) != self.max_depth or self.max_depth < 1:
            raise ValueError("max_depth must be a positive integer")
        if int(self.tree_number) != self.tree_number or self.tree_number < 1:
            raise ValueError("tree_number must be a positive integer")
        if not self.pruning_min >= 0:
            raise ValueError("pruning_min must be non-negative")
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    def to_dict(self) -> dict:
        return {"max_depth": self.max_depth, "tree_number": self.tree_number,
                "pruning_min": self.pruning_min, "beta": self.beta}


@dataclass(frozen=True)
class SplitStats:
    n_cover: int
    n_correct: int
    n_target: int

    def __post_init__(self):
        if self.n_cover < 0 or self.n_target < 0 or self.n_correct < 0:
            raise ValueError("counts must be non-negative")
        if self.n_correct > min(self.n_cover, self.n_target):
            raise ValueError(f"n_correct={self.n_correct} exceeds min(n_cover, n_target)")


@dataclass(frozen=True)
class RuleMetrics:
    pi: float
    cpi: float
    f_score: float
    precision: float
    recall: float
    cp: float
    cr: float
    cl: float

    FIELDS = ("pi", "cpi", "f_score", "precision", "recall", "cp", "cr", "cl")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.FIELDS}


@dataclass(frozen=True)
class RuleSet:
    rules: tuple
    params: HyperParams = field(default_factory=HyperParams)
    per_rule_metrics: tuple = ()
    encodings: Mapping[str, Mapping[str, int]] = field(default_factory=dict)

    def __post_init__(self):
        rules = tuple(self.rules)
        metrics = tuple(self.per_rule_metrics)
        if len(rules) > self.params.tree_number:
            raise InvalidRuleError(f"{len(rules)} rules exceed tree_number={self.params.tree_number}")
        for r in rules:
            if len(r) > self.params.max_depth:
                raise InvalidRuleError(f"rule of length {len(r)} exceeds max_depth")
        if metrics and len(metrics) != len(rules):
            raise InvalidRuleError("per_rule_metrics must match the number of rules")
        object.__setattr__(self, "rules", rules)
        object.__setattr__(self, "per_rule_metrics", metrics)
        object.__setattr__(self, "encodings", dict(self.encodings))

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def same_rules(self, other: "RuleSet") -> bool:
        return self.rules == other.rules

    def prepare(self, data: Dataset) -> Dataset:
        """Apply the training-time categorical encodings to ``data``."""
        if any(k == CATEGORICAL for k in data.feature_kinds):
            return encode_categoricals(data, self.encodings)
        return data

    def predict(self, data: Dataset) -> np.ndarray:
        data = self.prepare(data)
        out = np.zeros(data.n_rows, dtype=bool)
        for r in self.rules:
            out |= r.mask(data)
        return out.astype(np.int64)


# ---------------------------------------------------------------------------
# metric arithmetic

def precision_recall(stats: SplitStats) -> tuple[float, float]:
    p = stats.n_correct / stats.n_cover if stats.n_cover else 0.0
    r = stats.n_correct / stats.n_target if stats.n_target else 0.0
    return p, r


def f_beta(precision: float, recall: float, beta: float = 1.0) -> float:
    """Weighted harmonic mean of precision and recall (0 when both are 0)."""
    if precision == 0 and recall == 0:
        return 0.0
    b2 = beta * beta
    return (1 + b2) * precision * recall / (b2 * precision + recall)


def f_from_counts(n_correct, n_cover, n_target: int, beta: float) -> np.ndarray:
    """Vectorized ``f_beta(precision_recall(...))`` over candidate count arrays.

    This is the single scoring routine used by every training path; the
    operation order matches :func:`f_beta` so scalar and array results agree
    bit for bit.
    """
    correct = np.asarray(n_correct, dtype=np.float64)
    cover = np.asarray(n_cover, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(cover > 0, correct / np.where(cover > 0, cover, 1.0), 0.0)
        r = correct / n_target if n_target else np.zeros_like(correct)
        b2 = beta * beta
        num = (1 + b2) * p * r
        den = b2 * p + r
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def evaluate_rule(data: Dataset, rule: Rule, n_target_base: int) -> SplitStats:
    y = data.require_labels()
    m = rule.mask(data)
    return SplitStats(int(m.sum()), int(y[m].sum()), int(n_target_base))


def metrics_from_counts(covers: Sequence[int], corrects: Sequence[int], targets: Sequence[int],
                        n_rows: int, n_positive: int, beta: float) -> list[RuleMetrics]:
    """Per-rule and cumulative measures from residual-coverage counts.

    ``covers[k]``/``corrects[k]`` count rows newly covered by rule k (rows
    not covered by any earlier rule); ``targets[k]`` is the positive count of
    the residual data at the start of rule k's tree.
    """
    out = []
    cum_cover = cum_correct = 0
    base_rate = n_positive / n_rows if n_rows else 0.0
    for cover, correct, target in zip(covers, corrects, targets):
        cum_cover += cover
        cum_correct += correct
        p, r = precision_recall(SplitStats(cover, correct, target))
        cp = cum_correct / cum_cover if cum_cover else 0.0
        out.append(RuleMetrics(
            pi=cover / n_rows if n_rows else 0.0,
            cpi=cum_cover / n_rows if n_rows else 0.0,
            f_score=f_beta(p, r, beta),
            precision=p,
            recall=r,
            cp=cp,
            cr=cum_correct / n_positive if n_positive else 0.0,
            cl=cp / base_rate if base_rate else 0.0,
        ))
    return out


def coverage_counts(data: Dataset, rules: Sequence[Rule]):
    """Sequential-covering counts: (covers, corrects, targets, masks)."""
    y = data.require_labels()
    residual = np.ones(data.n_rows, dtype=bool)
    covers, corrects, targets, masks = [], [], [], []
    for rule in rules:
        targets.append(int(y[residual].sum()))
        m = rule.mask(data) & residual
        covers.append(int(m.sum()))
        corrects.append(int(y[m].sum()))
        masks.append(m)
        residual &= ~m
    return covers, corrects, targets, masks


def evaluate_rule_set(data: Dataset, rs: RuleSet, beta: float | None = None) -> list[RuleMetrics]:
    data = rs.prepare(data)
    covers, corrects, targets, _ = coverage_counts(data, rs.rules)
    beta = rs.params.beta if beta is None else beta
    return metrics_from_counts(covers, corrects, targets, data.n_rows, data.n_positive, beta)


# ---------------------------------------------------------------------------
# categorical encoding

def _is_missing(v) -> bool:
    return v is None or v == "" or (isinstance(v, float) and np.isnan(v))


def frequency_mapping(values: Sequence) -> dict:
    return dict(Counter(str(v) for v in values if not _is_missing(v)))


def encode_categoricals(data: Dataset, mappings: Mapping[str, Mapping[str, int]] | None = None) -> Dataset:
    """Replace each categorical column by the occurrence count of its category.

    With ``mappings`` (as stored on a trained rule set) the given counts are
    reused and unseen categories encode to 0; otherwise counts are taken
    from ``data`` itself and recorded on the returned dataset.
    """
    cols, kinds = list(data.columns), list(data.feature_kinds)
    enc = dict(data.encodings)
    for i, (name, kind) in enumerate(zip(data.feature_names, data.feature_kinds)):
        if kind != CATEGORICAL:
            continue
        if mappings is not None and name in mappings:
            table = dict(mappings[name])
        else:
            table = frequency_mapping(data.columns[i])
        cols[i] = np.array([np.nan if _is_missing(v) else float(table.get(str(v), 0))
                            for v in data.columns[i]], dtype=np.float64)
        kinds[i] = NUMERIC
        enc[name] = table
    return Dataset(data.feature_names, tuple(kinds), tuple(cols), data.labels,
                   data.instance_ids, enc)
