"""F-score-gain rule induction on plaintext data.

A single rule is grown greedily, one condition per depth, each time taking
the (feature, threshold, direction) that maximizes the F-score of the
extended rule.  Rule sets are learned by sequential covering: rows covered
by a rule are removed before the next tree is grown.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    CATEGORICAL,
    Condition,
    Dataset,
    Direction,
    HyperParams,
    Rule,
    RuleSet,
    SplitStats,
    apply_direction,
    encode_categoricals,
    f_from_counts,
    metrics_from_counts,
)
from .errors import InvalidDataError, MissingLabelsError


@dataclass(frozen=True)
class SplitCandidate:
    feature: str
    split_index: int
    threshold: float
    direction: Direction


@dataclass(frozen=True)
class SplitEval:
    candidate: SplitCandidate
    f_score: float
    stats: SplitStats


@dataclass(frozen=True)
class CountProfile:
    """Cumulative counts at each candidate threshold of one feature.

    Entry ``j`` describes threshold ``j``: ``le_*`` for rows with value
    ``<=`` the threshold and ``gt_*`` for the rows above it.  Rows with a
    missing value belong to neither side.
    """

    le_cover: np.ndarray
    le_correct: np.ndarray
    gt_cover: np.ndarray
    gt_correct: np.ndarray

    def __len__(self) -> int:
        return len(self.le_cover)


def candidate_splits(values) -> np.ndarray:
    """Midpoints of adjacent distinct values, ascending."""
    v = np.asarray(values, dtype=np.float64)
    if not np.isfinite(v).all():
        raise InvalidDataError("candidate values must be finite")
    u = np.unique(v)
    return (u[:-1] + u[1:]) / 2


def count_profile(values: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, CountProfile]:
    """Candidate thresholds and their cumulative counts for one column."""
    ok = ~np.isnan(values)
    v, y = values[ok], labels[ok]
    u, inv = np.unique(v, return_inverse=True)
    tot = np.bincount(inv, minlength=len(u))
    pos = np.bincount(inv, weights=y, minlength=len(u)).astype(np.int64)
    le_cover = np.cumsum(tot)[:-1]
    le_correct = np.cumsum(pos)[:-1]
    thresholds = (u[:-1] + u[1:]) / 2
    prof = CountProfile(le_cover, le_correct, len(v) - le_cover, int(y.sum()) - le_correct)
    return thresholds, prof


def select_best(prof: CountProfile, n_target: int, beta: float):
    """Best (split_index, direction, f, stats) in a profile, or None if empty.

    Ties go to the lowest split index, and LE before GT at equal index.
    """
    if len(prof) == 0:
        return None
    f_le = f_from_counts(prof.le_correct, prof.le_cover, n_target, beta)
    f_gt = f_from_counts(prof.gt_correct, prof.gt_cover, n_target, beta)
    scores = np.column_stack([f_le, f_gt]).ravel()
    k = int(np.argmax(scores))
    j, side = divmod(k, 2)
    if side == 0:
        return j, Direction.LE, float(f_le[j]), SplitStats(int(prof.le_cover[j]), int(prof.le_correct[j]), n_target)
    return j, Direction.GT, float(f_gt[j]), SplitStats(int(prof.gt_cover[j]), int(prof.gt_correct[j]), n_target)


def _column_best(name: str, values: np.ndarray, labels: np.ndarray, n_target: int, beta: float):
    thresholds, prof = count_profile(values, labels)
    best = select_best(prof, n_target, beta)
    if best is None:
        return None
    j, direction, f, stats = best
    return SplitEval(SplitCandidate(name, j, float(thresholds[j]), direction), f, stats)


def best_split(data: Dataset, feature: str, beta: float = 1.0, n_target: int | None = None) -> SplitEval | None:
    """Best single condition on ``feature`` for the rows in ``data``.

    ``data`` holds exactly the rows covered by the rule prefix.  ``n_target``
    is the positive count at the start of the tree; it defaults to the
    positives in ``data`` (empty prefix).
    """
    y = data.require_labels()
    if n_target is None:
        n_target = int(y.sum())
    return _column_best(feature, data.column(feature), y, n_target, beta)


def best_over_features(data: Dataset, rows: np.ndarray, n_target: int, beta: float) -> SplitEval | None:
    """Argmax over features in dataset order; earlier features win exact ties."""
    y = data.labels[rows]
    best = None
    for name, col in zip(data.feature_names, data.columns):
        ev = _column_best(name, col[rows], y, n_target, beta)
        if ev is not None and (best is None or ev.f_score > best.f_score):
            best = ev
    return best


def accepts(candidate_f: float, running_f: float, pruning_min: float) -> bool:
    return candidate_f > running_f + pruning_min


def _check_numeric(data: Dataset) -> None:
    if any(k == CATEGORICAL for k in data.feature_kinds):
        raise InvalidDataError("encode categorical columns before induction")


def grow_rule(data: Dataset, rows: np.ndarray, params: HyperParams):
    """Grow one rule on ``rows``; returns (rule | None, covered rows, last SplitEval)."""
    y = data.labels
    n_target = int(y[rows].sum())
    conditions: list[Condition] = []
    running_f = 0.0
    last = None
    for _ in range(params.max_depth):
        if len(rows) == 0:
            break
        ev = best_over_features(data, rows, n_target, params.beta)
        if ev is None or not accepts(ev.f_score, running_f, params.pruning_min):
            break
        c = ev.candidate
        cond = Condition(c.feature, c.direction, c.threshold)
        conditions.append(cond)
        running_f = ev.f_score
        last = ev
        rows = rows[apply_direction(data.column(c.feature)[rows], c.direction, c.threshold)]
    if not conditions:
        return None, rows[:0], None
    return Rule(tuple(conditions)), rows, last


def learn_single_rule(data: Dataset, params: HyperParams = HyperParams()) -> Rule | None:
    """Greedy depth-first growth of one IF-THEN rule."""
    if not data.has_labels:
        raise MissingLabelsError("learn_single_rule needs labeled data")
    _check_numeric(data)
    if data.n_positive == 0:
        raise InvalidDataError("learn_single_rule needs at least one positive row")
    rule, _, _ = grow_rule(data, np.arange(data.n_rows), params)
    return rule


def learn_rule_set(data: Dataset, params: HyperParams = HyperParams()) -> RuleSet:
    """Sequential covering: learn up to ``tree_number`` rules.

    Categorical columns are frequency-encoded first; the encodings are kept
    on the returned rule set for use at prediction time.
    """
    if not data.has_labels:
        raise MissingLabelsError("learn_rule_set needs labeled data")
    if any(k == CATEGORICAL for k in data.feature_kinds):
        data = encode_categoricals(data)
    y = data.labels
    residual = np.arange(data.n_rows)
    rules, covers, corrects, targets = [], [], [], []
    for _ in range(params.tree_number):
        n_target = int(y[residual].sum())
        if n_target == 0:
            break
        rule, covered, _ = grow_rule(data, residual, params)
        if rule is None:
            break
        rules.append(rule)
        covers.append(len(covered))
        corrects.append(int(y[covered].sum()))
        targets.append(n_target)
        residual = np.setdiff1d(residual, covered, assume_unique=True)
    metrics = metrics_from_counts(covers, corrects, targets, data.n_rows, int(y.sum()), params.beta)
    return RuleSet(tuple(rules), params, tuple(metrics), data.encodings)


__all__: Sequence[str] = (
    "SplitCandidate", "SplitEval", "CountProfile", "candidate_splits", "count_profile",
    "select_best", "best_split", "best_over_features", "grow_rule", "learn_single_rule",
    "learn_rule_set", "accepts",
)
