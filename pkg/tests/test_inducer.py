import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedfeare import Dataset, Direction, HyperParams, learn_rule_set, learn_single_rule
from fedfeare.errors import InvalidDataError, MissingLabelsError
from fedfeare.inducer import accepts, best_split, candidate_splits, count_profile
from conftest import random_dataset
from oracles import exhaustive_best, rule_counts


def test_candidate_splits_midpoints():
    assert list(candidate_splits([3, 1, 2, 2])) == [1.5, 2.5]
    assert len(candidate_splits([7, 7])) == 0


def test_candidate_splits_rejects_nan():
    with pytest.raises(InvalidDataError):
        candidate_splits([1.0, np.nan])


def test_missing_values_excluded_from_candidates():
    v = np.array([1.0, np.nan, 3.0, np.nan])
    thresholds, prof = count_profile(v, np.array([1, 1, 0, 0]))
    assert list(thresholds) == [2.0]
    assert prof.le_cover[0] + prof.gt_cover[0] == 2


def test_best_split_single_feature(toy):
    ev = best_split(toy, "x0")
    assert ev.candidate.threshold == 3.5 and ev.candidate.direction is Direction.GT
    assert ev.f_score == 1.0


def test_tie_prefers_lower_index_then_le():
    # x = [0, 1]; y = [1, 1]: both directions at 0.5 score F=2/3
    d = Dataset.from_arrays([[0.0], [1.0]], [1, 1])
    ev = best_split(d, "x0")
    assert ev.candidate.direction is Direction.LE


def test_earlier_feature_wins_ties():
    d = Dataset.from_arrays([[0.0, 0.0], [1.0, 1.0]], [1, 0])
    assert learn_single_rule(d, HyperParams(max_depth=1)).conditions[0].feature == "x0"


def test_gate_is_strict():
    assert not accepts(0.51, 0.5, 0.01 + 1e-9)
    assert accepts(0.52, 0.5, 0.01)
    assert not accepts(0.5, 0.5, 0.0)


def test_single_rule_errors():
    with pytest.raises(MissingLabelsError):
        learn_single_rule(Dataset.from_arrays([[1.0]]))
    with pytest.raises(InvalidDataError):
        learn_single_rule(Dataset.from_arrays([[1.0], [2.0]], [0, 0]))


def test_no_split_gives_none():
    # constant column: no candidate split at all
    assert learn_single_rule(Dataset.from_arrays([[1.0], [1.0]], [1, 0])) is None


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**31))
def test_depth1_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    d = random_dataset(rng, n_rows=int(rng.integers(2, 41)), n_features=int(rng.integers(1, 4)))
    beta = float(rng.choice([0.5, 1.0, 2.0]))
    rule = learn_single_rule(d, HyperParams(max_depth=1, beta=beta))
    ref = exhaustive_best([list(c) for c in d.columns], list(d.labels), beta=beta)
    if ref is None or ref[3] <= 0.01:
        assert rule is None
    else:
        (c,) = rule.conditions
        assert (c.feature, c.threshold, c.direction.value) == (f"x{ref[0]}", ref[1], ref[2])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_each_condition_adds_gain(seed):
    rng = np.random.default_rng(seed)
    d = random_dataset(rng, missing=0.1)
    params = HyperParams(pruning_min=0.005)
    rule = learn_single_rule(d, params)
    if rule is None:
        return
    cols = {n: list(c) for n, c in zip(d.feature_names, d.columns)}
    y = list(d.labels)
    running = 0.0
    conds = []
    for c in rule.conditions:
        conds.append((c.feature, c.direction.value, c.threshold))
        cover, correct = rule_counts(cols, y, conds)
        p, r = correct / cover, correct / sum(y)
        f = 2 * p * r / (p + r) if p + r else 0.0
        assert f > running + params.pruning_min - 1e-12
        running = f


def test_sequential_covering_removes_rows():
    X = np.array([[0, 0]] * 5 + [[1, 0]] * 5 + [[0, 1]] * 5 + [[1, 1]] * 5, dtype=float)
    y = np.array([0] * 5 + [1] * 5 + [1] * 5 + [0] * 5)
    rs = learn_rule_set(Dataset.from_arrays(X, y))
    assert len(rs.rules) == 2
    d = Dataset.from_arrays(X, y)
    assert rs.per_rule_metrics[-1].cr == 1.0 and rs.per_rule_metrics[-1].cp == 1.0
    masks = [r.mask(d) for r in rs.rules]
    assert not (masks[0] & masks[1]).any()


def test_stops_when_positives_exhausted():
    d = Dataset.from_arrays([[0.0], [1.0], [2.0]], [0, 0, 1])
    rs = learn_rule_set(d)
    assert len(rs.rules) == 1


def test_rule_set_metrics_match_evaluation():
    rng = np.random.default_rng(7)
    d = random_dataset(rng, n_rows=200, n_features=4, distinct=10)
    from fedfeare import evaluate_rule_set
    rs = learn_rule_set(d)
    assert list(rs.per_rule_metrics) == evaluate_rule_set(d, rs)


def test_categorical_columns_encoded():
    d = Dataset.from_columns({"c": ["a", "a", "a", "b", "b", "z"]}, labels=[1, 1, 1, 0, 0, 0],
                             kinds={"c": "categorical"})
    rs = learn_rule_set(d)
    assert rs.encodings["c"] == {"a": 3, "b": 2, "z": 1}
    assert list(rs.predict(d)) == [1, 1, 1, 0, 0, 0]
