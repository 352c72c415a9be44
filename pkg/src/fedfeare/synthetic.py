"""Synthetic imbalanced datasets with planted IF-THEN rules."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .core import Condition, Dataset, Direction, HyperParams, Rule, RuleSet
from .errors import GenerationError


@dataclass(frozen=True)
class PlantedCondition:
    feature: int
    op: str
    threshold: float


@dataclass(frozen=True)
class SyntheticSpec:
    """Generation recipe.

    Features are uniform on ``[low, high)``; with ``levels`` they take only
    ``levels`` equally spaced values starting at ``low``.  A row is positive
    iff some planted rule covers it, then each label flips with probability
    ``noise``.  When ``positive_rate`` is given, the clean positive rate must
    land within ``rate_tolerance`` (relative) or four binomial standard
    errors of it.
    """

    n_rows: int
    n_features: int
    rules: tuple
    positive_rate: float | None = None
    noise: float = 0.0
    seed: int = 0
    low: float = 0.0
    high: float = 1.0
    levels: int | None = None
    rate_tolerance: float = 0.25

    def __post_init__(self):
        rules = tuple(tuple(c if isinstance(c, PlantedCondition) else PlantedCondition(**c) for c in r)
                      for r in self.rules)
        object.__setattr__(self, "rules", rules)
        if self.n_rows < 0 or self.n_features < 1:
            raise GenerationError("need n_rows >= 0 and n_features >= 1")
        for r in rules:
            if not 1 <= len(r) <= 3:
                raise GenerationError("planted rules need 1 to 3 conditions")
            for c in r:
                if not 0 <= c.feature < self.n_features:
                    raise GenerationError(f"planted rule references undeclared feature {c.feature}")
                if c.op not in ("le", "gt"):
                    raise GenerationError(f"bad op {c.op!r}")
        if self.positive_rate is not None and not 0 < self.positive_rate <= 0.5:
            raise GenerationError("positive_rate must lie in (0, 0.5]")
        if not 0 <= self.noise < 0.5:
            raise GenerationError("noise must lie in [0, 0.5)")
        if not self.high > self.low:
            raise GenerationError("need high > low")
        if self.levels is not None and self.levels < 2:
            raise GenerationError("levels must be >= 2")

    @property
    def feature_names(self) -> list[str]:
        return [f"x{i}" for i in range(self.n_features)]

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        d = dict(d)
        rules = []
        for r in d.pop("rules", []):
            conds = []
            for c in r:
                f = c["feature"]
                if isinstance(f, str):
                    if not f.startswith("x") or not f[1:].isdigit():
                        raise GenerationError(f"feature reference {f!r} must look like x<index>")
                    f = int(f[1:])
                conds.append(PlantedCondition(int(f), c["op"], float(c["threshold"])))
            rules.append(tuple(conds))
        try:
            return cls(rules=tuple(rules), **d)
        except TypeError as e:
            raise GenerationError(f"bad synthetic spec: {e}") from None

    @classmethod
    def from_json(cls, text: str) -> "SyntheticSpec":
        return cls.from_dict(json.loads(text))

    def ground_truth(self) -> RuleSet:
        names = self.feature_names
        rules = tuple(Rule(tuple(Condition(names[c.feature], Direction(c.op), c.threshold) for c in r))
                      for r in self.rules)
        params = HyperParams(max_depth=max([3] + [len(r) for r in rules]),
                             tree_number=max(3, len(rules)))
        return RuleSet(rules, params)


def gen_synthetic(spec: SyntheticSpec) -> tuple[Dataset, RuleSet]:
    """Draw a dataset and return it with the planted rules."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    u = rng.random((spec.n_rows, spec.n_features))
    if spec.levels is None:
        X = spec.low + (spec.high - spec.low) * u
    else:
        step = (spec.high - spec.low) / spec.levels
        X = spec.low + step * np.floor(u * spec.levels)
    truth = spec.ground_truth()
    data = Dataset.from_arrays(X, feature_names=spec.feature_names)
    clean = truth.predict(data) if truth.rules else np.zeros(spec.n_rows, dtype=np.int64)

    if spec.positive_rate is not None:
        rate = clean.mean() if spec.n_rows else 0.0
        target = spec.positive_rate
        slack = max(spec.rate_tolerance * target, 4 * math.sqrt(target * (1 - target) / max(spec.n_rows, 1)))
        if abs(rate - target) > slack:
            raise GenerationError(
                f"planted rules give positive rate {rate:.4g}, target {target} is unattainable")

    flips = rng.random(spec.n_rows) < spec.noise
    labels = np.where(flips, 1 - clean, clean)
    return data.with_labels(labels), truth


def planted_mask(data: Dataset, truth: RuleSet) -> list[np.ndarray]:
    """Row mask covered by each planted rule."""
    return [r.mask(data) for r in truth.rules]
