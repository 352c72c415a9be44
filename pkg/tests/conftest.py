import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fedfeare import Dataset  # noqa: E402


def random_dataset(rng: np.random.Generator, n_rows=None, n_features=None, distinct=None,
                   pos_rate=None, missing=0.0) -> Dataset:
    """Small integer-valued dataset with at least one positive row."""
    n = n_rows or int(rng.integers(8, 60))
    k = n_features or int(rng.integers(1, 5))
    d = distinct or int(rng.integers(2, 7))
    X = rng.integers(0, d, size=(n, k)).astype(float)
    if missing:
        X[rng.random(X.shape) < missing] = np.nan
    rate = pos_rate if pos_rate is not None else float(rng.uniform(0.1, 0.5))
    y = (rng.random(n) < rate).astype(np.int64)
    y[int(rng.integers(n))] = 1
    return Dataset.from_arrays(X, y)


@pytest.fixture
def toy() -> Dataset:
    X = np.array([[1, 5], [2, 4], [3, 3], [4, 2], [5, 1], [6, 0]], dtype=float)
    y = np.array([0, 0, 0, 1, 1, 1])
    return Dataset.from_arrays(X, y)


ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
