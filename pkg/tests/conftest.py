import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sgscreen.core import build_groups, make_dataset  # noqa: E402


def random_problem(seed, n=40, sizes=(3, 2, 4, 1, 3), loss="linear"):
    """Small standardized problem with a sparse planted signal."""
    rng = np.random.default_rng(seed)
    groups = build_groups(np.repeat(np.arange(len(sizes)), sizes))
    X = rng.normal(size=(n, groups.p))
    beta = np.zeros(groups.p)
    beta[groups.group_index[0]] = rng.normal(scale=2.0, size=sizes[0])
    eta = X @ beta + rng.normal(size=n)
    if loss == "logistic":
        y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
    else:
        y = eta
    return make_dataset(X, y, loss=loss), groups


@pytest.fixture
def small_problem():
    return random_problem(0)


ACCEPTANCE = {}


def record(number, passed, detail):
    """Store one acceptance verdict for the end-of-run summary."""
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
