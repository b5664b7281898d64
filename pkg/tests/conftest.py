import itertools
import math

import numpy as np
import pytest
from hypothesis import strategies as st

from resmove.core import Configuration, enumerate_configurations
from resmove.costs import CappedLinearCost, CoveringCost, FractionalCost, TableCost


def random_table_model(rng: np.random.Generator, n: int, x_max: int, y_max: int, integer: bool = True) -> TableCost:
    """Table model satisfying all four axioms by construction.

    For each node the cost c(x) of every extra demand is non-negative,
    non-increasing and convex in x; cumulative sums over demands then give a
    valid sigma.
    """
    cost = []
    for _ in range(n):
        rows = np.zeros((x_max + 1, y_max + 1))
        for y in range(1, y_max + 1):
            # drops in x shrink as x grows
            drops = np.sort(rng.integers(0, 4, size=x_max) if integer else rng.random(x_max) * 3)[::-1]
            base = drops.sum() + (rng.integers(0, 3) if integer else rng.random())
            c = base - np.concatenate([[0], np.cumsum(drops)])
            rows[:, y] = rows[:, y - 1] + c
        cost.append(rows.tolist())
    return TableCost(cost)


def brute_optimum(model, demands, k):
    n = len(demands)
    best = math.inf
    for f in enumerate_configurations(n, k):
        best = min(best, math.fsum(model.sigma(v, f[v], demands[v]) for v in range(n)))
    return best


def all_pairs_best_move(model, f, d):
    """Largest service-cost saving of any single move, by direct evaluation."""
    n = len(f)
    base = math.fsum(model.sigma(v, f[v], d[v]) for v in range(n))
    best = -math.inf
    for src, dst in itertools.permutations(range(n), 2):
        if f[src] == 0:
            continue
        g = list(f)
        g[src] -= 1
        g[dst] += 1
        best = max(best, base - math.fsum(model.sigma(v, g[v], d[v]) for v in range(n)))
    return best


@st.composite
def configurations(draw, n=None, k=None):
    n = draw(st.integers(1, 6)) if n is None else n
    k = draw(st.integers(1, 6)) if k is None else k
    cuts = sorted(draw(st.lists(st.integers(0, k), min_size=n - 1, max_size=n - 1)))
    bounds = [0] + cuts + [k]
    return Configuration([bounds[i + 1] - bounds[i] for i in range(n)])


@pytest.fixture
def covering():
    return CoveringCost()


@pytest.fixture
def fractional():
    return FractionalCost()


@pytest.fixture
def families():
    rng = np.random.default_rng(11)
    return {
        "covering": CoveringCost(),
        "fractional": FractionalCost(),
        "capped": CappedLinearCost([1.0, 2.0, 0.5, 3.0, 1.5]),
        "table": random_table_model(rng, 5, 6, 64),
    }


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
