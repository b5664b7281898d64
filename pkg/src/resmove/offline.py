"""Exact offline optimum of the service cost.

With diminishing returns in the number of resources the total cost is a sum
of per-node convex functions over the simplex {f : sum f = k}, so placing
resources one at a time where they save the most is exact.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np

from .core import (
    IMPROVEMENT_EPS,
    Configuration,
    DemandState,
    InvalidArgumentError,
    chi_distance,
    enumerate_configurations,
)
from .costs import CostModel, check_properties, node_grid, total_service_cost

BRUTE_FORCE_LIMIT = 10**6


class PreconditionError(InvalidArgumentError):
    """The cost model does not satisfy what the solver relies on."""


class InstanceTooLargeError(InvalidArgumentError):
    pass


@dataclass(frozen=True)
class OfflineSolution:
    configuration: Configuration
    cost: float
    movement_cost: int | None = None


def require_greedy_exact(model: CostModel, n: int, incremental: bool = False) -> None:
    report = check_properties(model, n=n)
    needed = ["diminishing_returns"]
    if incremental:
        needed.append("marginal_grows_with_demand")
    for name in needed:
        res = report.results[name]
        if not res.passed:
            raise PreconditionError(
                f"cost model violates {name} at (v, x, y) = {res.witness}; greedy allocation is not exact")


def _demand_counts(demands, n_hint=None):
    if isinstance(demands, DemandState):
        return demands.counts
    return tuple(int(d) for d in demands)


def _check_bounds(model: CostModel, d, k):
    if k > model.x_max:
        raise InvalidArgumentError(f"k={k} exceeds model x_max={model.x_max}")
    if d and max(d) > model.y_max:
        raise InvalidArgumentError(f"demand count {max(d)} exceeds model y_max={model.y_max}")


def _greedy(model: CostModel, d, k: int, anchor=None) -> list[int]:
    n = len(d)
    f = [0] * n
    sigma = model.sigma

    def key(v, x):
        gain = sigma(v, x, d[v]) - sigma(v, x + 1, d[v])
        if anchor is None:
            return (-gain, 0, v)
        return (-gain, -1 if x < anchor[v] else 1, v)

    heap = [key(v, 0) for v in range(n)]
    heapq.heapify(heap)
    for _ in range(k):
        _, _, v = heapq.heappop(heap)
        f[v] += 1
        if f[v] < k:
            heapq.heappush(heap, key(v, f[v]))
    return f


def optimal_allocation(model: CostModel, demands, k: int, f0: Configuration | None = None) -> OfflineSolution:
    """Cheapest placement of k resources for the given demand counts.

    Ties go to the lowest node id.  ``f0`` only fills in ``movement_cost``.
    """
    d = _demand_counts(demands)
    n = len(d)
    model.node_count(n)
    _check_bounds(model, d, k)
    require_greedy_exact(model, n)
    config = Configuration(_greedy(model, d, k))
    cost = total_service_cost(model, config, d)
    moved = chi_distance(f0, config) if f0 is not None else None
    return OfflineSolution(config, cost, moved)


@lru_cache(maxsize=64)
def _all_configurations(n: int, k: int) -> np.ndarray:
    return np.array(list(enumerate_configurations(n, k)), dtype=int).reshape(-1, n)


def brute_force_allocation(model: CostModel, demands, k: int, f0: Configuration | None = None) -> OfflineSolution:
    """Enumerate every placement; lowest lexicographic placement wins ties."""
    d = _demand_counts(demands)
    n = len(d)
    size = math.comb(n + k - 1, k)
    if size > BRUTE_FORCE_LIMIT:
        raise InstanceTooLargeError(f"{size} placements of k={k} on n={n} nodes exceeds {BRUTE_FORCE_LIMIT}")
    model.node_count(n)
    _check_bounds(model, d, k)
    configs = _all_configurations(n, k)
    approx = np.zeros(len(configs))
    for v in range(n):
        approx += model.sigma_vec(np.full(len(configs), v), configs[:, v], d[v])
    lo = approx.min()
    # Re-rank near-minimal candidates with correctly rounded sums.
    near = np.nonzero(approx <= lo + 1e-9 * max(1.0, abs(lo)))[0]
    best_i, best_cost = None, math.inf
    for i in near:
        c = math.fsum(model.sigma(v, int(configs[i, v]), d[v]) for v in range(n))
        if c < best_cost:
            best_i, best_cost = int(i), c
    config = Configuration(configs[best_i].tolist())
    moved = chi_distance(f0, config) if f0 is not None else None
    return OfflineSolution(config, best_cost, moved)


@dataclass
class OracleReport:
    n: int
    k: int
    y_max: int
    instances: int = 0
    failures: int = 0
    mismatches: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.failures == 0


def oracle_check(model: CostModel, n: int, k: int, y_max: int, limit: int = 5) -> OracleReport:
    """Greedy against enumeration for every demand vector with entries <= y_max.

    Enumeration costs are computed for all demand vectors at once; the
    near-minimal placements are then re-summed exactly, so the comparison is
    exact.  At most ``limit`` mismatches are kept.
    """
    model.node_count(n)
    _check_bounds(model, [y_max], k)
    require_greedy_exact(model, n)
    configs = _all_configurations(n, k)
    demands = np.array(list(product(range(y_max + 1), repeat=n)), dtype=int).reshape(-1, n)
    grids = [node_grid(model, v, k, y_max) for v in range(n)]
    cost = np.zeros((len(configs), len(demands)))
    for v in range(n):
        cost += grids[v][configs[:, v]][:, demands[:, v]]
    lo = cost.min(axis=0)
    report = OracleReport(n, k, y_max)
    sigma = model.sigma
    for j, d in enumerate(demands.tolist()):
        report.instances += 1
        g = _greedy(model, d, k)
        greedy_cost = math.fsum(sigma(v, g[v], d[v]) for v in range(n))
        near = np.nonzero(cost[:, j] <= lo[j] + 1e-9 * max(1.0, abs(lo[j])))[0]
        brute = min(math.fsum(sigma(v, int(configs[i, v]), d[v]) for v in range(n)) for i in near)
        if greedy_cost != brute:
            report.failures += 1
        if greedy_cost != brute and len(report.mismatches) < limit:
            report.mismatches.append({"demands": d, "greedy": greedy_cost, "brute": brute, "placement": g})
    return report


def optimal_movement_cost(f0: Configuration, solution: OfflineSolution) -> int:
    return chi_distance(f0, solution.configuration)


class OfflineSolver:
    """Optimal placement maintained across single demand arrivals.

    With ``anchor`` set, ties in service cost are broken towards placements
    closer to the anchor, so ``movement_cost`` is the smallest movement of any
    optimal placement.  Without it, ties go to the lowest node id.
    """

    def __init__(self, model: CostModel, n: int, k: int, anchor: Configuration | None = None):
        model.node_count(n)
        if k > model.x_max:
            raise InvalidArgumentError(f"k={k} exceeds model x_max={model.x_max}")
        self.model = model
        self.n = n
        self.k = k
        self.anchor = None if anchor is None else tuple(anchor)
        report = check_properties(model, n=n)
        require_greedy_exact(model, n)
        self.incremental = report.results["marginal_grows_with_demand"].passed
        self.d = [0] * n
        self._reset(_greedy(model, self.d, k, self.anchor))

    def _reset(self, f):
        sigma = self.model.sigma
        self.f = list(f)
        self.node_cost = [sigma(v, self.f[v], self.d[v]) for v in range(self.n)]
        self._ver = [0] * self.n
        self._heap = []
        for v in range(self.n):
            self._push(v)

    def _removal_key(self, u):
        fu, du = self.f[u], self.d[u]
        loss = self.model.sigma(u, fu - 1, du) - self.model.sigma(u, fu, du)
        sec = 0 if self.anchor is None else (-1 if fu > self.anchor[u] else 1)
        return loss, sec

    def _push(self, u):
        self._ver[u] += 1
        if len(self._heap) > 4 * self.n + 64:
            self._heap = [e for e in self._heap if e[3] == self._ver[e[2]]]
            heapq.heapify(self._heap)
        if self.f[u] > 0:
            loss, sec = self._removal_key(u)
            heapq.heappush(self._heap, (loss, sec, u, self._ver[u]))

    def _cheapest_removal(self, exclude):
        """Valid heap top other than ``exclude``, or None."""
        heap = self._heap
        held = None
        found = None
        while heap:
            entry = heap[0]
            if entry[3] != self._ver[entry[2]]:
                heapq.heappop(heap)
                continue
            if entry[2] == exclude:
                held = heapq.heappop(heap)
                continue
            found = entry
            break
        if held is not None:
            heapq.heappush(heap, held)
        return found

    def add_demand(self, v: int) -> None:
        if not 0 <= v < self.n:
            raise InvalidArgumentError(f"node {v} out of range [0, {self.n})")
        self.d[v] += 1
        if self.d[v] > self.model.y_max:
            raise InvalidArgumentError(f"demand count at node {v} exceeds model y_max={self.model.y_max}")
        if not self.incremental:
            self._reset(_greedy(self.model, self.d, self.k, self.anchor))
            return
        sigma = self.model.sigma
        self.node_cost[v] = sigma(v, self.f[v], self.d[v])
        self._push(v)
        # Only v's savings grew, so every improving exchange moves a resource into v.
        while self.f[v] < self.k:
            top = self._cheapest_removal(v)
            if top is None:
                break
            loss, sec_loss, u, _ = top
            fv, dv = self.f[v], self.d[v]
            gain = sigma(v, fv, dv) - sigma(v, fv + 1, dv)
            sec_gain = 0 if self.anchor is None else (1 if fv < self.anchor[v] else -1)
            delta = gain - loss
            if not (delta > IMPROVEMENT_EPS or (abs(delta) <= IMPROVEMENT_EPS and sec_gain > sec_loss)):
                break
            self.f[u] -= 1
            self.f[v] += 1
            self.node_cost[u] = sigma(u, self.f[u], self.d[u])
            self.node_cost[v] = sigma(v, self.f[v], dv)
            self._push(u)
            self._push(v)

    @property
    def cost(self) -> float:
        return math.fsum(self.node_cost)

    @property
    def configuration(self) -> Configuration:
        return Configuration(self.f)

    @property
    def demands(self) -> DemandState:
        return DemandState(self.d)

    @property
    def movement_cost(self) -> int | None:
        if self.anchor is None:
            return None
        return sum(max(0, a - b) for a, b in zip(self.anchor, self.f))

    def solution(self) -> OfflineSolution:
        return OfflineSolution(self.configuration, self.cost, self.movement_cost)

    def recompute(self) -> OfflineSolution:
        """From-scratch solution for the current demands (does not touch state)."""
        f = _greedy(self.model, self.d, self.k, self.anchor)
        config = Configuration(f)
        moved = None if self.anchor is None else chi_distance(Configuration(self.anchor), config)
        return OfflineSolution(config, total_service_cost(self.model, config, self.d), moved)
