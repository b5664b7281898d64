"""Service cost functions sigma_v(x, y) and the quantities derived from them.

x is the number of resources at node v, y the number of demands there.
Every model exposes a scalar evaluator (``sigma``, hot path, no checks) and a
vectorised one (``sigma_vec``, used for exhaustive axiom checks and history
replays).  Bounds are checked by :func:`evaluate`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import Configuration, DemandState, InvalidArgumentError, chi_distance

AXIOMS = (
    "decreasing_in_resources",
    "increasing_in_demands",
    "diminishing_returns",
    "marginal_grows_with_demand",
)

DEFAULT_X_MAX = 64
DEFAULT_Y_MAX = 4096


class CostModel:
    """Base class; subclasses implement ``sigma`` and ``sigma_vec``."""

    family = "abstract"
    # None means the model is defined for any number of nodes.
    n: int | None = None

    def __init__(self, x_max: int = DEFAULT_X_MAX, y_max: int = DEFAULT_Y_MAX):
        if x_max < 0 or y_max < 0:
            raise InvalidArgumentError("x_max and y_max must be non-negative")
        self.x_max = int(x_max)
        self.y_max = int(y_max)
        self._reports: dict = {}
        self._stats: dict = {}

    def sigma(self, v: int, x: int, y: int) -> float:
        raise NotImplementedError

    def sigma_vec(self, v, x, y):
        """Vectorised sigma; ``v``, ``x``, ``y`` broadcast against each other."""
        v, x, y = np.broadcast_arrays(np.asarray(v), np.asarray(x), np.asarray(y))
        out = np.empty(v.shape, dtype=float)
        for idx in np.ndindex(v.shape):
            out[idx] = self.sigma(int(v[idx]), int(x[idx]), int(y[idx]))
        return out

    def distinct_nodes(self, n: int) -> list[int]:
        """One representative per group of nodes sharing the same cost function."""
        return list(range(n))

    def node_count(self, n: int | None = None) -> int:
        if self.n is not None:
            if n is not None and n != self.n:
                raise InvalidArgumentError(f"model is defined on {self.n} nodes, not {n}")
            return self.n
        if n is None:
            raise InvalidArgumentError(f"{self.family} model needs an explicit node count")
        return n

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(x_max={self.x_max}, y_max={self.y_max})"


class CoveringCost(CostModel):
    """Cost y at a node without resources, 0 otherwise."""

    family = "covering"

    def sigma(self, v, x, y):
        return float(y) if x == 0 else 0.0

    def sigma_vec(self, v, x, y):
        x = np.asarray(x)
        return np.where(x == 0, np.asarray(y, dtype=float), 0.0)

    def distinct_nodes(self, n):
        return [0]

    def to_dict(self):
        return {"family": self.family, "params": {}, "x_max": self.x_max, "y_max": self.y_max}


class FractionalCost(CostModel):
    """y / (x + 1): demands share the resources at their node."""

    family = "fractional"

    def sigma(self, v, x, y):
        return y / (x + 1)

    def sigma_vec(self, v, x, y):
        return np.asarray(y, dtype=float) / (np.asarray(x) + 1)

    def distinct_nodes(self, n):
        return [0]

    def to_dict(self):
        return {"family": self.family, "params": {}, "x_max": self.x_max, "y_max": self.y_max}


class CappedLinearCost(CostModel):
    """max(0, y - c_v * x): each resource at v absorbs c_v demands for free."""

    family = "capped"

    def __init__(self, capacity: float | Sequence[float] = 1.0, x_max=DEFAULT_X_MAX, y_max=DEFAULT_Y_MAX):
        super().__init__(x_max, y_max)
        if isinstance(capacity, (int, float)):
            self.capacity = float(capacity)
            self._caps = None
        else:
            self._caps = np.asarray(capacity, dtype=float)
            self.capacity = [float(c) for c in self._caps]
            self.n = len(self._caps)
        caps = [self.capacity] if self._caps is None else self.capacity
        if any(c < 0 for c in caps):
            raise InvalidArgumentError("capacities must be non-negative")

    def _cap(self, v):
        return self.capacity if self._caps is None else self.capacity[v]

    def sigma(self, v, x, y):
        return max(0.0, y - self._cap(v) * x)

    def sigma_vec(self, v, x, y):
        cap = self.capacity if self._caps is None else self._caps[np.asarray(v)]
        return np.maximum(0.0, np.asarray(y, dtype=float) - cap * np.asarray(x))

    def distinct_nodes(self, n):
        if self._caps is None:
            return [0]
        seen = {}
        for v in range(n):
            seen.setdefault(self.capacity[v], v)
        return sorted(seen.values())

    def to_dict(self):
        return {"family": self.family, "params": {"capacity": self.capacity},
                "x_max": self.x_max, "y_max": self.y_max}


class TableCost(CostModel):
    """Explicit grid ``cost[v][x][y]``."""

    family = "table"

    def __init__(self, cost, x_max: int | None = None, y_max: int | None = None):
        arr = np.asarray(cost, dtype=float)
        if arr.ndim != 3:
            raise InvalidArgumentError(f"table cost must be a 3-d array cost[v][x][y], got shape {arr.shape}")
        if (arr < 0).any():
            raise InvalidArgumentError("table costs must be non-negative")
        n, xs, ys = arr.shape
        x_max = xs - 1 if x_max is None else x_max
        y_max = ys - 1 if y_max is None else y_max
        if x_max > xs - 1 or y_max > ys - 1:
            raise InvalidArgumentError(f"declared bounds ({x_max}, {y_max}) exceed table shape {arr.shape}")
        super().__init__(x_max, y_max)
        self.table = arr
        self._rows = arr.tolist()
        self.n = n

    def sigma(self, v, x, y):
        return self._rows[v][x][y]

    def sigma_vec(self, v, x, y):
        return self.table[np.asarray(v), np.asarray(x), np.asarray(y)]

    def to_dict(self):
        return {"family": self.family, "params": {"cost": self._rows},
                "x_max": self.x_max, "y_max": self.y_max}


class FunctionCost(CostModel):
    """Wrap a plain callable ``fn(v, x, y)``; handy for ad-hoc and broken models."""

    family = "function"

    def __init__(self, fn: Callable[[int, int, int], float], n: int | None = None,
                 x_max=DEFAULT_X_MAX, y_max=DEFAULT_Y_MAX, homogeneous: bool = False):
        super().__init__(x_max, y_max)
        self.fn = fn
        self.n = n
        self.homogeneous = homogeneous

    def sigma(self, v, x, y):
        return float(self.fn(v, x, y))

    def distinct_nodes(self, n):
        return [0] if self.homogeneous else list(range(n))


class AugmentedCost(CostModel):
    """sigma(v, x, y) + |x - f0_v| / 2, which charges offline movement as service."""

    family = "augmented"

    def __init__(self, base: CostModel, f0: Configuration):
        super().__init__(base.x_max, base.y_max)
        self.base = base
        self.f0 = f0 if isinstance(f0, Configuration) else Configuration(f0)
        base.node_count(self.f0.n)
        self.n = self.f0.n
        self._f0 = np.asarray(self.f0.counts)

    def sigma(self, v, x, y):
        return self.base.sigma(v, x, y) + abs(x - self.f0[v]) / 2

    def sigma_vec(self, v, x, y):
        v = np.asarray(v)
        return self.base.sigma_vec(v, x, y) + np.abs(np.asarray(x) - self._f0[v]) / 2

    def to_dict(self):
        return {"family": self.family, "params": {"base": self.base.to_dict(), "f0": list(self.f0.counts)},
                "x_max": self.x_max, "y_max": self.y_max}


# ---------------------------------------------------------------------------
# evaluation


def evaluate(model: CostModel, v: int, x: int, y: int) -> float:
    if model.n is not None and not 0 <= v < model.n:
        raise InvalidArgumentError(f"node {v} out of range [0, {model.n})")
    if not 0 <= x <= model.x_max:
        raise InvalidArgumentError(f"resource count {x} outside [0, {model.x_max}]")
    if not 0 <= y <= model.y_max:
        raise InvalidArgumentError(f"demand count {y} outside [0, {model.y_max}]")
    return model.sigma(v, x, y)


def total_service_cost(model: CostModel, config, demands) -> float:
    f = config.counts if isinstance(config, Configuration) else tuple(config)
    d = demands.counts if isinstance(demands, DemandState) else tuple(demands)
    if len(f) != len(d):
        raise InvalidArgumentError(f"configuration has {len(f)} nodes but demands have {len(d)}")
    return math.fsum(evaluate(model, v, f[v], d[v]) for v in range(len(f)))


# ---------------------------------------------------------------------------
# axioms


@dataclass
class AxiomResult:
    passed: bool
    witness: tuple[int, int, int] | None = None
    lhs: float | None = None
    rhs: float | None = None


@dataclass
class PropertyReport:
    x_max: int
    y_max: int
    results: dict[str, AxiomResult] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results.values())

    def failed(self) -> list[str]:
        return [name for name, r in self.results.items() if not r.passed]

    def to_dict(self) -> dict:
        return {
            "x_max": self.x_max,
            "y_max": self.y_max,
            "passed": self.passed,
            "axioms": {
                name: {"passed": r.passed, "witness": list(r.witness) if r.witness else None,
                       "lhs": r.lhs, "rhs": r.rhs}
                for name, r in self.results.items()
            },
        }


def node_grid(model: CostModel, v: int, x_max: int, y_max: int) -> np.ndarray:
    xs = np.arange(x_max + 1)[:, None]
    ys = np.arange(y_max + 1)[None, :]
    return np.asarray(model.sigma_vec(np.full((x_max + 1, y_max + 1), v), xs, ys), dtype=float)


def _first_violation(lhs: np.ndarray, rhs: np.ndarray, v: int, tol: float):
    """Witness for the first place where ``lhs >= rhs - tol`` fails."""
    bad = lhs < rhs - tol
    if not bad.any():
        return None
    x, y = (int(i) for i in np.argwhere(bad)[0])
    return AxiomResult(False, (v, x, y), float(lhs[x, y]), float(rhs[x, y]))


def check_properties(model: CostModel, x_max: int | None = None, y_max: int | None = None,
                     n: int | None = None, tol: float = 0.0) -> PropertyReport:
    """Exhaustively verify the four cost-function axioms on [0, x_max] x [0, y_max].

    Each inequality is checked wherever all of its terms are in bounds.  Results
    are cached per (bounds, n, tol) on the model instance.
    """
    x_max = model.x_max if x_max is None else x_max
    y_max = model.y_max if y_max is None else y_max
    if not (0 <= x_max <= model.x_max and 0 <= y_max <= model.y_max):
        raise InvalidArgumentError(
            f"check bounds ({x_max}, {y_max}) exceed model bounds ({model.x_max}, {model.y_max})")
    if model.n is not None:
        n = model.node_count(n)
    elif n is None:
        n = 1
    key = (x_max, y_max, n, tol)
    if key in model._reports:
        return model._reports[key]

    report = PropertyReport(x_max, y_max, {name: AxiomResult(True) for name in AXIOMS})
    for v in model.distinct_nodes(n):
        g = node_grid(model, v, x_max, y_max)
        dx = g[:-1, :] - g[1:, :]  # saving from one more resource, indexed by x
        checks = {
            # sigma(x, y) >= sigma(x+1, y)
            "decreasing_in_resources": (g[:-1, :], g[1:, :]),
            # sigma(x, y+1) >= sigma(x, y)
            "increasing_in_demands": (g[:, 1:], g[:, :-1]),
            # saving(x) >= saving(x+1)
            "diminishing_returns": (dx[:-1, :], dx[1:, :]),
            # saving(x, y+1) >= saving(x, y)
            "marginal_grows_with_demand": (dx[:, 1:], dx[:, :-1]),
        }
        for name, (lhs, rhs) in checks.items():
            if not report.results[name].passed or lhs.size == 0:
                continue
            hit = _first_violation(lhs, rhs, v, tol)
            if hit is not None:
                report.results[name] = hit
    model._reports[key] = report
    return report


# ---------------------------------------------------------------------------
# derived constants


@dataclass(frozen=True)
class CostModelStats:
    delta_max: float
    service_min: float | None
    f0: Configuration
    y_max: int


def delta_max(model: CostModel, y_max: int | None = None, n: int | None = None) -> float:
    """Largest cost increase one extra demand can cause (attained with no resources)."""
    y_max = model.y_max if y_max is None else y_max
    if y_max < 1:
        return 0.0
    n = model.n if model.n is not None else (n or 1)
    best = 0.0
    for v in model.distinct_nodes(n):
        row = np.asarray(model.sigma_vec(np.full(y_max + 1, v), np.zeros(y_max + 1, dtype=int),
                                         np.arange(y_max + 1)), dtype=float)
        best = max(best, float(np.max(row[1:] - row[:-1])))
    return best


def delta_max_all_resources(model: CostModel, y_max: int | None = None, x_max: int | None = None,
                            n: int | None = None) -> float:
    """Same maximum taken over every resource count, not just x = 0."""
    y_max = model.y_max if y_max is None else y_max
    x_max = model.x_max if x_max is None else x_max
    n = model.n if model.n is not None else (n or 1)
    best = 0.0
    for v in model.distinct_nodes(n):
        g = node_grid(model, v, x_max, y_max)
        if y_max >= 1:
            best = max(best, float(np.max(g[:, 1:] - g[:, :-1])))
    return best


def service_min(model: CostModel, f0: Configuration) -> float:
    """Cheapest zero-demand cost of any placement other than ``f0``.

    The unconstrained optimum is found greedily; when it coincides with ``f0``
    the runner-up is one move away from it.  Small domains are cross-checked by
    enumeration.
    """
    from .offline import optimal_allocation

    f0 = f0 if isinstance(f0, Configuration) else Configuration(f0)
    n, k = f0.n, f0.k
    model.node_count(n)
    if n == 1:
        raise InvalidArgumentError("no alternative feasible solution: a single node admits one placement")
    zero = DemandState.empty(n)
    best = optimal_allocation(model, zero, k)
    if best.configuration != f0:
        value = best.cost
    else:
        value = _best_single_move_cost(model, f0)
    if n * k <= 20:
        brute = _service_min_brute(model, f0)
        if brute != value:
            raise RuntimeError(f"service_min mismatch: greedy {value} vs enumeration {brute}")
    return value


def _best_single_move_cost(model: CostModel, f: Configuration) -> float:
    n = f.n
    base = [model.sigma(v, f[v], 0) for v in range(n)]
    best = math.inf
    for src in range(n):
        if f[src] == 0:
            continue
        for dst in range(n):
            if dst == src:
                continue
            costs = list(base)
            costs[src] = model.sigma(src, f[src] - 1, 0)
            costs[dst] = model.sigma(dst, f[dst] + 1, 0)
            best = min(best, math.fsum(costs))
    return best


def _service_min_brute(model: CostModel, f0: Configuration) -> float:
    from .core import enumerate_configurations

    best = math.inf
    for counts in enumerate_configurations(f0.n, f0.k):
        if counts == f0.counts:
            continue
        best = min(best, math.fsum(model.sigma(v, counts[v], 0) for v in range(f0.n)))
    return best


def compute_stats(model: CostModel, f0: Configuration, y_max: int | None = None) -> CostModelStats:
    f0 = f0 if isinstance(f0, Configuration) else Configuration(f0)
    y_max = model.y_max if y_max is None else y_max
    key = (f0.counts, y_max)
    if key not in model._stats:
        smin = service_min(model, f0) if f0.n > 1 else None
        model._stats[key] = CostModelStats(delta_max(model, y_max, f0.n), smin, f0, y_max)
    return model._stats[key]


def augment_with_movement_cost(model: CostModel, f0: Configuration) -> AugmentedCost:
    return AugmentedCost(model, f0)


def augmented_identity_gap(model: CostModel, f0: Configuration, config, demands) -> float:
    """S'(F) - S(F) - chi(F0, F); zero when the augmentation is exact."""
    aug = model if isinstance(model, AugmentedCost) else AugmentedCost(model, f0)
    return (total_service_cost(aug, config, demands) - total_service_cost(aug.base, config, demands)
            - chi_distance(aug.f0, config))


# ---------------------------------------------------------------------------
# serialisation

_FAMILIES = {"covering", "fractional", "capped", "table", "augmented"}


def model_from_dict(spec: dict) -> CostModel:
    family = spec.get("family")
    if family not in _FAMILIES:
        raise InvalidArgumentError(f"family: unknown cost family {family!r}")
    params = dict(spec.get("params") or {})
    x_max = spec.get("x_max", DEFAULT_X_MAX)
    y_max = spec.get("y_max", DEFAULT_Y_MAX)
    if family == "covering":
        return CoveringCost(x_max, y_max)
    if family == "fractional":
        return FractionalCost(x_max, y_max)
    if family == "capped":
        return CappedLinearCost(params.get("capacity", 1.0), x_max, y_max)
    if family == "table":
        cost = params.get("cost", spec.get("cost"))
        if cost is None:
            raise InvalidArgumentError("params.cost: table family needs cost[v][x][y]")
        return TableCost(cost, spec.get("x_max"), spec.get("y_max"))
    base = model_from_dict(params["base"])
    return AugmentedCost(base, Configuration(params["f0"]))


def load_model(path) -> CostModel:
    text = Path(path).read_text()
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    return model_from_dict(spec)
