"""Instances, placements, demand bookkeeping and the movement distance."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

# A move is "strictly improving" only above this margin.
IMPROVEMENT_EPS = 1e-12


class InvalidArgumentError(ValueError):
    """Raised when an operation receives out-of-range or inconsistent input."""


@dataclass(frozen=True)
class Configuration:
    """Resource counts per node; ``counts[v]`` is the number of resources at v."""

    counts: tuple[int, ...]

    def __init__(self, counts: Sequence[int]):
        counts = tuple(int(c) for c in counts)
        if any(c < 0 for c in counts):
            raise InvalidArgumentError(f"negative resource count in {counts}")
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return len(self.counts)

    @property
    def k(self) -> int:
        return sum(self.counts)

    def __getitem__(self, v: int) -> int:
        return self.counts[v]

    def __len__(self) -> int:
        return len(self.counts)

    def __iter__(self):
        return iter(self.counts)

    def occupied(self) -> list[int]:
        return [v for v, c in enumerate(self.counts) if c > 0]


@dataclass(frozen=True)
class InstanceConfig:
    n: int
    k: int
    initial_placement: Configuration

    def __post_init__(self):
        if self.n < 1:
            raise InvalidArgumentError(f"n must be >= 1, got {self.n}")
        if self.k < 1:
            raise InvalidArgumentError(f"k must be >= 1, got {self.k}")
        f0 = self.initial_placement
        if not isinstance(f0, Configuration):
            object.__setattr__(self, "initial_placement", Configuration(f0))
            f0 = self.initial_placement
        if f0.n != self.n or f0.k != self.k:
            raise InvalidArgumentError(
                f"initial placement {f0.counts} does not place k={self.k} resources on n={self.n} nodes"
            )

    @classmethod
    def spread(cls, n: int, k: int) -> "InstanceConfig":
        """Round-robin placement: one resource per node starting at node 0."""
        counts = [0] * n
        for i in range(k):
            counts[i % n] += 1
        return cls(n, k, Configuration(counts))


@dataclass(frozen=True)
class DemandState:
    counts: tuple[int, ...]
    t: int = 0

    def __init__(self, counts: Sequence[int], t: int | None = None):
        counts = tuple(int(c) for c in counts)
        if any(c < 0 for c in counts):
            raise InvalidArgumentError(f"negative demand count in {counts}")
        total = sum(counts)
        if t is None:
            t = total
        if t != total:
            raise InvalidArgumentError(f"demand counts sum to {total} but t={t}")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "t", t)

    @classmethod
    def empty(cls, n: int) -> "DemandState":
        return cls([0] * n, 0)

    @property
    def n(self) -> int:
        return len(self.counts)

    def __getitem__(self, v: int) -> int:
        return self.counts[v]


@dataclass(frozen=True)
class MovementRecord:
    """One executed move: ``index`` is 1-based, ``time`` the demand count at the move."""

    index: int
    time: int
    src: int
    dst: int
    improvement: float

    def __post_init__(self):
        if self.src == self.dst:
            raise InvalidArgumentError(f"move {self.index} has src == dst == {self.src}")


def _check_pair(a: Configuration, b: Configuration) -> None:
    if len(a) != len(b):
        raise InvalidArgumentError(f"dimension mismatch: {len(a)} vs {len(b)} nodes")
    if sum(a) != sum(b):
        raise InvalidArgumentError(f"resource totals differ: {sum(a)} vs {sum(b)}")


def chi_distance(a: Configuration | Sequence[int], b: Configuration | Sequence[int]) -> int:
    """Number of single-resource moves needed to turn ``a`` into ``b``."""
    a = a if isinstance(a, Configuration) else Configuration(a)
    b = b if isinstance(b, Configuration) else Configuration(b)
    _check_pair(a, b)
    return sum(max(0, x - y) for x, y in zip(a, b))


def chi_distance_abs(a, b) -> int:
    """Half the L1 distance; equals :func:`chi_distance` on feasible pairs."""
    a = a if isinstance(a, Configuration) else Configuration(a)
    b = b if isinstance(b, Configuration) else Configuration(b)
    _check_pair(a, b)
    return sum(abs(x - y) for x, y in zip(a, b)) // 2


def apply_demand(state: DemandState, node: int) -> DemandState:
    if not 0 <= node < state.n:
        raise InvalidArgumentError(f"node {node} out of range [0, {state.n})")
    counts = list(state.counts)
    counts[node] += 1
    return DemandState(counts, state.t + 1)


def apply_move(config: Configuration, src: int, dst: int) -> Configuration:
    n = len(config)
    if not (0 <= src < n and 0 <= dst < n):
        raise InvalidArgumentError(f"move {src}->{dst} out of range [0, {n})")
    if src == dst:
        raise InvalidArgumentError(f"src and dst are both {src}")
    if config[src] < 1:
        raise InvalidArgumentError(f"no resource at source node {src}")
    counts = list(config.counts)
    counts[src] -= 1
    counts[dst] += 1
    return Configuration(counts)


def move_sequence(a: Configuration, b: Configuration) -> list[tuple[int, int]]:
    """A shortest list of (src, dst) moves from ``a`` to ``b``, lowest ids first."""
    _check_pair(a, b)
    surplus = [v for v in range(len(a)) for _ in range(max(0, a[v] - b[v]))]
    deficit = [v for v in range(len(a)) for _ in range(max(0, b[v] - a[v]))]
    return list(zip(surplus, deficit))


def enumerate_configurations(n: int, k: int):
    """Yield every way of placing k resources on n nodes, in lexicographic order."""
    if n == 1:
        yield (k,)
        return
    for first in range(k + 1):
        for rest in enumerate_configurations(n - 1, k - first):
            yield (first,) + rest
