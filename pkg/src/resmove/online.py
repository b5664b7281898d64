"""Greedy online mover.

After every demand the session checks ``S_t < alpha * S_t* + beta``; while
that fails it executes the single move with the largest service-cost saving:
take a resource from the node where losing it hurts least and give it to the
node where it helps most.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .core import (
    IMPROVEMENT_EPS,
    Configuration,
    DemandState,
    InstanceConfig,
    InvalidArgumentError,
    MovementRecord,
)
from .costs import CostModel, CostModelStats, check_properties, compute_stats
from .offline import OfflineSolver, PreconditionError


class ConditionError(InvalidArgumentError):
    """(alpha, beta) too tight for the cost model's single-demand effect."""

    def __init__(self, message, delta_max, service_min, lhs):
        super().__init__(message)
        self.delta_max = delta_max
        self.service_min = service_min
        self.lhs = lhs


class GuardTrippedError(RuntimeError):
    pass


@dataclass(frozen=True)
class GuaranteeParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if not self.alpha >= 1:
            raise InvalidArgumentError(f"alpha must be >= 1, got {self.alpha}")
        if not self.beta >= 0:
            raise InvalidArgumentError(f"beta must be >= 0, got {self.beta}")


def condition_lhs(params: GuaranteeParams, service_min: float | None) -> float:
    """max{(alpha - 1) * S_min, beta}; with no alternative placement only beta counts."""
    if service_min is None:
        return params.beta if params.alpha == 1 else math.inf
    return max((params.alpha - 1) * service_min, params.beta)


def check_condition(params: GuaranteeParams, stats: CostModelStats) -> None:
    lhs = condition_lhs(params, stats.service_min)
    if not lhs >= stats.delta_max:
        raise ConditionError(
            f"max{{(alpha-1)*S_min, beta}} = max{{({params.alpha}-1)*{stats.service_min}, {params.beta}}}"
            f" = {lhs} < delta_max = {stats.delta_max}",
            stats.delta_max, stats.service_min, lhs)


class MetricsRow(NamedTuple):
    t: int
    S: float
    Sstar: float
    M: int
    Mstar: int
    phase: int


CSV_HEADER = ("t", "S", "Sstar", "M", "Mstar", "phase")


@dataclass
class MetricsSeries:
    rows: list[MetricsRow] = field(default_factory=list)

    def append(self, row: MetricsRow) -> None:
        if self.rows and row.t <= self.rows[-1].t:
            raise InvalidArgumentError(f"metrics rows must have increasing t ({row.t} after {self.rows[-1].t})")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @property
    def final(self) -> MetricsRow:
        return self.rows[-1]

    def sstar_at(self, t: int) -> float:
        row = self.rows[t - self.rows[0].t]
        assert row.t == t
        return row.Sstar

    def to_csv(self, fh=None) -> str:
        buf = fh if fh is not None else io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow((r.t, repr(float(r.S)), repr(float(r.Sstar)), r.M, r.Mstar, r.phase))
        return buf.getvalue() if fh is None else ""

    def summary(self) -> dict:
        last = self.final
        return {"t": last.t, "S": last.S, "Sstar": last.Sstar, "M": last.M, "Mstar": last.Mstar,
                "phases": last.phase}


@dataclass
class History:
    """What the instrumentation needs to replay a run.

    ``instants`` holds (t, moves so far, configuration) after every demand and
    every move.  ``before_move`` and ``optimum_at_move`` give F_{m-1} and the
    solver's optimal placement at the time of move m.
    """

    trace: list[int] = field(default_factory=list)
    instants: list[tuple[int, int, tuple[int, ...]]] = field(default_factory=list)
    before_move: list[tuple[int, ...]] = field(default_factory=list)
    optimum_at_move: list[tuple[int, ...]] = field(default_factory=list)


class Session:
    def __init__(self, model: CostModel, instance: InstanceConfig, params: GuaranteeParams,
                 record_history: bool = True):
        n, k = instance.n, instance.k
        model.node_count(n)
        if model.x_max < k:
            raise InvalidArgumentError(f"model x_max={model.x_max} is below k={k}")
        report = check_properties(model, n=n)
        if not report.passed:
            bad = {name: report.results[name].witness for name in report.failed()}
            raise PreconditionError(f"cost model fails axioms {bad}")
        self.stats = compute_stats(model, instance.initial_placement)
        check_condition(params, self.stats)

        self.model = model
        self.instance = instance
        self.params = params
        self.n, self.k = n, k
        self.f = list(instance.initial_placement.counts)
        self.d = [0] * n
        self.node_cost = [model.sigma(v, self.f[v], 0) for v in range(n)]
        self.solver = OfflineSolver(model, n, k, anchor=instance.initial_placement)
        self.log: list[MovementRecord] = []
        self.metrics = MetricsSeries()
        self.history = History() if record_history else None
        self.stalls = 0
        self._phase = 0
        self._phase_dsts: set[int] = set()
        self._last_sstar = self.solver.cost

        if self.history is not None:
            self.history.instants.append((0, 0, tuple(self.f)))
        self._restore()
        self._sample()

    # -- state -------------------------------------------------------------

    @property
    def t(self) -> int:
        return len(self.history.trace) if self.history is not None else sum(self.d)

    @property
    def S(self) -> float:
        return math.fsum(self.node_cost)

    @property
    def Sstar(self) -> float:
        return self.solver.cost

    @property
    def M(self) -> int:
        return len(self.log)

    @property
    def configuration(self) -> Configuration:
        return Configuration(self.f)

    @property
    def demands(self) -> DemandState:
        return DemandState(self.d)

    @property
    def phase(self) -> int:
        return self._phase

    def guarantee_holds(self) -> bool:
        return self.S < self.params.alpha * self.Sstar + self.params.beta

    # -- moves -------------------------------------------------------------

    def best_move(self) -> tuple[int, int, float] | None:
        """(src, dst, saving) of the best single move, lowest ids on ties."""
        sigma, f, d = self.model.sigma, self.f, self.d
        src, loss = -1, math.inf
        for v in range(self.n):
            if f[v] > 0:
                c = sigma(v, f[v] - 1, d[v]) - sigma(v, f[v], d[v])
                if c < loss:
                    src, loss = v, c
        if src < 0:
            return None
        dst, gain = -1, -math.inf
        for v in range(self.n):
            if v != src:
                g = sigma(v, f[v], d[v]) - sigma(v, f[v] + 1, d[v])
                if g > gain:
                    dst, gain = v, g
        if dst < 0:
            return None
        return src, dst, gain - loss

    def _restore(self) -> list[MovementRecord]:
        moves = []
        alpha, beta = self.params.alpha, self.params.beta
        sstar = self.solver.cost
        t = sum(self.d)
        while math.fsum(self.node_cost) >= alpha * sstar + beta:
            if len(moves) >= 2 * self.k:
                raise GuardTrippedError(
                    f"more than {2 * self.k} moves at t={t} without restoring the guarantee")
            best = self.best_move()
            if best is None or best[2] <= IMPROVEMENT_EPS:
                # Already optimal: nothing can improve further (only possible when beta = 0).
                self.stalls += 1
                break
            src, dst, saving = best
            if self.history is not None:
                self.history.before_move.append(tuple(self.f))
                self.history.optimum_at_move.append(tuple(self.solver.f))
            self.f[src] -= 1
            self.f[dst] += 1
            sigma = self.model.sigma
            self.node_cost[src] = sigma(src, self.f[src], self.d[src])
            self.node_cost[dst] = sigma(dst, self.f[dst], self.d[dst])
            record = MovementRecord(len(self.log) + 1, t, src, dst, saving)
            self.log.append(record)
            moves.append(record)
            if self._phase == 0 or src in self._phase_dsts:
                self._phase += 1
                self._phase_dsts = set()
            self._phase_dsts.add(dst)
            if self.history is not None:
                self.history.instants.append((t, len(self.log), tuple(self.f)))
        return moves

    def _sample(self):
        self.metrics.append(MetricsRow(sum(self.d), self.S, self.Sstar, self.M,
                                       self.solver.movement_cost, self._phase))

    def step(self, node: int) -> list[MovementRecord]:
        if not 0 <= node < self.n:
            raise InvalidArgumentError(f"node {node} out of range [0, {self.n})")
        if self.d[node] + 1 > self.model.y_max:
            raise InvalidArgumentError(f"demand count at node {node} would exceed y_max={self.model.y_max}")
        self.d[node] += 1
        self.node_cost[node] = self.model.sigma(node, self.f[node], self.d[node])
        self.solver.add_demand(node)
        sstar = self.solver.cost
        if sstar < self._last_sstar:
            raise AssertionError(f"optimal cost decreased from {self._last_sstar} to {sstar}")
        self._last_sstar = sstar
        if self.history is not None:
            self.history.trace.append(node)
            self.history.instants.append((sum(self.d), len(self.log), tuple(self.f)))
        moves = self._restore()
        self._sample()
        return moves

    def observe(self, node: int) -> list[tuple[int, int]]:
        """Adversary-facing interface: feed one demand, report the moves made."""
        return [(m.src, m.dst) for m in self.step(node)]


def new_session(model: CostModel, instance: InstanceConfig, params: GuaranteeParams,
                record_history: bool = True) -> Session:
    return Session(model, instance, params, record_history=record_history)


def step(session: Session, node: int) -> list[MovementRecord]:
    return session.step(node)


def run_trace(session: Session, trace: Iterable[int]) -> MetricsSeries:
    for node in trace:
        session.step(node)
    return session.metrics
