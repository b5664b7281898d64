"""Adaptive adversary that forces many moves under the covering cost model.

Each node holds 0 or more resources; an uncovered node costs its demand
count.  The game runs in phases.  In phase p the adversary lifts a small set
N_p of nodes to a threshold Gamma_p, chosen so that any algorithm honouring
``S < alpha * (S* + M*) + beta`` can never leave n_p of the threshold nodes
uncovered.  It then keeps lifting free nodes to Gamma_p until k nodes sit at
the threshold, so the algorithm has to chase at least k - 2 n_p of them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .core import Configuration, InvalidArgumentError, chi_distance, move_sequence
from .costs import CostModel, CoveringCost
from .offline import OfflineSolver
from .phases import CheckResult


class ConstructionError(RuntimeError):
    """The schedule's closed-form optimum disagrees with the live solver."""


class OnlineAlgorithm(Protocol):
    @property
    def configuration(self) -> Configuration: ...

    def observe(self, node: int) -> Sequence[tuple[int, int]]: ...


@dataclass(frozen=True)
class AdversarySchedule:
    k: int
    alpha: float
    beta: float
    p_max: int
    sizes: tuple[int, ...]          # n_1 .. n_pmax
    thresholds: tuple[int, ...]     # Gamma_0 .. Gamma_pmax
    sigma_star: tuple[float, ...]   # optimum inside phase 0 .. pmax
    beta_prime: float

    def size(self, p: int) -> int:
        return self.sizes[p - 1]

    def to_dict(self) -> dict:
        return {"k": self.k, "alpha": self.alpha, "beta": self.beta, "p_max": self.p_max,
                "sizes": list(self.sizes), "thresholds": list(self.thresholds),
                "sigma_star": list(self.sigma_star), "beta_prime": self.beta_prime}


def phase_sizes(k: int, p_max: int) -> list[int]:
    top = k // 3
    if p_max == 1:
        return [top]
    sizes = []
    prev = top
    for i in range(1, p_max + 1):
        raw = math.floor((k / 3) ** ((p_max - i) / (p_max - 1)) + 1e-9)
        prev = max(1, min(prev, raw))
        sizes.append(prev)
    return sizes


def build_schedule(k: int, alpha: float, beta: float, p_max: int) -> AdversarySchedule:
    if k < 9:
        raise InvalidArgumentError(f"adversary needs k >= 9, got k={k}")
    if p_max < 1:
        raise InvalidArgumentError(f"p_max must be >= 1, got {p_max}")
    if alpha < 1 or beta < 0:
        raise InvalidArgumentError(f"need alpha >= 1 and beta >= 0, got ({alpha}, {beta})")
    sizes = phase_sizes(k, p_max)
    beta_prime = beta + alpha * k
    thresholds = [2]
    sigma = [0.0]
    for i in range(1, p_max + 1):
        n_i = sizes[i - 1]
        tail = sum((sizes[j - 1] - sizes[j]) * thresholds[j - 1] for j in range(1, i))
        s = n_i * thresholds[i - 1] + tail
        sigma.append(float(s))
        step = math.ceil(((alpha - 1) * s + beta_prime) / n_i)
        thresholds.append(thresholds[-1] + max(1, step))
    return AdversarySchedule(k, alpha, beta, p_max, tuple(sizes), tuple(thresholds), tuple(sigma), beta_prime)


# ---------------------------------------------------------------------------
# simple algorithms to play against


class NeverMove:
    def __init__(self, f0: Configuration):
        self._f = f0

    @property
    def configuration(self):
        return self._f

    def observe(self, node):
        return []


class OracleFollower:
    """Jumps to the solver's optimal placement after every demand."""

    def __init__(self, model: CostModel, f0: Configuration):
        self._f = f0
        self.solver = OfflineSolver(model, f0.n, f0.k, anchor=f0)

    @property
    def configuration(self):
        return self._f

    def observe(self, node):
        self.solver.add_demand(node)
        target = self.solver.configuration
        moves = move_sequence(self._f, target)
        self._f = target
        return moves


# ---------------------------------------------------------------------------
# the game


@dataclass
class GameTranscript:
    schedule: AdversarySchedule
    n: int
    f0: tuple[int, ...]
    records: list[dict] = field(default_factory=list)
    verdict: str = "completed"
    detail: dict | None = None
    phase_moves: dict[int, int] = field(default_factory=dict)
    max_phi: dict[int, int] = field(default_factory=dict)
    chosen: dict[int, list[int]] = field(default_factory=dict)      # N_p
    reached: dict[int, list[int]] = field(default_factory=dict)     # V_p
    inconsistent_reports: int = 0

    @property
    def completed(self) -> bool:
        return self.verdict == "completed"

    @property
    def total_moves(self) -> int:
        return sum(c for p, c in self.phase_moves.items() if p >= 1)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    def summary(self) -> dict:
        return {"verdict": self.verdict, "detail": self.detail,
                "phase_moves": {str(p): c for p, c in sorted(self.phase_moves.items())},
                "max_phi": {str(p): c for p, c in sorted(self.max_phi.items())},
                "chosen": {str(p): v for p, v in sorted(self.chosen.items())},
                "schedule": self.schedule.to_dict()}


class _Breach(Exception):
    pass


class _Game:
    def __init__(self, schedule, algorithm, n, model, record):
        self.s = schedule
        self.alg = algorithm
        self.n = n
        self.k = schedule.k
        self.d = [0] * n
        self.f = algorithm.configuration
        self.f0 = self.f
        self.solver = OfflineSolver(model, n, self.k, anchor=self.f0)
        self.tr = GameTranscript(schedule, n, self.f0.counts)
        self.record = record
        self.phase = 0
        self.stage = "seed"
        self.gamma = None
        self.at_threshold: set[int] = set()

    def phi(self) -> int:
        f = self.f
        return sum(1 for v in self.at_threshold if f[v] == 0)

    def demand(self, node: int) -> None:
        d, tr = self.d, self.tr
        d[node] += 1
        if self.gamma is not None and d[node] == self.gamma:
            self.at_threshold.add(node)
        moves = [tuple(m) for m in self.alg.observe(node)]
        before = self.f
        self.f = self.alg.configuration
        if len(moves) < chi_distance(before, self.f):
            tr.inconsistent_reports += 1
        tr.phase_moves[self.phase] = tr.phase_moves.get(self.phase, 0) + len(moves)
        self.solver.add_demand(node)
        f = self.f
        s_alg = sum(d[v] for v in range(self.n) if f[v] == 0)
        s_opt = self.solver.cost
        m_opt = self.solver.movement_cost
        phi = self.phi()
        tr.max_phi[self.phase] = max(tr.max_phi.get(self.phase, 0), phi)
        if self.record:
            tr.records.append({"t": sum(d), "node": node, "moves": [list(m) for m in moves], "phi": phi,
                               "phase": self.phase, "stage": self.stage, "S": s_alg, "Sstar": s_opt,
                               "Mstar": m_opt})
        bound = self.s.alpha * (s_opt + m_opt) + self.s.beta
        if not s_alg < bound:
            tr.verdict = "guarantee-breach"
            tr.detail = {"t": sum(d), "phase": self.phase, "S": s_alg, "Sstar": s_opt, "Mstar": m_opt,
                         "bound": bound}
            raise _Breach

    def raise_to(self, node: int, level: int) -> None:
        while self.d[node] < level:
            self.demand(node)

    def play(self) -> GameTranscript:
        k, s, tr = self.k, self.s, self.tr
        free0 = [v for v in range(self.n) if self.f0[v] == 0]
        if len(free0) < k + s.size(1):
            raise InvalidArgumentError(
                f"need at least k + n_1 = {k + s.size(1)} initially empty nodes, have {len(free0)}")
        try:
            seed = free0[:k]
            tr.chosen[0] = list(seed)
            for v in seed:
                self.raise_to(v, 2)
            tr.reached[0] = list(seed)
            reached = {0: set(seed)}
            for p in range(1, s.p_max + 1):
                self.phase = p
                tr.phase_moves.setdefault(p, 0)
                level = s.thresholds[p]
                self.gamma = level
                self.at_threshold = set()
                size = s.size(p)
                if p == 1:
                    pool = [v for v in free0 if v not in reached[0]]
                else:
                    pool = sorted(reached[p - 2] - reached[p - 1])
                chosen = pool[:size]
                if len(chosen) < size:
                    raise ConstructionError(f"phase {p}: only {len(chosen)} candidates for N_p of size {size}")
                tr.chosen[p] = chosen
                self.stage = "topup"
                for v in chosen:
                    self.raise_to(v, level)
                self.stage = "main"
                if self.record and tr.records:
                    tr.records[-1]["settled"] = True
                prev = sorted(reached[p - 1])
                while len(self.at_threshold) < k:
                    f = self.f
                    pick = next((v for v in prev if f[v] == 0 and self.d[v] < level), None)
                    if pick is None:
                        tr.verdict = "stuck"
                        tr.detail = {"phase": p, "t": sum(self.d)}
                        return tr
                    self.raise_to(pick, level)
                reached[p] = set(self.at_threshold)
                tr.reached[p] = sorted(reached[p])
        except _Breach:
            pass
        return tr


def run_game(schedule: AdversarySchedule, algorithm: OnlineAlgorithm, n: int,
             model: CostModel | None = None, record: bool = True) -> GameTranscript:
    """Play the adaptive adversary against ``algorithm`` on n >= 3k nodes."""
    k = schedule.k
    if n < 3 * k:
        raise InvalidArgumentError(f"adversary needs n >= 3k = {3 * k}, got n={n}")
    f0 = algorithm.configuration
    if f0.n != n or f0.k != k:
        raise InvalidArgumentError(f"algorithm places {f0.k} resources on {f0.n} nodes, expected k={k}, n={n}")
    if model is None:
        model = CoveringCost(x_max=k, y_max=schedule.thresholds[-1])
    return _Game(schedule, algorithm, n, model, record).play()


def covering_model_for(schedule: AdversarySchedule) -> CoveringCost:
    return CoveringCost(x_max=schedule.k, y_max=schedule.thresholds[-1])


def optimal_cost_trace(schedule: AdversarySchedule, transcript: GameTranscript) -> list[tuple[int, float, int]]:
    """Closed-form optimum per phase, cross-checked against every settled record."""
    out = []
    settled = False
    current = -1
    for r in transcript.records:
        p = r["phase"]
        if p != current:
            current, settled = p, False
        if p == 0:
            continue
        if r.get("settled"):
            settled = True
        if settled:
            want = schedule.sigma_star[p]
            if r["Sstar"] != want:
                raise ConstructionError(f"t={r['t']} phase {p}: solver optimum {r['Sstar']} != closed form {want}")
        if r["Mstar"] != schedule.k:
            raise ConstructionError(f"t={r['t']} phase {p}: optimal movement {r['Mstar']} != k={schedule.k}")
    for p in range(1, schedule.p_max + 1):
        if p in transcript.reached:
            out.append((p, schedule.sigma_star[p], schedule.k))
    return out


def game_verdicts(transcript: GameTranscript) -> list[CheckResult]:
    s, k = transcript.schedule, transcript.schedule.k
    out = [CheckResult("game_completed", transcript.completed, transcript.detail, 1)]
    phases = [p for p in range(1, s.p_max + 1) if p in transcript.reached]

    short = [p for p in phases if transcript.phase_moves.get(p, 0) < k - 2 * s.size(p)]
    out.append(CheckResult("per-phase moves >= k - 2n_p", not short and transcript.completed,
                           {"phases": short, "moves": transcript.phase_moves} if short else None, len(phases)))
    total_ok = transcript.total_moves >= s.p_max * k / 3
    out.append(CheckResult("total moves >= p_max*k/3", total_ok and transcript.completed,
                           None if total_ok else {"total": transcript.total_moves}, 1))
    over = [p for p in phases if transcript.max_phi.get(p, 0) >= s.size(p)]
    out.append(CheckResult("free threshold nodes < n_p", not over, {"phases": over} if over else None, len(phases)))
    subset = [p for p in phases if not set(transcript.chosen[p]) <= set(transcript.reached[p])]
    out.append(CheckResult("N_p within V_p", not subset, {"phases": subset} if subset else None, len(phases)))
    outside = [r["t"] for r in transcript.records if transcript.f0[r["node"]] != 0]
    out.append(CheckResult("demands only on initially empty nodes", not outside,
                           {"t": outside[:5]} if outside else None, len(transcript.records)))
    return out
