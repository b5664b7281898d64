"""Phase decomposition of a move log and runtime checks of the analysis.

A phase is a maximal run of consecutive moves in which no move takes a
resource from a node that an earlier move of the same run delivered to.  The
move that would break this rule opens the next phase.  Within a phase every
resource therefore moves at most once, so a phase has at most k moves.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .core import InvalidArgumentError, MovementRecord, chi_distance

TOL = 1e-9


@dataclass(frozen=True)
class PhaseRecord:
    p: int
    first_move: int
    last_move: int
    theta: int
    lam: int
    gamma: float
    Gamma: float
    eta: float | None = None

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class BoundParams:
    ell: int = 1
    epsilon: float = 1.0
    rho: float = 1.0
    C: float = 10.0

    def __post_init__(self):
        if not (self.ell >= 1 and self.epsilon > 0 and self.rho > 0 and self.C > 0):
            raise InvalidArgumentError(f"bound parameters must be positive: {self}")


@dataclass
class CheckResult:
    name: str
    passed: bool
    witness: dict | None = None
    checked: int = 0

    def line(self) -> str:
        status = "pass" if self.passed else "FAIL"
        extra = f" witness={self.witness}" if self.witness else ""
        return f"{self.name}: {status} ({self.checked} checked){extra}"

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "witness": self.witness, "checked": self.checked}


class BoundPreconditionError(InvalidArgumentError):
    pass


def partition_phases(log: Sequence[MovementRecord], metrics=None, params=None) -> list[PhaseRecord]:
    """Split the move log into phases.

    ``eta`` is filled in only when both the metrics series (for S* at the
    phase start) and the guarantee parameters are given.
    """
    groups: list[list[MovementRecord]] = []
    dsts: set[int] = set()
    for mv in log:
        if not groups or mv.src in dsts:
            groups.append([])
            dsts = set()
        groups[-1].append(mv)
        dsts.add(mv.dst)

    phases = []
    cumulative = 0.0
    for p, moves in enumerate(groups, start=1):
        gamma = min(m.improvement for m in moves)
        cumulative += gamma
        theta = moves[0].time
        eta = None
        if metrics is not None and params is not None:
            eta = (params.alpha - 1) * metrics.sstar_at(theta) + params.beta
        phases.append(PhaseRecord(p, moves[0].index, moves[-1].index, theta, len(moves),
                                  gamma, cumulative, eta))
    return phases


def phase_of_moves(phases: Sequence[PhaseRecord]) -> list[int]:
    """Phase number of each move, indexed by move number - 1."""
    out = []
    for ph in phases:
        out.extend([ph.p] * ph.lam)
    return out


def check_phase_length(phases: Sequence[PhaseRecord], k: int) -> CheckResult:
    for ph in phases:
        if ph.lam > k:
            return CheckResult("phase_moves_at_most_k", False, {"phase": ph.p, "lambda": ph.lam, "k": k},
                               len(phases))
    return CheckResult("phase_moves_at_most_k", True, None, len(phases))


def _demand_matrix(trace: Sequence[int], n: int) -> np.ndarray:
    """Row t holds the demand counts after t demands."""
    mat = np.zeros((len(trace) + 1, n), dtype=np.int64)
    if trace:
        mat[np.arange(1, len(trace) + 1), np.asarray(trace)] = 1
        np.cumsum(mat, axis=0, out=mat)
    return mat


def check_removal_floor(session, phases: Sequence[PhaseRecord] | None = None, tol: float = TOL) -> CheckResult:
    """Removing a resource never saves less than the cumulative improvement so far.

    At every recorded instant after a move of phase p, each occupied node must
    lose at least Gamma_{p-1} by giving up one resource.
    """
    hist = session.history
    if hist is None:
        raise InvalidArgumentError("session was run without history recording")
    if phases is None:
        phases = partition_phases(session.log)
    model, n = session.model, session.n
    if not hist.instants:
        return CheckResult("removal_cost_floor", True, None, 0)
    move_phase = phase_of_moves(phases)
    Gamma_before = [0.0] + [ph.Gamma for ph in phases]  # Gamma_before[p] = Gamma_{p}

    ts = np.array([i[0] for i in hist.instants])
    done = np.array([i[1] for i in hist.instants])
    configs = np.array([i[2] for i in hist.instants], dtype=np.int64).reshape(len(ts), n)
    sel = done > 0
    if not sel.any():
        return CheckResult("removal_cost_floor", True, None, 0)
    idx = np.nonzero(sel)[0]
    thr = np.array([Gamma_before[move_phase[m - 1] - 1] for m in done[idx]])
    demands = _demand_matrix(hist.trace, n)[ts[idx]]
    x = configs[idx]
    vv = np.broadcast_to(np.arange(n), x.shape)
    occupied = x > 0
    xm1 = np.where(occupied, x - 1, 0)
    marg = model.sigma_vec(vv, xm1, demands) - model.sigma_vec(vv, x, demands)
    bad = occupied & (marg < thr[:, None] - tol)
    checked = int(occupied.sum())
    if bad.any():
        r, v = (int(i) for i in np.argwhere(bad)[0])
        i = int(idx[r])
        return CheckResult("removal_cost_floor", False,
                           {"instant": i, "t": int(ts[i]), "moves": int(done[i]), "node": v,
                            "saving": float(marg[r, v]), "Gamma_prev": float(thr[r])}, checked)
    return CheckResult("removal_cost_floor", True, None, checked)


def check_improvement_bounds(session, phases: Sequence[PhaseRecord], tol: float = TOL) -> CheckResult:
    """Per-move improvement lies in [eta_p / chi(F_{m-1}, F*), eta_{p+1} + delta_max).

    For moves of the last phase eta_{p+1} does not exist yet; the bound's
    own argument only needs (alpha - 1) * S*_{tau_m} + beta there.
    """
    hist = session.history
    if hist is None:
        raise InvalidArgumentError("session was run without history recording")
    alpha, beta = session.params.alpha, session.params.beta
    dmax = session.stats.delta_max
    metrics = session.metrics
    move_phase = phase_of_moves(phases)
    checked = 0
    for mv in session.log:
        p = move_phase[mv.index - 1]
        eta_p = phases[p - 1].eta
        before = hist.before_move[mv.index - 1]
        opt = hist.optimum_at_move[mv.index - 1]
        dist = chi_distance(before, opt)
        if dist == 0 or mv.improvement < eta_p / dist - tol:
            return CheckResult("improvement_bounds", False,
                               {"move": mv.index, "side": "lower", "improvement": mv.improvement,
                                "eta": eta_p, "chi": dist}, checked)
        if mv.time > 0:
            if p < len(phases):
                eta_next = phases[p].eta
            else:
                eta_next = (alpha - 1) * metrics.sstar_at(mv.time) + beta
            if not mv.improvement < eta_next + dmax + tol:
                return CheckResult("improvement_bounds", False,
                                   {"move": mv.index, "side": "upper", "improvement": mv.improvement,
                                    "eta_next": eta_next, "delta_max": dmax}, checked)
        checked += 1
    return CheckResult("improvement_bounds", True, None, checked)


def check_phase_replay(log: Sequence[MovementRecord], phases: Sequence[PhaseRecord]) -> CheckResult:
    """Inside each phase no node that received a resource later gives one up."""
    for ph in phases:
        received = set()
        for mv in log[ph.first_move - 1: ph.last_move]:
            if mv.src in received:
                return CheckResult("phase_sources_fresh", False, {"phase": ph.p, "move": mv.index}, len(log))
            received.add(mv.dst)
    expected = 1
    for ph in phases:
        if ph.first_move != expected or ph.last_move - ph.first_move + 1 != ph.lam:
            return CheckResult("phase_sources_fresh", False, {"phase": ph.p, "gap_at": expected}, len(log))
        expected = ph.last_move + 1
    if expected != len(log) + 1:
        return CheckResult("phase_sources_fresh", False, {"uncovered_from": expected}, len(log))
    return CheckResult("phase_sources_fresh", True, None, len(log))


@dataclass
class BoundReport:
    branch: str
    passed: bool
    C: float
    tightest_C: float
    worst_t: int | None
    checked: int

    def to_dict(self):
        return asdict(self)

    def line(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (f"movement_bound[{self.branch}]: {status} (C={self.C}, tightest C={self.tightest_C:.4g}, "
                f"worst t={self.worst_t}, {self.checked} checked)")


def _log_base(x, base):
    return math.log(x) / math.log(base)


def alpha_bracket(sstar: float, alpha: float, k: int, service_min: float, beta: float) -> float:
    """1 + log_a S* + min{ln k / ln ln k, log_a k} + log_a(k / (S_min + beta))."""
    log_k_terms = [_log_base(k, alpha)] if k > 1 else [0.0]
    if k > math.e:
        log_k_terms.append(math.log(k) / math.log(math.log(k)))
    denom = service_min + beta
    last = math.inf if denom <= 0 else _log_base(k / denom, alpha)
    return 1 + _log_base(sstar, alpha) + min(log_k_terms) + last


def check_movement_bound(metrics, params, bound: BoundParams, k: int,
                         service_min: float | None = 0.0, enforce: bool = True) -> BoundReport:
    """Movement-cost bound at every sample, with C standing in for the O() constants.

    With ``enforce=False`` a parameter mismatch is not an error; the bound is
    simply measured (useful for sweeps over beta).
    """
    alpha, beta = params.alpha, params.beta
    eps, ell = bound.epsilon, bound.ell
    smin = 0.0 if service_min is None else service_min
    worst_t, tightest, checked = None, 0.0, 0
    if alpha == 1:
        need = k * (3 * bound.rho * k) ** (1 / ell) / eps
        if enforce and beta < need * (1 - 1e-12):
            raise BoundPreconditionError(f"alpha = 1 branch needs beta >= {need}, got {beta}")
        for row in metrics:
            c = (row.M - eps * row.Sstar) / (ell * k)
            checked += 1
            if c > tightest:
                tightest, worst_t = c, row.t
        passed = all(row.M <= eps * row.Sstar + bound.C * ell * k for row in metrics)
        return BoundReport("alpha=1", passed, bound.C, tightest, worst_t, checked)

    if enforce and alpha < 1 + eps:
        raise BoundPreconditionError(f"alpha > 1 branch needs alpha >= 1 + epsilon = {1 + eps}, got {alpha}")
    passed = True
    for row in metrics:
        if row.Sstar < 1:
            continue
        checked += 1
        b = alpha_bracket(row.Sstar, alpha, k, smin, beta)
        if b <= 0:
            c = math.inf if row.M > 0 else 0.0
        else:
            c = row.M / (k * b)
        if c > tightest:
            tightest, worst_t = c, row.t
        if not row.M <= bound.C * k * b:
            passed = False
    return BoundReport("alpha>1", passed, bound.C, tightest, worst_t, checked)
