import json
import math

import pytest

from resmove.adversary import (
    ConstructionError,
    NeverMove,
    OracleFollower,
    build_schedule,
    covering_model_for,
    game_verdicts,
    optimal_cost_trace,
    phase_sizes,
    run_game,
)
from resmove.core import Configuration, InstanceConfig, InvalidArgumentError
from resmove.online import GuaranteeParams, Session


def _f0(k, n):
    return Configuration([1] * k + [0] * (n - k))


def _greedy(sched, n, alpha, beta):
    model = covering_model_for(sched)
    return Session(model, InstanceConfig(n, sched.k, _f0(sched.k, n)), GuaranteeParams(alpha, beta),
                   record_history=False)


def test_schedule_examples():
    s = build_schedule(9, 1.0, 1.0, 3)
    assert s.sizes == (3, 1, 1)
    assert s.beta_prime == 10
    assert s.thresholds[:2] == (2, 6)
    assert s.sigma_star[1] == 6
    assert build_schedule(9, 1.0, 1.0, 1).sizes == (3,)
    with pytest.raises(InvalidArgumentError):
        build_schedule(3, 1.0, 1.0, 3)
    with pytest.raises(InvalidArgumentError):
        build_schedule(9, 1.0, 1.0, 0)


@pytest.mark.parametrize("k", [9, 10, 12, 30, 81])
@pytest.mark.parametrize("p_max", [1, 2, 3, 5, 8])
@pytest.mark.parametrize("alpha", [1.0, 1.5, 2.0])
def test_schedule_invariants(k, p_max, alpha):
    beta = 1.0
    s = build_schedule(k, alpha, beta, p_max)
    sizes = s.sizes
    assert len(sizes) == p_max and sizes[0] <= k / 3 and sizes[-1] >= 1
    assert all(a >= b for a, b in zip(sizes, sizes[1:]))
    if p_max >= 2:
        assert sizes[-1] == 1
    assert s.thresholds[0] == 2
    for i in range(1, p_max + 1):
        n_i = sizes[i - 1]
        tail = sum((sizes[j - 1] - sizes[j]) * s.thresholds[j - 1] for j in range(1, i))
        assert s.sigma_star[i] == n_i * s.thresholds[i - 1] + tail
        assert s.thresholds[i] - s.thresholds[i - 1] >= ((alpha - 1) * s.sigma_star[i] + s.beta_prime) / n_i
    assert all(a <= b for a, b in zip(s.sigma_star, s.sigma_star[1:]))


def test_phase_sizes_follow_power_law():
    k, p = 81, 5
    want = [math.floor((k / 3) ** ((p - i) / (p - 1)) + 1e-9) for i in range(1, p + 1)]
    assert phase_sizes(k, p) == want == [27, 11, 5, 2, 1]


def test_greedy_is_forced_to_move():
    k, n = 9, 27
    sched = build_schedule(k, 1.0, 1.0, 3)
    tr = run_game(sched, _greedy(sched, n, 1.0, 1.0), n)
    assert tr.completed
    for p, need in zip((1, 2, 3), (3, 7, 7)):
        assert tr.phase_moves[p] >= need
    assert all(v.passed for v in game_verdicts(tr)), [v.line() for v in game_verdicts(tr)]
    assert tr.inconsistent_reports == 0


def test_optimal_cost_trace_matches_closed_form():
    k, n = 9, 27
    sched = build_schedule(k, 1.0, 1.0, 3)
    tr = run_game(sched, _greedy(sched, n, 1.0, 1.0), n)
    per_phase = optimal_cost_trace(sched, tr)
    assert per_phase[0] == (1, 6.0, 9)
    assert [x[1] for x in per_phase] == sorted(x[1] for x in per_phase)
    steady = [r for r in tr.records if r["phase"] == 0][-1]
    assert steady["Sstar"] == 0 and steady["Mstar"] == k


def test_optimal_cost_trace_flags_bad_schedule():
    k, n = 9, 27
    sched = build_schedule(k, 1.0, 1.0, 3)
    tr = run_game(sched, _greedy(sched, n, 1.0, 1.0), n)
    broken = type(sched)(**{**sched.__dict__, "sigma_star": (0.0, 7.0) + sched.sigma_star[2:]})
    with pytest.raises(ConstructionError):
        optimal_cost_trace(broken, tr)


def test_never_move_breaches():
    k, n = 9, 27
    sched = build_schedule(k, 1.0, 1.0, 3)
    tr = run_game(sched, NeverMove(_f0(k, n)), n)
    assert tr.verdict == "guarantee-breach"
    assert tr.detail["phase"] == 0
    # with enough slack for phase 0, the breach happens once thresholds climb
    sched = build_schedule(k, 1.0, 50.0, 3)
    tr = run_game(sched, NeverMove(_f0(k, n)), n)
    assert tr.verdict == "guarantee-breach" and tr.detail["phase"] == 1
    assert not game_verdicts(tr)[0].passed


def test_oracle_follower_completes():
    k, n = 9, 27
    sched = build_schedule(k, 1.0, 1.0, 3)
    tr = run_game(sched, OracleFollower(covering_model_for(sched), _f0(k, n)), n)
    assert tr.completed
    for p in (1, 2, 3):
        assert tr.phase_moves[p] >= k - 2 * sched.size(p)


@pytest.mark.parametrize("k, alpha", [(9, 1.0), (9, 2.0), (12, 1.5)])
def test_game_invariants(k, alpha):
    n = 3 * k
    sched = build_schedule(k, alpha, 1.0, 4)
    tr = run_game(sched, _greedy(sched, n, alpha, 1.0), n)
    assert tr.completed
    for p in range(1, 5):
        assert tr.max_phi[p] <= sched.size(p) - 1
        assert set(tr.chosen[p]) <= set(tr.reached[p])
        assert len(tr.reached[p]) == k
    assert all(tr.f0[r["node"]] == 0 for r in tr.records)


def test_transcript_jsonl_records():
    k, n = 9, 27
    sched = build_schedule(k, 1.0, 1.0, 2)
    tr = run_game(sched, _greedy(sched, n, 1.0, 1.0), n)
    lines = tr.to_jsonl().splitlines()
    assert len(lines) == len(tr.records)
    first = json.loads(lines[0])
    assert {"t", "node", "moves", "phi", "phase", "S", "Sstar"} <= set(first)
    assert [json.loads(x)["t"] for x in lines] == list(range(1, len(lines) + 1))


def test_game_preconditions():
    sched = build_schedule(9, 1.0, 1.0, 3)
    with pytest.raises(InvalidArgumentError):
        run_game(sched, NeverMove(_f0(9, 20)), 20)
    with pytest.raises(InvalidArgumentError):
        run_game(sched, NeverMove(_f0(9, 30)), 27)
