import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import all_pairs_best_move, random_table_model
from resmove.core import Configuration, InstanceConfig, InvalidArgumentError
from resmove.costs import CoveringCost, FractionalCost, FunctionCost, compute_stats, total_service_cost
from resmove.offline import PreconditionError
from resmove.online import (
    CSV_HEADER,
    ConditionError,
    GuaranteeParams,
    MetricsRow,
    MetricsSeries,
    check_condition,
    new_session,
    run_trace,
    step,
)

E1 = InstanceConfig(2, 1, Configuration([1, 0]))


def test_condition_accepts_and_rejects():
    new_session(CoveringCost(), E1, GuaranteeParams(1, 2))
    with pytest.raises(ConditionError) as exc:
        new_session(CoveringCost(), E1, GuaranteeParams(1, 0.5))
    assert (exc.value.delta_max, exc.value.service_min, exc.value.lhs) == (1.0, 0.0, 0.5)
    with pytest.raises(ConditionError) as exc:
        new_session(CoveringCost(), E1, GuaranteeParams(3, 0))
    assert exc.value.lhs == 0.0
    assert "delta_max" in str(exc.value)


def test_guarantee_params_validation():
    with pytest.raises(InvalidArgumentError):
        GuaranteeParams(0.5, 1)
    with pytest.raises(InvalidArgumentError):
        GuaranteeParams(1, -1)


def test_reference_step_through():
    s = new_session(CoveringCost(), E1, GuaranteeParams(1, 2))
    assert step(s, 1) == []
    assert s.S == 1
    moves = step(s, 1)
    assert [(m.src, m.dst, m.improvement, m.time, m.index) for m in moves] == [(0, 1, 2.0, 2, 1)]
    assert s.S == 0 and s.Sstar == 0 and s.M == 1
    assert s.metrics.final == MetricsRow(2, 0.0, 0.0, 1, 1, 1)


def test_alpha_two_single_demand_moves_once():
    s = new_session(CoveringCost(), E1, GuaranteeParams(2, 1))
    moves = step(s, 1)
    assert len(moves) == 1 and s.S == 0


def test_empty_trace_has_single_sample():
    s = new_session(CoveringCost(), E1, GuaranteeParams(1, 2))
    series = run_trace(s, [])
    assert len(series) == 1 and series.final.t == 0


def test_e1_trace_final_row():
    s = new_session(CoveringCost(), E1, GuaranteeParams(1, 2))
    final = run_trace(s, [1, 1]).final
    assert (final.S, final.Sstar, final.M) == (0, 0, 1)


def test_constructor_restores_guarantee_at_time_zero():
    # zero-demand cost (y + 3) / (x + 1): F0 = [2, 0] costs 4, best placement [1, 1] costs 3
    model = FunctionCost(lambda v, x, y: (y + 3) / (x + 1), n=2, x_max=4, y_max=50)
    s = new_session(model, InstanceConfig(2, 2, Configuration([2, 0])), GuaranteeParams(1, 1))
    assert s.M == 1 and s.configuration.counts == (1, 1)
    assert s.metrics.rows[0] == MetricsRow(0, 3.0, 3.0, 1, 1, 1)


def test_session_refuses_model_failing_axioms():
    bad = FunctionCost(lambda v, x, y: x + y, n=2, x_max=4, y_max=10)
    with pytest.raises(PreconditionError, match="decreasing_in_resources"):
        new_session(bad, E1, GuaranteeParams(1, 5))


def test_step_errors():
    s = new_session(CoveringCost(y_max=1), E1, GuaranteeParams(1, 2))
    with pytest.raises(InvalidArgumentError):
        step(s, 2)
    step(s, 1)
    with pytest.raises(InvalidArgumentError):
        step(s, 1)


def test_long_uniform_trace_keeps_guarantee():
    rng = np.random.default_rng(0)
    s = new_session(CoveringCost(), InstanceConfig.spread(20, 5), GuaranteeParams(1, 6))
    series = run_trace(s, rng.integers(0, 20, 2000).tolist())
    assert len(series) == 2001
    assert all(r.S < r.Sstar + 6 for r in series)


def _check_session(model, inst, params, trace):
    s = new_session(model, inst, params)
    for node in trace:
        f_before = list(s.f)
        d_after = list(s.d)
        d_after[node] += 1
        moves = s.step(node)
        f = f_before
        for mv in moves:
            # the chosen move is the best single move available at that instant
            assert mv.improvement == pytest.approx(all_pairs_best_move(model, f, d_after), abs=1e-12)
            before = total_service_cost(model, f, d_after)
            f = list(f)
            f[mv.src] -= 1
            f[mv.dst] += 1
            assert before - total_service_cost(model, f, d_after) == pytest.approx(mv.improvement, abs=1e-12)
            assert mv.improvement > 1e-12
        assert f == s.f
        scratch = total_service_cost(model, s.f, s.d)
        assert math.isclose(s.S, scratch, rel_tol=1e-9, abs_tol=1e-12)
        assert s.S < params.alpha * s.Sstar + params.beta
        assert s.M == len(s.log)
    return s


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(1, 4), st.integers(0, 2**31),
       st.sampled_from(["covering", "fractional", "table"]), st.sampled_from([1.0, 1.5, 2.0]))
def test_moves_are_best_and_guarantee_holds(n, k, seed, family, alpha):
    rng = np.random.default_rng(seed)
    if family == "covering":
        model = CoveringCost()
    elif family == "fractional":
        model = FractionalCost()
    else:
        model = random_table_model(rng, n, k, 60)
    inst = InstanceConfig(n, k, Configuration(np.bincount(rng.integers(0, n, k), minlength=n).tolist()))
    stats = compute_stats(model, inst.initial_placement)
    beta = stats.delta_max * float(rng.choice([1.0, 1.5, 3.0]))
    params = GuaranteeParams(alpha, beta)
    check_condition(params, stats)
    _check_session(model, inst, params, rng.integers(0, n, 60).tolist())


def test_metrics_series_invariants_and_csv():
    s = new_session(CoveringCost(), InstanceConfig.spread(4, 2), GuaranteeParams(1, 1))
    run_trace(s, [3, 3, 2, 2, 3, 1, 0, 0])
    rows = s.metrics.rows
    assert [r.t for r in rows] == list(range(9))
    assert all(a.M <= b.M and a.Sstar <= b.Sstar for a, b in zip(rows, rows[1:]))
    text = s.metrics.to_csv()
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 10
    with pytest.raises(InvalidArgumentError):
        MetricsSeries([MetricsRow(1, 0, 0, 0, 0, 0)]).append(MetricsRow(1, 0, 0, 0, 0, 0))


def test_observe_interface_reports_moves():
    s = new_session(CoveringCost(), E1, GuaranteeParams(1, 1))
    assert s.observe(1) == [(0, 1)]
    assert s.configuration.counts == (0, 1)


def test_zero_beta_stalls_instead_of_looping():
    # zero delta_max allows beta = 0; S = S* then violates the strict guarantee, nothing improves
    model = FunctionCost(lambda v, x, y: 0.0, n=2, x_max=3, y_max=5)
    s = new_session(model, E1, GuaranteeParams(1, 0))
    assert s.stalls == 1
    s.step(0)
    assert s.M == 0 and s.stalls == 2
