"""Experiment orchestration: config loading, single runs, adversary games, sweeps.

Every run writes into its own directory:

* ``metrics.csv``   rows t,S,Sstar,M,Mstar,phase
* ``report.json``   verdicts, per-phase table and summary (sorted keys, no timestamps)
* ``transcript.jsonl`` (adversary runs only) one record per demand

Outputs depend only on the config, so repeated runs are byte-identical.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

from .adversary import NeverMove, OracleFollower, build_schedule, covering_model_for, game_verdicts, run_game
from .core import Configuration, InstanceConfig, InvalidArgumentError
from .costs import CostModel, load_model, model_from_dict
from .online import GuaranteeParams, MetricsSeries, Session, run_trace
from .phases import (
    BoundParams,
    BoundPreconditionError,
    CheckResult,
    check_phase_replay,
    check_removal_floor,
    check_improvement_bounds,
    check_phase_length,
    check_movement_bound,
    partition_phases,
)
from .traces import TraceSpec, generate_trace, load_trace, validate_trace

OUT_ENV = "RESMOVE_OUT"
ALGORITHMS = ("greedy", "oracle", "never")


class ConfigError(InvalidArgumentError):
    pass


def default_output_root() -> Path:
    return Path(os.environ.get(OUT_ENV, "results"))


@dataclass
class AdversaryConfig:
    k: int
    n: int
    p_max: int
    algorithm: str = "greedy"


@dataclass
class ExperimentConfig:
    name: str
    guarantee: GuaranteeParams
    instance: InstanceConfig | None = None
    cost_model: CostModel | None = None
    trace: list[int] = field(default_factory=list)
    bounds: BoundParams | None = None
    output_dir: Path | None = None
    adversary: AdversaryConfig | None = None
    record_history: bool = True
    bounds_enforce: bool = True
    raw: dict = field(default_factory=dict)

    def out_dir(self) -> Path:
        return self.output_dir if self.output_dir is not None else default_output_root() / self.name


def _need(d: dict, key: str, path: str):
    if not isinstance(d, dict) or key not in d:
        raise ConfigError(f"{path}{key}: required field missing")
    return d[key]


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return value


def _as_float(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _resolve(path_str: str, base_dir: Path, field_path: str) -> Path:
    p = Path(path_str)
    if not p.is_absolute():
        p = base_dir / p
    if not p.exists():
        raise ConfigError(f"{field_path}: file {str(p)!r} does not exist")
    return p


def _parse_bounds(d) -> BoundParams | None:
    if d is None:
        return None
    try:
        return BoundParams(ell=_as_int(d.get("ell", 1), "bounds.ell"),
                           epsilon=_as_float(d.get("epsilon", 1.0), "bounds.epsilon"),
                           rho=_as_float(d.get("rho", 1.0), "bounds.rho"),
                           C=_as_float(d.get("C", 10.0), "bounds.C"))
    except ConfigError:
        raise
    except InvalidArgumentError as exc:
        raise ConfigError(f"bounds: {exc}") from exc


def experiment_from_dict(d: dict, base_dir=".") -> ExperimentConfig:
    """Validate a config dict; relative file references resolve against ``base_dir``."""
    base_dir = Path(base_dir)
    if not isinstance(d, dict):
        raise ConfigError("<root>: config must be a JSON object")
    g = _need(d, "guarantee", "")
    try:
        params = GuaranteeParams(_as_float(_need(g, "alpha", "guarantee."), "guarantee.alpha"),
                                 _as_float(_need(g, "beta", "guarantee."), "guarantee.beta"))
    except ConfigError:
        raise
    except InvalidArgumentError as exc:
        raise ConfigError(f"guarantee: {exc}") from exc
    out = d.get("output", {}).get("dir")
    cfg = ExperimentConfig(name=str(d.get("name", "experiment")), guarantee=params,
                           bounds=_parse_bounds(d.get("bounds")),
                           output_dir=None if out is None else Path(out),
                           record_history=bool(d.get("record_history", True)),
                           bounds_enforce=bool(d.get("bounds_enforce", True)), raw=d)

    if "adversary" in d:
        a = d["adversary"]
        k = _as_int(_need(a, "k", "adversary."), "adversary.k")
        n = _as_int(a.get("n", 3 * k), "adversary.n")
        p_max = _as_int(_need(a, "p_max", "adversary."), "adversary.p_max")
        alg = a.get("algorithm", "greedy")
        if alg not in ALGORITHMS:
            raise ConfigError(f"adversary.algorithm: expected one of {ALGORITHMS}, got {alg!r}")
        cfg.adversary = AdversaryConfig(k, n, p_max, alg)
        return cfg

    inst = _need(d, "instance", "")
    n = _as_int(_need(inst, "n", "instance."), "instance.n")
    k = _as_int(_need(inst, "k", "instance."), "instance.k")
    try:
        if inst.get("initial_placement") is None:
            cfg.instance = InstanceConfig.spread(n, k)
        else:
            cfg.instance = InstanceConfig(n, k, Configuration(inst["initial_placement"]))
    except InvalidArgumentError as exc:
        raise ConfigError(f"instance: {exc}") from exc

    cm = _need(d, "cost_model", "")
    try:
        if isinstance(cm, str):
            cfg.cost_model = load_model(_resolve(cm, base_dir, "cost_model"))
        else:
            cfg.cost_model = model_from_dict(cm)
    except ConfigError:
        raise
    except InvalidArgumentError as exc:
        raise ConfigError(f"cost_model.{exc}") from exc

    tr = _need(d, "trace", "")
    y_max = cfg.cost_model.y_max
    try:
        if "file" in tr:
            try:
                cfg.trace = load_trace(_resolve(tr["file"], base_dir, "trace.file"), n, y_max)
            except ConfigError:
                raise
            except InvalidArgumentError as exc:
                raise ConfigError(f"trace.file: {exc}") from exc
        elif "nodes" in tr:
            cfg.trace = [_as_int(v, f"trace.nodes[{i}]") for i, v in enumerate(tr["nodes"])]
            validate_trace(cfg.trace, n, y_max, "nodes")
        elif "generator" in tr:
            gen = dict(tr["generator"])
            gen.setdefault("n", n)
            cfg.trace = generate_trace(TraceSpec.from_dict(gen, n), y_max)
            validate_trace(cfg.trace, n, y_max, "generator")
        else:
            raise ConfigError("trace: expected one of 'file', 'nodes' or 'generator'")
    except ConfigError:
        raise
    except InvalidArgumentError as exc:
        raise ConfigError(f"trace.{exc}") from exc
    return cfg


def load_experiment(path) -> ExperimentConfig:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    return experiment_from_dict(d, path.parent)


# ---------------------------------------------------------------------------
# verdicts and output


@dataclass
class RunResult:
    metrics: MetricsSeries | None
    verdicts: list[CheckResult]
    report: dict
    out_dir: Path | None = None
    transcript: object = None

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def lines(self) -> list[str]:
        return [v.line() for v in self.verdicts]


def check_metrics_invariants(metrics: MetricsSeries, params: GuaranteeParams) -> list[CheckResult]:
    alpha, beta = params.alpha, params.beta
    rows = metrics.rows
    out = []
    bad = next((r for r in rows if not r.S < alpha * r.Sstar + beta), None)
    out.append(CheckResult("guarantee_invariant", bad is None,
                           None if bad is None else {"t": bad.t, "S": bad.S, "Sstar": bad.Sstar}, len(rows)))
    dec = next((b for a, b in zip(rows, rows[1:]) if b.Sstar < a.Sstar), None)
    out.append(CheckResult("optimum_non_decreasing", dec is None, None if dec is None else {"t": dec.t}, len(rows)))
    mdec = next((b for a, b in zip(rows, rows[1:]) if b.M < a.M), None)
    out.append(CheckResult("movement_non_decreasing", mdec is None, None if mdec is None else {"t": mdec.t},
                           len(rows)))
    return out


def bound_verdict(metrics, params, bounds: BoundParams | None, k: int, service_min,
                  enforce: bool = True) -> tuple[CheckResult | None, dict]:
    """Movement bound as a verdict; parameter mismatches skip instead of failing.

    With ``enforce=False`` a mismatch is still measured (status "measured")
    but produces no verdict.
    """
    if bounds is None:
        return None, {"status": "not requested"}
    try:
        rep = check_movement_bound(metrics, params, bounds, k, service_min)
    except BoundPreconditionError as exc:
        if enforce:
            return None, {"status": "skipped", "reason": str(exc)}
        rep = check_movement_bound(metrics, params, bounds, k, service_min, enforce=False)
        d = rep.to_dict()
        d.update(status="measured", reason=str(exc))
        return None, d
    d = rep.to_dict()
    d["status"] = "pass" if rep.passed else "fail"
    return CheckResult(f"movement_bound[{rep.branch}]", rep.passed,
                       None if rep.passed else {"tightest_C": rep.tightest_C, "t": rep.worst_t},
                       rep.checked), d


def _write_outputs(out_dir: Path, metrics: MetricsSeries | None, report: dict, transcript=None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    if metrics is not None:
        with open(out_dir / "metrics.csv", "w", newline="") as fh:
            metrics.to_csv(fh)
    if transcript is not None:
        (out_dir / "transcript.jsonl").write_text(transcript.to_jsonl())
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def run_experiment(config: ExperimentConfig, write: bool = True) -> RunResult:
    if config.adversary is not None:
        return run_adversary_experiment(config, write)
    session = Session(config.cost_model, config.instance, config.guarantee, record_history=config.record_history)
    metrics = run_trace(session, config.trace)
    phases = partition_phases(session.log, metrics, config.guarantee)

    verdicts = check_metrics_invariants(metrics, config.guarantee)
    verdicts.append(check_phase_length(phases, config.instance.k))
    verdicts.append(check_phase_replay(session.log, phases))
    if session.history is not None:
        verdicts.append(check_removal_floor(session, phases))
        verdicts.append(check_improvement_bounds(session, phases))
    bound, bound_info = bound_verdict(metrics, config.guarantee, config.bounds, config.instance.k,
                                      session.stats.service_min, config.bounds_enforce)
    if bound is not None:
        verdicts.append(bound)

    report = {
        "name": config.name,
        "instance": {"n": config.instance.n, "k": config.instance.k,
                     "initial_placement": list(config.instance.initial_placement.counts)},
        "cost_model": config.cost_model.to_dict(),
        "guarantee": {"alpha": config.guarantee.alpha, "beta": config.guarantee.beta},
        "stats": {"delta_max": session.stats.delta_max, "service_min": session.stats.service_min},
        "summary": dict(metrics.summary(), stalls=session.stalls, trace_length=len(config.trace)),
        "phases": [ph.to_dict() for ph in phases],
        "bound": bound_info,
        "verdicts": [v.to_dict() for v in verdicts],
        "passed": all(v.passed for v in verdicts),
    }
    out_dir = config.out_dir() if write else None
    if write:
        _write_outputs(out_dir, metrics, report)
    return RunResult(metrics, verdicts, report, out_dir)


def _adversary_algorithm(config: ExperimentConfig, schedule):
    a = config.adversary
    f0 = Configuration([1] * a.k + [0] * (a.n - a.k))
    model = covering_model_for(schedule)
    if a.algorithm == "greedy":
        inst = InstanceConfig(a.n, a.k, f0)
        return Session(model, inst, config.guarantee, record_history=config.record_history), model
    if a.algorithm == "oracle":
        return OracleFollower(model, f0), model
    return NeverMove(f0), model


def run_adversary_experiment(config: ExperimentConfig, write: bool = True) -> RunResult:
    """Adaptive adversary game; resources start on nodes 0..k-1, demands go to the rest."""
    a = config.adversary
    if a is None:
        raise ConfigError("adversary: section missing")
    try:
        schedule = build_schedule(a.k, config.guarantee.alpha, config.guarantee.beta, a.p_max)
    except InvalidArgumentError as exc:
        raise ConfigError(f"adversary: {exc}") from exc
    alg, model = _adversary_algorithm(config, schedule)
    transcript = run_game(schedule, alg, a.n, model)
    verdicts = game_verdicts(transcript)

    metrics = None
    report = {"name": config.name, "adversary": {"k": a.k, "n": a.n, "p_max": a.p_max, "algorithm": a.algorithm},
              "guarantee": {"alpha": config.guarantee.alpha, "beta": config.guarantee.beta},
              "game": transcript.summary(), "bound": {"status": "not requested"}}
    if isinstance(alg, Session):
        metrics = alg.metrics
        phases = partition_phases(alg.log, metrics, config.guarantee)
        verdicts.append(check_phase_length(phases, a.k))
        verdicts.extend(check_metrics_invariants(metrics, config.guarantee))
        bound, report["bound"] = bound_verdict(metrics, config.guarantee, config.bounds, a.k,
                                               alg.stats.service_min, config.bounds_enforce)
        if bound is not None:
            verdicts.append(bound)
        report["summary"] = metrics.summary()
        report["phases"] = [ph.to_dict() for ph in phases]
    report["verdicts"] = [v.to_dict() for v in verdicts]
    report["passed"] = all(v.passed for v in verdicts)
    out_dir = config.out_dir() if write else None
    if write:
        _write_outputs(out_dir, metrics, report, transcript)
    return RunResult(metrics, verdicts, report, out_dir, transcript)


# ---------------------------------------------------------------------------
# sweeps


def set_dotted(d: dict, key: str, value) -> None:
    parts = key.split(".")
    cur = d
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
        if not isinstance(cur, dict):
            raise ConfigError(f"{key}: {p!r} is not an object")
    cur[parts[-1]] = value


def grid_cells(grid: dict[str, list]) -> list[dict]:
    keys = sorted(grid)
    for key in keys:
        if not isinstance(grid[key], list) or not grid[key]:
            raise ConfigError(f"grid.{key}: expected a non-empty list of values")
    return [dict(zip(keys, combo)) for combo in product(*(grid[k] for k in keys))]


def _cell_name(i: int, cell: dict) -> str:
    return f"cell{i:03d}"


def _run_cell(args):
    base, base_dir, cell, out_dir = args
    d = copy.deepcopy(base)
    for key, value in cell.items():
        set_dotted(d, key, value)
    d.setdefault("output", {})["dir"] = str(out_dir)
    cfg = experiment_from_dict(d, base_dir)
    res = run_experiment(cfg)
    metrics = res.metrics
    bound = res.report.get("bound", {})
    return {
        "final_M": metrics.final.M if metrics is not None else "",
        "final_Sstar": metrics.final.Sstar if metrics is not None else "",
        "tightest_C": bound.get("tightest_C", ""),
        "passed": res.passed,
    }


def sweep(base: dict, grid: dict[str, list], out_root, base_dir=".", workers: int = 1,
          measure_bound: bool = True) -> tuple[str, bool]:
    """Run every grid cell into ``out_root/cellNNN`` and write ``summary.csv``.

    With ``measure_bound`` the bound is measured even where its parameter
    preconditions fail, so the tightest C column is always filled.
    """
    out_root = Path(out_root)
    cells = grid_cells(grid)
    base = copy.deepcopy(base)
    if measure_bound:
        base.setdefault("bounds", {})
        base["bounds_enforce"] = False
    jobs = [(base, str(base_dir), cell, out_root / _cell_name(i, cell)) for i, cell in enumerate(cells)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell, jobs))
    else:
        rows = [_run_cell(j) for j in jobs]

    keys = sorted(grid)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cell", *keys, "final_M", "final_Sstar", "tightest_C", "passed"])
    for i, (cell, row) in enumerate(zip(cells, rows)):
        w.writerow([_cell_name(i, cell), *(cell[k] for k in keys), row["final_M"],
                    repr(float(row["final_Sstar"])) if row["final_Sstar"] != "" else "",
                    repr(float(row["tightest_C"])) if row["tightest_C"] != "" else "",
                    int(row["passed"])])
    out_root.mkdir(parents=True, exist_ok=True)
    (out_root / "summary.csv").write_text(buf.getvalue())
    return buf.getvalue(), all(r["passed"] for r in rows)
