"""Command-line entry point.

Exit codes: 0 when every verdict passes, 1 when a verdict fails, 2 for usage
or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .core import InstanceConfig, InvalidArgumentError
from .costs import check_properties, compute_stats, load_model, model_from_dict
from .experiment import (
    ConfigError,
    default_output_root,
    experiment_from_dict,
    run_experiment,
    sweep,
)
from .offline import oracle_check
from .online import GuardTrippedError
from .traces import KINDS, TraceSpec, format_trace, generate_trace

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _params(pairs) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError(f"--param: expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key] = _parse_value(value)
    return out


def _read_config(path) -> tuple[dict, Path]:
    if path is None:
        return {}, Path(".")
    path = Path(path)
    try:
        return json.loads(path.read_text()), path.parent
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc


def _model_arg(text: str):
    """A model is either a JSON file or a bare family name."""
    if Path(text).exists():
        return load_model(text)
    return model_from_dict({"family": text})


def _apply_common(d: dict, args) -> None:
    if args.alpha is not None:
        d.setdefault("guarantee", {})["alpha"] = args.alpha
    if args.beta is not None:
        d.setdefault("guarantee", {})["beta"] = args.beta
    if args.ell is not None or args.epsilon is not None or args.C is not None:
        b = d.setdefault("bounds", {})
        for key, value in (("ell", args.ell), ("epsilon", args.epsilon), ("C", args.C)):
            if value is not None:
                b[key] = value
    if args.out is not None:
        d.setdefault("output", {})["dir"] = args.out
    if args.name is not None:
        d["name"] = args.name


def _report(res) -> int:
    for line in res.lines():
        print(line)
    bound = res.report.get("bound", {})
    if bound.get("status") in ("skipped", "measured"):
        print(f"movement_bound: {bound['status']} ({bound['reason']})")
    if res.out_dir is not None:
        print(f"outputs: {res.out_dir}")
    return EXIT_OK if res.passed else EXIT_FAIL


def cmd_simulate(args) -> int:
    d, base = _read_config(args.config)
    _apply_common(d, args)
    if args.model is not None:
        p = Path(args.model)
        d["cost_model"] = str(p.resolve()) if p.exists() else {"family": args.model}
    inst = d.setdefault("instance", {}) if (args.n or args.k or args.placement) else d.get("instance")
    if args.n is not None:
        inst["n"] = args.n
    if args.k is not None:
        inst["k"] = args.k
    if args.placement is not None:
        inst["initial_placement"] = [int(x) for x in args.placement.split(",")]
    if args.trace is not None:
        d["trace"] = {"file": str(Path(args.trace).resolve())}
    elif args.generator is not None:
        if args.seed is None:
            raise ConfigError("--seed is required with --generator")
        d["trace"] = {"generator": {"kind": args.generator, "length": args.length, "seed": args.seed,
                                    "params": _params(args.param)}}
    elif args.seed is not None and "generator" in d.get("trace", {}):
        d["trace"]["generator"]["seed"] = args.seed
    cfg = experiment_from_dict(d, base)
    return _report(run_experiment(cfg))


def cmd_adversary(args) -> int:
    d, base = _read_config(args.config)
    _apply_common(d, args)
    a = d.setdefault("adversary", {})
    for key, value in (("k", args.k), ("n", args.n), ("p_max", args.p_max), ("algorithm", args.algorithm)):
        if value is not None:
            a[key] = value
    d.setdefault("name", f"adversary-k{a.get('k')}")
    cfg = experiment_from_dict(d, base)
    return _report(run_experiment(cfg))


def cmd_verify_model(args) -> int:
    model = _model_arg(args.model)
    y_max = min(64, model.y_max) if args.y_max is None else args.y_max
    report = check_properties(model, x_max=args.x_max, y_max=y_max, n=args.n)
    for name, res in report.results.items():
        status = "pass" if res.passed else "FAIL"
        extra = f" witness (v, x, y) = {res.witness}" if res.witness is not None else ""
        print(f"{name}: {status}{extra}")
    if args.k is not None and args.n is not None and args.n > 1:
        stats = compute_stats(model, InstanceConfig.spread(args.n, args.k).initial_placement)
        print(f"delta_max: {stats.delta_max!r}")
        print(f"service_min: {stats.service_min!r}")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_oracle_check(args) -> int:
    model = _model_arg(args.model)
    ok = True
    total = 0
    for n in range(1, args.n_max + 1):
        for k in range(1, args.k_max + 1):
            rep = oracle_check(model, n, k, args.y_max)
            total += rep.instances
            if not rep.passed:
                ok = False
                print(f"n={n} k={k}: {rep.failures} mismatches, first {rep.mismatches[0]}")
    print(f"oracle-check: {'pass' if ok else 'FAIL'} ({total} instances)")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_sweep(args) -> int:
    d, base = _read_config(args.config)
    grid = dict(d.pop("grid", {}))
    base_cfg = d.pop("base", d)
    if isinstance(base_cfg, str):
        base_cfg, base = _read_config(base / base_cfg)
    for item in args.grid or []:
        if "=" not in item:
            raise ConfigError(f"--grid: expected key=v1,v2,..., got {item!r}")
        key, values = item.split("=", 1)
        grid[key] = [_parse_value(v) for v in values.split(",")]
    if not grid:
        raise ConfigError("grid: no sweep dimensions given")
    out = Path(args.out) if args.out else default_output_root() / base_cfg.get("name", "sweep")
    text, ok = sweep(base_cfg, grid, out, base_dir=base, workers=args.workers)
    sys.stdout.write(text)
    print(f"summary: {out / 'summary.csv'}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_gen_trace(args) -> int:
    spec = TraceSpec(args.kind, args.n, args.length, args.seed, _params(args.param))
    text = format_trace(generate_trace(spec))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _common_flags(p):
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--ell", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--C", type=float)
    p.add_argument("--out", help="output directory (default: $RESMOVE_OUT/<name> or results/<name>)")
    p.add_argument("--name")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="resmove", description="Online resource movement harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the greedy mover on a demand trace")
    p.add_argument("config", nargs="?", help="experiment config (JSON)")
    _common_flags(p)
    p.add_argument("--model", help="cost model JSON file or family name")
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--placement", help="initial placement as comma-separated counts")
    p.add_argument("--trace", help="trace file, one node id per line")
    p.add_argument("--generator", choices=KINDS)
    p.add_argument("--length", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--param", action="append", help="generator parameter key=value")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("adversary", help="play the adaptive adversary")
    p.add_argument("config", nargs="?")
    _common_flags(p)
    p.add_argument("--k", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--p-max", dest="p_max", type=int)
    p.add_argument("--algorithm", choices=("greedy", "oracle", "never"))
    p.set_defaults(func=cmd_adversary)

    p = sub.add_parser("verify-model", help="check the cost-model axioms exhaustively")
    p.add_argument("model")
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int, help="also report delta_max and S_min for a spread placement")
    p.add_argument("--x-max", dest="x_max", type=int)
    p.add_argument("--y-max", dest="y_max", type=int, help="default: min(64, model y_max)")
    p.set_defaults(func=cmd_verify_model)

    p = sub.add_parser("oracle-check", help="greedy optimum against enumeration")
    p.add_argument("model")
    p.add_argument("--n-max", dest="n_max", type=int, default=5)
    p.add_argument("--k-max", dest="k_max", type=int, default=4)
    p.add_argument("--y-max", dest="y_max", type=int, default=6)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("sweep", help="run a parameter grid")
    p.add_argument("config", help="base config, or {\"base\": ..., \"grid\": {...}}")
    p.add_argument("--grid", action="append", help="dotted.key=v1,v2,...")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-trace", help="write a seeded demand trace")
    p.add_argument("--kind", choices=KINDS, default="uniform")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--param", action="append")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_trace)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidArgumentError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GuardTrippedError as exc:
        print(f"verdict failure: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
