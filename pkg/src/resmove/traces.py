"""Demand traces: newline-delimited node ids on disk, seeded generators in memory."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import InvalidArgumentError

KINDS = ("uniform", "zipf", "hotspot-shift")


class TraceError(InvalidArgumentError):
    pass


def parse_trace(text: str, source: str = "<trace>") -> list[int]:
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s:
            continue
        if not s.isdigit():
            raise TraceError(f"{source}:{lineno}: expected a non-negative node id, got {s!r}")
        out.append(int(s))
    return out


def validate_trace(trace: Sequence[int], n: int | None = None, y_max: int | None = None,
                   source: str = "<trace>") -> None:
    if n is not None:
        for i, v in enumerate(trace):
            if not 0 <= v < n:
                raise TraceError(f"{source}:{i + 1}: node {v} out of range [0, {n})")
    if y_max is not None and len(trace) > y_max:
        raise TraceError(f"{source}: trace length {len(trace)} exceeds y_max={y_max}")


def load_trace(path, n: int | None = None, y_max: int | None = None) -> list[int]:
    trace = parse_trace(Path(path).read_text(), str(path))
    validate_trace(trace, n, y_max, str(path))
    return trace


def format_trace(trace: Sequence[int]) -> str:
    return "".join(f"{v}\n" for v in trace)


def write_trace(path, trace: Sequence[int]) -> None:
    Path(path).write_text(format_trace(trace))


@dataclass(frozen=True)
class TraceSpec:
    kind: str
    n: int
    length: int
    seed: int
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict, n: int | None = None) -> "TraceSpec":
        if "seed" not in d:
            raise TraceError("generator.seed: a seed is required for generated traces")
        return cls(d.get("kind", "uniform"), int(d.get("n", n if n is not None else 0)),
                   int(d["length"]), int(d["seed"]), dict(d.get("params") or {}))


def zipf_weights(n: int, s: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** s
    return w / w.sum()


def generate_trace(spec: TraceSpec | dict, y_max: int | None = None) -> list[int]:
    """Seeded demand sequence; node 0 is the most popular node for zipf."""
    if isinstance(spec, dict):
        spec = TraceSpec.from_dict(spec)
    if spec.kind not in KINDS:
        raise TraceError(f"generator.kind: unknown trace kind {spec.kind!r}, expected one of {KINDS}")
    if spec.n < 1:
        raise TraceError(f"generator.n: need at least one node, got {spec.n}")
    if spec.length < 0:
        raise TraceError(f"generator.length: must be non-negative, got {spec.length}")
    if y_max is not None and spec.length > y_max:
        raise TraceError(f"generator.length: {spec.length} exceeds y_max={y_max}")
    rng = np.random.default_rng(spec.seed)
    if spec.length == 0:
        return []
    if spec.kind == "uniform":
        nodes = rng.integers(0, spec.n, size=spec.length)
    elif spec.kind == "zipf":
        s = float(spec.params.get("s", 1.0))
        if not s > 0:
            raise TraceError(f"generator.params.s: zipf exponent must be > 0, got {s}")
        nodes = rng.choice(spec.n, size=spec.length, p=zipf_weights(spec.n, s))
    else:
        period = int(spec.params.get("period", 100))
        hot = float(spec.params.get("hot_prob", 0.8))
        if period < 1:
            raise TraceError(f"generator.params.period: must be >= 1, got {period}")
        if not 0 <= hot <= 1:
            raise TraceError(f"generator.params.hot_prob: must lie in [0, 1], got {hot}")
        favoured = (np.arange(spec.length) // period) % spec.n
        background = rng.integers(0, spec.n, size=spec.length)
        nodes = np.where(rng.random(spec.length) < hot, favoured, background)
    return [int(v) for v in nodes]
