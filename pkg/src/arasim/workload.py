"""Burst arrival patterns for workflow requests."""
from __future__ import annotations

import itertools
import random
from collections.abc import Callable, Iterator
from dataclasses import dataclass

from .workflow import WorkflowSpec, build_topology

PATTERNS = ("constant", "linear", "pyramid")
DEFAULT_TOTALS = {"constant": 30, "linear": 30, "pyramid": 34}


class UnreachableTotal(ValueError):
    pass


@dataclass(frozen=True)
class ArrivalPattern:
    kind: str = "constant"
    interval: int = 300
    total: int | None = None
    # constant
    y: int = 5
    # linear: y = k * x + d
    k: int = 2
    d: int = 2
    # pyramid
    start: int = 2
    step: int = 2
    peak: int = 6

    def __post_init__(self):
        if self.kind not in PATTERNS:
            raise ValueError(f"unknown arrival pattern {self.kind!r}")
        if self.interval <= 0:
            raise ValueError("interval must be positive")

    @property
    def target(self) -> int:
        return DEFAULT_TOTALS[self.kind] if self.total is None else self.total


def _sizes(p: ArrivalPattern) -> Iterator[int]:
    if p.kind == "constant":
        if p.y <= 0:
            raise ValueError("constant burst size must be positive")
        yield from itertools.repeat(p.y)
    elif p.kind == "linear":
        if p.d <= 0 or p.k < 0:
            raise ValueError("linear pattern needs d > 0 and k >= 0")
        for x in itertools.count():
            yield p.k * x + p.d
    else:
        if not (0 < p.start <= p.peak) or p.step <= 0:
            raise ValueError("pyramid pattern needs 0 < start <= peak and step > 0")
        up = list(range(p.start, p.peak + 1, p.step))
        if up[-1] != p.peak:
            up.append(p.peak)
        sweep = up + up[-2::-1]
        yield from itertools.cycle(sweep)


def generate_arrivals(p: ArrivalPattern) -> list[tuple[int, int]]:
    """``(time, burst size)`` pairs whose sizes add up exactly to the pattern total."""
    target = p.target
    if target <= 0:
        raise UnreachableTotal("total must be positive")
    out, acc = [], 0
    for i, size in enumerate(_sizes(p)):
        out.append((i * p.interval, size))
        acc += size
        if acc == target:
            return out
        if acc > target:
            raise UnreachableTotal(f"no prefix of the {p.kind} pattern sums to {target} (passes {acc})")
    raise AssertionError("unreachable")


WorkflowFactory = Callable[[str, int, int], WorkflowSpec]


def topology_factory(kind: str, **task_overrides) -> WorkflowFactory:
    def make(workflow_id: str, inject_time: int, seed: int) -> WorkflowSpec:
        return build_topology(kind, inject_time, seed, workflow_id=workflow_id, **task_overrides)
    return make


def inject(arrivals: list[tuple[int, int]], factory: WorkflowFactory | str, engine, seed: int = 0) -> list[WorkflowSpec]:
    """Create one workflow per request and hand it to ``engine.submit``.

    Per-workflow seeds come from a generator seeded with ``seed``, so reruns
    reproduce durations while different workflows get different ones.
    """
    if isinstance(factory, str):
        factory = topology_factory(factory)
    seeds = random.Random(seed)
    total = sum(size for _, size in arrivals)
    width = max(3, len(str(total)))
    made = []
    n = 0
    for time, size in arrivals:
        for _ in range(size):
            w = factory(f"wf-{n:0{width}d}", time, seeds.getrandbits(32))
            engine.submit(w)
            made.append(w)
            n += 1
    return made
