"""Workflow and task types, DAG checks, readiness and predicted schedules."""
from __future__ import annotations

import random
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from functools import cached_property

from .topologies import TASK_COUNTS, TOPOLOGIES

KINDS = tuple(TOPOLOGIES)

DEFAULT_CPU = 2000
DEFAULT_MEM = 4000
DEFAULT_MIN_CPU = 500
DEFAULT_MIN_MEM = 1000
DEFAULT_SLACK = 3.0
DURATION_RANGE = (10, 20)


class WorkflowError(ValueError):
    pass


class CycleDetected(WorkflowError):
    pass


class DanglingEdge(WorkflowError):
    pass


class MultipleEntryOrExit(WorkflowError):
    pass


class InvalidCompletedSet(WorkflowError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    id: str
    image: str
    cpu: int
    mem: int
    duration: int
    min_cpu: int
    min_mem: int
    deadline: float = 0.0

    def __post_init__(self):
        if not (self.cpu >= self.min_cpu > 0 and self.mem >= self.min_mem > 0):
            raise WorkflowError(f"task {self.id}: need cpu >= min_cpu > 0 and mem >= min_mem > 0")
        if self.duration <= 0:
            raise WorkflowError(f"task {self.id}: duration must be positive")


@dataclass(frozen=True)
class WorkflowSpec:
    id: str
    tasks: tuple[TaskSpec, ...]
    edges: frozenset[tuple[str, str]] = frozenset()
    deadline: float = 0.0
    inject_time: int = 0

    @cached_property
    def by_id(self) -> dict[str, TaskSpec]:
        return {t.id: t for t in self.tasks}

    @cached_property
    def preds(self) -> dict[str, tuple[str, ...]]:
        out = {t.id: [] for t in self.tasks}
        for p, s in sorted(self.edges):
            out.setdefault(s, []).append(p)
        return {k: tuple(v) for k, v in out.items()}

    @cached_property
    def succs(self) -> dict[str, tuple[str, ...]]:
        out = {t.id: [] for t in self.tasks}
        for p, s in sorted(self.edges):
            out.setdefault(p, []).append(s)
        return {k: tuple(v) for k, v in out.items()}

    @cached_property
    def order(self) -> tuple[str, ...]:
        """Topological order, ties broken by declaration order."""
        return tuple(_topo_order(self))

    @property
    def entry(self) -> str:
        return next(t.id for t in self.tasks if not self.preds[t.id])

    @property
    def exit(self) -> str:
        return next(t.id for t in self.tasks if not self.succs[t.id])


@dataclass(frozen=True)
class PredictedSchedule:
    start: Mapping[str, int] = field(default_factory=dict)
    end: Mapping[str, int] = field(default_factory=dict)

    def __getitem__(self, task_id: str) -> tuple[int, int]:
        return self.start[task_id], self.end[task_id]


def _topo_order(w: WorkflowSpec) -> list[str]:
    indeg = {t.id: 0 for t in w.tasks}
    for _, s in w.edges:
        indeg[s] += 1
    position = {t.id: i for i, t in enumerate(w.tasks)}
    ready = sorted((tid for tid, d in indeg.items() if d == 0), key=position.get)
    order = []
    while ready:
        tid = ready.pop(0)
        order.append(tid)
        for s in w.succs[tid]:
            indeg[s] -= 1
            if indeg[s] == 0:
                ready.append(s)
                ready.sort(key=position.get)
    if len(order) != len(w.tasks):
        raise CycleDetected(f"workflow {w.id} has a cycle")
    return order


def validate_dag(w: WorkflowSpec) -> None:
    """Raise if the edges dangle, form a cycle, or the DAG lacks a unique entry/exit."""
    ids = [t.id for t in w.tasks]
    if len(set(ids)) != len(ids):
        raise WorkflowError(f"workflow {w.id} has duplicate task ids")
    known = set(ids)
    for p, s in w.edges:
        if p not in known or s not in known:
            raise DanglingEdge(f"edge ({p}, {s}) references an unknown task")
    _topo_order(w)
    entries = [t for t in ids if not w.preds[t]]
    exits = [t for t in ids if not w.succs[t]]
    if len(entries) != 1 or len(exits) != 1:
        raise MultipleEntryOrExit(f"workflow {w.id}: {len(entries)} entries, {len(exits)} exits")


def ready_tasks(w: WorkflowSpec, completed: Iterable[str], running: Iterable[str] = ()) -> set[str]:
    completed = set(completed)
    running = set(running)
    for tid in completed:
        if tid not in w.by_id:
            raise InvalidCompletedSet(f"unknown task {tid}")
        if any(p not in completed for p in w.preds[tid]):
            raise InvalidCompletedSet(f"task {tid} completed before its predecessors")
    return {
        t.id
        for t in w.tasks
        if t.id not in completed and t.id not in running and all(p in completed for p in w.preds[t.id])
    }


def predicted_schedule(w: WorkflowSpec) -> PredictedSchedule:
    """Longest-path start/end times assuming every task launches as soon as it is ready."""
    validate_dag(w)
    start, end = {}, {}
    for tid in w.order:
        s = max((end[p] for p in w.preds[tid]), default=w.inject_time)
        start[tid] = s
        end[tid] = s + w.by_id[tid].duration
    return PredictedSchedule(start, end)


def make_workflow(
    workflow_id: str,
    tasks: Iterable[TaskSpec],
    edges: Iterable[tuple[str, str]],
    inject_time: int = 0,
    slack: float = DEFAULT_SLACK,
) -> WorkflowSpec:
    """Validate a DAG and stamp each task with a deadline.

    A task's deadline is ``inject_time + slack * (predicted_end - inject_time)``,
    so it is monotone along edges; the workflow deadline is the exit task's.
    """
    if slack < 1:
        raise WorkflowError("slack factor must be >= 1")
    draft = WorkflowSpec(workflow_id, tuple(tasks), frozenset(edges), inject_time=inject_time)
    sched = predicted_schedule(draft)
    stamped = tuple(
        TaskSpec(
            t.id, t.image, t.cpu, t.mem, t.duration, t.min_cpu, t.min_mem,
            deadline=inject_time + slack * (sched.end[t.id] - inject_time),
        )
        for t in draft.tasks
    )
    exit_deadline = next(t.deadline for t in stamped if t.id == draft.exit)
    return WorkflowSpec(workflow_id, stamped, draft.edges, deadline=exit_deadline, inject_time=inject_time)


def build_topology(
    kind: str,
    inject_time: int = 0,
    rng_seed: int = 0,
    *,
    workflow_id: str | None = None,
    cpu: int = DEFAULT_CPU,
    mem: int = DEFAULT_MEM,
    min_cpu: int = DEFAULT_MIN_CPU,
    min_mem: int = DEFAULT_MIN_MEM,
    slack: float = DEFAULT_SLACK,
) -> WorkflowSpec:
    kind = kind.lower()
    if kind not in TOPOLOGIES:
        raise WorkflowError(f"unknown workflow kind {kind!r}; expected one of {', '.join(KINDS)}")
    rng = random.Random(rng_seed)
    layout = TOPOLOGIES[kind]
    lo, hi = DURATION_RANGE
    tasks = [
        TaskSpec(f"t{i:02d}", image, cpu, mem, rng.randint(lo, hi), min_cpu, min_mem)
        for i, (image, _) in enumerate(layout)
    ]
    edges = [(f"t{p:02d}", f"t{i:02d}") for i, (_, deps) in enumerate(layout) for p in deps]
    w = make_workflow(workflow_id or kind, tasks, edges, inject_time, slack)
    assert len(w.tasks) == TASK_COUNTS[kind]
    return w


def workflow_from_document(doc: Mapping, inject_time: int = 0, rng_seed: int = 0, workflow_id: str | None = None) -> WorkflowSpec:
    """Build a workflow from a parsed ingestion document.

    The document names either a ``kind`` or an explicit ``tasks`` list with
    ``id, deps, cpu_m, mem_mi, min_cpu_m, min_mem_mi, duration_s``.
    """
    wid = workflow_id or str(doc.get("workflow_id", "workflow"))
    slack = float(doc.get("slack_factor", DEFAULT_SLACK))
    if "kind" in doc and "tasks" not in doc:
        return build_topology(doc["kind"], inject_time, rng_seed, workflow_id=wid, slack=slack)
    raw = doc.get("tasks")
    if not raw:
        raise WorkflowError("workflow document needs 'kind' or a non-empty 'tasks' list")
    tasks, edges = [], []
    for item in raw:
        try:
            tid = str(item["id"])
            cpu = int(item.get("cpu_m", DEFAULT_CPU))
            mem = int(item.get("mem_mi", DEFAULT_MEM))
            tasks.append(TaskSpec(
                tid,
                str(item.get("image", "stress")),
                cpu,
                mem,
                int(item["duration_s"]),
                int(item.get("min_cpu_m", min(cpu, DEFAULT_MIN_CPU))),
                int(item.get("min_mem_mi", min(mem, DEFAULT_MIN_MEM))),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise WorkflowError(f"bad task entry {item!r}: {exc}") from exc
        edges.extend((str(dep), tid) for dep in item.get("deps", []))
    return make_workflow(wid, tasks, edges, inject_time, slack)


def retime(w: WorkflowSpec, workflow_id: str, inject_time: int, slack: float = DEFAULT_SLACK) -> WorkflowSpec:
    """Copy of ``w`` under a new id and injection time, deadlines recomputed."""
    return make_workflow(workflow_id, w.tasks, w.edges, inject_time, slack)
