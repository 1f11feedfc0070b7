"""Deterministic discrete-event engine for workflow execution on a simulated cluster.

Each distinct timestamp is one control-loop turn: apply every event due at
that time (monitoring), refresh the knowledge base's predicted start times,
run the allocation policy over the pending request queue (analysis and
planning), and launch the resulting pods (execution).
"""
from __future__ import annotations

import heapq
import itertools
import json
import random
from dataclasses import dataclass, field

from .allocator import (
    DEFAULT_ALPHA,
    DEFAULT_BETA,
    DEFAULT_MAX_ROUNDS,
    AllocationDecision,
    ClusterUnavailable,
    RetryPolicy,
    allocate_adaptive,
    allocate_baseline,
)
from .cluster import Cluster, PodPhase, PodRecord, ResourceQuantity, default_nodes, place_pod, totals_and_max
from .knowledge import KnowledgeBase, TaskStateRecord
from .metrics import MetricsSeries
from .workflow import (
    DEFAULT_CPU,
    DEFAULT_MEM,
    DEFAULT_MIN_CPU,
    DEFAULT_MIN_MEM,
    DEFAULT_SLACK,
    WorkflowSpec,
    validate_dag,
)
from .workload import ArrivalPattern, WorkflowFactory, generate_arrivals, inject, topology_factory

POLICIES = ("aras", "baseline")

WORKFLOW_ARRIVAL = "WorkflowArrival"
TASK_READY = "TaskReady"
POD_STARTED = "PodStarted"
POD_COMPLETED = "PodCompleted"
POD_OOM_KILLED = "PodOOMKilled"
POD_DELETED = "PodDeleted"
RESOURCE_RELEASED = "ResourceReleased"
ALLOCATION_RETRY = "AllocationRetry"
WORKFLOW_FINISHED = "WorkflowFinished"

# same-time ordering of queued events: free resources before anything asks for them
_PRIORITY = {
    POD_COMPLETED: 0,
    POD_OOM_KILLED: 0,
    POD_DELETED: 1,
    WORKFLOW_ARRIVAL: 2,
    ALLOCATION_RETRY: 3,
}

LOG_FIELDS = ("time", "kind", "workflow", "task", "pod", "node", "cpu_m", "mem_mi", "phase")


class SimulationError(Exception):
    pass


class Deadlock(SimulationError):
    def __init__(self, time: int, waiting: list[str]):
        self.time = time
        self.waiting = waiting
        super().__init__(f"deadlock at t={time}s: {len(waiting)} request(s) can never be placed, head: {waiting[:3]}")


class Livelock(SimulationError):
    """Pods keep being OOM-killed and regenerated while nothing completes."""

    def __init__(self, time: int, kills: int, waiting: int):
        self.time = time
        self.kills = kills
        super().__init__(
            f"no progress at t={time}s: {kills} consecutive OOM kills without a completion, {waiting} request(s) waiting"
        )


@dataclass(frozen=True)
class SimEvent:
    time: int
    kind: str
    workflow: str | None = None
    task: str | None = None
    pod: str | None = None
    node: str | None = None
    cpu_m: int | None = None
    mem_mi: int | None = None
    phase: str | None = None

    def to_json(self) -> str:
        return json.dumps({f: getattr(self, f) for f in LOG_FIELDS}, separators=(",", ":"))


@dataclass(frozen=True)
class TaskRuntimeModel:
    true_peak_mem: int
    duration: int

    def __post_init__(self):
        if self.true_peak_mem <= 0:
            raise ValueError("true_peak_mem must be positive")


@dataclass
class EngineConfig:
    policy: str = "aras"
    workflow: str = "montage"
    pattern: ArrivalPattern = field(default_factory=ArrivalPattern)
    seed: int = 0
    nodes: int = 6
    node_cpu_m: int = 8000
    node_mem_mi: int = 16384
    alpha: float = DEFAULT_ALPHA
    beta: int = DEFAULT_BETA
    max_rounds: int = DEFAULT_MAX_ROUNDS
    task_cpu_m: int = DEFAULT_CPU
    task_mem_mi: int = DEFAULT_MEM
    min_cpu_m: int = DEFAULT_MIN_CPU
    min_mem_mi: int = DEFAULT_MIN_MEM
    slack: float = DEFAULT_SLACK
    # memory the task really touches; None means its declared min_mem
    true_peak_mem_mi: int | None = None
    cleanup_delay_s: int = 0
    reallocation_delay_s: int = 0
    sample_step_s: int = 1
    check_invariants: bool = True
    # consecutive OOM kills with no completion before the run is declared stuck
    stall_limit: int = 5000

    def validate(self) -> None:
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}")
        if self.nodes <= 0 or self.node_cpu_m <= 0 or self.node_mem_mi <= 0:
            raise ValueError("cluster needs at least one node with positive capacity")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.beta < 20:
            raise ValueError("beta must be >= 20")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.cleanup_delay_s < 0 or self.reallocation_delay_s < 0:
            raise ValueError("delays must be non-negative")
        if self.sample_step_s <= 0:
            raise ValueError("sample step must be positive")
        if self.stall_limit < 1:
            raise ValueError("stall_limit must be >= 1")
        if self.true_peak_mem_mi is not None and self.true_peak_mem_mi <= 0:
            raise ValueError("true_peak_mem_mi must be positive")

    def factory(self) -> WorkflowFactory:
        return topology_factory(
            self.workflow,
            cpu=self.task_cpu_m,
            mem=self.task_mem_mi,
            min_cpu=self.min_cpu_m,
            min_mem=self.min_mem_mi,
            slack=self.slack,
        )


@dataclass(frozen=True)
class AllocationRecord:
    time: int
    workflow: str
    task: str
    pod: str
    allocated: ResourceQuantity
    total_residual: ResourceQuantity
    case_taken: str
    viable: bool


@dataclass
class RunResult:
    config: EngineConfig
    events: list[SimEvent]
    series: MetricsSeries
    allocations: list[AllocationRecord]
    workflows: dict[str, WorkflowSpec]
    capacity: ResourceQuantity

    def log_lines(self) -> list[str]:
        return [e.to_json() for e in self.events]


@dataclass
class _Request:
    workflow: str
    task: str
    attempt: int
    rounds: int = 0
    evaluated: bool = False


def on_pod_started(now: int, alloc: ResourceQuantity, runtime: TaskRuntimeModel, beta: int, rng: random.Random) -> tuple[str, int]:
    """Outcome of a launched pod: OOM kill if memory is short, otherwise completion.

    CPU is compressible, so a CPU shortfall neither kills the pod nor stretches it.
    """
    if alloc.mem < runtime.true_peak_mem + beta:
        delay = rng.randint(1, runtime.duration - 1) if runtime.duration > 1 else 1
        return POD_OOM_KILLED, now + delay
    return POD_COMPLETED, now + runtime.duration


class Simulation:
    def __init__(self, config: EngineConfig):
        config.validate()
        self.config = config
        self.cluster = Cluster(default_nodes(config.nodes, config.node_cpu_m, config.node_mem_mi))
        self.kb = KnowledgeBase()
        self.retry = RetryPolicy(config.max_rounds)
        self.events: list[SimEvent] = []
        self.allocations: list[AllocationRecord] = []
        self.workflows: dict[str, WorkflowSpec] = {}
        self._rng = random.Random(f"{config.seed}/oom")
        self._heap: list = []
        self._seq = itertools.count()
        self._pending: list[_Request] = []
        self._staged: list[_Request] = []
        self._attempts: dict[tuple[str, str], int] = {}
        self._running: dict[tuple[str, str], PodRecord] = {}
        self._completed: dict[str, set[str]] = {}
        self._active: set[str] = set()
        self._released = False
        self._usage: list[tuple[int, int, int]] = []
        self._kills_since_completion = 0

    def submit(self, w: WorkflowSpec) -> None:
        validate_dag(w)
        if w.id in self.workflows:
            raise SimulationError(f"duplicate workflow id {w.id}")
        self.workflows[w.id] = w
        self._push(w.inject_time, WORKFLOW_ARRIVAL, w.id)

    def _push(self, time: int, kind: str, payload) -> None:
        heapq.heappush(self._heap, (time, _PRIORITY[kind], next(self._seq), kind, payload))

    def _log(self, time: int, kind: str, **fields) -> None:
        self.events.append(SimEvent(time, kind, **fields))

    # -- event handlers ---------------------------------------------------

    def _on_arrival(self, now: int, wid: str) -> None:
        w = self.workflows[wid]
        self.kb.register_workflow(w)
        self._completed[wid] = set()
        self._active.add(wid)
        self._log(now, WORKFLOW_ARRIVAL, workflow=wid)
        self._make_ready(now, wid, [w.entry])

    def _make_ready(self, now: int, wid: str, task_ids) -> None:
        for tid in task_ids:
            self._log(now, TASK_READY, workflow=wid, task=tid)
            self._staged.append(_Request(wid, tid, self._attempts.get((wid, tid), 0)))

    def _finish_pod(self, now: int, pod: PodRecord, phase: PodPhase, kind: str) -> None:
        pod.move_to(phase)
        pod.end_time = now
        self.cluster.release(pod)
        del self._running[(pod.workflow_id, pod.task_id)]
        self._released = True
        self._log(now, kind, workflow=pod.workflow_id, task=pod.task_id, pod=pod.id, node=pod.node_id,
                  cpu_m=pod.request.cpu, mem_mi=pod.request.mem, phase=phase.value)
        self._log(now, RESOURCE_RELEASED, workflow=pod.workflow_id, task=pod.task_id, pod=pod.id, node=pod.node_id,
                  cpu_m=pod.request.cpu, mem_mi=pod.request.mem, phase=phase.value)
        self._push(now + self.config.cleanup_delay_s, POD_DELETED, pod.id)

    def _on_completed(self, now: int, pod_id: str) -> None:
        pod = self.cluster.pods[pod_id]
        wid, tid = pod.workflow_id, pod.task_id
        self._finish_pod(now, pod, PodPhase.SUCCEEDED, POD_COMPLETED)
        self._kills_since_completion = 0
        self.kb.mark_complete((wid, tid), now)
        done = self._completed[wid]
        done.add(tid)
        w = self.workflows[wid]
        newly = [s for s in w.succs[tid] if all(p in done for p in w.preds[s])]
        self._make_ready(now, wid, newly)
        if self.kb.workflows[wid].finished_at is not None:
            self._active.discard(wid)
            self._log(now, WORKFLOW_FINISHED, workflow=wid)

    def _on_oom(self, now: int, pod_id: str) -> None:
        pod = self.cluster.pods[pod_id]
        self._finish_pod(now, pod, PodPhase.OOM_KILLED, POD_OOM_KILLED)
        self._kills_since_completion += 1
        if self._kills_since_completion >= self.config.stall_limit:
            raise Livelock(now, self._kills_since_completion, len(self._pending) + len(self._staged))
        key = (pod.workflow_id, pod.task_id)
        self._attempts[key] = self._attempts.get(key, 0) + 1
        self._push(now + self.config.reallocation_delay_s, ALLOCATION_RETRY, key)

    def _on_retry(self, now: int, key: tuple[str, str]) -> None:
        wid, tid = key
        self._log(now, ALLOCATION_RETRY, workflow=wid, task=tid)
        self._staged.append(_Request(wid, tid, self._attempts[key]))

    def _on_deleted(self, now: int, pod_id: str) -> None:
        pod = self.cluster.pods[pod_id]
        pod.move_to(PodPhase.DELETED)
        self._log(now, POD_DELETED, workflow=pod.workflow_id, task=pod.task_id, pod=pod.id, node=pod.node_id,
                  phase=PodPhase.DELETED.value)

    # -- knowledge refresh --------------------------------------------------

    def _refresh_predictions(self, now: int) -> None:
        """Push not-yet-started tasks' predicted starts forward to what is still feasible."""
        for wid in sorted(self._active):
            w = self.workflows[wid]
            done = self._completed[wid]
            end: dict[str, int] = {}
            for tid in w.order:
                rec = self.kb.get((wid, tid))
                if tid in done or (wid, tid) in self._running:
                    end[tid] = rec.t_end
                    continue
                start = max([now] + [end[p] for p in w.preds[tid]])
                self.kb.reschedule((wid, tid), start)
                end[tid] = start + rec.duration

    # -- allocation ---------------------------------------------------------

    def _allocate(self, now: int) -> None:
        if self._staged:
            self._staged.sort(key=lambda r: (r.workflow, r.task))
            self._pending.extend(self._staged)
            self._staged = []
        if not self._pending:
            return
        residual = self.cluster.residual()
        adaptive = self.config.policy == "aras"
        keep = []
        blocked = False
        for req in self._pending:
            if blocked:
                keep.append(req)
                continue
            task = self.workflows[req.workflow].by_id[req.task]
            if adaptive:
                if req.evaluated and not self._released:
                    keep.append(req)
                    continue
                decision, total = self._adaptive_round(req, task, residual, now)
                if decision is None or not self.retry.proceed(decision, req.rounds):
                    keep.append(req)
                    continue
            else:
                decision = allocate_baseline(task, residual)
                if decision is None:
                    blocked = True
                    keep.append(req)
                    continue
                total = totals_and_max(residual)[0]
            alloc = decision.allocated
            node = place_pod(residual, alloc) if alloc.cpu > 0 and alloc.mem > 0 else None
            if node is None:
                if not adaptive:
                    blocked = True
                keep.append(req)
                continue
            self._launch(now, req, task, node, decision, total)
            residual[node] = residual[node] - alloc
        self._pending = keep

    def _adaptive_round(self, req: _Request, task, residual, now: int):
        req.evaluated = True
        key = (req.workflow, req.task)
        try:
            decision, ctx = allocate_adaptive(
                task, (now, now + task.duration), residual, self.kb,
                alpha=self.config.alpha, beta=self.config.beta, exclude=key,
            )
        except ClusterUnavailable:
            req.rounds += 1
            return None, None
        if not decision.viable:
            req.rounds += 1
        return decision, ctx.total_residual

    def _launch(self, now: int, req: _Request, task, node: str, decision: AllocationDecision, total: ResourceQuantity) -> None:
        pod = PodRecord(f"{req.workflow}.{req.task}.{req.attempt}", req.workflow, req.task, decision.allocated)
        self.cluster.add_pod(pod)
        self.cluster.bind(pod, node)
        pod.move_to(PodPhase.RUNNING)
        pod.start_time = now
        key = (req.workflow, req.task)
        self._running[key] = pod
        rec = self.kb.get(key)
        self.kb.put_record(TaskStateRecord(req.workflow, req.task, now, task.duration, now + task.duration,
                                           rec.cpu, rec.mem))
        self.allocations.append(AllocationRecord(now, req.workflow, req.task, pod.id, decision.allocated, total,
                                                 decision.case_taken, decision.viable))
        self._log(now, POD_STARTED, workflow=req.workflow, task=req.task, pod=pod.id, node=node,
                  cpu_m=decision.allocated.cpu, mem_mi=decision.allocated.mem, phase=PodPhase.RUNNING.value)
        peak = self.config.true_peak_mem_mi or task.min_mem
        kind, when = on_pod_started(now, decision.allocated, TaskRuntimeModel(peak, task.duration),
                                    self.config.beta, self._rng)
        self._push(when, kind, pod.id)

    # -- main loop ----------------------------------------------------------

    _HANDLERS = {
        WORKFLOW_ARRIVAL: _on_arrival,
        POD_COMPLETED: _on_completed,
        POD_OOM_KILLED: _on_oom,
        ALLOCATION_RETRY: _on_retry,
        POD_DELETED: _on_deleted,
    }

    def run(self) -> RunResult:
        now = None
        while self._heap or self._pending or self._staged:
            if not self._heap:
                self._unstick(now)
                continue
            now = self._heap[0][0]
            self._released = False
            while self._heap and self._heap[0][0] == now:
                _, _, _, kind, payload = heapq.heappop(self._heap)
                self._HANDLERS[kind](self, now, payload)
            self._refresh_predictions(now)
            self._allocate(now)
            self._record_usage(now)
            if self.config.check_invariants:
                self.cluster.check_conservation()
        return RunResult(self.config, self.events, self._series(), self.allocations, self.workflows,
                         self.cluster.capacity)

    def _unstick(self, now: int) -> None:
        """Nothing is running and no event is due, yet requests wait.

        No release will ever happen, so an adaptive request would see the same
        residual forever: jump it to its last round. A baseline head that does
        not fit an idle cluster never will.
        """
        before = len(self._pending) + len(self._staged)
        if self.config.policy == "aras":
            for req in self._pending:
                req.rounds = max(req.rounds, self.config.max_rounds - 1)
                req.evaluated = False
        self._released = True
        self._allocate(now)
        self._record_usage(now)
        if self._heap or len(self._pending) < before:
            return
        raise Deadlock(now, [f"{r.workflow}/{r.task}" for r in self._pending])

    def _record_usage(self, now: int) -> None:
        used = self.cluster.used()
        if self._usage and self._usage[-1][0] == now:
            self._usage[-1] = (now, used.cpu, used.mem)
        elif not self._usage or self._usage[-1][1:] != (used.cpu, used.mem):
            self._usage.append((now, used.cpu, used.mem))

    def _series(self) -> MetricsSeries:
        cap = self.cluster.capacity
        if not self.workflows:
            return MetricsSeries([], self.config.sample_step_s, cap.cpu, cap.mem)
        t0 = min(w.inject_time for w in self.workflows.values())
        t1 = max(s.finished_at for s in self.kb.workflows.values())
        return MetricsSeries.from_changes(self._usage, t0, t1, self.config.sample_step_s, cap.cpu, cap.mem)


def run(config: EngineConfig, workflows: list[WorkflowSpec] | None = None) -> RunResult:
    """Run one simulation; without explicit workflows, generate them from the config's pattern."""
    sim = Simulation(config)
    if workflows is None:
        inject(generate_arrivals(config.pattern), config.factory(), sim, config.seed)
    else:
        for w in workflows:
            sim.submit(w)
    return sim.run()
