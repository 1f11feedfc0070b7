"""In-process task-state store with half-open interval lookups on start time."""
from __future__ import annotations

import bisect
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .cluster import ResourceQuantity
from .workflow import WorkflowSpec, predicted_schedule

Key = tuple[str, str]


class KnowledgeError(Exception):
    pass


class CompletedRecordMutation(KnowledgeError):
    pass


class EmptyInterval(KnowledgeError, ValueError):
    pass


class UnknownKey(KnowledgeError, KeyError):
    pass


class AlreadyComplete(KnowledgeError):
    pass


@dataclass(frozen=True)
class TaskStateRecord:
    workflow_id: str
    task_id: str
    t_start: int
    duration: int
    t_end: int
    cpu: int
    mem: int
    flag: bool = False

    @property
    def key(self) -> Key:
        return (self.workflow_id, self.task_id)


@dataclass
class WorkflowStatus:
    workflow_id: str
    injected_at: int
    task_count: int
    completed: int = 0
    finished_at: int | None = None


class KnowledgeBase:
    """Task records keyed by ``(workflow id, task id)``.

    Incomplete records are indexed by ``t_start`` with prefix sums, so both
    the record query and the resource sum over a window are logarithmic
    apart from the size of the answer.
    """

    def __init__(self, snapshot_path: str | Path | None = None):
        self._records: dict[Key, TaskStateRecord] = {}
        self.workflows: dict[str, WorkflowStatus] = {}
        self._dirty = True
        self._starts: list[int] = []
        self._keys: list[Key] = []
        self._cum_cpu: list[int] = [0]
        self._cum_mem: list[int] = [0]
        self._snapshot = open(snapshot_path, "w") if snapshot_path else None

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, key: Key) -> bool:
        return key in self._records

    def get(self, key: Key) -> TaskStateRecord:
        try:
            return self._records[key]
        except KeyError:
            raise UnknownKey(key) from None

    def records(self) -> list[TaskStateRecord]:
        return [self._records[k] for k in sorted(self._records)]

    def register_workflow(self, w: WorkflowSpec) -> None:
        if w.id in self.workflows:
            raise KnowledgeError(f"workflow {w.id} already registered")
        sched = predicted_schedule(w)
        self.workflows[w.id] = WorkflowStatus(w.id, w.inject_time, len(w.tasks))
        for t in w.tasks:
            start, end = sched[t.id]
            self.put_record(TaskStateRecord(w.id, t.id, start, t.duration, end, t.cpu, t.mem))

    def put_record(self, record: TaskStateRecord) -> None:
        old = self._records.get(record.key)
        if old is not None and old.flag:
            raise CompletedRecordMutation(f"record {record.key} is already complete")
        if old == record:
            return
        self._records[record.key] = record
        self._dirty = True
        self._log(record)

    def reschedule(self, key: Key, t_start: int) -> None:
        rec = self.get(key)
        if rec.t_start != t_start:
            self.put_record(replace(rec, t_start=t_start, t_end=t_start + rec.duration))

    def mark_complete(self, key: Key, t_end: int) -> None:
        rec = self.get(key)
        if rec.flag:
            raise AlreadyComplete(f"record {key} already complete")
        done = replace(rec, t_end=t_end, flag=True)
        self._records[key] = done
        self._dirty = True
        self._log(done)
        status = self.workflows.get(rec.workflow_id)
        if status is not None:
            status.completed += 1
            if status.completed == status.task_count:
                status.finished_at = t_end

    def _reindex(self) -> None:
        pending = sorted((r.t_start, r.key, r) for r in self._records.values() if not r.flag)
        self._starts = [s for s, _, _ in pending]
        self._keys = [k for _, k, _ in pending]
        self._cum_cpu = [0]
        self._cum_mem = [0]
        for _, _, r in pending:
            self._cum_cpu.append(self._cum_cpu[-1] + r.cpu)
            self._cum_mem.append(self._cum_mem[-1] + r.mem)
        self._dirty = False

    def _window(self, start: int, end: int) -> tuple[int, int]:
        if start >= end:
            raise EmptyInterval(f"empty interval [{start}, {end})")
        if self._dirty:
            self._reindex()
        return bisect.bisect_left(self._starts, start), bisect.bisect_left(self._starts, end)

    def query_overlapping(self, start: int, end: int) -> list[TaskStateRecord]:
        """Incomplete records whose ``t_start`` lies in ``[start, end)``, ordered by key."""
        lo, hi = self._window(start, end)
        return [self._records[k] for k in sorted(self._keys[lo:hi])]

    def demand_in_window(self, start: int, end: int, exclude: Key | None = None) -> ResourceQuantity:
        """Summed cpu/mem of the records :meth:`query_overlapping` would return."""
        lo, hi = self._window(start, end)
        cpu = self._cum_cpu[hi] - self._cum_cpu[lo]
        mem = self._cum_mem[hi] - self._cum_mem[lo]
        if exclude is not None:
            rec = self._records.get(exclude)
            if rec is not None and not rec.flag and start <= rec.t_start < end:
                cpu -= rec.cpu
                mem -= rec.mem
        return ResourceQuantity(cpu, mem)

    def _log(self, record: TaskStateRecord) -> None:
        if self._snapshot is not None:
            row = asdict(record)
            fields = ["workflow_id", "task_id", "t_start", "duration", "t_end", "cpu", "mem", "flag"]
            self._snapshot.write(json.dumps({f: row[f] for f in fields}) + "\n")

    def close(self) -> None:
        if self._snapshot is not None:
            self._snapshot.close()
            self._snapshot = None
