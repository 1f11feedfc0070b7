"""Run metrics, utilization series and output files."""
from __future__ import annotations

import csv
import json
from collections.abc import Iterable
from dataclasses import asdict, dataclass, field
from pathlib import Path

SERIES_HEADER = ("t", "cpu_used_m", "mem_used_mi", "cpu_cap_m", "mem_cap_mi")
PLOT_HEADER = ("t", "workflow_requests", "cpu_usage", "mem_usage")


class MetricsError(Exception):
    pass


class IncompleteRun(MetricsError):
    pass


class EmptySeries(MetricsError):
    pass


class IoError(MetricsError, OSError):
    pass


@dataclass(frozen=True)
class Sample:
    t: int
    cpu_used_m: int
    mem_used_mi: int


@dataclass
class MetricsSeries:
    """Occupancy sampled every ``step`` seconds; each value holds until the next sample."""

    samples: list[Sample]
    step: int
    cpu_capacity_m: int
    mem_capacity_mi: int

    @classmethod
    def from_changes(cls, changes: Iterable[tuple[int, int, int]], t0: int, t1: int, step: int,
                     cpu_cap: int, mem_cap: int) -> MetricsSeries:
        changes = sorted(changes)
        samples = []
        i, cur = 0, (0, 0)
        for t in range(t0, t1 + 1, step):
            while i < len(changes) and changes[i][0] <= t:
                cur = changes[i][1:]
                i += 1
            samples.append(Sample(t, *cur))
        return cls(samples, step, cpu_cap, mem_cap)

    def rows(self) -> list[tuple[int, int, int, int, int]]:
        return [(s.t, s.cpu_used_m, s.mem_used_mi, self.cpu_capacity_m, self.mem_capacity_mi) for s in self.samples]


def resource_usage(series: MetricsSeries) -> tuple[float, float]:
    """Time-weighted mean of used/capacity for CPU and memory.

    The last sample closes the window and carries no weight.
    """
    if not series.samples:
        raise EmptySeries("no samples")
    if len(series.samples) == 1:
        s = series.samples[0]
        return s.cpu_used_m / series.cpu_capacity_m, s.mem_used_mi / series.mem_capacity_mi
    span = series.samples[-1].t - series.samples[0].t
    cpu = mem = 0
    for a, b in zip(series.samples, series.samples[1:]):
        width = b.t - a.t
        cpu += a.cpu_used_m * width
        mem += a.mem_used_mi * width
    return cpu / (span * series.cpu_capacity_m), mem / (span * series.mem_capacity_mi)


def _workflow_times(log) -> dict[str, dict[str, int | None]]:
    out: dict[str, dict[str, int | None]] = {}
    for e in log:
        if e.workflow is None:
            continue
        if e.kind == "WorkflowArrival":
            out[e.workflow] = {"arrival": e.time, "first_start": None, "finish": None}
        elif e.kind == "PodStarted" and out[e.workflow]["first_start"] is None:
            out[e.workflow]["first_start"] = e.time
        elif e.kind == "WorkflowFinished":
            out[e.workflow]["finish"] = e.time
    if not out:
        raise IncompleteRun("log contains no workflows")
    unfinished = [w for w, t in out.items() if t["finish"] is None]
    if unfinished:
        raise IncompleteRun(f"{len(unfinished)} workflow(s) never finished, e.g. {unfinished[0]}")
    return out


def total_duration(log) -> float:
    """Minutes from the first workflow arrival to the last workflow finish."""
    times = _workflow_times(log)
    return (max(t["finish"] for t in times.values()) - min(t["arrival"] for t in times.values())) / 60


def workflow_durations(log) -> dict[str, float]:
    """Per workflow, minutes from its first task start to its last task end."""
    return {w: (t["finish"] - t["first_start"]) / 60 for w, t in sorted(_workflow_times(log).items())}


def avg_workflow_duration(log) -> float:
    durations = workflow_durations(log)
    return sum(durations.values()) / len(durations)


@dataclass
class RunSummary:
    policy: str
    pattern: str
    workflow: str
    seed: int
    total_duration_min: float
    avg_workflow_duration_min: float
    cpu_usage_mean: float
    mem_usage_mean: float
    objective_capacity: float
    objective_residual: float
    oom_count: int
    workflow_count: int
    per_workflow_duration_min: dict[str, float] = field(default_factory=dict)

    def headline(self) -> dict:
        d = asdict(self)
        d.pop("per_workflow_duration_min")
        return d


def summarize(result) -> RunSummary:
    """Collapse a finished run into the headline metrics.

    The memory objective is reported twice, once normalized by cluster
    memory capacity and once summing each pod's share of the residual memory
    seen when it was allocated.
    """
    cfg = result.config
    cpu_mean, mem_mean = resource_usage(result.series)
    successful = {e.pod for e in result.events if e.kind == "PodCompleted"}
    capacity_obj = sum(a.allocated.mem for a in result.allocations if a.pod in successful) / result.capacity.mem
    residual_obj = sum(
        a.allocated.mem / a.total_residual.mem for a in result.allocations if a.total_residual.mem > 0
    )
    return RunSummary(
        policy=cfg.policy,
        pattern=cfg.pattern.kind,
        workflow=cfg.workflow,
        seed=cfg.seed,
        total_duration_min=total_duration(result.events),
        avg_workflow_duration_min=avg_workflow_duration(result.events),
        cpu_usage_mean=cpu_mean,
        mem_usage_mean=mem_mean,
        objective_capacity=capacity_obj,
        objective_residual=residual_obj,
        oom_count=sum(1 for e in result.events if e.kind == "PodOOMKilled"),
        workflow_count=len(result.workflows),
        per_workflow_duration_min=workflow_durations(result.events),
    )


def emit(summary: RunSummary, series: MetricsSeries, log, out_dir: str | Path) -> dict[str, Path]:
    """Write summary.json, series.csv, events.jsonl and plot_data.csv into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "summary": out / "summary.json",
            "series": out / "series.csv",
            "events": out / "events.jsonl",
            "plot_data": out / "plot_data.csv",
        }
        paths["summary"].write_text(json.dumps(asdict(summary), indent=2) + "\n")
        with paths["series"].open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SERIES_HEADER)
            w.writerows(series.rows())
        with paths["events"].open("w") as fh:
            for e in log:
                fh.write(e.to_json() + "\n")
        arrivals: dict[int, int] = {}
        for e in log:
            if e.kind == "WorkflowArrival":
                arrivals[e.time] = arrivals.get(e.time, 0) + 1
        with paths["plot_data"].open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(PLOT_HEADER)
            for s in series.samples:
                w.writerow((
                    s.t,
                    arrivals.get(s.t, 0),
                    f"{s.cpu_used_m / series.cpu_capacity_m:.6f}",
                    f"{s.mem_used_mi / series.mem_capacity_mi:.6f}",
                ))
    except OSError as exc:
        raise IoError(f"cannot write outputs to {out}: {exc}") from exc
    return paths
