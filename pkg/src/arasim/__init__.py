"""Discrete-event simulation of adaptive vs first-come-first-serve resource
allocation for DAG workflows on a container cluster."""

from .allocator import (
    AllocationContext,
    AllocationDecision,
    RetryPolicy,
    accumulate_requests,
    allocate_adaptive,
    allocate_baseline,
    evaluate,
    scale_cut,
)
from .cluster import NodeSpec, PodPhase, PodRecord, ResourceQuantity, discover_residual, place_pod, totals_and_max
from .engine import Deadlock, EngineConfig, Livelock, RunResult, SimEvent, Simulation, run
from .knowledge import KnowledgeBase, TaskStateRecord
from .metrics import MetricsSeries, RunSummary, avg_workflow_duration, emit, resource_usage, summarize, total_duration
from .workflow import TaskSpec, WorkflowSpec, build_topology, predicted_schedule, ready_tasks, validate_dag
from .workload import ArrivalPattern, generate_arrivals, inject

__version__ = "0.1.0"
