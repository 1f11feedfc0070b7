"""Adaptive (lookahead + scaling) and first-come-first-serve allocation policies."""
from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass
from fractions import Fraction

from .cluster import ResourceQuantity, totals_and_max
from .knowledge import Key, KnowledgeBase
from .workflow import TaskSpec

DEFAULT_ALPHA = 0.8
DEFAULT_BETA = 20
DEFAULT_MAX_ROUNDS = 100


class AllocationError(Exception):
    pass


class ClusterUnavailable(AllocationError):
    pass


@dataclass(frozen=True)
class AllocationContext:
    task_req: ResourceQuantity
    request: ResourceQuantity
    total_residual: ResourceQuantity
    re_max: ResourceQuantity
    alpha: float = DEFAULT_ALPHA
    beta: int = DEFAULT_BETA
    min_cpu: int = 1
    min_mem: int = 1

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.beta < 20:
            raise ValueError("beta must be >= 20")
        if not self.task_req.fits_in(self.request):
            raise ValueError("accumulated request must cover the task request")


@dataclass(frozen=True)
class AllocationDecision:
    allocated: ResourceQuantity
    case_taken: str
    viable: bool


# Branch labels: macro case, then the two conditions that pick the sub-branch.
BRANCHES = (
    "1:B1&B2", "1:!B1&B2", "1:B1&!B2", "1:!B1&!B2",
    "2:C1&B2", "2:!C1&B2", "2:C1&!B2", "2:!C1&!B2",
    "3:B1&C2", "3:!B1&C2", "3:B1&!C2", "3:!B1&!C2",
    "4:C1&C2", "4:!C1&C2", "4:C1&!C2", "4:!C1&!C2",
)


def scale_cut(task_req: ResourceQuantity, total_residual: ResourceQuantity, request: ResourceQuantity) -> ResourceQuantity:
    """Scale the task request by free/demanded, floored to whole units."""
    if request.cpu == 0 or request.mem == 0:
        raise ZeroDivisionError("accumulated request has a zero component")
    return ResourceQuantity(
        task_req.cpu * total_residual.cpu // request.cpu,
        task_req.mem * total_residual.mem // request.mem,
    )


def _times_alpha(alpha: float, amount: int) -> int:
    # decimal reading of alpha keeps 0.8 * 8000 == 6400 exactly
    return math.floor(Fraction(repr(alpha)) * amount)


def _label(case: int, first: bool, second: bool, names: tuple[str, str]) -> str:
    a, b = names
    return f"{case}:{'' if first else '!'}{a}&{'' if second else '!'}{b}"


def evaluate(ctx: AllocationContext) -> AllocationDecision:
    """Pick allocated cpu/mem from the four residual-sufficiency cases.

    Comparisons are strict, so equality falls through to the negated branch.
    """
    task, req, total, re_max = ctx.task_req, ctx.request, ctx.total_residual, ctx.re_max
    cut = scale_cut(task, total, req)
    a1, a2 = req.cpu < total.cpu, req.mem < total.mem
    b1, b2 = task.cpu < re_max.cpu, task.mem < re_max.mem
    c1, c2 = cut.cpu < re_max.cpu, cut.mem < re_max.mem
    alpha_cpu = _times_alpha(ctx.alpha, re_max.cpu)
    alpha_mem = _times_alpha(ctx.alpha, re_max.mem)

    if a1 and a2:
        label = _label(1, b1, b2, ("B1", "B2"))
        cpu = task.cpu if b1 else alpha_cpu
        mem = task.mem if b2 else alpha_mem
    elif a2:
        # cpu short cluster-wide
        label = _label(2, c1, b2, ("C1", "B2"))
        if c1 and b2:
            cpu, mem = cut.cpu, task.mem
        elif b2:
            cpu, mem = alpha_cpu, task.mem
        elif c1:
            cpu, mem = cut.cpu, alpha_mem
        else:
            cpu, mem = alpha_cpu, alpha_mem
    elif a1:
        # memory short cluster-wide
        label = _label(3, b1, c2, ("B1", "C2"))
        if b1 and c2:
            cpu, mem = task.cpu, cut.mem
        elif c2:
            cpu, mem = alpha_cpu, cut.mem
        elif b1:
            cpu, mem = task.cpu, alpha_mem
        else:
            cpu, mem = alpha_cpu, alpha_mem
    else:
        label = _label(4, c1, c2, ("C1", "C2"))
        cpu, mem = cut.cpu, cut.mem

    allocated = ResourceQuantity(cpu, mem)
    viable = cpu >= ctx.min_cpu and mem >= ctx.min_mem + ctx.beta
    return AllocationDecision(allocated, label, viable)


def accumulate_requests(task: TaskSpec, interval: tuple[int, int], kb: KnowledgeBase, exclude: Key | None = None) -> ResourceQuantity:
    """The task's own request plus every incomplete record starting inside ``interval``.

    ``exclude`` names the requesting task's own record so it is not counted twice.
    """
    start, end = interval
    return ResourceQuantity(task.cpu, task.mem) + kb.demand_in_window(start, end, exclude)


@dataclass(frozen=True)
class RetryPolicy:
    max_rounds: int = DEFAULT_MAX_ROUNDS

    def proceed(self, decision: AllocationDecision, rounds: int) -> bool:
        """Whether a decision reached after ``rounds`` evaluations should be launched."""
        return decision.viable or rounds >= self.max_rounds


def allocate_adaptive(
    task: TaskSpec,
    interval: tuple[int, int],
    residual: Mapping[str, ResourceQuantity],
    kb: KnowledgeBase,
    alpha: float = DEFAULT_ALPHA,
    beta: int = DEFAULT_BETA,
    exclude: Key | None = None,
) -> tuple[AllocationDecision, AllocationContext]:
    """One round of the adaptive allocation: lookahead, discovery totals, evaluation.

    Retrying a non-viable round is the caller's job (see :class:`RetryPolicy`),
    because in simulation a retry only makes sense after resources are released.
    """
    if not residual:
        raise ClusterUnavailable("cluster has no nodes")
    request = accumulate_requests(task, interval, kb, exclude)
    total, re_max, _ = totals_and_max(residual)
    if re_max.cpu == 0 or re_max.mem == 0:
        raise ClusterUnavailable("no node has free cpu and memory")
    ctx = AllocationContext(
        ResourceQuantity(task.cpu, task.mem), request, total, re_max,
        alpha=alpha, beta=beta, min_cpu=task.min_cpu, min_mem=task.min_mem,
    )
    return evaluate(ctx), ctx


WAIT = None


def allocate_baseline(task: TaskSpec, residual: Mapping[str, ResourceQuantity]) -> AllocationDecision | None:
    """Full request if any single node can hold it, else ``WAIT`` (None)."""
    req = ResourceQuantity(task.cpu, task.mem)
    if any(req.fits_in(r) for r in residual.values()):
        return AllocationDecision(req, "fcfs", True)
    return WAIT
