"""Nodes, pods, per-node resource accounting and pod placement."""
from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import Enum


class ClusterError(Exception):
    pass


class NegativeQuantity(ClusterError, ValueError):
    pass


class UnknownNodeReference(ClusterError):
    pass


class NegativeResidual(ClusterError):
    pass


class EmptyCluster(ClusterError):
    pass


class OverCommit(ClusterError):
    pass


class InvalidPhase(ClusterError):
    pass


@dataclass(frozen=True, order=True)
class ResourceQuantity:
    """CPU in millicores and memory in MiB."""

    cpu: int = 0
    mem: int = 0

    def __post_init__(self):
        if self.cpu < 0 or self.mem < 0:
            raise NegativeQuantity(f"negative resource quantity ({self.cpu}, {self.mem})")

    def __add__(self, other: ResourceQuantity) -> ResourceQuantity:
        return ResourceQuantity(self.cpu + other.cpu, self.mem + other.mem)

    def __sub__(self, other: ResourceQuantity) -> ResourceQuantity:
        return ResourceQuantity(self.cpu - other.cpu, self.mem - other.mem)

    def fits_in(self, other: ResourceQuantity) -> bool:
        """True when both components are <= the matching components of ``other``."""
        return self.cpu <= other.cpu and self.mem <= other.mem

    def as_tuple(self) -> tuple[int, int]:
        return (self.cpu, self.mem)


ZERO = ResourceQuantity(0, 0)


@dataclass(frozen=True)
class NodeSpec:
    id: str
    allocatable: ResourceQuantity


class PodPhase(str, Enum):
    PENDING = "Pending"
    RUNNING = "Running"
    SUCCEEDED = "Succeeded"
    FAILED = "Failed"
    OOM_KILLED = "OOMKilled"
    DELETED = "Deleted"


OCCUPYING = frozenset({PodPhase.PENDING, PodPhase.RUNNING})
TERMINAL = frozenset({PodPhase.SUCCEEDED, PodPhase.FAILED, PodPhase.OOM_KILLED})

_TRANSITIONS = {
    PodPhase.PENDING: {PodPhase.RUNNING, PodPhase.FAILED},
    PodPhase.RUNNING: {PodPhase.SUCCEEDED, PodPhase.OOM_KILLED, PodPhase.FAILED},
}


@dataclass
class PodRecord:
    id: str
    workflow_id: str
    task_id: str
    request: ResourceQuantity
    node_id: str | None = None
    phase: PodPhase = PodPhase.PENDING
    start_time: int | None = None
    end_time: int | None = None

    def move_to(self, phase: PodPhase) -> None:
        if self.phase is PodPhase.DELETED:
            raise InvalidPhase(f"pod {self.id} is deleted")
        if phase is not PodPhase.DELETED and phase not in _TRANSITIONS.get(self.phase, ()):
            raise InvalidPhase(f"pod {self.id}: {self.phase.value} -> {phase.value}")
        self.phase = phase


def default_nodes(count: int = 6, cpu_m: int = 8000, mem_mi: int = 16384) -> list[NodeSpec]:
    width = max(2, len(str(count)))
    return [NodeSpec(f"node-{i:0{width}d}", ResourceQuantity(cpu_m, mem_mi)) for i in range(1, count + 1)]


def discover_residual(nodes: Iterable[NodeSpec], pods: Iterable[PodRecord]) -> dict[str, ResourceQuantity]:
    """Per-node allocatable minus the requests of its Pending/Running pods."""
    nodes = list(nodes)
    used = {n.id: [0, 0] for n in nodes}
    for pod in pods:
        if pod.node_id is None:
            continue
        if pod.node_id not in used:
            raise UnknownNodeReference(f"pod {pod.id} references unknown node {pod.node_id}")
        if pod.phase in OCCUPYING:
            used[pod.node_id][0] += pod.request.cpu
            used[pod.node_id][1] += pod.request.mem
    residual = {}
    for node in nodes:
        cpu = node.allocatable.cpu - used[node.id][0]
        mem = node.allocatable.mem - used[node.id][1]
        if cpu < 0 or mem < 0:
            raise NegativeResidual(f"node {node.id} residual ({cpu}, {mem})")
        residual[node.id] = ResourceQuantity(cpu, mem)
    return residual


def totals_and_max(residual: Mapping[str, ResourceQuantity]) -> tuple[ResourceQuantity, ResourceQuantity, str]:
    """Cluster-wide residual sum plus the residual of the node with the most free CPU.

    Both components of the maximum are taken from the CPU-max node, even when
    another node has more free memory. CPU ties go to the smallest node id.
    """
    if not residual:
        raise EmptyCluster("no nodes in residual map")
    total_cpu = total_mem = 0
    max_node = None
    for node_id in sorted(residual):
        r = residual[node_id]
        total_cpu += r.cpu
        total_mem += r.mem
        if max_node is None or r.cpu > residual[max_node].cpu:
            max_node = node_id
    return ResourceQuantity(total_cpu, total_mem), residual[max_node], max_node


def place_pod(residual: Mapping[str, ResourceQuantity], alloc: ResourceQuantity) -> str | None:
    """Pick the fitting node with the most free memory; None when nothing fits."""
    best = None
    for node_id in sorted(residual):
        r = residual[node_id]
        if alloc.fits_in(r) and (best is None or r.mem > residual[best].mem):
            best = node_id
    return best


@dataclass
class Cluster:
    """Mutable pod/node bookkeeping owned by the simulation engine."""

    nodes: list[NodeSpec]
    pods: dict[str, PodRecord] = field(default_factory=dict)
    _used: dict[str, ResourceQuantity] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._by_id = {n.id: n for n in self.nodes}
        if len(self._by_id) != len(self.nodes):
            raise ClusterError("duplicate node ids")
        self._used = {n.id: ZERO for n in self.nodes}
        self._released: set[str] = set()
        self._live: dict[str, PodRecord] = {}

    @property
    def capacity(self) -> ResourceQuantity:
        total = ZERO
        for node in self.nodes:
            total = total + node.allocatable
        return total

    def live_pods(self) -> list[PodRecord]:
        return [p for p in self._live.values() if p.phase in OCCUPYING]

    def residual(self) -> dict[str, ResourceQuantity]:
        return discover_residual(self.nodes, self.live_pods())

    def used(self) -> ResourceQuantity:
        total = ZERO
        for q in self._used.values():
            total = total + q
        return total

    def add_pod(self, pod: PodRecord) -> None:
        if pod.id in self.pods:
            raise ClusterError(f"pod id {pod.id} reused")
        self.pods[pod.id] = pod

    def bind(self, pod: PodRecord, node_id: str) -> None:
        if node_id not in self._by_id:
            raise UnknownNodeReference(node_id)
        if pod.node_id is not None:
            raise OverCommit(f"pod {pod.id} already bound to {pod.node_id}")
        if pod.phase is not PodPhase.PENDING:
            raise InvalidPhase(f"cannot bind pod {pod.id} in phase {pod.phase.value}")
        if not self._fits(node_id, pod):
            raise OverCommit(f"pod {pod.id} {pod.request} does not fit on {node_id}")
        if pod.id not in self.pods:
            self.add_pod(pod)
        pod.node_id = node_id
        self._live[pod.id] = pod
        self._used[node_id] = self._used[node_id] + pod.request

    def _fits(self, node_id: str, pod: PodRecord) -> bool:
        used = self._used[node_id]
        alloc = self._by_id[node_id].allocatable
        return used.cpu + pod.request.cpu <= alloc.cpu and used.mem + pod.request.mem <= alloc.mem

    def release(self, pod: PodRecord) -> None:
        if pod.phase not in TERMINAL:
            raise InvalidPhase(f"cannot release pod {pod.id} in phase {pod.phase.value}")
        if pod.id in self._released:
            raise InvalidPhase(f"pod {pod.id} already released")
        self._released.add(pod.id)
        self._live.pop(pod.id, None)
        if pod.node_id is not None:
            self._used[pod.node_id] = self._used[pod.node_id] - pod.request

    def check_conservation(self) -> None:
        """Recompute occupancy from the full pod list and compare with the running tally."""
        residual = discover_residual(self.nodes, self.pods.values())
        for node in self.nodes:
            if node.allocatable - residual[node.id] != self._used[node.id]:
                raise ClusterError(f"occupancy drift on {node.id}")
