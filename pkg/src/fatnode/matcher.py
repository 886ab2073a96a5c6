"""Pool inner Computing Element: partitions a fat node among queued jobs.

Admission is greedy in queue order with no lookahead. Each admitted job gets
the lowest free processor IDs, which under the core-major numbering spreads
jobs across physical cores before stacking hyperthreads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Optional, Sequence

from .node import NodeSpec, ProcessorSet, logical_processors, usable_memory
from .workload import ApplicationProfile, instance_memory


class Mode(str, enum.Enum):
    SINGLE_ONLY = "single_only"
    MULTI_ONLY = "multi_only"
    FLEXIBLE = "flexible"


# rejection reasons; the first four are static (queue capability) checks
SINGLE_NOT_ALLOWED = "single-processor jobs not allowed"
MULTI_NOT_ALLOWED = "multi-processor jobs not allowed"
TYPE_TAG_REQUIRED = "job type tag required"
EXACT_COUNT_REQUIRED = "exact processor count required"
WHOLE_NODE_ONLY = "whole-node jobs only"
NO_FREE = "no free processors"
NODE_NOT_EMPTY = "whole-node job needs an empty node"
INSUFFICIENT = "insufficient free processors"
CONCURRENCY_CAP = "concurrency cap"
INSUFFICIENT_MEMORY = "insufficient memory"
DUPLICATE_JOB = "duplicate job id"


class DescriptorError(ValueError):
    pass


class MatchContractError(RuntimeError):
    """An operation was called with its precondition violated."""


@dataclass(frozen=True)
class JobDescriptor:
    job_id: str
    mode: Mode = Mode.SINGLE_ONLY
    exact_processors: Optional[int] = None
    max_processors: Optional[int] = None
    whole_node: bool = False
    memory_hint: Optional[float] = None  # MiB

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.exact_processors is not None and self.max_processors is not None:
            raise DescriptorError(f"{self.job_id}: exact_processors and max_processors are exclusive")
        if self.exact_processors is not None and self.exact_processors < 1:
            raise DescriptorError(f"{self.job_id}: exact_processors must be >= 1")
        if self.max_processors is not None and self.max_processors < 1:
            raise DescriptorError(f"{self.job_id}: max_processors must be >= 1")
        if self.mode is Mode.SINGLE_ONLY:
            if self.exact_processors not in (None, 1) or self.whole_node:
                raise DescriptorError(f"{self.job_id}: single_only job must use 1 processor")
            if self.max_processors not in (None, 1):
                raise DescriptorError(f"{self.job_id}: single_only job must use 1 processor")
        if self.mode is Mode.MULTI_ONLY:
            if self.exact_processors is not None and self.exact_processors < 2:
                raise DescriptorError(f"{self.job_id}: multi_only job needs >= 2 processors")
            if self.max_processors is not None and self.max_processors < 2:
                raise DescriptorError(f"{self.job_id}: multi_only job needs >= 2 processors")
        if self.whole_node and (self.exact_processors is not None or self.max_processors is not None):
            raise DescriptorError(f"{self.job_id}: whole_node job cannot set a processor count")
        if self.memory_hint is not None and self.memory_hint < 0:
            raise DescriptorError(f"{self.job_id}: memory_hint must be >= 0")


@dataclass(frozen=True)
class QueueDescriptor:
    slot_processors: int
    allow_single: bool = True
    allow_multi: bool = True
    require_job_type_tag: bool = False
    require_exact_count: bool = False
    whole_node_only: bool = False
    max_concurrent_jobs: Optional[int] = None

    def __post_init__(self) -> None:
        if self.slot_processors < 1:
            raise DescriptorError("slot_processors must be >= 1")
        if not (self.allow_single or self.allow_multi):
            raise DescriptorError("queue must allow single or multi processor jobs")
        if self.whole_node_only and not self.allow_multi:
            raise DescriptorError("whole_node_only requires allow_multi")
        if self.max_concurrent_jobs is not None and self.max_concurrent_jobs < 0:
            raise DescriptorError("max_concurrent_jobs must be >= 0")


@dataclass(frozen=True)
class Allocation:
    """Disjoint processor sets per job plus the free remainder of the slot."""

    size: int
    assigned: Mapping[str, ProcessorSet] = field(default_factory=dict)
    free: ProcessorSet = ProcessorSet()
    # admitted residency per job, tracked only when memory gating is on
    memory: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "assigned", MappingProxyType(dict(self.assigned)))
        object.__setattr__(self, "memory", MappingProxyType(dict(self.memory)))

    @classmethod
    def empty(cls, size: int) -> "Allocation":
        return cls(size=size, free=ProcessorSet.full(size))

    def check(self) -> None:
        """Raise AssertionError if the partition invariant is broken."""
        seen = ProcessorSet()
        for job_id, procs in self.assigned.items():
            assert procs, f"{job_id} holds no processors"
            assert seen.isdisjoint(procs), f"{job_id} overlaps another job"
            seen = seen | procs
        assert seen.isdisjoint(self.free), "free set overlaps an assignment"
        assert (seen | self.free) == ProcessorSet.full(self.size), "union is not the full node"

    @property
    def used(self) -> int:
        return self.size - len(self.free)

    def to_dict(self) -> dict:
        return {
            "slot_processors": self.size,
            "assigned": {k: v.ids() for k, v in self.assigned.items()},
            "free": self.free.ids(),
        }


@dataclass(frozen=True)
class Rejection:
    job_id: str
    reason: str

    def to_dict(self) -> dict:
        return {"job_id": self.job_id, "reason": self.reason}


@dataclass(frozen=True)
class MatchResult:
    allocation: Allocation
    rejections: tuple[Rejection, ...] = ()


def _is_multi(job: JobDescriptor, queue: QueueDescriptor) -> Optional[bool]:
    """True/False when the job is definitely multi/single; None if flexible."""
    if job.mode is Mode.MULTI_ONLY:
        return True
    if job.whole_node:
        return queue.slot_processors > 1
    if job.mode is Mode.SINGLE_ONLY:
        return False
    if job.exact_processors is not None:
        return job.exact_processors > 1
    if job.max_processors == 1:
        return False
    return None


def _min_processors(job: JobDescriptor, queue: QueueDescriptor) -> int:
    need = 1
    if job.mode is Mode.MULTI_ONLY or (job.mode is Mode.FLEXIBLE and not queue.allow_single):
        need = 2
    if job.whole_node:
        return max(need, queue.slot_processors)
    if job.exact_processors is not None:
        return max(need, job.exact_processors)
    return need


def static_reason(job: JobDescriptor, queue: QueueDescriptor) -> Optional[str]:
    """First queue-capability rule the job fails, independent of occupancy."""
    multi = _is_multi(job, queue)
    if multi is True and not queue.allow_multi:
        return MULTI_NOT_ALLOWED
    if multi is False and not queue.allow_single:
        return SINGLE_NOT_ALLOWED
    if queue.require_job_type_tag and job.mode is Mode.FLEXIBLE:
        return TYPE_TAG_REQUIRED
    if queue.require_exact_count and not (
            job.exact_processors is not None or job.whole_node
            or job.mode is Mode.SINGLE_ONLY):
        return EXACT_COUNT_REQUIRED
    if queue.whole_node_only and not job.whole_node:
        return WHOLE_NODE_ONLY
    return None


def can_match(job: JobDescriptor, queue: QueueDescriptor,
              free_processors: int) -> tuple[bool, str]:
    """Verdict and reason ("ok" on success) for admitting ``job`` now."""
    reason = static_reason(job, queue)
    if reason is None:
        if free_processors <= 0:
            reason = NO_FREE
        elif job.whole_node and free_processors != queue.slot_processors:
            reason = NODE_NOT_EMPTY
        elif _min_processors(job, queue) > free_processors:
            reason = INSUFFICIENT
    if reason is None:
        return True, "ok"
    return False, reason


def allocation_size(job: JobDescriptor, queue: QueueDescriptor,
                    free_processors: int) -> int:
    ok, reason = can_match(job, queue, free_processors)
    if not ok:
        raise MatchContractError(f"{job.job_id} cannot match: {reason}")
    if job.exact_processors is not None:
        return job.exact_processors
    if job.whole_node:
        return queue.slot_processors
    if _is_multi(job, queue) is False or not queue.allow_multi:
        return 1
    cap = job.max_processors if job.max_processors is not None else free_processors
    return min(free_processors, cap)


def estimated_memory(job: JobDescriptor, processors: int, profile: ApplicationProfile,
                     spec: NodeSpec) -> float:
    if job.memory_hint is not None:
        return job.memory_hint
    return instance_memory(profile, processors) + spec.per_instance_overhead


def pool_match(jobs: Sequence[JobDescriptor], queue: QueueDescriptor, spec: NodeSpec,
               profile: Optional[ApplicationProfile] = None,
               allocation: Optional[Allocation] = None) -> MatchResult:
    """Greedily admit ``jobs`` in order onto the node.

    Starts from ``allocation`` (default: an empty slot). Memory gating is on
    only when ``profile`` is given and then applies to jobs carrying a
    ``memory_hint``.
    """
    if queue.slot_processors > logical_processors(spec):
        raise DescriptorError(
            f"slot_processors={queue.slot_processors} exceeds node nproc={logical_processors(spec)}")
    alloc = allocation if allocation is not None else Allocation.empty(queue.slot_processors)
    if alloc.size != queue.slot_processors:
        raise DescriptorError("allocation size does not match queue slot_processors")
    assigned = dict(alloc.assigned)
    memory = dict(alloc.memory)
    free = alloc.free
    budget = usable_memory(spec)
    rejections = []
    for job in jobs:
        if job.job_id in assigned:
            rejections.append(Rejection(job.job_id, DUPLICATE_JOB))
            continue
        if queue.max_concurrent_jobs is not None and len(assigned) >= queue.max_concurrent_jobs:
            rejections.append(Rejection(job.job_id, CONCURRENCY_CAP))
            continue
        n_free = len(free)
        ok, reason = can_match(job, queue, n_free)
        if not ok:
            rejections.append(Rejection(job.job_id, reason))
            continue
        n = allocation_size(job, queue, n_free)
        if profile is not None:
            need = estimated_memory(job, n, profile, spec)
            if job.memory_hint is not None and sum(memory.values()) + need > budget:
                rejections.append(Rejection(job.job_id, INSUFFICIENT_MEMORY))
                continue
            memory[job.job_id] = need
        procs = free.take_lowest(n)
        assigned[job.job_id] = procs
        free = free - procs
    return MatchResult(
        Allocation(alloc.size, assigned, free, memory), tuple(rejections))


def release(alloc: Allocation, job_id: str) -> Allocation:
    if job_id not in alloc.assigned:
        raise KeyError(f"job {job_id!r} is not allocated")
    assigned = dict(alloc.assigned)
    procs = assigned.pop(job_id)
    memory = {k: v for k, v in alloc.memory.items() if k != job_id}
    return Allocation(alloc.size, assigned, alloc.free | procs, memory)
