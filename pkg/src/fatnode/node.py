"""Worker-node topology and memory budget.

Logical processor IDs are core-major: IDs ``c, c + cores, c + 2*cores, ...``
all live on physical core ``c``, so the lowest free IDs spread over cores
before stacking hyperthreads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

GIB = 1024

DEFAULT_PER_INSTANCE_OVERHEAD = 136.0


class NodeSpecError(ValueError):
    pass


@dataclass(frozen=True)
class NodeSpec:
    physical_cores: int
    hyperthread_ways: int
    total_ram: float  # MiB
    os_reserve: float = 0.0  # MiB
    per_instance_overhead: float = DEFAULT_PER_INSTANCE_OVERHEAD  # MiB
    # threads/core above this are modeled as failing (KNL: 2)
    unstable_beyond_threads_per_core: Optional[int] = None
    name: str = ""

    def __post_init__(self) -> None:
        if self.physical_cores < 1:
            raise NodeSpecError("physical_cores must be >= 1")
        if self.hyperthread_ways < 1:
            raise NodeSpecError("hyperthread_ways must be >= 1")
        if not 0 <= self.os_reserve < self.total_ram:
            raise NodeSpecError("os_reserve must be in [0, total_ram)")
        if self.per_instance_overhead < 0:
            raise NodeSpecError("per_instance_overhead must be >= 0")
        cap = self.unstable_beyond_threads_per_core
        if cap is not None and cap < 1:
            raise NodeSpecError("unstable_beyond_threads_per_core must be >= 1")

    @property
    def nproc(self) -> int:
        return logical_processors(self)

    def core_of(self, processor_id: int) -> int:
        return processor_id % self.physical_cores


def logical_processors(spec: NodeSpec) -> int:
    return spec.physical_cores * spec.hyperthread_ways


def usable_memory(spec: NodeSpec) -> float:
    return spec.total_ram - spec.os_reserve


def memory_per_thread(spec: NodeSpec, threads_used: int) -> float:
    """Usable memory shared evenly over ``threads_used`` hardware threads."""
    nproc = logical_processors(spec)
    if not 1 <= threads_used <= nproc:
        raise ValueError(f"threads_used must be in [1, {nproc}], got {threads_used}")
    return usable_memory(spec) / threads_used


def threads_per_core_needed(spec: NodeSpec, threads: int) -> int:
    """Busiest core's thread count when ``threads`` are spread core-major."""
    return -(-threads // spec.physical_cores)


# Reference nodes. The Haswell OS reserve is not stated anywhere; 2 GiB is a
# placeholder that never binds for the configurations of interest.
KNL = NodeSpec(
    physical_cores=68,
    hyperthread_ways=4,
    total_ram=96 * GIB,
    os_reserve=10 * GIB,
    unstable_beyond_threads_per_core=2,
    name="knl",
)

HASWELL = NodeSpec(
    physical_cores=16,
    hyperthread_ways=2,
    total_ram=64 * GIB,
    os_reserve=2 * GIB,
    name="haswell",
)


@dataclass(frozen=True)
class ProcessorSet:
    """Immutable set of logical processor IDs backed by an integer bitmap."""

    mask: int = 0

    @classmethod
    def from_ids(cls, ids: Iterable[int]) -> "ProcessorSet":
        mask = 0
        for i in ids:
            if i < 0:
                raise ValueError(f"negative processor id {i}")
            mask |= 1 << i
        return cls(mask)

    @classmethod
    def full(cls, n: int) -> "ProcessorSet":
        return cls((1 << n) - 1)

    def __len__(self) -> int:
        return self.mask.bit_count()

    def __bool__(self) -> bool:
        return self.mask != 0

    def __contains__(self, i: object) -> bool:
        return isinstance(i, int) and i >= 0 and bool(self.mask >> i & 1)

    def __iter__(self) -> Iterator[int]:
        m = self.mask
        while m:
            low = m & -m
            yield low.bit_length() - 1
            m ^= low

    def __or__(self, other: "ProcessorSet") -> "ProcessorSet":
        return ProcessorSet(self.mask | other.mask)

    def __and__(self, other: "ProcessorSet") -> "ProcessorSet":
        return ProcessorSet(self.mask & other.mask)

    def __sub__(self, other: "ProcessorSet") -> "ProcessorSet":
        return ProcessorSet(self.mask & ~other.mask)

    def isdisjoint(self, other: "ProcessorSet") -> bool:
        return self.mask & other.mask == 0

    def max_id(self) -> int:
        return self.mask.bit_length() - 1

    def take_lowest(self, n: int) -> "ProcessorSet":
        """The ``n`` lowest IDs of this set."""
        if n > len(self):
            raise ValueError(f"cannot take {n} of {len(self)} processors")
        m, out = self.mask, 0
        for _ in range(n):
            low = m & -m
            out |= low
            m ^= low
        return ProcessorSet(out)

    def ids(self) -> list[int]:
        return list(self)

    def __repr__(self) -> str:
        return f"ProcessorSet({self.ids()})"
