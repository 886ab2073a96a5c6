"""Deterministic discrete-event simulation of one pilot on one fat node.

Time jumps from boundary to boundary (arrival, completion, horizon). At each
boundary pending jobs are matched, the OOM monitor resolves any memory
overcommit, and per-job event rates are recomputed from the current per-core
thread counts. Rates are constant between boundaries.
"""

from __future__ import annotations

import enum
import json
import math
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .matcher import (
    Allocation,
    JobDescriptor,
    QueueDescriptor,
    can_match,
    pool_match,
    release,
)
from .node import NodeSpec, logical_processors, usable_memory
from .workload import ApplicationProfile, instance_memory

# completion times within this many minutes of a boundary coincide with it
_TIME_EPS = 1e-9


class SimConfigError(ValueError):
    pass


class OomPolicy(str, enum.Enum):
    KILL_LARGEST = "kill_largest"
    KILL_NEWEST = "kill_newest"


class Kind(str, enum.Enum):
    SIM_START = "sim_start"
    JOB_STARTED = "job_started"
    EVENTS_COMPLETED = "events_completed"
    OOM_KILL = "oom_kill"
    JOB_FINISHED = "job_finished"
    JOB_REJECTED = "job_rejected"
    SIM_END = "sim_end"


@dataclass(frozen=True)
class SimJob:
    descriptor: JobDescriptor
    events_requested: int
    profile: Optional[ApplicationProfile] = None  # falls back to SimConfig.profile
    arrival: float = 0.0  # minutes

    @property
    def job_id(self) -> str:
        return self.descriptor.job_id


@dataclass(frozen=True)
class SimConfig:
    node: NodeSpec
    queue: QueueDescriptor
    jobs: tuple[SimJob, ...]
    profile: Optional[ApplicationProfile] = None
    seed: int = 0
    oom_policy: OomPolicy = OomPolicy.KILL_LARGEST
    horizon: float = 10_000.0  # minutes
    # each arrival is delayed by U(0, arrival_jitter); 0 disables randomness
    arrival_jitter: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "jobs", tuple(self.jobs))
        object.__setattr__(self, "oom_policy", OomPolicy(self.oom_policy))

    def validate(self) -> None:
        if not self.horizon > 0 or not math.isfinite(self.horizon):
            raise SimConfigError("horizon must be a positive finite number")
        if self.arrival_jitter < 0:
            raise SimConfigError("arrival_jitter must be >= 0")
        if self.queue.slot_processors > logical_processors(self.node):
            raise SimConfigError("queue slot_processors exceeds node nproc")
        seen = set()
        for job in self.jobs:
            if job.job_id in seen:
                raise SimConfigError(f"duplicate job_id {job.job_id!r}")
            seen.add(job.job_id)
            if job.events_requested < 1:
                raise SimConfigError(f"{job.job_id}: events_requested must be >= 1")
            if job.arrival < 0:
                raise SimConfigError(f"{job.job_id}: arrival must be >= 0")
            if job.profile is None and self.profile is None:
                raise SimConfigError(f"{job.job_id}: no application profile")


@dataclass(frozen=True)
class SimEvent:
    t_min: float
    kind: Kind
    job_id: Optional[str] = None
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"t_min": self.t_min, "kind": self.kind.value,
                "job_id": self.job_id, "detail": self.detail}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False, separators=(",", ":"))


@dataclass(frozen=True)
class JobOutcome:
    job_id: str
    status: str  # finished | oom_killed | rejected | running
    events_completed: int
    processors: int
    start: Optional[float]
    end: Optional[float]
    reason: str = ""


@dataclass(frozen=True)
class SimReport:
    total_events: int
    span: float
    throughput: float
    peak_memory: float
    peak_demand: float
    peak_processors: int
    max_concurrency: int
    final_concurrency: int
    outcomes: tuple[JobOutcome, ...]

    def to_dict(self) -> dict:
        return {
            "total_events": self.total_events,
            "span_min": self.span,
            "throughput_epm": self.throughput,
            "peak_memory_mib": self.peak_memory,
            "peak_demand_mib": self.peak_demand,
            "peak_processors": self.peak_processors,
            "max_concurrency": self.max_concurrency,
            "final_concurrency": self.final_concurrency,
            "jobs": [o.__dict__ for o in self.outcomes],
        }


@dataclass
class _Running:
    job: SimJob
    profile: ApplicationProfile
    processors: tuple[int, ...]
    start: float
    order: int  # admission sequence number
    memory: float
    progress: float = 0.0  # fractional events
    reported: int = 0  # whole events already in the trace
    rate: float = 0.0


def job_memory(profile: ApplicationProfile, processors: int, node: NodeSpec) -> float:
    return instance_memory(profile, processors) + node.per_instance_overhead


def job_rates(running: Sequence[_Running], node: NodeSpec) -> list[float]:
    """Per-job event rates for the current occupancy.

    A core with t busy threads yields ``rate * sigma(t)``, split evenly among
    its threads; MP jobs pay their profile's overhead factor.
    """
    counts: dict[int, int] = {}
    for r in running:
        for p in r.processors:
            c = node.core_of(p)
            counts[c] = counts.get(c, 0) + 1
    rates = []
    for r in running:
        per_core = 0.0
        for p in r.processors:
            t = counts[node.core_of(p)]
            per_core += r.profile.sigma(t) / t
        rate = r.profile.single_thread_rate * per_core
        if len(r.processors) > 1:
            rate = rate * (1.0 - r.profile.mp_overhead)
        rates.append(rate)
    return rates


def _arrivals(config: SimConfig) -> list[float]:
    if config.arrival_jitter <= 0:
        return [job.arrival for job in config.jobs]
    rng = random.Random(config.seed)
    return [job.arrival + rng.uniform(0.0, config.arrival_jitter) for job in config.jobs]


def run(config: SimConfig) -> tuple[list[SimEvent], SimReport]:
    config.validate()
    node, queue = config.node, config.queue
    budget = usable_memory(node)
    arrivals = _arrivals(config)
    # stable: equal arrival times keep queue order
    pending_order = sorted(range(len(config.jobs)), key=lambda i: arrivals[i])
    arrived: list[int] = []
    trace: list[SimEvent] = []
    alloc = Allocation.empty(queue.slot_processors)
    running: dict[str, _Running] = {}
    outcomes: dict[str, JobOutcome] = {}
    now = 0.0
    seq = 0
    total_events = 0
    peak_memory = peak_demand = 0.0
    peak_procs = max_conc = 0
    last_terminal = 0.0

    def profile_of(job: SimJob) -> ApplicationProfile:
        return job.profile if job.profile is not None else config.profile

    def emit(kind: Kind, job_id=None, **detail) -> None:
        trace.append(SimEvent(now, kind, job_id, detail))

    def flush_progress(r: _Running) -> None:
        nonlocal total_events
        whole = min(int(math.floor(r.progress + 1e-9)), r.job.events_requested)
        if whole > r.reported:
            delta = whole - r.reported
            r.reported = whole
            total_events += delta
            emit(Kind.EVENTS_COMPLETED, r.job.job_id, count=delta, total=whole)

    def terminate(r: _Running, status: str, kind: Kind, **detail) -> None:
        nonlocal alloc, last_terminal
        flush_progress(r)
        del running[r.job.job_id]
        alloc = release(alloc, r.job.job_id)
        emit(kind, r.job.job_id, events=r.reported, **detail)
        outcomes[r.job.job_id] = JobOutcome(
            r.job.job_id, status, r.reported, len(r.processors), r.start, now)
        last_terminal = now

    def reject(job: SimJob, reason: str) -> None:
        nonlocal last_terminal
        emit(Kind.JOB_REJECTED, job.job_id, reason=reason)
        outcomes[job.job_id] = JobOutcome(job.job_id, "rejected", 0, 0, None, now, reason)
        last_terminal = now

    def admit() -> None:
        nonlocal alloc, seq, arrived
        if not arrived:
            return
        descs = [config.jobs[i].descriptor for i in arrived]
        result = pool_match(descs, queue, node, allocation=alloc)
        alloc = result.allocation
        still = []
        for i in arrived:
            job = config.jobs[i]
            procs = alloc.assigned.get(job.job_id)
            if procs is None:
                still.append(i)
                continue
            prof = profile_of(job)
            ids = tuple(procs)
            running[job.job_id] = _Running(
                job, prof, ids, now, seq, job_memory(prof, len(ids), node))
            seq += 1
            emit(Kind.JOB_STARTED, job.job_id, processors=len(ids),
                 memory_mib=running[job.job_id].memory)
        arrived = still

    def oom() -> None:
        nonlocal peak_demand
        demand = sum(r.memory for r in running.values())
        peak_demand = max(peak_demand, demand)
        while running and demand > budget:
            if config.oom_policy is OomPolicy.KILL_LARGEST:
                victim = max(running.values(), key=lambda r: (r.memory, r.order))
            else:
                victim = max(running.values(), key=lambda r: r.order)
            demand -= victim.memory
            terminate(victim, "oom_killed", Kind.OOM_KILL, memory_mib=victim.memory,
                      resident_mib=demand + victim.memory)

    def reject_hopeless() -> None:
        nonlocal arrived
        keep = []
        for i in arrived:
            job = config.jobs[i]
            ok, reason = can_match(job.descriptor, queue, queue.slot_processors)
            if not ok:
                reject(job, reason)
            elif queue.max_concurrent_jobs == 0:
                reject(job, "concurrency cap")
            else:
                keep.append(i)
        arrived = keep

    emit(Kind.SIM_START, None, jobs=len(config.jobs), horizon_min=config.horizon)
    cursor = 0
    while True:
        while cursor < len(pending_order) and arrivals[pending_order[cursor]] <= now + _TIME_EPS:
            arrived.append(pending_order[cursor])
            cursor += 1
        reject_hopeless()
        # admit/oom until stable: a kill can free room for a pending job
        while True:
            before = (len(running), len(arrived))
            admit()
            oom()
            if (len(running), len(arrived)) == before or not arrived:
                break
        resident = sum(r.memory for r in running.values())
        peak_memory = max(peak_memory, resident)
        peak_procs = max(peak_procs, alloc.used)
        max_conc = max(max_conc, len(running))

        order = sorted(running.values(), key=lambda r: r.order)
        for r, rate in zip(order, job_rates(order, node)):
            r.rate = rate

        if not running and cursor >= len(pending_order):
            # nothing runs and nothing will arrive: leftovers can never start
            for i in arrived:
                reject(config.jobs[i], "unschedulable")
            arrived = []
            break

        next_t = config.horizon
        if cursor < len(pending_order):
            next_t = min(next_t, arrivals[pending_order[cursor]])
        for r in order:
            if r.rate > 0:
                next_t = min(next_t, now + (r.job.events_requested - r.progress) / r.rate)
        dt = next_t - now
        for r in order:
            r.progress = min(r.progress + r.rate * dt, float(r.job.events_requested))
        now = next_t
        for r in order:
            if r.job.events_requested - r.progress <= r.rate * _TIME_EPS:
                r.progress = float(r.job.events_requested)
        for r in order:
            if r.progress >= r.job.events_requested:
                terminate(r, "finished", Kind.JOB_FINISHED)
        for r in order:
            if r.job.job_id in running:
                flush_progress(r)
        if now >= config.horizon:
            break

    horizon_hit = now >= config.horizon
    span = config.horizon if horizon_hit else last_terminal
    for r in sorted(running.values(), key=lambda r: r.order):
        outcomes[r.job.job_id] = JobOutcome(
            r.job.job_id, "running", r.reported, len(r.processors), r.start, None)
    for i in arrived + [pending_order[k] for k in range(cursor, len(pending_order))]:
        job = config.jobs[i]
        if job.job_id not in outcomes:
            outcomes[job.job_id] = JobOutcome(job.job_id, "pending", 0, 0, None, None)
    emit(Kind.SIM_END, None, total_events=total_events, span_min=span)
    report = SimReport(
        total_events=total_events,
        span=span,
        throughput=total_events / span if span > 0 else 0.0,
        peak_memory=peak_memory,
        peak_demand=peak_demand,
        peak_processors=peak_procs,
        max_concurrency=max_conc,
        final_concurrency=len(running),
        outcomes=tuple(outcomes[j.job_id] for j in config.jobs),
    )
    return trace, report


def trace_lines(trace: Sequence[SimEvent]) -> str:
    return "".join(e.to_json() + "\n" for e in trace)


def replay_check(config: SimConfig) -> bool:
    first, _ = run(config)
    second, _ = run(config)
    return trace_lines(first) == trace_lines(second)
