"""Exhaustive (instances x workers) configuration sweep for one node/profile."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .node import NodeSpec, logical_processors, usable_memory
from .workload import REASON_MEMORY, REASON_THREADS, REASON_TPC_CAP, ApplicationProfile

CSV_COLUMNS = ("instances", "workers", "threads", "peak_memory_mib",
               "total_rate_epm", "per_thread_rate_epm", "feasible", "reason")

_FLAG_REASONS = ((kernels.MEMORY, REASON_MEMORY),
                 (kernels.THREADS, REASON_THREADS),
                 (kernels.TPC_CAP, REASON_TPC_CAP))


class SweepError(ValueError):
    pass


class NoFeasibleConfiguration(SweepError):
    pass


@dataclass(frozen=True)
class Grid:
    instances: tuple[int, int]  # inclusive bounds
    workers: tuple[int, int]
    max_threads: Optional[int] = None  # prune instances*workers above this

    @classmethod
    def full(cls, spec: NodeSpec) -> "Grid":
        n = logical_processors(spec)
        return cls((1, n), (1, n), n)

    def points(self) -> list[tuple[int, int]]:
        (i0, i1), (w0, w1) = self.instances, self.workers
        if i0 < 1 or w0 < 1:
            raise SweepError("grid bounds must be >= 1")
        out = []
        for i in range(i0, i1 + 1):
            for w in range(w0, w1 + 1):
                if self.max_threads is not None and i * w > self.max_threads:
                    break
                out.append((i, w))
        return out


@dataclass(frozen=True)
class SweepRow:
    instances: int
    workers: int
    threads: int
    peak_memory_mib: float
    total_rate_epm: float
    per_thread_rate_epm: float
    feasible: bool
    reason: str

    def sort_key(self) -> tuple[int, int]:
        return (self.threads, self.instances)

    def csv_fields(self) -> list[str]:
        return [str(self.instances), str(self.workers), str(self.threads),
                f"{self.peak_memory_mib:.3f}", f"{self.total_rate_epm:.6f}",
                f"{self.per_thread_rate_epm:.6f}", "true" if self.feasible else "false",
                self.reason]

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in CSV_COLUMNS[:-1]} | {"reason": self.reason}


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    best: Optional[SweepRow]


def _better(a: SweepRow, b: SweepRow) -> bool:
    """Is ``a`` preferred over ``b``? Higher rate, then fewer threads, then
    more (smaller) instances: at equal throughput a failure costs less."""
    if a.total_rate_epm != b.total_rate_epm:
        return a.total_rate_epm > b.total_rate_epm
    if a.threads != b.threads:
        return a.threads < b.threads
    return a.instances > b.instances


def select_best(rows: Sequence[SweepRow]) -> Optional[SweepRow]:
    best = None
    for row in rows:
        if row.feasible and (best is None or _better(row, best)):
            best = row
    return best


def _evaluate(points, spec, profile, backend) -> list[SweepRow]:
    if not points:
        return []
    impl = kernels.get_backend(backend) if backend else kernels
    inst = np.array([p[0] for p in points], dtype=np.int64)
    work = np.array([p[1] for p in points], dtype=np.int64)
    cap = spec.unstable_beyond_threads_per_core or 0
    memory, total, per_thread, flags = impl.evaluate_grid(
        inst, work, spec.physical_cores, spec.hyperthread_ways,
        np.array(profile.ht_scaling, dtype=np.float64), usable_memory(spec),
        spec.per_instance_overhead, profile.sp_footprint, profile.shared_fraction,
        profile.master_overhead, profile.mp_overhead, profile.single_thread_rate, cap)
    rows = []
    for k, (i, w) in enumerate(points):
        f = int(flags[k])
        reason = ";".join(name for bit, name in _FLAG_REASONS if f & bit)
        rows.append(SweepRow(i, w, i * w, float(memory[k]), float(total[k]),
                             float(per_thread[k]), f == 0, reason))
    return rows


def run_sweep(spec: NodeSpec, profile: ApplicationProfile, grid: Optional[Grid] = None,
              *, parallel: int = 1, backend: Optional[str] = None) -> SweepResult:
    """Evaluate every grid point; rows come back sorted by (threads, instances).

    ``parallel`` > 1 splits the grid into interleaved chunks evaluated on a
    thread pool; output is identical regardless.
    """
    grid = grid if grid is not None else Grid.full(spec)
    points = grid.points()
    if not points:
        raise SweepError("empty grid")
    if parallel > 1:
        chunks = [points[k::parallel] for k in range(parallel)]
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            parts = list(pool.map(lambda c: _evaluate(c, spec, profile, backend), chunks))
        rows = [r for part in parts for r in part]
    else:
        rows = _evaluate(points, spec, profile, backend)
    rows.sort(key=SweepRow.sort_key)
    return SweepResult(tuple(rows), select_best(rows))


def best_configuration(result: SweepResult) -> SweepRow:
    if result.best is None:
        raise NoFeasibleConfiguration(
            "no feasible configuration: every grid point exceeds the memory, "
            "thread or threads-per-core budget")
    return result.best


def format_row(row: SweepRow) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="").writerow(row.csv_fields())
    return buf.getvalue()


def emit_table(result: SweepResult, fmt: str = "csv") -> bytes:
    rows = sorted(result.rows, key=SweepRow.sort_key)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(row.csv_fields())
        return buf.getvalue().encode()
    if fmt == "json":
        return (json.dumps([r.to_dict() for r in rows], indent=1) + "\n").encode()
    raise SweepError(f"unknown format {fmt!r}")
