"""Memory footprint and event throughput of SP/MP application instances.

Memory uses a linear copy-on-write model: forked workers share a fixed
fraction of the single-process footprint with the master. Throughput places
threads core-major and sums per-core hyperthreading speedups.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from . import kernels
from .node import NodeSpec, logical_processors, threads_per_core_needed, usable_memory

REASON_MEMORY = "memory"
REASON_THREADS = "threads"
REASON_TPC_CAP = "threads-per-core cap"


class ProfileError(ValueError):
    pass


class UnderdeterminedError(ValueError):
    """Fewer observations than free parameters."""

    def __init__(self, free: Sequence[str], n_observations: int):
        self.free = list(free)
        self.n_observations = n_observations
        super().__init__(
            f"{n_observations} observation(s) cannot determine "
            f"{len(self.free)} free parameter(s): {', '.join(self.free)}"
        )


@dataclass(frozen=True)
class ApplicationProfile:
    sp_footprint: float = 900.0  # MiB
    shared_fraction: float = 0.3
    master_overhead: float = 0.0  # MiB
    mp_overhead: float = 0.0
    single_thread_rate: float = 1.0  # events/minute
    # ht_scaling[t-1] is the per-core speedup with t busy threads; entries
    # past the end repeat the last one
    ht_scaling: tuple[float, ...] = (1.0,)

    def __post_init__(self) -> None:
        object.__setattr__(self, "ht_scaling", tuple(float(s) for s in self.ht_scaling))
        if self.sp_footprint <= 0:
            raise ProfileError("sp_footprint must be > 0")
        if not 0.0 <= self.shared_fraction <= 1.0:
            raise ProfileError("shared_fraction must be in [0, 1]")
        if self.master_overhead < 0:
            raise ProfileError("master_overhead must be >= 0")
        if not 0.0 <= self.mp_overhead < 1.0:
            raise ProfileError("mp_overhead must be in [0, 1)")
        if self.single_thread_rate <= 0:
            raise ProfileError("single_thread_rate must be > 0")
        check_ht_scaling(self.ht_scaling)

    def sigma(self, threads_per_core: int) -> float:
        return kernels._kernels_py.sigma_at(self.ht_scaling, threads_per_core)


def check_ht_scaling(sigma: Sequence[float], tol: float = 1e-12) -> None:
    if not sigma or abs(sigma[0] - 1.0) > tol:
        raise ProfileError("ht_scaling must start with sigma(1) = 1")
    for t in range(1, len(sigma)):
        if sigma[t] < sigma[t - 1] - tol:
            raise ProfileError(f"ht_scaling must be non-decreasing (t={t + 1})")
        if sigma[t] / (t + 1) > sigma[t - 1] / t + tol:
            raise ProfileError(f"ht_scaling efficiency must not increase (t={t + 1})")


@dataclass(frozen=True)
class InstanceConfig:
    instances: int
    workers_per_instance: int = 1

    def __post_init__(self) -> None:
        if self.instances < 1 or self.workers_per_instance < 1:
            raise ValueError("instances and workers_per_instance must be >= 1")

    @property
    def threads(self) -> int:
        return self.instances * self.workers_per_instance


@dataclass(frozen=True)
class ThroughputEstimate:
    total_rate: float
    per_thread_rate: float
    peak_memory: float
    feasible: bool
    reasons: tuple[str, ...] = ()


def instance_memory(profile: ApplicationProfile, workers: int) -> float:
    """Resident memory of one instance with ``workers`` forked workers."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if workers == 1:
        return profile.sp_footprint
    private = (1.0 - profile.shared_fraction) * profile.sp_footprint
    return (profile.master_overhead
            + profile.shared_fraction * profile.sp_footprint
            + workers * private)


def configuration_memory(profile: ApplicationProfile, config: InstanceConfig,
                         spec: NodeSpec) -> float:
    per_instance = instance_memory(profile, config.workers_per_instance)
    return config.instances * (per_instance + spec.per_instance_overhead)


def infeasibility_reasons(spec: NodeSpec, threads: int, memory: float) -> tuple[str, ...]:
    reasons = []
    if memory > usable_memory(spec):
        reasons.append(REASON_MEMORY)
    if threads > logical_processors(spec):
        reasons.append(REASON_THREADS)
    cap = spec.unstable_beyond_threads_per_core
    if cap is not None and threads_per_core_needed(spec, threads) > cap:
        reasons.append(REASON_TPC_CAP)
    return tuple(reasons)


def configuration_throughput(profile: ApplicationProfile, config: InstanceConfig,
                             spec: NodeSpec) -> ThroughputEstimate:
    """Steady-state node throughput for ``config``.

    Infeasible configurations still get a rate (as if they ran); the
    ``feasible`` flag and ``reasons`` say why they would not.
    """
    threads = config.threads
    total = profile.single_thread_rate * kernels.core_rate_sum(
        threads, spec.physical_cores, profile.ht_scaling)
    if config.workers_per_instance > 1:
        total = total * (1.0 - profile.mp_overhead)
    memory = configuration_memory(profile, config, spec)
    reasons = infeasibility_reasons(spec, threads, memory)
    return ThroughputEstimate(
        total_rate=total,
        per_thread_rate=total / threads,
        peak_memory=memory,
        feasible=not reasons,
        reasons=reasons,
    )


# -- calibration -------------------------------------------------------------

_SIGMA_PARAM = re.compile(r"^ht_scaling\[(\d+)\]$")
RATE_PARAMS = ("single_thread_rate", "mp_overhead")


@dataclass(frozen=True)
class Observation:
    config: InstanceConfig
    total_rate: float


@dataclass(frozen=True)
class CalibrationResult:
    profile: ApplicationProfile
    free: tuple[str, ...]
    relative_errors: tuple[float, ...]

    @property
    def residual(self) -> float:
        """Sum of squared relative errors."""
        return float(sum(e * e for e in self.relative_errors))

    @property
    def max_relative_error(self) -> float:
        return max((abs(e) for e in self.relative_errors), default=0.0)


def _sigma_index(name: str) -> int | None:
    m = _SIGMA_PARAM.match(name)
    if m is None:
        return None
    t = int(m.group(1))
    if t < 2:
        raise ProfileError(f"{name}: sigma(1) is fixed at 1")
    return t


def with_params(profile: ApplicationProfile, names: Sequence[str],
                values: Sequence[float]) -> ApplicationProfile:
    """Copy of ``profile`` with the named rate parameters replaced."""
    updates = {}
    sigma = list(profile.ht_scaling)
    for name, value in zip(names, values):
        t = _sigma_index(name)
        if t is not None:
            while len(sigma) < t:
                sigma.append(sigma[-1])
            sigma[t - 1] = float(value)
        elif name in RATE_PARAMS:
            updates[name] = float(value)
        else:
            raise ProfileError(f"cannot calibrate parameter {name!r}")
    return replace(profile, ht_scaling=tuple(sigma), **updates)


def _initial_and_bounds(profile: ApplicationProfile, names: Sequence[str]):
    x0, lo, hi = [], [], []
    for name in names:
        t = _sigma_index(name)
        if t is not None:
            x0.append(max(profile.sigma(t), 1.0 + 0.1 * (t - 1)))
            lo.append(1.0)
            hi.append(float(t))
        elif name == "single_thread_rate":
            x0.append(profile.single_thread_rate)
            lo.append(1e-12)
            hi.append(np.inf)
        elif name == "mp_overhead":
            x0.append(min(profile.mp_overhead, 0.5) or 0.05)
            lo.append(0.0)
            hi.append(1.0 - 1e-12)
        else:
            raise ProfileError(f"cannot calibrate parameter {name!r}")
    x0 = [min(max(v, a), b) for v, a, b in zip(x0, lo, hi)]
    return np.array(x0), (np.array(lo), np.array(hi))


def relative_errors(profile: ApplicationProfile, observations: Sequence[Observation],
                    spec: NodeSpec) -> list[float]:
    errs = []
    for obs in observations:
        est = configuration_throughput(profile, obs.config, spec)
        errs.append(est.total_rate / obs.total_rate - 1.0)
    return errs


def calibrate(profile: ApplicationProfile, observations: Sequence[Observation],
              spec: NodeSpec, free: Sequence[str]) -> CalibrationResult:
    """Fit the ``free`` rate parameters of ``profile`` to measured node rates.

    Minimizes the sum of squared relative rate errors. Parameters not named
    in ``free`` keep their values from ``profile``. Fittable names are
    ``single_thread_rate``, ``mp_overhead`` and ``ht_scaling[t]`` for t >= 2.
    """
    free = tuple(free)
    if len(set(free)) != len(free):
        raise ProfileError("duplicate free parameter")
    if not free:
        errs = relative_errors(profile, observations, spec)
        return CalibrationResult(profile, free, tuple(errs))
    if len(observations) < len(free):
        raise UnderdeterminedError(free, len(observations))
    for obs in observations:
        if obs.total_rate <= 0:
            raise ValueError("observed rates must be > 0")

    def residuals(x):
        try:
            candidate = with_params(profile, free, x)
        except ProfileError:
            return np.full(len(observations), 1e3)
        return np.array(relative_errors(candidate, observations, spec))

    x0, bounds = _initial_and_bounds(profile, free)
    fit = least_squares(residuals, x0, bounds=bounds, xtol=1e-15, ftol=1e-15,
                        gtol=1e-15, max_nfev=10000)
    fitted = with_params(profile, free, fit.x)
    errs = relative_errors(fitted, observations, spec)
    if not all(math.isfinite(e) for e in errs):
        raise ValueError("calibration diverged")
    return CalibrationResult(fitted, free, tuple(errs))
