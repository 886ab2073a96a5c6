"""Fat-node workload modeling and Pool-style job matching."""

__version__ = "0.1.0"

from .kernels import BACKEND
from .matcher import (
    Allocation,
    JobDescriptor,
    Mode,
    QueueDescriptor,
    allocation_size,
    can_match,
    pool_match,
    release,
)
from .node import HASWELL, KNL, NodeSpec, ProcessorSet, logical_processors, memory_per_thread, usable_memory
from .simulator import OomPolicy, SimConfig, SimJob, replay_check, run
from .sweep import Grid, best_configuration, emit_table, run_sweep
from .workload import (
    ApplicationProfile,
    InstanceConfig,
    Observation,
    calibrate,
    configuration_memory,
    configuration_throughput,
    instance_memory,
)

__all__ = [
    "Allocation", "ApplicationProfile", "BACKEND", "Grid", "HASWELL", "InstanceConfig",
    "JobDescriptor", "KNL", "Mode", "NodeSpec", "Observation", "OomPolicy", "ProcessorSet",
    "QueueDescriptor", "SimConfig", "SimJob", "allocation_size", "best_configuration",
    "calibrate", "can_match", "configuration_memory", "configuration_throughput",
    "emit_table", "instance_memory", "logical_processors", "memory_per_thread",
    "pool_match", "release", "replay_check", "run", "run_sweep", "usable_memory",
]
