"""JSON config schemas for nodes, profiles, queues, jobs and simulations."""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any

from .matcher import JobDescriptor, Mode, QueueDescriptor
from .node import DEFAULT_PER_INSTANCE_OVERHEAD, NodeSpec
from .simulator import SimConfig, SimJob
from .sweep import Grid
from .workload import ApplicationProfile, InstanceConfig, Observation

PRESET_ENV = "FATNODE_PRESET_DIR"


class ConfigError(ValueError):
    """Invalid config; the message names the offending key or position."""


def load_json(path: str | os.PathLike) -> Any:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def preset_dir() -> Path:
    env = os.environ.get(PRESET_ENV)
    if env:
        return Path(env)
    return Path(__file__).parent / "presets"


def preset_path(name: str) -> Path:
    fname = name if name.endswith(".json") else name + ".json"
    path = preset_dir() / fname
    if not path.is_file():
        available = sorted(p.stem for p in preset_dir().glob("*.json"))
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(available)}")
    return path


def _section(obj: Any, where: str) -> dict:
    if obj is None:
        parent, _, key = where.rpartition(".")
        raise ConfigError(f"{parent or 'config'}: missing required key '{key}'")
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    return obj


def _get(d: dict, key: str, where: str, kind, default: Any = ...):
    if key not in d or d[key] is None:
        if default is ...:
            raise ConfigError(f"{where}: missing required key '{key}'")
        return default
    value = d[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is bool and not isinstance(value, bool):
        raise ConfigError(f"{where}.{key}: expected true/false")
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"{where}.{key}: expected an integer")
    if kind is float and not isinstance(value, float):
        raise ConfigError(f"{where}.{key}: expected a number")
    if kind is str and not isinstance(value, str):
        raise ConfigError(f"{where}.{key}: expected a string")
    return value


def _build(where: str, factory, **kwargs):
    try:
        return factory(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def node_from_dict(obj: Any, where: str = "node") -> NodeSpec:
    d = _section(obj, where)
    return _build(
        where, NodeSpec,
        physical_cores=_get(d, "physical_cores", where, int),
        hyperthread_ways=_get(d, "hyperthread_ways", where, int),
        total_ram=_get(d, "total_ram_mib", where, float),
        os_reserve=_get(d, "os_reserve_mib", where, float, 0.0),
        per_instance_overhead=_get(d, "per_instance_overhead_mib", where, float,
                                   DEFAULT_PER_INSTANCE_OVERHEAD),
        unstable_beyond_threads_per_core=_get(d, "unstable_beyond_threads_per_core", where, int, None),
        name=_get(d, "name", where, str, ""),
    )


def node_to_dict(spec: NodeSpec) -> dict:
    out = {
        "physical_cores": spec.physical_cores,
        "hyperthread_ways": spec.hyperthread_ways,
        "total_ram_mib": spec.total_ram,
        "os_reserve_mib": spec.os_reserve,
        "per_instance_overhead_mib": spec.per_instance_overhead,
    }
    if spec.unstable_beyond_threads_per_core is not None:
        out["unstable_beyond_threads_per_core"] = spec.unstable_beyond_threads_per_core
    if spec.name:
        out["name"] = spec.name
    return out


def profile_from_dict(obj: Any, where: str = "profile") -> ApplicationProfile:
    d = _section(obj, where)
    sigma = d.get("ht_scaling", [1.0])
    if not isinstance(sigma, list) or not sigma or not all(
            isinstance(s, (int, float)) and not isinstance(s, bool) for s in sigma):
        raise ConfigError(f"{where}.ht_scaling: expected a non-empty array of numbers")
    return _build(
        where, ApplicationProfile,
        sp_footprint=_get(d, "sp_footprint_mib", where, float),
        shared_fraction=_get(d, "shared_fraction", where, float, 0.3),
        master_overhead=_get(d, "master_overhead_mib", where, float, 0.0),
        mp_overhead=_get(d, "mp_overhead", where, float, 0.0),
        single_thread_rate=_get(d, "single_thread_rate_epm", where, float),
        ht_scaling=tuple(float(s) for s in sigma),
    )


def profile_to_dict(profile: ApplicationProfile) -> dict:
    return {
        "sp_footprint_mib": profile.sp_footprint,
        "shared_fraction": profile.shared_fraction,
        "master_overhead_mib": profile.master_overhead,
        "mp_overhead": profile.mp_overhead,
        "single_thread_rate_epm": profile.single_thread_rate,
        "ht_scaling": list(profile.ht_scaling),
    }


def queue_from_dict(obj: Any, where: str = "queue") -> QueueDescriptor:
    d = _section(obj, where)
    return _build(
        where, QueueDescriptor,
        slot_processors=_get(d, "slot_processors", where, int),
        allow_single=_get(d, "allow_single", where, bool, True),
        allow_multi=_get(d, "allow_multi", where, bool, True),
        require_job_type_tag=_get(d, "require_job_type_tag", where, bool, False),
        require_exact_count=_get(d, "require_exact_count", where, bool, False),
        whole_node_only=_get(d, "whole_node_only", where, bool, False),
        max_concurrent_jobs=_get(d, "max_concurrent_jobs", where, int, None),
    )


def job_from_dict(obj: Any, where: str) -> JobDescriptor:
    d = _section(obj, where)
    mode = _get(d, "mode", where, str, Mode.SINGLE_ONLY.value)
    if mode not in {m.value for m in Mode}:
        raise ConfigError(f"{where}.mode: expected one of single_only, multi_only, flexible")
    return _build(
        where, JobDescriptor,
        job_id=str(_get(d, "job_id", where, object)),
        mode=Mode(mode),
        exact_processors=_get(d, "exact_processors", where, int, None),
        max_processors=_get(d, "max_processors", where, int, None),
        whole_node=_get(d, "whole_node", where, bool, False),
        memory_hint=_get(d, "memory_hint", where, float, None),
    )


def expand_jobs(items: Any, where: str = "jobs") -> list[dict]:
    """Expand ``{"count": n, "template": {...}}`` entries into n job objects.

    Job ids of expanded entries are ``<job_id>-<k>`` with k from 0.
    """
    if not isinstance(items, list):
        raise ConfigError(f"{where}: expected an array")
    out = []
    for k, item in enumerate(items):
        item = _section(item, f"{where}[{k}]")
        if "count" in item:
            n = _get(item, "count", f"{where}[{k}]", int)
            tmpl = _section(item.get("template"), f"{where}[{k}].template")
            base = _get(tmpl, "job_id", f"{where}[{k}].template", object)
            width = len(str(max(n - 1, 0)))
            for j in range(n):
                out.append(dict(tmpl, job_id=f"{base}-{j:0{width}d}"))
        else:
            out.append(item)
    return out


def jobs_from_list(items: Any, where: str = "jobs") -> list[JobDescriptor]:
    return [job_from_dict(d, f"{where}[{k}]") for k, d in enumerate(expand_jobs(items, where))]


def grid_from_dict(obj: Any, spec: NodeSpec, where: str = "grid") -> Grid:
    full = Grid.full(spec)
    if obj is None:
        return full
    d = _section(obj, where)

    def bounds(key, default):
        v = d.get(key, list(default))
        if (not isinstance(v, list) or len(v) != 2
                or not all(isinstance(x, int) and not isinstance(x, bool) for x in v)):
            raise ConfigError(f"{where}.{key}: expected [min, max] integers")
        if v[0] < 1 or v[1] < v[0]:
            raise ConfigError(f"{where}.{key}: need 1 <= min <= max")
        return (v[0], v[1])

    return Grid(bounds("instances", full.instances), bounds("workers", full.workers),
                _get(d, "max_threads", where, int, full.max_threads))


def sim_from_dict(obj: Any, where: str = "config") -> SimConfig:
    d = _section(obj, where)
    node = node_from_dict(d.get("node"), "node")
    queue = queue_from_dict(d.get("queue"), "queue")
    default_profile = profile_from_dict(d["profile"]) if d.get("profile") is not None else None
    jobs = []
    for k, item in enumerate(expand_jobs(d.get("jobs", []))):
        w = f"jobs[{k}]"
        desc = job_from_dict(item, w)
        prof = profile_from_dict(item["profile"], f"{w}.profile") if item.get("profile") else None
        jobs.append(SimJob(
            desc,
            events_requested=_get(item, "events_requested", w, int),
            profile=prof,
            arrival=_get(item, "arrival_min", w, float, 0.0),
        ))
    policy = _get(d, "oom_policy", where, str, "kill_largest")
    if policy not in ("kill_largest", "kill_newest"):
        raise ConfigError(f"{where}.oom_policy: expected kill_largest or kill_newest")
    cfg = SimConfig(
        node=node,
        queue=queue,
        jobs=tuple(jobs),
        profile=default_profile,
        seed=_get(d, "seed", where, int, 0),
        oom_policy=policy,
        horizon=_get(d, "horizon_min", where, float),
        arrival_jitter=_get(d, "arrival_jitter_min", where, float, 0.0),
    )
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    return cfg


def observation_from_dict(obj: Any, where: str) -> Observation:
    d = _section(obj, where)
    cfg = _build(where, InstanceConfig,
                 instances=_get(d, "instances", where, int),
                 workers_per_instance=_get(d, "workers", where, int, 1))
    rate = _get(d, "total_rate_epm", where, float)
    if rate <= 0:
        raise ConfigError(f"{where}.total_rate_epm: must be > 0")
    return Observation(cfg, rate)
