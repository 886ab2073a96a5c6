"""The nine acceptance criteria, one test each.

Every test records a single PASS/FAIL line that is printed in the
``acceptance criteria`` section of the pytest summary.
"""

import functools
import itertools
import random
import time

import pytest

import conftest
from fatnode.config import node_from_dict, observation_from_dict, profile_from_dict, sim_from_dict
from fatnode.matcher import JobDescriptor, Mode, QueueDescriptor, pool_match, release
from fatnode.node import KNL, NodeSpec, threads_per_core_needed
from fatnode.simulator import Kind, SimConfig, SimJob, replay_check, run
from fatnode.sweep import Grid, best_configuration, emit_table, run_sweep
from fatnode.workload import InstanceConfig, calibrate, configuration_throughput
from conftest import load_preset
from oracles import reference_pool_match

SIM_PRESETS = ["knl-8x17", "knl-oom", "knl-mixed"]
SWEEP_PRESETS = ["haswell", "knl"]


def criterion(n, title):
    def wrap(fn):
        @functools.wraps(fn)
        def run_and_record(*args, **kwargs):
            t0 = time.perf_counter()
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                conftest.ACCEPTANCE[n] = f"C{n} FAIL  {title}: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
                raise
            elapsed = time.perf_counter() - t0
            conftest.ACCEPTANCE[n] = f"C{n} PASS  {title} ({detail}; {elapsed:.2f} s)"
        return run_and_record
    return wrap


@pytest.fixture(scope="module")
def calibrated():
    """Fit both node profiles from the bundled observation points."""
    fitted = {}
    for fit in load_preset("observations")["fits"]:
        node = node_from_dict(fit["node"])
        obs = [observation_from_dict(o, "obs") for o in fit["observations"]]
        res = calibrate(profile_from_dict(fit["profile"]), obs, node, fit["free"])
        assert res.max_relative_error < 0.01
        fitted[fit["name"]] = (node, res.profile)
    return fitted


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


@criterion(1, "Haswell best is 32 x 1 at 6.0 ev/min, 0.188 per thread")
def test_c1_haswell_reproduction(calibrated):
    node, prof = calibrated["haswell"]
    result, dt = timed(run_sweep, node, prof)
    best = best_configuration(result)
    assert (best.instances, best.workers) == (32, 1)
    assert best.total_rate_epm == pytest.approx(6.0, rel=0.02)
    assert best.per_thread_rate_epm == pytest.approx(0.188, rel=0.02)
    assert dt < 1.0
    return f"best {best.total_rate_epm:.3f}, per-thread {best.per_thread_rate_epm:.4f}"


@criterion(2, "Haswell 8 x 4 evaluates to 5.8 ev/min")
def test_c2_haswell_mp_point(calibrated):
    node, prof = calibrated["haswell"]
    est, dt = timed(configuration_throughput, prof, InstanceConfig(8, 4), node)
    assert est.feasible
    assert est.total_rate == pytest.approx(5.8, rel=0.02)
    assert dt < 1.0
    return f"{est.total_rate:.4f} ev/min"


@criterion(3, "KNL best is 8 x 17 (136 threads) at 3.6 ev/min, SP 85 x 1 at 3.2")
def test_c3_knl_reproduction(calibrated):
    node, prof = calibrated["knl"]
    result, dt = timed(run_sweep, node, prof)
    best = best_configuration(result)
    assert (best.instances, best.workers, best.threads) == (8, 17, 136)
    assert best.total_rate_epm == pytest.approx(3.6, rel=0.02)
    sp = configuration_throughput(prof, InstanceConfig(85, 1), node)
    assert sp.feasible
    assert sp.total_rate == pytest.approx(3.2, rel=0.02)
    ratio = best.total_rate_epm / sp.total_rate
    assert 1.10 <= ratio <= 1.20
    assert len(result.rows) <= 272 * 272
    assert dt < 5.0
    return f"best {best.total_rate_epm:.3f}, SP {sp.total_rate:.3f}, ratio {ratio:.3f}, {len(result.rows)} rows"


@criterion(4, "86 SP jobs on KNL: at least one oom_kill, steady concurrency 85")
def test_c4_oom_ceiling(calibrated):
    node, prof = calibrated["knl"]
    jobs = tuple(SimJob(JobDescriptor(f"sp{i:03d}", Mode.SINGLE_ONLY), 30) for i in range(90))
    config = SimConfig(node, QueueDescriptor(272), jobs, prof, horizon=1e5)
    (trace, report), dt = timed(run, config)
    kills = sum(e.kind is Kind.OOM_KILL for e in trace)
    assert kills >= 1
    # resident count after every timestamp up to the first completion
    first_done = min(e.t_min for e in trace if e.kind is Kind.JOB_FINISHED)
    resident, steady = set(), []
    for k, e in enumerate(trace):
        if e.kind is Kind.JOB_STARTED:
            resident.add(e.job_id)
        elif e.kind in (Kind.JOB_FINISHED, Kind.OOM_KILL):
            resident.discard(e.job_id)
        if e.t_min < first_done and (k + 1 == len(trace) or trace[k + 1].t_min != e.t_min):
            steady.append(len(resident))
    assert steady and set(steady) == {85}
    assert report.max_concurrency == 85
    assert dt < 5.0
    return f"{kills} oom_kill(s), concurrency {steady[-1]}"


KINDS = [dict(mode=Mode.SINGLE_ONLY),
         dict(mode=Mode.MULTI_ONLY, exact_processors=2),
         dict(mode=Mode.MULTI_ONLY, exact_processors=3),
         dict(mode=Mode.FLEXIBLE, max_processors=1),
         dict(mode=Mode.FLEXIBLE, max_processors=2),
         dict(mode=Mode.FLEXIBLE, max_processors=3),
         dict(mode=Mode.FLEXIBLE, max_processors=4),
         dict(mode=Mode.MULTI_ONLY, whole_node=True)]


def _exhaustive(spec, queue, max_len, table):
    n = 0
    for length in range(max_len + 1):
        for combo in itertools.product(range(len(KINDS)), repeat=length):
            jobs = [table[i][k] for i, k in enumerate(combo)]
            got = pool_match(jobs, queue, spec)
            ref, rejected, free = reference_pool_match(jobs, queue)
            assert {j: p.ids() for j, p in got.allocation.assigned.items()} == ref, combo
            assert [r.job_id for r in got.rejections] == rejected, combo
            assert got.allocation.free.ids() == free, combo
            n += 1
    return n


@criterion(5, "pool_match equals the brute-force allocator on every small queue")
def test_c5_matcher_oracle():
    table = [[JobDescriptor(f"j{i}", **kind) for kind in KINDS] for i in range(6)]
    t0 = time.perf_counter()
    # every queue of up to six jobs on a 12-processor node
    cases = _exhaustive(NodeSpec(6, 2, 1e6), QueueDescriptor(12), 6, table)
    # up to four jobs on every other node shape and under restrictive queues
    shapes = [(1, 1), (1, 2), (3, 1), (2, 2), (1, 4), (3, 2), (4, 2), (2, 4), (5, 2), (12, 1), (3, 4)]
    for cores, ways in shapes:
        nproc = cores * ways
        spec = NodeSpec(cores, ways, 1e6)
        queues = [QueueDescriptor(nproc), QueueDescriptor(nproc, max_concurrent_jobs=2),
                  QueueDescriptor(nproc, allow_single=False), QueueDescriptor(nproc, allow_multi=False),
                  QueueDescriptor(nproc, require_exact_count=True),
                  QueueDescriptor(nproc, require_job_type_tag=True, max_concurrent_jobs=3)]
        for queue in queues:
            cases += _exhaustive(spec, queue, 4, table)
    dt = time.perf_counter() - t0
    assert cases >= 10_000
    assert dt < 60.0
    return f"{cases} queues"


def _expected_size(job, got, nproc):
    if job.whole_node:
        return got == nproc
    if job.exact_processors is not None:
        return got == job.exact_processors
    if job.mode is Mode.SINGLE_ONLY:
        return got == 1
    return 1 <= got <= (job.max_processors or nproc)


@criterion(6, "10^5 random pool_match/release sequences keep the partition invariant")
def test_c6_partition_fuzz():
    rng = random.Random(20240611)
    t0 = time.perf_counter()
    shapes = [NodeSpec(c, w, 1e6) for c, w in ((2, 2), (4, 2), (3, 4), (8, 1), (6, 2), (16, 4))]
    sequences = 100_000
    serial = 0
    for _ in range(sequences):
        spec = rng.choice(shapes)
        nproc = spec.nproc
        queue = QueueDescriptor(nproc, max_concurrent_jobs=rng.choice([None, None, 2, 5]))
        alloc = None
        jobs_by_id = {}
        for _step in range(rng.randint(1, 3)):
            jobs = []
            for _ in range(rng.randint(0, 4)):
                serial += 1
                kind = dict(rng.choice(KINDS))
                if kind.get("max_processors"):
                    kind["max_processors"] = rng.randint(1, nproc)
                jobs.append(JobDescriptor(f"j{serial}", **kind))
            jobs_by_id.update((j.job_id, j) for j in jobs)
            alloc = pool_match(jobs, queue, spec, allocation=alloc).allocation
            held = list(alloc.assigned)
            for job_id in rng.sample(held, rng.randint(0, len(held))):
                alloc = release(alloc, job_id)
            # independent invariant check on plain integer sets
            seen = set()
            for job_id, procs in alloc.assigned.items():
                ids = set(procs.ids())
                assert not ids & seen
                assert _expected_size(jobs_by_id[job_id], len(ids), nproc)
                seen |= ids
            free = set(alloc.free.ids())
            assert not free & seen
            assert free | seen == set(range(nproc))
    dt = time.perf_counter() - t0
    assert dt < 60.0
    return f"{sequences} sequences"


@criterion(7, "replay_check on every simulation preset; sweep CSV independent of evaluation order")
def test_c7_determinism():
    for name in SIM_PRESETS:
        assert replay_check(sim_from_dict(load_preset(name))), name
    for name in SWEEP_PRESETS:
        d = load_preset(name)
        node, prof = node_from_dict(d["node"]), profile_from_dict(d["profile"])
        outputs = {emit_table(run_sweep(node, prof, parallel=p, backend=b))
                   for p in (1, 4) for b in conftest.BACKENDS}
        assert len(outputs) == 1, name
    return f"{len(SIM_PRESETS)} simulations, {len(SWEEP_PRESETS)} sweeps x backends {conftest.BACKENDS}"


@criterion(8, "Haswell/KNL best per-thread rate ratio in [6, 8]")
def test_c8_per_thread_gap(calibrated):
    h = best_configuration(run_sweep(*calibrated["haswell"]))
    k = best_configuration(run_sweep(*calibrated["knl"]))
    ratio = h.per_thread_rate_epm / k.per_thread_rate_epm
    assert 6 <= ratio <= 8
    return f"ratio {ratio:.3f}"


@criterion(9, "rows above 2 threads/core are infeasible, citing the cap")
def test_c9_threads_per_core_cap(calibrated):
    node, prof = calibrated["knl"]
    small = NodeSpec(4, 4, 1e6, unstable_beyond_threads_per_core=2)
    checked = 0
    for spec, grid in ((node, None), (small, Grid((1, 16), (1, 16)))):
        assert spec.unstable_beyond_threads_per_core == 2
        for row in run_sweep(spec, prof, grid).rows:
            over = threads_per_core_needed(spec, row.threads) > 2
            if over:
                assert not row.feasible
                assert "threads-per-core cap" in row.reason
                checked += 1
            else:
                assert "threads-per-core cap" not in row.reason
    assert checked > 0
    assert KNL.unstable_beyond_threads_per_core == 2
    return f"{checked} capped rows"
