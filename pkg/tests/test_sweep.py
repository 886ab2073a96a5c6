import csv
import io
import json

import pytest

from fatnode.node import NodeSpec
from fatnode.sweep import (
    CSV_COLUMNS,
    Grid,
    NoFeasibleConfiguration,
    SweepError,
    best_configuration,
    emit_table,
    run_sweep,
)
from fatnode.workload import ApplicationProfile, InstanceConfig, configuration_throughput


def parse_csv(blob):
    return list(csv.DictReader(io.StringIO(blob.decode())))


def argmax_rows(rows):
    """Independent full scan: max rate, then fewest threads, then most instances."""
    feasible = [r for r in rows if r["feasible"] == "true"]
    return max(feasible, key=lambda r: (float(r["total_rate_epm"]), -int(r["threads"]), int(r["instances"])))


def test_haswell_best(haswell):
    spec, prof = haswell
    result = run_sweep(spec, prof)
    best = best_configuration(result)
    assert (best.instances, best.workers) == (32, 1)
    assert best.total_rate_epm == pytest.approx(6.0, rel=0.02)


def test_knl_best(knl):
    spec, prof = knl
    result = run_sweep(spec, prof)
    best = best_configuration(result)
    assert (best.instances, best.workers, best.threads) == (8, 17, 136)
    assert best.total_rate_epm == pytest.approx(3.6, rel=0.02)
    sp = configuration_throughput(prof, InstanceConfig(85, 1), spec).total_rate
    assert 1.10 <= best.total_rate_epm / sp <= 1.20


def test_knl_rows_cover_grid_exactly_once(knl):
    spec, prof = knl
    result = run_sweep(spec, prof)
    keys = [(r.instances, r.workers) for r in result.rows]
    assert len(keys) == len(set(keys))
    expected = {(i, w) for i in range(1, 273) for w in range(1, 273) if i * w <= 272}
    assert set(keys) == expected


def test_single_point_grid(knl):
    spec, prof = knl
    result = run_sweep(spec, prof, Grid((1, 1), (1, 1)))
    assert len(result.rows) == 1
    assert result.best == result.rows[0]


def test_empty_grid(knl):
    with pytest.raises(SweepError):
        run_sweep(knl[0], knl[1], Grid((2, 1), (1, 1)))


def test_all_infeasible():
    spec = NodeSpec(4, 2, 4096, 1024)
    prof = ApplicationProfile(sp_footprint=5000.0)
    result = run_sweep(spec, prof)
    assert all(not r.feasible for r in result.rows)
    with pytest.raises(NoFeasibleConfiguration):
        best_configuration(result)


def test_tie_break_exhaustive():
    # flat sigma: hyperthreads add nothing, so many rows tie on rate
    spec = NodeSpec(4, 2, 1 << 20, per_instance_overhead=0)
    prof = ApplicationProfile(sp_footprint=100.0, ht_scaling=(1.0, 1.0))
    result = run_sweep(spec, prof)
    best = result.best
    tied = [r for r in result.rows if r.feasible and r.total_rate_epm == best.total_rate_epm]
    assert len(tied) > 1
    assert best.threads == min(r.threads for r in tied)
    for r in result.rows:
        if r.feasible and r is not best:
            assert (r.total_rate_epm, -r.threads, r.instances) < (best.total_rate_epm, -best.threads, best.instances)
    assert (best.instances, best.workers) == (4, 1)


def test_feasibility_reasons_are_named(knl):
    spec, prof = knl
    usable = spec.total_ram - spec.os_reserve
    for r in run_sweep(spec, prof).rows:
        need_cap = -(-r.threads // spec.physical_cores) > 2
        over_mem = r.peak_memory_mib > usable
        assert r.feasible == (not need_cap and not over_mem)
        assert ("threads-per-core cap" in r.reason) == need_cap
        assert ("memory" in r.reason) == over_mem


def test_threads_reason_when_grid_exceeds_nproc():
    spec = NodeSpec(2, 1, 1 << 20)
    prof = ApplicationProfile(sp_footprint=10.0)
    result = run_sweep(spec, prof, Grid((1, 3), (1, 1)))
    row = [r for r in result.rows if r.threads == 3][0]
    assert row.reason == "threads" and not row.feasible


def test_emit_csv_single_row(knl):
    result = run_sweep(knl[0], knl[1], Grid((1, 1), (1, 1)))
    lines = emit_table(result, "csv").decode().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 2


def test_emit_csv_scan_agrees_with_best(knl):
    result = run_sweep(*knl)
    rows = parse_csv(emit_table(result, "csv"))
    assert [(int(r["threads"]), int(r["instances"])) for r in rows] == sorted(
        (int(r["threads"]), int(r["instances"])) for r in rows)
    top = argmax_rows(rows)
    assert (int(top["instances"]), int(top["workers"])) == (8, 17)
    assert (result.best.instances, result.best.workers) == (8, 17)


def test_emit_json_mirrors_csv(knl):
    result = run_sweep(knl[0], knl[1], Grid((1, 10), (1, 10), 40))
    rows = json.loads(emit_table(result, "json"))
    csv_rows = parse_csv(emit_table(result, "csv"))
    assert [(r["instances"], r["workers"]) for r in rows] == [
        (int(r["instances"]), int(r["workers"])) for r in csv_rows]
    assert list(rows[0]) == list(CSV_COLUMNS)


def test_emit_unknown_format(knl):
    with pytest.raises(SweepError):
        emit_table(run_sweep(knl[0], knl[1], Grid((1, 1), (1, 1))), "xml")


def test_output_independent_of_evaluation_order(knl, backend):
    reference = emit_table(run_sweep(*knl, backend="python"))
    for parallel in (1, 3, 8):
        assert emit_table(run_sweep(*knl, parallel=parallel, backend=backend)) == reference


def test_per_thread_gap(haswell, knl):
    h = best_configuration(run_sweep(*haswell))
    k = best_configuration(run_sweep(*knl))
    assert 6 <= h.per_thread_rate_epm / k.per_thread_rate_epm <= 8
