"""Time the compiled and pure-Python grid kernels on the same inputs.

    python benchmarks/bench_kernels.py [--repeat N]

Reports the best-of-N wall time per backend and checks that both
backends return bit-identical arrays.
"""

import argparse
import timeit

import numpy as np

from fatnode import kernels
from fatnode.node import KNL, NodeSpec, usable_memory
from fatnode.sweep import Grid
from fatnode.workload import ApplicationProfile

PROFILE = ApplicationProfile(sp_footprint=900.0, shared_fraction=0.35, master_overhead=100.0,
                             mp_overhead=1 / 30, single_thread_rate=0.0445, ht_scaling=(1.0, 1.23, 1.35, 1.4))

CASES = [
    ("knl 68x4", KNL),
    ("synthetic 256x8", NodeSpec(256, 8, 1 << 21, 8192, unstable_beyond_threads_per_core=4)),
]


def kernel_args(spec):
    points = Grid.full(spec).points()
    inst = np.array([p[0] for p in points], dtype=np.int64)
    work = np.array([p[1] for p in points], dtype=np.int64)
    cap = spec.unstable_beyond_threads_per_core or 0
    return (inst, work, spec.physical_cores, spec.hyperthread_ways, np.array(PROFILE.ht_scaling),
            usable_memory(spec), spec.per_instance_overhead, PROFILE.sp_footprint,
            PROFILE.shared_fraction, PROFILE.master_overhead, PROFILE.mp_overhead,
            PROFILE.single_thread_rate, cap)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    names = ["python"] + (["cython"] if kernels.compiled_available() else [])
    if len(names) == 1:
        print("compiled extension not built; timing the Python backend only")
    print(f"{'case':<18}{'points':>10}" + "".join(f"{n + ' (ms)':>16}" for n in names) + f"{'speedup':>10}")
    for label, spec in CASES:
        call = kernel_args(spec)
        times, outputs = {}, {}
        for name in names:
            fn = kernels.get_backend(name).evaluate_grid
            outputs[name] = fn(*call)
            times[name] = min(timeit.repeat(lambda: fn(*call), number=1, repeat=args.repeat))
        if len(names) == 2:
            same = all(a.tobytes() == b.tobytes() for a, b in zip(outputs["python"], outputs["cython"]))
            assert same, "backends disagree"
        speed = f"{times['python'] / times['cython']:>9.1f}x" if "cython" in times else f"{'-':>10}"
        print(f"{label:<18}{len(call[0]):>10}" + "".join(f"{times[n] * 1e3:>16.3f}" for n in names) + speed)


if __name__ == "__main__":
    main()
