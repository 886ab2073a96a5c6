"""Pure-Python reference kernels. Arithmetic order must match _kernels.pyx."""

import numpy as np

MEMORY = 1
THREADS = 2
TPC_CAP = 4


def sigma_at(sigma, t):
    if t <= 0:
        return 0.0
    n = len(sigma)
    return sigma[(t if t < n else n) - 1]


def core_rate_sum(threads, cores, sigma):
    """Sum of per-core speedups with ``threads`` spread core-major."""
    base, extra = divmod(threads, cores)
    hi = extra * sigma_at(sigma, base + 1)
    lo = (cores - extra) * sigma_at(sigma, base)
    return hi + lo


def evaluate_grid(instances, workers, cores, ways, sigma, usable, overhead,
                  footprint, shared, master, mp_overhead, rate, tpc_cap):
    n = len(instances)
    memory = np.empty(n)
    total = np.empty(n)
    per_thread = np.empty(n)
    flags = np.zeros(n, dtype=np.int64)
    nproc = cores * ways
    sigma = [float(s) for s in sigma]
    private = (1.0 - shared) * footprint
    for k in range(n):
        inst = int(instances[k])
        w = int(workers[k])
        threads = inst * w
        if w == 1:
            per_inst = footprint
        else:
            per_inst = master + shared * footprint + w * private
        mem = inst * (per_inst + overhead)
        tot = rate * core_rate_sum(threads, cores, sigma)
        if w > 1:
            tot = tot * (1.0 - mp_overhead)
        memory[k] = mem
        total[k] = tot
        per_thread[k] = tot / threads
        f = 0
        if mem > usable:
            f |= MEMORY
        if threads > nproc:
            f |= THREADS
        if tpc_cap > 0 and -(-threads // cores) > tpc_cap:
            f |= TPC_CAP
        flags[k] = f
    return memory, total, per_thread, flags
