# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of _kernels_py. Keep the floating-point operation order
identical so both backends produce bit-identical tables."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

DEF MEMORY = 1
DEF THREADS = 2
DEF TPC_CAP = 4


cdef inline double _sigma_at(const double[:] sigma, long t) nogil:
    cdef Py_ssize_t n = sigma.shape[0]
    if t <= 0:
        return 0.0
    if t < n:
        return sigma[t - 1]
    return sigma[n - 1]


cdef inline double _core_rate_sum(long threads, long cores, const double[:] sigma) nogil:
    cdef long base = threads // cores
    cdef long extra = threads - base * cores
    cdef double hi = extra * _sigma_at(sigma, base + 1)
    cdef double lo = (cores - extra) * _sigma_at(sigma, base)
    return hi + lo


def core_rate_sum(long threads, long cores, sigma):
    cdef double[:] s = np.ascontiguousarray(sigma, dtype=np.float64)
    return _core_rate_sum(threads, cores, s)


def evaluate_grid(instances, workers, long cores, long ways, sigma,
                  double usable, double overhead, double footprint,
                  double shared, double master, double mp_overhead,
                  double rate, long tpc_cap):
    cdef const long long[:] inst_v = np.ascontiguousarray(instances, dtype=np.int64)
    cdef const long long[:] work_v = np.ascontiguousarray(workers, dtype=np.int64)
    cdef double[:] s = np.ascontiguousarray(sigma, dtype=np.float64)
    cdef Py_ssize_t n = inst_v.shape[0]
    memory_a = np.empty(n)
    total_a = np.empty(n)
    per_a = np.empty(n)
    flags_a = np.zeros(n, dtype=np.int64)
    cdef double[:] memory = memory_a
    cdef double[:] total = total_a
    cdef double[:] per_thread = per_a
    cdef long long[:] flags = flags_a
    cdef long nproc = cores * ways
    cdef double private = (1.0 - shared) * footprint
    cdef Py_ssize_t k
    cdef long inst, w, threads, f
    cdef double per_inst, mem, tot
    with nogil:
        for k in range(n):
            inst = inst_v[k]
            w = work_v[k]
            threads = inst * w
            if w == 1:
                per_inst = footprint
            else:
                per_inst = master + shared * footprint + w * private
            mem = inst * (per_inst + overhead)
            tot = rate * _core_rate_sum(threads, cores, s)
            if w > 1:
                tot = tot * (1.0 - mp_overhead)
            memory[k] = mem
            total[k] = tot
            per_thread[k] = tot / threads
            f = 0
            if mem > usable:
                f = f | MEMORY
            if threads > nproc:
                f = f | THREADS
            if tpc_cap > 0 and (threads + cores - 1) // cores > tpc_cap:
                f = f | TPC_CAP
            flags[k] = f
    return memory_a, total_a, per_a, flags_a
