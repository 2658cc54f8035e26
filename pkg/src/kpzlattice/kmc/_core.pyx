# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled rejection-KMC kernel.

Mirrors ``_pycore.run_segment`` draw for draw: both consume uniforms from
the same bit generator in the same order, so a fixed seed gives
bit-identical trajectories on either backend.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport log
from numpy.random cimport bitgen_t


def run_segment(unsigned char[::1] state, const double[::1] rates, int radius,
                double t, double t_end, long long[::1] currents, object bit_generator,
                long long[::1] log_buf, Py_ssize_t log_pos):
    cdef Py_ssize_t L = state.shape[0]
    cdef Py_ssize_t log_cap = log_buf.shape[0]
    cdef bitgen_t *rng = <bitgen_t *> PyCapsule_GetPointer(bit_generator.capsule, "BitGenerator")
    cdef long long proposals = 0, accepted = 0
    cdef double u, rate, dL = <double> L
    cdef Py_ssize_t x, x1, site, j, width = 2 * radius + 2
    cdef long idx
    cdef unsigned char a, b
    with bit_generator.lock, nogil:
        while True:
            u = rng.next_double(rng.state)
            t += -log(1.0 - u) / dL
            if t > t_end:
                t = t_end
                break
            proposals += 1
            x = <Py_ssize_t> (rng.next_double(rng.state) * dL)
            if x >= L:
                x = L - 1
            x1 = x + 1
            if x1 == L:
                x1 = 0
            a = state[x]
            b = state[x1]
            if a == b:
                continue
            idx = 0
            for j in range(width):
                site = x - radius + j
                if site < 0:
                    site += L
                elif site >= L:
                    site -= L
                idx |= (<long> state[site]) << j
            rate = rates[idx]
            if rate <= 0.0:
                continue
            if rate < 1.0:
                if rng.next_double(rng.state) >= rate:
                    continue
            state[x] = b
            state[x1] = a
            if a == 1:
                currents[x] += 1
            else:
                currents[x] -= 1
            accepted += 1
            if log_pos < log_cap:
                log_buf[log_pos] = x
                log_pos += 1
    return t, proposals, accepted, log_pos
