# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled window-sampling kernel; see ``_kernels_py`` for the reference."""
from libc.stdint cimport uint8_t, uint64_t, int64_t

BACKEND = "cython"

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t STREAM = 0xD1B54A32D192ED03ULL
cdef double UNIT = 1.0 / 9007199254740992.0

cdef uint8_t CODE_TO_INDEX[8]
CODE_TO_INDEX[:] = [0, 1, 2, 4, 3, 5, 6, 7]


cdef inline uint64_t mix(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double uniform(uint64_t state, uint64_t j) nogil:
    return <double>(mix(state + (j + 1) * STREAM) >> 11) * UNIT


def simulate_outcomes(uint64_t key, int64_t start, uint8_t[::1] out,
                      const double[::1] cum_pmf, const double[::1] cum_cells,
                      double d_h, double d_a, double d_b):
    cdef Py_ssize_t n = out.shape[0]
    cdef Py_ssize_t n_pmf = cum_pmf.shape[0]
    cdef Py_ssize_t w, k, cell, npairs
    cdef uint64_t state
    cdef double u
    cdef int h, a, b
    with nogil:
        for w in range(n):
            state = mix(key + (<uint64_t>(start + w) + 1) * GOLDEN)
            u = uniform(state, 0)
            npairs = 0
            while npairs < n_pmf - 1 and u >= cum_pmf[npairs]:
                npairs += 1
            h = uniform(state, 1) < d_h
            a = uniform(state, 2) < d_a
            b = uniform(state, 3) < d_b
            for k in range(npairs):
                u = uniform(state, 4 + k)
                cell = 0
                while cell < 5 and u >= cum_cells[cell]:
                    cell += 1
                if cell <= 2:
                    h = 1
                if cell == 0 or cell == 3:
                    a = 1
                elif cell == 1 or cell == 4:
                    b = 1
            out[w] = CODE_TO_INDEX[a | (b << 1) | (h << 2)]
