# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled event loop for continuous-time Markov chain windows.

Draws exponential holding times and jump targets directly from a numpy
BitGenerator stream (one next_double per holding time, one per jump), so the
pure-Python fallback in _pyloop.py consuming the same stream produces
bit-identical trajectories.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport log

from numpy.random cimport bitgen_t


def run_window(double[::1] occupancy,
               Py_ssize_t start_state,
               double duration,
               const long long[::1] indptr,
               const long long[::1] targets,
               const double[::1] cumrate,
               const double[::1] exit_rate,
               object bit_generator):
    """Advance one observation window; accumulates holding times in-place.

    Returns (final_state, event_count).
    """
    cdef const char* capsule_name = "BitGenerator"
    capsule = bit_generator.capsule
    if not PyCapsule_IsValid(capsule, capsule_name):
        raise ValueError("invalid BitGenerator capsule")
    cdef bitgen_t* rng = <bitgen_t*> PyCapsule_GetPointer(capsule, capsule_name)

    cdef Py_ssize_t x = start_state
    cdef double remaining = duration
    cdef double rate, u, dt, threshold
    cdef Py_ssize_t k, k0, k1
    cdef unsigned long long events = 0

    with bit_generator.lock:
        with nogil:
            while remaining > 0.0:
                rate = exit_rate[x]
                u = rng.next_double(rng.state)
                dt = -log(u) / rate
                if dt >= remaining:
                    occupancy[x] += remaining
                    break
                occupancy[x] += dt
                remaining -= dt
                u = rng.next_double(rng.state)
                threshold = u * rate
                k0 = indptr[x]
                k1 = indptr[x + 1]
                k = k1 - 1
                while k0 < k1 - 1:
                    if cumrate[k0] > threshold:
                        k = k0
                        break
                    k0 += 1
                x = <Py_ssize_t> targets[k]
                events += 1

    return x, events
