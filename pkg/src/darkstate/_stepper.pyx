# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled batched Strang stepper; contract-identical to _stepper_py."""

import numpy as np

from libc.math cimport cos, sin, sqrt, fabs


def run_paths(object u_half, object a_diags, object incs, object psi0,
              Py_ssize_t record_stride):
    """Propagate a batch of state vectors through diagonal-noise Strang steps.

    Same inputs and outputs as the pure-python fallback: per step
    psi <- U_half @ (exp(-i * incs . a_diags) * (U_half @ psi)), renormalized;
    returns (states, max_drift) with the start state at record index 0.
    """
    u_arr = np.ascontiguousarray(u_half, dtype=np.complex128)
    a_arr = np.ascontiguousarray(a_diags, dtype=np.float64)
    i_arr = np.ascontiguousarray(incs, dtype=np.float64)
    psi_arr = np.array(psi0, dtype=np.complex128, copy=True)

    cdef double complex[:, ::1] u = u_arr
    cdef double[:, ::1] a = a_arr
    cdef double[:, :, ::1] w = i_arr
    cdef double complex[:, ::1] psi = psi_arr

    cdef Py_ssize_t nb = w.shape[0], n_steps = w.shape[1], n_ops = w.shape[2]
    cdef Py_ssize_t d = u.shape[0]
    if n_steps % record_stride != 0:
        raise ValueError("n_steps must be a multiple of record_stride")
    if psi.shape[0] != nb or psi.shape[1] != d or a.shape[0] != n_ops or a.shape[1] != d:
        raise ValueError("inconsistent kernel input shapes")

    cdef Py_ssize_t n_rec = n_steps // record_stride + 1
    states_arr = np.empty((nb, n_rec, d), dtype=np.complex128)
    cdef double complex[:, :, ::1] states = states_arr
    tmp_arr = np.empty(d, dtype=np.complex128)
    cdef double complex[::1] tmp = tmp_arr

    cdef double max_drift = 0.0, theta, nrm, drift, inv
    cdef double complex acc, ph
    cdef Py_ssize_t b, s, i, k

    for b in range(nb):
        for i in range(d):
            states[b, 0, i] = psi[b, i]
        for s in range(n_steps):
            for i in range(d):
                acc = 0
                for k in range(d):
                    acc = acc + u[i, k] * psi[b, k]
                tmp[i] = acc
            for i in range(d):
                theta = 0.0
                for k in range(n_ops):
                    theta = theta + w[b, s, k] * a[k, i]
                ph = cos(theta) - 1j * sin(theta)
                tmp[i] = tmp[i] * ph
            for i in range(d):
                acc = 0
                for k in range(d):
                    acc = acc + u[i, k] * tmp[k]
                psi[b, i] = acc
            nrm = 0.0
            for i in range(d):
                nrm = nrm + psi[b, i].real * psi[b, i].real \
                    + psi[b, i].imag * psi[b, i].imag
            nrm = sqrt(nrm)
            drift = fabs(nrm - 1.0)
            if drift > max_drift:
                max_drift = drift
            inv = 1.0 / nrm
            for i in range(d):
                psi[b, i] = psi[b, i] * inv
            if (s + 1) % record_stride == 0:
                for i in range(d):
                    states[b, (s + 1) // record_stride, i] = psi[b, i]
    return states_arr, max_drift
