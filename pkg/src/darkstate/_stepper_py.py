"""Pure-numpy batched Strang stepper; contract-identical to the compiled kernel."""

from __future__ import annotations

import numpy as np


def run_paths(u_half, a_diags, incs, psi0, record_stride):
    """Propagate a batch of state vectors through diagonal-noise Strang steps.

    Per step: psi <- U_half @ (exp(-i * incs . a_diags) * (U_half @ psi)),
    then renormalize (drift is pure floating-point error and is tracked).

    u_half: (d, d) complex half-step propagator
    a_diags: (n_ops, d) real diagonals of the commuting noise generators
    incs: (n_batch, n_steps, n_ops) integrated noise increments
    psi0: (n_batch, d) complex start states
    record_stride: record every this-many steps (n_steps must divide evenly)

    Returns (states, max_drift): states has shape (n_batch, n_rec+1, d) with
    the start state at index 0; max_drift is max |norm-1| before renorm.
    """
    u_half = np.ascontiguousarray(u_half, dtype=np.complex128)
    a_diags = np.ascontiguousarray(a_diags, dtype=np.float64)
    incs = np.ascontiguousarray(incs, dtype=np.float64)
    psi = np.array(psi0, dtype=np.complex128, copy=True)
    nb, n_steps, n_ops = incs.shape
    d = u_half.shape[0]
    if n_steps % record_stride != 0:
        raise ValueError("n_steps must be a multiple of record_stride")
    if psi.shape != (nb, d) or a_diags.shape[0] != n_ops or a_diags.shape[1] != d:
        raise ValueError("inconsistent kernel input shapes")

    n_rec = n_steps // record_stride + 1
    states = np.empty((nb, n_rec, d), dtype=np.complex128)
    states[:, 0] = psi
    ut = u_half.T.copy()
    max_drift = 0.0
    for s in range(n_steps):
        psi = psi @ ut
        theta = incs[:, s, :] @ a_diags  # (nb, d)
        psi = psi * (np.cos(theta) - 1j * np.sin(theta))
        psi = psi @ ut
        norms = np.sqrt(np.einsum("bi,bi->b", psi.real, psi.real)
                        + np.einsum("bi,bi->b", psi.imag, psi.imag))
        drift = float(np.max(np.abs(norms - 1.0)))
        if drift > max_drift:
            max_drift = drift
        psi = psi / norms[:, None]
        nxt = s + 1
        if nxt % record_stride == 0:
            states[:, nxt // record_stride] = psi
    return states, max_drift
