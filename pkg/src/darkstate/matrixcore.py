"""Dense complex matrix primitives.

All operators in this package are plain numpy arrays of dtype complex128 in
row-major (C) order; a matrix of shape (rows, cols) is the only carrier type.
Vectorization follows the column-stacking convention vec(A X B) = (B^T (x) A)
vec(X), so superoperators built elsewhere act on vec(rho) by left
multiplication.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg


def as_matrix(a) -> np.ndarray:
    """Coerce to a 2-D complex128 array without copying when possible."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {m.shape}")
    return m


def dag(a: np.ndarray) -> np.ndarray:
    return np.conjugate(a.T)


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product, (p*m) x (q*n) blocks of a[i,j]*b."""
    return np.kron(a, b)


def is_hermitian(a: np.ndarray, tol: float = 1e-12) -> bool:
    a = np.asarray(a)
    if a.shape[0] != a.shape[1]:
        return False
    return float(np.max(np.abs(a - dag(a)))) <= tol


def expm(a: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring with Pade approximants.

    Works for arbitrary square complex matrices (superoperators included).
    For Hermitian inputs `expm_hermitian` provides an independent
    eigendecomposition route; the two agree to ~1e-13 relative error and the
    test suite holds them against each other.
    """
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"expm requires a square matrix, got {a.shape}")
    return scipy.linalg.expm(a)


def expm_hermitian(h: np.ndarray, factor: complex = 1.0) -> np.ndarray:
    """exp(factor * h) for Hermitian h via eigendecomposition.

    factor=-1j*t gives the unitary propagator e^{-i t h}.
    """
    h = as_matrix(h)
    if h.shape[0] != h.shape[1]:
        raise ValueError(f"expm_hermitian requires a square matrix, got {h.shape}")
    if not is_hermitian(h, tol=1e-10 * max(1.0, float(np.max(np.abs(h))))):
        raise ValueError("expm_hermitian requires a Hermitian matrix")
    w, v = np.linalg.eigh(h)
    return (v * np.exp(factor * w)) @ dag(v)


def vectorize(m: np.ndarray) -> np.ndarray:
    """Column-stacking vec: stacks columns of m into one vector."""
    m = as_matrix(m)
    return m.reshape(-1, order="F")


def devectorize(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.complex128).reshape(-1)
    if v.size != rows * cols:
        raise ValueError(f"cannot reshape length {v.size} into {rows}x{cols}")
    return v.reshape((rows, cols), order="F")


def partial_trace_ancilla(rho: np.ndarray, d_s: int, d_a: int) -> np.ndarray:
    """Trace out the second (ancilla) factor of a d_s*d_a composite state."""
    rho = as_matrix(rho)
    n = d_s * d_a
    if rho.shape != (n, n):
        raise ValueError(
            f"state of shape {rho.shape} does not factor as ({d_s}x{d_a})^2"
        )
    r4 = rho.reshape(d_s, d_a, d_s, d_a)
    return np.einsum("iaja->ij", r4)


def frobenius(a: np.ndarray) -> float:
    return float(np.linalg.norm(a))


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """(1/2)||a - b||_1 for Hermitian a, b."""
    d = as_matrix(a) - as_matrix(b)
    d = 0.5 * (d + dag(d))  # discard numerical anti-Hermitian dust
    w = np.linalg.eigvalsh(d)
    return 0.5 * float(np.sum(np.abs(w)))


def check_density_matrix(rho: np.ndarray, tol: float = 1e-10) -> None:
    """Raise ValueError unless rho is Hermitian, PSD and unit-trace within tol."""
    rho = as_matrix(rho)
    if rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if not is_hermitian(rho, tol):
        raise ValueError("density matrix is not Hermitian within tolerance")
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > tol:
        raise ValueError(f"density matrix trace {tr} deviates from 1")
    wmin = float(np.min(np.linalg.eigvalsh(0.5 * (rho + dag(rho)))))
    if wmin < -tol:
        raise ValueError(f"density matrix has negative eigenvalue {wmin}")
