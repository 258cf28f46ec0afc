"""Collective spin operators and the model Hamiltonians.

Dimension d carries spin j = (d-1)/2; basis states are Jz eigenstates ordered
by ascending eigenvalue m = -j..j. Under the two-mode (Jordan-Schwinger)
mapping with N bosons, d = N + 1 and the state with all N bosons in the left
well sits at m = -N/2 (index 0).
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .matrixcore import kron


@dataclass(eq=False)
class SpinAlgebra:
    dim: int
    j: float
    jx: np.ndarray
    jy: np.ndarray
    jz: np.ndarray
    jplus: np.ndarray
    jminus: np.ndarray


@dataclass
class SystemParams:
    """Single-well-pair parameters: H = eta*Jz^2 - gamma*Jx - delta*Jz."""

    n_bosons: int = 1
    eta: float = 0.0
    gamma: float = 0.0
    delta: float = 0.0


@dataclass
class PlaquetteParams:
    """Raw four-well plaquette parameters (tunnelings, biases, interactions)."""

    t_s: float = 0.0
    t_a: float = 0.0
    mu_sl: float = 0.0
    mu_sr: float = 0.0
    mu_al: float = 0.0
    mu_ar: float = 0.0
    u_s: float = 0.0
    u_1: float = 0.0


@dataclass
class LaserParams:
    """Raman-coupling parameters for the laser-derived noise weights."""

    omega0: float
    g: float
    detuning: float
    phi0: float = 0.0


def make_spin(dim: int) -> SpinAlgebra:
    if dim < 2:
        raise ValueError(f"spin algebra needs dim >= 2, got {dim}")
    j = (dim - 1) / 2.0
    m = np.arange(dim) - j
    jz = np.diag(m).astype(np.complex128)
    jp = np.zeros((dim, dim), dtype=np.complex128)
    for i in range(dim - 1):
        jp[i + 1, i] = math.sqrt(j * (j + 1) - m[i] * (m[i] + 1))
    jm = jp.conj().T
    jx = 0.5 * (jp + jm)
    jy = -0.5j * (jp - jm)
    return SpinAlgebra(dim=dim, j=j, jx=jx, jy=jy, jz=jz, jplus=jp, jminus=jm)


def projector(alg: SpinAlgebra, ell: float) -> np.ndarray:
    """Rank-1 projector onto the Jz eigenstate with (signed) eigenvalue ell."""
    m = np.arange(alg.dim) - alg.j
    hits = np.nonzero(np.abs(m - ell) < 1e-9)[0]
    if hits.size != 1:
        raise ValueError(f"{ell} is not a Jz eigenvalue of dim-{alg.dim} spin")
    p = np.zeros((alg.dim, alg.dim), dtype=np.complex128)
    p[hits[0], hits[0]] = 1.0
    return p


def noon_state(n: int, sign: int = +1) -> np.ndarray:
    """(|N,0> + sign |0,N>)/sqrt(2) in the Jz basis: (e_0 + sign e_N)/sqrt(2)."""
    if n < 1:
        raise ValueError("NOON state needs n >= 1")
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    psi = np.zeros(n + 1, dtype=np.complex128)
    psi[0] = 1.0 / math.sqrt(2.0)
    psi[n] = sign / math.sqrt(2.0)
    return psi


def _well_pair_h(p: SystemParams) -> np.ndarray:
    alg = make_spin(p.n_bosons + 1)
    return p.eta * (alg.jz @ alg.jz) - p.gamma * alg.jx - p.delta * alg.jz


def build_hs(p: SystemParams) -> np.ndarray:
    return _well_pair_h(p)


def build_ha(p: SystemParams) -> np.ndarray:
    # Same operator form as the system pair; the bare ancilla Hamiltonian has
    # no tunneling term, which is the gamma=0 instance.
    return _well_pair_h(p)


def build_h0(hs: np.ndarray, ha: np.ndarray, alpha: float) -> np.ndarray:
    """Composite H0 = Hs (x) I + I (x) Ha + alpha Jz_S (x) Jz_A."""
    d_s, d_a = hs.shape[0], ha.shape[0]
    jz_s = make_spin(d_s).jz
    jz_a = make_spin(d_a).jz
    return (
        kron(hs, np.eye(d_a))
        + kron(np.eye(d_s), ha)
        + alpha * kron(jz_s, jz_a)
    )


def build_heff(hs: np.ndarray) -> np.ndarray:
    """Effective dark-sector Hamiltonian Hs - Jz (alpha = -1/ell case)."""
    return hs - make_spin(hs.shape[0]).jz


def build_plaquette(p: PlaquetteParams, n_bosons: int) -> tuple[np.ndarray, dict]:
    """Composite Hamiltonian of the four-well plaquette (both pairs carry
    n_bosons) plus the derived well-pair couplings."""
    derived = {
        "gamma_s": 2.0 * p.t_s,
        "gamma_a": 2.0 * p.t_a,
        "delta_s": p.mu_sr - p.mu_sl,
        "delta_a": p.mu_ar - p.mu_al,
        "eta": p.u_s,
        "alpha": -2.0 * p.u_1,
    }
    d = n_bosons + 1
    alg = make_spin(d)
    eye = np.eye(d)
    jz2 = alg.jz @ alg.jz
    h0 = (
        -derived["gamma_s"] * kron(alg.jx, eye)
        - derived["gamma_a"] * kron(eye, alg.jx)
        - derived["delta_s"] * kron(alg.jz, eye)
        - derived["delta_a"] * kron(eye, alg.jz)
        + derived["alpha"] * kron(alg.jz, alg.jz)
        + (derived["eta"] + derived["alpha"] / 2.0)
        * (kron(jz2, eye) + kron(eye, jz2))
    )
    return h0, derived


def laser_derived(p: LaserParams) -> dict:
    """Noise weights from the Raman-coupling parameters."""
    if p.detuning == 0.0:
        raise ValueError("detuning must be nonzero")
    if p.omega0 == 0.0:
        raise ValueError("omega0 must be nonzero")
    c_s = 2.0 * p.omega0**2 / p.detuning
    c_sa = (p.g / p.detuning) * math.cos(p.phi0)
    return {"c_s": c_s, "c_sa": c_sa, "alpha": c_sa / c_s}
