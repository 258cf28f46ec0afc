"""GKSL generators built from commuting Hermitian jump operators.

A generator is stored as a Hamiltonian plus a list of weighted cross terms
(w, A_i, A_j), each acting as

    rho  ->  w * (A_i rho A_j - {A_j A_i, rho} / 2).

For the correlated-dephasing pair the jump operators are A1 = Jz_S (x) I,
A2 = I (x) Jz_A, A3 = Jz_S (x) Jz_A, weighted by the 3x3 correlation matrix.
`assemble_generator` writes out all nine weighted cross terms directly;
`assemble_split_form` builds the same map from composite operators
O1 = sqrt(lam) Jz_S (x) (I + alpha Jz_A), the ancilla-sided partner group,
and the collective sum/difference pair O+/-. Both assemblies agree as
superoperator matrices to float precision; the split form keeps the
dark-state mechanism visible (each composite dissipator annihilates
rhoS (x) P_ell at alpha = -1/ell on its own).
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy.integrate import solve_ivp

from . import matrixcore as mc
from .noise import CorrelationMatrix
from .spinops import SpinAlgebra, build_heff, make_spin, projector

Term = tuple[float, np.ndarray, np.ndarray]


@dataclass(eq=False)
class GkslGenerator:
    """Dissipative generator: -i[h0, .] plus weighted cross terms.

    Treated as frozen after assembly; the superoperator matrix is cached on
    first use and safe to share across threads.
    """

    dim: int
    h0: np.ndarray
    terms: list[Term] = field(default_factory=list)
    super: np.ndarray | None = None

    def __post_init__(self):
        self.h0 = mc.as_matrix(self.h0)
        if self.h0.shape != (self.dim, self.dim):
            raise ValueError("h0 shape does not match dim")
        if not mc.is_hermitian(self.h0, tol=1e-10):
            raise ValueError("h0 must be Hermitian")
        for w, ai, aj in self.terms:
            if ai.shape != (self.dim, self.dim) or aj.shape != (self.dim, self.dim):
                raise ValueError("jump operator shape does not match dim")

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Action on a density matrix, without materializing the superoperator."""
        out = -1j * (self.h0 @ rho - rho @ self.h0)
        for w, ai, aj in self.terms:
            aji = aj @ ai
            out += w * (ai @ rho @ aj - 0.5 * (aji @ rho + rho @ aji))
        return out

    def superoperator(self) -> np.ndarray:
        """n^2 x n^2 matrix on column-stacked density matrices (cached)."""
        if self.super is None:
            n = self.dim
            eye = np.eye(n, dtype=complex)
            sup = -1j * (np.kron(eye, self.h0) - np.kron(self.h0.T, eye))
            for w, ai, aj in self.terms:
                aji = aj @ ai
                sup += w * (
                    np.kron(aj.T, ai)
                    - 0.5 * np.kron(eye, aji)
                    - 0.5 * np.kron(aji.T, eye)
                )
            self.super = sup
        return self.super


def dissipator(o: np.ndarray) -> GkslGenerator:
    """The map rho -> O rho O^dag - {O^dag O, rho}/2 for Hermitian O."""
    o = mc.as_matrix(o)
    if o.shape[0] != o.shape[1]:
        raise ValueError("dissipator needs a square operator")
    n = o.shape[0]
    return GkslGenerator(dim=n, h0=np.zeros((n, n), dtype=complex), terms=[(1.0, o, o)])


def cross_term(weight: float, a_i: np.ndarray, a_j: np.ndarray) -> GkslGenerator:
    """Single weighted cross term w*(A_i rho A_j - {A_j A_i, rho}/2)."""
    a_i, a_j = mc.as_matrix(a_i), mc.as_matrix(a_j)
    if a_i.shape != a_j.shape or a_i.shape[0] != a_i.shape[1]:
        raise ValueError("cross term needs square operators of equal shape")
    n = a_i.shape[0]
    return GkslGenerator(
        dim=n, h0=np.zeros((n, n), dtype=complex), terms=[(float(weight), a_i, a_j)]
    )


def _jump_triple(spin_s: SpinAlgebra, spin_a: SpinAlgebra):
    eye_s = np.eye(spin_s.dim, dtype=complex)
    eye_a = np.eye(spin_a.dim, dtype=complex)
    a1 = mc.kron(spin_s.jz, eye_a)
    a2 = mc.kron(eye_s, spin_a.jz)
    a3 = mc.kron(spin_s.jz, spin_a.jz)
    return a1, a2, a3


def _check_h0(h0: np.ndarray, dim: int) -> np.ndarray:
    h0 = mc.as_matrix(h0)
    if h0.shape != (dim, dim):
        raise ValueError(
            f"h0 has shape {h0.shape}, expected ({dim}, {dim}) for the product space"
        )
    return h0


def assemble_generator(
    corr: CorrelationMatrix,
    spin_s: SpinAlgebra,
    spin_a: SpinAlgebra,
    h0: np.ndarray,
) -> GkslGenerator:
    """All nine weighted cross terms over (A1, A2, A3) plus -i[h0, .]."""
    dim = spin_s.dim * spin_a.dim
    h0 = _check_h0(h0, dim)
    ops = _jump_triple(spin_s, spin_a)
    terms: list[Term] = []
    for i in range(3):
        for j in range(3):
            w = float(corr.m[i, j])
            if w != 0.0:
                terms.append((w, ops[i], ops[j]))
    return GkslGenerator(dim=dim, h0=h0, terms=terms)


def assemble_split_form(
    corr: CorrelationMatrix,
    spin_s: SpinAlgebra,
    spin_a: SpinAlgebra,
    h0: np.ndarray,
) -> GkslGenerator:
    """Same map from composite operators; needs the rank-1 (lam, alpha) form.

    The system-sided dissipator uses O1 = sqrt(lam) Jz_S (x) (I + alpha Jz_A)
    whole. Its ancilla-sided partner is entered as the three remaining cross
    terms (A2,A2), (A2,A3), (A3,A2) -- the (A3,A3) piece already lives inside
    the O1 dissipator, so repeating it would double-count. The collective
    pair enters as +dissipator(O+) - dissipator(O-), which reduces to the
    (A1,A2)+(A2,A1) cross terms.
    """
    if corr.lam is None or corr.alpha is None:
        raise ValueError("split form is defined for the rank-1 (lam, alpha) matrix")
    lam, alpha = corr.lam, corr.alpha
    dim = spin_s.dim * spin_a.dim
    h0 = _check_h0(h0, dim)
    a1, a2, a3 = _jump_triple(spin_s, spin_a)
    o1 = math.sqrt(lam) * (a1 + alpha * a3)
    root = math.sqrt(lam / 2.0)
    o_plus = root * (a1 + a2)
    o_minus = root * (a1 - a2)
    terms: list[Term] = [(1.0, o1, o1), (lam, a2, a2)]
    if alpha != 0.0:
        terms += [(lam * alpha, a2, a3), (lam * alpha, a3, a2)]
    terms += [(1.0, o_plus, o_plus), (-1.0, o_minus, o_minus)]
    return GkslGenerator(dim=dim, h0=h0, terms=terms)


def add_case_study_terms(
    gen: GkslGenerator,
    corr: CorrelationMatrix,
    spin_s: SpinAlgebra,
    spin_a: SpinAlgebra,
) -> GkslGenerator:
    """Append the quadratic-collective cross terms of the plaquette setting.

    K = ((Jz_S)^2 (x) I + I (x) (Jz_A)^2) / 2 couples to the linear channels
    with weight lam*alpha and to itself with lam*alpha^2. K commutes with
    every A_i, so the extended generator stays within the commuting-jump
    family. At alpha = 0 the generator is returned unchanged.
    """
    if corr.lam is None or corr.alpha is None:
        raise ValueError("case-study terms are defined for the rank-1 matrix")
    lam, alpha = corr.lam, corr.alpha
    if gen.dim != spin_s.dim * spin_a.dim:
        raise ValueError("generator dimension does not match the spin pair")
    if alpha == 0.0:
        return GkslGenerator(dim=gen.dim, h0=gen.h0, terms=list(gen.terms))
    a1, a2, _ = _jump_triple(spin_s, spin_a)
    eye_s = np.eye(spin_s.dim, dtype=complex)
    eye_a = np.eye(spin_a.dim, dtype=complex)
    k = 0.5 * (mc.kron(spin_s.jz @ spin_s.jz, eye_a) + mc.kron(eye_s, spin_a.jz @ spin_a.jz))
    extra: list[Term] = [
        (lam * alpha, a1, k),
        (lam * alpha, k, a1),
        (lam * alpha, a2, k),
        (lam * alpha, k, a2),
        (lam * alpha**2, k, k),
    ]
    return GkslGenerator(dim=gen.dim, h0=gen.h0, terms=list(gen.terms) + extra)


def dark_state_residual(gen: GkslGenerator, rho_s: np.ndarray, ell: float) -> float:
    """Frobenius norm of the dissipative action on rhoS (x) P_ell.

    The full generator action minus the h0 commutator; vanishes (to float
    precision) exactly when every dissipative channel is dark on the sector,
    which for the rank-1 protocol happens at alpha = -1/ell.
    """
    rho_s = mc.as_matrix(rho_s)
    d_s = rho_s.shape[0]
    if gen.dim % d_s != 0:
        raise ValueError("system dimension does not divide the generator dimension")
    d_a = gen.dim // d_s
    p_ell = projector(make_spin(d_a), ell)
    rho = mc.kron(rho_s, p_ell)
    resid = gen.apply(rho) + 1j * (gen.h0 @ rho - rho @ gen.h0)
    return mc.frobenius(resid)


def reduce_system(
    corr: CorrelationMatrix, spin_s: SpinAlgebra, hs: np.ndarray
) -> GkslGenerator:
    """Single-system generator -i[hs, .] + lam * dissipator(Jz); alpha must be 0.

    With the interaction channel off, tracing the composite evolution from
    rhoS (x) P_ell over the ancilla leaves exactly this map.
    """
    if corr.lam is None or corr.alpha is None:
        raise ValueError("reduce_system needs the rank-1 (lam, alpha) matrix")
    if corr.alpha != 0.0:
        raise ValueError("reduce_system is only valid at alpha = 0")
    hs = mc.as_matrix(hs)
    if hs.shape != (spin_s.dim, spin_s.dim):
        raise ValueError("hs shape does not match the system spin")
    return GkslGenerator(
        dim=spin_s.dim, h0=hs, terms=[(corr.lam, spin_s.jz, spin_s.jz)]
    )


def block_reduced_generator(
    spin_s: SpinAlgebra, hs: np.ndarray, lam: float, alpha: float, ell: float
) -> GkslGenerator:
    """System-only generator on the ancilla eigenvalue-ell block.

    Every jump operator is diagonal on the ancilla side, so an initial
    rhoS (x) P_ell stays in its block whenever the bare ancilla Hamiltonian
    is Jz_A-diagonal; there the composite map acts as

        -i[hs + alpha*ell*Jz, .] + lam*(1 + alpha*ell)^2 * dissipator(Jz).

    Exact, not approximate; used as the fast route for sweeps and checked
    against full composite propagation in the tests.
    """
    hs = mc.as_matrix(hs)
    if hs.shape != (spin_s.dim, spin_s.dim):
        raise ValueError("hs shape does not match the system spin")
    h_block = hs + (alpha * ell) * spin_s.jz
    rate = lam * (1.0 + alpha * ell) ** 2
    terms: list[Term] = []
    if rate != 0.0:
        terms.append((rate, spin_s.jz, spin_s.jz))
    return GkslGenerator(dim=spin_s.dim, h0=h_block, terms=terms)


@dataclass
class MixedAncilla:
    """Imperfect ancilla preparation: target eigenvalue ell, mean offset
    delta, variance sigma2. `weights` is filled by mixed_ancilla_state for a
    concrete ancilla dimension."""

    ell: float
    delta: float = 0.0
    sigma2: float = 0.0
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.sigma2 < 0.0:
            raise ValueError("sigma2 must be nonnegative")


def mixed_ancilla_state(spin_a: SpinAlgebra, m: MixedAncilla) -> np.ndarray:
    """Diagonal ancilla state with Gaussian weights over the Jz eigenvalues.

    p_n ~ exp(-(n - mu)^2 / (2 sigma^2)) with mu = ell + delta, truncated to
    the finite spectrum and renormalized; sigma2 = 0 degenerates to the
    projector onto the eigenvalue nearest mu. The computed weights are
    stored back on `m`.
    """
    eigs = np.diag(spin_a.jz).real
    mu = m.ell + m.delta
    if m.sigma2 == 0.0:
        w = np.zeros(spin_a.dim)
        w[int(np.argmin(np.abs(eigs - mu)))] = 1.0
    else:
        logw = -((eigs - mu) ** 2) / (2.0 * m.sigma2)
        logw -= logw.max()  # keep the largest weight at exp(0)
        w = np.exp(logw)
        w /= w.sum()
    m.weights = w
    return np.diag(w).astype(complex)


def residual_rate(lam: float, ell: float, delta: float, sigma2: float) -> float:
    """Leading-order leftover dephasing rate lam*(delta^2 + sigma^2)/ell^2."""
    if ell == 0.0:
        raise ValueError("ell must be nonzero")
    return lam * (delta**2 + sigma2) / ell**2


def mixed_ancilla_generator(
    spin_s: SpinAlgebra,
    hs: np.ndarray,
    lam: float,
    ell: float,
    delta: float,
    sigma2: float,
) -> GkslGenerator:
    """Effective single-system map -i[hs - Jz, .] + residual_rate * dissipator(Jz)."""
    rate = residual_rate(lam, ell, delta, sigma2)
    if abs(delta) >= 0.5 * abs(ell) or sigma2 >= 0.5 * ell**2:
        warnings.warn(
            "mixed-ancilla rate formula assumes |delta| and sigma well below |ell|",
            stacklevel=2,
        )
    hs = mc.as_matrix(hs)
    if hs.shape != (spin_s.dim, spin_s.dim):
        raise ValueError("hs shape does not match the system spin")
    terms: list[Term] = []
    if rate != 0.0:
        terms.append((rate, spin_s.jz, spin_s.jz))
    return GkslGenerator(dim=spin_s.dim, h0=build_heff(hs), terms=terms)


class DriftError(RuntimeError):
    """Propagated state left the density-matrix manifold beyond tolerance."""


_DENSE_LIMIT = 64  # superoperator up to 4096^2; above this, adaptive RK


def _check_output(rho: np.ndarray, t: float) -> None:
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > 1e-8:
        raise DriftError(f"trace drifted to {tr} at t={t}")
    if mc.frobenius(rho - mc.dag(rho)) > 1e-8:
        raise DriftError(f"Hermiticity drift beyond 1e-8 at t={t}")


def propagate(gen: GkslGenerator, rho0: np.ndarray, times) -> list[np.ndarray]:
    """Evolve rho0 to each requested time under exp(t * generator).

    Times must be nonnegative and nondecreasing. Uniform grids reuse a single
    step propagator; above dimension 64 an adaptive integrator driven by
    gen.apply replaces the dense superoperator exponential. Output trace or
    Hermiticity drift beyond 1e-8 raises DriftError.
    """
    rho0 = mc.as_matrix(rho0)
    if rho0.shape != (gen.dim, gen.dim):
        raise ValueError("rho0 shape does not match the generator")
    mc.check_density_matrix(rho0, tol=1e-10)
    ts = [float(t) for t in times]
    if not ts:
        return []
    if ts[0] < 0.0 or any(b < a for a, b in zip(ts, ts[1:])):
        raise ValueError("times must be nonnegative and nondecreasing")

    if gen.dim > _DENSE_LIMIT:
        states = _propagate_rk(gen, rho0, ts)
    else:
        states = _propagate_dense(gen, rho0, ts)
    for t, rho in zip(ts, states):
        _check_output(rho, t)
    return states


def _propagate_dense(gen, rho0, ts) -> list[np.ndarray]:
    n = gen.dim
    sup = gen.superoperator()
    diffs = np.diff([0.0] + ts)
    # uniform spacing (after any leading offset) -> one expm, reused
    reuse = None
    if len(diffs) > 2:
        inner = diffs[1:]
        if np.ptp(inner) <= 1e-9 * max(float(inner[0]), 1e-300):
            reuse = float(np.mean(inner))
    v = mc.vectorize(rho0)
    out = []
    cache: dict[float, np.ndarray] = {}
    for k, d in enumerate(diffs):
        if d != 0.0:
            key = reuse if (reuse is not None and k >= 1) else float(d)
            if key not in cache:
                cache[key] = mc.expm(key * sup)
            v = cache[key] @ v
        out.append(mc.devectorize(v, n, n))
    return out


def _propagate_rk(gen, rho0, ts) -> list[np.ndarray]:
    n = gen.dim

    def rhs(_t, y):
        return gen.apply(y.reshape(n, n)).ravel()

    t_eval = ts if ts[0] == 0.0 else [0.0] + ts
    sol = solve_ivp(
        rhs,
        (0.0, max(ts[-1], 1e-12)),
        rho0.ravel().astype(complex),
        t_eval=t_eval,
        method="DOP853",
        rtol=1e-10,
        atol=1e-12,
    )
    if not sol.success:
        raise RuntimeError(f"adaptive propagation failed: {sol.message}")
    cols = sol.y.T if ts[0] == 0.0 else sol.y.T[1:]
    return [c.reshape(n, n).copy() for c in cols]
