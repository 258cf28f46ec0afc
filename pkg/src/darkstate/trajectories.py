"""Stochastic state trajectories under correlated diagonal noise.

Each trajectory integrates i d/dt |psi> = [H0 + w(t) . A] |psi> for one noise
realization by Strang splitting: exact half-steps of H0 around an exact
elementwise phase for the noise term (the jump operators are simultaneously
diagonal, so the noise generator exponentiates exactly; this evaluates the
Stratonovich solution with no scheme-order ambiguity). Averaging the
pure-state projectors over trajectories reproduces the GKSL evolution.

The hot loop has two interchangeable kernels: a compiled extension
(darkstate._stepper, built from Cython) and a pure-numpy fallback. The
compiled one is used when importable; set DARKSTATE_FORCE_FALLBACK=1 to
force the fallback. Both satisfy the same contract and are compared in the
test suite; bench/bench_stepper.py measures the speed difference.
"""

from __future__ import annotations

from dataclasses import dataclass
import os

import numpy as np

from . import _stepper_py
from . import matrixcore as mc
from .noise import NoiseModel, derive_stream_seed, sample_path

try:
    from . import _stepper as _compiled
except ImportError:
    _compiled = None

_BATCH = 128


def get_kernel(name: str = "auto"):
    """Kernel module by name: 'auto', 'cython', or 'python'."""
    if name == "python":
        return _stepper_py
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled stepper is not available in this install")
        return _compiled
    if name != "auto":
        raise ValueError(f"unknown kernel {name!r}")
    if os.environ.get("DARKSTATE_FORCE_FALLBACK", "") == "1" or _compiled is None:
        return _stepper_py
    return _compiled


def backend_name() -> str:
    """Which kernel ensemble runs will use under the current environment."""
    return "cython" if get_kernel() is not _stepper_py else "python"


@dataclass
class TrajectoryConfig:
    """Step size, horizon, ensemble size, seeding, and recording stride."""

    dt: float
    t_final: float
    n_traj: int = 4000
    master_seed: int = 0
    record_stride: int = 1

    def __post_init__(self):
        if self.dt <= 0.0 or self.t_final <= 0.0 or self.dt > self.t_final:
            raise ValueError("need 0 < dt <= t_final")
        if self.n_traj < 1 or self.record_stride < 1:
            raise ValueError("n_traj and record_stride must be >= 1")
        n = round(self.t_final / self.dt)
        if abs(n * self.dt - self.t_final) > 1e-6 * self.t_final:
            raise ValueError("t_final must be an integer number of dt steps")
        if n % self.record_stride != 0:
            raise ValueError("step count must be a multiple of record_stride")

    @property
    def n_steps(self) -> int:
        return round(self.t_final / self.dt)

    def recorded_times(self) -> np.ndarray:
        n_rec = self.n_steps // self.record_stride
        return self.dt * self.record_stride * np.arange(n_rec + 1)


@dataclass
class EnsembleResult:
    """Projector average over trajectories on the recorded grid."""

    times: np.ndarray
    rho_avg: np.ndarray  # (n_rec, d, d)
    n_traj_used: int
    max_norm_drift: float = 0.0


@dataclass
class ComparisonReport:
    """Per-time trace distances between an ensemble and a master propagation."""

    times: np.ndarray
    distances: np.ndarray
    max_distance: float


def _diagonals(jump_ops) -> np.ndarray:
    """Stack the real diagonals; error if any operator is not diagonal."""
    diags = []
    for idx, op in enumerate(jump_ops):
        op = mc.as_matrix(op)
        dvec = np.diag(op)
        if mc.frobenius(op - np.diag(dvec)) > 1e-12 * (1.0 + mc.frobenius(op)):
            raise ValueError(f"jump operator {idx} is not diagonal in this basis")
        if np.max(np.abs(dvec.imag)) > 1e-12:
            raise ValueError(f"jump operator {idx} has a non-real diagonal")
        diags.append(dvec.real)
    return np.array(diags)


def step(psi, h0_half_propagator, noise_increment_3vec, jump_ops):
    """One reference Strang step (the kernels batch this exact operation)."""
    psi = np.asarray(psi, dtype=complex)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-6:
        raise ValueError("input state is not normalized")
    diags = _diagonals(jump_ops)
    theta = np.asarray(noise_increment_3vec, dtype=float) @ diags
    out = h0_half_propagator @ psi
    out = np.exp(-1j * theta) * out
    out = h0_half_propagator @ out
    return out / np.linalg.norm(out)


def _prepare(config: TrajectoryConfig, h0, jump_ops, psi0):
    h0 = mc.as_matrix(h0)
    if not mc.is_hermitian(h0, tol=1e-10):
        raise ValueError("h0 must be Hermitian")
    psi0 = np.asarray(psi0, dtype=complex).reshape(-1)
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-6:
        raise ValueError("psi0 is not normalized")
    if psi0.size != h0.shape[0]:
        raise ValueError("psi0 dimension does not match h0")
    diags = _diagonals(jump_ops)
    if diags.shape[1] != psi0.size:
        raise ValueError("jump operators do not match the state dimension")
    u_half = mc.expm_hermitian(h0, factor=-0.5j * config.dt)
    return u_half, diags, psi0


def _increments(model, config, traj_index) -> np.ndarray:
    if model is None:
        return np.zeros((config.n_steps, 3))
    seed = derive_stream_seed(config.master_seed, traj_index, 0)
    return sample_path(model, config.dt, config.n_steps, seed).increments


def run_trajectory(
    config: TrajectoryConfig,
    model: NoiseModel | None,
    h0,
    jump_ops,
    psi0,
    traj_index: int,
) -> np.ndarray:
    """States of one noise realization on the recorded grid, shape (n_rec, d).

    Deterministic in (master_seed, traj_index); model=None means noise off.
    """
    u_half, diags, psi0 = _prepare(config, h0, jump_ops, psi0)
    incs = np.ascontiguousarray(_increments(model, config, traj_index)[None])
    states, _ = get_kernel().run_paths(
        u_half, diags, incs, psi0[None].copy(), config.record_stride
    )
    return states[0]


def ensemble_density(
    config: TrajectoryConfig,
    model: NoiseModel | None,
    h0,
    jump_ops,
    psi0,
) -> EnsembleResult:
    """Average |psi><psi| over n_traj independent noise realizations.

    Trajectories are batched, but the accumulation runs in trajectory-index
    order with fixed batch boundaries, so the result does not depend on
    scheduling.
    """
    u_half, diags, psi0 = _prepare(config, h0, jump_ops, psi0)
    kernel = get_kernel()
    d = psi0.size
    n_rec = config.n_steps // config.record_stride + 1
    acc = np.zeros((n_rec, d, d), dtype=complex)
    max_drift = 0.0
    for start in range(0, config.n_traj, _BATCH):
        idx = range(start, min(start + _BATCH, config.n_traj))
        incs = np.stack([_increments(model, config, i) for i in idx])
        psis = np.repeat(psi0[None], len(incs), axis=0)
        states, drift = kernel.run_paths(
            u_half, diags, incs, psis, config.record_stride
        )
        max_drift = max(max_drift, drift)
        acc += np.einsum("bri,brj->rij", states, states.conj())
    return EnsembleResult(
        times=config.recorded_times(),
        rho_avg=acc / config.n_traj,
        n_traj_used=config.n_traj,
        max_norm_drift=max_drift,
    )


def compare_to_master(ens: EnsembleResult, gen) -> ComparisonReport:
    """Trace distance per recorded time against propagate(gen) from rho_avg[0]."""
    from .lindblad import propagate

    if ens.rho_avg.shape[1] != gen.dim:
        raise ValueError("ensemble and generator dimensions differ")
    master = propagate(gen, ens.rho_avg[0], list(ens.times))
    dists = np.array(
        [mc.trace_distance(r, m) for r, m in zip(ens.rho_avg, master)]
    )
    return ComparisonReport(
        times=ens.times, distances=dists, max_distance=float(dists.max())
    )
