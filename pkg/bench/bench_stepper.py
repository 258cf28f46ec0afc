"""Compare the compiled stepping kernel against the pure-numpy fallback.

Usage: python3 bench/bench_stepper.py [n_traj] [n_steps]
"""

import sys
import time

import numpy as np

from darkstate import matrixcore as mc
from darkstate.noise import NoiseModel, build_correlation, sample_path, derive_stream_seed
from darkstate.spinops import make_spin, noon_state
from darkstate.trajectories import get_kernel


def build_case(n_traj: int, n_steps: int, dt: float = 1e-3):
    spin = make_spin(2)
    eye = np.eye(2, dtype=complex)
    jump_ops = [mc.kron(spin.jz, eye), mc.kron(eye, spin.jz), mc.kron(spin.jz, spin.jz)]
    a_diags = np.ascontiguousarray(np.stack([np.diag(op).real for op in jump_ops]))
    h0 = mc.kron(spin.jz @ spin.jz, eye) + 0.3 * mc.kron(eye, spin.jz)
    u_half = mc.expm_hermitian(h0, -0.5j * dt)
    psi0 = np.kron(noon_state(1), np.array([1.0, 0.0], dtype=complex))
    model = NoiseModel(kind="white", corr=build_correlation(0.2, -2.0))
    incs = np.stack(
        [
            sample_path(model, dt, n_steps, derive_stream_seed(123, k, 0)).increments
            for k in range(n_traj)
        ]
    )
    psi = np.tile(psi0, (n_traj, 1))
    return u_half, np.ascontiguousarray(a_diags), incs, psi


def run(kernel_name: str, case, record_stride: int) -> float:
    kernel = get_kernel(kernel_name)
    u_half, a_diags, incs, psi = case
    start = time.perf_counter()
    states, drift = kernel.run_paths(u_half, a_diags, incs, psi.copy(), record_stride)
    elapsed = time.perf_counter() - start
    assert drift < 1e-6
    assert states.shape[1] == incs.shape[1] // record_stride + 1
    return elapsed


def main() -> None:
    n_traj = int(sys.argv[1]) if len(sys.argv) > 1 else 256
    n_steps = int(sys.argv[2]) if len(sys.argv) > 2 else 4000
    case = build_case(n_traj, n_steps)
    total = n_traj * n_steps

    results = {}
    for name in ("python", "cython"):
        try:
            get_kernel(name)
        except RuntimeError as exc:
            print(f"{name:>7}: unavailable ({exc})")
            continue
        run(name, case, record_stride=n_steps)  # warm up
        best = min(run(name, case, record_stride=n_steps) for _ in range(3))
        results[name] = best
        print(f"{name:>7}: {best:8.3f} s   {total / best / 1e6:8.2f} M steps/s")

    if len(results) == 2:
        print(f"speedup: {results['python'] / results['cython']:.2f}x (cython over python)")


if __name__ == "__main__":
    main()
