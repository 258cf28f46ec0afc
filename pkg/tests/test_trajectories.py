import numpy as np
import pytest

import darkstate.matrixcore as mc
import darkstate.trajectories as tr
from darkstate.lindblad import assemble_generator
from darkstate.noise import NoiseModel, build_correlation
from darkstate.spinops import SystemParams, build_h0, build_ha, build_hs, make_spin, noon_state


def qubit_pair(alpha, gamma=0.8):
    spin_s, spin_a = make_spin(2), make_spin(2)
    hs = build_hs(SystemParams(1, 1.0, gamma, -1.0))
    ha = build_ha(SystemParams(1, 1.0, 0.0, -1.0))
    h0 = build_h0(hs, ha, alpha)
    jumps = [
        np.kron(spin_s.jz, np.eye(2)),
        np.kron(np.eye(2), spin_a.jz),
        np.kron(spin_s.jz, spin_a.jz),
    ]
    return spin_s, spin_a, h0, jumps


def up_ancilla():
    vec = np.zeros(2)
    vec[1] = 1.0  # Jz eigenvalue +1/2 in the ascending basis
    return vec


def test_config_validation():
    with pytest.raises(ValueError):
        tr.TrajectoryConfig(dt=0.0, t_final=1.0)
    with pytest.raises(ValueError):
        tr.TrajectoryConfig(dt=2.0, t_final=1.0)
    with pytest.raises(ValueError):
        tr.TrajectoryConfig(dt=0.3, t_final=1.0)  # not an integer step count
    with pytest.raises(ValueError):
        tr.TrajectoryConfig(dt=0.1, t_final=1.0, record_stride=3)  # 10 % 3 != 0
    with pytest.raises(ValueError):
        tr.TrajectoryConfig(dt=0.1, t_final=1.0, n_traj=0)


def test_recorded_times():
    cfg = tr.TrajectoryConfig(dt=0.1, t_final=1.0, record_stride=5)
    assert np.allclose(cfg.recorded_times(), [0.0, 0.5, 1.0])
    assert cfg.n_steps == 10


def test_get_kernel_names():
    assert tr.backend_name() in ("cython", "python")
    kp = tr.get_kernel("python")
    assert hasattr(kp, "run_paths")
    with pytest.raises(ValueError):
        tr.get_kernel("fortran")


def test_step_exact_for_diagonal_h0():
    # diagonal h0 commutes with the dephasing phases: one step is exact
    d = 4
    h0 = np.diag([0.3, -0.1, 0.7, 0.2]).astype(complex)
    jumps = [np.diag(v).astype(complex) for v in ([0.5, 0.5, -0.5, -0.5], [0.5, -0.5, 0.5, -0.5], [0.25, -0.25, -0.25, 0.25])]
    dt = 0.37
    inc = np.array([0.11, -0.23, 0.05])
    psi = np.ones(d, dtype=complex) / 2.0
    u_half = mc.expm_hermitian(h0, factor=-0.5j * dt)
    out = tr.step(psi, u_half, inc, jumps)
    theta = inc @ np.array([np.diag(j).real for j in jumps])
    expected = np.exp(-1j * (np.diag(h0).real * dt + theta)) * psi
    assert np.allclose(out, expected, atol=1e-12)


def test_step_rejects_bad_input():
    h0 = np.zeros((2, 2), dtype=complex)
    u_half = np.eye(2, dtype=complex)
    jz = make_spin(2).jz
    with pytest.raises(ValueError):
        tr.step(np.array([2.0, 0.0]), u_half, np.zeros(3), [jz, jz, jz])
    with pytest.raises(ValueError):
        tr.step(np.array([1.0, 0.0]), u_half, np.zeros(3), [make_spin(2).jx, jz, jz])


def test_step_strang_second_order():
    # deterministic smooth increments; halving dt quarters the global error
    _, _, h0, jumps = qubit_pair(-0.7)
    psi0 = np.kron(noon_state(1), np.array([1.0, 0.0])).astype(complex)
    horizon = 1.0
    scales = np.array([1.0, 0.6, -0.9])

    def integrate(dt):
        n = round(horizon / dt)
        u_half = mc.expm_hermitian(h0, factor=-0.5j * dt)
        edges = dt * np.arange(n + 1)
        incs = (np.cos(2 * edges[:-1]) - np.cos(2 * edges[1:]))[:, None] / 2.0
        incs = incs * scales[None, :]
        psi = psi0.copy()
        for k in range(n):
            psi = tr.step(psi, u_half, incs[k], jumps)
        return psi

    ref = integrate(horizon / 2048)
    e16 = np.linalg.norm(integrate(horizon / 16) - ref)
    e32 = np.linalg.norm(integrate(horizon / 32) - ref)
    e64 = np.linalg.norm(integrate(horizon / 64) - ref)
    assert 3.5 <= e16 / e32 <= 4.5
    assert 3.5 <= e32 / e64 <= 4.5


def test_run_trajectory_unitary_without_model():
    _, _, h0, jumps = qubit_pair(-0.7)
    psi0 = np.kron(noon_state(1), up_ancilla()).astype(complex)
    cfg = tr.TrajectoryConfig(dt=0.01, t_final=1.0, record_stride=10)
    states = tr.run_trajectory(cfg, None, h0, jumps, psi0, 0)
    assert states.shape == (11, 4)
    for k, t in enumerate(cfg.recorded_times()):
        u = mc.expm_hermitian(h0, factor=-1j * float(t))
        assert np.linalg.norm(states[k] - u @ psi0) <= 1e-10


def test_run_trajectory_deterministic_in_index():
    _, _, h0, jumps = qubit_pair(-0.7)
    model = NoiseModel(kind="white", corr=build_correlation(0.3, -0.7))
    psi0 = np.kron(noon_state(1), up_ancilla()).astype(complex)
    cfg = tr.TrajectoryConfig(dt=0.01, t_final=0.5, master_seed=5, record_stride=10)
    a = tr.run_trajectory(cfg, model, h0, jumps, psi0, 7)
    b = tr.run_trajectory(cfg, model, h0, jumps, psi0, 7)
    c = tr.run_trajectory(cfg, model, h0, jumps, psi0, 8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_dark_point_trajectories_follow_unitary_path():
    # at alpha = -1/ell every noise realization cancels exactly, so each
    # trajectory rides the deterministic path
    _, spin_a, h0, jumps = qubit_pair(-2.0)
    model = NoiseModel(kind="white", corr=build_correlation(0.5, -2.0))
    psi0 = np.kron(noon_state(1), up_ancilla()).astype(complex)
    cfg = tr.TrajectoryConfig(dt=1e-3, t_final=5.0, master_seed=3, record_stride=100)
    for idx in range(3):
        states = tr.run_trajectory(cfg, model, h0, jumps, psi0, idx)
        for k, t in enumerate(cfg.recorded_times()):
            u = mc.expm_hermitian(h0, factor=-1j * float(t))
            fid = abs(np.vdot(u @ psi0, states[k])) ** 2
            assert fid >= 1.0 - 1e-6


def test_ensemble_density_basic_properties():
    _, _, h0, jumps = qubit_pair(-0.7)
    model = NoiseModel(kind="white", corr=build_correlation(0.2, -0.7))
    psi0 = np.kron(noon_state(1), up_ancilla()).astype(complex)
    cfg = tr.TrajectoryConfig(dt=1e-3, t_final=1.0, n_traj=100, master_seed=1, record_stride=100)
    ens = tr.ensemble_density(cfg, model, h0, jumps, psi0)
    assert ens.rho_avg.shape == (11, 4, 4)
    assert ens.n_traj_used == 100
    assert ens.max_norm_drift <= 1e-9
    for rho in ens.rho_avg:
        assert abs(np.trace(rho) - 1.0) < 1e-12
        assert mc.frobenius(rho - mc.dag(rho)) < 1e-12
    assert np.allclose(ens.rho_avg[0], np.outer(psi0, psi0.conj()), atol=1e-14)


def test_ensemble_seed_determinism_bitwise():
    _, _, h0, jumps = qubit_pair(-0.7)
    model = NoiseModel(kind="white", corr=build_correlation(0.2, -0.7))
    psi0 = np.kron(noon_state(1), up_ancilla()).astype(complex)
    cfg = tr.TrajectoryConfig(dt=1e-3, t_final=0.5, n_traj=50, master_seed=77, record_stride=50)
    a = tr.ensemble_density(cfg, model, h0, jumps, psi0)
    b = tr.ensemble_density(cfg, model, h0, jumps, psi0)
    assert a.rho_avg.tobytes() == b.rho_avg.tobytes()
    cfg2 = tr.TrajectoryConfig(dt=1e-3, t_final=0.5, n_traj=50, master_seed=78, record_stride=50)
    c = tr.ensemble_density(cfg2, model, h0, jumps, psi0)
    assert a.rho_avg.tobytes() != c.rho_avg.tobytes()


def test_cross_backend_agreement():
    try:
        kc = tr.get_kernel("cython")
    except RuntimeError:
        pytest.skip("compiled kernel not available")
    kp = tr.get_kernel("python")
    _, _, h0, jumps = qubit_pair(-0.7)
    model = NoiseModel(kind="white", corr=build_correlation(0.3, -0.7))
    psi0 = np.kron(noon_state(1), up_ancilla()).astype(complex)
    cfg = tr.TrajectoryConfig(dt=1e-3, t_final=0.2, master_seed=4)
    u_half = mc.expm_hermitian(h0, factor=-0.5j * cfg.dt)
    diags = np.array([np.diag(op).real for op in jumps])
    incs = np.ascontiguousarray(tr._increments(model, cfg, 0)[None])
    sc, dc = kc.run_paths(u_half, diags, incs.copy(), psi0[None].copy(), 10)
    sp_, dp = kp.run_paths(u_half, diags, incs.copy(), psi0[None].copy(), 10)
    assert np.max(np.abs(sc - sp_)) <= 1e-10
    assert abs(dc - dp) <= 1e-10


def test_ensemble_matches_master():
    spin_s, spin_a, h0, jumps = qubit_pair(-0.7)
    corr = build_correlation(0.2, -0.7)
    model = NoiseModel(kind="white", corr=corr)
    gen = assemble_generator(corr, spin_s, spin_a, h0)
    psi0 = np.kron(noon_state(1), up_ancilla()).astype(complex)
    cfg = tr.TrajectoryConfig(dt=1e-3, t_final=2.0, n_traj=1000, master_seed=12, record_stride=100)
    ens = tr.ensemble_density(cfg, model, h0, jumps, psi0)
    rep = tr.compare_to_master(ens, gen)
    assert rep.distances[0] <= 1e-12
    assert rep.max_distance <= 0.03
    assert rep.max_distance == pytest.approx(np.max(rep.distances))


def test_ou_ensemble_deviates_from_white_master():
    # strongly colored noise at the same rate matrix is visibly non-Markovian
    spin_s, spin_a, h0, jumps = qubit_pair(-0.7)
    corr = build_correlation(0.5, -0.7)
    gen = assemble_generator(corr, spin_s, spin_a, h0)
    # down ancilla branch: the stronger-coupled block shows the memory effect
    psi0 = np.kron(noon_state(1), np.array([1.0, 0.0])).astype(complex)
    cfg = tr.TrajectoryConfig(dt=1e-3, t_final=2.0, n_traj=400, master_seed=99, record_stride=100)
    white = tr.compare_to_master(
        tr.ensemble_density(cfg, NoiseModel(kind="white", corr=corr), h0, jumps, psi0), gen
    )
    colored = tr.compare_to_master(
        tr.ensemble_density(cfg, NoiseModel(kind="ou", corr=corr, tau_c=5.0), h0, jumps, psi0), gen
    )
    assert white.max_distance <= 0.08
    assert colored.max_distance >= 0.1
    assert colored.max_distance >= 3.0 * white.max_distance
