import math

import numpy as np
import pytest

import darkstate.lindblad as lb
import darkstate.matrixcore as mc
from darkstate.noise import build_correlation, general_correlation
from darkstate.spinops import (
    SystemParams,
    build_h0,
    build_ha,
    build_heff,
    build_hs,
    make_spin,
    noon_state,
    projector,
)


def random_density(rng, dim):
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def composite_pieces(d_s, d_a, lam, alpha, hs_p=None, ha_p=None):
    spin_s, spin_a = make_spin(d_s), make_spin(d_a)
    hs = build_hs(hs_p or SystemParams(d_s - 1, 1.0, 0.5, -1.0))
    ha = build_ha(ha_p or SystemParams(d_a - 1, 1.0, 0.0, -1.0))
    h0 = build_h0(hs, ha, alpha)
    corr = build_correlation(lam, alpha)
    return spin_s, spin_a, hs, ha, h0, corr


def test_dissipator_oracle_qubit():
    # lam*M[Jz] on a qubit kills the coherence at rate lam/2... times the
    # matrix element gap; check the raw algebraic action instead of dynamics
    jz = make_spin(2).jz
    gen = lb.dissipator(jz)
    rho = np.array([[0.5, 0.3], [0.3, 0.5]], dtype=complex)
    out = gen.apply(rho)
    expected = jz @ rho @ jz - 0.5 * (jz @ jz @ rho + rho @ jz @ jz)
    assert np.allclose(out, expected, atol=1e-14)
    assert np.allclose(np.diag(out), 0.0, atol=1e-14)
    assert out[0, 1] == pytest.approx(-0.5 * 0.3)


def test_cross_term_action():
    rng = np.random.default_rng(0)
    a = np.diag([1.0, -1.0]).astype(complex)
    b = np.diag([2.0, 1.0]).astype(complex)
    rho = random_density(rng, 2)
    out = lb.cross_term(0.7, a, b).apply(rho)
    expected = 0.7 * (a @ rho @ b - 0.5 * (b @ a @ rho + rho @ b @ a))
    assert np.allclose(out, expected, atol=1e-14)


def test_superoperator_matches_apply():
    rng = np.random.default_rng(1)
    spin_s, spin_a, _, _, h0, corr = composite_pieces(2, 3, 0.4, -0.8)
    gen = lb.assemble_generator(corr, spin_s, spin_a, h0)
    rho = random_density(rng, 6)
    via_super = mc.devectorize(gen.superoperator() @ mc.vectorize(rho), 6, 6)
    assert np.allclose(via_super, gen.apply(rho), atol=1e-12)


def test_generator_trace_and_hermiticity_preserving():
    rng = np.random.default_rng(2)
    spin_s, spin_a, _, _, h0, corr = composite_pieces(2, 2, 0.6, 1.3)
    gen = lb.assemble_generator(corr, spin_s, spin_a, h0)
    rho = random_density(rng, 4)
    out = gen.apply(rho)
    assert abs(np.trace(out)) < 1e-12
    assert mc.frobenius(out - mc.dag(out)) < 1e-12


def test_h0_validation():
    spin_s, spin_a, _, _, _, corr = composite_pieces(2, 2, 0.3, 0.5)
    with pytest.raises(ValueError):
        lb.assemble_generator(corr, spin_s, spin_a, np.zeros((3, 3)))
    bad = np.zeros((4, 4), dtype=complex)
    bad[0, 1] = 1.0  # not Hermitian
    with pytest.raises(ValueError):
        lb.assemble_generator(corr, spin_s, spin_a, bad)


@pytest.mark.parametrize("d", [2, 4])
def test_split_form_equals_raw(d):
    rng = np.random.default_rng(100 + d)
    for _ in range(10):
        lam = float(rng.uniform(0.05, 2.0))
        alpha = float(rng.uniform(-3.0, 3.0))
        spin_s, spin_a, _, _, h0, corr = composite_pieces(d, d, lam, alpha)
        raw = lb.assemble_generator(corr, spin_s, spin_a, h0)
        split = lb.assemble_split_form(corr, spin_s, spin_a, h0)
        diff = np.max(np.abs(raw.superoperator() - split.superoperator()))
        assert diff <= 1e-10


def test_split_form_needs_rank_one():
    m = np.diag([0.1, 0.2, 0.3])
    spin = make_spin(2)
    with pytest.raises(ValueError):
        lb.assemble_split_form(general_correlation(m), spin, spin, np.zeros((4, 4)))


@pytest.mark.parametrize("d,ell", [(2, 0.5), (2, -0.5), (4, 1.5), (4, -0.5)])
def test_dark_state_residual_vanishes_at_matched_alpha(d, ell):
    rng = np.random.default_rng(7)
    alpha = -1.0 / ell
    spin_s, spin_a, _, _, h0, corr = composite_pieces(d, d, 0.7, alpha)
    gen = lb.assemble_generator(corr, spin_s, spin_a, h0)
    for _ in range(5):
        rho_s = random_density(rng, d)
        assert lb.dark_state_residual(gen, rho_s, ell) <= 1e-12


def test_dark_state_residual_value_uncoupled():
    # alpha = 0 leaves the bare dephasing; on a NOON projector the residual
    # norm is lam * N^2 / (2 sqrt(2))
    for n, lam in ((1, 0.7), (3, 0.2)):
        d = n + 1
        spin_s, spin_a, _, _, h0, corr = composite_pieces(d, 2, lam, 0.0)
        gen = lb.assemble_generator(corr, spin_s, spin_a, h0)
        psi = noon_state(n)
        rho_s = np.outer(psi, psi.conj())
        expected = lam * n**2 / (2.0 * math.sqrt(2.0))
        assert lb.dark_state_residual(gen, rho_s, 0.5) == pytest.approx(
            expected, rel=1e-12
        )


def test_dark_state_residual_zero_rate():
    # a zero correlation matrix has no dissipative channels at any alpha
    spin = make_spin(2)
    corr = general_correlation(np.zeros((3, 3)))
    h0 = build_h0(
        build_hs(SystemParams(1, 1.0, 0.5, -1.0)),
        build_ha(SystemParams(1, 0.0, 0.0, 0.0)),
        0.9,
    )
    gen = lb.assemble_generator(corr, spin, spin, h0)
    rho_s = random_density(np.random.default_rng(9), 2)
    assert lb.dark_state_residual(gen, rho_s, 0.5) == pytest.approx(0.0, abs=1e-15)


def test_case_study_terms_alpha_zero_unchanged():
    spin_s, spin_a, _, _, h0, corr = composite_pieces(2, 2, 0.5, 0.0)
    gen = lb.assemble_generator(corr, spin_s, spin_a, h0)
    ext = lb.add_case_study_terms(gen, corr, spin_s, spin_a)
    assert np.allclose(ext.superoperator(), gen.superoperator(), atol=1e-15)
    assert ext is not gen


def test_case_study_terms_vanish_on_qubit_pair():
    # for two qubits Jz^2 = I/4, so K is a multiple of the identity and the
    # added cross terms cancel pairwise
    spin_s, spin_a, _, _, h0, corr = composite_pieces(2, 2, 0.5, -2.0)
    gen = lb.assemble_generator(corr, spin_s, spin_a, h0)
    ext = lb.add_case_study_terms(gen, corr, spin_s, spin_a)
    assert np.allclose(ext.superoperator(), gen.superoperator(), atol=1e-12)


def test_case_study_keeps_noon_sector_dark():
    # the quadratic couplings see only m^2; on the span of |m| = N/2 they act
    # as scalars, so the protected sector survives, while a state with
    # unequal |m| values in superposition picks up extra dephasing
    d, ell = 3, 1.0
    alpha = -1.0 / ell
    spin_s, spin_a, _, _, h0, corr = composite_pieces(d, 3, 0.4, alpha)
    gen = lb.add_case_study_terms(
        lb.assemble_generator(corr, spin_s, spin_a, h0), corr, spin_s, spin_a
    )
    psi = noon_state(2)  # occupies m = -1 and m = +1
    rho_noon = np.outer(psi, psi.conj())
    assert lb.dark_state_residual(gen, rho_noon, ell) <= 1e-12
    lopsided = np.zeros(3, dtype=complex)
    lopsided[1] = lopsided[2] = 1.0 / math.sqrt(2.0)  # m = 0 with m = +1
    rho_bad = np.outer(lopsided, lopsided.conj())
    assert lb.dark_state_residual(gen, rho_bad, ell) > 1e-3


def test_reduce_system_matches_partial_trace():
    # alpha = 0: tracing the composite evolution equals the reduced map for
    # any initial product state with a diagonal ancilla
    rng = np.random.default_rng(21)
    lam = 0.4
    spin_s, spin_a, hs, _, h0, corr = composite_pieces(3, 4, lam, 0.0)
    full = lb.assemble_generator(corr, spin_s, spin_a, h0)
    red = lb.reduce_system(corr, spin_s, hs)
    rho_s = random_density(rng, 3)
    diag_a = rng.uniform(0.1, 1.0, size=4)
    rho_a = np.diag(diag_a / diag_a.sum()).astype(complex)
    times = [0.5, 1.7, 10.0 / lam]
    big = lb.propagate(full, mc.kron(rho_s, rho_a), times)
    small = lb.propagate(red, rho_s, times)
    for bstate, sstate in zip(big, small):
        traced = mc.partial_trace_ancilla(bstate, 3, 4)
        assert mc.trace_distance(traced, sstate) <= 1e-9


def test_reduce_system_rejects_coupled():
    spin = make_spin(2)
    with pytest.raises(ValueError):
        lb.reduce_system(build_correlation(0.4, 0.3), spin, np.zeros((2, 2)))


@pytest.mark.parametrize("d,ell,alpha", [(2, 0.5, -2.0), (4, -0.5, 1.4), (4, 1.5, -0.9)])
def test_block_reduction_matches_composite(d, ell, alpha):
    rng = np.random.default_rng(31)
    lam = 0.3
    d_a = 4
    spin_s, spin_a, hs, _, h0, corr = composite_pieces(d, d_a, lam, alpha)
    full = lb.assemble_generator(corr, spin_s, spin_a, h0)
    block = lb.block_reduced_generator(spin_s, hs, lam, alpha, ell)
    rho_s = random_density(rng, d)
    p_ell = projector(spin_a, ell)
    times = [0.4, 2.0, 7.5]
    big = lb.propagate(full, mc.kron(rho_s, p_ell), times)
    small = lb.propagate(block, rho_s, times)
    for bstate, sstate in zip(big, small):
        traced = mc.partial_trace_ancilla(bstate, d, d_a)
        assert mc.trace_distance(traced, sstate) <= 1e-10


def test_block_reduction_dark_point_is_unitary():
    # at alpha = -1/ell the block rate is exactly zero
    spin = make_spin(3)
    hs = build_hs(SystemParams(2, 1.0, 0.5, -1.0))
    gen = lb.block_reduced_generator(spin, hs, 0.5, -2.0, 0.5)
    assert gen.terms == []
    assert np.allclose(gen.h0, hs - spin.jz, atol=1e-14)


def test_mixed_ancilla_state_weights():
    spin = make_spin(21)
    # sigma well above the unit lattice spacing, so the discrete moments
    # track the requested ones; narrow widths pin to single sites instead
    m = lb.MixedAncilla(ell=0.0, delta=0.5, sigma2=4.0)
    rho = lb.mixed_ancilla_state(spin, m)
    w = m.weights
    eigs = np.diag(spin.jz).real
    assert w is not None and np.all(np.diag(rho).real == w)
    assert w.sum() == pytest.approx(1.0)
    assert float(w @ eigs) == pytest.approx(0.5, abs=1e-4)
    assert float(w @ (eigs - 0.5) ** 2) == pytest.approx(4.0, rel=1e-2)


def test_mixed_ancilla_state_sigma_zero_is_projector():
    spin = make_spin(4)
    rho = lb.mixed_ancilla_state(spin, lb.MixedAncilla(ell=0.5, delta=0.1, sigma2=0.0))
    assert np.allclose(rho, projector(spin, 0.5), atol=1e-14)


def test_residual_rate_formula():
    assert lb.residual_rate(0.1, 0.5, 0.01, 1.5e-4) == pytest.approx(
        0.1 * (1e-4 + 1.5e-4) / 0.25
    )
    with pytest.raises(ValueError):
        lb.residual_rate(0.1, 0.0, 0.01, 0.0)


def test_mixed_ancilla_generator_structure():
    spin = make_spin(2)
    hs = build_hs(SystemParams(1, 1.0, 0.5, -1.0))
    gen = lb.mixed_ancilla_generator(spin, hs, lam=0.1, ell=0.5, delta=0.01, sigma2=1.5e-4)
    assert np.allclose(gen.h0, build_heff(hs), atol=1e-14)
    assert len(gen.terms) == 1
    assert gen.terms[0][0] == pytest.approx(lb.residual_rate(0.1, 0.5, 0.01, 1.5e-4))
    with pytest.warns(UserWarning):
        lb.mixed_ancilla_generator(spin, hs, lam=0.1, ell=0.5, delta=0.4, sigma2=0.0)


def test_propagate_dephasing_oracle():
    # alpha = 0, hs = 0: every off-diagonal decays as exp(-lam (m-m')^2 t / 2)
    lam = 0.35
    for d in (2, 4, 6):
        spin = make_spin(d)
        gen = lb.reduce_system(build_correlation(lam, 0.0), spin, np.zeros((d, d)))
        rho0 = np.full((d, d), 1.0 / d, dtype=complex)
        m = np.diag(spin.jz).real
        for t in (0.3, 2.0):
            (rho_t,) = lb.propagate(gen, rho0, [t])
            expected = rho0 * np.exp(-lam * np.subtract.outer(m, m) ** 2 * t / 2.0)
            assert np.max(np.abs(rho_t - expected)) <= 1e-10


def test_propagate_input_validation():
    spin = make_spin(2)
    gen = lb.reduce_system(build_correlation(0.1, 0.0), spin, np.zeros((2, 2)))
    rho0 = 0.5 * np.eye(2, dtype=complex)
    assert lb.propagate(gen, rho0, []) == []
    with pytest.raises(ValueError):
        lb.propagate(gen, rho0, [-1.0])
    with pytest.raises(ValueError):
        lb.propagate(gen, rho0, [2.0, 1.0])
    with pytest.raises(ValueError):
        lb.propagate(gen, np.eye(2, dtype=complex), [1.0])  # trace 2


def test_propagate_uniform_reuse_matches_jittered_grid():
    rng = np.random.default_rng(41)
    spin_s, spin_a, _, _, h0, corr = composite_pieces(2, 2, 0.5, -1.2)
    gen = lb.assemble_generator(corr, spin_s, spin_a, h0)
    rho0 = random_density(rng, 4)
    uniform = [0.3, 0.6, 0.9, 1.2]
    jitter = [0.3, 0.6 + 3e-4, 0.9, 1.2 - 2e-4]
    a = lb.propagate(gen, rho0, uniform)
    b = lb.propagate(gen, rho0, jitter)
    for x, y, tu, tj in zip(a, b, uniform, jitter):
        # same generator, nearly identical times: bounded by the generator norm
        assert mc.trace_distance(x, y) <= 5.0 * abs(tu - tj) + 1e-12


def test_propagate_trace_guard():
    spin = make_spin(2)
    gen = lb.reduce_system(build_correlation(0.1, 0.0), spin, np.zeros((2, 2)))
    sup = gen.superoperator().copy()
    v = mc.vectorize(np.eye(2, dtype=complex))
    gen.super = sup + 2e-3 * np.outer(v, v)  # injects trace growth
    with pytest.raises(lb.DriftError):
        lb.propagate(gen, 0.5 * np.eye(2, dtype=complex), [5.0])


def test_propagate_rk_route_matches_dense(monkeypatch):
    rng = np.random.default_rng(51)
    spin_s, spin_a, _, _, h0, corr = composite_pieces(2, 3, 0.4, -0.7)
    gen = lb.assemble_generator(corr, spin_s, spin_a, h0)
    rho0 = random_density(rng, 6)
    times = [0.5, 1.5]
    dense = lb.propagate(gen, rho0, times)
    gen2 = lb.assemble_generator(corr, spin_s, spin_a, h0)
    monkeypatch.setattr(lb, "_DENSE_LIMIT", 2)
    adaptive = lb.propagate(gen2, rho0, times)
    for x, y in zip(dense, adaptive):
        assert mc.trace_distance(x, y) <= 1e-8
