"""Figure-grade experiment drivers.

Everything here reduces to four reusable motions: propagate a NOON (x)
projector state and record fidelity/purity, average fidelity over a long
horizon, sweep the interaction strength and measure the resonance, and fit
coherence-decay rates for the robustness and colored-noise studies.

Sweeps use the exact ancilla-block reduction (the composite map restricted
to the projector block is a system-only generator; see
lindblad.block_reduced_generator) so that large-N runs stay cheap; the
equivalence with full composite propagation is covered by tests, and
`method="composite"` keeps the direct route available.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import math
import warnings

import numpy as np

from . import matrixcore as mc
from .lindblad import (
    GkslGenerator,
    MixedAncilla,
    assemble_generator,
    block_reduced_generator,
    mixed_ancilla_generator,
    mixed_ancilla_state,
    propagate,
    residual_rate,
)
from .noise import (
    GenericNoiseRates,
    NoiseModel,
    build_correlation,
    general_correlation,
)
from .spinops import SpinAlgebra, SystemParams, build_h0, build_hs, make_spin, noon_state, projector
from .trajectories import TrajectoryConfig, ensemble_density

# well-pair parameters behind the published fidelity figures; the system
# interaction strength is not printed there and defaults to 1
FIG_SYSTEM = SystemParams(n_bosons=1, eta=1.0, gamma=0.5, delta=-1.0)
FIG_ANCILLA = SystemParams(n_bosons=1, eta=1.0, gamma=0.0, delta=-1.0)

# single-shot preparation infidelity quoted for tweezer arrays; used in the
# epsilon-scaled coherence-time definition of the robustness report
PREP_INFIDELITY = 3e-4


@dataclass
class FidelityTrace:
    """Fidelity and purity against time, with the run parameters attached."""

    times: np.ndarray
    fidelity: np.ndarray
    purity: np.ndarray
    params: dict


@dataclass
class SweepResult:
    """Time-averaged fidelity over an interaction-strength grid."""

    alphas: np.ndarray
    fbar: np.ndarray
    peak_alpha: float
    fwhm: float
    metadata: dict


def fidelity(rho: np.ndarray, target_pure: np.ndarray) -> float:
    """Tr[rho . target] for a pure-state projector target, clamped at 0."""
    rho = mc.as_matrix(rho)
    target = mc.as_matrix(target_pure)
    if rho.shape != target.shape:
        raise ValueError("state and target dimensions differ")
    if (
        abs(np.trace(target) - 1.0) > 1e-8
        or mc.frobenius(target @ target - target) > 1e-6
    ):
        raise ValueError("target is not a pure-state projector")
    val = complex(np.trace(rho @ target))
    if abs(val.imag) > 1e-10:
        warnings.warn(f"fidelity has imaginary residue {val.imag:.3e}", stacklevel=2)
    return max(val.real, 0.0)


def purity(rho: np.ndarray) -> float:
    return float(np.trace(rho @ rho).real)


def _corr_or_zero(lam: float, alpha: float):
    if lam == 0.0:
        return general_correlation(np.zeros((3, 3)))
    return build_correlation(lam, alpha)


def _noon_projector(n: int, sign: int = +1) -> np.ndarray:
    psi = noon_state(n, sign)
    return np.outer(psi, psi.conj())


def _composite_setup(n, ell, alpha, lam, hs_params, ha_params):
    hs_params = replace(hs_params or FIG_SYSTEM, n_bosons=n)
    ha_params = ha_params or replace(FIG_ANCILLA, n_bosons=n)
    spin_s = make_spin(hs_params.n_bosons + 1)
    spin_a = make_spin(ha_params.n_bosons + 1)
    hs = build_hs(hs_params)
    h0 = build_h0(hs, build_hs(ha_params), alpha)
    gen = assemble_generator(_corr_or_zero(lam, alpha), spin_s, spin_a, h0)
    target = mc.kron(_noon_projector(n), projector(spin_a, ell))
    return gen, target, spin_s, spin_a, hs, hs_params, ha_params


def _time_grid(t_final: float, dt: float) -> np.ndarray:
    return dt * np.arange(round(t_final / dt) + 1)


def noon_trace(
    n: int,
    ell: float,
    alpha: float,
    lam: float,
    hs_params: SystemParams | None = None,
    ha_params: SystemParams | None = None,
    t_final: float = 50.0,
    dt: float = 0.05,
) -> FidelityTrace:
    """Composite propagation of NOON (x) P_ell, recording fidelity and purity."""
    gen, target, _, _, _, hsp, hap = _composite_setup(
        n, ell, alpha, lam, hs_params, ha_params
    )
    times = _time_grid(t_final, dt)
    states = propagate(gen, target, times)
    return FidelityTrace(
        times=times,
        fidelity=np.array([fidelity(r, target) for r in states]),
        purity=np.array([purity(r) for r in states]),
        params={
            "n": n, "ell": ell, "alpha": alpha, "lam": lam,
            "system": vars(hsp).copy(), "ancilla": vars(hap).copy(),
            "t_final": t_final, "dt": dt,
        },
    )


def time_averaged_fidelity(trace: FidelityTrace) -> float:
    """Trapezoidal average of the fidelity over the trace's full window."""
    span = trace.times[-1] - trace.times[0]
    if span <= 0.0:
        raise ValueError("trace must cover a nonzero time window")
    return float(np.trapezoid(trace.fidelity, trace.times) / span)


def _fbar_block(gen: GkslGenerator, target, t0, tol, t_cap, dt):
    """Time-averaged target fidelity, doubling the horizon until converged."""

    def fbar_at(t_end: float) -> float:
        times = _time_grid(t_end, dt)
        states = propagate(gen, target, times)
        vals = np.array([max(np.trace(r @ target).real, 0.0) for r in states])
        return float(np.trapezoid(vals, times) / (times[-1] - times[0]))

    horizon = t0
    value = fbar_at(horizon)
    converged = False
    while 2.0 * horizon <= t_cap:
        nxt = fbar_at(2.0 * horizon)
        horizon *= 2.0
        if abs(nxt - value) < tol:
            value = nxt
            converged = True
            break
        value = nxt
    return value, horizon, converged


def alpha_sweep(
    n: int,
    ell: float,
    lam: float,
    alphas,
    hs_params: SystemParams | None = None,
    ha_params: SystemParams | None = None,
    t0: float = 100.0,
    fbar_tol: float = 1e-3,
    t_cap: float = 800.0,
    dt: float = 0.05,
    method: str = "block",
) -> SweepResult:
    """Time-averaged fidelity per alpha, with resonance peak and width.

    The horizon for each average doubles from t0 until successive averages
    differ by less than fbar_tol, capped at t_cap. FWHM is interpolated at
    the half height between the peak and the window's baseline minimum.
    """
    alphas = np.asarray(alphas, dtype=float)
    hs_params = replace(hs_params or FIG_SYSTEM, n_bosons=n)
    ha_params = ha_params or replace(FIG_ANCILLA, n_bosons=n)
    if method == "block" and ha_params.gamma != 0.0:
        method = "composite"  # hopping mixes ancilla blocks; no reduction
    spin_s = make_spin(n + 1)
    hs = build_hs(hs_params)
    target_s = _noon_projector(n)

    fbar = np.empty(alphas.size)
    horizons, converged = [], []
    for k, alpha in enumerate(alphas):
        if method == "block":
            gen = block_reduced_generator(spin_s, hs, lam, float(alpha), ell)
            target = target_s
        else:
            gen, target, *_ = _composite_setup(
                n, ell, float(alpha), lam, hs_params, ha_params
            )
        fbar[k], hor, conv = _fbar_block(gen, target, t0, fbar_tol, t_cap, dt)
        horizons.append(hor)
        converged.append(conv)

    peak_idx = int(np.argmax(fbar))
    fwhm = _fwhm(alphas, fbar, peak_idx)
    return SweepResult(
        alphas=alphas,
        fbar=fbar,
        peak_alpha=float(alphas[peak_idx]),
        fwhm=fwhm,
        metadata={
            "n": n, "ell": ell, "lam": lam, "method": method,
            "system": vars(hs_params).copy(), "ancilla": vars(ha_params).copy(),
            "horizons": horizons, "converged": converged,
            "t0": t0, "t_cap": t_cap, "dt": dt, "fbar_tol": fbar_tol,
        },
    )


def _fwhm(xs: np.ndarray, ys: np.ndarray, peak_idx: int) -> float:
    """Width at half height above the baseline minimum, linearly interpolated."""
    base = float(ys.min())
    half = 0.5 * (ys[peak_idx] + base)

    def crossing(direction: int) -> float | None:
        i = peak_idx
        while 0 <= i + direction < xs.size:
            j = i + direction
            if ys[j] < half <= ys[i]:
                frac = (ys[i] - half) / (ys[i] - ys[j])
                return float(xs[i] + frac * (xs[j] - xs[i]))
            i = j
        return None

    left, right = crossing(-1), crossing(+1)
    if left is None or right is None:
        return float("nan")
    return abs(right - left)


def exact_unitary_fbar(h: np.ndarray, psi: np.ndarray, degeneracy_tol: float = 1e-9) -> float:
    """Infinite-horizon average of |<psi| e^{-iHt} |psi>|^2, exactly.

    Equals sum over distinct eigenvalues of the squared total weight of psi
    on that eigenspace (cross terms between distinct energies average out).
    """
    w, v = np.linalg.eigh(h)
    amps = np.abs(v.conj().T @ psi) ** 2
    total = 0.0
    k = 0
    while k < w.size:
        j = k
        weight = 0.0
        while j < w.size and w[j] - w[k] <= degeneracy_tol:
            weight += amps[j]
            j += 1
        total += weight**2
        k = j
    return float(total)


def residual_scaling(
    ns,
    ell: float = 0.5,
    lam: float = 0.1,
    hs_params: SystemParams | None = None,
    alpha: float | None = None,
    t0: float = 100.0,
    fbar_tol: float = 1e-3,
    t_cap: float = 800.0,
    dt: float = 0.05,
) -> dict:
    """Fit 1 - Fbar(alpha_c, N) = c / N^p over the given boson numbers.

    At the exact cancellation point the block dynamics is unitary and the
    infinite-horizon average is evaluated spectrally; off the point the
    doubling-horizon average is used. Residuals below 1e-12 are excluded
    from the log-log fit; if every residual is below 1e-9 the fit is skipped
    with status "already cancelled".
    """
    ns = list(ns)
    if len(ns) < 2:
        raise ValueError("need at least two N values for a scaling fit")
    if alpha is None:
        alpha = -1.0 / ell
    base = hs_params or FIG_SYSTEM

    fbars = []
    for n in ns:
        spin_s = make_spin(n + 1)
        hs = build_hs(replace(base, n_bosons=n))
        rate = lam * (1.0 + alpha * ell) ** 2
        psi = noon_state(n)
        if rate < 1e-14:
            h_block = hs + (alpha * ell) * spin_s.jz
            fbars.append(exact_unitary_fbar(h_block, psi))
        else:
            gen = block_reduced_generator(spin_s, hs, lam, alpha, ell)
            val, _, _ = _fbar_block(
                gen, np.outer(psi, psi.conj()), t0, fbar_tol, t_cap, dt
            )
            fbars.append(val)

    resid = 1.0 - np.array(fbars)
    report = {
        "ns": ns,
        "fbar": fbars,
        "residual": resid.tolist(),
        "alpha_c": alpha,
        "ell": ell,
        "lam": lam,
    }
    if np.all(resid < 1e-9):
        report.update(status="already cancelled", exponent=None, prefactor=None)
        return report
    keep = resid > 1e-12
    if keep.sum() < 2:
        raise ValueError("fewer than two usable residuals; scaling fit degenerate")
    slope, intercept = np.polyfit(np.log(np.array(ns)[keep]), np.log(resid[keep]), 1)
    report.update(
        status="fitted",
        exponent=float(-slope),
        prefactor=float(math.exp(intercept)),
        ns_used=[int(n) for n, k in zip(ns, keep) if k],
    )
    return report


def _coherence_rate(times: np.ndarray, coh: np.ndarray) -> tuple[float, bool]:
    """Linear coefficient of -log(coh/coh0) fit as k*t + q*t^2.

    The quadratic term absorbs the phase-beat curvature between ancilla
    blocks, leaving k as the mean exponential rate; exact for any block
    mixture in the short-time window. Returns (k, decayed?).
    """
    c0 = coh[0]
    if c0 <= 0.0:
        raise ValueError("initial coherence vanishes; nothing to fit")
    y = -np.log(np.maximum(coh / c0, 1e-300))
    if np.max(np.abs(y)) < 1e-12:
        return 0.0, False
    t = times
    a = np.column_stack([t, t**2])
    k, _q = np.linalg.lstsq(a, y, rcond=None)[0]
    return float(k), True


def _noon_coherence(rho_s: np.ndarray) -> float:
    return float(np.abs(rho_s[0, -1]))


def robustness_run(
    lam: float,
    ell: float,
    delta: float,
    sigma2: float,
    n: int = 1,
    t_final: float | None = None,
    d_a: int = 6,
    realization: str = "auto",
    n_points: int = 61,
) -> dict:
    """Residual dephasing of a NOON coherence under imperfect ancilla prep.

    Route (a): full composite propagation from NOON (x) (mixed ancilla state)
    at alpha = -1/ell. Route (b): the effective single-system generator with
    the closed-form residual rate. Both coherence decays are fitted the same
    way and reported on the residual-rate scale (fit / (N^2/2)).

    realization: "gaussian" uses the literal discrete-Gaussian ancilla
    weights; "two_point" uses (1-eps) P_ell + eps P_{ell+1} with
    eps = delta^2 + sigma2, which has the same residual rate by construction;
    "auto" starts Gaussian and switches to two_point when the finite integer
    spacing of the Jz spectrum pins the Gaussian onto the projector (tiny
    sigma cannot be represented on the lattice), recording why.
    """
    alpha = -1.0 / ell
    gamma_formula = residual_rate(lam, ell, delta, sigma2)
    spin_s = make_spin(n + 1)
    spin_a = make_spin(d_a)
    hs = np.zeros((n + 1, n + 1), dtype=complex)

    nominal = delta**2 + sigma2
    realization_used, pin_reason = realization, None
    if realization in ("gaussian", "auto"):
        rho_a = mixed_ancilla_state(spin_a, MixedAncilla(ell, delta, sigma2))
        eigs = np.diag(spin_a.jz).real
        p = np.diag(rho_a).real
        mean = float(p @ eigs)
        var = float(p @ (eigs - mean) ** 2)
        achieved = (mean - ell) ** 2 + var
        if realization == "auto" and nominal > 0.0 and achieved < 0.5 * nominal:
            realization_used = "two_point"
            pin_reason = (
                "discrete Gaussian pinned to the projector: lattice-achievable "
                f"delta^2+sigma^2 = {achieved:.3e} vs nominal {nominal:.3e}"
            )
        else:
            realization_used = "gaussian"
    if realization_used == "two_point":
        eps = nominal
        rho_a = (1.0 - eps) * projector(spin_a, ell) + eps * projector(spin_a, ell + 1.0)

    # full composite route
    h0 = build_h0(hs, np.zeros((d_a, d_a), dtype=complex), alpha)
    gen = assemble_generator(build_correlation(lam, alpha), spin_s, spin_a, h0)
    rho0 = mc.kron(_noon_projector(n), rho_a)
    if t_final is None:
        side_rate = 0.5 * lam * (1.0 + alpha * (ell + 1.0)) ** 2 * n**2
        t_final = 0.4 / max(abs(alpha) * n, side_rate, 1e-6)
    times = np.linspace(0.0, t_final, n_points)
    coh_full = np.array(
        [
            _noon_coherence(mc.partial_trace_ancilla(r, n + 1, d_a))
            for r in propagate(gen, rho0, times)
        ]
    )
    k_full, decayed_full = _coherence_rate(times, coh_full)

    # effective single-system route
    gen_eff = mixed_ancilla_generator(spin_s, hs, lam, ell, delta, sigma2)
    coh_eff = np.array(
        [_noon_coherence(r) for r in propagate(gen_eff, _noon_projector(n), times)]
    )
    k_eff, decayed_eff = _coherence_rate(times, coh_eff)

    scale = 0.5 * n**2
    gamma_fit = k_full / scale
    gamma_fit_eff = k_eff / scale
    if decayed_full and decayed_eff:
        rel = abs(k_full - k_eff) / abs(k_eff)
    else:
        rel = 0.0 if (not decayed_full and not decayed_eff) else float("nan")
    return {
        "gamma_fit": gamma_fit,
        "gamma_fit_effective": gamma_fit_eff,
        "gamma_formula": gamma_formula,
        "coherence_rate_fit": k_full,
        "coherence_rate_prediction": gamma_formula * scale,
        "relative_error": rel,
        "relative_error_vs_formula": (
            abs(gamma_fit - gamma_formula) / gamma_formula if gamma_formula > 0 else 0.0
        ),
        "tau_inverse_rate": (1.0 / gamma_formula) if gamma_formula > 0 else None,
        "tau_epsilon_scaled": (
            1.0 / (PREP_INFIDELITY * gamma_formula) if gamma_formula > 0 else None
        ),
        "epsilon": PREP_INFIDELITY,
        # published reference values for this parameter point; they differ
        # from gamma_formula and 1/gamma_formula, so both sides are recorded
        "published_gamma": 8e-5,
        "published_tau": 1.25e4,
        "decayed": decayed_full,
        "realization_used": realization_used,
        "pinning_note": pin_reason,
        "times": times,
        "coherence_full": coh_full,
        "coherence_effective": coh_eff,
        "params": {
            "lam": lam, "ell": ell, "delta": delta, "sigma2": sigma2,
            "n": n, "d_a": d_a, "t_final": t_final,
        },
    }


def _min_ancilla_dim(ell: float) -> int:
    twice = round(2.0 * abs(ell))
    return max(2, twice + 1)


def colored_noise_run(
    kind: str,
    lam: float,
    ell: float,
    satisfy_condition: bool,
    n_traj: int = 1000,
    n: int = 1,
    tau_c: float = 5.0,
    f_band: tuple[float, float] = (1e-3, 1e1),
    t_final: float = 20.0,
    dt: float = 1e-3,
    record_stride: int = 50,
    master_seed: int = 7,
    rates: GenericNoiseRates | None = None,
) -> dict:
    """Ensemble fidelity decay of NOON (x) |ell> under one noise setting.

    satisfy_condition=True couples the channels so the residual spectral
    weight vanishes (rank-1 with alpha = -1/ell, or caller-supplied rates);
    False is the uncorrelated baseline with the same system-channel strength.
    The decay rate is a least-squares slope of log(2F - 1) over the window
    where that coherence proxy exceeds 1e-3.
    """
    if satisfy_condition:
        corr = rates.to_correlation() if rates is not None else build_correlation(lam, -1.0 / ell)
    else:
        corr = build_correlation(lam, 0.0)
    model = NoiseModel(kind=kind, corr=corr, tau_c=tau_c, f_band=f_band)

    spin_s = make_spin(n + 1)
    spin_a = make_spin(_min_ancilla_dim(ell))
    d = spin_s.dim * spin_a.dim
    h0 = np.zeros((d, d), dtype=complex)
    eye_s = np.eye(spin_s.dim, dtype=complex)
    eye_a = np.eye(spin_a.dim, dtype=complex)
    jump_ops = [
        mc.kron(spin_s.jz, eye_a),
        mc.kron(eye_s, spin_a.jz),
        mc.kron(spin_s.jz, spin_a.jz),
    ]
    eigs = np.diag(spin_a.jz).real
    e_ell = np.zeros(spin_a.dim, dtype=complex)
    e_ell[int(np.argmin(np.abs(eigs - ell)))] = 1.0
    psi0 = np.kron(noon_state(n), e_ell)

    config = TrajectoryConfig(
        dt=dt, t_final=t_final, n_traj=n_traj,
        master_seed=master_seed, record_stride=record_stride,
    )
    ens = ensemble_density(config, model, h0, jump_ops, psi0)
    target = np.outer(psi0, psi0.conj())
    fid = np.array([max(np.trace(r @ target).real, 0.0) for r in ens.rho_avg])

    proxy = 2.0 * fid - 1.0
    keep = proxy > 1e-3
    if keep.sum() < 2:
        raise RuntimeError("coherence proxy fell below the fit floor immediately")
    slope = np.polyfit(ens.times[keep], np.log(proxy[keep]), 1)[0]
    rate = max(float(-slope), 0.0)
    return {
        "rate": rate,
        "times": ens.times,
        "fidelity": fid,
        "kind": kind,
        "satisfy_condition": satisfy_condition,
        "n_traj": n_traj,
        "max_norm_drift": ens.max_norm_drift,
    }


def colored_noise_comparison(
    kind: str,
    lam: float,
    ell: float,
    n_traj: int = 1000,
    rates: GenericNoiseRates | None = None,
    **kwargs,
) -> dict:
    """Satisfied-vs-violated decay-rate comparison for one noise kind."""
    sat = colored_noise_run(
        kind, lam, ell, True, n_traj=n_traj, rates=rates, **kwargs
    )
    base = colored_noise_run(kind, lam, ell, False, n_traj=n_traj, **kwargs)
    ratio = sat["rate"] / base["rate"] if base["rate"] > 0.0 else float("nan")
    return {
        "kind": kind,
        "rate_satisfied": sat["rate"],
        "rate_violated": base["rate"],
        "ratio": ratio,
        "times": sat["times"],
        "fidelity_satisfied": sat["fidelity"],
        "fidelity_violated": base["fidelity"],
    }
