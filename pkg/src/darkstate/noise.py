"""Correlated classical noise: correlation matrices and path samplers.

Three scalar processes (w_S, w_A, w_SA) drive the jump operators
Jz_S (x) I, I (x) Jz_A and Jz_S (x) Jz_A. Their second moments are collected
in a 3x3 matrix; the ideal protocol uses the rank-1 form

    Lambda = lam * v v^T,   v = (1, 1, alpha),

in which channels 1 and 2 carry identical realizations and the interaction
channel is the same realization scaled by alpha.

Path samplers return time-step integrals I_k = int w_k dt (not point values),
which is what the trajectory stepper consumes. White and OU increments are
sampled from their exact joint distributions, so there is no discretization
bias in the noise itself. 1/f noise is synthesized as a sum of equal-variance
OU components with correlation times log-spaced over [1/f_max, 1/f_min]; on
the interior of that band the summed spectrum is flat in log-frequency, i.e.
proportional to 1/f.

Normalization: white and OU unit processes have time-integrated covariance 1
(so tau_c -> 0 recovers white statistics); the 1/f unit process has unit
stationary variance (no white limit exists). `lam` scales the covariance, so
doubling lam doubles every spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy.signal import lfilter

_MASK64 = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_stream_seed(master_seed: int, traj_index: int, channel: int = 0) -> int:
    """Mix (master seed, trajectory index, channel) into one 64-bit stream seed.

    Pure function of its integer arguments (splitmix64 chain); documented as
    stable across releases so archived run manifests stay reproducible.
    """
    s = _splitmix64(master_seed & _MASK64)
    s = _splitmix64(s ^ (traj_index & _MASK64))
    s = _splitmix64(s ^ (channel & _MASK64))
    return s


@dataclass
class CorrelationMatrix:
    """3x3 PSD second-moment matrix of (w_S, w_A, w_SA).

    `lam`/`alpha` are set when the matrix has the ideal rank-1 structure;
    they are None for a general PSD matrix (deliberately broken correlations).
    """

    m: np.ndarray
    lam: float | None = None
    alpha: float | None = None

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        if m.shape != (3, 3):
            raise ValueError("correlation matrix must be 3x3")
        if not np.allclose(m, m.T, atol=1e-12):
            raise ValueError("correlation matrix must be symmetric")
        wmin = float(np.min(np.linalg.eigvalsh(m)))
        if wmin < -1e-10 * max(1.0, float(np.max(np.abs(m)))):
            raise ValueError(f"correlation matrix not PSD (min eigenvalue {wmin})")
        self.m = m

    def factor(self) -> np.ndarray:
        """Matrix L with m = L L^T, shape (3, k); exact 1-column L for rank-1."""
        if self.lam is not None and self.alpha is not None:
            v = np.array([1.0, 1.0, self.alpha])
            return (math.sqrt(self.lam) * v)[:, None]
        w, u = np.linalg.eigh(self.m)
        keep = w > 1e-12 * max(1.0, float(w[-1]))
        return u[:, keep] * np.sqrt(w[keep])


def build_correlation(lam: float, alpha: float) -> CorrelationMatrix:
    """Rank-1 matrix lam * (1,1,alpha)(1,1,alpha)^T."""
    if lam <= 0.0:
        raise ValueError(f"lam must be positive, got {lam}")
    v = np.array([1.0, 1.0, alpha])
    return CorrelationMatrix(m=lam * np.outer(v, v), lam=lam, alpha=alpha)


def general_correlation(m) -> CorrelationMatrix:
    """Wrap an arbitrary PSD 3x3 matrix (no rank-1 structure assumed)."""
    return CorrelationMatrix(m=np.asarray(m, dtype=float))


@dataclass
class GenericNoiseRates:
    """Spectral weights (lam_S, lam_{S,SA}, lam_{SA,SA}) of an arbitrary
    stationary noise pair (w_S, w_SA); the ancilla channel is taken to carry
    the same statistics as w_S."""

    lam_s: float
    lam_s_sa: float
    lam_sa_sa: float

    def __post_init__(self):
        g = np.array([[self.lam_s, self.lam_s_sa], [self.lam_s_sa, self.lam_sa_sa]])
        wmin = float(np.min(np.linalg.eigvalsh(g)))
        if wmin < -1e-10 * max(1.0, float(np.max(np.abs(g)))):
            raise ValueError("rates do not form a PSD 2x2 spectral matrix")

    def to_correlation(self) -> CorrelationMatrix:
        s, c, q = self.lam_s, self.lam_s_sa, self.lam_sa_sa
        m = np.array([[s, s, c], [s, s, c], [c, c, q]])
        return CorrelationMatrix(m=m)


def cancellation_residual(
    r: GenericNoiseRates, ell: float, scale_alpha: float = 1.0
) -> float:
    """Residual dephasing weight lam_S + 2 ell lam_{S,SA} + ell^2 lam_{SA,SA}.

    `scale_alpha` rescales the interaction channel (deterministic coupling
    multiplying w_SA); with lam-derived rates (lam, lam*alpha, lam*alpha^2)
    and scale_alpha=1 this is lam*(1 + ell*alpha)^2, zero at alpha = -1/ell.
    """
    a = scale_alpha
    return r.lam_s + 2.0 * ell * a * r.lam_s_sa + (ell * a) ** 2 * r.lam_sa_sa


@dataclass
class NoiseModel:
    """Noise kind plus its correlation structure and spectral parameters."""

    kind: str
    corr: CorrelationMatrix
    tau_c: float = 0.0
    f_band: tuple[float, float] = (1e-3, 1e1)
    octave_density: int = 3

    def __post_init__(self):
        if self.kind not in ("white", "ou", "one_over_f"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "ou" and self.tau_c <= 0.0:
            raise ValueError("ou noise needs tau_c > 0")
        if self.kind == "one_over_f":
            lo, hi = self.f_band
            if not (0.0 < lo < hi):
                raise ValueError(f"invalid 1/f band {self.f_band}")
            if self.octave_density < 1:
                raise ValueError("octave_density must be >= 1")


@dataclass
class NoisePath:
    """Integrated increments I[n, k] = int_{t_n}^{t_n+dt} w_k dt, k in (S, A, SA)."""

    dt: float
    n_steps: int
    increments: np.ndarray

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        if inc.shape != (self.n_steps, 3):
            raise ValueError(f"increments must be ({self.n_steps}, 3)")
        self.increments = inc


def _unit_white(rng: np.random.Generator, dt: float, n_steps: int) -> np.ndarray:
    return math.sqrt(dt) * rng.standard_normal(n_steps)


def _ou_integral_moments(dt: float, tau: float) -> tuple[float, float, float, float]:
    """(a, Var u, Var w, Cov uw) of the exact OU (value, integral) update for
    the unit process with stationary variance 1/(2 tau)."""
    eps = dt / tau
    a = math.exp(-eps)
    one_a = -math.expm1(-eps)
    one_a2 = -math.expm1(-2.0 * eps)
    var_u = one_a2 / (2.0 * tau)
    # f = dt - 2 tau (1-a) + (tau/2)(1-a^2), evaluated stably
    if eps < 1e-4:
        f = tau * eps**3 * (1.0 / 3.0 - eps / 4.0 + 7.0 * eps**2 / 60.0)
    else:
        f = tau * (eps - 2.0 * one_a + 0.5 * one_a2)
    var_w = f  # sigma^2 tau^2 = 1 for the unit process
    cov_uw = 0.5 * one_a**2
    return a, var_u, var_w, cov_uw


def _unit_ou(
    rng: np.random.Generator, dt: float, n_steps: int, tau: float, variance: float
) -> np.ndarray:
    """Exact integrated increments of one OU component with stationary
    variance `variance` and correlation time tau.

    Consumes, in order: one normal for x(0), then (n_steps, 2) normals for the
    per-step joint (value, integral) updates.
    """
    a, var_u, var_w, cov_uw = _ou_integral_moments(dt, tau)
    # scale from the unit process (stationary var 1/(2 tau)) to `variance`
    s2 = variance * 2.0 * tau
    var_u, var_w, cov_uw = s2 * var_u, s2 * var_w, s2 * cov_uw

    x0 = rng.standard_normal() * math.sqrt(variance)
    z = rng.standard_normal((n_steps, 2))
    c11 = math.sqrt(var_u)
    c21 = cov_uw / c11 if c11 > 0.0 else 0.0
    c22 = math.sqrt(max(var_w - c21**2, 0.0))
    u = c11 * z[:, 0]
    w = c21 * z[:, 0] + c22 * z[:, 1]

    # x_{n+1} = a x_n + u_n, run as an AR(1) filter from x0
    x_next, _ = lfilter([1.0], [1.0, -a], u, zi=np.array([a * x0]))
    x_start = np.concatenate(([x0], x_next[:-1]))
    one_a = -math.expm1(-dt / tau)
    return tau * one_a * x_start + w


def _one_over_f_taus(f_band: tuple[float, float], octave_density: int) -> np.ndarray:
    """Correlation times of the OU components, log-spaced with
    `octave_density` components per decade of the band."""
    tau_min, tau_max = 1.0 / f_band[1], 1.0 / f_band[0]
    decades = math.log10(tau_max / tau_min)
    m = max(2, int(math.ceil(decades * octave_density)) + 1)
    return np.logspace(math.log10(tau_min), math.log10(tau_max), m)


def _unit_one_over_f(
    rng: np.random.Generator, dt: float, n_steps: int, model: NoiseModel
) -> np.ndarray:
    taus = _one_over_f_taus(model.f_band, model.octave_density)
    out = np.zeros(n_steps)
    v = 1.0 / taus.size  # equal variance per component, unit total
    for tau in taus:
        out += _unit_ou(rng, dt, n_steps, float(tau), v)
    return out


def _spread_channels(unit_paths: np.ndarray, corr: CorrelationMatrix) -> np.ndarray:
    """Map (n_steps, k) unit-process increments to the 3 channels via the
    correlation factor."""
    fac = corr.factor()  # (3, k)
    if unit_paths.ndim == 1:
        unit_paths = unit_paths[:, None]
    if unit_paths.shape[1] != fac.shape[1]:
        raise ValueError("factor rank does not match number of unit processes")
    return unit_paths @ fac.T


def _zero_path(dt: float, n_steps: int) -> NoisePath:
    # rank-0 correlation matrix: no stochastic content at all
    return NoisePath(dt=dt, n_steps=n_steps, increments=np.zeros((n_steps, 3)))


def sample_white(model: NoiseModel, dt: float, n_steps: int, stream_seed: int) -> NoisePath:
    rng = np.random.Generator(np.random.PCG64(stream_seed))
    k = model.corr.factor().shape[1]
    if k == 0:
        return _zero_path(dt, n_steps)
    units = np.column_stack([_unit_white(rng, dt, n_steps) for _ in range(k)])
    return NoisePath(dt=dt, n_steps=n_steps, increments=_spread_channels(units, model.corr))


def sample_ou(model: NoiseModel, dt: float, n_steps: int, stream_seed: int) -> NoisePath:
    rng = np.random.Generator(np.random.PCG64(stream_seed))
    k = model.corr.factor().shape[1]
    if k == 0:
        return _zero_path(dt, n_steps)
    v = 1.0 / (2.0 * model.tau_c)  # unit integrated covariance
    units = np.column_stack(
        [_unit_ou(rng, dt, n_steps, model.tau_c, v) for _ in range(k)]
    )
    return NoisePath(dt=dt, n_steps=n_steps, increments=_spread_channels(units, model.corr))


def sample_one_over_f(
    model: NoiseModel, dt: float, n_steps: int, stream_seed: int
) -> NoisePath:
    rng = np.random.Generator(np.random.PCG64(stream_seed))
    k = model.corr.factor().shape[1]
    if k == 0:
        return _zero_path(dt, n_steps)
    units = np.column_stack(
        [_unit_one_over_f(rng, dt, n_steps, model) for _ in range(k)]
    )
    return NoisePath(dt=dt, n_steps=n_steps, increments=_spread_channels(units, model.corr))


_SAMPLERS = {"white": sample_white, "ou": sample_ou, "one_over_f": sample_one_over_f}


def sample_path(model: NoiseModel, dt: float, n_steps: int, stream_seed: int) -> NoisePath:
    """Dispatch to the sampler for model.kind."""
    if dt <= 0.0 or n_steps < 1:
        raise ValueError("need dt > 0 and n_steps >= 1")
    return _SAMPLERS[model.kind](model, dt, n_steps, stream_seed)
