"""Correlated-dephasing cancellation toolkit.

A system spin and an ancilla spin share dephasing noise channels with a
tunable interaction weight alpha. At alpha = -1/ell the combined generator
annihilates every state of the form rho_S (x) P_ell: dissipation cancels and
the block evolves unitarily. The package builds the composite generators,
propagates master equations, runs correlated stochastic-trajectory
ensembles (white, OU, 1/f), and drives the figure-grade sweeps, robustness
fits, and colored-noise comparisons behind the `darkstate` CLI.
"""

from .matrixcore import (
    dag,
    expm,
    expm_hermitian,
    frobenius,
    kron,
    partial_trace_ancilla,
    trace_distance,
)
from .spinops import (
    LaserParams,
    PlaquetteParams,
    SpinAlgebra,
    SystemParams,
    build_h0,
    build_ha,
    build_heff,
    build_hs,
    build_plaquette,
    laser_derived,
    make_spin,
    noon_state,
    projector,
)
from .noise import (
    CorrelationMatrix,
    GenericNoiseRates,
    NoiseModel,
    NoisePath,
    build_correlation,
    cancellation_residual,
    derive_stream_seed,
    general_correlation,
    sample_path,
)
from .lindblad import (
    DriftError,
    GkslGenerator,
    MixedAncilla,
    add_case_study_terms,
    assemble_generator,
    assemble_split_form,
    block_reduced_generator,
    cross_term,
    dark_state_residual,
    dissipator,
    mixed_ancilla_generator,
    mixed_ancilla_state,
    propagate,
    reduce_system,
    residual_rate,
)
from .trajectories import (
    ComparisonReport,
    EnsembleResult,
    TrajectoryConfig,
    backend_name,
    compare_to_master,
    ensemble_density,
    run_trajectory,
    step,
)
from .experiments import (
    FidelityTrace,
    SweepResult,
    alpha_sweep,
    colored_noise_comparison,
    colored_noise_run,
    exact_unitary_fbar,
    fidelity,
    noon_trace,
    residual_scaling,
    robustness_run,
    time_averaged_fidelity,
)

__version__ = "0.1.0"

__all__ = [
    "ComparisonReport",
    "CorrelationMatrix",
    "DriftError",
    "EnsembleResult",
    "FidelityTrace",
    "GenericNoiseRates",
    "GkslGenerator",
    "LaserParams",
    "MixedAncilla",
    "NoiseModel",
    "NoisePath",
    "PlaquetteParams",
    "SpinAlgebra",
    "SweepResult",
    "SystemParams",
    "TrajectoryConfig",
    "add_case_study_terms",
    "alpha_sweep",
    "assemble_generator",
    "assemble_split_form",
    "backend_name",
    "block_reduced_generator",
    "build_correlation",
    "build_h0",
    "build_ha",
    "build_heff",
    "build_hs",
    "build_plaquette",
    "cancellation_residual",
    "colored_noise_comparison",
    "colored_noise_run",
    "compare_to_master",
    "cross_term",
    "dag",
    "dark_state_residual",
    "derive_stream_seed",
    "dissipator",
    "ensemble_density",
    "exact_unitary_fbar",
    "expm",
    "expm_hermitian",
    "fidelity",
    "frobenius",
    "general_correlation",
    "kron",
    "laser_derived",
    "make_spin",
    "mixed_ancilla_generator",
    "mixed_ancilla_state",
    "noon_state",
    "noon_trace",
    "partial_trace_ancilla",
    "projector",
    "propagate",
    "reduce_system",
    "residual_rate",
    "residual_scaling",
    "robustness_run",
    "run_trajectory",
    "sample_path",
    "step",
    "time_averaged_fidelity",
    "trace_distance",
]
