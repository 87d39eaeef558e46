"""Time-local master equation toolkit for a damped oscillator in a
Gaussian-cutoff bath: spectral kernels, drift/diffusion coefficients,
quantum and classical evolvers, and decoherence diagnostics."""

__version__ = "0.1.0"

from .spectral import (EnvironmentSpec, Finite, HighT, KernelSample, Mimic,
                       Zero, classical_noise_kernel, dissipation_kernel,
                       kernel_samples, noise_kernel, spectral_density)
from .coefficients import (CoefficientSeries, OscillatorSpec,
                           UnsupportedRegimeError, compute_coefficients,
                           hight_constants, interpolate,
                           write_coefficient_csv)
from .evolution import (GridTrajectory, MomentTrajectory, SingleGaussian,
                        SymmetricSuperposition, UncertaintyViolation,
                        evolve_grid, evolve_moments, gaussian_denergy,
                        initial_density, initial_moments, moment_flow,
                        packet_width_sq, read_snapshot, write_snapshot,
                        write_trajectory_csv)
from .classical import (ClassicalMomentTrajectory, FokkerPlanckTrajectory,
                        PhaseSpaceState, classical_moment_flow,
                        evolve_classical_moments, evolve_fokker_planck,
                        write_phase_space_csv)
from .diagnostics import (DECOHERENCE_THRESHOLD, DecoherenceTrace,
                          TimescaleEstimate, TimescaleReport,
                          activation_onset, decoherence_time_estimate,
                          fringe_contrast, fringe_visibility,
                          snapshot_visibility, thermal_activation_time,
                          timescale_report, write_decoherence_csv)
from .cli import ConfigError, RunConfig, main, parse_config, run_config

__all__ = [
    "EnvironmentSpec", "Zero", "Finite", "HighT", "Mimic", "KernelSample",
    "spectral_density", "dissipation_kernel", "noise_kernel",
    "classical_noise_kernel", "kernel_samples",
    "OscillatorSpec", "CoefficientSeries", "UnsupportedRegimeError",
    "compute_coefficients", "hight_constants", "interpolate",
    "write_coefficient_csv",
    "SingleGaussian", "SymmetricSuperposition", "UncertaintyViolation",
    "MomentTrajectory", "GridTrajectory", "moment_flow", "gaussian_denergy",
    "initial_moments", "initial_density", "packet_width_sq",
    "evolve_moments", "evolve_grid", "write_snapshot", "read_snapshot",
    "write_trajectory_csv",
    "PhaseSpaceState", "ClassicalMomentTrajectory", "FokkerPlanckTrajectory",
    "classical_moment_flow", "evolve_classical_moments",
    "evolve_fokker_planck", "write_phase_space_csv",
    "DECOHERENCE_THRESHOLD", "DecoherenceTrace", "TimescaleEstimate",
    "TimescaleReport", "fringe_visibility", "fringe_contrast",
    "snapshot_visibility", "decoherence_time_estimate", "activation_onset",
    "thermal_activation_time", "timescale_report", "write_decoherence_csv",
    "ConfigError", "RunConfig", "parse_config", "run_config", "main",
    "__version__",
]
