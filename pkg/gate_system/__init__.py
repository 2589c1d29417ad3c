"""
A-Robust Gate Design Toolkit

Design, analysis and simulation of frequency-modulated Molmer-Sorensen pulses
that are robust to motional-mode frequency drift.
"""

__version__ = "1.0.0"
__author__ = "A-Robust Gate Design"

from .core.exceptions import (
    GateSystemError,
    InputValidationError,
    InfeasibleError,
    NumericalError,
)
from .core.config_manager import ConfigManager, get_config_manager
from .core.mode_model import ModeSpec, two_ion_modes, chain_modes, load_mode_spec, save_mode_spec
from .core.pulse import (
    Segment,
    DetuningOffset,
    PulseProgram,
    mirror_pulse,
    concatenate,
    apply_offset,
    load_pulse,
    save_pulse,
)

from .kernel.gate_kernel import (
    IonPair,
    GateDiagnostics,
    displacement,
    alpha_derivative,
    avg_displacement,
    rotation_angle,
    theta_derivative,
    weighted_theta_derivative,
    diagnostics,
)

from .optimizer.robust_optimizer import OptimizerConfig, OptimizerReport, RobustPulseOptimizer, optimize_fm
from .composite.arobust import AmSolution, two_ion_arobust, am_concatenate, nth_order_arobust

from .analysis.filter_function import (
    NoiseSpectrum,
    FilterFunctionCurve,
    ff_alpha,
    ff_theta,
    spectral_error,
)

from .simulation.lindblad import NoiseModel, LindbladResult, lindblad_sim
from .simulation.scan_sim import ScanResult, GateFit, ideal_populations, detuning_scan, repeated_gate_fit

from .jobs.job_config import JobConfig
from .jobs.pipeline_job import PipelineJob, run_job

__all__ = [
    # Errors
    "GateSystemError",
    "InputValidationError",
    "InfeasibleError",
    "NumericalError",

    # Core management
    "ConfigManager",
    "get_config_manager",

    # Modes and pulses
    "ModeSpec",
    "two_ion_modes",
    "chain_modes",
    "load_mode_spec",
    "save_mode_spec",
    "Segment",
    "DetuningOffset",
    "PulseProgram",
    "mirror_pulse",
    "concatenate",
    "apply_offset",
    "load_pulse",
    "save_pulse",

    # Gate kernel
    "IonPair",
    "GateDiagnostics",
    "displacement",
    "alpha_derivative",
    "avg_displacement",
    "rotation_angle",
    "theta_derivative",
    "weighted_theta_derivative",
    "diagnostics",

    # Design
    "OptimizerConfig",
    "OptimizerReport",
    "RobustPulseOptimizer",
    "optimize_fm",
    "AmSolution",
    "two_ion_arobust",
    "am_concatenate",
    "nth_order_arobust",

    # Analysis
    "NoiseSpectrum",
    "FilterFunctionCurve",
    "ff_alpha",
    "ff_theta",
    "spectral_error",

    # Simulation
    "NoiseModel",
    "LindbladResult",
    "lindblad_sim",
    "ScanResult",
    "GateFit",
    "ideal_populations",
    "detuning_scan",
    "repeated_gate_fit",

    # Jobs
    "JobConfig",
    "PipelineJob",
    "run_job",
]
