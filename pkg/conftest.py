"""
Optimized designs shared by the acceptance tests.

The modes sit 200 kHz apart so the robust half (below the COM mode) is
dominated by one mode, and the outside seed sits closer to the COM mode
than the half does. Each design is optimized once per session.
"""

import sys
from pathlib import Path

import pytest

# Add the project root to the path
sys.path.insert(0, str(Path(__file__).parent))

from gate_system.core.config_manager import ArobustSettings, KernelSettings
from gate_system.core.mode_model import ModeSpec, two_ion_modes
from gate_system.core.units import HALF_ANGLE, TWO_PI
from gate_system.kernel.gate_kernel import IonPair
from gate_system.optimizer.robust_optimizer import (
    FFSuppression,
    OptimizerConfig,
    OptimizerReport,
    RobustPulseOptimizer,
)

DESIGN_COM = TWO_PI * 2.00e6
DESIGN_TILT = TWO_PI * 1.80e6
DESIGN_TIME = 200e-6
DESIGN_PAIR = IonPair(0, 1)
FF_FREQ_HZ = 5e3


def design_modes() -> ModeSpec:
    return two_ion_modes(DESIGN_COM, DESIGN_TILT, 0.1)


def design_config(**overrides) -> OptimizerConfig:
    """Robust pi/8 half, 2 x 14 segments, detunings 45-70 kHz below the COM mode."""
    values = dict(
        gate_time=DESIGN_TIME,
        max_amplitude=TWO_PI * 400e3,
        detuning_bounds=(DESIGN_COM - TWO_PI * 70e3, DESIGN_COM - TWO_PI * 45e3),
        num_segments=28,
        target_angle=HALF_ANGLE,
        initial_guess=DESIGN_COM - TWO_PI * 55e3,
        num_starts=4,
    )
    values.update(overrides)
    return OptimizerConfig(**values)


def run_design(config: OptimizerConfig) -> OptimizerReport:
    optimizer = RobustPulseOptimizer(config, design_modes(), DESIGN_PAIR, KernelSettings(), workers=1)
    return optimizer.optimize(ArobustSettings())


@pytest.fixture(scope="session")
def robust_half() -> OptimizerReport:
    return run_design(design_config())


@pytest.fixture(scope="session")
def plain_half() -> OptimizerReport:
    """Same constraints with only the residual displacement closed."""
    return run_design(design_config(robust=False))


@pytest.fixture(scope="session")
def ff_half() -> OptimizerReport:
    return run_design(design_config(ff_suppression=FFSuppression(freq_hz=FF_FREQ_HZ)))


@pytest.fixture(scope="session")
def outside_half() -> OptimizerReport:
    """Robust -pi/8 half above the COM mode, nearer to it than ``robust_half``."""
    return run_design(design_config(
        detuning_bounds=(DESIGN_COM + TWO_PI * 1e3, DESIGN_COM + TWO_PI * 20e3),
        target_angle=-HALF_ANGLE,
        initial_guess=DESIGN_COM + TWO_PI * 15e3,
    ))
