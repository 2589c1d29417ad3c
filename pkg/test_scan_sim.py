#!/usr/bin/env python3
"""
Scan and Simulation Tests

The reference gate is a calibrated single-loop half followed by its mirror:
both modes close at zero offset and the angle is exactly pi/4, so the
closed-form readout is known and the master-equation propagator can be
checked against it point by point. Random open pulses repeat that check, and
the optimized composites from conftest are scanned over five gates and under
typical trapped-ion noise.
"""

import math
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

# Add the project root to the path
sys.path.insert(0, str(Path(__file__).parent))

from conftest import DESIGN_PAIR, design_modes
from gate_system.composite.arobust import repeated_half_composite, two_ion_arobust
from gate_system.core.config_manager import ArobustSettings, SimulationSettings
from gate_system.core.exceptions import InputValidationError, TruncationError
from gate_system.core.mode_model import two_ion_modes
from gate_system.core.pulse import (
    PulseProgram,
    Segment,
    apply_offset,
    concatenate,
    mirror_pulse,
    scale_amplitude,
    uniform_fm_pulse,
)
from gate_system.core.units import HALF_ANGLE, TARGET_ANGLE, TWO_PI
from gate_system.kernel.gate_kernel import IonPair, diagnostics
from gate_system.optimizer.robust_optimizer import calibrate_angle
from gate_system.simulation.lindblad import NoiseModel, lindblad_sim, spin_observables, thermal_state
from gate_system.simulation.scan_sim import (
    SCAN_COLUMNS,
    detuning_scan,
    first_order_deficit,
    ideal_observables,
    ideal_populations,
    noise_sweep,
    repeated_gate_fit,
    sequence_fidelities,
    spin_state_from_gate,
    sweep_dataframe,
)

OMEGA_COM = TWO_PI * 2.02e6
OMEGA_TILT = TWO_PI * 2.00e6
GATE_TIME = 200e-6
LOOP_RATE = TWO_PI * 5e3
PAIR = IonPair(0, 1)
OFFSET = TWO_PI * 500.0


def create_test_modes():
    return two_ion_modes(OMEGA_COM, OMEGA_TILT, 0.1)


def loop_seed(loops: float, amplitude: float = TWO_PI * 20e3) -> PulseProgram:
    return uniform_fm_pulse([OMEGA_COM - loops * LOOP_RATE], GATE_TIME, amplitude)


def create_test_gate() -> PulseProgram:
    """Calibrated loop half plus its mirror: closed loops, angle pi/4."""
    half = calibrate_angle(loop_seed(1), create_test_modes(), PAIR, HALF_ANGLE)
    return concatenate(half, mirror_pulse(half, OMEGA_COM, OMEGA_TILT))


def test_noise_model_validation():
    """Nulls mean no dephasing; negative rates and non-positive T2 are rejected."""
    print("🧪 Testing noise model...")

    noise = NoiseModel.from_dict({
        'heating_rates': [10.0, 1.0],
        'motional_dephasing_T2': [None, 3e-3],
        'carrier_T2': None,
        'initial_nbar': [0.05],
    })
    assert math.isinf(noise.motional_dephasing_T2[0])
    assert math.isinf(noise.carrier_T2)

    exported = noise.to_dict()
    assert exported['motional_dephasing_T2'] == [None, 3e-3]
    assert exported['carrier_T2'] is None
    assert NoiseModel.from_dict(exported) == noise

    with pytest.raises(InputValidationError):
        NoiseModel.from_dict({'heating_rates': [-1.0]})
    with pytest.raises(InputValidationError):
        NoiseModel.from_dict({'motional_dephasing_T2': [0.0]})
    with pytest.raises(InputValidationError):
        NoiseModel.from_dict({'carrier_T2': -1.0})
    with pytest.raises(InputValidationError):
        NoiseModel.from_dict({'initial_nbar': [-0.1]})

    print("✅ Noise model test completed!")


def test_noise_model_resolution():
    resolved = NoiseModel(initial_nbar=[0.05]).resolved(3)
    assert resolved.initial_nbar == [0.05, 0.05, 0.05]
    assert resolved.heating_rates == [0.0, 0.0, 0.0]
    assert all(math.isinf(t) for t in resolved.motional_dephasing_T2)

    with pytest.raises(InputValidationError) as excinfo:
        NoiseModel(heating_rates=[1.0, 2.0]).resolved(3)
    assert excinfo.value.field == "heating_rates"

    typical = NoiseModel.trapped_ion_typical(2)
    assert typical.heating_rates == [10.0, 1.0]
    assert typical.carrier_T2 == 0.33

    quiet = NoiseModel.noiseless(2, nbar=0.1)
    assert quiet.initial_nbar == [0.1, 0.1]
    assert math.isinf(quiet.carrier_T2)


def test_thermal_state():
    ground = thermal_state(0.0, 5)
    assert ground[0, 0] == 1.0
    assert np.isclose(np.trace(ground), 1.0)

    warm = thermal_state(0.5, 40)
    populations = np.real(np.diag(warm))
    assert np.isclose(populations.sum(), 1.0)
    assert math.isclose(float(populations @ np.arange(40)), 0.5, rel_tol=1e-6)


def test_closed_loop_bell_fidelity():
    """With every mode closed the fidelity is cos^2(Theta - pi/4)."""
    print("🧪 Testing closed-form spin state...")

    for theta in (TARGET_ANGLE, 0.3, -0.2):
        rho_x = spin_state_from_gate(np.zeros((2, 2), dtype=complex), theta, np.zeros(2))
        observables = spin_observables(rho_x)
        assert math.isclose(observables.fidelity, math.cos(theta - TARGET_ANGLE) ** 2, abs_tol=1e-12) \
            or math.isclose(observables.fidelity, math.cos(theta + TARGET_ANGLE) ** 2, abs_tol=1e-12)
        assert math.isclose(observables.p00, math.cos(theta) ** 2, abs_tol=1e-12)
        assert math.isclose(observables.p11, math.sin(theta) ** 2, abs_tol=1e-12)
        assert abs(observables.p01_10) < 1e-12
        assert observables.min_eigenvalue > -1e-12

    gate = create_test_gate()
    p00, p11, p01_10, contrast, fidelity = ideal_populations(gate, create_test_modes(), PAIR)
    assert math.isclose(p00, 0.5, abs_tol=1e-9)
    assert math.isclose(p11, 0.5, abs_tol=1e-9)
    assert abs(p01_10) < 1e-9
    assert math.isclose(contrast, 1.0, abs_tol=1e-9)
    assert math.isclose(fidelity, 1.0, abs_tol=1e-9)

    print("✅ Closed-form spin state test completed!")


def test_first_order_deficit_matches_fidelity():
    """An angle overshoot of 0.01 rad costs sin^2(0.01) in fidelity."""
    modes = create_test_modes()
    gate = create_test_gate()
    overshoot = scale_amplitude(gate, math.sqrt((TARGET_ANGLE + 0.01) / TARGET_ANGLE))

    diag = diagnostics(overshoot, modes, PAIR)
    assert math.isclose(first_order_deficit(diag), 1e-4, rel_tol=1e-5)
    fidelity = ideal_observables(overshoot, modes, PAIR).fidelity
    assert math.isclose(1.0 - fidelity, math.sin(0.01) ** 2, rel_tol=1e-5)


def test_lindblad_matches_closed_form():
    """Noiseless propagation reproduces the closed form off resonance."""
    print("🧪 Testing master equation against the closed form...")

    modes = create_test_modes()
    shifted = apply_offset(create_test_gate(), OFFSET)
    ideal = ideal_observables(shifted, modes, PAIR)
    assert ideal.fidelity < 1.0

    result = lindblad_sim(shifted, modes, PAIR, n_max=10, settings=SimulationSettings())
    assert result.path == "factorized"
    assert result.num_segments == 2
    assert result.trace_error < 1e-10
    assert np.allclose(result.observables.as_tuple(), ideal.as_tuple(), atol=1e-6)
    assert set(result.to_dict()) >= {'fidelity', 'trace_error', 'nbar', 'path'}

    print(f"   Fidelity at +500 Hz: {ideal.fidelity:.8f}")
    print("✅ Master equation comparison completed!")


def create_random_pulse(rng: np.random.Generator) -> PulseProgram:
    """Two to six segments between the modes, at least 5 kHz from either."""
    num_segments = int(rng.integers(2, 7))
    detunings = OMEGA_COM - TWO_PI * rng.uniform(5e3, 15e3, num_segments)
    amplitudes = TWO_PI * rng.uniform(3e3, 12e3, num_segments)
    durations = rng.uniform(20e-6, 60e-6, num_segments)
    return PulseProgram(segments=tuple(
        Segment(float(t), float(d), float(a)) for t, d, a in zip(durations, detunings, amplitudes)
    ))


def test_lindblad_matches_closed_form_random_pulses():
    """Fifty random open pulses: the noiseless propagator agrees with the closed-form readout."""
    print("🧪 Testing master equation on random pulses...")

    modes = create_test_modes()
    settings = SimulationSettings()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        pulse = create_random_pulse(rng)
        ideal = ideal_observables(pulse, modes, PAIR)
        result = lindblad_sim(pulse, modes, PAIR, n_max=14, settings=settings)
        assert result.path == "factorized"
        gap = float(np.max(np.abs(np.subtract(result.observables.as_tuple(), ideal.as_tuple()))))
        worst = max(worst, gap)
        assert gap < 1e-6

    print(f"   Largest readout gap: {worst:.3e}")
    print("✅ Random-pulse master equation test completed!")


def test_lindblad_thermal_start():
    modes = create_test_modes()
    shifted = apply_offset(create_test_gate(), OFFSET)
    ideal = ideal_observables(shifted, modes, PAIR, nbar=0.1)
    noise = NoiseModel.noiseless(2, nbar=0.1)
    result = lindblad_sim(shifted, modes, PAIR, noise, n_max=12, settings=SimulationSettings())
    assert np.allclose(result.observables.as_tuple(), ideal.as_tuple(), atol=1e-6)
    assert ideal.fidelity < ideal_observables(shifted, modes, PAIR).fidelity


def test_heating_without_drive():
    """Heating alone raises the mean occupation linearly in time."""
    modes = create_test_modes()
    idle = uniform_fm_pulse([OMEGA_COM - LOOP_RATE], GATE_TIME, 0.0)
    noise = NoiseModel(heating_rates=[1000.0, 500.0])
    result = lindblad_sim(idle, modes, PAIR, noise, n_max=12, settings=SimulationSettings())

    assert np.allclose(result.nbar, [0.2, 0.1], rtol=1e-3)
    assert math.isclose(result.observables.p00, 1.0, abs_tol=1e-9)


def test_tensor_path():
    """Negligible carrier dephasing matches the factorized path; strong dephasing hurts."""
    print("🧪 Testing joint-state propagation...")

    modes = create_test_modes()
    shifted = apply_offset(create_test_gate(), OFFSET)
    settings = SimulationSettings()

    factorized = lindblad_sim(shifted, modes, PAIR, n_max=6, settings=settings)
    tensor = lindblad_sim(shifted, modes, PAIR, NoiseModel(carrier_T2=1e9), n_max=6, settings=settings)
    assert tensor.path == "tensor"
    assert np.allclose(tensor.observables.as_tuple(), factorized.observables.as_tuple(), atol=1e-8)
    assert np.allclose(tensor.nbar, factorized.nbar, atol=1e-8)

    dephased = lindblad_sim(shifted, modes, PAIR, NoiseModel(carrier_T2=1e-3), n_max=6, settings=settings)
    assert dephased.observables.fidelity < factorized.observables.fidelity - 0.01

    with pytest.raises(InputValidationError) as excinfo:
        lindblad_sim(shifted, modes, PAIR, NoiseModel(carrier_T2=1e-3), n_max=6,
                     settings=SimulationSettings(max_tensor_entries=1e3))
    assert excinfo.value.field == "n_max"

    print("✅ Joint-state propagation test completed!")


def test_truncation_is_detected():
    """A pulse that leaves a large displacement overflows a small Fock space."""
    modes = create_test_modes()
    open_pulse = loop_seed(1.5, TWO_PI * 100e3)
    with pytest.raises(TruncationError):
        lindblad_sim(open_pulse, modes, PAIR, n_max=2, settings=SimulationSettings())
    with pytest.raises(InputValidationError):
        lindblad_sim(open_pulse, modes, PAIR, n_max=1, settings=SimulationSettings())


def test_detuning_scan():
    """Rows follow the input offsets; threading changes nothing."""
    print("🧪 Testing detuning scan...")

    modes = create_test_modes()
    gate = create_test_gate()
    offsets = [OFFSET, 0.0, -OFFSET]
    scan = detuning_scan(gate, modes, PAIR, offsets, settings=SimulationSettings(), workers=1)

    frame = scan.to_dataframe()
    assert list(frame.columns) == SCAN_COLUMNS
    assert np.allclose(frame['offset_hz'], [500.0, 0.0, -500.0])
    assert math.isclose(frame['fidelity'][1], 1.0, abs_tol=1e-9)
    assert frame['fidelity'][0] < 1.0 and frame['fidelity'][2] < 1.0
    assert np.all(frame['err_alpha'] >= 0)
    assert math.isfinite(scan.even_parity_linear_term())
    assert not scan.noisy

    threaded = detuning_scan(gate, modes, PAIR, offsets, settings=SimulationSettings(), workers=2)
    pd.testing.assert_frame_equal(threaded.to_dataframe(), frame)

    centre = detuning_scan(gate, modes, PAIR, [0.0], settings=SimulationSettings())
    assert centre.max_even_deviation() < 1e-9
    with pytest.raises(InputValidationError):
        centre.even_parity_linear_term()
    with pytest.raises(InputValidationError):
        detuning_scan(gate, modes, PAIR, [0.0], repeats=0, settings=SimulationSettings())

    noiseless = detuning_scan(gate, modes, PAIR, [OFFSET], noise=NoiseModel.noiseless(2), n_max=10,
                              settings=SimulationSettings())
    assert noiseless.noisy
    assert math.isclose(noiseless.column('fidelity')[0], frame['fidelity'][0], abs_tol=1e-6)

    print("✅ Detuning scan test completed!")


def test_repeated_gate_fit():
    counts = [1, 5, 9, 13]
    fidelities = [1.0 - 0.001 - 0.002 * n for n in counts]
    fit = repeated_gate_fit(counts, fidelities)
    assert math.isclose(fit.gate_error, 0.002, rel_tol=1e-9)
    assert math.isclose(fit.intercept, 0.001, rel_tol=1e-6)
    assert fit.std_error < 1e-12
    assert math.isclose(fit.gate_fidelity, 0.998, rel_tol=1e-12)
    assert fit.to_dict()['counts'] == counts

    with pytest.raises(InputValidationError):
        repeated_gate_fit([1, 5], [0.9])
    with pytest.raises(InputValidationError):
        repeated_gate_fit([3, 3, 3], [0.9, 0.9, 0.9])


def test_sequence_fidelities():
    """4k+1 pi/4 rotations end on the same Bell state."""
    modes = create_test_modes()
    frame = sequence_fidelities(create_test_gate(), modes, PAIR, counts=[1, 5, 9, 13],
                                settings=SimulationSettings())
    assert list(frame.columns) == ['gate_count', 'fidelity']
    assert list(frame['gate_count']) == [1, 5, 9, 13]
    assert np.allclose(frame['fidelity'], 1.0, atol=1e-8)

    with pytest.raises(InputValidationError):
        sequence_fidelities(create_test_gate(), modes, PAIR, counts=[0, 1], settings=SimulationSettings())


def test_noise_sweep():
    """More heating means a lower fidelity; one scan per swept value."""
    print("🧪 Testing noise sweep...")

    modes = create_test_modes()
    gate = create_test_gate()
    sweep = noise_sweep(gate, modes, PAIR, [0.0], 'heating_rate', [0.0, 500.0], n_max=12,
                        settings=SimulationSettings())
    assert set(sweep) == {0.0, 500.0}
    quiet = sweep[0.0].column('fidelity')[0]
    heated = sweep[500.0].column('fidelity')[0]
    assert math.isclose(quiet, 1.0, abs_tol=1e-6)
    assert heated < quiet

    frame = sweep_dataframe(sweep, 'heating_rate')
    assert list(frame.columns) == ['heating_rate'] + SCAN_COLUMNS
    assert len(frame) == 2

    with pytest.raises(InputValidationError):
        noise_sweep(gate, modes, PAIR, [0.0], 'carrier_T2', [1.0])
    with pytest.raises(InputValidationError):
        noise_sweep(gate, modes, PAIR, [0.0], 'motional_dephasing_T2', [0.0])
    with pytest.raises(InputValidationError):
        noise_sweep(gate, modes, PAIR, [0.0], 'heating_rate', [-1.0])

    print(f"   Fidelity with 500 q/s heating: {heated:.6f}")
    print("✅ Noise sweep test completed!")


# Optimized composites from the shared designs in conftest.

def optimized_composites(half: PulseProgram):
    modes = design_modes()
    mirrored = two_ion_arobust(half, modes, DESIGN_PAIR, arobust_settings=ArobustSettings()).composite
    return modes, repeated_half_composite(half), mirrored


def test_detuning_scan_of_optimized_composites(robust_half):
    """Five gates: odd parity stays low and the A-robust even populations lose their linear slope."""
    print("🧪 Testing detuning scans of optimized composites...")

    modes, robust_gate, arobust_gate = optimized_composites(robust_half.pulse)
    offsets = TWO_PI * np.linspace(-200.0, 200.0, 9)
    settings = SimulationSettings()
    robust = detuning_scan(robust_gate, modes, DESIGN_PAIR, offsets, repeats=5, settings=settings, workers=1)
    arobust = detuning_scan(arobust_gate, modes, DESIGN_PAIR, offsets, repeats=5, settings=settings, workers=1)

    for scan in (robust, arobust):
        assert scan.repeats == 5
        assert float(np.max(scan.column('p01_10'))) < 0.01
    assert 3.0 * arobust.max_even_deviation() <= robust.max_even_deviation()
    assert arobust.even_parity_linear_term() < 0.1 * robust.even_parity_linear_term()

    print(f"   max |P00 - 1/2|: robust {robust.max_even_deviation():.3e}, "
          f"A-robust {arobust.max_even_deviation():.3e}")
    print("✅ Optimized composite scan test completed!")


def test_noisy_optimized_composites(robust_half):
    """Typical trapped-ion noise: errors in the 1e-3 to 3e-2 band, A-robust no worse off resonance."""
    print("🧪 Testing noisy optimized composites...")

    modes, robust_gate, arobust_gate = optimized_composites(robust_half.pulse)
    noise = NoiseModel.trapped_ion_typical(2)
    offsets = TWO_PI * np.array([0.0, -300.0, 300.0])
    settings = SimulationSettings()
    robust = detuning_scan(robust_gate, modes, DESIGN_PAIR, offsets, noise=noise, n_max=6, settings=settings)
    arobust = detuning_scan(arobust_gate, modes, DESIGN_PAIR, offsets, noise=noise, n_max=6, settings=settings)
    robust_error = 1.0 - robust.column('fidelity')
    arobust_error = 1.0 - arobust.column('fidelity')

    for error in (robust_error[0], arobust_error[0]):
        assert 1e-3 <= error <= 3e-2
    assert np.all(arobust_error[1:] <= robust_error[1:])

    print(f"   Error at 0 Hz: robust {robust_error[0]:.3e}, A-robust {arobust_error[0]:.3e}")
    print("✅ Noisy optimized composite test completed!")


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
