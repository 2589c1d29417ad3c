#!/usr/bin/env python3
"""
Gate Kernel Tests

Checks the closed-form segment primitives and gate quantities against
independent quadrature, finite differences and loop pulses with known
analytic answers.
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate

# Add the project root to the path
sys.path.insert(0, str(Path(__file__).parent))

from gate_system.core.config_manager import KernelSettings
from gate_system.core.exceptions import InputValidationError
from gate_system.core.mode_model import ModeSpec, two_ion_modes
from gate_system.core.pulse import PulseProgram, Segment, apply_offset, uniform_fm_pulse
from gate_system.core.units import TWO_PI
from gate_system.kernel.gate_kernel import (
    IonPair,
    ModeDrive,
    alpha_derivative,
    avg_displacement,
    diagnostics,
    displacement,
    displacement_trajectory,
    fit_power_law,
    offset_errors,
    perturbative_errors,
    rotation_angle,
    rotation_angle_trajectory,
    theta_derivative,
    weighted_theta_derivative,
)
from gate_system.kernel.primitives import ordered_pair_integral, segment_moments
from gate_system.kernel.quadrature import (
    alpha_derivative_quad,
    avg_displacement_quad,
    displacement_quad,
    rotation_angle_gauss_legendre,
)

OMEGA_COM = TWO_PI * 2.02e6
OMEGA_TILT = TWO_PI * 2.00e6
GATE_TIME = 200e-6
LOOP_RATE = TWO_PI * 5e3  # one loop per gate time; the modes sit 4 loop rates apart
PAIR = IonPair(0, 1)


def create_test_modes() -> ModeSpec:
    return two_ion_modes(OMEGA_COM, OMEGA_TILT, 0.1)


def create_test_pulse(num_segments: int = 6, seed: int = 11) -> PulseProgram:
    """Random FM/AM program around the two test modes."""
    rng = np.random.default_rng(seed)
    detunings = OMEGA_TILT + TWO_PI * rng.uniform(-30e3, 50e3, num_segments)
    amplitudes = TWO_PI * rng.uniform(10e3, 30e3, num_segments)
    durations = rng.uniform(15e-6, 40e-6, num_segments)
    return PulseProgram(segments=tuple(
        Segment(float(t), float(d), float(a)) for t, d, a in zip(durations, detunings, amplitudes)
    ))


def loop_pulse(loops: int, amplitude: float = TWO_PI * 20e3) -> PulseProgram:
    """Single segment whose COM detuning is ``loops`` loop rates: every mode closes."""
    return uniform_fm_pulse([OMEGA_COM - loops * LOOP_RATE], GATE_TIME, amplitude)


def complex_quad(func, a: float, b: float) -> complex:
    real, _ = integrate.quad(lambda s: func(s).real, a, b, epsabs=0.0, epsrel=1e-13, limit=200)
    imag, _ = integrate.quad(lambda s: func(s).imag, a, b, epsabs=0.0, epsrel=1e-13, limit=200)
    return complex(real, imag)


@pytest.mark.parametrize("mu,dt", [(0.3, 1.0), (5.0, 1.0), (-2.5, 0.4), (1e-7, 2.0)])
def test_segment_moments_match_quadrature(mu, dt):
    """Closed-form and series branches both reproduce the defining integral."""
    moments = segment_moments(np.array(mu), np.array(dt), 4, KernelSettings())
    for m in range(5):
        expected = complex_quad(lambda s: s ** m * np.exp(1j * mu * s), 0.0, dt)
        assert abs(moments[m] - expected) <= 1e-10 * dt ** (m + 1), f"moment {m} at mu*dt={mu * dt}"


def test_segment_moments_zero_frequency():
    """At mu = 0 the moments are dt**(m+1) / (m+1) exactly."""
    moments = segment_moments(np.zeros(3), np.array([0.5, 1.0, 2.0]), 3, KernelSettings())
    assert moments.shape == (4, 3)
    for m in range(4):
        assert np.allclose(moments[m], np.array([0.5, 1.0, 2.0]) ** (m + 1) / (m + 1), rtol=1e-14)


@pytest.mark.parametrize("a,b,dt", [(2.0, 0.02, 1.0), (2.0, 3.0, 1.0), (-4.0, 0.08, 1.0), (0.0, -1.5, 2.0)])
def test_ordered_pair_integral_matches_dblquad(a, b, dt):
    """S = integral_0^dt ds integral_0^s du exp(i(a s + b u)) in both branches."""
    value = ordered_pair_integral(np.array(a), np.array(b), np.array(dt), KernelSettings())

    def part(component):
        result, _ = integrate.dblquad(
            lambda u, s: component(np.exp(1j * (a * s + b * u))),
            0.0, dt, lambda s: 0.0, lambda s: s, epsabs=1e-13, epsrel=1e-12,
        )
        return result

    expected = complex(part(np.real), part(np.imag))
    assert abs(complex(value) - expected) < 1e-10


def test_displacement_matches_quadrature():
    """Displacements and their frequency derivatives against adaptive quadrature."""
    print("🧪 Testing displacement against quadrature...")

    modes = create_test_modes()
    pulse = create_test_pulse()
    for ion in (0, 1):
        for mode in (0, 1):
            scale = 0.05 * pulse.peak_amplitude * pulse.total_duration
            assert abs(displacement(pulse, modes, ion, mode)
                       - displacement_quad(pulse, modes, ion, mode)) < 1e-10 * scale
            assert abs(alpha_derivative(pulse, modes, ion, mode)
                       - alpha_derivative_quad(pulse, modes, ion, mode)) < 1e-10 * scale * pulse.total_duration
            assert abs(avg_displacement(pulse, modes, ion, mode)
                       - avg_displacement_quad(pulse, modes, ion, mode)) < 1e-10 * scale

    print("✅ Displacement quadrature test completed!")


def test_alpha_derivative_finite_difference():
    """d alpha / d omega_k against a central difference in the mode frequency."""
    modes = create_test_modes()
    pulse = create_test_pulse()
    eps = TWO_PI * 1.0
    for mode in (0, 1):
        shift = np.zeros(2)
        shift[mode] = eps
        plus = displacement(pulse, modes.with_frequency_shift(shift), 0, mode)
        minus = displacement(pulse, modes.with_frequency_shift(-shift), 0, mode)
        numeric = (plus - minus) / (2 * eps)
        analytic = alpha_derivative(pulse, modes, 0, mode)
        assert abs(numeric - analytic) < 1e-5 * abs(analytic)


def test_random_pulses_match_oracles():
    """A hundred random programs: closed form against quadrature and central differences."""
    print("🧪 Testing closed form on random pulses...")

    modes = create_test_modes()
    rng = np.random.default_rng(7)
    eps = TWO_PI * 1.0
    for _ in range(100):
        pulse = create_test_pulse(int(rng.integers(2, 9)), seed=int(rng.integers(2 ** 31)))
        scale = 0.05 * pulse.peak_amplitude * pulse.total_duration
        for mode in (0, 1):
            assert abs(displacement(pulse, modes, 0, mode)
                       - displacement_quad(pulse, modes, 0, mode)) < 1e-10 * scale
            assert abs(alpha_derivative(pulse, modes, 0, mode)
                       - alpha_derivative_quad(pulse, modes, 0, mode)) < 1e-10 * scale * pulse.total_duration

        closed = rotation_angle(pulse, modes, PAIR)
        assert math.isclose(closed, rotation_angle_gauss_legendre(pulse, modes, 0, 1),
                            rel_tol=1e-9, abs_tol=1e-12)

        per_mode = theta_derivative(pulse, modes, PAIR, 1)
        quadrature = theta_derivative(pulse, modes, PAIR, 1, method="quadrature")
        derivative_scale = float(np.max(np.abs(per_mode)))
        assert np.allclose(per_mode, quadrature, rtol=0, atol=1e-8 * derivative_scale)
        for mode in (0, 1):
            shift = np.zeros(2)
            shift[mode] = eps
            numeric = (rotation_angle(pulse, modes.with_frequency_shift(shift), PAIR)
                       - rotation_angle(pulse, modes.with_frequency_shift(-shift), PAIR)) / (2 * eps)
            assert math.isclose(numeric, per_mode[mode], rel_tol=1e-4, abs_tol=1e-6 * derivative_scale)

    print("✅ Random pulse oracle test completed!")


def test_rotation_angle_matches_gauss_legendre():
    modes = create_test_modes()
    pulse = create_test_pulse()
    closed = rotation_angle(pulse, modes, PAIR)
    oracle = rotation_angle_gauss_legendre(pulse, modes, 0, 1)
    assert math.isclose(closed, oracle, rel_tol=1e-9, abs_tol=1e-12)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_theta_derivative_closed_matches_quadrature(order):
    """Higher-order angle derivatives agree between the two evaluation paths."""
    modes = create_test_modes()
    pulse = create_test_pulse()
    closed = theta_derivative(pulse, modes, PAIR, order)
    quadrature = theta_derivative(pulse, modes, PAIR, order, method="quadrature")
    scale = float(np.max(np.abs(closed)))
    assert np.allclose(closed, quadrature, rtol=0, atol=1e-8 * scale)

    with pytest.raises(InputValidationError):
        theta_derivative(pulse, modes, PAIR, 0)
    with pytest.raises(InputValidationError):
        theta_derivative(pulse, modes, PAIR, 1, method="simpson")


def test_theta_derivative_finite_difference():
    """Per-mode and drift-weighted angle derivatives against central differences."""
    print("🧪 Testing angle derivatives against finite differences...")

    modes = create_test_modes().with_drift_ratios([1.0, 1.02])
    pulse = create_test_pulse()
    ratios = modes.drift_ratios

    eps = TWO_PI * 1.0
    per_mode = theta_derivative(pulse, modes, PAIR, 1)
    for mode in (0, 1):
        shift = np.zeros(2)
        shift[mode] = eps
        numeric = (rotation_angle(pulse, modes.with_frequency_shift(shift), PAIR)
                   - rotation_angle(pulse, modes.with_frequency_shift(-shift), PAIR)) / (2 * eps)
        assert math.isclose(numeric, per_mode[mode], rel_tol=1e-4,
                            abs_tol=1e-6 * float(np.max(np.abs(per_mode))))

    first = weighted_theta_derivative(pulse, modes, PAIR, 1)
    numeric_first = (rotation_angle(pulse, modes.with_frequency_shift(eps * ratios), PAIR)
                     - rotation_angle(pulse, modes.with_frequency_shift(-eps * ratios), PAIR)) / (2 * eps)
    assert math.isclose(first, numeric_first, rel_tol=1e-4,
                        abs_tol=1e-5 * float(np.sum(np.abs(per_mode))))

    eps2 = TWO_PI * 10.0
    second = weighted_theta_derivative(pulse, modes, PAIR, 2)
    numeric_second = (rotation_angle(pulse, modes.with_frequency_shift(eps2 * ratios), PAIR)
                      - 2 * rotation_angle(pulse, modes, PAIR)
                      + rotation_angle(pulse, modes.with_frequency_shift(-eps2 * ratios), PAIR)) / eps2 ** 2
    second_scale = float(np.sum(np.abs(theta_derivative(pulse, modes, PAIR, 2))))
    assert math.isclose(second, numeric_second, rel_tol=1e-3, abs_tol=1e-3 * second_scale)

    diag = diagnostics(pulse, modes, PAIR, max_order=2)
    assert math.isclose(diag.dtheta_weighted, first, rel_tol=1e-12)
    assert math.isclose(diag.higher_dtheta[0], second, rel_tol=1e-12)

    print("✅ Angle derivative test completed!")


@pytest.mark.parametrize("loops", [1, 2, 3])
def test_loop_pulse_analytic(loops):
    """A single closed loop per mode: alpha = 0, Theta and dTheta/domega in closed form."""
    modes = create_test_modes()
    amplitude = TWO_PI * 20e3
    diag = diagnostics(loop_pulse(loops, amplitude), modes, PAIR)

    kappa = 0.25 * 0.1 ** 2
    mu = np.array([loops * LOOP_RATE, (loops - 4) * LOOP_RATE])
    expected_theta = kappa * amplitude ** 2 * GATE_TIME * (1 / mu[0] - 1 / mu[1])
    expected_dtheta = np.array([kappa, -kappa]) * (-2 * amplitude ** 2 * GATE_TIME / mu ** 2)

    assert np.max(np.abs(diag.alpha)) < 1e-9
    assert math.isclose(diag.theta, expected_theta, rel_tol=1e-9)
    assert np.allclose(diag.dtheta_domega, expected_dtheta, rtol=1e-8)
    # closed loops still move with the mode frequency
    assert diag.dalpha_norm > 0

    if loops == 2:
        assert abs(diag.dtheta_weighted) < 1e-9 * np.max(np.abs(expected_dtheta))
    print(f"   {loops} loop(s): theta={diag.theta:.6f}, dtheta_w={diag.dtheta_weighted:.3e}")


def test_trajectories():
    """Sampled trajectories agree with truncated-pulse evaluations."""
    modes = create_test_modes()
    pulse = create_test_pulse()
    tau = pulse.total_duration
    times = np.array([0.0, 0.3 * tau, pulse.starts[3], tau])

    path = displacement_trajectory(pulse, modes, 1, 0, times)
    assert path[0] == 0
    assert abs(path[-1] - displacement(pulse, modes, 1, 0)) < 1e-12
    assert abs(path[1] - displacement(pulse, modes, 1, 0, t_end=0.3 * tau)) < 1e-12
    assert abs(path[2] - displacement(pulse, modes, 1, 0, t_end=float(pulse.starts[3]))) < 1e-12

    angles = rotation_angle_trajectory(pulse, modes, PAIR, times)
    assert angles[0] == 0.0
    assert math.isclose(angles[-1], rotation_angle(pulse, modes, PAIR), rel_tol=1e-12)

    with pytest.raises(InputValidationError):
        displacement_trajectory(pulse, modes, 0, 0, [2 * tau])


def test_offset_errors_match_perturbative():
    """Small offsets: exact displacement error follows eps**2 |d alpha / d omega|^2."""
    print("🧪 Testing offset error curves...")

    modes = create_test_modes()
    pulse = loop_pulse(1)
    offsets = TWO_PI * np.array([-20.0, -5.0, 5.0, 20.0])

    exact = offset_errors(pulse, modes, PAIR, offsets)
    leading = perturbative_errors(diagnostics(pulse, modes, PAIR), offsets)

    assert list(exact.columns) == ['offset_hz', 'theta', 'err_alpha', 'err_theta']
    assert np.allclose(exact['offset_hz'], [-20.0, -5.0, 5.0, 20.0])
    assert np.allclose(exact['err_alpha'], leading['err_alpha'], rtol=0.1)
    assert np.allclose(exact['err_theta'], leading['err_theta'], rtol=1e-3)

    slope, _ = fit_power_law(offsets[2:], exact['err_alpha'].to_numpy()[2:])
    assert abs(slope - 2.0) < 0.05

    print("✅ Offset error curve test completed!")


def test_offset_matches_shifted_modes():
    modes = create_test_modes()
    pulse = create_test_pulse()
    eps = TWO_PI * 300.0
    assert math.isclose(rotation_angle(apply_offset(pulse, eps), modes, PAIR),
                        rotation_angle(pulse, modes.with_frequency_shift(eps), PAIR), rel_tol=1e-9)


def test_fit_power_law():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    slope, coeff = fit_power_law(x, 3.0 * x ** 2)
    assert math.isclose(slope, 2.0, rel_tol=1e-12)
    assert math.isclose(coeff, 3.0, rel_tol=1e-12)

    with pytest.raises(InputValidationError):
        fit_power_law([1.0, 2.0], [0.0, 1.0])


def test_ion_pair_validation():
    with pytest.raises(InputValidationError):
        IonPair(1, 1)
    with pytest.raises(InputValidationError):
        IonPair(-1, 0)
    with pytest.raises(InputValidationError):
        IonPair(0, 2).validate(create_test_modes())
    assert IonPair(1, 0).ions == (1, 0)


def test_mode_drive_shapes_and_exports():
    modes = create_test_modes()
    pulse = create_test_pulse()
    drive = ModeDrive(pulse, modes.mode_freqs)
    assert drive.weighted_integrals(2).shape == (3, 2, pulse.num_segments)
    assert drive.ordered_moment(1).shape == (2,)

    diag = diagnostics(pulse, modes, PAIR, max_order=3)
    assert len(diag.higher_dtheta) == 2
    row = diag.to_dataframe()
    assert len(row) == 1
    assert {'theta', 'err_alpha', 'alpha_0_1_re', 'dtheta_1', 'dtheta_order_3'} <= set(row.columns)
    exported = diag.to_dict()
    assert len(exported['alpha']) == 2 and len(exported['alpha'][0][0]) == 2
    assert math.isclose(exported['err_theta'], (diag.theta - math.pi / 4) ** 2)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
