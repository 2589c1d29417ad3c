"""
Quadrature oracles.

Slow, independent evaluations of the gate integrals straight from their
definitions. The closed-form kernel is tested against these; the
Gauss-Legendre path also backs ``theta_derivative(method="quadrature")``.
"""
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from ..core.config_manager import KernelSettings, get_config_manager
from ..core.mode_model import ModeSpec
from ..core.pulse import PulseProgram, integrated_phase


def _settings(settings: Optional[KernelSettings]) -> KernelSettings:
    return settings if settings is not None else get_config_manager().get_kernel_settings()


def _segment_drive(pulse: PulseProgram, mode_freq: float, index: int) -> Callable[[np.ndarray], np.ndarray]:
    """f(t) = Omega_i exp(i theta_k(t)) restricted to segment ``index``."""
    start = pulse.starts[index]
    theta0 = integrated_phase(pulse, mode_freq, float(start))
    mu = mode_freq - pulse.detunings[index]
    amplitude = pulse.amplitudes[index]

    def drive(t: np.ndarray) -> np.ndarray:
        return amplitude * np.exp(1j * (theta0 + mu * (np.asarray(t) - start)))

    return drive


def _complex_quad(func: Callable[[float], complex], a: float, b: float,
                  cfg: KernelSettings) -> complex:
    real, _ = integrate.quad(lambda t: func(t).real, a, b,
                             epsrel=cfg.quad_epsrel, epsabs=0.0, limit=cfg.quad_limit)
    imag, _ = integrate.quad(lambda t: func(t).imag, a, b,
                             epsrel=cfg.quad_epsrel, epsabs=0.0, limit=cfg.quad_limit)
    return complex(real, imag)


def weighted_drive_quad(pulse: PulseProgram, mode_freq: float, power: int = 0,
                        shift: float = 0.0,
                        settings: Optional[KernelSettings] = None) -> complex:
    """integral_0^tau t**power f(t) exp(-i shift t) dt, adaptive quadrature per segment."""
    cfg = _settings(settings)
    total = 0j
    for i, (start, duration) in enumerate(zip(pulse.starts, pulse.durations)):
        drive = _segment_drive(pulse, mode_freq, i)

        def integrand(t: float, drive: Callable[[np.ndarray], np.ndarray] = drive) -> complex:
            return complex(t ** power * drive(t) * np.exp(-1j * shift * t))

        total += _complex_quad(integrand, float(start), float(start + duration), cfg)
    return total


def displacement_quad(pulse: PulseProgram, modes: ModeSpec, ion: int, mode: int,
                      settings: Optional[KernelSettings] = None) -> complex:
    c = 0.5 * modes.lamb_dicke[mode] * modes.coupling[ion, mode]
    return c * weighted_drive_quad(pulse, modes.mode_freqs[mode], 0, settings=settings)


def alpha_derivative_quad(pulse: PulseProgram, modes: ModeSpec, ion: int, mode: int,
                          settings: Optional[KernelSettings] = None) -> complex:
    c = 0.5 * modes.lamb_dicke[mode] * modes.coupling[ion, mode]
    return 1j * c * weighted_drive_quad(pulse, modes.mode_freqs[mode], 1, settings=settings)


def avg_displacement_quad(pulse: PulseProgram, modes: ModeSpec, ion: int, mode: int,
                          settings: Optional[KernelSettings] = None) -> complex:
    """(1/tau) integral alpha(t) dt = c integral (1 - t/tau) f(t) dt."""
    c = 0.5 * modes.lamb_dicke[mode] * modes.coupling[ion, mode]
    tau = pulse.total_duration
    freq = modes.mode_freqs[mode]
    a0 = weighted_drive_quad(pulse, freq, 0, settings=settings)
    a1 = weighted_drive_quad(pulse, freq, 1, settings=settings)
    return c * (a0 - a1 / tau)


def ordered_moment_gauss_legendre(pulse: PulseProgram, mode_freqs: np.ndarray, order: int,
                                  settings: Optional[KernelSettings] = None) -> np.ndarray:
    """P_j = integral_{t'<t} f(t) conj f(t') (t - t')**j by nested Gauss-Legendre, per mode."""
    cfg = _settings(settings)
    freqs = np.atleast_1d(np.asarray(mode_freqs, dtype=float))
    x, w = np.polynomial.legendre.leggauss(cfg.gl_nodes)
    x01 = 0.5 * (x + 1.0)
    w01 = 0.5 * w
    times = pulse.starts[:, None] + pulse.durations[:, None] * x01[None, :]
    weights = pulse.durations[:, None] * w01[None, :]
    results = np.zeros(freqs.shape, dtype=complex)

    for k, freq in enumerate(freqs):
        drives = [_segment_drive(pulse, freq, i) for i in range(pulse.num_segments)]
        f_nodes = np.stack([drives[i](times[i]) for i in range(pulse.num_segments)])
        total = 0j
        for i in range(pulse.num_segments):
            t_out = times[i]
            if i > 0:
                t_in = times[:i].ravel()
                g_in = np.conj(f_nodes[:i].ravel()) * weights[:i].ravel()
                lag = t_out[:, None] - t_in[None, :]
                inner = np.sum(g_in[None, :] * lag ** order, axis=1)
            else:
                inner = np.zeros(t_out.shape, dtype=complex)
            # inner variable on [start_i, t] for the same segment
            span = t_out - pulse.starts[i]
            t_part = pulse.starts[i] + span[:, None] * x01[None, :]
            g_part = np.conj(drives[i](t_part)) * (span[:, None] * w01[None, :])
            lag = t_out[:, None] - t_part
            inner = inner + np.sum(g_part * lag ** order, axis=1)
            total += np.sum(weights[i] * f_nodes[i] * inner)
        results[k] = total
    return results


def rotation_angle_gauss_legendre(pulse: PulseProgram, modes: ModeSpec, j1: int, j2: int,
                                  settings: Optional[KernelSettings] = None) -> float:
    kappa = 0.5 * modes.lamb_dicke ** 2 * modes.coupling[j1] * modes.coupling[j2]
    moment = ordered_moment_gauss_legendre(pulse, modes.mode_freqs, 0, settings)
    return float(np.sum(kappa * moment.imag))


def ff_alpha_quad(pulse: PulseProgram, modes: ModeSpec, j1: int, j2: int, freq_hz: float,
                  settings: Optional[KernelSettings] = None) -> float:
    """Displacement filter function at one frequency by adaptive quadrature."""
    value = 0.0
    shift = 2.0 * np.pi * freq_hz
    for k in range(modes.num_modes):
        weight = modes.coupling[j1, k] ** 2 + modes.coupling[j2, k] ** 2
        integral = weighted_drive_quad(pulse, modes.mode_freqs[k], 0, shift=shift, settings=settings)
        value += weight * (0.5 * modes.lamb_dicke[k]) ** 2 * abs(integral) ** 2
    return float(value)


def ff_theta_gauss_legendre(pulse: PulseProgram, modes: ModeSpec, j1: int, j2: int,
                            freq_hz: float,
                            settings: Optional[KernelSettings] = None) -> float:
    """Angle filter function at one frequency by nested Gauss-Legendre.

    Q_k(f) = integral_{t'<t} (e^{i 2 pi f t} - e^{i 2 pi f t'}) Omega Omega' cos(theta_k - theta_k'),
    F_Theta = |sum_k eta_k^2 b_j1 b_j2 / 2 * Q_k|^2.
    """
    cfg = _settings(settings)
    x, w = np.polynomial.legendre.leggauss(cfg.gl_nodes)
    x01 = 0.5 * (x + 1.0)
    w01 = 0.5 * w
    omega_f = 2.0 * np.pi * freq_hz
    kappa = 0.5 * modes.lamb_dicke ** 2 * modes.coupling[j1] * modes.coupling[j2]
    times = pulse.starts[:, None] + pulse.durations[:, None] * x01[None, :]
    weights = pulse.durations[:, None] * w01[None, :]
    total = 0j
    for k in range(modes.num_modes):
        drives = [_segment_drive(pulse, modes.mode_freqs[k], i) for i in range(pulse.num_segments)]
        q = 0j
        for i in range(pulse.num_segments):
            t_out = times[i]
            f_out = drives[i](t_out)
            t_in = [times[:i].ravel()] if i > 0 else []
            w_in = [weights[:i].ravel()] if i > 0 else []
            f_in = [np.concatenate([drives[m](times[m]) for m in range(i)])] if i > 0 else []
            span = t_out - pulse.starts[i]
            t_part = pulse.starts[i] + span[:, None] * x01[None, :]
            for t_inner, w_inner, f_inner in zip(t_in, w_in, f_in):
                kernel = np.real(f_out[:, None] * np.conj(f_inner[None, :]))
                phase = np.exp(1j * omega_f * t_out)[:, None] - np.exp(1j * omega_f * t_inner)[None, :]
                q += np.sum(weights[i][:, None] * w_inner[None, :] * kernel * phase)
            f_part = drives[i](t_part)
            kernel = np.real(f_out[:, None] * np.conj(f_part))
            phase = np.exp(1j * omega_f * t_out)[:, None] - np.exp(1j * omega_f * t_part)
            q += np.sum(weights[i][:, None] * (span[:, None] * w01[None, :]) * kernel * phase)
        total += kappa[k] * q
    return float(abs(total) ** 2)
