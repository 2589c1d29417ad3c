"""
Gate Kernel
Displacements, rotation angle and their mode-frequency derivatives for a
piecewise-constant drive, evaluated in closed form segment by segment.

Conventions: for mode k and segment i, mu_i = omega_k - delta_i and the drive
phasor f(t) = Omega(t) exp(i theta_k(t)). Prefix sums of the single-segment
integrals of t**m f(t) turn every ordered double integral into a sum over
segments.
"""
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from ..core.config_manager import KernelSettings, get_config_manager
from ..core.exceptions import InputValidationError
from ..core.mode_model import ModeSpec
from ..core.pulse import PulseProgram, apply_offset, truncate_pulse
from ..core.units import TARGET_ANGLE, TWO_PI, complex_pair
from .primitives import segment_moments


@dataclass(frozen=True)
class IonPair:
    """The two target ions of the gate."""
    j1: int
    j2: int

    def __post_init__(self) -> None:
        if self.j1 == self.j2:
            raise InputValidationError("gate ions must differ", field="pair")
        if self.j1 < 0 or self.j2 < 0:
            raise InputValidationError("ion indices must be >= 0", field="pair")

    def validate(self, modes: ModeSpec) -> None:
        for j in (self.j1, self.j2):
            if j >= modes.num_ions:
                raise InputValidationError(
                    f"ion {j} outside chain of {modes.num_ions}", field="pair"
                )

    @property
    def ions(self) -> Tuple[int, int]:
        return (self.j1, self.j2)


@dataclass
class GateDiagnostics:
    """Gate quantities for one (pulse, modes, pair) triple."""
    alpha: np.ndarray  # (2, K) complex, ion-of-pair x mode
    dalpha_domega: np.ndarray  # (2, K) complex, seconds
    alpha_bar: np.ndarray  # (2, K) complex
    theta: float
    dtheta_domega: np.ndarray  # (K,) seconds
    dtheta_weighted: float
    higher_dtheta: List[float] = field(default_factory=list)  # j = 2..n
    target_angle: float = TARGET_ANGLE

    @property
    def err_alpha(self) -> float:
        return float(np.sum(np.abs(self.alpha) ** 2))

    @property
    def err_theta(self) -> float:
        return float((self.theta - self.target_angle) ** 2)

    @property
    def dalpha_norm(self) -> float:
        """Sum of |d alpha / d omega|^2 (s^2)."""
        return float(np.sum(np.abs(self.dalpha_domega) ** 2))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'alpha': [[complex_pair(v) for v in row] for row in self.alpha],
            'dalpha_domega': [[complex_pair(v) for v in row] for row in self.dalpha_domega],
            'alpha_bar': [[complex_pair(v) for v in row] for row in self.alpha_bar],
            'theta': self.theta,
            'dtheta_domega': [float(v) for v in self.dtheta_domega],
            'dtheta_weighted': self.dtheta_weighted,
            'higher_dtheta': list(self.higher_dtheta),
            'err_alpha': self.err_alpha,
            'err_theta': self.err_theta
        }

    def to_dataframe(self) -> pd.DataFrame:
        """Single flat row for CSV tooling."""
        row: Dict[str, float] = {
            'theta': self.theta,
            'dtheta_weighted': self.dtheta_weighted,
            'err_alpha': self.err_alpha,
            'err_theta': self.err_theta,
        }
        for p in range(self.alpha.shape[0]):
            for k in range(self.alpha.shape[1]):
                row[f'alpha_{p}_{k}_re'] = float(self.alpha[p, k].real)
                row[f'alpha_{p}_{k}_im'] = float(self.alpha[p, k].imag)
                row[f'dalpha_{p}_{k}_re'] = float(self.dalpha_domega[p, k].real)
                row[f'dalpha_{p}_{k}_im'] = float(self.dalpha_domega[p, k].imag)
        for k, value in enumerate(self.dtheta_domega):
            row[f'dtheta_{k}'] = float(value)
        for j, value in enumerate(self.higher_dtheta, start=2):
            row[f'dtheta_order_{j}'] = float(value)
        return pd.DataFrame([row])


class ModeDrive:
    """Per-mode, per-segment phase data of a pulse."""

    def __init__(self, pulse: PulseProgram, mode_freqs: np.ndarray,
                 settings: Optional[KernelSettings] = None):
        self.settings = settings if settings is not None else get_config_manager().get_kernel_settings()
        self.mode_freqs = np.atleast_1d(np.asarray(mode_freqs, dtype=float))
        self.durations = pulse.durations
        self.starts = pulse.starts
        self.amplitudes = pulse.amplitudes
        self.tau = pulse.total_duration

        self.mu = self.mode_freqs[:, None] - pulse.detunings[None, :]
        advance = self.mu * self.durations[None, :]
        self.theta_start = np.cumsum(advance, axis=1) - advance
        self.phasor = self.amplitudes[None, :] * np.exp(1j * self.theta_start)
        self._moments: Optional[np.ndarray] = None

    def moments(self, max_order: int) -> np.ndarray:
        """I_m for m = 0..max_order, shape (M+1, K, S)."""
        if self._moments is None or self._moments.shape[0] <= max_order:
            self._moments = segment_moments(self.mu, self.durations[None, :],
                                            max_order, self.settings)
        return self._moments[:max_order + 1]

    def weighted_integrals(self, max_power: int) -> np.ndarray:
        """F_m = integral over each segment of t**m f(t), shape (M+1, K, S)."""
        moments = self.moments(max_power + 1)
        result = np.zeros((max_power + 1,) + self.mu.shape, dtype=complex)
        for m in range(max_power + 1):
            for l in range(m + 1):
                result[m] += math.comb(m, l) * self.starts[None, :] ** (m - l) * moments[l]
            result[m] *= self.phasor
        return result

    def ordered_moment(self, order: int) -> np.ndarray:
        """P_j = integral_{t'<t} f(t) conj f(t') (t - t')**j, per mode."""
        weighted = self.weighted_integrals(order)
        before = np.cumsum(weighted, axis=2) - weighted
        cross = np.zeros(self.mu.shape, dtype=complex)
        for m in range(order + 1):
            cross += math.comb(order, m) * (-1) ** m * weighted[order - m] * np.conj(before[m])
        moments = self.moments(order + 1)
        same = self.amplitudes[None, :] ** 2 * (
            self.durations[None, :] * moments[order] - moments[order + 1]
        )
        return np.sum(cross + same, axis=1)


def _coupling(modes: ModeSpec, ion: int, mode: int) -> float:
    if not (0 <= ion < modes.num_ions):
        raise InputValidationError(f"ion {ion} outside chain of {modes.num_ions}", field="ion")
    if not (0 <= mode < modes.num_modes):
        raise InputValidationError(f"mode {mode} outside {modes.num_modes} modes", field="mode")
    return 0.5 * modes.lamb_dicke[mode] * modes.coupling[ion, mode]


def pair_weights(modes: ModeSpec, pair: IonPair) -> np.ndarray:
    """kappa_k = eta_k^2 b_j1^k b_j2^k / 2, the per-mode weight of the XX phase."""
    pair.validate(modes)
    return 0.5 * modes.lamb_dicke ** 2 * modes.coupling[pair.j1] * modes.coupling[pair.j2]


def displacement(pulse: PulseProgram, modes: ModeSpec, ion: int, mode: int,
                 t_end: Optional[float] = None,
                 settings: Optional[KernelSettings] = None) -> complex:
    """alpha_j^k(t_end) = (eta_k b_j^k / 2) integral_0^t_end Omega exp(i theta_k)."""
    c = _coupling(modes, ion, mode)
    if t_end is not None and t_end < pulse.total_duration:
        pulse = truncate_pulse(pulse, t_end)
    drive = ModeDrive(pulse, modes.mode_freqs[mode], settings)
    return complex(c * np.sum(drive.weighted_integrals(0)[0]))


def alpha_derivative(pulse: PulseProgram, modes: ModeSpec, ion: int, mode: int,
                     settings: Optional[KernelSettings] = None) -> complex:
    """d alpha_j^k / d omega_k = (i eta_k b_j^k / 2) integral Omega t exp(i theta_k)."""
    c = _coupling(modes, ion, mode)
    drive = ModeDrive(pulse, modes.mode_freqs[mode], settings)
    return complex(1j * c * np.sum(drive.weighted_integrals(1)[1]))


def avg_displacement(pulse: PulseProgram, modes: ModeSpec, ion: int, mode: int,
                     settings: Optional[KernelSettings] = None) -> complex:
    """(1/tau) integral_0^tau alpha(t) dt = c (A - B / tau)."""
    c = _coupling(modes, ion, mode)
    drive = ModeDrive(pulse, modes.mode_freqs[mode], settings)
    weighted = np.sum(drive.weighted_integrals(1), axis=-1)[:, 0]
    return complex(c * (weighted[0] - weighted[1] / drive.tau))


def rotation_angle(pulse: PulseProgram, modes: ModeSpec, pair: IonPair,
                   settings: Optional[KernelSettings] = None) -> float:
    """Theta = sum_k kappa_k Im P_0,k."""
    kappa = pair_weights(modes, pair)
    drive = ModeDrive(pulse, modes.mode_freqs, settings)
    return float(np.sum(kappa * drive.ordered_moment(0).imag))


def theta_derivative(pulse: PulseProgram, modes: ModeSpec, pair: IonPair, order: int = 1,
                     method: str = "closed",
                     settings: Optional[KernelSettings] = None) -> np.ndarray:
    """d^j Theta / d omega_k^j per mode.

    Differentiating the sin kernel j times inserts (t - t')**j and advances
    sin -> cos -> -sin -> -cos, i.e. Im(i**j P_j).
    """
    if order < 1:
        raise InputValidationError(f"must be >= 1, got {order}", field="order")
    kappa = pair_weights(modes, pair)
    if method == "quadrature":
        from .quadrature import ordered_moment_gauss_legendre
        moment = ordered_moment_gauss_legendre(pulse, modes.mode_freqs, order, settings=settings)
    elif method == "closed":
        moment = ModeDrive(pulse, modes.mode_freqs, settings).ordered_moment(order)
    else:
        raise InputValidationError(f"unknown method {method!r}", field="method")
    return kappa * np.imag((1j ** order) * moment)


def weighted_theta_derivative(pulse: PulseProgram, modes: ModeSpec, pair: IonPair,
                              order: int = 1,
                              settings: Optional[KernelSettings] = None) -> float:
    """sum_k r_k**j d^j Theta / d omega_k^j: response to omega_k -> omega_k + r_k eps."""
    per_mode = theta_derivative(pulse, modes, pair, order, settings=settings)
    return float(np.sum(modes.drift_ratios ** order * per_mode))


def diagnostics(pulse: PulseProgram, modes: ModeSpec, pair: IonPair, max_order: int = 1,
                target_angle: float = TARGET_ANGLE,
                settings: Optional[KernelSettings] = None) -> GateDiagnostics:
    """Assemble displacement, angle and drift responses in one pass."""
    if max_order < 1:
        raise InputValidationError(f"must be >= 1, got {max_order}", field="max_order")
    pair.validate(modes)
    drive = ModeDrive(pulse, modes.mode_freqs, settings)
    weighted = np.sum(drive.weighted_integrals(1), axis=-1)  # (2, K)
    big_a, big_b = weighted[0], weighted[1]

    coupling = 0.5 * modes.lamb_dicke[None, :] * modes.coupling[[pair.j1, pair.j2], :]
    alpha = coupling * big_a[None, :]
    dalpha = 1j * coupling * big_b[None, :]
    alpha_bar = coupling * (big_a - big_b / drive.tau)[None, :]

    kappa = pair_weights(modes, pair)
    theta = float(np.sum(kappa * drive.ordered_moment(0).imag))
    dtheta = kappa * drive.ordered_moment(1).real
    ratios = modes.drift_ratios
    higher = [
        float(np.sum(ratios ** j * kappa * np.imag((1j ** j) * drive.ordered_moment(j))))
        for j in range(2, max_order + 1)
    ]
    return GateDiagnostics(
        alpha=alpha,
        dalpha_domega=dalpha,
        alpha_bar=alpha_bar,
        theta=theta,
        dtheta_domega=dtheta,
        dtheta_weighted=float(np.sum(ratios * dtheta)),
        higher_dtheta=higher,
        target_angle=target_angle,
    )


def displacement_trajectory(pulse: PulseProgram, modes: ModeSpec, ion: int, mode: int,
                            times: Sequence[float],
                            settings: Optional[KernelSettings] = None) -> np.ndarray:
    """alpha_j^k(t) sampled at ``times`` (phase-space trajectory)."""
    c = _coupling(modes, ion, mode)
    t = np.asarray(times, dtype=float)
    if np.any(t < 0) or np.any(t > pulse.total_duration * (1 + 1e-15)):
        raise InputValidationError("sample times outside the pulse", field="times")
    drive = ModeDrive(pulse, modes.mode_freqs[mode], settings)
    per_segment = drive.weighted_integrals(0)[0, 0]
    before = np.cumsum(per_segment) - per_segment
    idx = np.clip(np.searchsorted(drive.starts, t, side="right") - 1, 0, pulse.num_segments - 1)
    partial = segment_moments(drive.mu[0, idx], np.minimum(t - drive.starts[idx],
                                                          drive.durations[idx]), 0, drive.settings)[0]
    return c * (before[idx] + drive.phasor[0, idx] * partial)


def rotation_angle_trajectory(pulse: PulseProgram, modes: ModeSpec, pair: IonPair,
                              times: Sequence[float],
                              settings: Optional[KernelSettings] = None) -> np.ndarray:
    """Theta(t) sampled at ``times``."""
    values = []
    for t in np.asarray(times, dtype=float):
        if t <= 0:
            values.append(0.0)
            continue
        values.append(rotation_angle(truncate_pulse(pulse, float(t)), modes, pair, settings))
    return np.array(values)


def offset_errors(pulse: PulseProgram, modes: ModeSpec, pair: IonPair,
                  offsets: Sequence[float], target_angle: float = TARGET_ANGLE,
                  settings: Optional[KernelSettings] = None) -> pd.DataFrame:
    """Exact E_alpha(eps), E_Theta(eps) under a uniform offset of the mode frequencies."""
    rows = []
    for eps in offsets:
        diag = diagnostics(apply_offset(pulse, float(eps)), modes, pair,
                           target_angle=target_angle, settings=settings)
        rows.append({
            'offset_hz': float(eps) / TWO_PI,
            'theta': diag.theta,
            'err_alpha': diag.err_alpha,
            'err_theta': diag.err_theta,
        })
    logger.debug(f"Offset error curve evaluated at {len(rows)} points")
    return pd.DataFrame(rows)


def perturbative_errors(diag: GateDiagnostics, offsets: Sequence[float],
                        ratios: Optional[Sequence[float]] = None) -> pd.DataFrame:
    """Leading-order E_alpha, E_Theta under omega_k -> omega_k + r_k eps."""
    eps = np.asarray(offsets, dtype=float)
    r = np.ones(diag.alpha.shape[1]) if ratios is None else np.asarray(ratios, dtype=float)
    shifted = diag.alpha[None, :, :] + eps[:, None, None] * r[None, None, :] * diag.dalpha_domega[None, :, :]
    err_alpha = np.sum(np.abs(shifted) ** 2, axis=(1, 2))
    theta = diag.theta + eps * float(np.sum(r * diag.dtheta_domega))
    return pd.DataFrame({
        'offset_hz': eps / TWO_PI,
        'err_alpha': err_alpha,
        'err_theta': (theta - diag.target_angle) ** 2,
    })


def fit_power_law(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float]:
    """Least-squares fit of log y = p log x + log c; returns (p, c)."""
    xs = np.abs(np.asarray(x, dtype=float))
    ys = np.asarray(y, dtype=float)
    mask = (xs > 0) & (ys > 0)
    if np.count_nonzero(mask) < 2:
        raise InputValidationError("need two positive points for a power-law fit", field="y")
    slope, intercept = np.polyfit(np.log(xs[mask]), np.log(ys[mask]), 1)
    return float(slope), float(np.exp(intercept))
