"""
Filter Functions
Frequency-domain transfer of mode-frequency noise into residual displacement
and rotation-angle error, plus the spectral error integral.

Conventions: frequencies in Hz, noise PSD S(f) in rad^2/s^2 per Hz (two-sided,
even in f), filter functions dimensionless. The error integral weights S by
1/(2 pi f)^2 so a static offset eps reproduces the leading-order static errors.
"""
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy import integrate

from ..core.config_manager import FilterSettings, KernelSettings, get_config_manager
from ..core.exceptions import InputValidationError
from ..core.mode_model import ModeSpec
from ..core.pulse import PulseProgram
from ..core.units import TWO_PI, hz_to_rad
from ..kernel.gate_kernel import IonPair, ModeDrive, fit_power_law, pair_weights
from ..kernel.primitives import ordered_pair_integral, segment_moments


class NoiseSpectrum(BaseModel):
    """Mode-frequency noise PSD. Frequencies in Hz, PSD in rad^2/s^2 per Hz."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["static", "white", "one_over_f", "tabulated"]
    epsilon_hz: float = 0.0  # static offset
    level: float = Field(default=0.0, ge=0)  # white PSD
    cutoff_hz: Optional[float] = Field(default=None, gt=0)
    amplitude: float = Field(default=0.0, ge=0)  # 1/f: S = amplitude / |f|
    low_corner_hz: Optional[float] = Field(default=None, gt=0)
    high_corner_hz: Optional[float] = Field(default=None, gt=0)
    table_freqs_hz: List[float] = Field(default_factory=list)
    table_psd: List[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check(self) -> 'NoiseSpectrum':
        if self.kind == "tabulated":
            if len(self.table_freqs_hz) < 2 or len(self.table_freqs_hz) != len(self.table_psd):
                raise ValueError("tabulated spectrum needs matching freq/psd lists of length >= 2")
            freqs = np.asarray(self.table_freqs_hz)
            if np.any(freqs <= 0) or np.any(np.diff(freqs) <= 0):
                raise ValueError("table_freqs_hz must be positive and increasing")
            if min(self.table_psd) < 0:
                raise ValueError("table_psd must be >= 0")
        if (self.low_corner_hz is not None and self.high_corner_hz is not None
                and self.low_corner_hz >= self.high_corner_hz):
            raise ValueError("low_corner_hz must be below high_corner_hz")
        return self

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'NoiseSpectrum':
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            first = e.errors()[0]
            location = ".".join(str(p) for p in first.get("loc", ())) or "spectrum"
            raise InputValidationError(first.get("msg", str(e)), field=location) from e

    @property
    def static_weight(self) -> float:
        """eps^2 in rad^2/s^2."""
        return hz_to_rad(self.epsilon_hz) ** 2

    def sample(self, freqs_hz: Sequence[float]) -> np.ndarray:
        """S(f), even in f. The static kind has no continuous part."""
        f = np.abs(np.asarray(freqs_hz, dtype=float))
        if self.kind == "static":
            return np.zeros_like(f)
        if self.kind == "white":
            psd = np.full_like(f, self.level)
            if self.cutoff_hz is not None:
                psd[f > self.cutoff_hz] = 0.0
            return psd
        if self.kind == "one_over_f":
            floor = self.low_corner_hz if self.low_corner_hz is not None else 0.0
            with np.errstate(divide="ignore"):
                psd = self.amplitude / np.maximum(f, floor)
            if self.high_corner_hz is not None:
                psd[f > self.high_corner_hz] = 0.0
            return psd
        table_f = np.log(np.asarray(self.table_freqs_hz))
        table_s = np.asarray(self.table_psd)
        logf = np.log(np.maximum(f, self.table_freqs_hz[0]))
        if np.all(table_s > 0):
            psd = np.exp(np.interp(logf, table_f, np.log(table_s)))
        else:
            psd = np.interp(logf, table_f, table_s)
        psd[f > self.table_freqs_hz[-1]] = 0.0
        return psd

    def low_frequency_exponent(self, f_hz: float) -> float:
        """q with S ~ f^q just below ``f_hz``."""
        if self.kind == "one_over_f" and (self.low_corner_hz is None or f_hz > self.low_corner_hz):
            return -1.0
        return 0.0


@dataclass
class FilterFunctionCurve:
    """Sampled filter functions. ``f_alpha_negative`` holds F_alpha(-f)."""
    freqs: np.ndarray
    f_alpha: np.ndarray
    f_theta: np.ndarray
    f_alpha_negative: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        n = len(self.freqs)
        if len(self.f_alpha) != n or len(self.f_theta) != n:
            raise InputValidationError("filter function lengths do not match the grid", field="curve")
        if self.f_alpha_negative is not None and len(self.f_alpha_negative) != n:
            raise InputValidationError("negative-side length does not match the grid", field="curve")

    def symmetric(self, which: str) -> np.ndarray:
        """F(f) + F(-f) on the positive grid."""
        if which == "theta":
            return 2.0 * self.f_theta
        if which == "alpha":
            negative = self.f_alpha if self.f_alpha_negative is None else self.f_alpha_negative
            return self.f_alpha + negative
        raise InputValidationError(f"unknown filter {which!r}", field="which")

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame({
            'freq_hz': self.freqs,
            'f_alpha': self.f_alpha,
            'f_theta': self.f_theta,
        })


@dataclass
class SpectralError:
    """Noise-averaged errors from a filter-function curve."""
    err_alpha: float
    err_theta: float
    warnings: List[str] = field(default_factory=list)
    exponents: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'err_alpha': self.err_alpha,
            'err_theta': self.err_theta,
            'warnings': list(self.warnings),
            'low_frequency_exponents': dict(self.exponents)
        }


def _settings(settings: Optional[FilterSettings]) -> FilterSettings:
    return settings if settings is not None else get_config_manager().get_filter_settings()


def default_grid(settings: Optional[FilterSettings] = None) -> np.ndarray:
    cfg = _settings(settings)
    return np.geomspace(cfg.f_min_hz, cfg.f_max_hz, cfg.num_points)


def _positive_freqs(freqs: Sequence[float]) -> np.ndarray:
    f = np.atleast_1d(np.asarray(freqs, dtype=float))
    if f.size == 0 or np.any(~np.isfinite(f)) or np.any(f <= 0):
        raise InputValidationError("frequencies must be finite and > 0", field="freqs")
    return f


def _ff_alpha_signed(pulse: PulseProgram, modes: ModeSpec, pair: IonPair, f: np.ndarray,
                     settings: Optional[KernelSettings]) -> np.ndarray:
    pair.validate(modes)
    shifted = (modes.mode_freqs[:, None] - TWO_PI * f[None, :]).ravel()
    drive = ModeDrive(pulse, shifted, settings)
    integrals = np.sum(drive.weighted_integrals(0)[0], axis=-1).reshape(modes.num_modes, f.size)
    weights = (modes.coupling[pair.j1] ** 2 + modes.coupling[pair.j2] ** 2) * (0.5 * modes.lamb_dicke) ** 2
    return np.sum(weights[:, None] * np.abs(integrals) ** 2, axis=0)


def ff_alpha(pulse: PulseProgram, modes: ModeSpec, pair: IonPair, freqs: Sequence[float],
             settings: Optional[KernelSettings] = None) -> np.ndarray:
    """
    F_alpha(f) = sum_k (b_j1^2 + b_j2^2) |(eta_k/2) integral Omega e^{i(2 pi f t - theta_k)}|^2.

    The prefactor eta_k/2 is the displacement amplitude, so a static offset
    reproduces E_alpha. The form with eta_k^2/2 inside the modulus relates
    term by term:

        F'_alpha(f) = sum_k eta_k^2 * [term k of F_alpha(f)]

    The factor is per mode and reduces to one constant only when every eta_k
    is equal. ``spectral_error`` weights this F_alpha by S(f)/(2 pi f)^2; a
    weight of S(f)/f^2 is (2 pi)^2 larger.
    """
    return _ff_alpha_signed(pulse, modes, pair, _positive_freqs(freqs), settings)


def _ordered_double(u_amp: np.ndarray, p: np.ndarray, v_amp: np.ndarray, q: np.ndarray,
                    dt: np.ndarray, settings: Optional[KernelSettings]) -> np.ndarray:
    """integral_{t'<t} u(t) v(t') for piecewise phasors u = U_i e^{ip(t-T_i)}, v = V_i e^{iq(t-T_i)}."""
    u_int = u_amp * segment_moments(p, dt, 0, settings)[0]
    v_int = v_amp * segment_moments(q, dt, 0, settings)[0]
    before = np.cumsum(v_int, axis=-1) - v_int
    same = u_amp * v_amp * ordered_pair_integral(p, q, dt, settings)
    return np.sum(u_int * before + same, axis=-1)


def ff_theta(pulse: PulseProgram, modes: ModeSpec, pair: IonPair, freqs: Sequence[float],
             settings: Optional[KernelSettings] = None) -> np.ndarray:
    """F_Theta(f) = |sum_k kappa_k integral_{t'<t} (e^{i nu t} - e^{i nu t'}) Omega Omega' cos(theta_k - theta_k')|^2."""
    f = _positive_freqs(freqs)
    kappa = pair_weights(modes, pair)
    drive = ModeDrive(pulse, modes.mode_freqs, settings)
    nu = TWO_PI * f[None, :, None]  # (1, F, 1)
    theta0 = drive.theta_start[:, None, :]  # (K, 1, S)
    mu = drive.mu[:, None, :]
    amp = drive.amplitudes[None, None, :]
    starts = drive.starts[None, None, :]
    dt = drive.durations[None, None, :]
    shape = (modes.num_modes, f.size, pulse.num_segments)

    total = np.zeros((modes.num_modes, f.size), dtype=complex)
    for sigma in (1.0, -1.0):
        h = amp * np.exp(1j * sigma * theta0)
        rate = sigma * mu
        moving = np.exp(1j * nu * starts)
        lead = _ordered_double(np.broadcast_to(h * moving, shape), np.broadcast_to(rate + nu, shape),
                               np.broadcast_to(np.conj(h), shape), np.broadcast_to(-rate, shape),
                               np.broadcast_to(dt, shape), drive.settings)
        lag = _ordered_double(np.broadcast_to(h, shape), np.broadcast_to(rate, shape),
                              np.broadcast_to(np.conj(h) * moving, shape),
                              np.broadcast_to(nu - rate, shape),
                              np.broadcast_to(dt, shape), drive.settings)
        total += 0.5 * (lead - lag)
    return np.abs(np.sum(kappa[:, None] * total, axis=0)) ** 2


def filter_function_curve(pulse: PulseProgram, modes: ModeSpec, pair: IonPair,
                          freqs: Optional[Sequence[float]] = None,
                          kernel_settings: Optional[KernelSettings] = None,
                          settings: Optional[FilterSettings] = None) -> FilterFunctionCurve:
    """Both filter functions on ``freqs`` (default: log grid from the configuration)."""
    f = default_grid(settings) if freqs is None else _positive_freqs(freqs)
    curve = FilterFunctionCurve(
        freqs=f,
        f_alpha=_ff_alpha_signed(pulse, modes, pair, f, kernel_settings),
        f_theta=ff_theta(pulse, modes, pair, f, kernel_settings),
        f_alpha_negative=_ff_alpha_signed(pulse, modes, pair, -f, kernel_settings),
    )
    logger.debug(f"Filter functions evaluated on {f.size} frequencies")
    return curve


def low_frequency_slope(curve: FilterFunctionCurve, which: str = "theta",
                        f_max_hz: float = 1.0e3) -> float:
    """Log-log slope of F_alpha or F_Theta below ``f_max_hz``."""
    if which not in ("theta", "alpha"):
        raise InputValidationError(f"unknown filter {which!r}", field="which")
    values = curve.f_theta if which == "theta" else curve.f_alpha
    mask = curve.freqs <= f_max_hz
    slope, _ = fit_power_law(curve.freqs[mask], values[mask])
    return slope


def _log_trapezoid(freqs: np.ndarray, integrand: np.ndarray) -> float:
    """integral g df = integral (g f) d ln f."""
    return float(integrate.trapezoid(integrand * freqs, np.log(freqs)))


def _tail(freqs: np.ndarray, values: np.ndarray, psd_min: float, q: float,
          decades: float) -> Tuple[float, Optional[float]]:
    """Power-law tail below the grid and the fitted exponent."""
    f_min = freqs[0]
    mask = freqs <= f_min * 10.0 ** decades
    if psd_min == 0.0 or np.count_nonzero(values[mask] > 0) < 2:
        return 0.0, None
    p, c = fit_power_law(freqs[mask], values[mask])
    power = p + q - 1.0
    if power <= 0:
        return math.inf, p
    return psd_min * c * f_min ** (p - 1.0) / (4.0 * math.pi ** 2 * power), p


def spectral_error(curve: FilterFunctionCurve, spectrum: NoiseSpectrum,
                   settings: Optional[FilterSettings] = None) -> SpectralError:
    """E_nu = integral S(f) F_nu(f) / (2 pi f)^2 df over both signs of f."""
    cfg = _settings(settings)
    freqs = curve.freqs
    if spectrum.kind == "static":
        weight = spectrum.static_weight
        nu2 = (TWO_PI * freqs[0]) ** 2
        return SpectralError(
            err_alpha=float(weight * 0.5 * curve.symmetric("alpha")[0] / nu2),
            err_theta=float(weight * 0.5 * curve.symmetric("theta")[0] / nu2),
        )

    psd = spectrum.sample(freqs)
    q = spectrum.low_frequency_exponent(freqs[0])
    warnings: List[str] = []
    errors: Dict[str, float] = {}
    exponents: Dict[str, float] = {}
    for which in ("alpha", "theta"):
        values = curve.symmetric(which)
        integrand = psd * values / (TWO_PI * freqs) ** 2
        body = _log_trapezoid(freqs, integrand)
        if freqs.size >= 5:
            coarse = _log_trapezoid(freqs[::2], integrand[::2])
            scale = max(abs(body), 1e-300)
            if abs(coarse - body) / scale > cfg.coarse_tolerance:
                warnings.append(
                    f"{which}: frequency grid may be too coarse "
                    f"(half-grid estimate differs by {abs(coarse - body) / scale:.1%})"
                )
        tail, exponent = _tail(freqs, values, float(psd[0]), q, cfg.fit_decades)
        if exponent is not None:
            exponents[which] = exponent
        if math.isinf(tail):
            warnings.append(
                f"{which}: error integral diverges below {freqs[0]:.3g} Hz "
                f"(fitted exponent {exponent:.2f})"
            )
        errors[which] = body + tail

    for message in warnings:
        logger.warning(message)
    return SpectralError(
        err_alpha=errors["alpha"],
        err_theta=errors["theta"],
        warnings=warnings,
        exponents=exponents,
    )
