"""
Robust FM Pulse Optimizer
Searches time-symmetric piecewise-constant detuning programs whose residual and
time-averaged displacements vanish, then calibrates the amplitude so the
rotation angle hits its target.
"""
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy import optimize, special

from ..core.config_manager import (
    ArobustSettings,
    KernelSettings,
    OptimizerSettings,
    get_config_manager,
)
from ..core.exceptions import (
    AmplitudeLimitError,
    CalibrationError,
    ConvergenceError,
    InputValidationError,
)
from ..core.mode_model import ModeSpec
from ..core.pulse import PulseProgram, scale_amplitude, uniform_fm_pulse
from ..core.units import HALF_ANGLE, TARGET_ANGLE, TWO_PI, hz_to_rad, rad_list_to_hz, rad_to_hz
from ..kernel.gate_kernel import GateDiagnostics, IonPair, diagnostics, pair_weights, rotation_angle
from ..kernel.primitives import segment_moments


class FFSuppression(BaseModel):
    """Extra penalty on the displacement filter function at +-freq_hz."""
    model_config = ConfigDict(frozen=True)

    freq_hz: float = Field(gt=0)
    weight: Optional[float] = Field(default=None, ge=0)  # None -> OptimizerConfig.ff_weight


class OptimizerConfig(BaseModel):
    """Optimizer inputs. Frequencies in rad/s, times in seconds."""
    model_config = ConfigDict(frozen=True)

    gate_time: float = Field(gt=0)
    max_amplitude: float = Field(gt=0)
    detuning_bounds: Tuple[float, float]
    num_segments: int = Field(default=28, ge=2)
    target_angle: float = HALF_ANGLE
    initial_guess: Optional[Union[float, List[float]]] = None
    ff_suppression: Optional[FFSuppression] = None
    seed: int = Field(default=0, ge=0)
    max_iters: int = Field(default=2000, ge=1)
    tolerance: float = Field(default=1e-10, gt=0)
    alpha_bar_weight: float = Field(default=1.0, ge=0)
    ff_weight: float = Field(default=10.0, ge=0)
    amplitude_weight: float = Field(default=1.0, ge=0)
    num_starts: int = Field(default=8, ge=1)
    start_spread: float = Field(default=0.25, ge=0)
    restarts: int = Field(default=3, ge=0)
    cost_threshold: float = Field(default=1e-8, gt=0)
    robust: bool = True

    @model_validator(mode="after")
    def _check(self) -> 'OptimizerConfig':
        if self.num_segments % 2:
            raise ValueError(f"num_segments must be even, got {self.num_segments}")
        lo, hi = self.detuning_bounds
        if not lo < hi:
            raise ValueError("detuning_bounds must be ordered (low, high)")
        if self.target_angle == 0:
            raise ValueError("target_angle must be nonzero")
        if isinstance(self.initial_guess, list):
            if len(self.initial_guess) != self.num_segments // 2:
                raise ValueError("explicit initial_guess must list num_segments/2 detunings")
            if min(self.initial_guess) < lo or max(self.initial_guess) > hi:
                raise ValueError("initial_guess outside detuning_bounds")
        return self

    @classmethod
    def from_settings(cls, settings: Optional[OptimizerSettings] = None,
                      **values: Any) -> 'OptimizerConfig':
        """Build a config whose unspecified knobs come from the configuration file."""
        s = settings if settings is not None else get_config_manager().get_optimizer_settings()
        defaults = {
            'num_segments': s.num_segments,
            'num_starts': s.num_starts,
            'alpha_bar_weight': s.alpha_bar_weight,
            'ff_weight': s.ff_weight,
            'amplitude_weight': s.amplitude_weight,
            'max_iters': s.max_iters,
            'tolerance': s.tolerance,
            'cost_threshold': s.cost_threshold,
            'start_spread': s.start_spread,
            'restarts': s.restarts,
        }
        defaults.update({k: v for k, v in values.items() if v is not None})
        return _validated(cls, defaults)

    def to_dict(self) -> Dict[str, Any]:
        """File representation (Hz)."""
        guess: Any = None
        if isinstance(self.initial_guess, list):
            guess = rad_list_to_hz(self.initial_guess)
        elif self.initial_guess is not None:
            guess = rad_to_hz(self.initial_guess)
        return {
            'gate_time_s': self.gate_time,
            'max_amplitude_hz': rad_to_hz(self.max_amplitude),
            'detuning_bounds_hz': rad_list_to_hz(self.detuning_bounds),
            'num_segments': self.num_segments,
            'target_angle': self.target_angle,
            'initial_guess_hz': guess,
            'ff_suppression': self.ff_suppression.model_dump() if self.ff_suppression else None,
            'seed': self.seed,
            'max_iters': self.max_iters,
            'tolerance': self.tolerance,
            'alpha_bar_weight': self.alpha_bar_weight,
            'ff_weight': self.ff_weight,
            'amplitude_weight': self.amplitude_weight,
            'num_starts': self.num_starts,
            'start_spread': self.start_spread,
            'restarts': self.restarts,
            'cost_threshold': self.cost_threshold,
            'robust': self.robust,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any],
                  settings: Optional[OptimizerSettings] = None) -> 'OptimizerConfig':
        """Parse the Hz file representation."""
        values = dict(data)
        converted: Dict[str, Any] = {}
        try:
            converted['gate_time'] = values.pop('gate_time_s')
            converted['max_amplitude'] = hz_to_rad(values.pop('max_amplitude_hz'))
            converted['detuning_bounds'] = tuple(hz_to_rad(v) for v in values.pop('detuning_bounds_hz'))
        except KeyError as e:
            raise InputValidationError("missing required key", field=str(e.args[0])) from e
        except (TypeError, ValueError) as e:
            raise InputValidationError(str(e), field="optimizer") from e
        guess = values.pop('initial_guess_hz', None)
        if isinstance(guess, list):
            converted['initial_guess'] = [hz_to_rad(v) for v in guess]
        elif guess is not None:
            converted['initial_guess'] = hz_to_rad(guess)
        converted.update(values)
        return cls.from_settings(settings, **converted)


def _validated(model: Any, values: Dict[str, Any]) -> Any:
    try:
        return model.model_validate(values)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(p) for p in first.get("loc", ())) or model.__name__
        raise InputValidationError(first.get("msg", str(e)), field=location) from e


@dataclass
class OptimizerReport:
    """Outcome of a multi-start optimization."""
    pulse: PulseProgram
    cost_history: List[float]
    diagnostics: GateDiagnostics
    converged: bool
    start_index: int
    best_cost: float
    required_amplitude: float  # rad/s
    robust_checks: Dict[str, float] = field(default_factory=dict)
    start_costs: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'converged': self.converged,
            'start_index': self.start_index,
            'best_cost': self.best_cost,
            'required_amplitude_hz': rad_to_hz(self.required_amplitude),
            'robust_checks': dict(self.robust_checks),
            'start_costs': list(self.start_costs),
            'cost_history': list(self.cost_history),
            'diagnostics': self.diagnostics.to_dict(),
            'pulse': self.pulse.to_dict()
        }


@dataclass
class DriveTerms:
    """Per-mode drive integrals of an equal-segment program and their detuning gradients."""
    a: np.ndarray  # (K,) integral f
    b: np.ndarray  # (K,) integral t f
    da: np.ndarray  # (K, S)
    db: np.ndarray  # (K, S)
    im_p0: Optional[np.ndarray] = None  # (K,)
    d_im_p0: Optional[np.ndarray] = None  # (K, S)


@dataclass
class _StartResult:
    index: int
    half_detunings: np.ndarray
    cost: float
    history: List[float]
    message: str


def calibrate_angle(pulse: PulseProgram, modes: ModeSpec, pair: IonPair,
                    target: float = TARGET_ANGLE,
                    settings: Optional[KernelSettings] = None) -> PulseProgram:
    """Rescale the amplitude so Theta equals ``target`` (Theta is quadratic in Omega)."""
    theta = rotation_angle(pulse, modes, pair, settings)
    if theta == 0.0 or not math.isfinite(theta):
        raise CalibrationError(f"rotation angle is {theta}; cannot calibrate")
    if theta * target < 0:
        raise CalibrationError(
            f"rotation angle {theta:.6e} has the opposite sign of target {target:.6e}"
        )
    return scale_amplitude(pulse, math.sqrt(target / theta))


class RobustPulseOptimizer:
    """
    Multi-start trust-region least squares over the free half of a symmetric
    detuning program, with seeded perturbation restarts for starts that stall.

    Cost (evaluated at the calibrated amplitude beta * Omega_ref):
        beta^2 * [sum_k w_k (|A_k|^2 + w_bar |A_k - B_k/tau|^2) + ff terms]
        + amplitude_weight * max(0, beta^2 - 1)^2
    with beta^2 = target / Theta(Omega_ref), Omega_ref = max_amplitude.
    """

    def __init__(self, config: OptimizerConfig, modes: ModeSpec, pair: IonPair,
                 kernel_settings: Optional[KernelSettings] = None,
                 workers: Optional[int] = None):
        pair.validate(modes)
        manager = get_config_manager()
        self.config = config
        self.modes = modes
        self.pair = pair
        self.kernel_settings = kernel_settings if kernel_settings is not None else manager.get_kernel_settings()
        self.workers = workers if workers is not None else manager.get_optimizer_settings().workers

        self.num_half = config.num_segments // 2
        self.segment_duration = config.gate_time / config.num_segments
        self.starts = self.segment_duration * np.arange(config.num_segments)
        self.unit = TWO_PI / config.gate_time
        self.reference = 0.5 * (config.detuning_bounds[0] + config.detuning_bounds[1])

        self.kappa = pair_weights(modes, pair)
        self.disp_weights = 0.25 * modes.lamb_dicke ** 2 * (
            modes.coupling[pair.j1] ** 2 + modes.coupling[pair.j2] ** 2
        )
        self.bar_weight = config.alpha_bar_weight if config.robust else 0.0
        self.ff_shift: Optional[float] = None
        self.ff_weight = 0.0
        if config.ff_suppression is not None:
            self.ff_shift = TWO_PI * config.ff_suppression.freq_hz
            w = config.ff_suppression.weight
            self.ff_weight = config.ff_weight if w is None else w

        logger.info(
            f"RobustPulseOptimizer initialized: {config.num_segments} segments, "
            f"tau={config.gate_time:.3e} s, {config.num_starts} starts, robust={config.robust}"
        )

    def full_detunings(self, half_detunings: Sequence[float]) -> np.ndarray:
        half = np.asarray(half_detunings, dtype=float)
        return np.concatenate([half, half[::-1]])

    def drive_terms(self, detunings: np.ndarray, freqs: np.ndarray,
                    with_angle: bool = False) -> DriveTerms:
        """A, B, Im P_0 and their gradients with respect to every segment detuning."""
        dt = self.segment_duration
        amp = self.config.max_amplitude
        mu = freqs[:, None] - detunings[None, :]
        advance = mu * dt
        theta0 = np.cumsum(advance, axis=1) - advance
        phasor = amp * np.exp(1j * theta0)
        moments = segment_moments(mu, dt, 2, self.kernel_settings)

        f0 = phasor * moments[0]
        f1 = phasor * (self.starts * moments[0] + moments[1])
        tail0 = np.cumsum(f0[:, ::-1], axis=1)[:, ::-1] - f0
        tail1 = np.cumsum(f1[:, ::-1], axis=1)[:, ::-1] - f1
        w0 = phasor * moments[1]

        terms = DriveTerms(
            a=np.sum(f0, axis=1),
            b=np.sum(f1, axis=1),
            da=-1j * (w0 + dt * tail0),
            db=-1j * (phasor * (self.starts * moments[1] + moments[2]) + dt * tail1),
        )
        if with_angle:
            before = np.cumsum(f0, axis=1) - f0
            same = amp ** 2 * (dt * moments[0] - moments[1])
            terms.im_p0 = np.imag(np.sum(f0 * np.conj(before) + same, axis=1))
            varied = (
                w0 * np.conj(before)
                + dt * np.conj(before) * tail0
                + amp ** 2 * (dt * moments[1] - moments[2])
                + tail0 * np.conj(phasor * (dt * moments[0] - moments[1]))
            )
            terms.d_im_p0 = -np.real(varied)
        return terms

    def _calibration(self, terms: DriveTerms) -> Tuple[float, np.ndarray]:
        """beta^2 = target / Theta(Omega_ref) and its detuning gradient, with a softplus floor on Theta."""
        assert terms.im_p0 is not None and terms.d_im_p0 is not None
        target = self.config.target_angle
        sign = math.copysign(1.0, target)
        floor = 1e-3 * abs(target)
        theta = float(np.sum(self.kappa * terms.im_p0))
        dtheta = self.kappa @ terms.d_im_p0
        z = sign * theta / floor
        theta_eff = floor * max(float(np.logaddexp(0.0, z)), 1e-12)
        beta2 = abs(target) / theta_eff
        dbeta2 = -beta2 / theta_eff * special.expit(z) * sign * dtheta
        return beta2, dbeta2

    def residuals_and_jacobian(self, half_detunings: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
        """
        Real residual vector whose squared norm is the cost, and its Jacobian
        with respect to the free half detunings (rad/s).

        Rows: calibrated displacements sqrt(w_k) beta A_k, the time-averaged
        displacements, the filter-function shifts (real and imaginary parts)
        and the amplitude excess.
        """
        detunings = self.full_detunings(half_detunings)
        freqs = self.modes.mode_freqs
        terms = self.drive_terms(detunings, freqs, with_angle=True)
        beta2, dbeta2 = self._calibration(terms)

        root = np.sqrt(self.disp_weights)
        values = [root * terms.a]
        derivs = [root[:, None] * terms.da]
        if self.bar_weight > 0:
            tau = self.config.gate_time
            scale = math.sqrt(self.bar_weight)
            values.append(scale * root * (terms.a - terms.b / tau))
            derivs.append(scale * root[:, None] * (terms.da - terms.db / tau))
        if self.ff_shift is not None and self.ff_weight > 0:
            scale = math.sqrt(self.ff_weight)
            for shift in (self.ff_shift, -self.ff_shift):
                shifted = self.drive_terms(detunings, freqs - shift)
                values.append(scale * root * shifted.a)
                derivs.append(scale * root[:, None] * shifted.da)

        z = np.concatenate(values)
        dz = np.concatenate(derivs, axis=0)
        beta = math.sqrt(beta2)
        dbeta = dbeta2 / (2.0 * beta)
        scaled = beta * z
        dscaled = beta * dz + z[:, None] * dbeta[None, :]

        rows = [scaled.real, scaled.imag]
        jac_rows = [dscaled.real, dscaled.imag]
        amp_w = self.config.amplitude_weight
        if amp_w > 0:
            excess = max(0.0, beta2 - 1.0)
            slope = dbeta2 if excess > 0 else np.zeros_like(dbeta2)
            rows.append(np.array([math.sqrt(amp_w) * excess]))
            jac_rows.append(math.sqrt(amp_w) * slope[None, :])

        residual = np.concatenate(rows)
        jacobian = np.vstack(jac_rows)
        half_jacobian = jacobian[:, :self.num_half] + jacobian[:, ::-1][:, :self.num_half]
        return residual, half_jacobian

    def cost_and_gradient(self, half_detunings: Sequence[float]) -> Tuple[float, np.ndarray]:
        """Cost and its gradient with respect to the free half detunings (rad/s)."""
        residual, jacobian = self.residuals_and_jacobian(half_detunings)
        return float(residual @ residual), 2.0 * (jacobian.T @ residual)

    def _uniform_angle(self, center: float) -> float:
        detunings = np.full(self.config.num_segments, center)
        terms = self.drive_terms(detunings, self.modes.mode_freqs, with_angle=True)
        assert terms.im_p0 is not None
        return float(np.sum(self.kappa * terms.im_p0))

    def _start_centers(self) -> List[float]:
        """Uniform detunings to start from: whole loops away from each mode first, then a grid.

        Centers closer than half a loop to a mode, or whose rotation angle has
        the wrong sign for the target, are skipped.
        """
        lo, hi = self.config.detuning_bounds
        candidates: List[float] = []
        for n in range(1, 64):
            for freq in self.modes.mode_freqs:
                for side in (-1.0, 1.0):
                    candidate = float(freq + side * n * self.unit)
                    if lo <= candidate <= hi:
                        candidates.append(candidate)
        candidates.extend(float(c) for c in np.linspace(lo, hi, 4 * self.config.num_starts + 2)[1:-1])

        centers: List[float] = []
        guess = self.config.initial_guess
        if guess is not None and not isinstance(guess, list):
            centers.append(float(guess))
        for candidate in candidates:
            if np.min(np.abs(self.modes.mode_freqs - candidate)) < 0.5 * self.unit:
                continue
            if any(abs(candidate - c) < 1e-6 * self.unit for c in centers):
                continue
            if self._uniform_angle(candidate) * self.config.target_angle <= 0:
                continue
            centers.append(candidate)
        if not centers:
            centers = list(np.linspace(lo, hi, self.config.num_starts + 2)[1:-1])
        return centers

    def start_points(self) -> List[np.ndarray]:
        """Deterministic initial points in scaled units u = (delta - ref) tau / 2 pi."""
        rng = np.random.default_rng(self.config.seed)
        lo_u, hi_u = self._scaled_bounds()
        centers = self._start_centers()
        guess = self.config.initial_guess
        points = []
        for index in range(self.config.num_starts):
            # later passes over the centers spread wider
            spread = self.config.start_spread * (1.0 + index // len(centers))
            noise = spread * rng.standard_normal(self.num_half)
            if index == 0 and isinstance(guess, list):
                base = (np.asarray(guess) - self.reference) / self.unit
                points.append(np.clip(base, lo_u, hi_u))
                continue
            center = centers[index % len(centers)]
            base = np.full(self.num_half, (center - self.reference) / self.unit)
            if index == 0 and guess is not None:
                points.append(np.clip(base, lo_u, hi_u))
                continue
            points.append(np.clip(base + noise, lo_u, hi_u))
        return points

    def _scaled_bounds(self) -> Tuple[float, float]:
        lo, hi = self.config.detuning_bounds
        return (lo - self.reference) / self.unit, (hi - self.reference) / self.unit

    def _run_start(self, index: int, u0: np.ndarray) -> _StartResult:
        history: List[float] = []
        cache: Dict[bytes, Tuple[np.ndarray, np.ndarray]] = {}

        def evaluate(u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
            key = np.asarray(u, dtype=float).tobytes()
            if key not in cache:
                cache.clear()
                residual, jacobian = self.residuals_and_jacobian(self.reference + self.unit * u)
                cache[key] = (residual, jacobian * self.unit)
                history.append(float(residual @ residual))
            return cache[key]

        lo_u, hi_u = self._scaled_bounds()
        tol = self.config.tolerance
        rng = np.random.default_rng([self.config.seed, index])
        best_u = np.asarray(u0, dtype=float)
        best_cost = math.inf
        message = ""
        point = best_u
        iterations = 0
        for attempt in range(self.config.restarts + 1):
            result = optimize.least_squares(
                lambda u: evaluate(u)[0],
                point,
                jac=lambda u: evaluate(u)[1],
                bounds=(lo_u, hi_u),
                method="trf",
                ftol=tol,
                xtol=tol,
                gtol=tol,
                max_nfev=self.config.max_iters,
            )
            iterations += int(result.nfev)
            # least_squares reports half the sum of squares
            cost = 2.0 * float(result.cost)
            if cost < best_cost:
                best_u, best_cost, message = np.asarray(result.x, dtype=float), cost, str(result.message)
            if best_cost <= self.config.cost_threshold:
                break
            point = np.clip(best_u + self.config.start_spread * rng.standard_normal(self.num_half), lo_u, hi_u)
            logger.debug(f"start {index}: restart {attempt + 1} from cost {best_cost:.3e}")

        half = self.reference + self.unit * best_u
        logger.debug(f"start {index}: cost={best_cost:.3e} after {iterations} evaluations ({message})")
        return _StartResult(index, half, best_cost, history, message)

    def run_starts(self) -> List[_StartResult]:
        points = self.start_points()
        if self.workers <= 1:
            return [self._run_start(i, u0) for i, u0 in enumerate(points)]
        results: Dict[int, _StartResult] = {}
        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            future_to_index = {
                executor.submit(self._run_start, i, u0): i for i, u0 in enumerate(points)
            }
            for future in as_completed(future_to_index):
                results[future_to_index[future]] = future.result()
        return [results[i] for i in range(len(points))]

    def optimize(self, arobust_settings: Optional[ArobustSettings] = None) -> OptimizerReport:
        """Run every start, keep the lowest cost (ties to the lower start index), calibrate."""
        checks_cfg = arobust_settings if arobust_settings is not None else get_config_manager().get_arobust_settings()
        starts = self.run_starts()
        finite = [s for s in starts if math.isfinite(s.cost)]
        if not finite:
            raise ConvergenceError("no optimizer start produced a finite cost")
        # costs under the threshold tie, so the lowest such start index wins
        threshold = self.config.cost_threshold
        best = min(finite, key=lambda s: (max(s.cost, threshold), s.index))

        evaluations = [c for s in starts for c in s.history]
        cost_history = np.minimum.accumulate(np.asarray(evaluations)).tolist() if evaluations else []

        raw = uniform_fm_pulse(self.full_detunings(best.half_detunings), self.config.gate_time,
                               self.config.max_amplitude)
        pulse = calibrate_angle(raw, self.modes, self.pair, self.config.target_angle, self.kernel_settings)
        required = pulse.peak_amplitude
        if required > self.config.max_amplitude * (1.0 + 1e-9):
            raise AmplitudeLimitError(required, self.config.max_amplitude)

        diag = diagnostics(pulse, self.modes, self.pair, target_angle=self.config.target_angle,
                           settings=self.kernel_settings)
        tau = self.config.gate_time
        alpha_bar_err = float(np.sum(np.abs(diag.alpha_bar) ** 2))
        checks = {
            'err_alpha': diag.err_alpha,
            'err_alpha_bar': alpha_bar_err,
            'dalpha_norm_scaled': diag.dalpha_norm / tau ** 2,
        }
        displacement_cost = diag.err_alpha + self.bar_weight * alpha_bar_err
        converged = displacement_cost <= self.config.cost_threshold and checks['err_alpha'] < checks_cfg.robust_err_alpha
        if self.config.robust:
            converged = converged and checks['dalpha_norm_scaled'] < checks_cfg.derivative_tolerance
        if not converged:
            logger.warning(
                f"Optimizer did not converge: displacement cost {displacement_cost:.3e}, "
                f"E_alpha {checks['err_alpha']:.3e}"
            )

        logger.info(
            f"Optimization complete: best cost {best.cost:.3e} from start {best.index}, "
            f"calibrated amplitude {rad_to_hz(required):.1f} Hz"
        )
        return OptimizerReport(
            pulse=pulse,
            cost_history=cost_history,
            diagnostics=diag,
            converged=converged,
            start_index=best.index,
            best_cost=best.cost,
            required_amplitude=required,
            robust_checks=checks,
            start_costs=[s.cost for s in starts],
        )


def optimize_fm(config: OptimizerConfig, modes: ModeSpec, pair: IonPair,
                kernel_settings: Optional[KernelSettings] = None,
                workers: Optional[int] = None) -> OptimizerReport:
    """Design a robust, time-symmetric FM pulse calibrated to ``config.target_angle``."""
    return RobustPulseOptimizer(config, modes, pair, kernel_settings, workers).optimize()
