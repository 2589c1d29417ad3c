"""
A-Robust Composite Gates
Concatenates robust seed pulses, each rescaled by an amplitude factor, so the
composite hits the target angle while its weighted angle response to a mode
drift vanishes to the requested order.
"""
import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from ..core.config_manager import ArobustSettings, KernelSettings, get_config_manager
from ..core.exceptions import (
    InfeasibleError,
    InputValidationError,
    NegativeAmplitudeError,
    PreconditionError,
    SingularSystemError,
)
from ..core.mode_model import ModeSpec
from ..core.pulse import (
    PulseProgram,
    concatenate,
    concatenate_all,
    mirror_pulse,
    repeat_pulse,
    scale_amplitude,
)
from ..core.units import HALF_ANGLE, TARGET_ANGLE
from ..kernel.gate_kernel import GateDiagnostics, IonPair, diagnostics, weighted_theta_derivative


@dataclass
class AmSolution:
    """Amplitude factors, composite program and the residuals it achieves."""
    betas: List[float]
    composite: PulseProgram
    residuals: Dict[str, float]
    orders: List[int] = field(default_factory=list)
    condition_number: Optional[float] = None
    composite_diagnostics: Optional[GateDiagnostics] = None

    @property
    def beta_squared(self) -> List[float]:
        return [b * b for b in self.betas]

    def to_dict(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {
            'betas': list(self.betas),
            'beta_squared': self.beta_squared,
            'orders': list(self.orders),
            'condition_number': self.condition_number,
            'residuals': dict(self.residuals),
            'composite': self.composite.to_dict()
        }
        if self.composite_diagnostics is not None:
            payload['composite_diagnostics'] = self.composite_diagnostics.to_dict()
        return payload


def _arobust_settings(settings: Optional[ArobustSettings]) -> ArobustSettings:
    return settings if settings is not None else get_config_manager().get_arobust_settings()


def _with_ratios(modes: ModeSpec, ratios: Optional[Sequence[float]]) -> ModeSpec:
    return modes if ratios is None else modes.with_drift_ratios(ratios)


def solve_amplitude_factors(thetas: Sequence[float], response_rows: Sequence[Sequence[float]],
                            target: float = TARGET_ANGLE,
                            max_condition: Optional[float] = None
                            ) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Solve sum_i x_i Theta_i = target and sum_i x_i R_ji = 0 for x_i = beta_i^2.

    Rows are normalized before solving so the condition number does not carry
    the units of the derivative orders. Returns (x, residual of the raw system,
    condition number).
    """
    limit = max_condition if max_condition is not None else get_config_manager().get_arobust_settings().max_condition
    matrix = np.vstack([np.asarray(thetas, dtype=float)] +
                       [np.asarray(r, dtype=float) for r in response_rows])
    if matrix.shape[0] != matrix.shape[1]:
        raise InputValidationError(
            f"need {matrix.shape[0]} seeds for {matrix.shape[0] - 1} orders, got {matrix.shape[1]}",
            field="pulses",
        )
    rhs = np.zeros(matrix.shape[0])
    rhs[0] = target

    norms = np.max(np.abs(matrix), axis=1)
    if np.any(norms == 0) or not np.all(np.isfinite(matrix)):
        raise SingularSystemError("amplitude system has a zero or non-finite row")
    scaled = matrix / norms[:, None]
    condition = float(np.linalg.cond(scaled))
    if not math.isfinite(condition) or condition > limit:
        raise SingularSystemError("amplitude system is singular or ill-conditioned", condition)

    solution = np.linalg.solve(scaled, rhs / norms)
    residual = matrix @ solution - rhs
    if np.any(solution < 0):
        raise NegativeAmplitudeError(solution)
    return solution, residual, condition


def response_rows(pulse: PulseProgram, modes: ModeSpec, pair: IonPair, order: int,
                  settings: Optional[KernelSettings] = None) -> List[float]:
    """[sum_k r_k^j d^j Theta / d omega_k^j for j = 1..order]."""
    return [weighted_theta_derivative(pulse, modes, pair, j, settings) for j in range(1, order + 1)]


def check_robust_seed(pulse: PulseProgram, modes: ModeSpec, pair: IonPair,
                      target: Optional[float] = None,
                      settings: Optional[KernelSettings] = None,
                      arobust_settings: Optional[ArobustSettings] = None,
                      label: str = "seed") -> GateDiagnostics:
    """Diagnostics of a seed, raising PreconditionError when it is not robust."""
    cfg = _arobust_settings(arobust_settings)
    diag = diagnostics(pulse, modes, pair, settings=settings)
    if target is not None and abs(diag.theta - target) > cfg.angle_tolerance:
        raise PreconditionError(
            f"{label}: rotation angle {diag.theta:.9f} differs from {target:.9f} "
            f"by more than {cfg.angle_tolerance:.1e}"
        )
    if diag.err_alpha >= cfg.robust_err_alpha:
        raise PreconditionError(
            f"{label}: residual displacement E_alpha={diag.err_alpha:.3e} "
            f"is not below {cfg.robust_err_alpha:.1e}"
        )
    tau = pulse.total_duration
    if diag.dalpha_norm / tau ** 2 >= cfg.derivative_tolerance:
        raise PreconditionError(
            f"{label}: displacement drift response {diag.dalpha_norm / tau ** 2:.3e} "
            f"is not below {cfg.derivative_tolerance:.1e}"
        )
    return diag


def _composite_residuals(composite: PulseProgram, modes: ModeSpec, pair: IonPair, order: int,
                         settings: Optional[KernelSettings],
                         cfg: ArobustSettings) -> Tuple[Dict[str, float], GateDiagnostics]:
    diag = diagnostics(composite, modes, pair, max_order=order, settings=settings)
    residuals = {'angle': abs(diag.theta - TARGET_ANGLE), 'order_1': abs(diag.dtheta_weighted)}
    for j, value in enumerate(diag.higher_dtheta, start=2):
        residuals[f'order_{j}'] = abs(value)
    if residuals['angle'] > cfg.composite_tolerance:
        logger.warning(
            f"Composite angle residual {residuals['angle']:.3e} exceeds {cfg.composite_tolerance:.1e}"
        )
    return residuals, diag


def two_ion_arobust(half: PulseProgram, modes: ModeSpec, pair: IonPair,
                    settings: Optional[KernelSettings] = None,
                    arobust_settings: Optional[ArobustSettings] = None) -> AmSolution:
    """Robust XX(pi/8) half followed by its mirror about the two mode frequencies."""
    cfg = _arobust_settings(arobust_settings)
    if modes.num_ions != 2 or modes.num_modes != 2:
        raise PreconditionError(f"mirror construction needs a two-ion spec, got {modes.num_ions} ions")
    eta1, eta2 = modes.lamb_dicke
    if abs(eta1 - eta2) > cfg.eta_rtol * max(abs(eta1), abs(eta2)):
        raise PreconditionError(f"mirror construction needs equal Lamb-Dicke parameters, got {eta1} and {eta2}")
    pair.validate(modes)

    half_diag = check_robust_seed(half, modes, pair, HALF_ANGLE, settings, cfg, label="half")
    omega1, omega2 = modes.mode_freqs
    composite = concatenate(half, mirror_pulse(half, omega1, omega2))

    residuals, diag = _composite_residuals(composite, modes, pair, 1, settings, cfg)
    tau = composite.total_duration
    if residuals['order_1'] > cfg.composite_tolerance * tau:
        logger.warning(
            f"Composite first-order angle response {residuals['order_1']:.3e} s "
            f"(half alone {abs(half_diag.dtheta_weighted):.3e} s)"
        )
    logger.info(f"Mirror A-robust composite built: residuals {residuals}")
    return AmSolution(
        betas=[1.0, 1.0],
        composite=composite,
        residuals=residuals,
        orders=[1],
        composite_diagnostics=diag,
    )


def nth_order_arobust(pulses: Sequence[PulseProgram], modes: ModeSpec, pair: IonPair,
                      ratios: Optional[Sequence[float]] = None, n: int = 1,
                      settings: Optional[KernelSettings] = None,
                      arobust_settings: Optional[ArobustSettings] = None) -> AmSolution:
    """Suppress the weighted angle response at orders 1..n with n+1 rescaled robust seeds."""
    cfg = _arobust_settings(arobust_settings)
    if n < 1:
        raise InputValidationError(f"must be >= 1, got {n}", field="n")
    if len(pulses) != n + 1:
        raise InputValidationError(f"need exactly {n + 1} seed pulses, got {len(pulses)}", field="pulses")
    weighted = _with_ratios(modes, ratios)
    pair.validate(weighted)

    thetas = []
    columns = []
    for i, pulse in enumerate(pulses):
        diag = check_robust_seed(pulse, weighted, pair, None, settings, cfg, label=f"seed {i}")
        thetas.append(diag.theta)
        columns.append(response_rows(pulse, weighted, pair, n, settings))
    rows = np.array(columns).T

    beta2, linear_residual, condition = solve_amplitude_factors(thetas, rows, TARGET_ANGLE, cfg.max_condition)
    betas = [math.sqrt(x) for x in beta2]
    composite = concatenate_all([scale_amplitude(p, b) for p, b in zip(pulses, betas)])

    residuals, diag = _composite_residuals(composite, weighted, pair, n, settings, cfg)
    residuals['linear_angle'] = float(abs(linear_residual[0]))
    for j in range(1, n + 1):
        residuals[f'linear_order_{j}'] = float(abs(linear_residual[j]))
    logger.info(
        f"A-robust amplitude factors (order {n}): betas={[round(b, 9) for b in betas]}, "
        f"condition number {condition:.3e}"
    )
    return AmSolution(
        betas=betas,
        composite=composite,
        residuals=residuals,
        orders=list(range(1, n + 1)),
        condition_number=condition,
        composite_diagnostics=diag,
    )


def am_concatenate(p1: PulseProgram, p2: PulseProgram, modes: ModeSpec, pair: IonPair,
                   ratios: Optional[Sequence[float]] = None,
                   settings: Optional[KernelSettings] = None,
                   arobust_settings: Optional[ArobustSettings] = None) -> AmSolution:
    """First-order AM concatenation of two robust seeds with drift-ratio weighting."""
    return nth_order_arobust([p1, p2], modes, pair, ratios, 1, settings, arobust_settings)


def select_feasible_seeds(candidates: Sequence[PulseProgram], modes: ModeSpec, pair: IonPair,
                          ratios: Optional[Sequence[float]] = None, order: int = 1,
                          settings: Optional[KernelSettings] = None,
                          arobust_settings: Optional[ArobustSettings] = None
                          ) -> Tuple[Tuple[int, ...], np.ndarray]:
    """Least-power feasible subset of ``order + 1`` robust candidates.

    Returns the candidate indices and their squared amplitude factors; the
    subset with the smallest max beta^2 wins, ties to the earliest subset.
    """
    cfg = _arobust_settings(arobust_settings)
    weighted = _with_ratios(modes, ratios)
    thetas: Dict[int, float] = {}
    columns: Dict[int, List[float]] = {}
    for i, pulse in enumerate(candidates):
        try:
            diag = check_robust_seed(pulse, weighted, pair, None, settings, cfg, label=f"candidate {i}")
        except PreconditionError as e:
            logger.debug(f"Skipping candidate: {e}")
            continue
        thetas[i] = diag.theta
        columns[i] = response_rows(pulse, weighted, pair, order, settings)

    best: Optional[Tuple[float, Tuple[int, ...], np.ndarray]] = None
    for subset in itertools.combinations(sorted(thetas), order + 1):
        rows = np.array([columns[i] for i in subset]).T
        try:
            beta2, _, _ = solve_amplitude_factors([thetas[i] for i in subset], rows,
                                                  TARGET_ANGLE, cfg.max_condition)
        except (NegativeAmplitudeError, SingularSystemError):
            continue
        power = float(np.max(beta2))
        if best is None or power < best[0]:
            best = (power, subset, beta2)
    if best is None:
        raise InfeasibleError(
            f"no feasible set of {order + 1} seeds among {len(candidates)} candidates; "
            "seeds need opposite-sign weighted angle gradients"
        )
    logger.info(f"Selected seeds {best[1]} with max beta^2 {best[0]:.6f}")
    return best[1], best[2]


def repeated_half_composite(half: PulseProgram) -> PulseProgram:
    """Plain robust XX(pi/4): the same pi/8 half played twice."""
    return repeat_pulse(half, 2)


def check_power_ordering(arobust_half_amplitude: float, robust_full_amplitude: float) -> bool:
    """True when the A-robust half needs more drive than the full-time robust pulse."""
    ordered = arobust_half_amplitude > robust_full_amplitude
    if not ordered:
        logger.warning(
            f"A-robust half amplitude {arobust_half_amplitude:.6e} rad/s does not exceed "
            f"robust full-time amplitude {robust_full_amplitude:.6e} rad/s"
        )
    return ordered
