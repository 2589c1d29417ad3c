"""
Detuning Scans and Repeated-Gate Sequences
Predicts the measured two-qubit populations, parity contrast and Bell fidelity
of a gate (or a run of identical gates) under static detuning offsets, either
from the exact closed-form evolution or from the master-equation propagator.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from scipy import stats

from ..core.config_manager import KernelSettings, SimulationSettings, get_config_manager
from ..core.exceptions import InputValidationError
from ..core.mode_model import ModeSpec
from ..core.pulse import PulseProgram, apply_offset, repeat_pulse
from ..core.units import TARGET_ANGLE, TWO_PI
from ..kernel.gate_kernel import GateDiagnostics, IonPair, diagnostics
from .lindblad import SPIN_CONFIGS, NoiseModel, SpinObservables, lindblad_sim, spin_observables

SCAN_COLUMNS = ['offset_hz', 'p00', 'p11', 'p01_10', 'contrast', 'fidelity', 'err_alpha', 'err_theta']
SWEEP_PARAMETERS = ('motional_dephasing_T2', 'heating_rate')


@dataclass
class ScanPoint:
    offset: float  # rad/s
    observables: SpinObservables
    err_alpha: float
    err_theta: float

    def row(self) -> Dict[str, float]:
        o = self.observables
        return {
            'offset_hz': self.offset / TWO_PI,
            'p00': o.p00,
            'p11': o.p11,
            'p01_10': o.p01_10,
            'contrast': o.contrast,
            'fidelity': o.fidelity,
            'err_alpha': self.err_alpha,
            'err_theta': self.err_theta
        }


@dataclass
class ScanResult:
    """Observables of a detuning scan, one point per offset in input order."""
    points: List[ScanPoint]
    repeats: int = 1
    noisy: bool = False

    @property
    def offsets(self) -> np.ndarray:
        return np.array([p.offset for p in self.points])

    def column(self, name: str) -> np.ndarray:
        return self.to_dataframe()[name].to_numpy()

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame([p.row() for p in self.points], columns=SCAN_COLUMNS)

    def max_even_deviation(self) -> float:
        """max |P00 - 1/2| and |P11 - 1/2| over the scan."""
        frame = self.to_dataframe()
        return float(np.max(np.abs(frame[['p00', 'p11']].to_numpy() - 0.5)))

    def even_parity_linear_term(self) -> float:
        """Largest |linear coefficient| of P00 or P11 against offset (per Hz), from quadratic fits.

        P00 + P11 is insensitive to the angle error, so each population is fitted on its own.
        """
        frame = self.to_dataframe()
        if len(frame) < 3:
            raise InputValidationError("need at least three offsets for a quadratic fit", field="offsets")
        linear = [np.polyfit(frame['offset_hz'], frame[name], 2)[1] for name in ('p00', 'p11')]
        return float(np.max(np.abs(linear)))


@dataclass
class GateFit:
    """Per-gate error from a linear fit of state error against gate count."""
    gate_error: float
    std_error: float
    intercept: float
    counts: List[int] = field(default_factory=list)
    errors: List[float] = field(default_factory=list)

    @property
    def gate_fidelity(self) -> float:
        return 1.0 - self.gate_error

    def to_dict(self) -> Dict[str, Any]:
        return {
            'gate_error': self.gate_error,
            'std_error': self.std_error,
            'intercept': self.intercept,
            'gate_fidelity': self.gate_fidelity,
            'counts': list(self.counts),
            'errors': list(self.errors)
        }


def _simulation_settings(settings: Optional[SimulationSettings]) -> SimulationSettings:
    return settings if settings is not None else get_config_manager().get_simulation_settings()


def _nbar_per_mode(nbar: Union[float, Sequence[float]], num_modes: int) -> np.ndarray:
    values = np.broadcast_to(np.asarray(nbar, dtype=float), (num_modes,)) if np.ndim(nbar) == 0 \
        else np.asarray(nbar, dtype=float)
    if values.shape != (num_modes,):
        raise InputValidationError(f"expected {num_modes} entries, got {values.size}", field="nbar")
    if np.any(values < 0):
        raise InputValidationError("must be >= 0", field="nbar")
    return values


def spin_state_from_gate(alpha: np.ndarray, theta: float, nbar: np.ndarray) -> np.ndarray:
    """sigma_x-basis spin density matrix after a gate with residual displacements ``alpha``.

    ``alpha`` has shape (2, K): the displacement of every mode conditioned on
    each of the two spins.
    """
    signs = np.array(SPIN_CONFIGS, dtype=float)
    gamma = signs @ alpha  # (4, K)
    parity = signs[:, 0] * signs[:, 1]
    diff = gamma[:, None, :] - gamma[None, :, :]
    overlap = np.exp(
        -np.abs(diff) ** 2 * (nbar[None, None, :] + 0.5)
        + 1j * np.imag(gamma[:, None, :] * np.conj(gamma[None, :, :]))
    )
    phase = np.exp(1j * theta * (parity[:, None] - parity[None, :]))
    return 0.25 * phase * np.prod(overlap, axis=-1)


def ideal_observables(pulse: PulseProgram, modes: ModeSpec, pair: IonPair,
                      nbar: Union[float, Sequence[float]] = 0.0,
                      settings: Optional[KernelSettings] = None) -> SpinObservables:
    nbar_k = _nbar_per_mode(nbar, modes.num_modes)
    diag = diagnostics(pulse, modes, pair, settings=settings)
    return spin_observables(spin_state_from_gate(diag.alpha, diag.theta, nbar_k))


def ideal_populations(pulse: PulseProgram, modes: ModeSpec, pair: IonPair,
                      nbar: Union[float, Sequence[float]] = 0.0,
                      settings: Optional[KernelSettings] = None
                      ) -> Tuple[float, float, float, float, float]:
    """(P00, P11, P01_10, contrast, fidelity) of |00> (x) thermal after ``pulse``."""
    return ideal_observables(pulse, modes, pair, nbar, settings).as_tuple()


def _scan_point(pulse: PulseProgram, modes: ModeSpec, pair: IonPair, offset: float,
                repeats: int, noise: Optional[NoiseModel], n_max: Any,
                kernel_settings: Optional[KernelSettings],
                sim_settings: SimulationSettings) -> ScanPoint:
    sequence = repeat_pulse(apply_offset(pulse, offset), repeats)
    diag: GateDiagnostics = diagnostics(sequence, modes, pair, target_angle=repeats * TARGET_ANGLE,
                                        settings=kernel_settings)
    if noise is None:
        observables = spin_observables(
            spin_state_from_gate(diag.alpha, diag.theta, np.zeros(modes.num_modes))
        )
    else:
        observables = lindblad_sim(sequence, modes, pair, noise, n_max, sim_settings).observables
    logger.debug(f"Scan point {offset / TWO_PI:+.3f} Hz: fidelity {observables.fidelity:.6f}")
    return ScanPoint(offset=float(offset), observables=observables,
                     err_alpha=diag.err_alpha, err_theta=diag.err_theta)


def detuning_scan(pulse: PulseProgram, modes: ModeSpec, pair: IonPair,
                  offsets: Sequence[float], repeats: int = 1,
                  noise: Optional[NoiseModel] = None, n_max: Any = None,
                  kernel_settings: Optional[KernelSettings] = None,
                  settings: Optional[SimulationSettings] = None,
                  workers: Optional[int] = None) -> ScanResult:
    """Observables of ``repeats`` back-to-back gates at every offset (rad/s).

    Without ``noise`` the closed-form evolution is used from the motional
    ground state; otherwise every point runs the master-equation propagator.
    """
    if repeats < 1:
        raise InputValidationError(f"must be >= 1, got {repeats}", field="repeats")
    pair.validate(modes)
    cfg = _simulation_settings(settings)
    offsets = [float(e) for e in offsets]
    pool_size = workers if workers is not None else cfg.workers

    def evaluate(offset: float) -> ScanPoint:
        return _scan_point(pulse, modes, pair, offset, repeats, noise, n_max, kernel_settings, cfg)

    if pool_size > 1 and len(offsets) > 1:
        with ThreadPoolExecutor(max_workers=pool_size) as executor:
            points = list(executor.map(evaluate, offsets))
    else:
        points = [evaluate(offset) for offset in offsets]

    logger.info(
        f"Detuning scan finished - {len(points)} offsets, {repeats} gate(s), "
        f"{'master equation' if noise is not None else 'closed form'}"
    )
    return ScanResult(points=points, repeats=repeats, noisy=noise is not None)


def repeated_gate_fit(counts: Sequence[int], fidelities: Sequence[float]) -> GateFit:
    """Slope of (1 - F) against gate count."""
    counts_arr = np.asarray(counts, dtype=float)
    fids = np.asarray(fidelities, dtype=float)
    if counts_arr.shape != fids.shape:
        raise InputValidationError("counts and fidelities differ in length", field="fidelities")
    if np.unique(counts_arr).size < 2:
        raise InputValidationError("need at least two distinct gate counts", field="counts")
    errors = 1.0 - fids
    fit = stats.linregress(counts_arr, errors)
    std_error = float(fit.stderr) if np.isfinite(fit.stderr) else 0.0
    logger.info(f"Repeated-gate fit: {fit.slope:.4e} per gate (+/- {std_error:.1e})")
    return GateFit(
        gate_error=float(fit.slope),
        std_error=std_error,
        intercept=float(fit.intercept),
        counts=[int(c) for c in counts_arr],
        errors=[float(e) for e in errors],
    )


def sequence_fidelities(pulse: PulseProgram, modes: ModeSpec, pair: IonPair,
                        counts: Optional[Sequence[int]] = None,
                        noise: Optional[NoiseModel] = None, offset: float = 0.0,
                        n_max: Any = None,
                        settings: Optional[SimulationSettings] = None) -> pd.DataFrame:
    """Bell fidelity after each number of back-to-back gates in ``counts``."""
    cfg = _simulation_settings(settings)
    schedule = list(counts) if counts is not None else list(cfg.gate_counts)
    if not schedule or min(schedule) < 1:
        raise InputValidationError("gate counts must be >= 1", field="counts")
    rows = []
    for count in schedule:
        point = _scan_point(pulse, modes, pair, offset, int(count), noise, n_max, None, cfg)
        rows.append({'gate_count': int(count), 'fidelity': point.observables.fidelity})
    return pd.DataFrame(rows, columns=['gate_count', 'fidelity'])


def _swept_noise(base: NoiseModel, parameter: str, value: float, num_modes: int) -> NoiseModel:
    resolved = base.resolved(num_modes)
    if parameter == 'motional_dephasing_T2':
        return resolved.model_copy(update={'motional_dephasing_T2': [float(value)] * num_modes})
    # first mode is the center-of-mass mode, the others heat ten times slower
    rates = [float(value)] + [float(value) / 10.0] * (num_modes - 1)
    return resolved.model_copy(update={'heating_rates': rates})


def noise_sweep(pulse: PulseProgram, modes: ModeSpec, pair: IonPair, offsets: Sequence[float],
                parameter: str, values: Sequence[float], base: Optional[NoiseModel] = None,
                repeats: int = 1, n_max: Any = None,
                settings: Optional[SimulationSettings] = None) -> Dict[float, ScanResult]:
    """One detuning scan per value of a noise parameter."""
    if parameter not in SWEEP_PARAMETERS:
        raise InputValidationError(f"must be one of {SWEEP_PARAMETERS}, got {parameter!r}",
                                   field="parameter")
    if parameter == 'motional_dephasing_T2' and any(not (v > 0) for v in values):
        raise InputValidationError("T2 values must be > 0", field="values")
    if parameter == 'heating_rate' and any(v < 0 for v in values):
        raise InputValidationError("heating rates must be >= 0", field="values")
    reference = base if base is not None else NoiseModel.noiseless(modes.num_modes)
    results: Dict[float, ScanResult] = {}
    for value in values:
        noise = _swept_noise(reference, parameter, value, modes.num_modes)
        results[float(value)] = detuning_scan(pulse, modes, pair, offsets, repeats, noise, n_max,
                                              settings=settings)
    logger.info(f"Noise sweep over {parameter}: {len(results)} values")
    return results


def sweep_dataframe(sweep: Dict[float, ScanResult], parameter: str) -> pd.DataFrame:
    frames = []
    for value, result in sweep.items():
        frame = result.to_dataframe()
        frame.insert(0, parameter, value)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()


def first_order_deficit(diag: GateDiagnostics) -> float:
    """Leading-order 1 - F at zero temperature: E_alpha + E_Theta."""
    return diag.err_alpha + diag.err_theta
