"""
Fock-Truncated Master-Equation Propagator
Exact per-segment propagation of the two target spins plus every motional mode
under a piecewise-constant spin-dependent force, with heating, motional
dephasing and carrier dephasing.

The spin register is kept in the sigma_x eigenbasis, where the force is
diagonal: each spin block rho_{s,s'} evolves as
    d/dt rho_{s,s'} = -i (H_s rho_{s,s'} - rho_{s,s'} H_{s'}) + D[rho_{s,s'}]
with H_s = sum_k mu_k n_k + g_{s,k} (a_k + a_k^dagger) in the frame co-rotating
with the drive phase of each mode.
"""
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from scipy.sparse.linalg import expm_multiply

from ..core.config_manager import SimulationSettings, get_config_manager
from ..core.exceptions import InputValidationError, NumericalError, TruncationError
from ..core.mode_model import ModeSpec
from ..core.pulse import PulseProgram
from ..kernel.gate_kernel import IonPair

# sigma_x eigenvalues of the two target spins, index a = 2 * bit1 + bit2
SPIN_CONFIGS: Tuple[Tuple[int, int], ...] = ((1, 1), (1, -1), (-1, 1), (-1, -1))

_HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)
X_TO_Z = np.kron(_HADAMARD, _HADAMARD)


class NoiseModel(BaseModel):
    """Per-mode heating and dephasing, carrier dephasing and initial temperature."""
    model_config = ConfigDict(frozen=True)

    heating_rates: List[float] = Field(default_factory=list)  # quanta/s
    motional_dephasing_T2: List[float] = Field(default_factory=list)  # s, inf = none
    carrier_T2: float = math.inf  # s
    initial_nbar: List[float] = Field(default_factory=list)

    @field_validator("motional_dephasing_T2", mode="before")
    @classmethod
    def _null_is_infinite(cls, value: Any) -> Any:
        if isinstance(value, list):
            return [math.inf if v is None else v for v in value]
        return value

    @field_validator("carrier_T2", mode="before")
    @classmethod
    def _null_carrier(cls, value: Any) -> Any:
        return math.inf if value is None else value

    @model_validator(mode="after")
    def _check(self) -> 'NoiseModel':
        if any(r < 0 for r in self.heating_rates):
            raise ValueError("heating_rates must be >= 0")
        if any(t <= 0 for t in self.motional_dephasing_T2) or self.carrier_T2 <= 0:
            raise ValueError("T2 values must be > 0 (or infinite)")
        if any(n < 0 for n in self.initial_nbar):
            raise ValueError("initial_nbar must be >= 0")
        return self

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'NoiseModel':
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            first = e.errors()[0]
            location = ".".join(str(p) for p in first.get("loc", ())) or "noise"
            raise InputValidationError(first.get("msg", str(e)), field=location) from e

    def to_dict(self) -> Dict[str, Any]:
        def finite(v: float) -> Optional[float]:
            return None if math.isinf(v) else v
        return {
            'heating_rates': list(self.heating_rates),
            'motional_dephasing_T2': [finite(v) for v in self.motional_dephasing_T2],
            'carrier_T2': finite(self.carrier_T2),
            'initial_nbar': list(self.initial_nbar)
        }

    @classmethod
    def noiseless(cls, num_modes: int, nbar: float = 0.0) -> 'NoiseModel':
        return cls(
            heating_rates=[0.0] * num_modes,
            motional_dephasing_T2=[math.inf] * num_modes,
            initial_nbar=[nbar] * num_modes,
        )

    @classmethod
    def trapped_ion_typical(cls, num_modes: int) -> 'NoiseModel':
        """10 q/s on the highest (COM) mode, 1 q/s elsewhere, 3 ms motional and 330 ms carrier T2."""
        rates = [10.0] + [1.0] * (num_modes - 1)
        return cls(
            heating_rates=rates,
            motional_dephasing_T2=[3e-3] * num_modes,
            carrier_T2=0.33,
            initial_nbar=[0.05] * num_modes,
        )

    def resolved(self, num_modes: int) -> 'NoiseModel':
        """Broadcast empty or single-entry lists to one entry per mode."""
        def fill(values: List[float], default: float, name: str) -> List[float]:
            if not values:
                return [default] * num_modes
            if len(values) == 1:
                return values * num_modes
            if len(values) != num_modes:
                raise InputValidationError(f"expected {num_modes} entries, got {len(values)}", field=name)
            return list(values)
        return NoiseModel(
            heating_rates=fill(self.heating_rates, 0.0, "heating_rates"),
            motional_dephasing_T2=fill(self.motional_dephasing_T2, math.inf, "motional_dephasing_T2"),
            carrier_T2=self.carrier_T2,
            initial_nbar=fill(self.initial_nbar, 0.0, "initial_nbar"),
        )


@dataclass
class SpinObservables:
    """Two-spin readout derived from a density matrix in the computational basis."""
    rho: np.ndarray  # (4, 4) in |00>, |01>, |10>, |11>
    p00: float
    p11: float
    p01_10: float
    contrast: float
    fidelity: float
    min_eigenvalue: float

    def as_tuple(self) -> Tuple[float, float, float, float, float]:
        return (self.p00, self.p11, self.p01_10, self.contrast, self.fidelity)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'p00': self.p00,
            'p11': self.p11,
            'p01_10': self.p01_10,
            'contrast': self.contrast,
            'fidelity': self.fidelity,
            'min_eigenvalue': self.min_eigenvalue
        }


def spin_observables(rho_x: np.ndarray) -> SpinObservables:
    """Populations, parity contrast and Bell fidelity from a sigma_x-basis density matrix."""
    rho = X_TO_Z @ rho_x @ X_TO_Z.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    populations = np.real(np.diag(rho))
    coherence = abs(rho[0, 3])
    p00, p11 = float(populations[0]), float(populations[3])
    return SpinObservables(
        rho=rho,
        p00=p00,
        p11=p11,
        p01_10=float(populations[1] + populations[2]),
        contrast=float(2.0 * coherence),
        fidelity=float(0.5 * (p00 + p11) + coherence),
        min_eigenvalue=float(np.min(np.linalg.eigvalsh(rho))),
    )


@dataclass
class LindbladResult:
    """Final spin state and motional diagnostics of one propagation."""
    observables: SpinObservables
    trace_error: float
    nbar: List[float]
    top_population: List[float]
    path: str
    num_segments: int = 0
    extras: Dict[str, float] = field(default_factory=dict)

    @property
    def rho(self) -> np.ndarray:
        return self.observables.rho

    def to_dict(self) -> Dict[str, Any]:
        payload = self.observables.to_dict()
        payload.update({
            'trace_error': self.trace_error,
            'nbar': list(self.nbar),
            'top_population': list(self.top_population),
            'path': self.path,
            'num_segments': self.num_segments
        })
        return payload


def thermal_state(nbar: float, dim: int) -> np.ndarray:
    """Truncated, renormalized thermal density matrix."""
    levels = np.arange(dim)
    if nbar == 0:
        weights = (levels == 0).astype(float)
    else:
        weights = (nbar / (nbar + 1.0)) ** levels / (nbar + 1.0)
    return np.diag(weights / weights.sum()).astype(complex)


class ModeOperators:
    """Row-major superoperator pieces for one truncated mode."""

    def __init__(self, dim: int, heating_rate: float, dephasing_T2: float):
        self.dim = dim
        lower = sp.diags(np.sqrt(np.arange(1, dim)), 1, format="csr", dtype=complex)
        number = sp.diags(np.arange(dim, dtype=float), 0, format="csr", dtype=complex)
        position = lower + lower.T
        eye = sp.identity(dim, format="csr", dtype=complex)

        self.number = number.toarray().real.diagonal()
        self.number_diff = sp.kron(number, eye) - sp.kron(eye, number)
        self.force_left = sp.kron(position, eye, format="csr")
        self.force_right = sp.kron(eye, position.T, format="csr")

        collapse = []
        if heating_rate > 0:
            collapse.append(math.sqrt(heating_rate) * lower)
            collapse.append(math.sqrt(heating_rate) * lower.T)
        if math.isfinite(dephasing_T2):
            collapse.append(math.sqrt(2.0 / dephasing_T2) * number)
        dissipator = sp.csr_matrix((dim * dim, dim * dim), dtype=complex)
        for op in collapse:
            cdc = (op.conj().T @ op).tocsr()
            dissipator = dissipator + sp.kron(op, op.conj()) - 0.5 * sp.kron(cdc, eye) - 0.5 * sp.kron(eye, cdc.T)
        self.dissipator = dissipator.tocsr()

    def liouvillian(self, mu: float, g_left: float, g_right: float) -> sp.csr_matrix:
        return (
            -1j * mu * self.number_diff
            - 1j * g_left * self.force_left
            + 1j * g_right * self.force_right
            + self.dissipator
        ).tocsr()


def _fock_dims(n_max: Union[int, Sequence[int], None], num_modes: int,
               cfg: SimulationSettings) -> List[int]:
    if n_max is None:
        values = [cfg.n_max] * num_modes
    elif isinstance(n_max, int):
        values = [n_max] * num_modes
    else:
        values = list(n_max)
        if len(values) != num_modes:
            raise InputValidationError(f"expected {num_modes} truncations, got {len(values)}", field="n_max")
    if any(v < 2 for v in values):
        raise InputValidationError("Fock truncation must be >= 2", field="n_max")
    return [v + 1 for v in values]


def _spin_sums(modes: ModeSpec, pair: IonPair) -> np.ndarray:
    """x[a, k] = sum over the pair of b_j^k s_j for spin configuration a."""
    signs = np.array(SPIN_CONFIGS, dtype=float)
    couplings = modes.coupling[[pair.j1, pair.j2], :]
    return signs @ couplings


def _check_finite(values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        raise NumericalError("propagation produced non-finite values")


class LindbladPropagator:
    """Propagates the spin-blocked state of a pulse through every segment."""

    def __init__(self, modes: ModeSpec, pair: IonPair, noise: NoiseModel,
                 n_max: Union[int, Sequence[int], None] = None,
                 settings: Optional[SimulationSettings] = None):
        pair.validate(modes)
        self.settings = settings if settings is not None else get_config_manager().get_simulation_settings()
        self.modes = modes
        self.pair = pair
        self.noise = noise.resolved(modes.num_modes)
        self.dims = _fock_dims(n_max, modes.num_modes, self.settings)
        self.operators = [
            ModeOperators(dim, rate, t2)
            for dim, rate, t2 in zip(self.dims, self.noise.heating_rates, self.noise.motional_dephasing_T2)
        ]
        self.spin_sums = _spin_sums(modes, pair)

    def run(self, pulse: PulseProgram) -> LindbladResult:
        if math.isfinite(self.noise.carrier_T2):
            return self._run_tensor(pulse)
        return self._run_factorized(pulse)

    def _segments(self, pulse: PulseProgram):
        return zip(pulse.durations, pulse.detunings, pulse.amplitudes)

    def _run_factorized(self, pulse: PulseProgram) -> LindbladResult:
        tolerance = self.settings.trace_tolerance
        num_configs = len(SPIN_CONFIGS)
        block_traces = np.ones((num_configs, num_configs), dtype=complex)
        nbar = np.zeros(self.modes.num_modes)
        top = np.zeros(self.modes.num_modes)
        trace_error = 0.0

        for k, ops in enumerate(self.operators):
            rho0 = thermal_state(self.noise.initial_nbar[k], ops.dim).ravel()
            x = self.spin_sums[:, k]
            keys: Dict[Tuple[float, float], np.ndarray] = {}
            key_of: Dict[Tuple[int, int], Tuple[float, float]] = {}
            for a in range(num_configs):
                for b in range(a, num_configs):
                    key = (round(float(x[a]), 14), round(float(x[b]), 14))
                    key_of[(a, b)] = key
                    keys.setdefault(key, rho0.copy())
            diagonal = {key_of[(a, a)] for a in range(num_configs)}

            for duration, detuning, amplitude in self._segments(pulse):
                mu = self.modes.mode_freqs[k] - detuning
                g = 0.5 * amplitude * self.modes.lamb_dicke[k]
                for key in keys:
                    generator = ops.liouvillian(mu, g * key[0], g * key[1])
                    keys[key] = expm_multiply(generator * duration, keys[key])
                for key in diagonal:
                    trace = np.trace(keys[key].reshape(ops.dim, ops.dim))
                    trace_error = max(trace_error, abs(trace - 1.0))
                if trace_error > tolerance:
                    raise NumericalError(f"trace drifted by {trace_error:.3e} during propagation")

            for (a, b), key in key_of.items():
                value = np.trace(keys[key].reshape(ops.dim, ops.dim))
                block_traces[a, b] *= value
                if a != b:
                    block_traces[b, a] *= np.conj(value)
            for a in range(num_configs):
                block = keys[key_of[(a, a)]].reshape(ops.dim, ops.dim)
                _check_finite(block)
                populations = np.real(np.diag(block))
                nbar[k] += 0.25 * float(populations @ ops.number)
                top[k] += 0.25 * float(populations[-1])

        rho_x = 0.25 * block_traces
        return self._finish(rho_x, trace_error, nbar, top, "factorized", pulse.num_segments)

    def _run_tensor(self, pulse: PulseProgram) -> LindbladResult:
        cfg = self.settings
        num_modes = self.modes.num_modes
        num_configs = len(SPIN_CONFIGS)
        entries = num_configs ** 2 * int(np.prod(self.dims)) ** 2
        if entries > cfg.max_tensor_entries:
            raise InputValidationError(
                f"joint state needs {entries:.3e} entries (limit {cfg.max_tensor_entries:.3e}); "
                "lower n_max or drop carrier dephasing",
                field="n_max",
            )
        joint = reduce(np.kron, [thermal_state(n, d) for n, d in zip(self.noise.initial_nbar, self.dims)])
        shape = tuple(self.dims) + tuple(self.dims)
        blocks = [[0.25 * joint.reshape(shape) for _ in range(num_configs)] for _ in range(num_configs)]
        flips = [[a ^ 2 for a in range(num_configs)], [a ^ 1 for a in range(num_configs)]]

        trace_error = 0.0
        for duration, detuning, amplitude in self._segments(pulse):
            for k, ops in enumerate(self.operators):
                mu = self.modes.mode_freqs[k] - detuning
                g = 0.5 * amplitude * self.modes.lamb_dicke[k]
                x = self.spin_sums[:, k]
                for a in range(num_configs):
                    for b in range(num_configs):
                        generator = ops.liouvillian(mu, g * x[a], g * x[b])
                        blocks[a][b] = self._apply_mode(blocks[a][b], generator * duration, k, num_modes)
            # carrier dephasing on each target ion, applied once per segment
            p = 0.5 * (1.0 - math.exp(-duration / self.noise.carrier_T2))
            for flip in flips:
                blocks = [
                    [(1.0 - p) * blocks[a][b] + p * blocks[flip[a]][flip[b]] for b in range(num_configs)]
                    for a in range(num_configs)
                ]
            total = sum(self._trace(blocks[a][a]) for a in range(num_configs))
            trace_error = max(trace_error, abs(total - 1.0))
            if trace_error > cfg.trace_tolerance:
                raise NumericalError(f"trace drifted by {trace_error:.3e} during propagation")

        rho_x = np.array([[self._trace(blocks[a][b]) for b in range(num_configs)] for a in range(num_configs)])
        nbar = np.zeros(num_modes)
        top = np.zeros(num_modes)
        for a in range(num_configs):
            _check_finite(blocks[a][a])
            for k, ops in enumerate(self.operators):
                populations = np.real(np.diag(self._reduced(blocks[a][a], k, num_modes)))
                nbar[k] += float(populations @ ops.number)
                top[k] += float(populations[-1])
        return self._finish(rho_x, trace_error, nbar, top, "tensor", pulse.num_segments)

    def _apply_mode(self, block: np.ndarray, generator: sp.csr_matrix, k: int, num_modes: int) -> np.ndarray:
        moved = np.moveaxis(block, (k, num_modes + k), (0, 1))
        front = moved.shape
        flat = moved.reshape(front[0] * front[1], -1)
        evolved = expm_multiply(generator, flat)
        return np.moveaxis(np.asarray(evolved).reshape(front), (0, 1), (k, num_modes + k))

    def _trace(self, block: np.ndarray) -> complex:
        size = int(np.prod(self.dims))
        return complex(np.trace(block.reshape(size, size)))

    def _reduced(self, block: np.ndarray, k: int, num_modes: int) -> np.ndarray:
        moved = np.moveaxis(block, (k, num_modes + k), (0, 1))
        dim = self.dims[k]
        rest = int(np.prod(self.dims)) // dim
        return np.einsum("mnjj->mn", moved.reshape(dim, dim, rest, rest))

    def _finish(self, rho_x: np.ndarray, trace_error: float, nbar: np.ndarray, top: np.ndarray,
                path: str, num_segments: int) -> LindbladResult:
        limit = self.settings.top_level_limit
        for k, population in enumerate(top):
            if population > limit:
                raise TruncationError(k, float(population), limit)
        observables = spin_observables(rho_x)
        if observables.min_eigenvalue < -1e-9:
            logger.warning(f"Spin density matrix has eigenvalue {observables.min_eigenvalue:.3e}")
        result = LindbladResult(
            observables=observables,
            trace_error=float(trace_error),
            nbar=[float(v) for v in nbar],
            top_population=[float(v) for v in top],
            path=path,
            num_segments=num_segments,
        )
        logger.debug(
            f"Lindblad ({path}) finished: fidelity {observables.fidelity:.6f}, "
            f"trace error {trace_error:.2e}"
        )
        return result


def lindblad_sim(pulse: PulseProgram, modes: ModeSpec, pair: IonPair,
                 noise: Optional[NoiseModel] = None,
                 n_max: Union[int, Sequence[int], None] = None,
                 settings: Optional[SimulationSettings] = None) -> LindbladResult:
    """Propagate |00> (x) thermal motion through ``pulse`` and return the spin readout."""
    model = noise if noise is not None else NoiseModel.noiseless(modes.num_modes)
    return LindbladPropagator(modes, pair, model, n_max, settings).run(pulse)
