"""
Motional Mode Model
Radial normal modes of a linear ion chain: frequencies, ion-mode couplings,
Lamb-Dicke parameters and drift ratios.
"""
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field, ValidationError, model_validator

from .exceptions import ConvergenceError, InputValidationError, StructuralError
from .units import TWO_PI, hz_list_to_rad, rad_list_to_hz

ORTHONORMAL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ModeSpec:
    """Immutable description of the motional modes that mediate the gate.

    Arrays are indexed ``coupling[ion, mode]``. Modes are ordered by
    descending frequency, so mode 0 is the radial center-of-mass mode.
    """
    num_ions: int
    mode_freqs: np.ndarray  # rad/s
    coupling: np.ndarray  # b_j^k, ion x mode
    lamb_dicke: np.ndarray
    drift_ratios: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        freqs = np.array(self.mode_freqs, dtype=float).reshape(-1)
        coupling = np.array(self.coupling, dtype=float)
        eta = np.array(self.lamb_dicke, dtype=float).reshape(-1)
        if self.drift_ratios is None:
            ratios = np.ones_like(freqs)
        else:
            ratios = np.array(self.drift_ratios, dtype=float).reshape(-1)

        if int(self.num_ions) < 1:
            raise InputValidationError("must be a positive integer", field="num_ions")
        if coupling.ndim != 2 or coupling.shape[0] != int(self.num_ions):
            raise InputValidationError(
                f"expected {self.num_ions} rows (one per ion), got shape {coupling.shape}",
                field="coupling",
            )
        num_modes = freqs.size
        for name, values in (("lamb_dicke", eta), ("drift_ratios", ratios)):
            if values.size != num_modes:
                raise InputValidationError(
                    f"length {values.size} does not match {num_modes} modes", field=name
                )
        if coupling.shape[1] != num_modes:
            raise InputValidationError(
                f"{coupling.shape[1]} columns for {num_modes} modes", field="coupling"
            )
        if num_modes == 0:
            raise InputValidationError("at least one mode is required", field="mode_freqs")
        if not np.all(np.isfinite(freqs)) or np.any(freqs <= 0):
            raise InputValidationError("all mode frequencies must be > 0", field="mode_freqs")
        if not np.all(np.isfinite(eta)) or np.any(eta < 0):
            raise InputValidationError("must be >= 0", field="lamb_dicke")
        if not np.all(np.isfinite(ratios)):
            raise InputValidationError("must be finite", field="drift_ratios")

        gram = coupling.T @ coupling
        deviation = float(np.max(np.abs(gram - np.eye(num_modes))))
        if deviation > ORTHONORMAL_TOL:
            raise InputValidationError(
                f"columns are not orthonormal (max deviation {deviation:.3e})",
                field="coupling",
            )

        for name, values in (("mode_freqs", freqs), ("coupling", coupling),
                             ("lamb_dicke", eta), ("drift_ratios", ratios)):
            values.setflags(write=False)
            object.__setattr__(self, name, values)
        object.__setattr__(self, "num_ions", int(self.num_ions))

    @property
    def num_modes(self) -> int:
        return int(self.mode_freqs.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ModeSpec):
            return NotImplemented
        return (
            self.num_ions == other.num_ions
            and np.allclose(self.mode_freqs, other.mode_freqs, rtol=1e-14, atol=0.0)
            and np.array_equal(self.coupling, other.coupling)
            and np.array_equal(self.lamb_dicke, other.lamb_dicke)
            and np.array_equal(self.drift_ratios, other.drift_ratios)
        )

    def __hash__(self) -> int:
        return hash((self.num_ions, self.num_modes))

    def with_frequency_shift(self, shifts: Union[float, Sequence[float]]) -> 'ModeSpec':
        """Copy with omega_k -> omega_k + shift_k (rad/s)."""
        delta = np.broadcast_to(np.asarray(shifts, dtype=float), self.mode_freqs.shape)
        return ModeSpec(
            num_ions=self.num_ions,
            mode_freqs=self.mode_freqs + delta,
            coupling=self.coupling,
            lamb_dicke=self.lamb_dicke,
            drift_ratios=self.drift_ratios,
        )

    def with_drift_ratios(self, ratios: Sequence[float]) -> 'ModeSpec':
        return ModeSpec(
            num_ions=self.num_ions,
            mode_freqs=self.mode_freqs,
            coupling=self.coupling,
            lamb_dicke=self.lamb_dicke,
            drift_ratios=np.asarray(ratios, dtype=float),
        )

    def to_dict(self) -> Dict[str, Any]:
        """File representation (frequencies in Hz)."""
        return {
            'num_ions': self.num_ions,
            'mode_freqs_hz': rad_list_to_hz(self.mode_freqs),
            'coupling': [[float(v) for v in row] for row in self.coupling],
            'lamb_dicke': [float(v) for v in self.lamb_dicke],
            'drift_ratios': [float(v) for v in self.drift_ratios]
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ModeSpec':
        try:
            parsed = ModeSpecFile.model_validate(data)
        except ValidationError as e:
            first = e.errors()[0]
            location = ".".join(str(p) for p in first.get("loc", ())) or "mode_spec"
            raise InputValidationError(first.get("msg", str(e)), field=location) from e
        return parsed.to_mode_spec()


class ModeSpecFile(BaseModel):
    """Schema of a mode-spec JSON file."""

    num_ions: int = Field(gt=0)
    mode_freqs_hz: List[float] = Field(min_length=1)
    coupling: List[List[float]]
    lamb_dicke: List[float]
    drift_ratios: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check_shapes(self) -> 'ModeSpecFile':
        if len(self.coupling) != self.num_ions:
            raise ValueError(f"coupling has {len(self.coupling)} rows for {self.num_ions} ions")
        widths = {len(row) for row in self.coupling}
        if widths != {len(self.mode_freqs_hz)}:
            raise ValueError("every coupling row needs one entry per mode")
        return self

    def to_mode_spec(self) -> ModeSpec:
        ratios = self.drift_ratios if self.drift_ratios is not None else [1.0] * len(self.mode_freqs_hz)
        return ModeSpec(
            num_ions=self.num_ions,
            mode_freqs=hz_list_to_rad(self.mode_freqs_hz),
            coupling=np.asarray(self.coupling, dtype=float),
            lamb_dicke=np.asarray(self.lamb_dicke, dtype=float),
            drift_ratios=np.asarray(ratios, dtype=float),
        )


def two_ion_modes(omega_com: float, omega_tilt: float, eta: float) -> ModeSpec:
    """Radial modes of a two-ion crystal: center-of-mass above tilt."""
    if not (omega_com > omega_tilt > 0):
        raise InputValidationError(
            f"need omega_com > omega_tilt > 0, got {omega_com:.6e} and {omega_tilt:.6e}",
            field="mode_freqs",
        )
    h = 1.0 / math.sqrt(2.0)
    return ModeSpec(
        num_ions=2,
        mode_freqs=np.array([omega_com, omega_tilt], dtype=float),
        coupling=np.array([[h, h], [h, -h]]),
        lamb_dicke=np.array([eta, eta], dtype=float),
        drift_ratios=np.ones(2),
    )


def _chain_force(u: np.ndarray) -> np.ndarray:
    diff = u[:, None] - u[None, :]
    np.fill_diagonal(diff, np.inf)
    return u - np.sum(np.sign(diff) / diff ** 2, axis=1)


def _chain_jacobian(u: np.ndarray) -> np.ndarray:
    diff = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(diff, np.inf)
    inv_cube = 1.0 / diff ** 3
    jac = -2.0 * inv_cube
    np.fill_diagonal(jac, 1.0 + 2.0 * np.sum(inv_cube, axis=1))
    return jac


def chain_equilibrium(num_ions: int, max_iters: int = 200, tol: float = 1e-14) -> np.ndarray:
    """Equilibrium positions in units of (e^2 / 4 pi eps0 m omega_z^2)^(1/3).

    Damped Newton iteration on the axial force balance, started from a
    uniformly stretched chain.
    """
    if num_ions < 1:
        raise InputValidationError("must be >= 1", field="num_ions")
    if num_ions == 1:
        return np.zeros(1)

    u = np.linspace(-1.0, 1.0, num_ions) * (num_ions ** 0.56)
    residual = _chain_force(u)
    for iteration in range(max_iters):
        norm = float(np.max(np.abs(residual)))
        if norm < tol:
            logger.debug(f"Chain equilibrium converged in {iteration} Newton steps")
            return u
        step = np.linalg.solve(_chain_jacobian(u), -residual)
        damping = 1.0
        accepted = False
        while damping > 1e-6 and not accepted:
            trial = u + damping * step
            if np.all(np.diff(trial) > 0):
                trial_residual = _chain_force(trial)
                accepted = bool(np.max(np.abs(trial_residual)) < norm)
            if not accepted:
                damping *= 0.5
        if not accepted:
            # line search stalled at the rounding floor
            break
        u = trial
        residual = trial_residual

    if float(np.max(np.abs(residual))) < tol * 1e3:
        return u
    raise ConvergenceError(
        f"chain equilibrium for {num_ions} ions did not converge in {max_iters} iterations "
        f"(residual {float(np.max(np.abs(residual))):.3e})"
    )


def radial_hessian(positions: np.ndarray, radial_ratio: float) -> np.ndarray:
    """Radial Hessian in units of m omega_z^2 for radial/axial ratio ``radial_ratio``."""
    diff = np.abs(positions[:, None] - positions[None, :])
    np.fill_diagonal(diff, np.inf)
    inv_cube = 1.0 / diff ** 3
    hessian = inv_cube.copy()
    np.fill_diagonal(hessian, radial_ratio ** 2 - np.sum(inv_cube, axis=1))
    return hessian


def _fix_column_signs(vectors: np.ndarray) -> np.ndarray:
    fixed = vectors.copy()
    for k in range(fixed.shape[1]):
        nonzero = np.flatnonzero(np.abs(fixed[:, k]) > 1e-12)
        if nonzero.size and fixed[nonzero[0], k] < 0:
            fixed[:, k] = -fixed[:, k]
    return fixed


def chain_modes(num_ions: int, axial_freq: float, radial_freq: float,
                eta_com: float) -> ModeSpec:
    """Radial modes of a harmonically confined Coulomb chain."""
    if num_ions < 2:
        raise InputValidationError("chain needs at least 2 ions", field="num_ions")
    if axial_freq <= 0 or radial_freq <= 0:
        raise InputValidationError("trap frequencies must be > 0", field="axial_freq")

    positions = chain_equilibrium(num_ions)
    hessian = radial_hessian(positions, radial_freq / axial_freq)
    eigenvalues, vectors = np.linalg.eigh(hessian)

    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = eigenvalues[order]
    vectors = _fix_column_signs(vectors[:, order])

    for k, value in enumerate(eigenvalues):
        if value <= 0:
            raise StructuralError(mode=k, eigenvalue=float(value))

    freqs = axial_freq * np.sqrt(eigenvalues)
    eta = eta_com * np.sqrt(freqs[0] / freqs)
    logger.info(
        f"Chain modes computed - {num_ions} ions, "
        f"{freqs[0] / TWO_PI / 1e6:.6f}..{freqs[-1] / TWO_PI / 1e6:.6f} MHz"
    )
    return ModeSpec(
        num_ions=num_ions,
        mode_freqs=freqs,
        coupling=vectors,
        lamb_dicke=eta,
        drift_ratios=np.ones(num_ions),
    )


def load_mode_spec(path: Union[str, Path]) -> ModeSpec:
    """Read and validate a mode-spec JSON file."""
    path = Path(path)
    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise InputValidationError(f"file not found: {path}", field="mode_spec") from e
    except json.JSONDecodeError as e:
        raise InputValidationError(f"invalid JSON in {path}: {e}", field="mode_spec") from e
    if isinstance(data, dict):
        data = {k: v for k, v in data.items() if k != "_meta"}
    return ModeSpec.from_dict(data)


def save_mode_spec(spec: ModeSpec, path: Union[str, Path],
                   meta: Optional[Dict[str, Any]] = None) -> None:
    """Write a mode spec as JSON (frequencies in Hz)."""
    payload = spec.to_dict()
    if meta:
        payload = {"_meta": meta, **payload}
    with open(path, 'w') as f:
        json.dump(payload, f, indent=2)
