"""
Job Configuration
Schema of a batch job file: which stage to run, which artifacts it reads and
where it writes, plus one parameter block per stage. Every block is validated
before any computation starts. Frequencies in files are in Hz.
"""
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..core.exceptions import InputValidationError

COMMANDS = ('modes', 'design', 'arobust', 'diagnose', 'scan', 'ff', 'simulate')


def parse_offsets(text: str) -> List[float]:
    """Offsets in Hz from ``start:step:stop`` (inclusive) or a comma list."""
    text = text.strip()
    if not text:
        raise InputValidationError("empty offset specification", field="offsets")
    separator = ":" if ":" in text else ","
    try:
        parts = [float(p) for p in text.split(separator) if p.strip()]
    except ValueError as e:
        raise InputValidationError(f"cannot parse {text!r}: {e}", field="offsets") from e
    if separator == ",":
        return parts
    if len(parts) != 3:
        raise InputValidationError("expected start:step:stop", field="offsets")
    start, step, stop = parts
    if step == 0 or (stop - start) * step < 0:
        raise InputValidationError("step must be nonzero and point from start to stop", field="offsets")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [float(v) for v in start + step * np.arange(count)]


def parse_counts(text: str) -> List[int]:
    try:
        counts = [int(p) for p in text.split(",") if p.strip()]
    except ValueError as e:
        raise InputValidationError(f"cannot parse {text!r}: {e}", field="counts") from e
    if not counts or min(counts) < 1:
        raise InputValidationError("gate counts must be >= 1", field="counts")
    return counts


class ModesParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    kind: Literal['two_ion', 'chain'] = 'two_ion'
    com_freq_hz: Optional[float] = Field(default=None, gt=0)
    tilt_freq_hz: Optional[float] = Field(default=None, gt=0)
    eta: float = Field(default=0.1, gt=0)
    num_ions: int = Field(default=2, ge=2)
    axial_freq_hz: Optional[float] = Field(default=None, gt=0)
    radial_freq_hz: Optional[float] = Field(default=None, gt=0)
    drift_ratios: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check(self) -> 'ModesParams':
        if self.kind == 'two_ion' and (self.com_freq_hz is None or self.tilt_freq_hz is None):
            raise ValueError("two_ion modes need com_freq_hz and tilt_freq_hz")
        if self.kind == 'chain' and (self.axial_freq_hz is None or self.radial_freq_hz is None):
            raise ValueError("chain modes need axial_freq_hz and radial_freq_hz")
        return self


class DesignParams(BaseModel):
    """``optimizer`` uses the Hz file form of the optimizer configuration."""
    model_config = ConfigDict(frozen=True, extra='forbid')

    optimizer: Dict[str, Any]
    workers: Optional[int] = Field(default=None, ge=1)


class ArobustParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    method: Literal['mirror', 'am', 'nth'] = 'mirror'
    order: int = Field(default=1, ge=1)
    ratios: Optional[List[float]] = None


class DiagnoseParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    max_order: int = Field(default=1, ge=1)
    target_angle: Optional[float] = None
    trajectory: int = Field(default=0, ge=0)


class ScanParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    offsets_hz: List[float] = Field(min_length=1)
    repeats: int = Field(default=1, ge=1)
    noise: Optional[Dict[str, Any]] = None
    n_max: Optional[int] = Field(default=None, ge=2)

    @field_validator("offsets_hz", mode="before")
    @classmethod
    def _range_string(cls, value: Any) -> Any:
        if isinstance(value, str):
            return parse_offsets(value)
        return value


class FFParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    f_min_hz: Optional[float] = Field(default=None, gt=0)
    f_max_hz: Optional[float] = Field(default=None, gt=0)
    num_points: Optional[int] = Field(default=None, ge=2)
    spectrum: Optional[Dict[str, Any]] = None
    slope_below_hz: float = Field(default=1.0e3, gt=0)


class SimulateParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    noise: Optional[Dict[str, Any]] = None
    typical_noise: bool = False
    counts: Optional[List[int]] = None
    offset_hz: float = 0.0
    n_max: Optional[int] = Field(default=None, ge=2)

    @field_validator("counts", mode="before")
    @classmethod
    def _count_string(cls, value: Any) -> Any:
        if isinstance(value, str):
            return parse_counts(value)
        return value


PARAM_BLOCKS = {
    'modes': ModesParams,
    'design': DesignParams,
    'arobust': ArobustParams,
    'diagnose': DiagnoseParams,
    'scan': ScanParams,
    'ff': FFParams,
    'simulate': SimulateParams,
}


class JobConfig(BaseModel):
    """One pipeline stage with its inputs, outputs and parameters."""
    model_config = ConfigDict(frozen=True, extra='forbid')

    command: Literal['modes', 'design', 'arobust', 'diagnose', 'scan', 'ff', 'simulate']
    output_dir: str = "results"
    name: Optional[str] = None
    modes_file: Optional[str] = None
    pulse_file: Optional[str] = None
    seed_pulses: List[str] = Field(default_factory=list)
    pair: Tuple[int, int] = (0, 1)
    params: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check(self) -> 'JobConfig':
        needs_modes = self.command != 'modes'
        needs_pulse = self.command in ('diagnose', 'scan', 'ff', 'simulate') or (
            self.command == 'arobust' and not self.seed_pulses
        )
        if needs_modes and not self.modes_file:
            raise ValueError(f"{self.command} needs modes_file")
        if needs_pulse and not self.pulse_file:
            raise ValueError(f"{self.command} needs pulse_file")
        if self.pair[0] == self.pair[1]:
            raise ValueError("pair must name two distinct ions")
        return self

    @property
    def stem(self) -> str:
        return self.name or self.command

    def block(self) -> BaseModel:
        """Typed parameter block for this command."""
        model = PARAM_BLOCKS[self.command]
        try:
            return model.model_validate(self.params)
        except ValidationError as e:
            first = e.errors()[0]
            location = ".".join(str(p) for p in first.get("loc", ()))
            raise InputValidationError(first.get("msg", str(e)),
                                       field=f"params.{location}" if location else "params") from e

    def input_files(self) -> List[str]:
        files = [f for f in (self.modes_file, self.pulse_file) if f]
        return files + list(self.seed_pulses)

    def check_files(self) -> None:
        for path in self.input_files():
            if not Path(path).is_file():
                raise InputValidationError(f"file not found: {path}", field="input")

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'JobConfig':
        try:
            job = cls.model_validate(data)
        except ValidationError as e:
            first = e.errors()[0]
            location = ".".join(str(p) for p in first.get("loc", ())) or "job"
            raise InputValidationError(first.get("msg", str(e)), field=location) from e
        job.block()
        return job


def load_job(path: Union[str, Path]) -> JobConfig:
    path = Path(path)
    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise InputValidationError(f"file not found: {path}", field="job") from e
    except json.JSONDecodeError as e:
        raise InputValidationError(f"invalid JSON in {path}: {e}", field="job") from e
    if not isinstance(data, dict):
        raise InputValidationError("job file must hold a JSON object", field="job")
    return JobConfig.from_dict(data)
