"""
Pulse Programs
Piecewise-constant FM/AM drive programs and the transformations used to build
composite gates from them.
"""
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from .exceptions import InputValidationError
from .units import hz_to_rad, rad_to_hz


@dataclass(frozen=True)
class Segment:
    """One constant-parameter slice of a pulse."""
    duration: float  # seconds
    detuning: float  # rad/s, drive detuning from the carrier
    amplitude: float  # rad/s, carrier Rabi frequency

    def __post_init__(self) -> None:
        if not math.isfinite(self.duration) or self.duration <= 0:
            raise InputValidationError(f"must be > 0, got {self.duration}", field="duration")
        if not math.isfinite(self.detuning):
            raise InputValidationError("must be finite", field="detuning")
        if not math.isfinite(self.amplitude) or self.amplitude < 0:
            raise InputValidationError(f"must be >= 0, got {self.amplitude}", field="amplitude")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'duration_s': self.duration,
            'detuning_hz': rad_to_hz(self.detuning),
            'amplitude_hz': rad_to_hz(self.amplitude)
        }


@dataclass(frozen=True)
class DetuningOffset:
    """Uniform shift of every mode frequency (rad/s)."""
    epsilon: float = 0.0


@dataclass(frozen=True)
class PulseProgram:
    """Ordered segments plus a global amplitude scale."""
    segments: Tuple[Segment, ...]
    scale: float = 1.0

    def __post_init__(self) -> None:
        segments = tuple(self.segments)
        if not segments:
            raise InputValidationError("a pulse needs at least one segment", field="segments")
        if not math.isfinite(self.scale) or self.scale < 0:
            raise InputValidationError(f"must be >= 0, got {self.scale}", field="scale")
        object.__setattr__(self, "segments", segments)

    @property
    def num_segments(self) -> int:
        return len(self.segments)

    @cached_property
    def durations(self) -> np.ndarray:
        return np.array([s.duration for s in self.segments])

    @cached_property
    def detunings(self) -> np.ndarray:
        return np.array([s.detuning for s in self.segments])

    @cached_property
    def amplitudes(self) -> np.ndarray:
        """Effective per-segment Rabi frequencies (scale applied)."""
        return self.scale * np.array([s.amplitude for s in self.segments])

    @cached_property
    def starts(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.durations)[:-1]))

    @cached_property
    def total_duration(self) -> float:
        return float(np.sum(self.durations))

    @property
    def peak_amplitude(self) -> float:
        return float(np.max(self.amplitudes))

    def to_dict(self) -> Dict[str, Any]:
        """File representation (frequencies in Hz)."""
        return {
            'segments': [s.to_dict() for s in self.segments],
            'scale': self.scale
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'PulseProgram':
        try:
            parsed = PulseFile.model_validate(data)
        except ValidationError as e:
            first = e.errors()[0]
            location = ".".join(str(p) for p in first.get("loc", ())) or "pulse"
            raise InputValidationError(first.get("msg", str(e)), field=location) from e
        return parsed.to_pulse()


class SegmentFile(BaseModel):
    duration_s: float = Field(gt=0)
    detuning_hz: float
    amplitude_hz: float = Field(ge=0)


class PulseFile(BaseModel):
    """Schema of a pulse JSON file."""

    segments: List[SegmentFile] = Field(min_length=1)
    scale: float = Field(default=1.0, ge=0)

    def to_pulse(self) -> PulseProgram:
        return PulseProgram(
            segments=tuple(
                Segment(
                    duration=s.duration_s,
                    detuning=hz_to_rad(s.detuning_hz),
                    amplitude=hz_to_rad(s.amplitude_hz),
                )
                for s in self.segments
            ),
            scale=self.scale,
        )


def uniform_fm_pulse(detunings: Sequence[float], gate_time: float,
                     amplitude: float) -> PulseProgram:
    """Equal-duration FM program with a uniform Rabi frequency."""
    if len(detunings) == 0:
        raise InputValidationError("need at least one detuning", field="detunings")
    duration = gate_time / len(detunings)
    return PulseProgram(
        segments=tuple(Segment(duration, float(d), amplitude) for d in detunings)
    )


def integrated_phase(pulse: PulseProgram, mode_freq: float, t: float) -> float:
    """theta_k(t) = omega_k t - integral of delta, exact for piecewise-constant delta."""
    tau = pulse.total_duration
    if t < 0 or t > tau * (1 + 1e-15):
        raise InputValidationError(f"t={t} outside [0, {tau}]", field="t")
    mu = mode_freq - pulse.detunings
    elapsed = np.clip(t - pulse.starts, 0.0, pulse.durations)
    return float(np.sum(mu * elapsed))


def mirror_pulse(pulse: PulseProgram, omega1: float, omega2: float) -> PulseProgram:
    """Reflect every detuning about (omega1 + omega2) / 2."""
    axis = omega1 + omega2
    return PulseProgram(
        segments=tuple(
            Segment(s.duration, axis - s.detuning, s.amplitude) for s in pulse.segments
        ),
        scale=pulse.scale,
    )


def _folded_segments(pulse: PulseProgram) -> Tuple[Segment, ...]:
    if pulse.scale == 1.0:
        return pulse.segments
    return tuple(
        Segment(s.duration, s.detuning, pulse.scale * s.amplitude) for s in pulse.segments
    )


def concatenate(first: PulseProgram, second: PulseProgram) -> PulseProgram:
    """Play ``first`` then ``second``; each program's scale is folded into its amplitudes."""
    return PulseProgram(segments=_folded_segments(first) + _folded_segments(second))


def concatenate_all(pulses: Sequence[PulseProgram]) -> PulseProgram:
    if not pulses:
        raise InputValidationError("nothing to concatenate", field="pulses")
    segments: Tuple[Segment, ...] = ()
    for p in pulses:
        segments += _folded_segments(p)
    return PulseProgram(segments=segments)


def repeat_pulse(pulse: PulseProgram, count: int) -> PulseProgram:
    """``count`` back-to-back copies with continuous phase."""
    if count < 1:
        raise InputValidationError(f"must be >= 1, got {count}", field="repeats")
    if count == 1:
        return pulse
    return PulseProgram(segments=_folded_segments(pulse) * count)


def scale_amplitude(pulse: PulseProgram, beta: float) -> PulseProgram:
    if not math.isfinite(beta) or beta < 0:
        raise InputValidationError(f"must be >= 0, got {beta}", field="beta")
    return PulseProgram(segments=pulse.segments, scale=pulse.scale * beta)


def apply_offset(pulse: PulseProgram, offset: Union[DetuningOffset, float]) -> PulseProgram:
    """delta_i -> delta_i - epsilon, i.e. every omega_k -> omega_k + epsilon."""
    epsilon = offset.epsilon if isinstance(offset, DetuningOffset) else float(offset)
    if epsilon == 0.0:
        return pulse
    return PulseProgram(
        segments=tuple(
            Segment(s.duration, s.detuning - epsilon, s.amplitude) for s in pulse.segments
        ),
        scale=pulse.scale,
    )


def truncate_pulse(pulse: PulseProgram, t_end: float) -> PulseProgram:
    """Prefix of the program ending at ``t_end``."""
    tau = pulse.total_duration
    if not (0 < t_end <= tau * (1 + 1e-15)):
        raise InputValidationError(f"t_end={t_end} outside (0, {tau}]", field="t_end")
    kept: List[Segment] = []
    for start, s in zip(pulse.starts, pulse.segments):
        if start >= t_end:
            break
        remaining = t_end - start
        if remaining >= s.duration:
            kept.append(s)
        else:
            kept.append(Segment(remaining, s.detuning, s.amplitude))
    return PulseProgram(segments=tuple(kept), scale=pulse.scale)


def split_segments(pulse: PulseProgram, parts: int = 2) -> PulseProgram:
    """Split every segment into ``parts`` equal pieces (same physical pulse)."""
    if parts < 1:
        raise InputValidationError(f"must be >= 1, got {parts}", field="parts")
    segments = tuple(
        Segment(s.duration / parts, s.detuning, s.amplitude)
        for s in pulse.segments
        for _ in range(parts)
    )
    return PulseProgram(segments=segments, scale=pulse.scale)


def is_time_symmetric(pulse: PulseProgram, rtol: float = 0.0) -> bool:
    """Segment i mirrors segment S-1-i in duration, detuning and amplitude."""
    for a, b in zip(pulse.segments, reversed(pulse.segments)):
        for x, y in ((a.duration, b.duration), (a.detuning, b.detuning),
                     (a.amplitude, b.amplitude)):
            if abs(x - y) > rtol * max(abs(x), abs(y)):
                return False
    return True


def load_pulse(path: Union[str, Path]) -> PulseProgram:
    """Read and validate a pulse JSON file."""
    path = Path(path)
    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise InputValidationError(f"file not found: {path}", field="pulse") from e
    except json.JSONDecodeError as e:
        raise InputValidationError(f"invalid JSON in {path}: {e}", field="pulse") from e
    if isinstance(data, dict):
        data = {k: v for k, v in data.items() if k != "_meta"}
    return PulseProgram.from_dict(data)


def save_pulse(pulse: PulseProgram, path: Union[str, Path],
               meta: Optional[Dict[str, Any]] = None) -> None:
    payload = pulse.to_dict()
    if meta:
        payload = {"_meta": meta, **payload}
    with open(path, 'w') as f:
        json.dump(payload, f, indent=2)
