"""
Chord dataset models.
Defines tertian chord types, parametric instrument profiles and dataset configuration.
"""

from typing import List

from pydantic import BaseModel, Field, validator, root_validator

from app.models.audio import AudioClip


class ChordType(BaseModel):
    """A tertian chord type given by its stacked thirds."""

    name: str
    intervals: List[int] = Field(..., description="Semitone steps between consecutive notes")

    @validator("intervals")
    def validate_intervals(cls, v):
        if not 1 <= len(v) <= 3:
            raise ValueError("a chord type has between 1 and 3 intervals")
        if any(step not in (3, 4) for step in v):
            raise ValueError("tertian intervals are 3 or 4 semitones")
        return v

    @property
    def note_count(self) -> int:
        return len(self.intervals) + 1


class InstrumentProfile(BaseModel):
    """Additive-synthesis instrument: relative partial amplitudes plus an envelope."""

    name: str
    harmonic_amplitudes: List[float] = Field(..., min_items=1)
    attack: float = Field(..., ge=0, description="Attack time in seconds")
    release: float = Field(..., ge=0, description="Release time in seconds")
    inharmonicity_jitter: float = Field(default=0.002, ge=0, lt=0.05)

    @validator("harmonic_amplitudes")
    def validate_amplitudes(cls, v):
        if any(a < 0 for a in v):
            raise ValueError("partial amplitudes must be non-negative")
        if v[0] <= 0:
            raise ValueError("the fundamental amplitude must be positive")
        return v


class ChordDatasetConfig(BaseModel):
    """Cartesian product of chord types, roots and instruments."""

    roots: List[int] = Field(..., min_items=1)
    instruments: List[InstrumentProfile] = Field(..., min_items=1)
    duration: float = Field(default=1.0, gt=0, description="Clip length in seconds")
    sample_rate: int = Field(default=22050, gt=0)
    seed: int = Field(default=0, ge=0)

    @validator("roots", each_item=True)
    def validate_root(cls, v):
        if not 0 <= v <= 127:
            raise ValueError("roots must be MIDI notes in 0..127")
        return v

    @root_validator(skip_on_failure=True)
    def validate_envelopes(cls, values):
        for instrument in values["instruments"]:
            if instrument.attack + instrument.release >= values["duration"]:
                raise ValueError(
                    f"instrument {instrument.name}: attack + release must be shorter than the clip"
                )
        return values


class LabeledClip(BaseModel):
    """One generated chord with its class label (1-based chord type index)."""

    clip: AudioClip
    label: int = Field(..., ge=1)
    root: int
    instrument: str
