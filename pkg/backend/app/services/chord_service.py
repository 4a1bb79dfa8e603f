"""
Chord service for synthetic dataset generation.
Builds the 14 tertian chord types, renders them with additive instrument models
and writes WAV datasets with a CSV manifest.
"""

import csv
import logging
from collections import Counter
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from app.models.audio import AudioClip
from app.models.chords import ChordType, InstrumentProfile, ChordDatasetConfig, LabeledClip
from app.services.feature_service import feature_service, midi_to_freq
from app.utils.errors import DatasetError
from app.utils.parallel import run_jobs

logger = logging.getLogger(__name__)

PEAK_LEVEL = 0.9
MANIFEST_FIELDS = ["path", "label", "root", "instrument"]

# Table order defines the class labels 1..14.
CHORD_TYPES: List[ChordType] = [
    ChordType(name="Minor third", intervals=[3]),
    ChordType(name="Major third", intervals=[4]),
    ChordType(name="Diminished triad", intervals=[3, 3]),
    ChordType(name="Minor triad", intervals=[3, 4]),
    ChordType(name="Major triad", intervals=[4, 3]),
    ChordType(name="Augmented triad", intervals=[4, 4]),
    ChordType(name="Diminished seventh", intervals=[3, 3, 3]),
    ChordType(name="Half-diminished seventh", intervals=[3, 3, 4]),
    ChordType(name="Minor seventh", intervals=[3, 4, 3]),
    ChordType(name="Minor major seventh", intervals=[3, 4, 4]),
    ChordType(name="Dominant seventh", intervals=[4, 3, 3]),
    ChordType(name="Major seventh", intervals=[4, 3, 4]),
    ChordType(name="Augmented major seventh", intervals=[4, 4, 3]),
    ChordType(name="Augmented augmented seventh", intervals=[4, 4, 4]),
]


class ChordService:
    """Service class for chord synthesis and dataset management."""

    @property
    def chord_types(self) -> List[ChordType]:
        return CHORD_TYPES

    @property
    def n_classes(self) -> int:
        return len(CHORD_TYPES)

    def chord_type(self, label: int) -> ChordType:
        if not 1 <= label <= len(CHORD_TYPES):
            raise DatasetError("unknown chord label", {"label": label})
        return CHORD_TYPES[label - 1]

    def chord_pitches(self, root: int, chord_type: ChordType) -> List[int]:
        """
        MIDI notes of a chord built on root.

        Args:
            root: MIDI note of the fundamental
            chord_type: Interval scheme

        Returns:
            root followed by the cumulative interval sums
        """
        if not 0 <= root <= 127:
            raise DatasetError("root must be a MIDI note in 0..127", {"root": root})
        pitches = [root] + [root + int(s) for s in np.cumsum(chord_type.intervals)]
        if pitches[-1] > 127:
            raise DatasetError(
                "chord exceeds MIDI note 127",
                {"root": root, "chord": chord_type.name, "top": pitches[-1]},
            )
        return pitches

    def midi_to_freq(self, midi: int) -> float:
        if not 0 <= midi <= 127:
            raise DatasetError("MIDI note must lie in 0..127", {"midi": midi})
        return midi_to_freq(midi)

    def default_instruments(self) -> List[InstrumentProfile]:
        """Eleven harmonic-decay families with geometric partial ratios 0.3..0.8."""
        instruments = []
        for i, ratio in enumerate(np.linspace(0.3, 0.8, 11)):
            partials = 4 + (8 * i) // 10
            instruments.append(InstrumentProfile(
                name=f"harmonic_{i + 1:02d}",
                harmonic_amplitudes=[float(ratio ** h) for h in range(partials)],
                attack=0.005 + 0.01 * (i % 4),
                release=0.05 + 0.04 * (i % 3),
                inharmonicity_jitter=0.002,
            ))
        return instruments

    def full_config(self, seed: int = 0) -> ChordDatasetConfig:
        """14 roots x 11 instruments at 44.1 kHz, 2 s clips: 154 clips per class."""
        return ChordDatasetConfig(
            roots=list(range(48, 62)),
            instruments=self.default_instruments(),
            duration=2.0,
            sample_rate=44100,
            seed=seed,
        )

    def desk_config(self, root_count: int = 6, instrument_count: int = 5, seed: int = 0) -> ChordDatasetConfig:
        """Reduced Cartesian product at 22.05 kHz with 1 s clips."""
        instruments = self.default_instruments()
        if not 1 <= instrument_count <= len(instruments):
            raise DatasetError("instrument count must lie in 1..11", {"instrument_count": instrument_count})
        if root_count < 1:
            raise DatasetError("at least one root is required", {"root_count": root_count})
        return ChordDatasetConfig(
            roots=list(range(48, 48 + root_count)),
            instruments=instruments[:instrument_count],
            duration=1.0,
            sample_rate=22050,
            seed=seed,
        )

    def synth_chord(
        self,
        pitches: Sequence[int],
        instrument: InstrumentProfile,
        duration: float,
        sample_rate: int,
        rng: np.random.Generator,
    ) -> AudioClip:
        """
        Additive synthesis of a chord.

        Every pitch contributes the instrument's partials with random phase and a small
        random detuning; partials at or above Nyquist are dropped. A linear attack/release
        envelope is applied and the result is peak-normalized to 0.9.
        """
        if len(pitches) == 0:
            raise DatasetError("cannot synthesize an empty chord")

        n = int(round(duration * sample_rate))
        t = np.arange(n) / sample_rate
        nyquist = sample_rate / 2.0
        samples = np.zeros(n)
        for pitch in pitches:
            f0 = midi_to_freq(pitch)
            for h, amplitude in enumerate(instrument.harmonic_amplitudes, start=1):
                detune = 1.0 + instrument.inharmonicity_jitter * rng.uniform(-1.0, 1.0)
                phase = rng.uniform(0.0, 2.0 * np.pi)
                freq = f0 * h * detune
                if freq >= nyquist or amplitude == 0:
                    continue
                samples += amplitude * np.sin(2.0 * np.pi * freq * t + phase)

        samples *= self._envelope(n, instrument, sample_rate)
        peak = np.max(np.abs(samples))
        if peak == 0:
            raise DatasetError("no audible partial below Nyquist", {"pitches": list(pitches)})
        return AudioClip(samples=samples * (PEAK_LEVEL / peak), sample_rate=sample_rate)

    def _envelope(self, n: int, instrument: InstrumentProfile, sample_rate: int) -> np.ndarray:
        envelope = np.ones(n)
        attack = int(round(instrument.attack * sample_rate))
        release = int(round(instrument.release * sample_rate))
        if attack > 0:
            envelope[:attack] = np.linspace(0.0, 1.0, attack, endpoint=False)
        if release > 0:
            envelope[n - release:] *= np.linspace(1.0, 0.0, release)
        return envelope

    def clip_rng(self, seed: int, label: int, root: int, instrument_index: int) -> np.random.Generator:
        """Per-clip generator, independent of generation order."""
        return np.random.default_rng(np.random.SeedSequence([seed, label, root, instrument_index]))

    def generate_dataset(self, config: ChordDatasetConfig, n_jobs: int = 1) -> List[LabeledClip]:
        """
        One clip per (chord type, root, instrument).

        Returns:
            Labeled clips ordered by chord type, then root, then instrument
        """
        tasks = []
        for label in range(1, len(CHORD_TYPES) + 1):
            for root in config.roots:
                # Validate all pitches before rendering anything.
                self.chord_pitches(root, self.chord_type(label))
                for index in range(len(config.instruments)):
                    tasks.append((config, label, root, index))

        dataset = run_jobs(_synth_task, tasks, n_jobs)
        logger.info(
            f"Generated {len(dataset)} chord clips "
            f"({len(config.roots)} roots x {len(config.instruments)} instruments per class)"
        )
        return dataset

    def class_counts(self, labels: Sequence[int]) -> Dict[int, int]:
        counts = Counter(int(label) for label in labels)
        return {label: counts.get(label, 0) for label in range(1, len(CHORD_TYPES) + 1)}

    def write_dataset(self, dataset: Sequence[LabeledClip], out_dir: str) -> Path:
        """
        Write WAV files and manifest.csv (path,label,root,instrument).

        Returns:
            Path of the manifest; WAV paths inside it are relative to its directory
        """
        out = Path(out_dir)
        (out / "wav").mkdir(parents=True, exist_ok=True)
        manifest = out / "manifest.csv"
        try:
            with open(manifest, "w", newline="", encoding="utf-8") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(MANIFEST_FIELDS)
                for item in dataset:
                    relative = f"wav/{item.label:02d}_{item.root:03d}_{item.instrument}.wav"
                    feature_service.write_wav(item.clip, str(out / relative))
                    writer.writerow([relative, item.label, item.root, item.instrument])
        except OSError as e:
            logger.error(f"Failed to write dataset to {out}: {e}")
            raise DatasetError("cannot write dataset", {"path": str(out), "reason": str(e)})

        logger.info(f"Wrote {len(dataset)} clips and manifest to {out}")
        return manifest

    def read_manifest(self, path: str) -> List[Dict[str, str]]:
        """Rows of a manifest with WAV paths resolved against the manifest directory."""
        manifest = Path(path)
        try:
            with open(manifest, newline="", encoding="utf-8") as f:
                rows = list(csv.DictReader(f))
        except OSError as e:
            raise DatasetError("cannot read manifest", {"path": str(path), "reason": str(e)})

        if not rows:
            raise DatasetError("manifest is empty", {"path": str(path)})
        missing = [field for field in ("path", "label") if field not in rows[0]]
        if missing:
            raise DatasetError("manifest lacks required columns", {"path": str(path), "missing": missing})
        for row in rows:
            row["path"] = str(manifest.parent / row["path"])
        return rows

    def load_manifest_clips(self, path: str) -> List[LabeledClip]:
        clips = []
        for row in self.read_manifest(path):
            clips.append(LabeledClip(
                clip=feature_service.load_wav(row["path"]),
                label=int(row["label"]),
                root=int(row.get("root") or 0),
                instrument=row.get("instrument") or "",
            ))
        return clips


def _synth_task(config: ChordDatasetConfig, label: int, root: int, index: int) -> LabeledClip:
    instrument = config.instruments[index]
    pitches = chord_service.chord_pitches(root, chord_service.chord_type(label))
    clip = chord_service.synth_chord(
        pitches, instrument, config.duration, config.sample_rate,
        chord_service.clip_rng(config.seed, label, root, index),
    )
    return LabeledClip(clip=clip, label=label, root=root, instrument=instrument.name)


# Global chord service instance
chord_service = ChordService()
