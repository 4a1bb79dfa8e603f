"""
Tests for chord synthesis and dataset generation.
"""

import hashlib

import numpy as np
import pytest
from scipy import signal

from app.models.chords import ChordDatasetConfig, InstrumentProfile
from app.services.chord_service import CHORD_TYPES, chord_service
from app.services.feature_service import feature_service
from app.utils.errors import DatasetError

PURE = InstrumentProfile(name="pure", harmonic_amplitudes=[1.0], attack=0.01, release=0.02, inharmonicity_jitter=0.0)


def small_config(**overrides) -> ChordDatasetConfig:
    values = dict(roots=[48, 50], instruments=[PURE], duration=0.2, sample_rate=8000, seed=3)
    values.update(overrides)
    return ChordDatasetConfig(**values)


class TestChordTable:
    def test_fourteen_distinct_types(self):
        assert len(CHORD_TYPES) == 14
        assert len({tuple(t.intervals) for t in CHORD_TYPES}) == 14
        assert CHORD_TYPES[4].name == "Major triad"

    @pytest.mark.parametrize("label,expected", [
        (5, [60, 64, 67]),
        (7, [60, 63, 66, 69]),
        (12, [60, 64, 67, 71]),
        (1, [60, 63]),
    ])
    def test_pitches(self, label, expected):
        assert chord_service.chord_pitches(60, chord_service.chord_type(label)) == expected

    def test_top_note_overflow(self):
        with pytest.raises(DatasetError, match="exceeds"):
            chord_service.chord_pitches(125, chord_service.chord_type(5))

    def test_unknown_label(self):
        with pytest.raises(DatasetError):
            chord_service.chord_type(15)

    def test_midi_frequencies(self):
        assert chord_service.midi_to_freq(69) == pytest.approx(440.0)
        assert chord_service.midi_to_freq(81) == pytest.approx(880.0)
        assert chord_service.midi_to_freq(60) == pytest.approx(261.6256, abs=1e-3)


class TestSynthesis:
    def test_peak_level(self):
        clip = chord_service.synth_chord([60, 64, 67], PURE, 0.5, 22050, np.random.default_rng(0))
        assert np.max(np.abs(clip.samples)) == pytest.approx(0.9)
        assert clip.samples.size == 11025

    def test_pure_tone_peak_bin(self):
        clip = chord_service.synth_chord([69], PURE, 1.0, 22050, np.random.default_rng(0))
        spec = feature_service.stft_magnitude(clip, window_size=4096, hop=512)
        assert np.argmax(spec.magnitudes.mean(axis=1)) == 82

    def test_chroma_shows_the_chord_notes(self):
        clip = chord_service.synth_chord([60, 64, 67], PURE, 1.0, 22050, np.random.default_rng(1))
        spec = feature_service.stft_magnitude(clip, window_size=4096, hop=512)
        profile = feature_service.chroma(spec, 22050).values
        assert set(np.argsort(profile)[-3:]) == {0, 4, 7}

    def test_same_generator_same_clip(self):
        a = chord_service.synth_chord([60, 64], PURE, 0.2, 8000, np.random.default_rng(5))
        b = chord_service.synth_chord([60, 64], PURE, 0.2, 8000, np.random.default_rng(5))
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_empty_chord(self):
        with pytest.raises(DatasetError):
            chord_service.synth_chord([], PURE, 0.2, 8000, np.random.default_rng(0))

    def test_envelope_longer_than_clip(self):
        with pytest.raises(ValueError):
            small_config(instruments=[PURE.copy(update={"release": 0.5})])


class TestDataset:
    def test_counts(self):
        dataset = chord_service.generate_dataset(small_config())
        assert len(dataset) == 28
        assert set(chord_service.class_counts([d.label for d in dataset]).values()) == {2}

    def test_preset_sizes(self):
        full = chord_service.full_config()
        assert len(full.roots) * len(full.instruments) * 14 == 2156
        desk = chord_service.desk_config(2, 2)
        assert len(desk.roots) * len(desk.instruments) * 14 == 56
        with pytest.raises(DatasetError):
            chord_service.desk_config(2, 12)

    def test_default_instruments_fit_the_clip(self):
        for instrument in chord_service.default_instruments():
            assert instrument.attack + instrument.release < 1.0
            assert instrument.harmonic_amplitudes[0] == 1.0

    def test_spectral_peaks_match_chord_pitches(self):
        config = small_config(roots=[48, 55], duration=1.0, sample_rate=22050)
        for item in chord_service.generate_dataset(config):
            samples = item.clip.samples
            spectrum = np.abs(np.fft.rfft(samples * signal.windows.hann(samples.size, sym=False)))
            resolution = config.sample_rate / samples.size
            pitches = chord_service.chord_pitches(item.root, chord_service.chord_type(item.label))
            peaks, props = signal.find_peaks(spectrum, height=0.0)
            top = np.sort(peaks[np.argsort(props["peak_heights"])[-len(pitches):]]) * resolution
            expected = [chord_service.midi_to_freq(p) for p in pitches]
            np.testing.assert_allclose(top, expected, atol=resolution)

    def test_generation_is_deterministic(self):
        first = chord_service.generate_dataset(small_config())
        second = chord_service.generate_dataset(small_config())
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.clip.samples, b.clip.samples)

    def test_parallel_matches_serial(self):
        serial = chord_service.generate_dataset(small_config(roots=[48]))
        parallel = chord_service.generate_dataset(small_config(roots=[48]), n_jobs=2)
        assert [d.label for d in serial] == [d.label for d in parallel]
        for a, b in zip(serial, parallel):
            np.testing.assert_array_equal(a.clip.samples, b.clip.samples)

    def test_seed_changes_phases(self):
        a = chord_service.generate_dataset(small_config(roots=[48], seed=1))
        b = chord_service.generate_dataset(small_config(roots=[48], seed=2))
        assert not np.array_equal(a[0].clip.samples, b[0].clip.samples)

    def test_write_and_reload(self, tmp_path):
        dataset = chord_service.generate_dataset(small_config(roots=[48]))
        manifest = chord_service.write_dataset(dataset, str(tmp_path / "chords"))
        lines = manifest.read_text().splitlines()
        assert lines[0] == "path,label,root,instrument"
        assert len(lines) == 15

        clips = chord_service.load_manifest_clips(str(manifest))
        assert [c.label for c in clips] == list(range(1, 15))
        np.testing.assert_allclose(clips[3].clip.samples, dataset[3].clip.samples, atol=1e-7)

    def test_written_files_are_reproducible(self, tmp_path):
        digests = []
        for name in ("a", "b"):
            dataset = chord_service.generate_dataset(small_config(roots=[48]))
            manifest = chord_service.write_dataset(dataset, str(tmp_path / name))
            wav = manifest.parent / "wav" / "05_048_pure.wav"
            digests.append(hashlib.sha256(wav.read_bytes()).hexdigest())
        assert digests[0] == digests[1]

    def test_empty_manifest(self, tmp_path):
        manifest = tmp_path / "manifest.csv"
        manifest.write_text("path,label,root,instrument\n")
        with pytest.raises(DatasetError, match="empty"):
            chord_service.read_manifest(str(manifest))

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DatasetError):
            chord_service.read_manifest(str(tmp_path / "nope.csv"))
