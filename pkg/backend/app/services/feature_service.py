"""
Feature service for audio featurization.
Turns clips into magnitude spectrograms and the fixed-length vectors used downstream.
"""

import logging
from pathlib import Path
from typing import BinaryIO, List, Sequence, Union

import numpy as np
from scipy import fft as sp_fft
from scipy import signal
from scipy.io import wavfile

from app.models.audio import AudioClip, Spectrogram, FeatureVector, FeatureKind, FeaturePipelineConfig
from app.utils.errors import FeatureError
from app.utils.parallel import run_jobs

logger = logging.getLogger(__name__)

A4_HZ = 440.0
A4_MIDI = 69


def midi_to_freq(midi: float) -> float:
    """Equal-temperament frequency of a MIDI note."""
    return A4_HZ * 2.0 ** ((midi - A4_MIDI) / 12.0)


def l2_normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """Scale every row to unit Euclidean norm; zero rows stay zero."""
    matrix = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=-1, keepdims=True)
    return np.divide(matrix, norms, out=np.zeros_like(matrix), where=norms > 0)


class FeatureService:
    """Service class for spectral analysis and feature extraction."""

    def stft_magnitude(self, clip: AudioClip, window_size: int = 4096, hop: int = 32) -> Spectrogram:
        """
        Magnitude short-time Fourier transform with a Hann window.

        Frames that would run past the end of the clip are dropped, nothing is padded.

        Args:
            clip: Input audio
            window_size: Frame length in samples
            hop: Distance between frame starts in samples

        Returns:
            Spectrogram with window_size // 2 + 1 bins
        """
        if hop < 1:
            raise FeatureError("hop must be at least 1 sample", {"hop": hop})
        if window_size < 2:
            raise FeatureError("window must span at least 2 samples", {"window_size": window_size})
        samples = clip.samples
        if samples.size < window_size:
            raise FeatureError(
                "clip too short",
                {"samples": int(samples.size), "window_size": window_size},
            )
        if not np.all(np.isfinite(samples)):
            raise FeatureError("clip contains non-finite samples")

        frames = np.lib.stride_tricks.sliding_window_view(samples, window_size)[::hop]
        window = signal.get_window("hann", window_size)
        magnitudes = np.abs(sp_fft.rfft(frames * window, axis=1)).T
        return Spectrogram(
            magnitudes=magnitudes,
            sample_rate=clip.sample_rate,
            window_size=window_size,
            hop=hop,
        )

    def pool_time(self, spec: Spectrogram, target_dim: int = 256) -> FeatureVector:
        """
        Pool a spectrogram into a unit-norm vector of length target_dim.

        Time mean per bin, log(1 + v) compression, contiguous bin-group averaging
        (the last group absorbs the remainder), then l2 normalization.
        """
        bins = spec.magnitudes.shape[0]
        if target_dim < 1 or target_dim > bins:
            raise FeatureError(
                "target dimension must lie in 1..bin count",
                {"target_dim": target_dim, "bins": bins},
            )
        compressed = np.log1p(spec.magnitudes.mean(axis=1))

        group = bins // target_dim
        head = compressed[: group * (target_dim - 1)].reshape(target_dim - 1, group).mean(axis=1)
        tail = compressed[group * (target_dim - 1):].mean(keepdims=True)
        pooled = np.concatenate([head, tail])
        return FeatureVector(values=l2_normalize_rows(pooled), kind=FeatureKind.POOLED_SPECTROGRAM)

    def chroma(self, spec: Spectrogram, sample_rate: int, fmin: float = 55.0, fmax: float = 8000.0) -> FeatureVector:
        """
        12-bin pitch class profile of the time-averaged power spectrum.

        Bins outside [fmin, fmax] and the DC bin are ignored; the result is l1-normalized
        when it carries any energy.
        """
        nyquist = sample_rate / 2.0
        if not 0 < fmin < fmax <= nyquist:
            raise FeatureError(
                "chroma band must satisfy 0 < fmin < fmax <= Nyquist",
                {"fmin": fmin, "fmax": fmax, "nyquist": nyquist},
            )
        power = np.mean(spec.magnitudes ** 2, axis=1)
        freqs = np.arange(power.size) * (sample_rate / spec.window_size)
        in_band = (freqs >= fmin) & (freqs <= fmax) & (freqs > 0)

        midi = np.rint(12.0 * np.log2(freqs[in_band] / A4_HZ)).astype(np.int64) + A4_MIDI
        profile = np.bincount(np.mod(midi, 12), weights=power[in_band], minlength=12)

        total = profile.sum()
        if total > 0:
            profile = profile / total
        return FeatureVector(values=profile, kind=FeatureKind.CHROMA)

    def interpolated_psd(
        self, spec: Spectrogram, sample_rate: int, note_count: int = 96, base_midi: int = 24
    ) -> FeatureVector:
        """
        Time-averaged power spectrum sampled at equal-temperament note frequencies.

        Linear interpolation between neighbouring bins; notes above Nyquist yield 0.
        """
        power = np.mean(spec.magnitudes ** 2, axis=1)
        bin_hz = sample_rate / spec.window_size
        note_freqs = np.array([midi_to_freq(base_midi + m) for m in range(note_count)])

        values = np.interp(note_freqs / bin_hz, np.arange(power.size), power)
        values[note_freqs > sample_rate / 2.0] = 0.0
        return FeatureVector(values=values, kind=FeatureKind.INTERPOLATED_PSD)

    def decimate(self, clip: AudioClip, factor: int) -> AudioClip:
        """Integer-factor downsampling with a zero-phase anti-alias filter."""
        if factor < 1:
            raise FeatureError("decimation factor must be a positive integer", {"factor": factor})
        if factor == 1:
            return clip
        if clip.sample_rate % factor != 0:
            raise FeatureError(
                "sample rate must be divisible by the decimation factor",
                {"sample_rate": clip.sample_rate, "factor": factor},
            )
        samples = signal.decimate(clip.samples, factor, ftype="fir", zero_phase=True)
        return AudioClip(samples=samples, sample_rate=clip.sample_rate // factor)

    def featurize_clip(self, clip: AudioClip, pipeline: FeaturePipelineConfig) -> FeatureVector:
        """Run the configured pipeline on one clip."""
        clip = self.decimate(clip, pipeline.decimation)
        spec = self.stft_magnitude(clip, pipeline.window_size, pipeline.hop)
        return self.from_spectrogram(spec, clip.sample_rate, pipeline)

    def from_spectrogram(self, spec: Spectrogram, sample_rate: int, pipeline: FeaturePipelineConfig) -> FeatureVector:
        """The pipeline's feature kind computed from an already framed clip."""
        if pipeline.kind == FeatureKind.CHROMA:
            return self.chroma(spec, sample_rate, pipeline.fmin, min(pipeline.fmax, sample_rate / 2.0))
        if pipeline.kind == FeatureKind.INTERPOLATED_PSD:
            return self.interpolated_psd(spec, sample_rate, pipeline.note_count, pipeline.base_midi)
        return self.pool_time(spec, pipeline.dim)

    def featurize_all_kinds(
        self, clip: AudioClip, pipelines: Sequence[FeaturePipelineConfig]
    ) -> List[np.ndarray]:
        """Featurize one clip under several pipelines, reusing spectrograms with equal framing."""
        cache = {}
        vectors = []
        for pipeline in pipelines:
            key = (pipeline.decimation, pipeline.window_size, pipeline.hop)
            if key not in cache:
                decimated = self.decimate(clip, pipeline.decimation)
                cache[key] = (decimated.sample_rate, self.stft_magnitude(decimated, pipeline.window_size, pipeline.hop))
            sample_rate, spec = cache[key]
            vectors.append(self.from_spectrogram(spec, sample_rate, pipeline).values)
        return vectors

    def feature_matrices(
        self, clips: Sequence[AudioClip], pipelines: Sequence[FeaturePipelineConfig], n_jobs: int = 1
    ) -> List[np.ndarray]:
        """
        Featurize many clips.

        Returns:
            One N x M matrix per pipeline, rows in clip order
        """
        if not clips:
            raise FeatureError("no clips to featurize")
        rows = run_jobs(_featurize_task, [(clip, list(pipelines)) for clip in clips], n_jobs)
        logger.info(f"Featurized {len(clips)} clips into {len(pipelines)} representations")
        return [np.vstack([row[i] for row in rows]) for i in range(len(pipelines))]

    def load_wav(self, source: Union[str, BinaryIO]) -> AudioClip:
        """Read a mono PCM16, PCM32 or float WAV file (path or open binary stream) scaled to [-1, 1]."""
        path = source if isinstance(source, str) else getattr(source, "name", "<stream>")
        try:
            sample_rate, data = wavfile.read(source)
        except (OSError, ValueError, EOFError) as e:
            logger.error(f"Failed to read WAV {path}: {e}")
            raise FeatureError("cannot read WAV file", {"path": str(path), "reason": str(e)})

        if data.ndim != 1:
            raise FeatureError("only mono audio is supported", {"path": str(path), "channels": data.shape[1]})
        if data.dtype == np.int16:
            samples = data.astype(np.float64) / 32768.0
        elif data.dtype == np.int32:
            samples = data.astype(np.float64) / 2147483648.0
        elif np.issubdtype(data.dtype, np.floating):
            samples = data.astype(np.float64)
        else:
            raise FeatureError("unsupported WAV sample format", {"path": str(path), "dtype": str(data.dtype)})
        if samples.size == 0:
            raise FeatureError("WAV file holds no samples", {"path": str(path)})
        return AudioClip(samples=samples, sample_rate=int(sample_rate))

    def write_wav(self, clip: AudioClip, path: str) -> None:
        """Write a clip as 32-bit float WAV."""
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        wavfile.write(path, clip.sample_rate, clip.samples.astype(np.float32))


def _featurize_task(clip: AudioClip, pipelines: List[FeaturePipelineConfig]) -> List[np.ndarray]:
    return feature_service.featurize_all_kinds(clip, pipelines)


# Global feature service instance
feature_service = FeatureService()
