"""Waveform I/O, framing, and the 256-point analysis/synthesis chain.

Analysis uses Hamming-windowed frames with 50% overlap and an FFT the
size of the frame.  Synthesis is plain overlap-add of the per-frame
inverse transforms divided by the summed analysis window, so an
unmodified track resynthesizes to the input exactly (the Hamming window
is nonzero everywhere, hence so is the window sum).
"""

from __future__ import annotations

import io
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AudioIoError, ValidationError

DEFAULT_SAMPLE_RATE = 16000


@dataclass
class AudioBuffer:
    """Mono waveform with sample rate; samples nominally in [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValidationError("AudioBuffer requires a 1-D sample array")
        if not np.all(np.isfinite(self.samples)):
            raise ValidationError("AudioBuffer samples must all be finite")
        if int(self.sample_rate_hz) <= 0:
            raise ValidationError("sample_rate_hz must be positive")
        self.sample_rate_hz = int(self.sample_rate_hz)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def rms(self) -> float:
        if len(self.samples) == 0:
            return 0.0
        return float(np.sqrt(np.mean(np.square(self.samples))))


@dataclass(frozen=True)
class StftConfig:
    """Frame/hop/FFT geometry of the analysis chain.

    The transform length equals the frame length and the hop is half a
    frame; other combinations are rejected rather than approximated.
    """

    frame_len: int = 256
    hop: int = 128
    fft_size: int = 256
    window: str = "hamming"

    def __post_init__(self):
        if self.frame_len <= 0:
            raise ValidationError("frame_len must be positive")
        if self.fft_size != self.frame_len:
            raise ValidationError("fft_size must equal frame_len")
        if self.hop * 2 != self.frame_len:
            raise ValidationError("hop must be frame_len / 2")
        if self.window != "hamming":
            raise ValidationError("only the Hamming window is supported")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def window_samples(self) -> np.ndarray:
        return np.hamming(self.frame_len)

    def n_frames(self, n_samples: int) -> int:
        """Number of full frames in a signal of `n_samples` samples."""
        if n_samples < self.frame_len:
            return 0
        return 1 + (n_samples - self.frame_len) // self.hop

    def frame_times_s(self, n_frames: int, sample_rate_hz: int) -> np.ndarray:
        """Start time of each frame, in seconds."""
        return np.arange(n_frames) * self.hop / float(sample_rate_hz)

    def bin_freqs_hz(self, sample_rate_hz: int) -> np.ndarray:
        return np.fft.rfftfreq(self.fft_size, 1.0 / sample_rate_hz)


@dataclass
class FrameSpectrum:
    """One-sided magnitudes and phases of a single windowed frame."""

    mag_linear: np.ndarray
    phase: np.ndarray

    def __post_init__(self):
        self.mag_linear = np.asarray(self.mag_linear, dtype=np.float64)
        self.phase = np.asarray(self.phase, dtype=np.float64)
        if self.mag_linear.shape != self.phase.shape or self.mag_linear.ndim != 1:
            raise ValidationError("magnitude and phase must be equal-length 1-D arrays")
        if np.any(self.mag_linear < 0):
            raise ValidationError("magnitudes must be nonnegative")

    @property
    def n_bins(self) -> int:
        return len(self.mag_linear)


@dataclass
class SpectrumTrack:
    """Stacked per-frame spectra of one signal.

    `mags` and `phases` are (n_frames, n_bins) arrays; frame f covers
    source samples [f*hop, f*hop + frame_len).
    """

    mags: np.ndarray
    phases: np.ndarray
    config: StftConfig
    sample_rate_hz: int
    n_source_samples: int

    def __post_init__(self):
        self.mags = np.asarray(self.mags, dtype=np.float64)
        self.phases = np.asarray(self.phases, dtype=np.float64)
        if self.mags.shape != self.phases.shape or self.mags.ndim != 2:
            raise ValidationError("malformed track: mags/phases shape mismatch")
        if self.mags.shape[1] != self.config.n_bins:
            raise ValidationError("malformed track: inconsistent bin count")

    @property
    def n_frames(self) -> int:
        return self.mags.shape[0]

    @property
    def n_bins(self) -> int:
        return self.mags.shape[1]

    @property
    def bin_freqs_hz(self) -> np.ndarray:
        return self.config.bin_freqs_hz(self.sample_rate_hz)

    def frame(self, index: int) -> FrameSpectrum:
        return FrameSpectrum(self.mags[index].copy(), self.phases[index].copy())

    def copy(self) -> "SpectrumTrack":
        return SpectrumTrack(
            self.mags.copy(),
            self.phases.copy(),
            self.config,
            self.sample_rate_hz,
            self.n_source_samples,
        )


def frame_signal(x: np.ndarray, config: StftConfig) -> np.ndarray:
    """Slice a signal into unwindowed (n_frames, frame_len) rows."""
    n = config.n_frames(len(x))
    if n == 0:
        raise ValidationError("input too short: need at least one full frame")
    idx = np.arange(config.frame_len)[None, :] + config.hop * np.arange(n)[:, None]
    return x[idx]


def stft(buffer: AudioBuffer, config: StftConfig | None = None) -> SpectrumTrack:
    """Hamming-windowed short-time transform; trailing partial frame dropped."""
    config = config or StftConfig()
    frames = frame_signal(buffer.samples, config) * config.window_samples()
    spec = np.fft.rfft(frames, n=config.fft_size, axis=1)
    return SpectrumTrack(
        np.abs(spec), np.angle(spec), config, buffer.sample_rate_hz, len(buffer)
    )


def istft(track: SpectrumTrack) -> AudioBuffer:
    """Overlap-add resynthesis with per-sample window-sum compensation."""
    if track.n_frames == 0:
        raise ValidationError("malformed track: no frames")
    cfg = track.config
    spec = track.mags * np.exp(1j * track.phases)
    frames = np.fft.irfft(spec, n=cfg.fft_size, axis=1)
    out_len = (track.n_frames - 1) * cfg.hop + cfg.frame_len
    win = cfg.window_samples()
    y = np.zeros(out_len)
    wsum = np.zeros(out_len)
    for f in range(track.n_frames):
        start = f * cfg.hop
        y[start : start + cfg.frame_len] += frames[f]
        wsum[start : start + cfg.frame_len] += win
    return AudioBuffer(y / wsum, track.sample_rate_hz)


def interior_slice(track_or_config, n_output: int) -> slice:
    """Sample range fully covered by overlapping frames (edges excluded)."""
    cfg = track_or_config.config if hasattr(track_or_config, "config") else track_or_config
    return slice(cfg.frame_len, max(cfg.frame_len, n_output - cfg.frame_len))


def read_wav(path, expect_rate: int | None = None) -> AudioBuffer:
    """Read a RIFF 16-bit PCM mono file; samples scaled by 1/32768."""
    try:
        wf = wave.open(str(path), "rb")
    except (wave.Error, EOFError) as exc:
        raise AudioIoError(f"unreadable WAV header in {path}: {exc}") from exc
    except OSError as exc:
        raise AudioIoError(f"cannot open {path}: {exc}") from exc
    with wf:
        if wf.getnchannels() != 1:
            raise AudioIoError(f"non-mono input: {path}")
        if wf.getsampwidth() != 2 or wf.getcomptype() != "NONE":
            raise AudioIoError(f"only 16-bit PCM is supported: {path}")
        rate = wf.getframerate()
        data = wf.readframes(wf.getnframes())
    if expect_rate is not None and rate != expect_rate:
        raise AudioIoError(f"sample rate mismatch: {path} is {rate} Hz, expected {expect_rate}")
    samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    return AudioBuffer(samples, rate)


def write_wav(path, buffer: AudioBuffer) -> None:
    """Write 16-bit PCM mono; values are rounded and clipped to int16 range."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    try:
        with wave.open(str(path), "wb") as wf:
            _write_frames(wf, buffer)
    except OSError as exc:
        raise AudioIoError(f"cannot write {path}: {exc}") from exc


def wav_bytes(buffer: AudioBuffer) -> bytes:
    """Render a buffer as an in-memory RIFF PCM16 mono file."""
    bio = io.BytesIO()
    with wave.open(bio, "wb") as wf:
        _write_frames(wf, buffer)
    return bio.getvalue()


def _write_frames(wf: wave.Wave_write, buffer: AudioBuffer) -> None:
    wf.setnchannels(1)
    wf.setsampwidth(2)
    wf.setframerate(buffer.sample_rate_hz)
    pcm = np.clip(np.rint(buffer.samples * 32768.0), -32768, 32767).astype("<i2")
    wf.writeframes(pcm.tobytes())
