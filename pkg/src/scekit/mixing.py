"""Masker synthesis and target/masker mixing at specified SMRs.

The signal-to-masker ratio is defined over the overlap region only; the
masker-only lead would otherwise bias the ratio.  Returned stems always
sum sample-exactly to the mixture, so an ideal SNR track computed from
them is the exact frame SNR of the mixture.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sp_signal

from .audio import AudioBuffer, StftConfig, stft
from .errors import AlignmentError, ConfigurationError, StimulusError


# Presentation calibration: 65 dB SPL maps to -25 dBFS RMS by default.
# Only relative levels matter to the algorithms; this anchors reports.
CALIBRATION_SPL_DB = 65.0
CALIBRATION_RMS_DBFS = -25.0


def rms_dbfs_for_spl(spl_db: float) -> float:
    """Digital RMS level (dBFS) that presents at the given SPL."""
    return CALIBRATION_RMS_DBFS + (spl_db - CALIBRATION_SPL_DB)


@dataclass(frozen=True)
class MixSpec:
    """Mixing layout: SMR in dB and how far the masker leads the target."""

    smr_db: float
    masker_lead_ms: float = 500.0
    loop_masker: bool = True
    crossfade_ms: float = 10.0

    def __post_init__(self):
        if self.masker_lead_ms < 0:
            raise ConfigurationError("masker lead must be nonnegative")
        if self.crossfade_ms < 0:
            raise ConfigurationError("crossfade must be nonnegative")

    def lead_samples(self, rate: int) -> int:
        return int(round(self.masker_lead_ms * rate / 1000.0))


@dataclass
class MixResult:
    mixture: AudioBuffer
    target: AudioBuffer
    masker: AudioBuffer
    masker_scale: float
    target_onset_sample: int


def make_ssn(
    corpus: list[AudioBuffer],
    duration_s: float,
    seed: int | None = None,
    rms: float = 0.1,
    config: StftConfig | None = None,
) -> AudioBuffer:
    """Speech-shaped noise: white noise colored to the corpus's average spectrum.

    The target shape is the magnitude average over every analysis frame of
    every corpus item; the noise is shaped in one pass by scaling its full
    rFFT with that envelope interpolated onto the output frequency grid.
    """
    if not corpus:
        raise ConfigurationError("corpus must contain at least one buffer")
    rate = corpus[0].sample_rate_hz
    if any(b.sample_rate_hz != rate for b in corpus):
        raise ConfigurationError("corpus items must share a sample rate")
    config = config or StftConfig()

    total = np.zeros(config.n_bins)
    n_frames = 0
    for item in corpus:
        track = stft(item, config)
        total += np.square(track.mags).sum(axis=0)
        n_frames += track.n_frames
    mean_mag = np.sqrt(total / n_frames)
    if not np.any(mean_mag > 0):
        raise ConfigurationError("corpus is silent; no spectral shape to match")

    n_out = int(round(duration_s * rate))
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(n_out)
    grid = np.fft.rfftfreq(n_out, 1.0 / rate)
    envelope = np.interp(grid, config.bin_freqs_hz(rate), mean_mag)
    shaped = np.fft.irfft(np.fft.rfft(white) * envelope, n=n_out)
    shaped *= rms / np.sqrt(np.mean(np.square(shaped)))
    return AudioBuffer(shaped, rate)


def loop_to_length(masker: AudioBuffer, n_samples: int, crossfade_ms: float) -> np.ndarray:
    """Repeat a masker with linear crossfades until it covers n_samples."""
    m = masker.samples
    xf = int(round(crossfade_ms * masker.sample_rate_hz / 1000.0))
    if len(m) <= xf:
        raise StimulusError("masker shorter than the loop crossfade")
    out = m.copy()
    fade_in = np.linspace(0.0, 1.0, xf, endpoint=False) if xf else np.empty(0)
    while len(out) < n_samples:
        joined = np.concatenate([out[: len(out) - xf], np.zeros(len(m))])
        tail = out[len(out) - xf :] * fade_in[::-1] if xf else np.empty(0)
        head = m[:xf] * fade_in if xf else np.empty(0)
        joined[len(out) - xf : len(out)] = tail + head
        joined[len(out) :] = m[xf:]
        out = joined
    return out[:n_samples]


def mix_at_smr(target: AudioBuffer, masker: AudioBuffer, spec: MixSpec) -> MixResult:
    """Scale and align the masker, then sum; see module docstring for SMR.

    The target is delayed by the masker lead; all three returned signals
    share one length and the stems sum exactly to the mixture.
    """
    if target.sample_rate_hz != masker.sample_rate_hz:
        raise AlignmentError("target and masker must share a sample rate")
    rate = target.sample_rate_hz
    if len(target) == 0:
        raise StimulusError("empty target")
    lead = spec.lead_samples(rate)
    total = lead + len(target)
    if len(masker) >= total:
        masker_seg = masker.samples[:total].copy()
    elif spec.loop_masker:
        masker_seg = loop_to_length(masker, total, spec.crossfade_ms)
    else:
        raise StimulusError(
            f"masker covers {len(masker)} samples, stimulus needs {total} and looping is disabled"
        )

    t_rms = target.rms()
    overlap = masker_seg[lead:]
    m_rms = float(np.sqrt(np.mean(np.square(overlap))))
    if t_rms == 0.0:
        raise StimulusError("target is silent; SMR undefined")
    if m_rms == 0.0:
        raise StimulusError("masker is silent over the overlap; SMR undefined")
    scale = t_rms / (m_rms * 10.0 ** (spec.smr_db / 20.0))

    aligned_masker = masker_seg * scale
    aligned_target = np.concatenate([np.zeros(lead), target.samples])
    mixture = aligned_target + aligned_masker
    return MixResult(
        AudioBuffer(mixture, rate),
        AudioBuffer(aligned_target, rate),
        AudioBuffer(aligned_masker, rate),
        float(scale),
        lead,
    )


THIRD_OCTAVE_CENTERS_HZ = (
    200.0, 250.0, 315.0, 400.0, 500.0, 630.0, 800.0, 1000.0,
    1250.0, 1600.0, 2000.0, 2500.0, 3150.0, 4000.0, 5000.0,
)


def third_octave_levels(
    buffer: AudioBuffer, centers_hz=THIRD_OCTAVE_CENTERS_HZ, nperseg: int = 256
) -> np.ndarray:
    """Spectrum levels (dB, mean PSD per band) in 1/3-octave bands.

    Uses a Welch estimate at the analysis resolution; band edges are a
    sixth of an octave either side of each center.  Reporting the mean
    PSD rather than total band power keeps white noise flat.
    """
    freqs, psd = sp_signal.welch(
        buffer.samples, fs=buffer.sample_rate_hz, window="hamming", nperseg=nperseg
    )
    levels = np.empty(len(centers_hz))
    for i, fc in enumerate(centers_hz):
        lo, hi = fc * 2 ** (-1 / 6), fc * 2 ** (1 / 6)
        band = (freqs >= lo) & (freqs < hi)
        power = float(np.mean(psd[band])) if np.any(band) else 0.0
        levels[i] = 10.0 * np.log10(max(power, 1e-30))
    return levels


def ltas_match_error_db(a: AudioBuffer, b: AudioBuffer, centers_hz=THIRD_OCTAVE_CENTERS_HZ) -> np.ndarray:
    """Per-band level difference after removing the overall level offset."""
    la = third_octave_levels(a, centers_hz)
    lb = third_octave_levels(b, centers_hz)
    diff = la - lb
    return diff - diff.mean()
