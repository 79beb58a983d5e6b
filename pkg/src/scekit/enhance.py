"""Spectral-change enhancement: change detection, DoG shaping, gain history.

All change/gain arithmetic happens in the dB domain (a ratio of linear
magnitudes is a difference of logs), and the accumulated gain is added
to the raw per-bin spectrum while the change itself is measured on the
excitation-smoothed spectrum.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import FrameSpectrum, SpectrumTrack
from .auditory import ExcitationPattern, erb_number, excitation_levels, roex_weights
from .errors import AlignmentError, ConfigurationError, ValidationError

# Per-frame boost limit; larger applied gains cause audible artifacts.
GAIN_CLAMP_DB = 20.0

SURROUND_SIGMA_RATIO = 1.6


@dataclass(frozen=True)
class SceParams:
    """The four enhancement parameters.

    b: DoG width in Cams; xi: history weight (< 1); m: history depth in
    frames; s: global enhancement scale.  The DSP accepts any values in
    these ranges; the discrete fitting grids live in `scekit.gafit`.
    """

    b: float
    xi: float
    m: int
    s: float

    def __post_init__(self):
        if not self.b > 0:
            raise ValidationError("b must be positive")
        if not 0.0 <= self.xi < 1.0:
            raise ValidationError("xi must lie in [0, 1)")
        if int(self.m) < 1:
            raise ValidationError("m must be at least 1")
        if self.s < 0:
            raise ValidationError("s must be nonnegative")
        object.__setattr__(self, "m", int(self.m))

    @classmethod
    def from_json(cls, path) -> "SceParams":
        d = json.loads(Path(path).read_text())
        return cls(b=d["b"], xi=d["xi"], m=d["m"], s=d["s"])

    def to_dict(self) -> dict:
        return {"b": self.b, "xi": self.xi, "m": self.m, "s": self.s}

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def dog_taps(width_b: float, delta_erb: np.ndarray) -> np.ndarray:
    """Difference-of-Gaussians taps at the given Cam offsets.

    Center sigma is width_b/2, surround sigma 1.6x wider.  The surround is
    rescaled so the taps sum to exactly zero on this sample grid, then the
    whole kernel is normalized to a unit peak.
    """
    if not width_b > 0:
        raise ValidationError("DoG width must be positive")
    d2 = np.square(np.asarray(delta_erb, dtype=np.float64))
    sigma_c = width_b / 2.0
    sigma_s = SURROUND_SIGMA_RATIO * sigma_c
    center = np.exp(-d2 / (2.0 * sigma_c**2))
    surround = np.exp(-d2 / (2.0 * sigma_s**2))
    taps = center / center.sum() - surround / surround.sum()
    peak = taps.max()
    if peak <= 0:
        raise ConfigurationError("degenerate DoG sample grid")
    taps /= peak
    # Remove the rounding residue so constant inputs map to exactly zero.
    return taps - taps.sum() / len(taps)


@dataclass
class DogKernel:
    """Per-center-bin DoG responses over one FFT-bin grid.

    `weights[c]` holds the taps of the kernel centered on bin c, sampled at
    every bin's Cam distance from bin c; each row sums to zero.
    """

    width_b: float
    weights: np.ndarray

    def taps(self, center_bin: int) -> np.ndarray:
        return self.weights[center_bin]


def dog_kernel(width_b: float, bin_freqs_hz: np.ndarray) -> DogKernel:
    """Build the DoG response rows for every center bin of the grid."""
    erb_n = erb_number(np.asarray(bin_freqs_hz, dtype=np.float64))
    rows = [dog_taps(width_b, erb_n - erb_n[c]) for c in range(len(erb_n))]
    return DogKernel(width_b, np.vstack(rows))


def spectral_change(mag_prev: ExcitationPattern, mag_cur: ExcitationPattern) -> np.ndarray:
    """Per-bin dB difference between adjacent frames' excitation patterns."""
    if mag_prev.n_bins != mag_cur.n_bins:
        raise AlignmentError("excitation patterns have different bin counts")
    return mag_cur.level_db - mag_prev.level_db


def enhancement_function(change: np.ndarray, kernel: DogKernel) -> np.ndarray:
    """Convolve a spectral-change vector with the per-bin DoG responses.

    Each output bin uses the taps recomputed for its own center (the kernel
    lives on the Cam axis); bins beyond the grid contribute zero.
    """
    change = np.asarray(change, dtype=np.float64)
    if kernel.weights.shape[1] != len(change):
        raise AlignmentError("kernel was built for a different bin grid")
    return kernel.weights @ change


@dataclass
class EnhancementState:
    """Ring of the most recent per-bin enhancement-function vectors."""

    params: SceParams
    history: deque = field(default_factory=deque)

    def __post_init__(self):
        self.history = deque(self.history, maxlen=self.params.m)

    def reset(self) -> None:
        self.history.clear()


def accumulate_gain(state: EnhancementState, enf_cur: np.ndarray) -> np.ndarray:
    """Weighted average of the last m ENF vectors, newest first.

    Weight of the i-frames-old entry is xi**i; the normalizer always spans
    all m slots, so missing history behaves as zero vectors.
    """
    enf_cur = np.asarray(enf_cur, dtype=np.float64)
    state.history.appendleft(enf_cur)
    xi, m = state.params.xi, state.params.m
    weights = np.power(xi, np.arange(m))
    gain = np.zeros_like(enf_cur)
    for w, enf in zip(weights, state.history):
        gain += w * enf
    return gain / weights.sum()


def apply_enhancement(
    spec_org: FrameSpectrum, gain_db: np.ndarray, s_n: float
) -> FrameSpectrum:
    """Add the scaled gain to the raw spectrum, in dB, phase untouched.

    The applied boost is clamped to +/-GAIN_CLAMP_DB per bin; the DC and
    Nyquist bins always pass through unmodified.
    """
    if s_n < 0:
        raise ValidationError("per-frame scale must be nonnegative")
    gain_db = np.asarray(gain_db, dtype=np.float64)
    if len(gain_db) != spec_org.n_bins:
        raise AlignmentError("gain vector does not match the spectrum")
    boost = np.clip(s_n * gain_db, -GAIN_CLAMP_DB, GAIN_CLAMP_DB)
    boost[0] = 0.0
    boost[-1] = 0.0
    return FrameSpectrum(
        spec_org.mag_linear * np.power(10.0, boost / 20.0), spec_org.phase.copy()
    )


def enhance_track(
    track: SpectrumTrack, params: SceParams, s_schedule: np.ndarray
) -> SpectrumTrack:
    """Run the per-frame enhancement chain over a whole track.

    Frame 0 has zero spectral change by definition.  The ENF history always
    accumulates; `s_schedule` only scales what gets applied, so gated-off
    frames still contribute their spectral history.
    """
    s_schedule = np.asarray(s_schedule, dtype=np.float64)
    if s_schedule.shape != (track.n_frames,):
        raise ConfigurationError(
            f"s_schedule has {s_schedule.shape} entries for {track.n_frames} frames"
        )
    if np.any(s_schedule < 0):
        raise ValidationError("s_schedule entries must be nonnegative")

    freqs = track.bin_freqs_hz
    patterns = excitation_levels(track.mags, roex_weights(freqs))
    kernel = dog_kernel(params.b, freqs)
    state = EnhancementState(params)

    out_mags = np.empty_like(track.mags)
    out_phases = track.phases.copy()
    for n in range(track.n_frames):
        if n == 0:
            change = np.zeros(track.n_bins)
        else:
            change = patterns[n] - patterns[n - 1]
        enf = enhancement_function(change, kernel)
        gain = accumulate_gain(state, enf)
        frame = apply_enhancement(
            FrameSpectrum(track.mags[n], track.phases[n]), gain, s_schedule[n]
        )
        out_mags[n] = frame.mag_linear
    return SpectrumTrack(
        out_mags, out_phases, track.config, track.sample_rate_hz, track.n_source_samples
    )
