"""Per-frame SNR tracks and the threshold gate that feeds the enhancer.

The ideal track divides windowed target energy by windowed masker energy
frame by frame on the same grid the analysis chain uses, so gate
decisions and enhancement frames correspond one-to-one.  The blind
estimator is a documented stand-in for a proprietary hearing-aid
detector: per ERB-spaced band it tracks a fast envelope against a slow
minimum-statistics floor and weighs the elevation by three
speech-likeness cues (intensity change, 2-10 Hz modulation depth, and
duration of sustained elevation).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal as sp_signal

from .audio import AudioBuffer, StftConfig, frame_signal, stft
from .auditory import erb_number, freq_of_erb_number
from .errors import AlignmentError, ConfigurationError, ValidationError


@dataclass
class SnrTrack:
    """Frame-aligned SNR values in dB; +/-inf entries are legal."""

    snr_db: np.ndarray
    config: StftConfig

    def __post_init__(self):
        self.snr_db = np.asarray(self.snr_db, dtype=np.float64)
        if self.snr_db.ndim != 1:
            raise ValidationError("snr_db must be 1-D")

    def __len__(self) -> int:
        return len(self.snr_db)

    def to_csv(self, path, sample_rate_hz: int) -> None:
        """Write (frame_index, time_s, snr_db); time is the frame start."""
        times = self.config.frame_times_s(len(self.snr_db), sample_rate_hz)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame_index", "time_s", "snr_db"])
            for i, (t, v) in enumerate(zip(times, self.snr_db)):
                writer.writerow([i, f"{t:.6f}", repr(float(v))])


@dataclass(frozen=True)
class GateConfig:
    """Threshold for the enhance/bypass decision, in dB."""

    threshold_db: float = 0.0

    def __post_init__(self):
        if np.isnan(self.threshold_db):
            raise ValidationError("gate threshold must not be NaN")


def gate_scale(snr_n: float, s: float, gate: GateConfig | None = None) -> float:
    """Per-frame scale: s when the frame SNR reaches the threshold, else 0."""
    gate = gate or GateConfig()
    return s if snr_n >= gate.threshold_db else 0.0


def schedule_from_snr(
    snr: SnrTrack, s: float, gate: GateConfig | None = None
) -> np.ndarray:
    """Element-wise gate over a whole track."""
    gate = gate or GateConfig()
    return np.where(snr.snr_db >= gate.threshold_db, float(s), 0.0)


def isnr_track(
    target: AudioBuffer, masker: AudioBuffer, config: StftConfig | None = None
) -> SnrTrack:
    """Ideal per-frame SNR from premixed stems.

    Energies are of the Hamming-windowed frame contents, matching what the
    enhancer actually sees.  Zero target energy gives -inf; zero masker
    energy with a live target gives +inf.
    """
    config = config or StftConfig()
    if len(target) != len(masker):
        raise AlignmentError("target and masker must have equal length")
    if target.sample_rate_hz != masker.sample_rate_hz:
        raise AlignmentError("target and masker must share a sample rate")
    win = config.window_samples()
    te = np.sum(np.square(frame_signal(target.samples, config) * win), axis=1)
    me = np.sum(np.square(frame_signal(masker.samples, config) * win), axis=1)
    snr = np.empty(len(te))
    for i, (t, m) in enumerate(zip(te, me)):
        if t == 0.0:
            snr[i] = -np.inf
        elif m == 0.0:
            snr[i] = np.inf
        else:
            snr[i] = 10.0 * np.log10(t / m)
    return SnrTrack(snr, config)


@dataclass(frozen=True)
class EsnrConfig:
    """Knobs of the blind per-band estimator.

    Defaults are standard speech-envelope values; everything is exposed so
    alternative settings can be benchmarked against the ideal track.
    """

    n_bands: int = 16
    f_lo_hz: float = 80.0
    f_hi_hz: float = 7600.0
    tau_fast_ms: float = 10.0
    tau_slow_ms: float = 500.0
    mod_lo_hz: float = 2.0
    mod_hi_hz: float = 10.0
    duration_window_ms: float = 200.0
    intensity_ref_db: float = 3.0
    modulation_ref_db: float = 2.0
    elevation_margin_db: float = 3.0
    index_weights: tuple = (1.0, 1.0, 1.0)
    discount_db: float = 2.0
    floor_bias_db: float = 0.0
    snr_floor_db: float = -6.0

    def __post_init__(self):
        if self.n_bands < 4:
            raise ConfigurationError("need at least 4 analysis bands")
        if self.tau_fast_ms <= 0 or self.tau_slow_ms <= 0:
            raise ConfigurationError("smoothing time constants must be positive")
        if not 0 < self.mod_lo_hz < self.mod_hi_hz:
            raise ConfigurationError("modulation band must satisfy 0 < lo < hi")
        if self.duration_window_ms <= 0:
            raise ConfigurationError("duration window must be positive")


def band_edges_hz(cfg: EsnrConfig, nyquist_hz: float) -> np.ndarray:
    """ERB-spaced band edges covering [f_lo, min(f_hi, ~Nyquist)]."""
    hi = min(cfg.f_hi_hz, 0.99 * nyquist_hz)
    if hi <= cfg.f_lo_hz:
        raise ConfigurationError("band range collapsed; check sample rate")
    e = np.linspace(erb_number(cfg.f_lo_hz), erb_number(hi), cfg.n_bands + 1)
    return freq_of_erb_number(e)


def _moving_mean(x: np.ndarray, width: int) -> np.ndarray:
    """Trailing moving average along axis 0 (shorter head windows included)."""
    width = max(1, width)
    c = np.cumsum(x, axis=0, dtype=np.float64)
    out = np.empty_like(c)
    out[:width] = c[:width] / np.arange(1, min(width, len(x)) + 1)[:, None]
    if len(x) > width:
        out[width:] = (c[width:] - c[:-width]) / width
    return out


def esnr_track(
    mixture: AudioBuffer,
    config: StftConfig | None = None,
    ecfg: EsnrConfig | None = None,
) -> SnrTrack:
    """Blind per-frame SNR estimate from the mixture alone.

    Per band: envelope/floor elevation minus one estimates the band SNR;
    the three speech cues combine into a presence index (weighted geometric
    mean) that discounts bands without speech-like dynamics.  The frame
    value is the plain mean of the band values in dB.
    """
    config = config or StftConfig()
    ecfg = ecfg or EsnrConfig()
    track = stft(mixture, config)
    power = np.square(track.mags)
    n_frames = track.n_frames
    frame_dt = config.hop / mixture.sample_rate_hz
    env_rate = 1.0 / frame_dt
    if ecfg.mod_hi_hz >= env_rate / 2:
        raise ConfigurationError("modulation band exceeds the envelope Nyquist rate")

    edges = band_edges_hz(ecfg, mixture.sample_rate_hz / 2.0)
    bins = track.bin_freqs_hz
    band_of = np.searchsorted(edges, bins, side="right") - 1
    band_power = np.zeros((n_frames, ecfg.n_bands))
    for b in range(ecfg.n_bands):
        cols = np.where(band_of == b)[0]
        if len(cols) == 0:
            raise ConfigurationError(
                f"band {b} contains no FFT bins; reduce n_bands or widen the range"
            )
        band_power[:, b] = power[:, cols].sum(axis=1)
    # Relative floor keeps every later ratio invariant to broadband gain.
    eps = (np.mean(np.square(mixture.samples)) + 1e-300) * 1e-10
    band_power += eps

    # Fast envelope; the floor is a minimum tracker in the dB domain that
    # falls instantly and rises at a fixed slow rate (one e-fold, 8.686 dB,
    # per tau_slow), so it rides envelope minima without chasing syllables.
    a_fast = np.exp(-frame_dt / (ecfg.tau_fast_ms / 1000.0))
    rise_db = 8.686 * frame_dt / (ecfg.tau_slow_ms / 1000.0)
    env = np.empty_like(band_power)
    env[0] = band_power[0]
    for n in range(1, n_frames):
        env[n] = a_fast * env[n - 1] + (1.0 - a_fast) * band_power[n]
    level_db = 10.0 * np.log10(env)
    floor_db = np.empty_like(level_db)
    floor_db[0] = level_db[0]
    for n in range(1, n_frames):
        floor_db[n] = np.minimum(level_db[n], floor_db[n - 1] + rise_db)
    ratio_db = level_db - (floor_db + ecfg.floor_bias_db)

    dur_frames = max(1, int(round(ecfg.duration_window_ms / 1000.0 * env_rate)))

    # Cue 1: frame-to-frame intensity change, smoothed over the duration window.
    delta = np.abs(np.diff(level_db, axis=0, prepend=level_db[:1]))
    idx_int = np.clip(_moving_mean(delta, dur_frames) / ecfg.intensity_ref_db, 0.0, 1.0)

    # Cue 2: modulation depth in the syllabic band of the dB envelope.
    if n_frames > 12:
        sos = sp_signal.butter(
            2, [ecfg.mod_lo_hz, ecfg.mod_hi_hz], btype="bandpass", fs=env_rate, output="sos"
        )
        mod = sp_signal.sosfiltfilt(sos, level_db, axis=0)
        mod_rms = np.sqrt(_moving_mean(np.square(mod), dur_frames))
    else:
        mod_rms = np.zeros_like(level_db)
    idx_mod = np.clip(mod_rms / ecfg.modulation_ref_db, 0.0, 1.0)

    # Cue 3: duration of the elevation run each frame belongs to.  This is
    # an offline estimator, so a run's onset frames get credit for the whole
    # event rather than only the elapsed part.
    elevated = ratio_db > ecfg.elevation_margin_db
    run = np.zeros_like(band_power)
    for n in range(1, n_frames):
        run[n] = np.where(elevated[n], run[n - 1] + 1.0, 0.0)
    for n in range(n_frames - 2, -1, -1):
        carry = np.where(elevated[n] & elevated[n + 1], run[n + 1], run[n])
        run[n] = np.maximum(run[n], carry)
    idx_dur = np.clip(run * frame_dt * 1000.0 / ecfg.duration_window_ms, 0.0, 1.0)

    w = np.asarray(ecfg.index_weights, dtype=np.float64)
    logs = (
        w[0] * np.log(np.maximum(idx_int, 1e-12))
        + w[1] * np.log(np.maximum(idx_mod, 1e-12))
        + w[2] * np.log(np.maximum(idx_dur, 1e-12))
    )
    presence = np.exp(logs / w.sum())

    snr_lin = np.maximum(
        np.power(10.0, ratio_db / 10.0) - 1.0, 10.0 ** (ecfg.snr_floor_db / 10.0)
    )
    band_snr = 10.0 * np.log10(snr_lin) - (1.0 - presence) * ecfg.discount_db
    return SnrTrack(band_snr.mean(axis=1), config)


@dataclass
class SnrComparison:
    """Agreement statistics between an estimated and an ideal track."""

    pearson_r: float
    mean_abs_error_db: float
    gate_agreement: float
    n_frames: int


def compare_tracks(
    estimated: SnrTrack,
    ideal: SnrTrack,
    mask: np.ndarray | None = None,
    gate: GateConfig | None = None,
) -> SnrComparison:
    """Correlation/MAE/gate-agreement over (optionally masked) finite frames."""
    gate = gate or GateConfig()
    if len(estimated) != len(ideal):
        raise AlignmentError("tracks have different frame counts")
    keep = np.isfinite(estimated.snr_db) & np.isfinite(ideal.snr_db)
    if mask is not None:
        keep &= np.asarray(mask, dtype=bool)
    e = estimated.snr_db[keep]
    i = ideal.snr_db[keep]
    if len(e) < 2:
        raise ValidationError("need at least 2 comparable frames")
    r = float(np.corrcoef(e, i)[0, 1])
    mae = float(np.mean(np.abs(e - i)))
    agree = float(
        np.mean((e >= gate.threshold_db) == (i >= gate.threshold_db))
    )
    return SnrComparison(r, mae, agree, int(len(e)))


def speech_active_frames(
    reference: AudioBuffer, config: StftConfig | None = None, floor_db: float = -35.0
) -> np.ndarray:
    """Frames whose windowed energy is within `floor_db` of the peak frame."""
    config = config or StftConfig()
    win = config.window_samples()
    energy = np.sum(np.square(frame_signal(reference.samples, config) * win), axis=1)
    peak = energy.max()
    if peak <= 0:
        return np.zeros(len(energy), dtype=bool)
    return energy >= peak * 10.0 ** (floor_db / 10.0)
