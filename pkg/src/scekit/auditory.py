"""Auditory frequency scales, excitation-pattern smoothing, and loss compensation.

The ERB formulas are the modern ones: ERB(f) = 24.7*(4.37*f/1000 + 1) Hz
and the matching ERB-number (Cam) scale.  Excitation patterns smooth a
magnitude spectrum with rounded-exponential (roex) auditory filters
evaluated on the FFT-bin grid, so downstream per-bin gains line up with
the raw spectrum without interpolation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import AudioBuffer, FrameSpectrum, StftConfig, istft, stft
from .errors import ConfigurationError, ValidationError

# Power floor 100 dB below digital full scale; keeps silent patterns finite.
POWER_FLOOR = 1e-10

CAMBRIDGE_SLOPE = 0.48


def _scalarize(out: np.ndarray, scalar_in: bool):
    return float(out) if scalar_in else out


def erb_hz(f):
    """Equivalent rectangular bandwidth (Hz) of the auditory filter at f Hz."""
    scalar = np.isscalar(f)
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValidationError("frequency must be nonnegative")
    return _scalarize(24.7 * (4.37 * f / 1000.0 + 1.0), scalar)


def erb_number(f):
    """Frequency in Cams (number of ERBs below f)."""
    scalar = np.isscalar(f)
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValidationError("frequency must be nonnegative")
    return _scalarize(21.4 * np.log10(4.37 * f / 1000.0 + 1.0), scalar)


def freq_of_erb_number(n):
    """Inverse of erb_number."""
    scalar = np.isscalar(n)
    n = np.asarray(n, dtype=np.float64)
    return _scalarize((np.power(10.0, n / 21.4) - 1.0) * 1000.0 / 4.37, scalar)


@dataclass
class ExcitationPattern:
    """Auditory-filter-smoothed spectrum, one dB level per FFT bin."""

    level_db: np.ndarray
    bin_freqs_hz: np.ndarray

    def __post_init__(self):
        self.level_db = np.asarray(self.level_db, dtype=np.float64)
        self.bin_freqs_hz = np.asarray(self.bin_freqs_hz, dtype=np.float64)
        if self.level_db.shape != self.bin_freqs_hz.shape:
            raise ValidationError("level and frequency arrays must match")
        if not np.all(np.isfinite(self.level_db)):
            raise ValidationError("excitation levels must be finite")

    @property
    def n_bins(self) -> int:
        return len(self.level_db)


def roex_weights(bin_freqs_hz: np.ndarray) -> np.ndarray:
    """Filter weight matrix W[c, j]: power of bin j seen by the filter at bin c.

    W(g) = (1 + p*|g|) * exp(-p*|g|) with g the deviation from the center
    frequency as a fraction of it and p = 4*fc/ERB(fc).  Rows are normalized
    to unit weight sum so this stage smooths: flat spectra map to flat
    patterns (per-bin level differences are unaffected either way).  The
    zero-frequency row degenerates (g is undefined) and becomes an identity
    tap.
    """
    f = np.asarray(bin_freqs_hz, dtype=np.float64)
    if f.ndim != 1 or len(f) == 0:
        raise ValidationError("bin_freqs_hz must be a nonempty 1-D array")
    fc = f[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.abs(f[None, :] - fc) / fc
        p = 4.0 * fc / erb_hz(fc.ravel())[:, None]
        w = (1.0 + p * g) * np.exp(-p * g)
    zero_rows = np.where(f <= 0)[0]
    for c in zero_rows:
        w[c, :] = 0.0
        w[c, c] = 1.0
    return w / w.sum(axis=1, keepdims=True)


def excitation_pattern(
    spec: FrameSpectrum, bin_freqs_hz: np.ndarray, weights: np.ndarray | None = None
) -> ExcitationPattern:
    """Smooth a frame's power spectrum into an excitation pattern (dB).

    `weights` may carry a precomputed roex_weights matrix for the same bin
    grid; passing it avoids rebuilding the matrix per frame.
    """
    if spec.n_bins == 0:
        raise ValidationError("empty spectrum")
    if len(bin_freqs_hz) != spec.n_bins:
        raise ValidationError("bin grid does not match the spectrum")
    if weights is None:
        weights = roex_weights(bin_freqs_hz)
    power = weights @ np.square(spec.mag_linear)
    level = 10.0 * np.log10(np.maximum(power, POWER_FLOOR))
    return ExcitationPattern(level, np.asarray(bin_freqs_hz, dtype=np.float64))


def excitation_levels(mags: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Vectorized excitation levels for stacked frames (frames x bins, dB)."""
    power = np.square(mags) @ weights.T
    return 10.0 * np.log10(np.maximum(power, POWER_FLOOR))


@dataclass(frozen=True)
class Audiogram:
    """Hearing levels (dB HL) at strictly increasing frequencies."""

    points: tuple

    def __post_init__(self):
        pts = tuple((float(f), float(hl)) for f, hl in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < 2:
            raise ConfigurationError("audiogram needs at least 2 points")
        freqs = [f for f, _ in pts]
        if any(f <= 0 for f in freqs) or any(b <= a for a, b in zip(freqs, freqs[1:])):
            raise ConfigurationError("audiogram frequencies must be positive and strictly increasing")
        if any(not 0.0 <= hl <= 120.0 for _, hl in pts):
            raise ConfigurationError("hearing levels must lie in [0, 120] dB")

    @classmethod
    def from_json(cls, path) -> "Audiogram":
        entries = json.loads(Path(path).read_text())
        return cls(tuple((e["freq_hz"], e["hl_db"]) for e in entries))

    def to_json(self, path) -> None:
        entries = [{"freq_hz": f, "hl_db": hl} for f, hl in self.points]
        Path(path).write_text(json.dumps(entries, indent=2))

    def hl_at(self, freqs_hz) -> np.ndarray:
        """HL interpolated linearly in log-frequency, clamped at the ends."""
        f = np.atleast_1d(np.asarray(freqs_hz, dtype=np.float64))
        xs = np.log10([p[0] for p in self.points])
        ys = [p[1] for p in self.points]
        with np.errstate(divide="ignore"):
            q = np.log10(np.maximum(f, 0.0))
        return np.interp(q, xs, ys)


def cambridge_gain(audiogram: Audiogram, bin_freqs_hz) -> np.ndarray:
    """Linear insertion gain in dB: a fixed fraction of the hearing level."""
    return CAMBRIDGE_SLOPE * audiogram.hl_at(bin_freqs_hz)


def apply_linear_gain(
    buffer: AudioBuffer, gain_db_per_bin: np.ndarray, config: StftConfig | None = None
) -> AudioBuffer:
    """Apply a per-bin dB gain curve via the analysis/synthesis chain.

    Phase is preserved; the output is the overlap-add resynthesis length
    (trailing partial frame dropped, as in any stft/istft round trip).
    """
    config = config or StftConfig()
    gain_db = np.asarray(gain_db_per_bin, dtype=np.float64)
    if gain_db.shape != (config.n_bins,):
        raise ConfigurationError(
            f"gain curve has {gain_db.shape} bins, analysis uses {config.n_bins}"
        )
    track = stft(buffer, config)
    track.mags *= np.power(10.0, gain_db / 20.0)[None, :]
    return istft(track)
