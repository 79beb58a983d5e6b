"""End-to-end processing paths: plain, ideal-gated, and blind-gated.

Each path is stft -> (SNR track) -> per-frame schedule -> enhancement ->
istft.  The gated paths differ only in where the SNR track comes from,
so a schedule that never gates is bit-identical to the ungated path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioBuffer, StftConfig, istft, stft
from .enhance import SceParams, enhance_track
from .errors import AlignmentError
from .snr import (
    EsnrConfig,
    GateConfig,
    SnrTrack,
    esnr_track,
    isnr_track,
    schedule_from_snr,
    speech_active_frames,
)


@dataclass
class ProcessResult:
    audio: AudioBuffer
    snr: SnrTrack | None
    s_schedule: np.ndarray
    stats: dict


def resynthesize(mixture: AudioBuffer, config: StftConfig | None = None) -> AudioBuffer:
    """The unprocessed reference path (analysis + resynthesis only)."""
    return istft(stft(mixture, config or StftConfig()))


def _run(
    mixture: AudioBuffer,
    params: SceParams,
    schedule: np.ndarray,
    snr: SnrTrack | None,
    config: StftConfig,
) -> ProcessResult:
    track = stft(mixture, config)
    enhanced = enhance_track(track, params, schedule)
    with np.errstate(divide="ignore", invalid="ignore"):
        boost_db = 20.0 * np.log10(enhanced.mags / track.mags)
    boost_db = boost_db[np.isfinite(boost_db)]
    gated_on = schedule > 0
    stats = {
        "n_frames": int(track.n_frames),
        "gated_fraction": float(np.mean(gated_on)) if len(schedule) else 0.0,
        "mean_abs_boost_db": float(np.mean(np.abs(boost_db))) if boost_db.size else 0.0,
        "max_boost_db": float(np.max(boost_db)) if boost_db.size else 0.0,
        "min_boost_db": float(np.min(boost_db)) if boost_db.size else 0.0,
    }
    return ProcessResult(istft(enhanced), snr, schedule, stats)


def enhance_ungated(
    mixture: AudioBuffer, params: SceParams, config: StftConfig | None = None
) -> ProcessResult:
    """Enhance every frame with the full scale s."""
    config = config or StftConfig()
    n = config.n_frames(len(mixture))
    return _run(mixture, params, np.full(n, float(params.s)), None, config)


def enhance_with_isnr(
    target: AudioBuffer,
    masker: AudioBuffer,
    params: SceParams,
    gate: GateConfig | None = None,
    config: StftConfig | None = None,
) -> ProcessResult:
    """Ideal-SNR gating from aligned stems; the mixture is their sum."""
    config = config or StftConfig()
    if len(target) != len(masker) or target.sample_rate_hz != masker.sample_rate_hz:
        raise AlignmentError("stems must be aligned (same length and rate)")
    mixture = AudioBuffer(target.samples + masker.samples, target.sample_rate_hz)
    snr = isnr_track(target, masker, config)
    schedule = schedule_from_snr(snr, params.s, gate)
    result = _run(mixture, params, schedule, snr, config)
    active = speech_active_frames(target, config)
    if np.any(active):
        result.stats["gated_fraction_active"] = float(np.mean(schedule[active] > 0))
    return result


def enhance_with_esnr(
    mixture: AudioBuffer,
    params: SceParams,
    gate: GateConfig | None = None,
    config: StftConfig | None = None,
    ecfg: EsnrConfig | None = None,
) -> ProcessResult:
    """Blind-estimate gating from the mixture alone."""
    config = config or StftConfig()
    snr = esnr_track(mixture, config, ecfg)
    schedule = schedule_from_snr(snr, params.s, gate)
    return _run(mixture, params, schedule, snr, config)
