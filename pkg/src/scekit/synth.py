"""Deterministic speech-like test signals.

Real corpora are supplied by the user; benchmarks, demo sessions, and the
test suite need something reproducible with the right gross statistics:
syllabic (3-5 Hz) energy bursts, a harmonic voiced source with formant-ish
resonances, fricative noise bursts, and inter-phrase pauses.
"""

from __future__ import annotations

import numpy as np
from scipy import signal as sp_signal

from .audio import AudioBuffer, DEFAULT_SAMPLE_RATE


def pseudo_speech(
    duration_s: float = 3.0,
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE,
    seed: int = 0,
    f0_hz: float = 120.0,
    syllable_rate_hz: float = 3.5,
    pause_every_s: float = 1.2,
    pause_len_s: float = 0.25,
    rms: float = 0.1,
) -> AudioBuffer:
    """Synthesize a speech-like utterance; deterministic given the seed."""
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate_hz))
    t = np.arange(n) / sample_rate_hz

    # Voiced source: jittered harmonics with a -6 dB/octave tilt.
    voiced = np.zeros(n)
    n_harm = int((0.45 * sample_rate_hz) // f0_hz)
    for k in range(1, n_harm + 1):
        jitter = 1.0 + 0.002 * rng.standard_normal()
        voiced += (1.0 / k) * np.sin(2 * np.pi * k * f0_hz * jitter * t + rng.uniform(0, 2 * np.pi))

    # Two slowly wandering resonances stand in for formants.
    for fc, bw in ((500.0, 120.0), (1800.0, 250.0)):
        wander = fc * (1.0 + 0.15 * np.sin(2 * np.pi * 0.4 * t + rng.uniform(0, 2 * np.pi)))
        carrier = np.sin(2 * np.pi * np.cumsum(wander) / sample_rate_hz)
        voiced += 0.5 * carrier * np.exp(-((t % 0.3) * bw / 50.0))

    # Fricative bursts: high-passed noise gated on for short spans.
    sos = sp_signal.butter(4, 2500.0, btype="highpass", fs=sample_rate_hz, output="sos")
    fric = sp_signal.sosfilt(sos, rng.standard_normal(n))
    burst_gate = (np.sin(2 * np.pi * (syllable_rate_hz / 2.1) * t + 1.3) > 0.88).astype(float)
    mix = voiced + 1.5 * fric * burst_gate + 0.02 * rng.standard_normal(n)

    # Syllabic envelope plus hard pauses.
    envelope = np.clip(np.sin(2 * np.pi * syllable_rate_hz * t + rng.uniform(0, 2 * np.pi)), 0.05, None) ** 1.5
    phrase = np.ones(n)
    pause = int(pause_len_s * sample_rate_hz)
    step = int(pause_every_s * sample_rate_hz)
    for start in range(step, n, step):
        phrase[start : start + pause] = 0.0
    shaped = mix * envelope * phrase

    shaped *= rms / (np.sqrt(np.mean(np.square(shaped))) + 1e-30)
    return AudioBuffer(shaped, sample_rate_hz)


def pseudo_babble(
    duration_s: float = 3.0,
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE,
    n_talkers: int = 6,
    seed: int = 100,
    rms: float = 0.1,
) -> AudioBuffer:
    """Sum of independent pseudo-speech streams; a non-stationary masker."""
    rng = np.random.default_rng(seed)
    total = np.zeros(int(round(duration_s * sample_rate_hz)))
    for k in range(n_talkers):
        talker = pseudo_speech(
            duration_s,
            sample_rate_hz,
            seed=seed + 7 * k + 1,
            f0_hz=float(rng.uniform(90, 220)),
            syllable_rate_hz=float(rng.uniform(2.8, 4.5)),
            pause_every_s=float(rng.uniform(0.9, 1.6)),
        )
        total += talker.samples
    total *= rms / (np.sqrt(np.mean(np.square(total))) + 1e-30)
    return AudioBuffer(total, sample_rate_hz)
