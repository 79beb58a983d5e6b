import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scekit.audio import AudioBuffer, FrameSpectrum, StftConfig, interior_slice
from scekit.auditory import (
    Audiogram,
    POWER_FLOOR,
    apply_linear_gain,
    cambridge_gain,
    erb_hz,
    erb_number,
    excitation_pattern,
    freq_of_erb_number,
    roex_weights,
)
from scekit.errors import ConfigurationError, ValidationError

BIN_FREQS = StftConfig().bin_freqs_hz(16000)


def excitation_oracle(mags, freqs):
    """Brute-force roex sum (unit filter weight), scalar math only."""
    out = []
    for c in range(len(freqs)):
        fc = freqs[c]
        if fc <= 0:
            total = mags[c] ** 2
        else:
            p = 4.0 * fc / (24.7 * (4.37 * fc / 1000.0 + 1.0))
            total, wsum = 0.0, 0.0
            for j in range(len(freqs)):
                g = abs(freqs[j] - fc) / fc
                w = (1.0 + p * g) * math.exp(-p * g)
                total += w * mags[j] ** 2
                wsum += w
            total /= wsum
        out.append(10.0 * math.log10(max(total, POWER_FLOOR)))
    return np.array(out)


class TestErbScale:
    def test_values_at_zero(self):
        assert erb_hz(0.0) == pytest.approx(24.7)
        assert erb_number(0.0) == 0.0

    def test_value_at_1khz(self):
        assert erb_hz(1000.0) == pytest.approx(132.639)
        assert erb_number(1000.0) == pytest.approx(15.621, abs=5e-4)

    def test_negative_rejected(self):
        with pytest.raises(ValidationError):
            erb_hz(-1.0)
        with pytest.raises(ValidationError):
            erb_number(-2.0)

    @given(st.floats(min_value=0.0, max_value=20000.0))
    def test_inverse_roundtrip(self, f):
        back = freq_of_erb_number(erb_number(f))
        assert back == pytest.approx(f, rel=1e-6, abs=1e-6)

    def test_monotone_increasing(self):
        f = np.linspace(0, 8000, 200)
        assert np.all(np.diff(erb_hz(f)) > 0)
        assert np.all(np.diff(erb_number(f)) > 0)


class TestExcitationPattern:
    def test_flat_spectrum_stays_flat_away_from_edges(self):
        spec = FrameSpectrum(np.ones(129), np.zeros(129))
        pat = excitation_pattern(spec, BIN_FREQS)
        mid = pat.level_db[4:121]
        assert mid.max() - mid.min() < 0.5

    def test_tone_peak_location_preserved(self):
        mags = np.full(129, 1e-4)
        mags[16] = 1.0
        pat = excitation_pattern(FrameSpectrum(mags, np.zeros(129)), BIN_FREQS)
        assert np.argmax(pat.level_db) == 16

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(5):
            mags = rng.uniform(1e-3, 1.0, size=129)
            pat = excitation_pattern(FrameSpectrum(mags, np.zeros(129)), BIN_FREQS)
            assert np.max(np.abs(pat.level_db - excitation_oracle(mags, BIN_FREQS))) < 1e-9

    @given(st.floats(min_value=1e-3, max_value=1e3))
    @settings(max_examples=30, deadline=None)
    def test_power_scaling_shifts_levels_exactly(self, c):
        rng = np.random.default_rng(7)
        mags = rng.uniform(0.01, 1.0, size=129)
        base = excitation_pattern(FrameSpectrum(mags, np.zeros(129)), BIN_FREQS)
        scaled = excitation_pattern(
            FrameSpectrum(mags * np.sqrt(c), np.zeros(129)), BIN_FREQS
        )
        shift = 10.0 * np.log10(c)
        assert np.allclose(scaled.level_db - base.level_db, shift, atol=1e-9)

    def test_weight_matrix_rowcount(self):
        w = roex_weights(BIN_FREQS)
        assert w.shape == (129, 129)
        assert w[0, 0] == 1.0 and np.all(w[0, 1:] == 0.0)


class TestCambridge:
    def test_zero_loss_zero_gain(self):
        ag = Audiogram(((250.0, 0.0), (8000.0, 0.0)))
        assert np.allclose(cambridge_gain(ag, BIN_FREQS), 0.0)

    def test_flat_50_gives_24(self):
        ag = Audiogram(((250.0, 50.0), (8000.0, 50.0)))
        assert np.allclose(cambridge_gain(ag, [1000.0]), 24.0)

    def test_log_frequency_midpoint(self):
        # 1000 Hz sits at the log-frequency midpoint of 500 and 2000 Hz.
        ag = Audiogram(((500.0, 40.0), (2000.0, 60.0)))
        assert cambridge_gain(ag, [1000.0])[0] == pytest.approx(0.48 * 50.0)

    def test_endpoint_clamping(self):
        ag = Audiogram(((500.0, 40.0), (2000.0, 60.0)))
        gains = cambridge_gain(ag, [0.0, 100.0, 7999.0])
        assert gains[0] == pytest.approx(0.48 * 40.0)
        assert gains[1] == pytest.approx(0.48 * 40.0)
        assert gains[2] == pytest.approx(0.48 * 60.0)

    def test_needs_two_points(self):
        with pytest.raises(ConfigurationError):
            Audiogram(((1000.0, 30.0),))

    @given(st.floats(min_value=0.0, max_value=60.0))
    @settings(max_examples=25, deadline=None)
    def test_monotone_in_hl(self, extra):
        lo = Audiogram(((500.0, 20.0), (4000.0, 30.0)))
        hi = Audiogram(((500.0, 20.0 + extra), (4000.0, 30.0 + extra)))
        assert np.all(cambridge_gain(hi, BIN_FREQS) >= cambridge_gain(lo, BIN_FREQS))

    def test_json_roundtrip(self, tmp_path):
        ag = Audiogram(((500.0, 40.0), (2000.0, 60.0)))
        path = tmp_path / "ag.json"
        ag.to_json(path)
        assert Audiogram.from_json(path) == ag


class TestApplyLinearGain:
    def test_zero_curve_is_transparent(self):
        rng = np.random.default_rng(5)
        buf = AudioBuffer(rng.standard_normal(4000) * 0.05)
        out = apply_linear_gain(buf, np.zeros(129))
        assert np.allclose(out.samples, buf.samples[: len(out)], atol=1e-12)

    def test_flat_6db_doubles_rms(self):
        rng = np.random.default_rng(6)
        buf = AudioBuffer(rng.standard_normal(16000) * 0.05)
        out = apply_linear_gain(buf, np.full(129, 20.0 * np.log10(2.0)))
        sl = interior_slice(StftConfig(), len(out))
        ratio = np.sqrt(np.mean(out.samples[sl] ** 2) / np.mean(buf.samples[sl] ** 2))
        assert ratio == pytest.approx(2.0, rel=0.01)

    def test_highband_gain_leaves_low_tone_alone(self):
        rate = 16000
        t = np.arange(16000) / rate
        buf = AudioBuffer(0.3 * np.sin(2 * np.pi * 1000.0 * t), rate)
        gain = np.where(BIN_FREQS > 4000.0, 20.0, 0.0)
        out = apply_linear_gain(buf, gain)
        sl = interior_slice(StftConfig(), len(out))
        level_change = 20 * np.log10(
            np.sqrt(np.mean(out.samples[sl] ** 2) / np.mean(buf.samples[sl] ** 2))
        )
        assert abs(level_change) < 0.2

    def test_length_mismatch_rejected(self):
        with pytest.raises(ConfigurationError):
            apply_linear_gain(AudioBuffer(np.zeros(512)), np.zeros(64))
