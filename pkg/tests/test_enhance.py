import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scekit.audio import AudioBuffer, FrameSpectrum, StftConfig, istft, stft
from scekit.auditory import excitation_pattern
from scekit.enhance import (
    EnhancementState,
    GAIN_CLAMP_DB,
    SceParams,
    accumulate_gain,
    apply_enhancement,
    dog_kernel,
    dog_taps,
    enhance_track,
    enhancement_function,
    spectral_change,
)
from scekit.errors import AlignmentError, ConfigurationError, ValidationError

BIN_FREQS = StftConfig().bin_freqs_hz(16000)
PARAMS = SceParams(b=1.0, xi=0.9, m=5, s=3.0)


def erb_number_oracle(f):
    return 21.4 * math.log10(4.37 * f / 1000.0 + 1.0)


def enf_oracle(change, width_b, freqs):
    """Independent per-bin weighted sum with its own DoG arithmetic."""
    sigma_c = width_b / 2.0
    sigma_s = 1.6 * sigma_c
    erbs = [erb_number_oracle(f) for f in freqs]
    out = []
    for c in range(len(freqs)):
        center = [math.exp(-((e - erbs[c]) ** 2) / (2 * sigma_c**2)) for e in erbs]
        surround = [math.exp(-((e - erbs[c]) ** 2) / (2 * sigma_s**2)) for e in erbs]
        k = sum(center) / sum(surround)
        taps = [cv - k * sv for cv, sv in zip(center, surround)]
        peak = max(taps)
        out.append(sum(tp / peak * ch for tp, ch in zip(taps, change)))
    return np.array(out)


class TestSceParams:
    def test_validation(self):
        with pytest.raises(ValidationError):
            SceParams(b=0.0, xi=0.9, m=5, s=1.0)
        with pytest.raises(ValidationError):
            SceParams(b=1.0, xi=1.0, m=5, s=1.0)
        with pytest.raises(ValidationError):
            SceParams(b=1.0, xi=0.9, m=0, s=1.0)
        with pytest.raises(ValidationError):
            SceParams(b=1.0, xi=0.9, m=5, s=-0.5)

    def test_json_roundtrip(self, tmp_path):
        path = tmp_path / "p.json"
        PARAMS.to_json(path)
        assert SceParams.from_json(path) == PARAMS


class TestDogKernel:
    def test_taps_symmetric_on_symmetric_grid(self):
        grid = np.linspace(-4, 4, 81)
        taps = dog_taps(2.0, grid)
        assert np.allclose(taps, taps[::-1], atol=1e-12)

    def test_taps_zero_sum_and_unit_peak(self):
        grid = np.linspace(-5, 5, 101)
        taps = dog_taps(1.5, grid)
        assert abs(taps.sum()) < 1e-9
        assert taps.max() == pytest.approx(1.0)

    def test_center_tap_is_maximum(self):
        kernel = dog_kernel(1.0, BIN_FREQS)
        for c in (8, 16, 40, 100):
            assert np.argmax(kernel.weights[c]) == c

    def test_every_row_zero_sum(self):
        kernel = dog_kernel(2.5, BIN_FREQS)
        assert np.max(np.abs(kernel.weights.sum(axis=1))) < 1e-9

    def test_constant_vector_maps_to_zero(self):
        kernel = dog_kernel(1.0, BIN_FREQS)
        out = enhancement_function(np.full(129, 7.3), kernel)
        assert np.max(np.abs(out)) < 1e-9

    def test_wider_b_gives_wider_support_at_1khz(self):
        wide = dog_kernel(3.0, BIN_FREQS)
        narrow = dog_kernel(0.5, BIN_FREQS)
        support = lambda k: int(np.sum(np.abs(k.weights[16]) > 1e-4))
        assert support(wide) > support(narrow)

    def test_nonpositive_width_rejected(self):
        with pytest.raises(ValidationError):
            dog_taps(0.0, np.linspace(-1, 1, 11))

    @given(st.floats(min_value=0.5, max_value=4.0))
    @settings(max_examples=25, deadline=None)
    def test_zero_sum_for_any_width(self, b):
        kernel = dog_kernel(b, BIN_FREQS)
        assert np.max(np.abs(kernel.weights.sum(axis=1))) < 1e-9


class TestSpectralChange:
    def test_identical_frames_give_zero(self):
        mags = np.random.default_rng(0).uniform(0.01, 1, 129)
        pat = excitation_pattern(FrameSpectrum(mags, np.zeros(129)), BIN_FREQS)
        assert np.all(spectral_change(pat, pat) == 0.0)

    def test_broadband_6db_step(self):
        mags = np.random.default_rng(1).uniform(0.01, 1, 129)
        a = excitation_pattern(FrameSpectrum(mags, np.zeros(129)), BIN_FREQS)
        b = excitation_pattern(FrameSpectrum(mags * 2.0, np.zeros(129)), BIN_FREQS)
        change = spectral_change(a, b)
        assert np.allclose(change, 20.0 * np.log10(2.0), atol=1e-9)

    def test_matches_linear_ratio_oracle(self):
        rng = np.random.default_rng(2)
        from scekit.auditory import roex_weights

        w = roex_weights(BIN_FREQS)
        m1 = rng.uniform(0.01, 1, 129)
        m2 = rng.uniform(0.01, 1, 129)
        a = excitation_pattern(FrameSpectrum(m1, np.zeros(129)), BIN_FREQS)
        b = excitation_pattern(FrameSpectrum(m2, np.zeros(129)), BIN_FREQS)
        oracle = 10.0 * np.log10((w @ m2**2) / (w @ m1**2))
        assert np.allclose(spectral_change(a, b), oracle, atol=1e-9)

    def test_bin_mismatch_rejected(self):
        a = excitation_pattern(FrameSpectrum(np.ones(129), np.zeros(129)), BIN_FREQS)
        small = excitation_pattern(
            FrameSpectrum(np.ones(65), np.zeros(65)), BIN_FREQS[:65]
        )
        with pytest.raises(AlignmentError):
            spectral_change(a, small)


class TestEnhancementFunction:
    def test_zero_change_zero_enf(self):
        kernel = dog_kernel(1.0, BIN_FREQS)
        assert np.all(enhancement_function(np.zeros(129), kernel) == 0.0)

    def test_spike_response_shape(self):
        kernel = dog_kernel(1.0, BIN_FREQS)
        change = np.zeros(129)
        change[40] = 1.0
        enf = enhancement_function(change, kernel)
        assert enf[40] > 0
        assert enf[36] < 0 and enf[44] < 0

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(3)
        for b in (0.5, 1.5, 3.0):
            change = rng.uniform(-6, 6, 129)
            kernel = dog_kernel(b, BIN_FREQS)
            got = enhancement_function(change, kernel)
            assert np.max(np.abs(got - enf_oracle(change, b, BIN_FREQS))) < 1e-9


class TestAccumulateGain:
    def test_all_zero(self):
        state = EnhancementState(PARAMS)
        gain = accumulate_gain(state, np.zeros(129))
        assert np.all(gain == 0.0)

    def test_constant_history_returns_constant(self):
        state = EnhancementState(SceParams(b=1, xi=0.9, m=5, s=1))
        for _ in range(7):
            gain = accumulate_gain(state, np.ones(4))
        assert np.allclose(gain, 1.0, atol=1e-12)

    def test_single_pulse_weighted_average(self):
        # xi=0.8, m=5: pulse now, zeros after -> 1 / sum(0.8**i) on entry.
        state = EnhancementState(SceParams(b=1, xi=0.8, m=5, s=1))
        gain = accumulate_gain(state, np.array([1.0]))
        expected = 1.0 / (1 + 0.8 + 0.64 + 0.512 + 0.4096)
        assert gain[0] == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.2975, abs=1e-4)

    def test_pulse_decays_through_history(self):
        state = EnhancementState(SceParams(b=1, xi=0.8, m=5, s=1))
        accumulate_gain(state, np.array([1.0]))
        denom = 1 + 0.8 + 0.64 + 0.512 + 0.4096
        g2 = accumulate_gain(state, np.array([0.0]))
        assert g2[0] == pytest.approx(0.8 / denom, abs=1e-12)

    @given(st.floats(-5, 5), st.floats(-5, 5))
    @settings(max_examples=25, deadline=None)
    def test_linearity_in_history(self, alpha, beta):
        rng = np.random.default_rng(9)
        seq_a = [rng.uniform(-2, 2, 8) for _ in range(6)]
        seq_b = [rng.uniform(-2, 2, 8) for _ in range(6)]
        p = SceParams(b=1, xi=0.85, m=4, s=1)

        def run(seq):
            state = EnhancementState(p)
            for enf in seq:
                out = accumulate_gain(state, enf)
            return out

        combined = run([alpha * a + beta * b for a, b in zip(seq_a, seq_b)])
        expected = alpha * run(seq_a) + beta * run(seq_b)
        assert np.allclose(combined, expected, atol=1e-9)


class TestApplyEnhancement:
    def test_zero_scale_bit_identical(self):
        rng = np.random.default_rng(4)
        spec = FrameSpectrum(rng.uniform(0, 1, 129), rng.uniform(-3, 3, 129))
        out = apply_enhancement(spec, rng.uniform(-10, 10, 129), 0.0)
        assert np.array_equal(out.mag_linear, spec.mag_linear)
        assert np.array_equal(out.phase, spec.phase)

    def test_scaled_gain_in_db(self):
        spec = FrameSpectrum(np.ones(129), np.zeros(129))
        gain = np.zeros(129)
        gain[20] = 2.0
        out = apply_enhancement(spec, gain, 3.0)
        assert out.mag_linear[20] == pytest.approx(10 ** (6.0 / 20.0))

    def test_clamp_at_20db(self):
        spec = FrameSpectrum(np.ones(129), np.zeros(129))
        gain = np.full(129, 30.0)
        out = apply_enhancement(spec, gain, 1.0)
        assert out.mag_linear[64] == pytest.approx(10 ** (GAIN_CLAMP_DB / 20.0))

    def test_dc_and_nyquist_untouched(self):
        spec = FrameSpectrum(np.ones(129), np.zeros(129))
        out = apply_enhancement(spec, np.full(129, 10.0), 1.0)
        assert out.mag_linear[0] == 1.0
        assert out.mag_linear[128] == 1.0
        assert out.mag_linear[64] > 1.0


class TestEnhanceTrack:
    def _noise_track(self, n=4000, seed=0):
        rng = np.random.default_rng(seed)
        return stft(AudioBuffer(rng.standard_normal(n) * 0.1))

    def test_zero_schedule_transparent(self):
        track = self._noise_track()
        out = enhance_track(track, PARAMS, np.zeros(track.n_frames))
        assert np.array_equal(out.mags, track.mags)
        assert np.array_equal(out.phases, track.phases)
        assert np.array_equal(istft(out).samples, istft(track).samples)

    def test_output_phase_equals_input_phase(self):
        track = self._noise_track(seed=1)
        out = enhance_track(track, PARAMS, np.full(track.n_frames, 5.0))
        assert np.array_equal(out.phases, track.phases)

    def test_boost_bounded_by_clamp(self):
        track = self._noise_track(seed=2)
        out = enhance_track(track, PARAMS, np.full(track.n_frames, 5.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            boost = 20.0 * np.log10(out.mags / track.mags)
        boost = boost[np.isfinite(boost)]
        assert np.max(np.abs(boost)) <= GAIN_CLAMP_DB + 1e-9

    def test_broadband_offset_leaves_boost_unchanged(self):
        track = self._noise_track(seed=3)
        schedule = np.full(track.n_frames, 3.0)
        out = enhance_track(track, PARAMS, schedule)
        scaled = track.copy()
        scaled.mags *= 10 ** (7.0 / 20.0)
        out_scaled = enhance_track(scaled, PARAMS, schedule)
        mask = track.mags > 0
        boost_a = out.mags[mask] / track.mags[mask]
        boost_b = out_scaled.mags[mask] / scaled.mags[mask]
        assert np.allclose(boost_a, boost_b, rtol=1e-9)

    def test_determinism(self):
        track = self._noise_track(seed=4)
        schedule = np.full(track.n_frames, 2.0)
        a = enhance_track(track, PARAMS, schedule)
        b = enhance_track(track, PARAMS, schedule)
        assert np.array_equal(a.mags, b.mags)

    def test_onsets_receive_positive_gain(self):
        # Alternating tones: each tone's onset frames should be boosted at
        # its own bin relative to the steady frames that follow.
        rate, cfg = 16000, StftConfig()
        seg = int(0.25 * rate)
        t = np.arange(seg) / rate
        tone_a = 0.3 * np.sin(2 * np.pi * 1000.0 * t)
        tone_b = 0.3 * np.sin(2 * np.pi * 2500.0 * t)
        x = np.concatenate([tone_a, tone_b] * 4)
        track = stft(AudioBuffer(x, rate), cfg)
        params = SceParams(b=1.0, xi=0.9, m=5, s=5.0)
        out = enhance_track(track, params, np.full(track.n_frames, params.s))
        bin_b = int(round(2500 / (rate / cfg.fft_size)))
        frames_per_seg = seg // cfg.hop
        onset = frames_per_seg + 1          # first frames inside the 2.5 kHz segment
        steady = frames_per_seg + frames_per_seg // 2
        boost = lambda f: 20 * np.log10(out.mags[f, bin_b] / track.mags[f, bin_b])
        assert boost(onset) > boost(steady) + 1.0

    def test_schedule_length_mismatch(self):
        track = self._noise_track()
        with pytest.raises(ConfigurationError):
            enhance_track(track, PARAMS, np.zeros(track.n_frames + 1))
