import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scekit.errors import (
    ConfigurationError,
    InsufficientDataError,
    StateError,
    ValidationError,
)
from scekit.protocols import (
    SimListener,
    StaircaseConfig,
    StaircaseState,
    Trial,
    TrialPlan,
    derive_test_smrs,
    latin_square,
    majority_correct,
    run_simulated_staircase,
    schedule_trials,
    score_mushra,
    score_preference,
    score_si,
    screen_mushra_listener,
    srt_estimate,
    staircase_step,
)


def run_responses(start, responses, n_sentences=None):
    cfg = StaircaseConfig(start, n_sentences=n_sentences or len(responses))
    state = StaircaseState(cfg)
    for ok in responses:
        staircase_step(state, ok)
    return state


class TestStaircase:
    def test_first_correct_drops_4db(self):
        state = run_responses(4.0, [True], n_sentences=5)
        assert state.current_smr_db == 0.0

    def test_fifth_sentence_steps_2db(self):
        state = run_responses(10.0, [True, True, True, True, False], n_sentences=8)
        # four 4-dB descents then one 2-dB ascent
        assert state.smr_history == [10.0, 6.0, 2.0, -2.0, -6.0]
        assert state.current_smr_db == -4.0

    def test_hand_traced_run(self):
        # C,C,I,C,I,C,I,C from +4 dB: traced by hand against the rule table.
        state = run_responses(4.0, [True, True, False, True, False, True, False, True])
        assert state.smr_history == [4.0, 0.0, -4.0, 0.0, -4.0, -2.0, -4.0, -2.0]
        assert state.reversal_smrs == [-4.0, 0.0, -4.0, -2.0, -4.0, -2.0]
        assert srt_estimate(state) == pytest.approx(-3.0)

    def test_srt_is_mean_of_last_four_reversals(self):
        state = run_responses(4.0, [True, True, False, True, False, True, False, True])
        state.reversal_smrs = [10.0, 2.0, -2.0, 0.0, -2.0]
        assert srt_estimate(state) == pytest.approx((2.0 - 2.0 + 0.0 - 2.0) / 4)

    def test_insufficient_reversals(self):
        state = run_responses(4.0, [True, True, True])
        with pytest.raises(InsufficientDataError):
            srt_estimate(state)

    def test_finished_staircase_rejects_steps(self):
        state = run_responses(4.0, [True, True])
        assert state.finished
        with pytest.raises(StateError):
            staircase_step(state, True)

    def test_reversal_quota_finishes_early(self):
        cfg = StaircaseConfig(4.0, n_sentences=50, reversal_quota=4)
        state = StaircaseState(cfg)
        flips = [True, True, False, True, False, True, False, True, False, True]
        i = 0
        while not state.finished:
            staircase_step(state, flips[i % len(flips)])
            i += 1
        assert state.final_stage_reversals >= 4
        assert state.sentences_presented < 50

    @given(st.lists(st.booleans(), min_size=6, max_size=30))
    @settings(max_examples=60, deadline=None)
    def test_only_legal_step_sizes_occur(self, responses):
        state = run_responses(0.0, responses)
        trail = state.smr_history + [state.current_smr_db]
        steps = np.abs(np.diff(trail))
        assert np.all(steps[:4] == 4.0)
        assert np.all(steps[4:] == 2.0)

    @given(st.lists(st.booleans(), min_size=8, max_size=20))
    @settings(max_examples=40, deadline=None)
    def test_estimate_invariant_to_nonreversal_suffix(self, responses):
        state = run_responses(6.0, responses, n_sentences=100)
        if len(state.reversal_smrs) < 4:
            return
        before = srt_estimate(state)
        last = state.direction == "down"
        for _ in range(5):  # repeating the same answer never adds a reversal
            staircase_step(state, last)
        assert srt_estimate(state) == before


class TestSimListener:
    def test_midpoint_probability(self):
        listener = SimListener(srt_true_db=-3.0, slope_per_db=1.0)
        assert listener.keyword_probability(-3.0) == pytest.approx(0.5)

    def test_saturation(self):
        listener = SimListener(srt_true_db=0.0, slope_per_db=1.0, rng_seed=1)
        assert listener.simulate_response(60.0) == 10
        assert listener.simulate_response(-60.0) == 0

    def test_monte_carlo_matches_closed_form(self):
        listener = SimListener(srt_true_db=0.0, slope_per_db=1.0, rng_seed=2)
        draws = [listener.simulate_response(2.0) for _ in range(10_000)]
        expected = 10.0 / (1.0 + np.exp(-2.0))
        assert np.mean(draws) == pytest.approx(expected, abs=0.1)

    def test_bad_slope_rejected(self):
        with pytest.raises(ValidationError):
            SimListener(srt_true_db=0.0, slope_per_db=0.0)

    def test_simulated_staircase_converges(self):
        biases = []
        for seed in range(20):
            listener = SimListener(srt_true_db=-4.0, slope_per_db=1.0, rng_seed=seed)
            state = run_simulated_staircase(listener, StaircaseConfig(start_smr_db=8.0))
            biases.append(srt_estimate(state) - listener.srt_true_db)
        assert abs(np.mean(biases)) < 1.5


class TestScoring:
    def test_majority_rule(self):
        assert majority_correct(6)
        assert not majority_correct(5)

    def test_derive_test_smrs(self):
        assert derive_test_smrs(-3.0) == {"smr_h": -2.0, "smr_l": -5.0}
        assert derive_test_smrs(0.0) == {"smr_h": 1.0, "smr_l": -2.0}

    @given(st.floats(min_value=-40, max_value=40))
    def test_smr_offsets_differ_by_3(self, srt):
        smrs = derive_test_smrs(srt)
        assert smrs["smr_h"] - smrs["smr_l"] == pytest.approx(3.0)

    def test_score_si(self):
        assert score_si([10] * 4) == 100.0
        assert score_si([0] * 4) == 0.0
        assert score_si([5, 7, 8, 10]) == pytest.approx(75.0)

    def test_score_si_range_check(self):
        with pytest.raises(ValidationError):
            score_si([11])


class TestScheduling:
    def _plan(self, ordering="latin_square"):
        conditions = ("ssn_h", "ssn_l", "sts_h", "sts_l")
        sentences = {c: tuple(f"{c}_s{i}" for i in range(3)) for c in conditions}
        return TrialPlan(conditions, sentences, ordering=ordering)

    def test_latin_square_is_balanced(self):
        square = latin_square(4)
        for pos in range(4):
            assert sorted(row[pos] for row in square) == [0, 1, 2, 3]

    def test_schedule_balance_over_subjects(self):
        trials = schedule_trials(self._plan(), seed=0)
        seen = {}
        for t in trials:
            seen.setdefault((t.subject, t.position), set()).add(t.condition)
        counts = {}
        for (subj, pos), conds in seen.items():
            for c in conds:
                counts[(pos, c)] = counts.get((pos, c), 0) + 1
        assert all(v == 1 for v in counts.values())

    def test_deterministic(self):
        assert schedule_trials(self._plan(), seed=5) == schedule_trials(self._plan(), seed=5)

    def test_intervals_are_permutations(self):
        for t in schedule_trials(self._plan(), seed=1):
            assert sorted(t.intervals) == sorted(self._plan().processing_types)
            assert t.isi_ms == 500.0

    def test_missing_sentences_rejected(self):
        with pytest.raises(ConfigurationError):
            TrialPlan(("a", "b"), {"a": ("s1",), "b": ()})


class TestPreferenceAndMushra:
    def test_unanimous_preference(self):
        responses = [("cond", "A")] * 10
        out = score_preference(responses, ("A", "B", "C"))
        assert out["cond"] == {"A": 100.0, "B": 0.0, "C": 0.0}

    def test_even_split(self):
        responses = [("c", p) for p in ("A", "B", "C") for _ in range(6)]
        out = score_preference(responses, ("A", "B", "C"))
        assert all(v == pytest.approx(100.0 / 3) for v in out["c"].values())

    def test_sums_to_100(self):
        rng = np.random.default_rng(3)
        kinds = ("A", "B", "C")
        responses = [("c1", kinds[rng.integers(3)]) for _ in range(37)]
        out = score_preference(responses, kinds)
        assert sum(out["c1"].values()) == pytest.approx(100.0)

    def test_mushra_single_rating(self):
        out = score_mushra([("c", "ref", 80.0)])
        score = out[("c", "ref")]
        assert score.mean == 80.0 and score.se == 0.0 and score.n == 1

    def test_mushra_mean(self):
        out = score_mushra([("c", "x", 60.0), ("c", "x", 80.0)])
        assert out[("c", "x")].mean == pytest.approx(70.0)

    def test_mushra_range_check(self):
        with pytest.raises(ValidationError):
            score_mushra([("c", "x", 101.0)])

    def test_reference_screening(self):
        bad = [("c", "reference", 95.0)] * 16 + [("c", "reference", 50.0)] * 4
        assert screen_mushra_listener(bad)["flagged"]
        # 15% exactly is not "more than 15%"
        edge = [("c", "reference", 95.0)] * 17 + [("c", "reference", 50.0)] * 3
        assert not screen_mushra_listener(edge)["flagged"]

    def test_csv_summaries(self, tmp_path):
        from scekit.protocols import mushra_to_csv, preference_to_csv

        pref = score_preference([("c", "A"), ("c", "B")], ("A", "B"))
        pref_path = tmp_path / "pref.csv"
        preference_to_csv(pref, pref_path)
        lines = pref_path.read_text().strip().splitlines()
        assert lines[0] == "condition,processing_type,percent_selected"
        assert len(lines) == 3

        scores = score_mushra([("c", "ref", 90.0), ("c", "ref", 80.0)])
        mushra_path = tmp_path / "mushra.csv"
        mushra_to_csv(scores, mushra_path)
        assert "c,ref,85.000000" in mushra_path.read_text()
