"""Psychoacoustic procedure engines.

Covers the adaptive speech-reception-threshold staircase (4 dB steps for
the first four sentences, then 2 dB; SRT is the mean of the last four
turn points), keyword scoring, trial scheduling for preference and
MUSHRA sessions, and a simulated listener with a logistic psychometric
function for desk-scale validation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from statistics import mean
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    InsufficientDataError,
    StateError,
    ValidationError,
)

KEYWORDS_PER_SENTENCE = 10
SMR_HIGH_OFFSET_DB = 1.0
SMR_LOW_OFFSET_DB = -2.0
DEFAULT_ISI_MS = 500.0

# MUSHRA-convention validity screen: a listener rating the hidden
# reference below 90 in more than 15% of trials is flagged.
MUSHRA_REFERENCE_FLOOR = 90.0
MUSHRA_FLAG_FRACTION = 0.15


@dataclass(frozen=True)
class StaircaseConfig:
    start_smr_db: float
    n_sentences: int = 20
    initial_step_db: float = 4.0
    final_step_db: float = 2.0
    initial_sentences: int = 4
    reversal_quota: int | None = None

    def __post_init__(self):
        if self.n_sentences < 1:
            raise ConfigurationError("need at least one sentence")
        if self.initial_step_db <= 0 or self.final_step_db <= 0:
            raise ConfigurationError("step sizes must be positive")


@dataclass
class StaircaseState:
    """Mutable state of one adaptive track."""

    config: StaircaseConfig
    current_smr_db: float = field(init=False)
    sentences_presented: int = 0
    reversal_smrs: list = field(default_factory=list)
    reversal_stages: list = field(default_factory=list)
    direction: str = "none"
    finished: bool = False
    smr_history: list = field(default_factory=list)

    def __post_init__(self):
        self.current_smr_db = self.config.start_smr_db

    @property
    def step_db(self) -> float:
        """Step applied to the next response."""
        if self.sentences_presented < self.config.initial_sentences:
            return self.config.initial_step_db
        return self.config.final_step_db

    @property
    def final_stage_reversals(self) -> int:
        return sum(1 for s in self.reversal_stages if s == "final")


def staircase_step(state: StaircaseState, majority_correct: bool) -> StaircaseState:
    """Advance the track by one sentence's response.

    Correct-majority moves the SMR down, otherwise up; a direction change
    records the pre-move SMR as a turn point.
    """
    if state.finished:
        raise StateError("staircase already finished")
    step = state.step_db
    stage = (
        "initial"
        if state.sentences_presented < state.config.initial_sentences
        else "final"
    )
    new_direction = "down" if majority_correct else "up"
    if state.direction != "none" and new_direction != state.direction:
        state.reversal_smrs.append(state.current_smr_db)
        state.reversal_stages.append(stage)
    state.direction = new_direction
    state.smr_history.append(state.current_smr_db)
    state.current_smr_db += -step if majority_correct else step
    state.sentences_presented += 1

    quota = state.config.reversal_quota
    if state.sentences_presented >= state.config.n_sentences:
        state.finished = True
    elif quota is not None and state.final_stage_reversals >= quota:
        state.finished = True
    return state


def srt_estimate(state: StaircaseState) -> float:
    """Mean of the last four turn-point SMRs."""
    if len(state.reversal_smrs) < 4:
        raise InsufficientDataError(
            f"only {len(state.reversal_smrs)} turn points; need 4"
        )
    return mean(state.reversal_smrs[-4:])


@dataclass
class SimListener:
    """Logistic stand-in for a human subject; seeded and reproducible."""

    srt_true_db: float
    slope_per_db: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.slope_per_db <= 0:
            raise ValidationError("psychometric slope must be positive")
        self._rng = np.random.default_rng(self.rng_seed)

    def keyword_probability(self, smr_db: float) -> float:
        return 1.0 / (1.0 + np.exp(-self.slope_per_db * (smr_db - self.srt_true_db)))

    def simulate_response(self, smr_db: float, n_keywords: int = KEYWORDS_PER_SENTENCE) -> int:
        """Number of keywords repeated correctly, each an independent draw."""
        return int(self._rng.binomial(n_keywords, self.keyword_probability(smr_db)))


def majority_correct(n_correct: int, n_keywords: int = KEYWORDS_PER_SENTENCE) -> bool:
    """Strictly more than half the keywords."""
    return 2 * n_correct > n_keywords


def run_simulated_staircase(
    listener: SimListener, config: StaircaseConfig
) -> StaircaseState:
    state = StaircaseState(config)
    while not state.finished:
        n_correct = listener.simulate_response(state.current_smr_db)
        staircase_step(state, majority_correct(n_correct))
    return state


def derive_test_smrs(srt_db: float) -> dict:
    """The two presentation SMRs used after threshold measurement."""
    if not np.isfinite(srt_db):
        raise ValidationError("SRT must be finite")
    return {"smr_h": srt_db + SMR_HIGH_OFFSET_DB, "smr_l": srt_db + SMR_LOW_OFFSET_DB}


def score_si(responses: Sequence[int], n_keywords: int = KEYWORDS_PER_SENTENCE) -> float:
    """Percent keywords correct over a block of sentences."""
    if len(responses) == 0:
        raise ValidationError("no responses to score")
    for c in responses:
        if not 0 <= c <= n_keywords:
            raise ValidationError(f"keyword count {c} outside [0, {n_keywords}]")
    return 100.0 * sum(responses) / (n_keywords * len(responses))


@dataclass(frozen=True)
class TrialPlan:
    conditions: tuple
    sentences: dict
    processing_types: tuple = ("unprocessed", "enhanced", "enhanced_gated")
    ordering: str = "latin_square"
    isi_ms: float = DEFAULT_ISI_MS

    def __post_init__(self):
        if self.ordering not in ("latin_square", "random"):
            raise ConfigurationError(f"unknown ordering {self.ordering!r}")
        for cond in self.conditions:
            if not self.sentences.get(cond):
                raise ConfigurationError(f"condition {cond!r} has no sentences")


@dataclass(frozen=True)
class Trial:
    subject: int
    position: int
    condition: object
    sentence: object
    intervals: tuple
    isi_ms: float


def latin_square(n: int) -> list[list[int]]:
    """Cyclic n x n square: every symbol once per row and column."""
    return [[(i + j) % n for j in range(n)] for i in range(n)]


def schedule_trials(plan: TrialPlan, seed: int, n_subjects: int | None = None) -> list[Trial]:
    """Expand a plan into presentation-ready trials.

    Condition order per subject follows the plan's ordering mode; the
    processing types of every trial are assigned to intervals by a seeded
    random permutation.
    """
    rng = np.random.default_rng(seed)
    k = len(plan.conditions)
    n_subjects = n_subjects if n_subjects is not None else k
    square = latin_square(k)
    trials = []
    for subj in range(n_subjects):
        if plan.ordering == "latin_square":
            order = [plan.conditions[c] for c in square[subj % k]]
        else:
            order = [plan.conditions[c] for c in rng.permutation(k)]
        for pos, cond in enumerate(order):
            for sentence in plan.sentences[cond]:
                intervals = tuple(
                    plan.processing_types[i]
                    for i in rng.permutation(len(plan.processing_types))
                )
                trials.append(Trial(subj, pos, cond, sentence, intervals, plan.isi_ms))
    return trials


def score_preference(
    responses: Iterable[tuple], processing_types: Sequence[str]
) -> dict:
    """Selection percentages per condition; each condition sums to 100."""
    tallies: dict = {}
    for condition, chosen in responses:
        if chosen not in processing_types:
            raise ValidationError(f"unknown processing type {chosen!r}")
        tallies.setdefault(condition, {p: 0 for p in processing_types})[chosen] += 1
    out = {}
    for condition, counts in tallies.items():
        total = sum(counts.values())
        out[condition] = {p: 100.0 * c / total for p, c in counts.items()}
    return out


@dataclass
class MushraScore:
    mean: float
    se: float
    n: int


def score_mushra(ratings: Iterable[tuple]) -> dict:
    """Mean and standard error per (condition, stimulus label).

    Hidden-reference and anchor labels come through like any other label so
    they can be screened separately.  A single rating reports SE 0 with
    n = 1 as the flag.
    """
    groups: dict = {}
    for condition, label, rating in ratings:
        if not 0.0 <= rating <= 100.0:
            raise ValidationError(f"rating {rating} outside [0, 100]")
        groups.setdefault((condition, label), []).append(float(rating))
    out = {}
    for key, vals in groups.items():
        n = len(vals)
        se = float(np.std(vals, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        out[key] = MushraScore(float(np.mean(vals)), se, n)
    return out


def screen_mushra_listener(
    ratings: Iterable[tuple], reference_label: str = "reference"
) -> dict:
    """Validity screen on hidden-reference ratings; flags careless listeners."""
    ref = [r for _, label, r in ratings if label == reference_label]
    if not ref:
        raise ValidationError("no hidden-reference ratings present")
    low = sum(1 for r in ref if r < MUSHRA_REFERENCE_FLOOR)
    fraction = low / len(ref)
    return {"fraction_below": fraction, "flagged": fraction > MUSHRA_FLAG_FRACTION}


def preference_to_csv(percentages: dict, path) -> None:
    """Write per-condition selection percentages as a flat CSV summary."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["condition", "processing_type", "percent_selected"])
        for condition, by_type in percentages.items():
            for ptype, pct in by_type.items():
                writer.writerow([condition, ptype, f"{pct:.6f}"])


def mushra_to_csv(scores: dict, path) -> None:
    """Write per-(condition, label) MUSHRA means and standard errors."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["condition", "label", "mean", "se", "n"])
        for (condition, label), s in sorted(scores.items()):
            writer.writerow([condition, label, f"{s.mean:.6f}", f"{s.se:.6f}", s.n])
