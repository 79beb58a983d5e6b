"""Genetic-algorithm selection of enhancement parameters.

The search runs over discrete per-parameter grids.  Fitness is pluggable:
an objective log-spectral-distance proxy for automated runs, or
round-robin paired comparisons for human-in-the-loop sessions where wins
count as fitness.  Everything is driven by one seeded generator, so a
(seed, config, fitness trace) triple fully determines the outcome.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .audio import AudioBuffer, StftConfig, frame_signal, stft
from .enhance import SceParams
from .errors import AlignmentError, ConfigurationError, SessionTimeout

LSD_MAG_FLOOR = 1e-5  # -100 dB; keeps log spectra finite
ACTIVITY_FLOOR_DB = -35.0


def _grid(lo: float, hi: float, step: float) -> tuple:
    n = int(round((hi - lo) / step)) + 1
    return tuple(round(lo + i * step, 6) for i in range(n))


@dataclass(frozen=True)
class ParameterGrid:
    """Legal values per gene, in search order (b, xi, m, s)."""

    b_values: tuple = _grid(0.5, 3.0, 0.5)
    xi_values: tuple = (0.8, 0.9)
    m_values: tuple = (5, 6)
    s_values: tuple = _grid(1.0, 5.0, 0.5)

    @classmethod
    def experiment_ii(cls) -> "ParameterGrid":
        """Reduced grid with the history parameters pinned (xi=0.9, m=5)."""
        return cls(xi_values=(0.9,), m_values=(5,))

    @property
    def axes(self) -> tuple:
        return (self.b_values, self.xi_values, self.m_values, self.s_values)

    @property
    def shape(self) -> tuple:
        return tuple(len(a) for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def params(self, genome: "Genome") -> SceParams:
        return SceParams(
            b=self.b_values[genome.b_idx],
            xi=self.xi_values[genome.xi_idx],
            m=self.m_values[genome.m_idx],
            s=self.s_values[genome.s_idx],
        )

    def validate(self, genome: "Genome") -> None:
        for idx, axis in zip(genome.as_tuple(), self.axes):
            if not 0 <= idx < len(axis):
                raise ConfigurationError(f"genome {genome} is off the grid")


@dataclass(frozen=True, order=True)
class Genome:
    """Indices into the four parameter grids."""

    b_idx: int
    xi_idx: int
    m_idx: int
    s_idx: int

    def as_tuple(self) -> tuple:
        return (self.b_idx, self.xi_idx, self.m_idx, self.s_idx)

    @classmethod
    def from_tuple(cls, t: Sequence[int]) -> "Genome":
        return cls(*(int(v) for v in t))


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 8
    elite_count: int = 1
    mutation_rate: float = 0.15
    max_generations: int = 15
    convergence_patience: int = 3
    rng_seed: int = 0

    def __post_init__(self):
        if self.population_size < 4:
            raise ConfigurationError("population_size must be at least 4")
        if not 0 <= self.elite_count < self.population_size:
            raise ConfigurationError("elite_count must be smaller than the population")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ConfigurationError("mutation_rate must lie in [0, 1]")


def init_population(
    grid: ParameterGrid, cfg: GaConfig, rng: np.random.Generator | None = None
) -> list[Genome]:
    """Duplicate-free uniform draw over the grid; deterministic given seed."""
    rng = rng if rng is not None else np.random.default_rng(cfg.rng_seed)
    if grid.size < cfg.population_size:
        raise ConfigurationError(
            f"grid has {grid.size} points, population needs {cfg.population_size}"
        )
    flat = rng.choice(grid.size, size=cfg.population_size, replace=False)
    return [Genome.from_tuple(np.unravel_index(i, grid.shape)) for i in flat]


def _best_index(scores: Sequence[float]) -> int:
    """Highest score; ties go to the earlier slot."""
    return int(np.argmax(scores))


def _tournament(
    population: list[Genome], scores: Sequence[float], rng: np.random.Generator
) -> Genome:
    i, j = rng.integers(len(population), size=2)
    if (scores[j], -j) > (scores[i], -i):
        return population[j]
    return population[i]


def _mutate(genome: Genome, grid: ParameterGrid, rate: float, rng: np.random.Generator) -> Genome:
    idx = list(genome.as_tuple())
    for g, axis in enumerate(grid.axes):
        if len(axis) < 2:
            continue
        if rng.random() < rate:
            neighbors = [v for v in (idx[g] - 1, idx[g] + 1) if 0 <= v < len(axis)]
            idx[g] = int(neighbors[rng.integers(len(neighbors))])
    return Genome.from_tuple(idx)


def evolve_generation(
    population: list[Genome],
    scores: Sequence[float],
    grid: ParameterGrid,
    cfg: GaConfig,
    rng: np.random.Generator,
) -> list[Genome]:
    """Elites survive; the rest come from tournament + crossover + mutation."""
    if len(scores) != len(population):
        raise ConfigurationError("need one score per genome")
    order = sorted(range(len(population)), key=lambda i: (-scores[i], i))
    nxt = [population[i] for i in order[: cfg.elite_count]]
    while len(nxt) < cfg.population_size:
        a = _tournament(population, scores, rng)
        b = _tournament(population, scores, rng)
        point = int(rng.integers(1, 4))
        child = Genome.from_tuple(a.as_tuple()[:point] + b.as_tuple()[point:])
        nxt.append(_mutate(child, grid, cfg.mutation_rate, rng))
    return nxt


@dataclass
class GenerationRecord:
    generation: int
    genomes: list[Genome]
    scores: list[float]
    elite: Genome
    elite_score: float

    def to_dict(self, grid: ParameterGrid) -> dict:
        return {
            "generation": self.generation,
            "genomes": [grid.params(g).to_dict() for g in self.genomes],
            "scores": self.scores,
            "elite": grid.params(self.elite).to_dict(),
            "elite_score": self.elite_score,
        }


@dataclass
class GaResult:
    best: Genome
    best_params: SceParams
    history: list[GenerationRecord]
    converged: bool

    def history_json(self, grid: ParameterGrid) -> str:
        return json.dumps(
            {
                "converged": self.converged,
                "best": self.best_params.to_dict(),
                "generations": [rec.to_dict(grid) for rec in self.history],
            },
            indent=2,
        )


def run_ga(
    evaluate: Callable[[list[Genome]], Sequence[float]],
    grid: ParameterGrid,
    cfg: GaConfig,
) -> GaResult:
    """Evaluate/evolve until the elite stops changing or generations run out.

    `evaluate` returns one score per genome (higher is better).  In
    judgment-driven sessions it may block on submissions; if it raises
    SessionTimeout the partial history is attached to the exception.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    population = init_population(grid, cfg, rng)
    history: list[GenerationRecord] = []
    previous_elite = None
    stale = 0
    converged = False
    for generation in range(cfg.max_generations):
        try:
            scores = [float(s) for s in evaluate(population)]
        except SessionTimeout as exc:
            raise SessionTimeout(str(exc), history=history) from exc
        if len(scores) != len(population):
            raise ConfigurationError("fitness source returned a short score list")
        best = _best_index(scores)
        record = GenerationRecord(
            generation, list(population), scores, population[best], scores[best]
        )
        history.append(record)
        if record.elite == previous_elite:
            stale += 1
        else:
            stale = 0
            previous_elite = record.elite
        if stale >= cfg.convergence_patience:
            converged = True
            break
        if generation < cfg.max_generations - 1:
            population = evolve_generation(population, scores, grid, cfg, rng)
    final = history[-1]
    return GaResult(final.elite, grid.params(final.elite), history, converged)


class ObjectiveFitness:
    """Adapter from a per-genome score function, with memoization."""

    def __init__(self, score_one: Callable[[Genome], float]):
        self._score_one = score_one
        self._cache: dict[Genome, float] = {}

    def __call__(self, genomes: list[Genome]) -> list[float]:
        out = []
        for g in genomes:
            if g not in self._cache:
                self._cache[g] = float(self._score_one(g))
            out.append(self._cache[g])
        return out


class PairedComparisonFitness:
    """Round-robin paired comparisons; a genome's fitness is its win count.

    `judge(a, b)` returns 0 if the first stimulus won, 1 otherwise.  In
    interactive sessions the judge blocks on the listener's submission.
    """

    def __init__(self, judge: Callable[[Genome, Genome], int]):
        self._judge = judge

    def __call__(self, genomes: list[Genome]) -> list[float]:
        wins = [0.0] * len(genomes)
        for i, j in combinations(range(len(genomes)), 2):
            winner = self._judge(genomes[i], genomes[j])
            if winner not in (0, 1):
                raise ConfigurationError("judge must return 0 or 1")
            wins[i if winner == 0 else j] += 1.0
        return wins


def log_spectral_distance(
    a: AudioBuffer,
    reference: AudioBuffer,
    config: StftConfig | None = None,
    active_mask: np.ndarray | None = None,
) -> float:
    """Mean per-frame RMS distance between dB spectra, active frames only."""
    config = config or StftConfig()
    if len(a) != len(reference):
        raise AlignmentError("signals must have equal length")
    if a.sample_rate_hz != reference.sample_rate_hz:
        raise AlignmentError("signals must share a sample rate")
    la = 20.0 * np.log10(np.maximum(stft(a, config).mags, LSD_MAG_FLOOR))
    lr = 20.0 * np.log10(np.maximum(stft(reference, config).mags, LSD_MAG_FLOOR))
    per_frame = np.sqrt(np.mean(np.square(la - lr), axis=1))
    if active_mask is None:
        active_mask = _active_frames(reference, config)
    if not np.any(active_mask):
        raise ConfigurationError("reference has no active frames")
    return float(np.mean(per_frame[active_mask]))


def _active_frames(reference: AudioBuffer, config: StftConfig) -> np.ndarray:
    win = config.window_samples()
    energy = np.sum(np.square(frame_signal(reference.samples, config) * win), axis=1)
    peak = energy.max()
    return energy >= peak * 10.0 ** (ACTIVITY_FLOOR_DB / 10.0) if peak > 0 else energy > -1


def lsd_fitness(
    processed: AudioBuffer,
    clean: AudioBuffer,
    mixture: AudioBuffer,
    config: StftConfig | None = None,
) -> float:
    """How much processing moved the mixture toward clean; positive is better."""
    config = config or StftConfig()
    mask = _active_frames(clean, config)
    return log_spectral_distance(mixture, clean, config, mask) - log_spectral_distance(
        processed, clean, config, mask
    )
