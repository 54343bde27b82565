"""Self-adaptive DE/rand/1/bin.

Each individual carries its own crossover rate and scale factor. After every
generation the means of the pairs that produced successful trials become the
new centres, and every individual draws a fresh pair from a Cauchy
distribution (half-width 0.1) around them, truncated to ``[0, 1]`` for the
crossover rate and ``[0.1, 1]`` for the scale factor. Each generation also
re-initializes a few random individuals, never the current best, to keep
the population diverse.

Randomness comes from a single :class:`numpy.random.Generator` (PCG64)
seeded with ``DeSettings.seed``; the order of draws per generation is fixed
(donors, crossover uniforms, forced indices, Cauchy draws for ``f`` then
``cr``, reinjection indices, reinjected genomes), so a seed fully determines
a run. Fitness evaluation uses no randomness, which is what makes the
optional parallel evaluation path reproduce serial results exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import Executor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "CR_BOUNDS",
    "F_BOUNDS",
    "DeSettings",
    "Individual",
    "Population",
    "RunRecord",
    "initialize_population",
    "pick_donors",
    "mutate",
    "crossover",
    "select",
    "adapt_control_parameters",
    "reinject",
    "evaluate",
    "run",
]

CR_BOUNDS = (0.0, 1.0)
F_BOUNDS = (0.1, 1.0)
GAMMA = 0.1


@dataclass(frozen=True)
class DeSettings:
    population_size: int = 150
    cr0: float = 0.25
    f0: float = 0.6
    gamma: float = GAMMA
    stall_generations: int = 250
    max_generations: int = 2500
    reinjection_count: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 4:
            raise ValueError(
                f"population_size must be >= 4 (three donors plus target), got {self.population_size}"
            )
        if self.stall_generations < 1 or self.max_generations < 1:
            raise ValueError("stall_generations and max_generations must be positive")
        if self.stall_generations > self.max_generations:
            raise ValueError("stall_generations cannot exceed max_generations")
        if not 0 <= self.reinjection_count < self.population_size:
            raise ValueError("reinjection_count must be in [0, population_size)")
        if not CR_BOUNDS[0] <= self.cr0 <= CR_BOUNDS[1]:
            raise ValueError(f"cr0 must lie in {CR_BOUNDS}")
        if not F_BOUNDS[0] <= self.f0 <= F_BOUNDS[1]:
            raise ValueError(f"f0 must lie in {F_BOUNDS}")

    def replace(self, **changes) -> "DeSettings":
        return DeSettings(**{**asdict(self), **changes})


@dataclass
class Individual:
    genome: np.ndarray
    cr: float
    f: float
    fitness: float | None = None

    def __eq__(self, other):
        if not isinstance(other, Individual):
            return NotImplemented
        return (
            np.array_equal(self.genome, other.genome)
            and (self.cr, self.f, self.fitness) == (other.cr, other.f, other.fitness)
        )


@dataclass
class Population:
    """Structure-of-arrays population; ``fitness`` is NaN where not yet evaluated."""

    genomes: np.ndarray
    cr: np.ndarray
    f: np.ndarray
    fitness: np.ndarray

    def __len__(self):
        return self.genomes.shape[0]

    def __getitem__(self, i) -> Individual:
        fit = self.fitness[i]
        return Individual(
            self.genomes[i].copy(), float(self.cr[i]), float(self.f[i]),
            None if np.isnan(fit) else float(fit),
        )

    @property
    def dimension(self) -> int:
        return self.genomes.shape[1]

    def best_index(self) -> int:
        fit = np.where(np.isnan(self.fitness), np.inf, self.fitness)
        return int(np.argmin(fit))

    def copy(self) -> "Population":
        return Population(self.genomes.copy(), self.cr.copy(), self.f.copy(), self.fitness.copy())


def initialize_population(settings: DeSettings, dimension: int, rng: np.random.Generator) -> Population:
    if dimension < 1:
        raise ValueError(f"dimension must be >= 1, got {dimension}")
    n = settings.population_size
    if n < 4:
        raise ValueError(f"population_size must be >= 4, got {n}")
    return Population(
        genomes=-1.0 + 2.0 * rng.random((n, dimension)),
        cr=np.full(n, settings.cr0),
        f=np.full(n, settings.f0),
        fitness=np.full(n, np.nan),
    )


def pick_donors(size: int, targets: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Three donor indices per target, pairwise distinct and different from the target."""
    if size < 4:
        raise ValueError(f"need at least 4 individuals to pick donors, got {size}")
    chosen = np.asarray(targets, dtype=np.int64).reshape(-1, 1)
    for m in range(1, 4):
        # uniform over the size - m indices not yet taken: shift past each taken index in ascending order
        u = rng.integers(0, size - m, size=chosen.shape[0])
        for taken in np.sort(chosen, axis=1).T:
            u += u >= taken
        chosen = np.column_stack([chosen, u])
    return chosen[:, 1:]


def mutate(target_index: int, genomes: np.ndarray, f: float, rng: np.random.Generator,
           donors=None) -> np.ndarray:
    """``x_r1 + f * (x_r2 - x_r3)``; pass ``donors`` to fix ``(r1, r2, r3)``."""
    if donors is None:
        donors = pick_donors(len(genomes), np.array([target_index]), rng)[0]
    r1, r2, r3 = donors
    if len({target_index, r1, r2, r3}) != 4:
        raise ValueError("donors must be distinct from each other and from the target")
    return genomes[r1] + f * (genomes[r2] - genomes[r3])


def crossover(target: np.ndarray, mutant: np.ndarray, cr, rng: np.random.Generator) -> np.ndarray:
    """Binomial crossover with one forced mutant position.

    Works on single vectors or on stacks of shape ``(n, D)`` with one ``cr``
    per row.
    """
    target = np.asarray(target, dtype=float)
    mutant = np.asarray(mutant, dtype=float)
    if target.shape != mutant.shape:
        raise ValueError(f"dimension mismatch: {target.shape} vs {mutant.shape}")
    single = target.ndim == 1
    t2, m2 = np.atleast_2d(target), np.atleast_2d(mutant)
    n, d = t2.shape
    cr = np.broadcast_to(np.asarray(cr, dtype=float), (n,))
    take = rng.random((n, d)) <= cr[:, None]
    forced = rng.integers(0, d, size=n)
    take[np.arange(n), forced] = True
    trial = np.where(take, m2, t2)
    return trial[0] if single else trial


def select(target: Individual, trial_genome, trial_fitness: float,
           trial_cr: float | None = None, trial_f: float | None = None) -> tuple[Individual, bool]:
    """Greedy one-to-one selection; ties go to the trial."""
    if target.fitness is None:
        raise ValueError("target has not been evaluated")
    if _clean(trial_fitness) <= target.fitness:
        cr = target.cr if trial_cr is None else trial_cr
        f = target.f if trial_f is None else trial_f
        return Individual(np.array(trial_genome, dtype=float), cr, f, _clean(trial_fitness)), True
    return target, False


def adapt_control_parameters(successful_cr, successful_f, previous_averages, population: Population,
                             rng: np.random.Generator, gamma: float = GAMMA):
    """Re-centre on the successful pairs and redraw every individual's ``(cr, f)``.

    Returns the new ``(cr_avg, f_avg)``; ``population`` is updated in place.
    """
    cr_avg, f_avg = previous_averages
    if len(successful_f):
        f_avg = float(np.mean(successful_f))
        cr_avg = float(np.mean(successful_cr))
    n = len(population)
    population.f = np.clip(f_avg + _cauchy(rng, gamma, n), *F_BOUNDS)
    population.cr = np.clip(cr_avg + _cauchy(rng, gamma, n), *CR_BOUNDS)
    return cr_avg, f_avg


def _cauchy(rng, gamma, n):
    # inverse CDF; out-of-range results are truncated by the caller, not resampled
    return gamma * np.tan(np.pi * (rng.random(n) - 0.5))


def reinject(population: Population, count: int, rng: np.random.Generator,
             averages: tuple[float, float] | None = None) -> np.ndarray:
    """Re-initialize ``count`` distinct non-best individuals in place.

    They get fresh genomes in ``[-1, 1]``, the current ``(cr_avg, f_avg)``
    (``averages``) and an unset fitness. Returns the replaced indices.
    """
    n = len(population)
    if not 0 <= count < n:
        raise ValueError(f"reinjection count must be in [0, {n}), got {count}")
    if count == 0:
        return np.array([], dtype=int)
    best = population.best_index()
    candidates = np.delete(np.arange(n), best)
    chosen = np.sort(rng.choice(candidates, size=count, replace=False))
    population.genomes[chosen] = -1.0 + 2.0 * rng.random((count, population.dimension))
    if averages is not None:
        cr_avg, f_avg = averages
        population.cr[chosen] = cr_avg
        population.f[chosen] = f_avg
    population.fitness[chosen] = np.nan
    return chosen


def _clean(value) -> float:
    value = float(value)
    return math.inf if math.isnan(value) else value


def evaluate(fitness: Callable, genomes: np.ndarray, executor: Executor | None = None,
             chunks: int = 4) -> np.ndarray:
    """Score a stack of genomes; NaN scores become ``+inf``.

    Evaluators exposing ``evaluate_batch`` are called once per stack (or per
    chunk when an executor is given); plain callables once per genome.
    """
    genomes = np.atleast_2d(genomes)
    batch = getattr(fitness, "evaluate_batch", None)
    if executor is not None and len(genomes) > 1:
        parts = np.array_split(genomes, min(chunks, len(genomes)))
        if batch is not None:
            scores = np.concatenate(list(executor.map(batch, parts)))
        else:
            scores = np.array(list(executor.map(fitness, genomes)), dtype=float)
    elif batch is not None:
        scores = np.asarray(batch(genomes), dtype=float)
    else:
        scores = np.array([fitness(g) for g in genomes], dtype=float)
    return np.where(np.isnan(scores), np.inf, scores)


@dataclass
class RunRecord:
    settings: DeSettings
    dimension: int
    best_per_generation: list[tuple[int, float]]
    cr_avg: list[float]
    f_avg: list[float]
    point_evaluations: list[int]
    final_best: Individual
    generations_run: int
    termination_reason: str
    wall_time: float = field(default=0.0, compare=False)

    @property
    def best_fitness(self) -> float:
        return self.final_best.fitness

    def to_dict(self) -> dict:
        return {
            "settings": asdict(self.settings),
            "seed": self.settings.seed,
            "dimension": self.dimension,
            "generations_run": self.generations_run,
            "termination_reason": self.termination_reason,
            "wall_time": self.wall_time,
            "final_best": {
                "genome": [float(v) for v in self.final_best.genome],
                "fitness": self.final_best.fitness,
                "cr": self.final_best.cr,
                "f": self.final_best.f,
            },
            "trace": [
                {"generation": g, "best_fitness": b, "cr_avg": cr, "f_avg": fa,
                 "point_evaluations": pe}
                for (g, b), cr, fa, pe in zip(
                    self.best_per_generation, self.cr_avg, self.f_avg, self.point_evaluations
                )
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunRecord":
        best = doc["final_best"]
        trace = doc["trace"]
        return cls(
            settings=DeSettings(**doc["settings"]),
            dimension=doc["dimension"],
            best_per_generation=[(row["generation"], row["best_fitness"]) for row in trace],
            cr_avg=[row["cr_avg"] for row in trace],
            f_avg=[row["f_avg"] for row in trace],
            point_evaluations=[row["point_evaluations"] for row in trace],
            final_best=Individual(np.array(best["genome"]), best["cr"], best["f"], best["fitness"]),
            generations_run=doc["generations_run"],
            termination_reason=doc["termination_reason"],
            wall_time=doc.get("wall_time", 0.0),
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["generation", "best_fitness", "cr_avg", "f_avg", "point_evaluations"])
        for (g, best), cr, fa, pe in zip(
            self.best_per_generation, self.cr_avg, self.f_avg, self.point_evaluations
        ):
            writer.writerow([g, f"{best:.17g}", f"{cr:.17g}", f"{fa:.17g}", pe])
        return buf.getvalue()


def run(settings: DeSettings, dimension: int, fitness: Callable,
        executor: Executor | None = None, callback: Callable | None = None) -> RunRecord:
    """Minimize ``fitness`` over real vectors of length ``dimension``.

    Generation 0 is the evaluated initial population. Each later generation
    scores any re-initialized individuals, builds and scores one trial per
    individual, selects, adapts the control parameters and reinjects. The run
    ends once the best fitness has not strictly improved for
    ``stall_generations`` consecutive generations, or after
    ``max_generations``. ``callback(generation, population)``, if given, is
    invoked at the end of every generation.
    """
    started = time.perf_counter()
    rng = np.random.default_rng(settings.seed)
    pop = initialize_population(settings, dimension, rng)
    n = len(pop)
    points_per_call = int(getattr(fitness, "points_per_call", 1))
    calls = 0

    pop.fitness[:] = evaluate(fitness, pop.genomes, executor)
    calls += n
    averages = (settings.cr0, settings.f0)
    best = float(np.min(pop.fitness))
    trace = [(0, best)]
    cr_trace, f_trace, pe_trace = [averages[0]], [averages[1]], [calls * points_per_call]
    stall = 0
    generation = 0
    reason = "max_generations"
    targets = np.arange(n)

    while generation < settings.max_generations:
        generation += 1
        pending = np.flatnonzero(np.isnan(pop.fitness))
        if pending.size:
            pop.fitness[pending] = evaluate(fitness, pop.genomes[pending], executor)
            calls += pending.size

        donors = pick_donors(n, targets, rng)
        mutants = pop.genomes[donors[:, 0]] + pop.f[:, None] * (
            pop.genomes[donors[:, 1]] - pop.genomes[donors[:, 2]]
        )
        trials = crossover(pop.genomes, mutants, pop.cr, rng)
        trial_fitness = evaluate(fitness, trials, executor)
        calls += n

        won = trial_fitness <= pop.fitness
        pop.genomes[won] = trials[won]
        pop.fitness[won] = trial_fitness[won]
        averages = adapt_control_parameters(pop.cr[won], pop.f[won], averages, pop, rng, settings.gamma)
        reinject(pop, settings.reinjection_count, rng, averages)

        current = float(np.nanmin(pop.fitness))
        if current < best:
            best = current
            stall = 0
        else:
            stall += 1
        trace.append((generation, best))
        cr_trace.append(averages[0])
        f_trace.append(averages[1])
        pe_trace.append(calls * points_per_call)
        if callback is not None:
            callback(generation, pop)
        if stall >= settings.stall_generations:
            reason = "stalled"
            break

    winner = pop[pop.best_index()]
    return RunRecord(
        settings=settings,
        dimension=dimension,
        best_per_generation=trace,
        cr_avg=cr_trace,
        f_avg=f_trace,
        point_evaluations=pe_trace,
        final_best=winner,
        generations_run=generation,
        termination_reason=reason,
        wall_time=time.perf_counter() - started,
    )
