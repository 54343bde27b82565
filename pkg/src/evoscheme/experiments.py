"""Multi-run evolution experiments, best-of reports and sensitivity sweeps.

Run ``j`` of an experiment with master seed ``s`` uses seed ``s + j``.
Runs are independent, so they can be spread over worker processes; results
are gathered in run order, which keeps every report identical to a serial
execution.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import de, tables
from .conditions import evaluate_conditions, max_order_for_stage
from .fitness import (
    TargetFunctionPair,
    ab_fitness,
    builtin_targets,
    coefficient_error,
    fd_fitness,
    rk_fitness,
    training_set,
)
from .schemes import (
    MultistepScheme,
    StencilTemplate,
    decode_tableau,
    lagrange_stencil,
    tableau_length,
)

__all__ = [
    "FD_SETTINGS",
    "AB_SETTINGS",
    "RK_SETTINGS",
    "RK5_DESK_SETTINGS",
    "RK5_PAPER_SETTINGS",
    "BestOfReport",
    "FdProblem",
    "RkProblem",
    "AbProblem",
    "evolve",
    "sensitivity",
    "SensitivityRow",
    "sensitivity_csv",
]

FD_SETTINGS = de.DeSettings(150, stall_generations=250, max_generations=2500)
AB_SETTINGS = de.DeSettings(150, stall_generations=250, max_generations=2500)
RK_SETTINGS = de.DeSettings(350, stall_generations=500, max_generations=5000)
RK5_DESK_SETTINGS = de.DeSettings(350, stall_generations=2000, max_generations=20000)
RK5_PAPER_SETTINGS = de.DeSettings(350, stall_generations=10000, max_generations=100000)
FD_TRAINING_POINTS = 800
AB_TRAINING_POINTS = 6400


# -- problem descriptions -----------------------------------------------------------
# Each problem knows how to build its evaluator (inside a worker process if
# needed) and how to score a winner against known theory.


@dataclass(frozen=True)
class FdProblem:
    template: StencilTemplate
    n_train: int = FD_TRAINING_POINTS
    step: float | None = None
    target: str = "bell"

    family = "fd"

    @property
    def dimension(self) -> int:
        return self.template.size

    def target_pair(self) -> TargetFunctionPair:
        pair = builtin_targets()[self.target]
        return pair if self.step is None else pair.with_step(self.step)

    def evaluator(self):
        pair = self.target_pair()
        return fd_fitness(self.template, pair, training_set(pair, self.n_train, self.template.reach))

    def theories(self) -> list[tuple[str, np.ndarray]]:
        out = [("taylor", np.array([float(m) for m in lagrange_stencil(self.template.offsets)]))]
        for row in tables.STENCIL_ROWS:
            if row.offsets == self.template.offsets and row.label.startswith("abnormal"):
                out.append((row.label, np.array([float(m) for m in row.theory])))
        return out

    def scheme(self, genome):
        return self.template.scheme(genome)

    def describe(self) -> str:
        t = self.template
        if t.kind == "custom":
            return "custom" + "_".join(str(n) for n in t.offsets)
        return f"{t.kind}{t.order}" + ("c" if t.kind == "central" and t.center else "")


@dataclass(frozen=True)
class RkProblem:
    stage: int
    order: int

    family = "rk"

    def __post_init__(self):
        if self.stage < 1:
            raise ValueError(f"stage must be positive, got {self.stage}")
        best = max_order_for_stage(self.stage)
        if not 1 <= self.order <= best:
            raise ValueError(
                f"a {self.stage}-stage explicit scheme can reach at most order {best}, "
                f"got order {self.order}"
            )

    @property
    def dimension(self) -> int:
        return tableau_length(self.stage)

    def evaluator(self):
        return rk_fitness(self.stage, self.order)

    def theories(self):
        return []

    def scheme(self, genome):
        return decode_tableau(genome, self.stage)

    def describe(self) -> str:
        return f"s{self.stage}p{self.order}"


@dataclass(frozen=True)
class AbProblem:
    k: int
    n_train: int = AB_TRAINING_POINTS
    starter_order: int | None = None
    target: str = "bell"

    family = "ab"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.k > 1:
            order = self.k if self.starter_order is None else self.starter_order
            if order < self.k:
                raise ValueError(f"AB-{self.k} needs a starter of order >= {self.k}")
            try:
                tables.theory_tableau(order)
            except KeyError:
                raise ValueError(f"no starter tableau of order {order} available") from None

    @property
    def dimension(self) -> int:
        return self.k

    def starter(self):
        if self.k == 1:
            return None
        return tables.theory_tableau(self.k if self.starter_order is None else self.starter_order)

    def evaluator(self):
        return ab_fitness(self.k, builtin_targets()[self.target], self.n_train, self.starter())

    def theories(self):
        try:
            return [("adams", tables.ab_theory(self.k).betas.copy())]
        except KeyError:
            return []

    def scheme(self, genome):
        return MultistepScheme(genome)

    def describe(self) -> str:
        return f"k{self.k}"


# -- running --------------------------------------------------------------------------


def _one_run(args):
    problem, settings = args
    return de.run(settings, problem.dimension, problem.evaluator())


def run_many(problem, settings: de.DeSettings, runs: int, jobs: int = 1) -> list[de.RunRecord]:
    if runs < 1:
        raise ValueError(f"runs must be >= 1, got {runs}")
    tasks = [(problem, settings.replace(seed=settings.seed + j)) for j in range(runs)]
    if jobs > 1 and runs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_one_run, tasks))
    return [_one_run(t) for t in tasks]


def _quartiles(values) -> dict:
    finite = np.asarray([v for v in values if math.isfinite(v)])
    if finite.size == 0:
        return {"min": None, "q1": None, "median": None, "q3": None, "max": None}
    q = np.percentile(finite, [0, 25, 50, 75, 100])
    return dict(zip(["min", "q1", "median", "q3", "max"], (float(v) for v in q)))


@dataclass
class BestOfReport:
    problem: object
    records: list[de.RunRecord]
    winner_index: int = field(init=False)
    theory_label: str | None = field(init=False, default=None)
    coefficient_error: float | None = field(init=False, default=None)

    def __post_init__(self):
        fits = self.fitnesses
        self.winner_index = int(np.argmin(fits))
        theories = self.problem.theories()
        if theories:
            errs = [(coefficient_error(self.winner_genome, t), label) for label, t in theories]
            self.coefficient_error, self.theory_label = min(errs)

    @property
    def fitnesses(self) -> list[float]:
        return [r.best_fitness for r in self.records]

    @property
    def winner(self) -> de.RunRecord:
        return self.records[self.winner_index]

    @property
    def winner_fitness(self) -> float:
        return self.winner.best_fitness

    @property
    def winner_genome(self) -> np.ndarray:
        return self.winner.final_best.genome

    @property
    def winner_scheme(self):
        return self.problem.scheme(self.winner_genome)

    @property
    def error_sums(self) -> list[float]:
        """Per-run raw error sums (``10**fitness``)."""
        return [10.0**f if math.isfinite(f) else math.inf for f in self.fitnesses]

    @property
    def all_diverged(self) -> bool:
        return all(not math.isfinite(f) for f in self.fitnesses)

    def residual_sum(self) -> float | None:
        if self.problem.family != "rk":
            return None
        return float(evaluate_conditions(self.winner_scheme, self.problem.order).sum())

    def theory(self) -> np.ndarray | None:
        for label, t in self.problem.theories():
            if label == self.theory_label:
                return t
        return None

    def summary(self) -> dict:
        return {
            "family": self.problem.family,
            "problem": self.problem.describe(),
            "runs": len(self.records),
            "seeds": [r.settings.seed for r in self.records],
            "fitnesses": self.fitnesses,
            "error_sums": self.error_sums,
            "generations": [r.generations_run for r in self.records],
            "winner_index": self.winner_index,
            "winner_seed": self.winner.settings.seed,
            "winner_fitness": self.winner_fitness,
            "winner_genome": [float(v) for v in self.winner_genome],
            "theory": self.theory_label,
            "coefficient_error": self.coefficient_error,
            "residual_sum": self.residual_sum(),
            "ranking": [int(i) for i in np.argsort(self.fitnesses, kind="stable")],
            "stats": _quartiles(self.error_sums),
        }

    def table_csv(self) -> str:
        """One-row coefficient table with the error sum against the nearest theory."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        genome = self.winner_genome
        if self.problem.family == "fd":
            labels = [f"f(x{n:+d}h)" if n else "f(x)" for n in self.problem.template.offsets]
        elif self.problem.family == "ab":
            labels = [f"beta_{i}" for i in range(1, len(genome) + 1)]
        else:
            labels = [f"g{i}" for i in range(1, len(genome) + 1)]
        writer.writerow(["problem", "row", "vector_length", *labels, "sum_of_absolute_errors"])
        theory = self.theory()
        if theory is not None:
            writer.writerow([self.problem.describe(), f"theory:{self.theory_label}", len(theory),
                             *(f"{v:.17g}" for v in theory), ""])
        err = self.coefficient_error if self.coefficient_error is not None else self.residual_sum()
        writer.writerow([self.problem.describe(), "computed", len(genome),
                         *(f"{v:.17g}" for v in genome),
                         "" if err is None else f"{err:.17g}"])
        return buf.getvalue()

    def boxplot_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["run", "seed", "fitness", "error_sum", "generations", "termination"])
        for j, (r, err) in enumerate(zip(self.records, self.error_sums)):
            writer.writerow([j, r.settings.seed, f"{r.best_fitness:.17g}", f"{err:.17g}",
                             r.generations_run, r.termination_reason])
        return buf.getvalue()


def evolve(problem, settings: de.DeSettings, runs: int, jobs: int = 1) -> BestOfReport:
    return BestOfReport(problem, run_many(problem, settings, runs, jobs))


# -- sensitivity ------------------------------------------------------------------------

AXES = ("training_points", "population_size", "step_size")


@dataclass(frozen=True)
class SensitivityRow:
    value: float
    run: int
    seed: int
    fitness: float
    coefficient_error: float
    point_evaluations: int
    generations: int


def sensitivity(axis: str, grid: Sequence[float], problem: FdProblem,
                settings: de.DeSettings, runs: int = 1, jobs: int = 1) -> list[SensitivityRow]:
    """Evolve ``problem`` once per grid value, varying one setting.

    Every grid value reuses the same seeds, so rows with equal ``run`` form
    paired comparisons.
    """
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    if not grid:
        raise ValueError("grid must not be empty")
    rows = []
    for value in grid:
        p, s = problem, settings
        if axis == "training_points":
            p = FdProblem(problem.template, int(value), problem.step, problem.target)
        elif axis == "step_size":
            p = FdProblem(problem.template, problem.n_train, float(value), problem.target)
        else:
            s = settings.replace(population_size=int(value))
        report = evolve(p, s, runs, jobs)
        theory = p.theories()[0][1]
        for j, rec in enumerate(report.records):
            rows.append(SensitivityRow(
                value, j, rec.settings.seed, rec.best_fitness,
                coefficient_error(rec.final_best.genome, theory),
                rec.point_evaluations[-1], rec.generations_run,
            ))
    return rows


def sensitivity_csv(axis: str, rows: Sequence[SensitivityRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([axis, "run", "seed", "fitness", "coefficient_error",
                     "point_evaluations", "generations"])
    for r in rows:
        writer.writerow([f"{r.value:.17g}", r.run, r.seed, f"{r.fitness:.17g}",
                         f"{r.coefficient_error:.17g}", r.point_evaluations, r.generations])
    return buf.getvalue()


def best_per_value(rows: Sequence[SensitivityRow]) -> dict:
    """Lowest coefficient error reached for each grid value."""
    out: dict = {}
    for r in rows:
        out[r.value] = min(out.get(r.value, math.inf), r.coefficient_error)
    return out


def _finite_or_none(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite_or_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite_or_none(v) for v in obj]
    return obj


def summary_json(report: BestOfReport) -> str:
    """Report summary as strict JSON; non-finite numbers become ``null``."""
    return json.dumps(_finite_or_none(report.summary()), indent=2)
