"""Fitness evaluators for the three scheme families, and the built-in target functions.

All evaluators return ``log10`` of a non-negative error sum (clamped below at
``1e-300``), expose ``evaluate_batch`` for scoring a whole population in one
vectorized call, and count point evaluations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .conditions import batch_residuals, condition_set
from .schemes import ButcherTableau, StencilTemplate, rk_step, tableau_length

__all__ = [
    "ERROR_FLOOR",
    "TargetFunctionPair",
    "InitialValueProblem",
    "TrainingSet",
    "builtin_targets",
    "training_set",
    "log_error",
    "FiniteDifferenceFitness",
    "RungeKuttaFitness",
    "AdamsBashforthFitness",
    "fd_fitness",
    "rk_fitness",
    "ab_fitness",
    "coefficient_error",
]

ERROR_FLOOR = 1e-300


# -- target functions ---------------------------------------------------------------


def _bell(x):
    return 1.5 * np.exp(-0.5 * np.asarray(x) ** 2)


def _bell_prime(x):
    x = np.asarray(x)
    return -1.5 * x * np.exp(-0.5 * x**2)


def _expo(x):
    return 2.0 * np.exp(18.0 * np.asarray(x))


def _expo_prime(x):
    return 36.0 * np.exp(18.0 * np.asarray(x))


def _ivp_rhs(t, y):
    return 1.0 - t + 4.0 * y


def _ivp_solution(t):
    t = np.asarray(t)
    return 0.25 * t - 3.0 / 16.0 + 19.0 / 16.0 * np.exp(4.0 * t)


@dataclass(frozen=True)
class TargetFunctionPair:
    name: str
    f: Callable
    f_prime: Callable
    domain: tuple[float, float]
    sample_step: float

    def with_step(self, h: float) -> "TargetFunctionPair":
        return TargetFunctionPair(self.name, self.f, self.f_prime, self.domain, h)

    def as_ode(self) -> Callable:
        """Right-hand side of ``y' = f'(t)``, whose solution through ``f(t0)`` is ``f``."""
        return _Quadrature(self.f_prime)


@dataclass(frozen=True)
class _Quadrature:
    f_prime: Callable

    def __call__(self, t, y):
        return self.f_prime(t)


@dataclass(frozen=True)
class InitialValueProblem:
    name: str
    rhs: Callable
    t0: float
    y0: float
    solution: Callable


def builtin_targets() -> dict:
    """The training bell curve, the exponential validation pair and the validation IVP."""
    return {
        "bell": TargetFunctionPair("bell", _bell, _bell_prime, (-4.0, 4.0), 0.01),
        "exponential": TargetFunctionPair("exponential", _expo, _expo_prime, (-1.0, 1.0), 0.01),
        "ivp": InitialValueProblem("ivp", _ivp_rhs, 0.0, 1.0, _ivp_solution),
    }


@dataclass(frozen=True)
class TrainingSet:
    points: np.ndarray

    @property
    def n(self) -> int:
        return self.points.size


def training_set(target: TargetFunctionPair, n: int, reach: int = 0) -> TrainingSet:
    """``n`` evenly spaced, cell-centred points inside the domain.

    The domain is first shrunk by ``reach * sample_step`` on both sides so
    that every stencil sample stays inside it.
    """
    if n < 1:
        raise ValueError(f"need at least one training point, got {n}")
    lo, hi = target.domain
    margin = reach * target.sample_step
    lo, hi = lo + margin, hi - margin
    if not lo < hi:
        raise ValueError("stencil reach leaves no room inside the target domain")
    width = (hi - lo) / n
    return TrainingSet(lo + (np.arange(n) + 0.5) * width)


def log_error(total):
    """``log10`` of an error sum, clamped below at ``ERROR_FLOOR``; NaN maps to ``+inf``."""
    total = np.asarray(total, dtype=float)
    with np.errstate(invalid="ignore"):
        out = np.log10(np.maximum(total, ERROR_FLOOR))
    out = np.where(np.isnan(total), np.inf, out)
    return float(out) if out.ndim == 0 else out


# -- evaluators -----------------------------------------------------------------------


class _Evaluator:
    points_per_call = 1

    def __init__(self):
        self.calls = 0

    @property
    def point_evaluations(self) -> int:
        return self.calls * self.points_per_call

    def __call__(self, genome) -> float:
        return float(self.evaluate_batch(np.asarray(genome, dtype=float)[None, :])[0])

    def evaluate_batch(self, genomes: np.ndarray) -> np.ndarray:
        genomes = np.atleast_2d(np.asarray(genomes, dtype=float))
        if genomes.shape[1] != self.dimension:
            raise ValueError(f"genome length must be {self.dimension}, got {genomes.shape[1]}")
        self.calls += genomes.shape[0]
        with np.errstate(over="ignore", invalid="ignore"):
            return log_error(self.error_sums(genomes))


class FiniteDifferenceFitness(_Evaluator):
    """Summed absolute error of a candidate stencil's derivative estimates."""

    def __init__(self, template: StencilTemplate, target: TargetFunctionPair, training: TrainingSet):
        super().__init__()
        self.template = template
        self.target = target
        self.training = training
        self.dimension = template.size
        self.points_per_call = training.n
        h = target.sample_step
        x = training.points[:, None] + np.array(template.offsets)[None, :] * h
        self._samples = target.f(x) / h
        self._exact = target.f_prime(training.points)

    def error_sums(self, genomes):
        estimates = self._samples @ genomes.T
        return np.abs(estimates - self._exact[:, None]).sum(axis=0)


class RungeKuttaFitness(_Evaluator):
    """Summed absolute order-condition residuals of a candidate tableau."""

    def __init__(self, stage: int, order: int):
        super().__init__()
        condition_set(order)
        self.stage = stage
        self.order = order
        self.dimension = tableau_length(stage)
        self._rows, self._cols = np.tril_indices(stage, -1)

    def error_sums(self, genomes):
        n_a = self._rows.size
        a = np.zeros((genomes.shape[0], self.stage, self.stage))
        a[:, self._rows, self._cols] = genomes[:, :n_a]
        return batch_residuals(a, genomes[:, n_a:], self.order).sum(axis=-1)


class AdamsBashforthFitness(_Evaluator):
    """Integrate ``y' = f'(t)`` across the target domain and compare with ``f``.

    The trajectory has ``n_steps`` steps of width ``(x_hi - x_lo) / n_steps``
    starting at ``y(x_lo) = f(x_lo)``; the first ``k - 1`` values after the
    start come from ``starter``. The absolute deviations from ``f`` at all
    ``n_steps`` trajectory points are summed.
    """

    def __init__(self, k: int, target: TargetFunctionPair, n_steps: int,
                 starter: ButcherTableau | None = None):
        super().__init__()
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        if k > 1 and starter is None:
            raise ValueError(f"AB-{k} training needs a starter tableau")
        if n_steps < k:
            raise ValueError(f"need at least k={k} steps, got {n_steps}")
        self.k = k
        self.dimension = k
        self.points_per_call = n_steps
        lo, hi = target.domain
        h = (hi - lo) / n_steps
        self.h = h
        t = lo + h * np.arange(n_steps + 1)
        rhs = target.as_ode()
        y = [float(target.f(lo))]
        for n in range(k - 1):
            y.append(float(rk_step(starter, rhs, t[n], y[-1], h)))
        slopes = target.f_prime(t)
        # row m holds f'(t_{n-1}), ..., f'(t_{n-k}) for the m-th multistep step n = k + m
        steps = np.arange(k, n_steps + 1)
        self._history = slopes[steps[:, None] - 1 - np.arange(k)[None, :]]
        self._start = np.array(y)
        self._exact = target.f(t[1:])
        self._start_error = np.abs(self._start[1:] - self._exact[: k - 1]).sum()

    def error_sums(self, genomes):
        increments = self.h * (self._history @ genomes.T)
        ys = self._start[-1] + np.cumsum(increments, axis=0)
        errors = np.abs(ys - self._exact[self.k - 1 :, None]).sum(axis=0)
        return self._start_error + errors


def fd_fitness(template: StencilTemplate, target: TargetFunctionPair,
               training: TrainingSet) -> FiniteDifferenceFitness:
    return FiniteDifferenceFitness(template, target, training)


def rk_fitness(stage: int, order: int) -> RungeKuttaFitness:
    return RungeKuttaFitness(stage, order)


def ab_fitness(k: int, target: TargetFunctionPair, n_steps: int,
               starter: ButcherTableau | None = None) -> AdamsBashforthFitness:
    return AdamsBashforthFitness(k, target, n_steps, starter)


def coefficient_error(genome, theory) -> float:
    """Sum of absolute deviations from a reference coefficient vector."""
    return math.fsum(abs(float(g) - float(t)) for g, t in zip(genome, theory))
