"""Order conditions for explicit Runge-Kutta tableaus and moment checks for stencils.

The 17 Runge-Kutta conditions up to order five are written out as explicit
sums. Every left-hand side works on arrays with arbitrary leading batch
dimensions (``a`` of shape ``(..., s, s)``, ``w`` of shape ``(..., s)``),
so the same code audits a single tableau and scores a whole population at
once.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import cached_property
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .schemes import ButcherTableau, MultistepScheme, StencilScheme

__all__ = [
    "Condition",
    "ConditionSet",
    "CONDITIONS",
    "MAX_ORDER",
    "CONDITION_COUNTS",
    "max_order_for_stage",
    "condition_set",
    "condition_lhs",
    "evaluate_conditions",
    "batch_residuals",
    "taylor_moment_check",
    "ab_moment_check",
    "residual_report_csv",
]

MAX_ORDER = 5
CONDITION_COUNTS = {1: 1, 2: 2, 3: 4, 4: 8, 5: 17}
# highest attainable order per stage count, explicit schemes
_STAGE_MAX_ORDER = {1: 1, 2: 2, 3: 3, 4: 4, 5: 4, 6: 5}


def max_order_for_stage(stage: int) -> int:
    if stage < 1:
        raise ValueError(f"stage must be positive, got {stage}")
    return _STAGE_MAX_ORDER.get(stage, MAX_ORDER)


def _dot(u, v):
    return np.einsum("...i,...i->...", u, v)


def _mv(a, v):
    return np.einsum("...ij,...j->...i", a, v)


class _Terms:
    """Shared products of one (possibly batched) tableau, computed on first use."""

    def __init__(self, a, w, c):
        self.a, self.w, self.c = a, w, c

    @cached_property
    def c2(self):
        return self.c**2

    @cached_property
    def ac(self):
        return _mv(self.a, self.c)

    @cached_property
    def ac2(self):
        return _mv(self.a, self.c2)

    @cached_property
    def aac(self):
        return _mv(self.a, self.ac)


@dataclass(frozen=True)
class Condition:
    order: int
    label: str
    lhs: Callable
    target: Fraction


CONDITIONS: tuple[Condition, ...] = (
    Condition(1, "sum w_i", lambda t: t.w.sum(axis=-1), Fraction(1)),
    Condition(2, "sum w_i c_i", lambda t: _dot(t.w, t.c), Fraction(1, 2)),
    Condition(3, "sum w_i c_i^2", lambda t: _dot(t.w, t.c2), Fraction(1, 3)),
    Condition(3, "sum w_i a_ij c_j", lambda t: _dot(t.w, t.ac), Fraction(1, 6)),
    Condition(4, "sum w_i c_i^3", lambda t: _dot(t.w, t.c2 * t.c), Fraction(1, 4)),
    Condition(4, "sum w_i c_i a_ij c_j", lambda t: _dot(t.w * t.c, t.ac), Fraction(1, 8)),
    Condition(4, "sum w_i a_ij c_j^2", lambda t: _dot(t.w, t.ac2), Fraction(1, 12)),
    Condition(4, "sum w_i a_ij a_jk c_k", lambda t: _dot(t.w, t.aac), Fraction(1, 24)),
    Condition(5, "sum w_i c_i^4", lambda t: _dot(t.w, t.c2 * t.c2), Fraction(1, 5)),
    Condition(5, "sum w_i c_i^2 a_ij c_j", lambda t: _dot(t.w * t.c2, t.ac), Fraction(1, 10)),
    Condition(5, "sum w_i c_i a_ij c_j^2", lambda t: _dot(t.w * t.c, t.ac2), Fraction(1, 15)),
    Condition(5, "sum w_i c_i a_ij a_jk c_k", lambda t: _dot(t.w * t.c, t.aac), Fraction(1, 30)),
    # i is shared by both a-factors: sum_i w_i (sum_j a_ij c_j)(sum_k a_ik c_k)
    Condition(5, "sum w_i a_ij c_j a_ik c_k", lambda t: _dot(t.w, t.ac**2), Fraction(1, 20)),
    Condition(
        5, "sum w_i a_ij c_j^3", lambda t: _dot(t.w, _mv(t.a, t.c2 * t.c)), Fraction(1, 20)
    ),
    Condition(
        5, "sum w_i a_ij c_j a_jk c_k", lambda t: _dot(t.w, _mv(t.a, t.c * t.ac)), Fraction(1, 40)
    ),
    Condition(
        5, "sum w_i a_ij a_jk c_k^2", lambda t: _dot(t.w, _mv(t.a, t.ac2)), Fraction(1, 60)
    ),
    Condition(
        5, "sum w_i a_ij a_jk a_kl c_l", lambda t: _dot(t.w, _mv(t.a, t.aac)), Fraction(1, 120)
    ),
)


@dataclass(frozen=True)
class ConditionSet:
    order: int
    conditions: tuple[Condition, ...]

    @property
    def count(self) -> int:
        return len(self.conditions)

    @property
    def targets(self) -> np.ndarray:
        return np.array([float(cond.target) for cond in self.conditions])

    def __len__(self):
        return self.count

    def __iter__(self):
        return iter(self.conditions)


def condition_set(order: int) -> ConditionSet:
    """All conditions a scheme must satisfy to reach ``order`` (cumulative)."""
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"order conditions are available for orders 1..{MAX_ORDER}, got {order}")
    return ConditionSet(order, tuple(cond for cond in CONDITIONS if cond.order <= order))


def condition_lhs(tableau: ButcherTableau, order: int) -> np.ndarray:
    """Left-hand sides of the order-``order`` conditions evaluated on ``tableau``."""
    terms = _Terms(tableau.a, tableau.w, tableau.c)
    return np.array([cond.lhs(terms) for cond in condition_set(order)], dtype=float)


def evaluate_conditions(tableau: ButcherTableau, order: int) -> np.ndarray:
    """Absolute residuals ``|target - lhs|`` for every condition up to ``order``."""
    conditions = condition_set(order)
    return np.abs(conditions.targets - condition_lhs(tableau, order))


def batch_residuals(a: np.ndarray, w: np.ndarray, order: int) -> np.ndarray:
    """Residuals for a stack of tableaus; returns shape ``(..., n_conditions)``."""
    terms = _Terms(a, w, a.sum(axis=-1))
    conditions = condition_set(order)
    lhs = np.stack([cond.lhs(terms) for cond in conditions], axis=-1)
    return np.abs(conditions.targets - lhs)


def taylor_moment_check(scheme: StencilScheme, claimed_order: int) -> np.ndarray:
    """Residuals of the first-derivative moment equations.

    Entry ``j`` (``j = 0..claimed_order``) is ``|sum_i m_i n_i**j - [j == 1]|``;
    the stencil has the claimed order exactly when every entry vanishes.
    """
    if claimed_order < 1:
        raise ValueError(f"claimed order must be >= 1, got {claimed_order}")
    residuals = []
    for j in range(claimed_order + 1):
        moment = math.fsum(m * n**j for n, m in zip(scheme.offsets, scheme.coefficients))
        residuals.append(abs(moment - (1.0 if j == 1 else 0.0)))
    return np.array(residuals)


def ab_moment_check(scheme: MultistepScheme, claimed_order: int) -> np.ndarray:
    """Residuals ``|sum_i beta_i (1 - i)**(j - 1) - 1/j|`` for ``j = 1..claimed_order``."""
    if claimed_order < 1:
        raise ValueError(f"claimed order must be >= 1, got {claimed_order}")
    residuals = []
    for j in range(1, claimed_order + 1):
        moment = math.fsum(
            beta * (1 - i) ** (j - 1) for i, beta in enumerate(scheme.betas, start=1)
        )
        residuals.append(abs(moment - 1.0 / j))
    return np.array(residuals)


def residual_report_csv(tableau: ButcherTableau, order: int) -> str:
    """CSV rows ``condition_index, lhs_value, target, abs_residual`` plus a sum row."""
    lhs = condition_lhs(tableau, order)
    targets = condition_set(order).targets
    residuals = np.abs(targets - lhs)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["condition_index", "lhs_value", "target", "abs_residual"])
    for k, (value, target, res) in enumerate(zip(lhs, targets, residuals), start=1):
        writer.writerow([k, f"{value:.17g}", f"{target:.17g}", f"{res:.17g}"])
    writer.writerow(["sum", "", "", f"{residuals.sum():.17g}"])
    return buf.getvalue()


def moment_report_csv(residuals: Sequence[float], start: int = 0) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["condition_index", "abs_residual"])
    for j, res in enumerate(residuals, start=start):
        writer.writerow([j, f"{res:.17g}"])
    writer.writerow(["sum", f"{float(np.sum(residuals)):.17g}"])
    return buf.getvalue()
