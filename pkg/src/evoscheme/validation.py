"""Step-size convergence sweeps and empirical order estimates."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .fitness import InitialValueProblem, TargetFunctionPair
from .schemes import ButcherTableau, MultistepScheme, StencilScheme, apply_stencil, integrate
from .tables import theory_tableau

__all__ = [
    "FLOOR",
    "CEILING",
    "Ladder",
    "ConvergenceSweep",
    "OrderEstimate",
    "ComparisonReport",
    "sweep",
    "estimate_order",
    "compare_schemes",
]

FLOOR = 1e-13
CEILING = 1e-1
_EPS = 1e-30


@dataclass(frozen=True)
class Ladder:
    """Geometric step-size ladder ``h0 * ratio**j`` for ``j = 0..rungs-1``."""

    h0: float = 0.1
    ratio: float = 0.5
    rungs: int = 10

    def __post_init__(self):
        if not self.h0 > 0:
            raise ValueError("h0 must be positive")
        if not 0 < self.ratio < 1:
            raise ValueError("ratio must lie strictly between 0 and 1")
        if self.rungs < 1:
            raise ValueError("a ladder needs at least one rung")

    def steps(self) -> np.ndarray:
        return self.h0 * self.ratio ** np.arange(self.rungs)


@dataclass
class ConvergenceSweep:
    scheme: object
    reference: object
    location: float
    step_sizes: np.ndarray
    errors: np.ndarray

    def pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.step_sizes.tolist(), self.errors.tolist()))


@dataclass(frozen=True)
class OrderEstimate:
    slope: float | None
    r_squared: float | None
    points_used: int
    floor_excluded: int

    @property
    def indeterminate(self) -> bool:
        return self.slope is None

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "r_squared": self.r_squared,
            "points_used": self.points_used,
            "floor_excluded": self.floor_excluded,
            "indeterminate": self.indeterminate,
        }


def _normalized(numerical, exact) -> float:
    if not np.isfinite(numerical):
        return math.inf
    return abs(numerical - exact) / max(abs(exact), _EPS)


def _step_count(span: float, h: float) -> int:
    n = round(span / h)
    if n < 1 or not math.isclose(n * h, span, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"interval of length {span} is not a multiple of h={h}")
    return n


def sweep(scheme, reference, location: float | None = None, ladder: Ladder = Ladder(),
          starter: ButcherTableau | None = None, t0: float | None = None) -> ConvergenceSweep:
    """Normalized error of ``scheme`` at ``location`` for every rung of ``ladder``.

    Stencils differentiate a :class:`TargetFunctionPair` at ``location``
    (default 0). Integrators either solve an :class:`InitialValueProblem` from
    its initial point to ``location`` (default 1), or integrate ``y' = f'(t)``
    of a target pair from ``t0`` (default ``location - 1``) to ``location``
    (default 0), starting from the exact value ``f(t0)``. Multistep schemes
    take their first points from ``starter``, by default the classical
    tableau of the scheme's own order.
    """
    steps = ladder.steps()
    errors = []
    if isinstance(scheme, StencilScheme):
        if not isinstance(reference, TargetFunctionPair):
            raise TypeError("stencils are validated against a target function pair")
        x = 0.0 if location is None else location
        exact = float(reference.f_prime(x))
        for h in steps:
            errors.append(_normalized(apply_stencil(scheme, reference.f, x, h), exact))
        return ConvergenceSweep(scheme, reference, x, steps, np.array(errors))

    if not isinstance(scheme, (ButcherTableau, MultistepScheme)):
        raise TypeError(f"cannot sweep {type(scheme).__name__}")
    if isinstance(scheme, MultistepScheme) and starter is None and scheme.k > 1:
        starter = theory_tableau(min(scheme.k, 5))
    if isinstance(reference, InitialValueProblem):
        x = 1.0 if location is None else location
        start, y0, rhs = reference.t0, reference.y0, reference.rhs
        exact = float(reference.solution(x))
    elif isinstance(reference, TargetFunctionPair):
        x = 0.0 if location is None else location
        start = x - 1.0 if t0 is None else t0
        y0, rhs = float(reference.f(start)), reference.as_ode()
        exact = float(reference.f(x))
    else:
        raise TypeError("integrators are validated against an IVP or a target function pair")
    for h in steps:
        n = _step_count(x - start, h)
        traj = integrate(scheme, rhs, start, y0, h, n, starter)
        errors.append(math.inf if traj.diverged else _normalized(float(traj.y[-1]), exact))
    return ConvergenceSweep(scheme, reference, x, steps, np.array(errors))


def estimate_order(data: ConvergenceSweep, floor: float = FLOOR, ceiling: float = CEILING) -> OrderEstimate:
    """Least-squares slope of ``log10(error)`` against ``log10(h)``.

    Only errors inside ``[floor, ceiling]`` enter the fit; points under the
    rounding floor are counted in ``floor_excluded``. With fewer than two
    usable points the estimate is indeterminate (``slope is None``).
    """
    h = np.asarray(data.step_sizes, dtype=float)
    err = np.asarray(data.errors, dtype=float)
    finite = np.isfinite(err)
    below = int(np.count_nonzero(finite & (err < floor)))
    usable = finite & (err >= floor) & (err <= ceiling)
    n = int(np.count_nonzero(usable))
    if n < 2:
        return OrderEstimate(None, None, n, below)
    lx, ly = np.log10(h[usable]), np.log10(err[usable])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    total = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 if total == 0 else float(1.0 - np.sum(resid**2) / total)
    return OrderEstimate(float(slope), r2, n, below)


@dataclass
class ComparisonReport:
    step_sizes: np.ndarray
    columns: dict = field(default_factory=dict)
    estimates: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["h", *self.columns])
        for i, h in enumerate(self.step_sizes):
            writer.writerow([f"{h:.17g}", *(f"{col[i]:.17g}" for col in self.columns.values())])
        return buf.getvalue()

    def estimates_json(self) -> str:
        return json.dumps({name: est.to_dict() for name, est in self.estimates.items()}, indent=2)


def compare_schemes(schemes, reference, location: float | None = None,
                    ladder: Ladder = Ladder(), starters: dict | None = None) -> ComparisonReport:
    """Sweep several schemes over one ladder; ``schemes`` maps column names to schemes."""
    if not isinstance(schemes, dict):
        schemes = {f"scheme_{i + 1}": s for i, s in enumerate(schemes)}
    starters = starters or {}
    report = ComparisonReport(ladder.steps())
    for name, scheme in schemes.items():
        result = sweep(scheme, reference, location, ladder, starter=starters.get(name))
        report.columns[name] = result.errors
        report.estimates[name] = estimate_order(result)
    return report
