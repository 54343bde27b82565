"""Finite-difference stencils, explicit Runge-Kutta tableaus and Adams-Bashforth schemes.

All three families are immutable value types. Stencils approximate a first
derivative as ``(1/h) * sum(m_i * f(x + n_i*h))``; tableaus are stored in
Butcher form with nodes derived from the row sums of ``a``; multistep schemes
hold the weights ``beta_1..beta_k`` applied to the ``k`` most recent
derivative evaluations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "StencilScheme",
    "StencilTemplate",
    "ButcherTableau",
    "MultistepScheme",
    "Trajectory",
    "tableau_length",
    "decode_tableau",
    "encode_tableau",
    "apply_stencil",
    "rk_step",
    "ab_step",
    "integrate",
    "lagrange_stencil",
    "scheme_to_dict",
    "scheme_from_dict",
    "save_scheme",
    "load_scheme",
    "format_tableau",
    "SchemeFormatError",
]


class SchemeFormatError(ValueError):
    """Raised when a serialized scheme document cannot be interpreted."""


# -- finite-difference stencils ---------------------------------------------------


@dataclass(frozen=True)
class StencilTemplate:
    """Offset skeleton of a first-derivative stencil.

    Use the :meth:`central`, :meth:`forward` and :meth:`custom` constructors;
    they validate the template before any coefficients are attached.
    """

    kind: str
    offsets: tuple[int, ...]
    order: int | None = None
    center: bool = False

    @classmethod
    def central(cls, order: int, center: bool = False) -> "StencilTemplate":
        if order < 2 or order % 2:
            raise ValueError(f"central templates need an even order >= 2, got {order}")
        half = order // 2
        offsets = list(range(-half, 0)) + ([0] if center else []) + list(range(1, half + 1))
        return cls("central", tuple(offsets), order, center)

    @classmethod
    def forward(cls, order: int) -> "StencilTemplate":
        if order < 1:
            raise ValueError(f"forward templates need order >= 1, got {order}")
        return cls("forward", tuple(range(order + 1)), order, True)

    @classmethod
    def custom(cls, offsets: Sequence[int], order: int | None = None) -> "StencilTemplate":
        offs = tuple(int(n) for n in offsets)
        if len(offs) < 2:
            raise ValueError("a custom template needs at least two offsets")
        if len(set(offs)) != len(offs):
            raise ValueError(f"duplicate offsets in custom template: {offs}")
        return cls("custom", offs, order, 0 in offs)

    @property
    def size(self) -> int:
        return len(self.offsets)

    @property
    def reach(self) -> int:
        return max(abs(n) for n in self.offsets)

    def scheme(self, coefficients: Sequence[float]) -> "StencilScheme":
        return StencilScheme(self.offsets, coefficients)


@dataclass(frozen=True)
class StencilScheme:
    offsets: tuple[int, ...]
    coefficients: np.ndarray
    derivative_order: int = 1

    def __post_init__(self):
        offsets = tuple(int(n) for n in self.offsets)
        coefficients = np.array(self.coefficients, dtype=float).reshape(-1)
        if len(set(offsets)) != len(offsets):
            raise ValueError(f"stencil offsets must be distinct, got {offsets}")
        if len(offsets) != coefficients.size:
            raise ValueError(
                f"{len(offsets)} offsets but {coefficients.size} coefficients"
            )
        if self.derivative_order != 1:
            raise NotImplementedError("only first-derivative stencils are supported")
        coefficients.flags.writeable = False
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "coefficients", coefficients)

    def backward(self) -> "StencilScheme":
        """Mirror image of this stencil (offsets and coefficients negated)."""
        return StencilScheme(tuple(-n for n in self.offsets), -self.coefficients)

    def __eq__(self, other):
        if not isinstance(other, StencilScheme):
            return NotImplemented
        return self.offsets == other.offsets and np.array_equal(
            self.coefficients, other.coefficients
        )

    def __hash__(self):
        return hash((self.offsets, self.coefficients.tobytes()))


def apply_stencil(scheme: StencilScheme, f: Callable, x, h: float):
    """Estimate ``f'(x)``; ``x`` may be a scalar or an array of abscissae."""
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    x = np.asarray(x, dtype=float)
    total = np.zeros_like(x)
    for n, m in zip(scheme.offsets, scheme.coefficients):
        total = total + m * f(x + n * h)
    result = total / h
    return float(result) if result.ndim == 0 else result


def lagrange_stencil(offsets: Sequence[int]) -> tuple[Fraction, ...]:
    """Exact first-derivative weights at 0 for the given offsets.

    The weights are the derivatives at 0 of the Lagrange basis polynomials,
    so the resulting stencil is exact for polynomials of degree
    ``len(offsets) - 1``.
    """
    nodes = [Fraction(int(n)) for n in offsets]
    if len(set(nodes)) != len(nodes):
        raise ValueError("offsets must be distinct")
    weights = []
    for i, ni in enumerate(nodes):
        total = Fraction(0)
        for k, nk in enumerate(nodes):
            if k == i:
                continue
            term = 1 / (ni - nk)
            for l, nl in enumerate(nodes):
                if l not in (i, k):
                    term *= (0 - nl) / (ni - nl)
            total += term
        weights.append(total)
    return tuple(weights)


# -- Runge-Kutta tableaus ---------------------------------------------------------


def tableau_length(stage: int) -> int:
    """Number of free coefficients of an explicit ``stage``-stage scheme."""
    return stage * (stage - 1) // 2 + stage


@dataclass(frozen=True)
class ButcherTableau:
    """Explicit Runge-Kutta scheme; nodes follow from the row sums of ``a``."""

    a: np.ndarray
    w: np.ndarray
    name: str = field(default="", compare=False)

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        w = np.array(self.w, dtype=float).reshape(-1)
        s = w.size
        if a.shape != (s, s):
            raise ValueError(f"a must be {s}x{s} for {s} weights, got {a.shape}")
        if np.any(np.triu(a) != 0):
            raise ValueError("explicit tableaus need a strictly lower-triangular a")
        a.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "w", w)

    @property
    def stage(self) -> int:
        return self.w.size

    @property
    def c(self) -> np.ndarray:
        return self.a.sum(axis=1)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]], w: Sequence[float], name=""):
        """Build from the ragged lower rows ``[[a21], [a31, a32], ...]``."""
        s = len(w)
        if len(rows) != s - 1:
            raise ValueError(f"{s}-stage tableau needs {s - 1} rows below the first")
        a = np.zeros((s, s))
        for i, row in enumerate(rows, start=1):
            if len(row) != i:
                raise ValueError(f"row {i + 1} must have {i} entries, got {len(row)}")
            a[i, :i] = [float(v) for v in row]
        return cls(a, [float(v) for v in w], name)

    def __eq__(self, other):
        if not isinstance(other, ButcherTableau):
            return NotImplemented
        return np.array_equal(self.a, other.a) and np.array_equal(self.w, other.w)

    def __hash__(self):
        return hash((self.a.tobytes(), self.w.tobytes()))


def decode_tableau(genome: Sequence[float], stage: int) -> ButcherTableau:
    genome = np.asarray(genome, dtype=float).reshape(-1)
    expected = tableau_length(stage)
    if genome.size != expected:
        raise ValueError(
            f"a {stage}-stage genome has {expected} entries, got {genome.size}"
        )
    a = np.zeros((stage, stage))
    rows, cols = np.tril_indices(stage, -1)
    a[rows, cols] = genome[: expected - stage]
    return ButcherTableau(a, genome[expected - stage :])


def encode_tableau(tableau: ButcherTableau) -> np.ndarray:
    rows, cols = np.tril_indices(tableau.stage, -1)
    return np.concatenate([tableau.a[rows, cols], tableau.w])


def rk_step(tableau: ButcherTableau, f: Callable, t: float, y, h: float):
    """Advance ``y`` from ``t`` to ``t + h`` with one explicit Runge-Kutta step."""
    a, w, c = tableau.a, tableau.w, tableau.c
    k = []
    for i in range(tableau.stage):
        yi = y
        for j in range(i):
            if a[i, j] != 0.0:
                yi = yi + a[i, j] * k[j]
        k.append(h * f(t + c[i] * h, yi))
    out = y
    for wi, ki in zip(w, k):
        out = out + wi * ki
    return out


# -- Adams-Bashforth --------------------------------------------------------------


@dataclass(frozen=True)
class MultistepScheme:
    betas: np.ndarray

    def __post_init__(self):
        betas = np.array(self.betas, dtype=float).reshape(-1)
        if betas.size < 1:
            raise ValueError("a multistep scheme needs at least one weight")
        betas.flags.writeable = False
        object.__setattr__(self, "betas", betas)

    @property
    def k(self) -> int:
        return self.betas.size

    def __eq__(self, other):
        if not isinstance(other, MultistepScheme):
            return NotImplemented
        return np.array_equal(self.betas, other.betas)

    def __hash__(self):
        return hash(self.betas.tobytes())


def ab_step(scheme: MultistepScheme, f: Callable, history, h: float):
    """One Adams-Bashforth step.

    ``history`` holds the ``k`` most recent ``(t, y)`` pairs, most recent
    first, so ``history[i - 1]`` pairs with ``beta_i``.
    """
    if len(history) != scheme.k:
        raise ValueError(f"AB-{scheme.k} needs {scheme.k} history points, got {len(history)}")
    increment = 0.0
    for beta, (t, y) in zip(scheme.betas, history):
        increment = increment + beta * f(t, y)
    return history[0][1] + h * increment


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray
    diverged: bool = False

    def __len__(self):
        return len(self.t)


def integrate(
    stepper: ButcherTableau | MultistepScheme,
    f: Callable,
    t0: float,
    y0: float,
    h: float,
    n_steps: int,
    starter: ButcherTableau | None = None,
) -> Trajectory:
    """Fixed-step integration of the scalar ODE ``y' = f(t, y)``.

    Multistep schemes with ``k > 1`` take their first ``k - 1`` points after
    ``y0`` from ``starter``. A non-finite state stops the integration; the
    returned trajectory is then truncated and flagged as diverged.
    """
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    ts = [t0]
    ys = [y0]

    def done(diverged=False):
        return Trajectory(np.array(ts), np.array(ys), diverged)

    if isinstance(stepper, ButcherTableau):
        for n in range(n_steps):
            y = rk_step(stepper, f, ts[-1], ys[-1], h)
            ts.append(t0 + (n + 1) * h)
            ys.append(y)
            if not np.all(np.isfinite(y)):
                return done(True)
        return done()

    k = stepper.k
    if k > 1 and starter is None:
        raise ValueError(f"AB-{k} needs a starter tableau for its first {k - 1} points")
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(min(k - 1, n_steps)):
            y = rk_step(starter, f, ts[-1], ys[-1], h)
            ts.append(t0 + (n + 1) * h)
            ys.append(y)
            if not np.all(np.isfinite(y)):
                return done(True)
        slopes = [f(t, y) for t, y in zip(ts, ys)]
        for n in range(len(ts) - 1, n_steps):
            recent = slopes[-1 : -k - 1 : -1]
            increment = 0.0
            for beta, slope in zip(stepper.betas, recent):
                increment = increment + beta * slope
            y = ys[-1] + h * increment
            ts.append(t0 + (n + 1) * h)
            ys.append(y)
            if not np.all(np.isfinite(y)):
                return done(True)
            slopes.append(f(ts[-1], y))
    return done()


# -- serialization ----------------------------------------------------------------


def scheme_to_dict(scheme) -> dict:
    if isinstance(scheme, StencilScheme):
        return {
            "family": "stencil",
            "derivative_order": scheme.derivative_order,
            "offsets": list(scheme.offsets),
            "coefficients": [float(m) for m in scheme.coefficients],
        }
    if isinstance(scheme, ButcherTableau):
        return {
            "family": "tableau",
            "stage": scheme.stage,
            "genome": [float(v) for v in encode_tableau(scheme)],
        }
    if isinstance(scheme, MultistepScheme):
        return {"family": "multistep", "k": scheme.k, "betas": [float(b) for b in scheme.betas]}
    raise TypeError(f"not a scheme: {type(scheme).__name__}")


def _field(doc: dict, key: str, source: str):
    try:
        return doc[key]
    except KeyError:
        raise SchemeFormatError(f"{source}: missing field '{key}'") from None


def _numbers(values, key: str, source: str) -> list[float]:
    if not isinstance(values, list):
        raise SchemeFormatError(f"{source}: field '{key}' must be a list")
    out = []
    for i, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, (int, float, str)):
            raise SchemeFormatError(f"{source}: {key}[{i}] is not a number: {v!r}")
        try:
            out.append(float(Fraction(v)) if isinstance(v, str) else float(v))
        except (ValueError, ZeroDivisionError):
            raise SchemeFormatError(f"{source}: {key}[{i}] is not a number: {v!r}") from None
    return out


def scheme_from_dict(doc: dict, source: str = "<document>"):
    """Inverse of :func:`scheme_to_dict`.

    Numbers may also be given as rational strings such as ``"-27/48"``.
    """
    if not isinstance(doc, dict):
        raise SchemeFormatError(f"{source}: top level must be a JSON object")
    family = _field(doc, "family", source)
    try:
        if family == "stencil":
            offsets = _field(doc, "offsets", source)
            if not isinstance(offsets, list) or not all(
                isinstance(n, int) and not isinstance(n, bool) for n in offsets
            ):
                raise SchemeFormatError(f"{source}: field 'offsets' must be a list of integers")
            coefficients = _numbers(_field(doc, "coefficients", source), "coefficients", source)
            return StencilScheme(tuple(offsets), coefficients)
        if family == "tableau":
            stage = _field(doc, "stage", source)
            if not isinstance(stage, int) or stage < 1:
                raise SchemeFormatError(f"{source}: field 'stage' must be a positive integer")
            genome = _numbers(_field(doc, "genome", source), "genome", source)
            return decode_tableau(genome, stage)
        if family == "multistep":
            betas = _numbers(_field(doc, "betas", source), "betas", source)
            return MultistepScheme(betas)
    except SchemeFormatError:
        raise
    except ValueError as exc:
        raise SchemeFormatError(f"{source}: {exc}") from None
    raise SchemeFormatError(
        f"{source}: field 'family' must be one of stencil, tableau, multistep; got {family!r}"
    )


def save_scheme(scheme, path) -> None:
    Path(path).write_text(json.dumps(scheme_to_dict(scheme), indent=2) + "\n")


def load_scheme(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemeFormatError(
            f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    return scheme_from_dict(doc, str(path))


def format_tableau(tableau: ButcherTableau, digits: int = 6) -> str:
    """Plain-text Butcher array: nodes left of the bar, weights below the rule."""
    s = tableau.stage
    width = digits + 4

    def num(v):
        return f"{v:>{width}.{digits}f}"

    lines = []
    for i in range(s):
        row = " ".join(num(tableau.a[i, j]) for j in range(i))
        lines.append(f"{num(tableau.c[i])} | {row}".rstrip())
    rule = "-" * (width + 1) + "+" + "-" * max(1, s * (width + 1))
    lines.append(rule)
    lines.append(" " * width + " | " + " ".join(num(v) for v in tableau.w))
    return "\n".join(lines)

