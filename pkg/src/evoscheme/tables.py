"""Reference coefficient sets.

Classical (analytically derived) schemes, plus the evolved coefficient sets
and residual sums reported for this method, kept as literal data so audits
and validation sweeps can be run against them.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction as Fr

from .schemes import ButcherTableau, MultistepScheme, StencilScheme, StencilTemplate


@dataclass(frozen=True)
class StencilRow:
    label: str
    order: int
    offsets: tuple[int, ...]
    theory: tuple[Fr, ...]
    computed: tuple[float, ...] | None
    reported_error_sum: float

    def theory_scheme(self) -> StencilScheme:
        return StencilScheme(self.offsets, [float(m) for m in self.theory])

    def computed_scheme(self) -> StencilScheme | None:
        if self.computed is None:
            return None
        return StencilScheme(self.computed_offsets, self.computed)

    @property
    def computed_offsets(self) -> tuple[int, ...]:
        if self.computed is not None and len(self.computed) != len(self.offsets):
            # evolved central rows carry the extra centre term
            half = len(self.offsets) // 2
            return self.offsets[:half] + (0,) + self.offsets[half:]
        return self.offsets


def _central(order, theory, computed, err):
    return StencilRow(
        f"central-{order}", order, StencilTemplate.central(order).offsets,
        tuple(theory), computed, err,
    )


def _forward(order, theory, computed, err):
    return StencilRow(
        f"forward-{order}", order, StencilTemplate.forward(order).offsets,
        tuple(theory), computed, err,
    )


CENTRAL_ROWS = (
    _central(2, (Fr(-1, 2), Fr(1, 2)),
             (-0.500013397, 0.000000000, 0.500013397), 2.6794e-05),
    _central(4, (Fr(1, 12), Fr(-2, 3), Fr(2, 3), Fr(-1, 12)),
             (0.083342157, -0.666684313, 0.000000938, 0.666683691, -0.083342002), 5.3890e-05),
    _central(6, (Fr(-1, 60), Fr(3, 20), Fr(-3, 4), Fr(3, 4), Fr(-3, 20), Fr(1, 60)),
             (-0.016670578, 0.150015647, -0.750019558, -0.000014356, 0.750030440,
              -0.150020047, 0.016671320), 9.3045e-05),
    _central(8, (Fr(1, 280), Fr(-4, 105), Fr(1, 5), Fr(-4, 5),
                 Fr(4, 5), Fr(-1, 5), Fr(4, 105), Fr(-1, 280)),
             (0.003565704, -0.038061207, 0.199921330, -0.799922070, 0.000015479,
              0.800122711, -0.199924308, 0.038063121, -0.003566130), 6.8762e-04),
)

FORWARD_ROWS = (
    _forward(1, (Fr(-1), Fr(1)), (-0.999965187, 0.999992406), 4.2406e-05),
    _forward(2, (Fr(-3, 2), Fr(2), Fr(-1, 2)),
             (-1.499934810, 1.999923208, -0.499988397), 1.5359e-04),
    _forward(3, (Fr(-11, 6), Fr(3), Fr(-3, 2), Fr(1, 3)),
             (-1.833239315, 2.999797978, -1.499878000, 0.333319340), 4.3203e-04),
    _forward(4, (Fr(-25, 12), Fr(4), Fr(-3), Fr(4, 3), Fr(-1, 4)),
             (-2.083211809, 3.999619798, -2.999588512, 1.333164876, -0.249984353), 1.0973e-03),
    _forward(5, (Fr(-137, 60), Fr(5), Fr(-5), Fr(10, 3), Fr(-5, 4), Fr(1, 5)),
             (-2.283198253, 4.999457198, -4.999179543, 3.332777993, -1.249854882,
              0.199997488), 2.2013e-03),
    _forward(6, (Fr(-49, 20), Fr(6), Fr(-15, 2), Fr(20, 3), Fr(-15, 4), Fr(6, 5), Fr(-1, 6)),
             (-2.449833503, 5.999156723, -7.498280965, 6.664893406, -3.749059104,
              1.199779258, -0.166655814), 5.6746e-03),
)

# the two non-standard order-4 stencils on offsets (-3, -1, 1, 3)
ABNORMAL_ROWS = (
    StencilRow("abnormal-a", 4, (-3, -1, 1, 3),
               (Fr(1, 48), Fr(-27, 48), Fr(27, 48), Fr(-1, 48)),
               (0.020838333, -0.562514996, 0.562514996, -0.020838333), 3.9991e-05),
    StencilRow("abnormal-b", 4, (-3, -1, 1, 3),
               (Fr(1, 8), Fr(-1, 3), Fr(-1, 4), Fr(11, 24)),
               (0.124974036, -0.333219716, -0.250118502, 0.458364183), 2.8893e-04),
)

STENCIL_ROWS = CENTRAL_ROWS + FORWARD_ROWS + ABNORMAL_ROWS


@dataclass(frozen=True)
class MultistepRow:
    order: int
    theory: tuple[Fr, ...]
    reported_error_sum: float

    def theory_scheme(self) -> MultistepScheme:
        return MultistepScheme([float(b) for b in self.theory])


# evolved beta values are not recoverable from the published layout; theory only
AB_ROWS = (
    MultistepRow(1, (Fr(1),), 1.2676e-06),
    MultistepRow(2, (Fr(3, 2), Fr(-1, 2)), 9.0863e-06),
    MultistepRow(3, (Fr(23, 12), Fr(-4, 3), Fr(5, 12)), 3.0663e-05),
    MultistepRow(4, (Fr(55, 24), Fr(-59, 24), Fr(37, 24), Fr(-3, 8)), 1.0004e-04),
    MultistepRow(5, (Fr(1901, 720), Fr(-1387, 360), Fr(109, 30), Fr(-637, 360), Fr(251, 720)),
                 2.2393e-05),
)


def ab_theory(k: int) -> MultistepScheme:
    for row in AB_ROWS:
        if row.order == k:
            return row.theory_scheme()
    raise KeyError(f"no classical Adams-Bashforth scheme with k={k}")


# -- Runge-Kutta --------------------------------------------------------------------

EULER = ButcherTableau.from_rows([], [1.0], "forward Euler")
MIDPOINT = ButcherTableau.from_rows([[0.5]], [0.0, 1.0], "explicit midpoint")
KUTTA3 = ButcherTableau.from_rows([[0.5], [-1.0, 2.0]], [1 / 6, 2 / 3, 1 / 6], "Kutta order 3")
RK4 = ButcherTableau.from_rows(
    [[0.5], [0.0, 0.5], [0.0, 0.0, 1.0]], [1 / 6, 1 / 3, 1 / 3, 1 / 6], "classical RK4"
)
BUTCHER5 = ButcherTableau.from_rows(
    [
        [1 / 4],
        [1 / 8, 1 / 8],
        [0.0, -1 / 2, 1.0],
        [3 / 16, 0.0, 0.0, 9 / 16],
        [-3 / 7, 2 / 7, 12 / 7, -12 / 7, 8 / 7],
    ],
    [7 / 90, 0.0, 32 / 90, 12 / 90, 32 / 90, 7 / 90],
    "Butcher order 5",
)

_THEORY_TABLEAUS = {1: EULER, 2: MIDPOINT, 3: KUTTA3, 4: RK4, 5: BUTCHER5}


def theory_tableau(order: int) -> ButcherTableau:
    """Classical explicit tableau of the given order (used as multistep starter)."""
    try:
        return _THEORY_TABLEAUS[order]
    except KeyError:
        raise KeyError(f"no classical tableau of order {order}") from None


EVOLVED_3STAGE = ButcherTableau.from_rows(
    [[0.588205371365611], [-0.117042030825954, 0.865356722666391]],
    [0.239084361012680, 0.433481022213682, 0.327434616773638],
    "evolved 3-stage",
)
EVOLVED_4STAGE = ButcherTableau.from_rows(
    [
        [0.446027096189541],
        [-0.253232894933462, 0.837303080381472],
        [0.284580085103288, 0.018557477374513, 0.696862437522200],
    ],
    [0.160860757268920, 0.410796107210609, 0.268240761883735, 0.160102373636736],
    "evolved 4-stage",
)
EVOLVED_6STAGE = ButcherTableau.from_rows(
    [
        [0.142950591304828],
        [0.737459236646687, -0.504634588009118],
        [0.314129433383799, -0.330273585672633, 0.467497950578092],
        [-0.183250006068950, 1.499638222192340, -1.622659422172800, 1.058063997380150],
        [-0.139352972771695, -1.278258776673380, 3.335534496262670, -1.848343730854510,
         0.930420984036919],
    ],
    [0.008109845927407, 0.365341829971006, -0.104294398783786, 0.327711908497619,
     0.318235531221308, 0.084895283166445],
    "evolved 6-stage",
)

# (tableau, order, reported residual sum)
EVOLVED_TABLEAUS = {
    3: (EVOLVED_3STAGE, 3, 5.551e-17),
    4: (EVOLVED_4STAGE, 4, 2.637e-16),
    6: (EVOLVED_6STAGE, 5, 3.038e-14),
}
