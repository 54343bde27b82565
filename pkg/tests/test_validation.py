import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evoscheme import tables
from evoscheme.fitness import TargetFunctionPair, builtin_targets
from evoscheme.schemes import MultistepScheme, StencilScheme
from evoscheme.validation import (
    ConvergenceSweep,
    Ladder,
    compare_schemes,
    estimate_order,
    sweep,
)

TARGETS = builtin_targets()
IVP = TARGETS["ivp"]
EXPO = TARGETS["exponential"]


def _synthetic(h, errors):
    return ConvergenceSweep(None, None, 0.0, np.asarray(h, dtype=float), np.asarray(errors, dtype=float))


# -- ladder ------------------------------------------------------------------------


def test_default_ladder():
    steps = Ladder().steps()
    assert steps.size == 10
    assert steps[0] == 0.1
    assert np.all(np.diff(steps) < 0) and np.all(steps > 0)


@pytest.mark.parametrize("args", [(0.0, 0.5, 3), (0.1, 1.0, 3), (0.1, 0.5, 0)])
def test_invalid_ladder(args):
    with pytest.raises(ValueError):
        Ladder(*args)


# -- order estimates ---------------------------------------------------------------


def test_exact_power_law():
    h = np.array([0.1, 0.05, 0.025])
    est = estimate_order(_synthetic(h, 3 * h**2))
    assert est.slope == pytest.approx(2.0, abs=1e-12)
    assert est.r_squared == pytest.approx(1.0, abs=1e-12)
    assert est.points_used == 3 and est.floor_excluded == 0


def test_floor_point_excluded():
    est = estimate_order(_synthetic([0.1, 0.05, 0.025, 0.0125], [1e-3, 1e-4, 1e-5, 1e-15]))
    assert est.floor_excluded == 1
    assert est.points_used == 3


def test_indeterminate_with_one_usable_point():
    est = estimate_order(_synthetic([0.1, 0.05, 0.025], [0.5, 1e-3, 1e-16]))
    assert est.indeterminate
    assert est.slope is None and est.points_used == 1
    assert est.to_dict()["indeterminate"] is True


def test_non_finite_errors_ignored():
    h = np.array([0.1, 0.05, 0.025, 0.0125])
    est = estimate_order(_synthetic(h, [math.inf, 1e-3, 2.5e-4, 6.25e-5]))
    assert est.points_used == 3
    assert est.slope == pytest.approx(2.0)


@given(p=st.integers(1, 8), log_c=st.floats(-3, 3))
@settings(max_examples=60, deadline=None)
def test_power_law_slope_recovered(p, log_c):
    h = 0.5 ** np.arange(1, 40)
    errors = 10**log_c * h**p
    data = _synthetic(h, errors)
    est = estimate_order(data)
    if est.points_used >= 2:
        assert est.slope == pytest.approx(p, abs=1e-10)


@given(scale=st.floats(1e-3, 1e3))
@settings(max_examples=30, deadline=None)
def test_slope_invariant_under_error_scaling(scale):
    h = np.array([0.1, 0.05, 0.025, 0.0125, 0.00625])
    errors = np.array([3e-3, 8e-4, 1.9e-4, 5.1e-5, 1.2e-5])
    base = estimate_order(_synthetic(h, errors))
    scaled = estimate_order(_synthetic(h, errors * scale), floor=0, ceiling=math.inf)
    unscaled = estimate_order(_synthetic(h, errors), floor=0, ceiling=math.inf)
    assert scaled.slope == pytest.approx(unscaled.slope, abs=1e-10)
    assert base.points_used == 5


# -- sweeps ------------------------------------------------------------------------


def test_rk4_on_ivp_shrinks_sixteenfold():
    result = sweep(tables.RK4, IVP, 1.0, Ladder(0.1, 0.5, 7))
    errors = result.errors
    ratios = errors[:-1] / errors[1:]
    pre_floor = [r for r, e in zip(ratios, errors[1:]) if e > 1e-12]
    assert pre_floor and all(12 < r < 20 for r in pre_floor[1:])
    assert 3.7 <= estimate_order(result).slope <= 4.3


def test_central2_on_exponential_shrinks_fourfold():
    scheme = StencilScheme((-1, 1), (-0.5, 0.5))
    result = sweep(scheme, EXPO, 0.0, Ladder(0.01, 0.5, 6))
    ratios = result.errors[:-1] / result.errors[1:]
    np.testing.assert_allclose(ratios, 4.0, rtol=0.05)


def test_exact_scheme_on_polynomial_sits_on_floor():
    cubic = TargetFunctionPair("cubic", lambda x: x**3 - x, lambda x: 3 * x**2 - 1, (-2.0, 2.0), 0.01)
    scheme = tables.CENTRAL_ROWS[1].theory_scheme()
    result = sweep(scheme, cubic, 0.5, Ladder(0.1, 0.5, 8))
    assert np.all(result.errors <= 1e-12)


def test_integrator_exact_on_polynomial_integrand():
    quadratic = TargetFunctionPair("quad", lambda x: x**3 / 3, lambda x: x**2, (-2.0, 2.0), 0.01)
    result = sweep(tables.RK4, quadratic, 0.5, Ladder(0.1, 0.5, 6))
    assert np.all(result.errors <= 1e-12)


def test_divergent_rung_is_infinite():
    scheme = MultistepScheme((1e308, 1e308))
    result = sweep(scheme, IVP, 1.0, Ladder(0.5, 0.5, 2), starter=tables.MIDPOINT)
    assert np.all(np.isinf(result.errors))
    assert estimate_order(result).indeterminate


def test_incompatible_step_rejected():
    with pytest.raises(ValueError):
        sweep(tables.RK4, IVP, 1.0, Ladder(0.3, 0.5, 2))


def test_stencil_needs_target_pair():
    with pytest.raises(TypeError):
        sweep(StencilScheme((-1, 1), (-0.5, 0.5)), IVP)


@pytest.mark.parametrize("k, expected", [(2, 2), (4, 4)])
def test_adams_bashforth_orders(k, expected):
    result = sweep(tables.ab_theory(k), EXPO, 0.0, Ladder(0.1, 0.5, 10))
    assert abs(estimate_order(result).slope - expected) <= 0.4


def test_forward6_computed_stencil_bends():
    row = tables.FORWARD_ROWS[5]
    result = sweep(row.computed_scheme(), EXPO, 0.0, Ladder(0.1, 0.5, 10))
    best = int(np.argmin(result.errors))
    assert 0 < best < len(result.errors) - 1


# -- comparison reports ------------------------------------------------------------


def test_compare_rk4_with_published_four_stage():
    report = compare_schemes({"rk4": tables.RK4, "evolved": tables.EVOLVED_4STAGE}, IVP, 1.0,
                             Ladder(0.1, 0.5, 8))
    for est in report.estimates.values():
        assert 3.6 <= est.slope <= 4.4
    a, b = report.columns["rk4"], report.columns["evolved"]
    mask = (a > 1e-11) & (b > 1e-11)
    assert np.all(np.abs(np.log10(a[mask] / b[mask])) < 0.5)


def test_compare_fifth_order_schemes():
    report = compare_schemes([tables.EVOLVED_6STAGE, tables.BUTCHER5], IVP, 1.0, Ladder(0.1, 0.5, 8))
    assert list(report.columns) == ["scheme_1", "scheme_2"]
    for est in report.estimates.values():
        assert 4.6 <= est.slope <= 5.4


def test_single_scheme_report_csv():
    report = compare_schemes({"c2": StencilScheme((-1, 1), (-0.5, 0.5))}, EXPO, 0.0,
                             Ladder(0.1, 0.5, 4))
    rows = list(csv.reader(io.StringIO(report.to_csv())))
    assert rows[0] == ["h", "c2"]
    assert len(rows) == 5
    assert float(rows[1][0]) == 0.1
    assert float(rows[2][1]) == report.columns["c2"][1]
    doc = json.loads(report.estimates_json())
    assert set(doc["c2"]) == {"slope", "r_squared", "points_used", "floor_excluded", "indeterminate"}
