import math
import pickle

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evoscheme import tables
from evoscheme.fitness import (
    ERROR_FLOOR,
    InitialValueProblem,
    TargetFunctionPair,
    ab_fitness,
    builtin_targets,
    coefficient_error,
    fd_fitness,
    log_error,
    rk_fitness,
    training_set,
)
from evoscheme.schemes import (
    MultistepScheme,
    StencilTemplate,
    apply_stencil,
    encode_tableau,
    integrate,
    lagrange_stencil,
)

BELL = builtin_targets()["bell"]
CENTRAL2 = StencilTemplate.central(2)


def _line(domain=(-4.0, 4.0)):
    return TargetFunctionPair(
        "line",
        lambda x: np.asarray(x, dtype=float) * 1.0,
        lambda x: np.ones_like(np.asarray(x, dtype=float)),
        domain,
        0.01,
    )


def _theory(template):
    return np.array([float(m) for m in lagrange_stencil(template.offsets)])


# -- targets -------------------------------------------------------------------------


def test_bell_values():
    assert BELL.f(0.0) == 1.5
    assert BELL.f_prime(0.0) == 0.0
    assert BELL.domain == (-4.0, 4.0) and BELL.sample_step == 0.01


def test_ivp_solution_matches_initial_value():
    ivp = builtin_targets()["ivp"]
    assert isinstance(ivp, InitialValueProblem)
    assert ivp.solution(0.0) == pytest.approx(1.0, abs=1e-15)
    assert ivp.y0 == 1.0 and ivp.t0 == 0.0


def test_ivp_solution_solves_the_ode():
    ivp = builtin_targets()["ivp"]
    t, eps = np.linspace(0, 1, 11), 1e-6
    derivative = (ivp.solution(t + eps) - ivp.solution(t - eps)) / (2 * eps)
    np.testing.assert_allclose(derivative, ivp.rhs(t, ivp.solution(t)), rtol=1e-8)


@pytest.mark.parametrize("x", [-1.0, -0.3, 0.0, 0.4, 1.0])
def test_exponential_ratio(x):
    pair = builtin_targets()["exponential"]
    assert pair.f_prime(x) / pair.f(x) == pytest.approx(18.0, rel=1e-14)


@pytest.mark.parametrize("name", ["bell", "exponential"])
def test_derivatives_agree_with_finite_differences(name):
    pair = builtin_targets()[name]
    lo, hi = pair.domain
    x = np.linspace(lo + 0.01, hi - 0.01, 41)
    eps = 1e-6
    fd = (pair.f(x + eps) - pair.f(x - eps)) / (2 * eps)
    np.testing.assert_allclose(fd, pair.f_prime(x), rtol=1e-6, atol=1e-6)


# -- training sets -------------------------------------------------------------------


@given(n=st.integers(1, 2000), reach=st.integers(0, 6))
@settings(max_examples=60, deadline=None)
def test_training_points_keep_stencil_inside_domain(n, reach):
    ts = training_set(BELL, n, reach)
    assert ts.n == n
    assert np.all(ts.points - reach * BELL.sample_step >= -4.0)
    assert np.all(ts.points + reach * BELL.sample_step <= 4.0)
    assert np.all(np.diff(ts.points) > 0)


def test_single_training_point_is_centre():
    assert training_set(BELL, 1).points.tolist() == [0.0]


def test_training_set_validation():
    with pytest.raises(ValueError):
        training_set(BELL, 0)
    with pytest.raises(ValueError):
        training_set(BELL.with_step(1.0), 10, reach=4)


# -- log error -----------------------------------------------------------------------


@pytest.mark.parametrize(
    "total, expected",
    [(1.0, 0.0), (1e-3, -3.0), (0.0, -300.0), (1e-320, -300.0), (math.inf, math.inf),
     (math.nan, math.inf)],
)
def test_log_error(total, expected):
    assert log_error(total) == pytest.approx(expected)


# -- finite-difference fitness -------------------------------------------------------


def test_theory_beats_every_perturbation():
    training = training_set(BELL, 200, 1)
    fit = fd_fitness(CENTRAL2, BELL, training)
    theory = _theory(CENTRAL2)
    base = fit(theory)
    assert np.isfinite(base) and base < 0
    for i in range(theory.size):
        for delta in (0.1, -0.1):
            bumped = theory.copy()
            bumped[i] += delta
            assert fit(bumped) > base


def test_zero_genome_scores_derivative_magnitude():
    training = training_set(BELL, 200, 1)
    fit = fd_fitness(CENTRAL2, BELL, training)
    expected = math.log10(np.abs(BELL.f_prime(training.points)).sum())
    assert fit(np.zeros(2)) == pytest.approx(expected, rel=1e-12)


def test_fd_fitness_matches_direct_stencil_evaluation():
    template = StencilTemplate.forward(3)
    training = training_set(BELL, 50, template.reach)
    genome = np.array([-1.8, 3.1, -1.4, 0.3])
    estimates = apply_stencil(template.scheme(genome), BELL.f, training.points, BELL.sample_step)
    direct = np.abs(estimates - BELL.f_prime(training.points)).sum()
    assert fd_fitness(template, BELL, training)(genome) == pytest.approx(math.log10(direct), rel=1e-12)


def test_swapped_symmetric_coefficients_are_discriminated():
    training = training_set(BELL, 100, 1)
    fit = fd_fitness(CENTRAL2, BELL, training)
    assert fit([-0.501, 0.5]) != fit([0.5, -0.501])
    assert fit([-0.5, 0.5]) != fit([0.5, -0.5])


def test_fd_fitness_permutation_invariant():
    training = training_set(BELL, 64, 1)
    shuffled = type(training)(np.random.default_rng(0).permutation(training.points))
    genome = np.array([-0.47, 0.52])
    a = fd_fitness(CENTRAL2, BELL, training)(genome)
    b = fd_fitness(CENTRAL2, BELL, shuffled)(genome)
    assert a == pytest.approx(b, rel=1e-13)


def test_fd_error_sum_grows_on_superset():
    coarse = training_set(BELL, 100, 1)
    extra = training_set(BELL, 37, 1).points
    superset = type(coarse)(np.concatenate([coarse.points, extra]))
    genome = np.array([-0.49, 0.51])
    assert fd_fitness(CENTRAL2, BELL, superset)(genome) >= fd_fitness(CENTRAL2, BELL, coarse)(genome)


def test_fd_batch_matches_single_and_counts_points():
    training = training_set(BELL, 80, 3)
    fit = fd_fitness(StencilTemplate.central(6), BELL, training)
    genomes = np.random.default_rng(1).uniform(-1, 1, (9, 6))
    batch = fit.evaluate_batch(genomes)
    singles = [fit(g) for g in genomes]
    np.testing.assert_allclose(batch, singles, rtol=1e-14)
    assert fit.calls == 18
    assert fit.point_evaluations == 18 * 80


def test_fd_genome_length_checked():
    fit = fd_fitness(CENTRAL2, BELL, training_set(BELL, 10, 1))
    with pytest.raises(ValueError):
        fit(np.zeros(3))


@given(genome=st.lists(st.floats(-3, 3), min_size=2, max_size=2),
       other=st.lists(st.floats(-3, 3), min_size=2, max_size=2))
@settings(max_examples=60, deadline=None)
def test_fd_fitness_order_follows_error_sum(genome, other):
    training = training_set(BELL, 40, 1)
    fit = fd_fitness(CENTRAL2, BELL, training)

    def raw(g):
        est = apply_stencil(CENTRAL2.scheme(g), BELL.f, training.points, BELL.sample_step)
        return np.abs(est - BELL.f_prime(training.points)).sum()

    ra, rb = raw(genome), raw(other)
    if abs(ra - rb) > 1e-9 * max(ra, rb):
        assert (fit(genome) < fit(other)) == (ra < rb)


def test_evaluators_pickle():
    fit = fd_fitness(CENTRAL2, BELL, training_set(BELL, 10, 1))
    clone = pickle.loads(pickle.dumps(fit))
    assert clone([-0.5, 0.5]) == fit([-0.5, 0.5])


# -- Runge-Kutta fitness -------------------------------------------------------------


def test_rk4_fitness_at_rounding_level():
    assert rk_fitness(4, 4)(encode_tableau(tables.RK4)) <= -15


def test_published_six_stage_fitness():
    fitness = rk_fitness(6, 5)(encode_tableau(tables.EVOLVED_6STAGE))
    assert fitness == pytest.approx(math.log10(3.038e-14), abs=0.01)


@pytest.mark.parametrize("stage, order, expected", [(2, 2, 1.5), (3, 3, 1 + 1 / 2 + 1 / 3 + 1 / 6),
                                                    (6, 5, None)])
def test_zero_genome_rk_fitness(stage, order, expected):
    from evoscheme.conditions import condition_set

    total = condition_set(order).targets.sum() if expected is None else expected
    fit = rk_fitness(stage, order)
    assert fit(np.zeros(fit.dimension)) == pytest.approx(math.log10(total), rel=1e-14)


@given(seed=st.integers(0, 10**6), stage=st.integers(1, 6))
@settings(max_examples=40, deadline=None)
def test_rk_fitness_bounded_below(seed, stage):
    fit = rk_fitness(stage, min(stage, 4))
    genome = np.random.default_rng(seed).normal(size=fit.dimension)
    assert fit(genome) >= math.log10(ERROR_FLOOR)


def test_exact_tableau_hits_the_clamp():
    assert rk_fitness(2, 2)([0.5, 0.0, 1.0]) == -300.0


# -- Adams-Bashforth fitness ---------------------------------------------------------


def test_euler_exact_on_linear_target():
    # 8 / 8192 is a power of two, so every partial sum is exact
    fit = ab_fitness(1, _line(), 8192)
    assert fit([1.0]) == log_error(0.0) == -300.0


def test_ab2_beats_padded_euler():
    fit = ab_fitness(2, BELL, 800, tables.MIDPOINT)
    assert fit([1.5, -0.5]) < fit([1.0, 0.0])


def test_huge_weights_diverge_to_infinity():
    fit = ab_fitness(2, BELL, 400, tables.MIDPOINT)
    assert fit([1e308, 1e308]) == math.inf


def test_moderately_large_weight_stays_finite():
    # y' = f'(t) does not feed back into y, so a large weight only scales the error
    fit = ab_fitness(2, BELL, 400, tables.MIDPOINT)
    assert np.isfinite(fit([1e6, 0.0]))


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_ab_fitness_matches_step_by_step_integration(k):
    n = 300
    starter = tables.theory_tableau(k) if k > 1 else None
    fit = ab_fitness(k, BELL, n, starter)
    genome = np.random.default_rng(k).uniform(-1, 2, k)
    lo, hi = BELL.domain
    h = (hi - lo) / n
    traj = integrate(MultistepScheme(genome), BELL.as_ode(), lo, float(BELL.f(lo)), h, n, starter)
    direct = np.abs(traj.y[1:] - BELL.f(lo + h * np.arange(1, n + 1))).sum()
    assert fit(genome) == pytest.approx(math.log10(direct), rel=1e-10)


def test_exact_start_values_change_little():
    # replacing the RK starter by exact values only removes the starter's local error
    n = 6400
    fit = ab_fitness(2, BELL, n, tables.MIDPOINT)
    genome = np.array([1.5, -0.5])
    lo, hi = BELL.domain
    h = (hi - lo) / n
    t = lo + h * np.arange(n + 1)
    y = [BELL.f(lo), BELL.f(t[1])]
    for i in range(2, n + 1):
        y.append(y[-1] + h * (1.5 * BELL.f_prime(t[i - 1]) - 0.5 * BELL.f_prime(t[i - 2])))
    exact_start = np.abs(np.array(y[1:]) - BELL.f(t[1:])).sum()
    standard = 10 ** fit(genome)
    assert standard == pytest.approx(exact_start, rel=1e-3)


def test_ab_fitness_requires_starter_for_multistep():
    with pytest.raises(ValueError):
        ab_fitness(3, BELL, 100)


# -- coefficient error ---------------------------------------------------------------


def test_coefficient_error():
    assert coefficient_error([1.0, -0.5], [1.5, -0.5]) == 0.5
    assert coefficient_error([0.1] * 3, [0.1] * 3) == 0.0
