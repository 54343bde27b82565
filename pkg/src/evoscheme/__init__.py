"""Evolve finite-difference stencils, Runge-Kutta tableaus and Adams-Bashforth
weights with self-adaptive differential evolution, then audit and validate them."""

from .conditions import (
    CONDITIONS,
    ab_moment_check,
    batch_residuals,
    condition_set,
    evaluate_conditions,
    max_order_for_stage,
    taylor_moment_check,
)
from .de import DeSettings, Individual, Population, RunRecord, run
from .fitness import (
    InitialValueProblem,
    TargetFunctionPair,
    ab_fitness,
    builtin_targets,
    fd_fitness,
    rk_fitness,
    training_set,
)
from .schemes import (
    ButcherTableau,
    MultistepScheme,
    SchemeFormatError,
    StencilScheme,
    StencilTemplate,
    apply_stencil,
    decode_tableau,
    encode_tableau,
    integrate,
    load_scheme,
    save_scheme,
)
from .validation import Ladder, OrderEstimate, compare_schemes, estimate_order, sweep

__version__ = "0.1.0"
