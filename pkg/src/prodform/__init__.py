"""Reversible Markov processes with product-form stationary laws exp(A r + b)/Z.

The toolkit decides which aggregate targets A^T pi are reachable by tuning
the log-rate parameters r, finds the parameters exactly by convex
minimization, and tunes them online from simulated occupancy measurements
with provably convergent step/period schedules.
"""

from .exact import (
    DualSolution,
    MaxIterationsError,
    NotAchievableError,
    StationaryDistribution,
    aggregates,
    dual_objective,
    gradient,
    log_likelihood,
    primal_objective,
    solve_dual,
    stationary,
    stationary_from_generator,
)
from .model import (
    ProductFormModel,
    ReducibleModelError,
    StateSpace,
    TransitionTemplate,
    ValidationReport,
    build_generator,
    load_model,
    model_digest,
    save_model,
    validate,
)
from .networks import (
    birth_death_mass_transform,
    build_birth_death,
    build_csma,
    build_jackson,
    csma_per_class_achievable,
)
from .online import (
    ConditionReport,
    ModelConstants,
    RunConfig,
    RunTrace,
    Schedule,
    ScheduleError,
    check_schedule_conditions,
    clamp,
    constants,
    custom_schedule,
    deviation_bound,
    make_schedule,
    parameter_growth_bound,
    run_online,
    write_run_manifest,
    write_trace_csv,
)
from .region import (
    MembershipResult,
    check_membership,
    region_extremes,
    target_from_transform,
)
from .simulate import (
    OccupancyMeasure,
    SimState,
    default_backend,
    estimate_aggregates,
    have_compiled_backend,
    new_sim_state,
    simulate_window,
)

__version__ = "0.1.0"
