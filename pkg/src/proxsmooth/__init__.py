"""Stochastic model-based minimization over proximally smooth sets."""

from .approximations import (
    ApproxParams,
    FunctionalInnerApprox,
    IdentityApprox,
    SetApproximation,
    TangentSphereApprox,
    build_approx,
    check_condition_i,
    check_condition_ii,
    retract,
)
from .diagnostics import (
    Grid1DOracle,
    Grid2DOracle,
    ProxOracleConfig,
    SphereMultistartOracle,
    check_one_step,
    check_prox_point_bound,
    check_three_point,
    moreau_prox,
    stationarity,
)
from .driver import (
    RunLog,
    StepSchedule,
    run_algorithm1,
    run_algorithm2,
    sample_tstar,
    theorem_bound,
    theorem_schedule,
    tstar_weights,
)
from .geometry import (
    AffineSubspace,
    Ball,
    Box,
    ConvexSublevelSet,
    MaxQuadratics,
    ProxSmoothSet,
    UnitSphere,
    distance,
    interval,
    project,
    project_sublevel,
)
from .models import (
    CompositeStructure,
    ModelFamily,
    ObjectiveConstants,
    StochasticObjective,
    expected_model_value,
    model_subgradient,
    model_value,
    verify_one_sided_accuracy,
)
from .problems import ProblemBundle, get_problem, problem_ids, validate_constants
from .subsolver import (
    SolveResult,
    SubproblemSpec,
    solve_generic,
    solve_linear_over_sphere,
    solve_model_over_affine,
    solve_over_functional_inner,
    solve_subproblem,
)

__version__ = "0.1.0"
