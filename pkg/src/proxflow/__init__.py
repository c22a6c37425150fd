"""Proximal minimizing-movement gradient flows on geodesic metric spaces.

The library builds discrete gradient-descent trajectories by iterating
metric proximal steps on three exactly computable model spaces (round
spheres, Euclidean spaces, metric star trees), refines them to flow
curves, and empirically certifies the structural inequalities the
construction rests on: the proximal key estimate, commutativity of mixed
first variations, discrete and continuous evolution variational
inequalities, contraction, energy dissipation, and the alternating
two-potential product formula.
"""

from ._kernels import BACKEND
from .errors import (
    ComparisonRangeError,
    ConfigError,
    ConvergenceFailure,
    DegenerateGeodesicError,
    HorizonError,
    SolverError,
    SpaceMismatchError,
    UsageError,
)
from .spaces import (
    CommutativityReport,
    Euclidean,
    Point,
    Space,
    SpaceDescriptor,
    Sphere,
    StarTree,
    check_cat1_triangle,
    check_commutativity,
    comparison_angle,
    convexity_constant,
    distance,
    first_variation,
    geodesic_point,
    space_from_config,
)
from .functionals import (
    Ball,
    Combination,
    CustomFunctional,
    DistTo,
    Functional,
    HalfSqDist,
    ProxResult,
    check_lambda_convexity,
    functional_from_config,
    local_slope,
    moreau_yosida,
    prox,
)
from .scheme import (
    AprioriBounds,
    DiscreteSolution,
    FlowCurve,
    InterpolantBundle,
    Partition,
    apriori_check,
    compare_solutions,
    converge_flow,
    discrete_evi_residual,
    error_bound_check,
    interpolate,
    run_scheme,
)
from .flow import (
    ContractionReport,
    contraction_check,
    discrete_contraction_check,
    dissipation_check,
    evi_check,
    flow,
    flow_ball_chained,
    integrated_evi_check,
    semigroup_check,
    slope_decay_check,
    stationary_check,
)
from .splitting import (
    SplitScheme,
    SplitModuli,
    bound_check,
    delta_budget,
    run_split,
    split_key_estimate_check,
    tk_convergence,
)
from .keycheck import key_estimate_check

__version__ = "0.1.0"
