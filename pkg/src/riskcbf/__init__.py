"""Risk-aware safety filters for discrete-time control-affine systems.

Worst-case CVaR over mean/covariance ambiguity sets, control-barrier-function
constraints for half-space, polytopic and ellipsoidal safe sets, minimal
modification of a nominal controller, and a seeded pendulum simulator.
"""

__version__ = "0.1.0"

from .constraints import (
    EllipsoidSafetyConstraint,
    LinearSafetyConstraint,
    RiskCbfConfig,
    build_constraint,
    ellipsoid_constraint,
    general_feasibility_check,
    halfspace_constraint,
    polytope_constraint,
    risk_cbf_residual,
)
from .cvar import (
    CvarCertificate,
    CvarLevel,
    QuadraticLoss,
    linear_cvar_bound,
    wc_cvar_elementwise,
    wc_cvar_linear,
    wc_cvar_quadratic,
)
from .errors import (
    InfeasibleError,
    MalformedProblemError,
    RiskCbfError,
    SimulationAbort,
    SolverError,
    ValidationError,
)
from .filters import FilterResult, apply_filter, filter_ellipsoid, filter_halfspace, filter_polytope
from .moments import MomentSet, SecondMomentMatrix, make_moment_set, second_moment_matrix
from .plant import (
    ControlAffinePlant,
    Pendulum,
    PendulumParams,
    make_plant,
    nominal_pendulum_control,
    pendulum_drift,
    pendulum_input_map,
)
from .safe_sets import EllipsoidSet, HalfSpaceSet, PolytopeSet, SmoothSet, barrier_value, contains
from .sim import (
    DisturbanceModel,
    RunSpec,
    SafetyStats,
    Trajectory,
    monte_carlo,
    run_batch,
    run_closed_loop,
    safety_stats,
)
