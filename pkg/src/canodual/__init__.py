"""Fixed points of potential operators through canonical duality.

The fixed points of ``F = grad P`` are the stationary points of
``Pi(x) = P(x) - |x|^2 / 2``.  When ``P`` is built from canonical terms this
package solves the low-dimensional dual problem instead, recovers every primal
solution by a linear solve and labels it with the triality theory.
"""
from .dual import (
    DualPoint,
    GClass,
    ScanGrid,
    SolverTolerances,
    build_G,
    classify_G,
    default_grid,
    eval_Pid,
    find_dual_stationary_points,
    grad_Pid,
    hess_Pid,
    locate_poles,
)
from .estimator import CanonicalDualSolver, PrimalOracle, check_problem
from .exceptions import DomainError, PoleError, ProblemFileError
from .io import load_example, load_problem
from .oracle import OracleReport, cross_validate, multistart_stationary_search
from .problem import FixedPointProblem, eval_F, eval_F_direct, eval_Pi, grad_Pi, hess_Pi, residual
from .recovery import (
    SolutionRecord,
    SolveOptions,
    Stability,
    StabilitySource,
    duality_gap,
    label_stability,
    recover_primal,
    solve,
)
from .terms import ExponentialTerm, LogQuadraticTerm, QuarticTerm, make_term

__version__ = "0.1.0"
