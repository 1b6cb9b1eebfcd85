"""scikit-learn style wrappers around the solver and the primal oracle."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .dual import SolverTolerances
from .io import ProblemFile, parse_problem
from .oracle import cross_validate, multistart_stationary_search
from .problem import FixedPointProblem
from .recovery import SolveOptions, Stability, solve


def check_problem(problem):
    """Accept a FixedPointProblem, a parsed ProblemFile or a decoded problem dict."""
    if isinstance(problem, FixedPointProblem):
        return problem
    if isinstance(problem, ProblemFile):
        return problem.problem
    if isinstance(problem, dict):
        return parse_problem(problem).problem
    raise TypeError(f"expected a FixedPointProblem, got {type(problem).__name__}")


class CanonicalDualSolver(BaseEstimator):
    """Fixed-point solver driven by the canonical dual problem.

    Parameters
    ----------
    box : pair or list of pairs, optional
        Dual search box; ``(-200, 200)`` per axis by default.
    grid_steps : int, optional
        Grid nodes per dual axis.
    gtol, max_iter, gap_tol, res_tol : float, int, float, float
        See :class:`~canodual.dual.SolverTolerances`.
    polish : bool
        Refine recovered points with Newton on the primal gradient.

    Attributes
    ----------
    records_ : list of SolutionRecord
        Verified fixed points, ascending primal value.
    fixed_points_ : ndarray, shape (k, n)
    values_ : ndarray, shape (k,)
    labels_ : list of str
        Stability label of each record.
    diagnostics_ : dict

    Examples
    --------
    >>> from canodual import load_example
    >>> est = CanonicalDualSolver().fit(load_example("example2"))
    >>> est.labels_[0]
    'GlobalStable'
    """

    def __init__(self, box=None, grid_steps=None, gtol=1e-10, max_iter=100, gap_tol=1e-6, res_tol=1e-8,
                 polish=True):
        self.box = box
        self.grid_steps = grid_steps
        self.gtol = gtol
        self.max_iter = max_iter
        self.gap_tol = gap_tol
        self.res_tol = res_tol
        self.polish = polish

    def _options(self):
        tol = SolverTolerances(gtol=self.gtol, max_iter=self.max_iter, gap_tol=self.gap_tol, res_tol=self.res_tol)
        return SolveOptions(box=self.box, grid_steps=self.grid_steps, tol=tol, polish=self.polish)

    def fit(self, problem, y=None):
        p = check_problem(problem)
        self.n_features_in_ = p.n
        self.diagnostics_ = {}
        self.records_ = solve(p, self._options(), self.diagnostics_)
        self.fixed_points_ = np.array([r.x for r in self.records_]).reshape(-1, p.n)
        self.values_ = np.array([r.pi_value for r in self.records_])
        self.labels_ = [r.stability.value for r in self.records_]
        return self

    @property
    def global_fixed_point_(self):
        """The globally stable fixed point, or None when no dual point makes G positive definite."""
        check_is_fitted(self, "records_")
        for r in self.records_:
            if r.stability is Stability.GLOBAL_STABLE:
                return r.x
        return None


class PrimalOracle(BaseEstimator):
    """Multistart primal search; ``fit`` stores the stationary points found."""

    def __init__(self, box=(-10.0, 10.0), n_starts=2000, seed=0):
        self.box = box
        self.n_starts = n_starts
        self.seed = seed

    def fit(self, problem, y=None):
        p = check_problem(problem)
        self.n_features_in_ = p.n
        self.points_ = multistart_stationary_search(p, self.box, self.n_starts, self.seed)
        self.fixed_points_ = np.array([q.x for q in self.points_]).reshape(-1, p.n)
        self.values_ = np.array([q.pi_value for q in self.points_])
        return self

    def compare(self, solver):
        """Cross-validate against a fitted :class:`CanonicalDualSolver`."""
        check_is_fitted(self, "points_")
        check_is_fitted(solver, "records_")
        return cross_validate(solver.records_, self.points_)
