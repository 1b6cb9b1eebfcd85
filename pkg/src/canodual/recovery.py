"""Primal recovery, verification and stability labelling of dual solutions."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .dual import (
    DualPoint,
    GClass,
    ScanGrid,
    SolverTolerances,
    build_G,
    classify_G,
    default_grid,
    eps_def,
    eval_Pid,
    find_dual_stationary_points,
    hess_Pid,
    in_dual_domain,
    locate_poles,
)
from .exceptions import DomainError, PoleError
from .problem import eval_Pi, grad_Pi, hess_Pi, residual

log = logging.getLogger(__name__)


class Stability(str, enum.Enum):
    GLOBAL_STABLE = "GlobalStable"
    LOCAL_STABLE = "LocalStableFixedPoint"
    LOCAL_UNSTABLE = "LocalUnstableFixedPoint"
    INDETERMINATE = "Indeterminate"


class StabilitySource(str, enum.Enum):
    TRIALITY_MIN_MAX = "TrialityMinMax"
    TRIALITY_DOUBLE_MIN = "TrialityDoubleMin"
    TRIALITY_DOUBLE_MAX = "TrialityDoubleMax"
    PRIMAL_HESSIAN = "PrimalHessianFallback"


@dataclass
class StabilityAssessment:
    stability: Stability
    source: StabilitySource
    triality: str
    fallback: Stability
    disagreement: bool
    dual_hess_eigs: list
    primal_hess_eigs: list


@dataclass
class SolutionRecord:
    """A verified primal-dual pair."""

    x: np.ndarray
    sigma: np.ndarray
    pi_value: float
    pid_value: float
    gap: float
    fp_residual: float
    g_class: GClass
    g_eigs: np.ndarray
    stability: Stability = Stability.INDETERMINATE
    stability_source: StabilitySource = StabilitySource.PRIMAL_HESSIAN
    triality_verdict: str = ""
    fallback_verdict: Stability = Stability.INDETERMINATE
    disagreement: bool = False
    recovered_gap: float = 0.0
    on_pole: bool = False

    def to_dict(self):
        return {
            "x": self.x.tolist(),
            "sigma": self.sigma.tolist(),
            "pi_value": self.pi_value,
            "pid_value": self.pid_value,
            "gap": self.gap,
            "recovered_gap": self.recovered_gap,
            "fp_residual": self.fp_residual,
            "g_class": self.g_class.value,
            "g_eigs": self.g_eigs.tolist(),
            "stability": self.stability.value,
            "stability_source": self.stability_source.value,
            "triality_verdict": self.triality_verdict,
            "fallback_verdict": self.fallback_verdict.value,
            "disagreement": self.disagreement,
            "on_pole": self.on_pole,
        }


@dataclass
class SolveOptions:
    """Options of :func:`solve`.

    ``grid`` wins over ``box``/``grid_steps`` when given.
    """

    box: object = None
    grid_steps: int | None = None
    grid: ScanGrid | None = None
    tol: SolverTolerances = field(default_factory=SolverTolerances)
    polish: bool = True
    pole_recovery: bool = True


def recover_primal(p, dp):
    """``x = G(sigma)^{-1} f`` for a non-singular dual point."""
    sigma = dp.sigma if isinstance(dp, DualPoint) else np.asarray(dp, dtype=float)
    cls, eigs = classify_G(p, sigma)
    if cls is GClass.NEAR_SINGULAR:
        raise PoleError(f"cannot recover x: G(sigma) singular at sigma={sigma.tolist()}, eigenvalues {eigs.tolist()}")
    return np.linalg.solve(build_G(p, sigma), p.f)


def duality_gap(p, x, sigma):
    """``|Pi(x) - Pi_d(sigma)|``."""
    return abs(eval_Pi(p, x) - eval_Pid(p, sigma))


def polish(p, x, max_steps=8):
    """Safeguarded Newton on ``grad Pi`` started from a recovered point.

    Each step is capped at ``0.1 (1 + |x|)`` and only accepted when it lowers
    the residual, so the iterate cannot leave the basin of the recovered root.
    """
    x = np.array(x, dtype=float)
    g = grad_Pi(p, x)
    r = np.linalg.norm(g)
    for _ in range(max_steps):
        if r == 0.0:
            break
        H = hess_Pi(p, x)
        try:
            d = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            d = -np.linalg.lstsq(H, g, rcond=None)[0]
        radius = 0.1 * (1.0 + np.linalg.norm(x))
        dn = np.linalg.norm(d)
        if dn > radius:
            d *= radius / dn
        t = 1.0
        for _ in range(30):
            trial = x + t * d
            try:
                g_t = grad_Pi(p, trial)
            except DomainError:
                t *= 0.5
                continue
            r_t = np.linalg.norm(g_t)
            if r_t < r:
                break
            t *= 0.5
        else:
            break
        if not r_t < r:
            break
        x, g, r = trial, g_t, r_t
    return x


def _definiteness(eigs, eps):
    if np.all(eigs > eps):
        return 1
    if np.all(eigs < -eps):
        return -1
    return 0


def assess_stability(p, x, sigma, g_class):
    """Triality verdict for ``(x, sigma)`` plus the primal-Hessian cross-check."""
    primal_eigs = np.linalg.eigvalsh(hess_Pi(p, x))
    eps = eps_def(p, sigma)
    fallback = {
        1: Stability.LOCAL_STABLE,
        -1: Stability.LOCAL_UNSTABLE,
        0: Stability.INDETERMINATE,
    }[_definiteness(primal_eigs, eps)]

    dual_eigs = []
    verdict = None
    source = StabilitySource.PRIMAL_HESSIAN
    if g_class is GClass.POS_DEF:
        verdict, source, note = Stability.GLOBAL_STABLE, StabilitySource.TRIALITY_MIN_MAX, "GlobalStable (min-max)"
    elif g_class is GClass.NEG_DEF:
        dual_eigs = np.linalg.eigvalsh(hess_Pid(p, sigma))
        kind = _definiteness(dual_eigs, 1e-12 * (1.0 + np.max(np.abs(dual_eigs))))
        if kind < 0:
            verdict, source = Stability.LOCAL_UNSTABLE, StabilitySource.TRIALITY_DOUBLE_MAX
            note = "LocalUnstableFixedPoint (double-max)"
        elif kind > 0 and p.n == p.m:
            verdict, source = Stability.LOCAL_STABLE, StabilitySource.TRIALITY_DOUBLE_MIN
            note = "LocalStableFixedPoint (double-min)"
        elif kind > 0:
            note = "not applicable (n ≠ m)"
        else:
            note = "not applicable (dual saddle)"
    elif g_class is GClass.INDEFINITE:
        note = "not applicable (G indefinite)"
    else:
        note = "not applicable (G singular)"

    disagreement = False
    if verdict is None:
        stability = fallback
    else:
        stability = verdict
        local = Stability.LOCAL_STABLE if verdict is Stability.GLOBAL_STABLE else verdict
        # an indeterminate Hessian does not contradict a triality certificate
        if fallback is not Stability.INDETERMINATE and fallback is not local:
            disagreement = True
            stability, source = fallback, StabilitySource.PRIMAL_HESSIAN
            log.warning(
                "triality says %s but primal Hessian eigenvalues %s say %s at x=%s; using the latter",
                verdict.value, primal_eigs.tolist(), fallback.value, x.tolist(),
            )
    return StabilityAssessment(
        stability=stability,
        source=source,
        triality=note,
        fallback=fallback,
        disagreement=disagreement,
        dual_hess_eigs=list(np.asarray(dual_eigs, dtype=float)),
        primal_hess_eigs=list(primal_eigs),
    )


def label_stability(p, rec):
    """Stability label and its source for a verified record."""
    a = assess_stability(p, rec.x, rec.sigma, rec.g_class)
    return a.stability, a.source


def _pole_points(p, grid):
    """Primal solutions sitting exactly on a pole of a one-term problem.

    When ``f`` is orthogonal to the null space ``N`` of ``G(s)`` at a pole ``s``,
    ``x = y + t v`` with ``G y = f`` solves the canonical equations as soon as
    ``xi(x) = V*'(s)``; this fixes ``t^2`` in closed form for a 1-D null space.
    """
    if p.m != 1:
        return []
    lo, hi, _ = grid.axes[0]
    out = []
    for s in locate_poles(p, lo, hi):
        sigma = np.array([s])
        if not bool(in_dual_domain(p, sigma)):
            continue
        G = build_G(p, sigma)
        w, V = np.linalg.eigh(G)
        null = np.abs(w) <= 1e-9 * (1.0 + abs(s) * np.max(np.abs(w)))
        N = V[:, null]
        if N.shape[1] != 1 or np.linalg.norm(N.T @ p.f) > 1e-12 * (1.0 + np.linalg.norm(p.f)):
            continue
        y = np.linalg.lstsq(G, p.f, rcond=None)[0]
        y -= N @ (N.T @ y)
        target = p.terms[0].dVstar(s)
        t2 = 2.0 * s * (target - 0.5 * y @ p.A[0] @ y)
        if t2 < 0:
            continue
        t = np.sqrt(t2)
        value = -0.5 * p.f @ y - p.terms[0].Vstar(s)
        for c in ([t, -t] if t > 0 else [0.0]):
            out.append((sigma, y + c * N[:, 0], value))
    return out


def _verify(p, sigma, x, pid_value, g_class, g_eigs, tol, do_polish, on_pole=False):
    pi0 = eval_Pi(p, x)
    recovered_gap = abs(pi0 - pid_value)
    if recovered_gap > tol.gap_tol:
        raise ValueError(f"duality gap {recovered_gap:.3e} exceeds {tol.gap_tol:g}")
    if do_polish:
        x = polish(p, x)
    pi_value = eval_Pi(p, x)
    res = residual(p, x)
    if res > tol.res_tol:
        raise ValueError(f"fixed-point residual {res:.3e} exceeds {tol.res_tol:g}")
    rec = SolutionRecord(
        x=x,
        sigma=np.array(sigma, dtype=float),
        pi_value=pi_value,
        pid_value=float(pid_value),
        gap=abs(pi_value - pid_value),
        fp_residual=res,
        g_class=g_class,
        g_eigs=np.asarray(g_eigs),
        recovered_gap=recovered_gap,
        on_pole=on_pole,
    )
    a = assess_stability(p, rec.x, rec.sigma, rec.g_class)
    rec.stability = a.stability
    rec.stability_source = a.source
    rec.triality_verdict = a.triality
    rec.fallback_verdict = a.fallback
    rec.disagreement = a.disagreement
    return rec


def solve(p, options=None, diagnostics=None):
    """Find, recover, verify and label every fixed point reachable from the dual.

    Parameters
    ----------
    p : FixedPointProblem
    options : SolveOptions, optional
    diagnostics : dict, optional
        Receives the dual-search counters, the located poles and a
        ``failures`` list with one entry per rejected dual point.

    Returns
    -------
    list of SolutionRecord
        Sorted by ascending primal value.
    """
    options = options or SolveOptions()
    tol = options.tol
    if diagnostics is None:
        diagnostics = {}
    diagnostics.setdefault("failures", [])
    grid = options.grid or default_grid(p, options.box, options.grid_steps)
    points = find_dual_stationary_points(p, grid, tol, diagnostics)
    diagnostics["dual_points"] = [dp.to_dict() for dp in points]

    records = []
    for dp in points:
        try:
            x = recover_primal(p, dp)
            records.append(_verify(p, dp.sigma, x, dp.value, dp.g_class, dp.g_eigs, tol, options.polish))
        except (ValueError, DomainError) as exc:
            diagnostics["failures"].append({"sigma": dp.sigma.tolist(), "reason": str(exc)})
    if options.pole_recovery:
        for sigma, x, value in _pole_points(p, grid):
            cls, eigs = classify_G(p, sigma)
            try:
                records.append(_verify(p, sigma, x, value, cls, eigs, tol, options.polish, on_pole=True))
            except (ValueError, DomainError) as exc:
                diagnostics["failures"].append({"sigma": sigma.tolist(), "reason": f"pole: {exc}"})
    records.sort(key=lambda r: (r.pi_value, *r.x))
    return records
