"""Canonical dual function, its stationary points and G-definiteness classes.

For a problem with terms ``(A_i, V_i)`` the dual function is::

    Pi_d(sigma) = -1/2 f^T G(sigma)^{-1} f - sum_i V_i*(sigma_i),
    G(sigma)    = sum_i sigma_i A_i - I.

Its gradient is ``xi_i(x(sigma)) - V_i*'(sigma_i)`` with ``x(sigma) = G^{-1} f``,
so a dual stationary point yields a primal one by a single linear solve.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_box, check_vector
from .exceptions import DomainError, PoleError

DEFAULT_BOX = (-200.0, 200.0)
DEFAULT_STEPS = 401
DEFAULT_STEPS_HIGH_DIM = 51
# samples per bracketing interval for m = 1; the grid alone is too coarse near poles
_MIN_LINE_SAMPLES = 4001
# a seed that cannot reduce |grad|^2 within this many step halvings is dropped
_MAX_HALVINGS = 12
_SLOW_RATIO, _SLOW_LIMIT = 0.9, 10


class GClass(str, enum.Enum):
    POS_DEF = "PosDef"
    NEG_DEF = "NegDef"
    INDEFINITE = "Indefinite"
    NEAR_SINGULAR = "NearSingular"


@dataclass(frozen=True)
class SolverTolerances:
    """Numerical tolerances of the dual search and of primal verification."""

    gtol: float = 1e-10
    max_iter: int = 100
    eps_def_rel: float = 1e-8
    dedup_rel: float = 1e-6
    gap_tol: float = 1e-6
    res_tol: float = 1e-8


@dataclass
class DualPoint:
    """A stationary point of the dual function."""

    sigma: np.ndarray
    value: float
    grad_norm: float
    g_class: GClass
    g_eigs: np.ndarray

    def to_dict(self):
        return {
            "sigma": self.sigma.tolist(),
            "value": self.value,
            "grad_norm": self.grad_norm,
            "g_class": self.g_class.value,
            "g_eigs": self.g_eigs.tolist(),
        }


@dataclass(frozen=True)
class ScanGrid:
    """Rectangular grid over the dual space; one ``(lo, hi, steps)`` per axis."""

    axes: tuple

    def __post_init__(self):
        axes = []
        for lo, hi, steps in self.axes:
            lo, hi, steps = float(lo), float(hi), int(steps)
            if not lo < hi:
                raise ValueError(f"grid axis needs lo < hi, got ({lo}, {hi})")
            if steps < 2:
                raise ValueError(f"grid axis needs at least 2 steps, got {steps}")
            axes.append((lo, hi, steps))
        object.__setattr__(self, "axes", tuple(axes))

    @property
    def dim(self):
        return len(self.axes)

    @property
    def shape(self):
        return tuple(s for _, _, s in self.axes)

    def axis_nodes(self, k):
        lo, hi, steps = self.axes[k]
        return np.linspace(lo, hi, steps)

    def nodes(self):
        """All grid nodes, shape ``(prod(steps), m)``, first axis slowest."""
        mesh = np.meshgrid(*(self.axis_nodes(k) for k in range(self.dim)), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    def pole_mask(self, p):
        """True where a node is unusable: outside a dual domain or next to a pole.

        A node counts as next to a pole when ``G`` is numerically singular there or
        ``det G`` changes sign between it and a neighbour along any axis.
        """
        S = self.nodes()
        mask = ~in_dual_domain(p, S)
        eigs = _g_eigs(p, S)
        eps = eps_def(p, S)
        mask |= np.min(np.abs(eigs), axis=-1) <= eps
        sign = np.sign(np.prod(eigs, axis=-1)).reshape(self.shape)
        mask = mask.reshape(self.shape)
        for ax in range(self.dim):
            flip = np.diff(sign, axis=ax) != 0
            lead = [slice(None)] * self.dim
            trail = [slice(None)] * self.dim
            lead[ax] = slice(0, -1)
            trail[ax] = slice(1, None)
            mask[tuple(lead)] |= flip
            mask[tuple(trail)] |= flip
        return mask.ravel()


def default_grid(p, box=None, steps=None):
    """Search grid with the package defaults, overridable per call."""
    if box is None:
        box = DEFAULT_BOX
    if steps is None:
        steps = DEFAULT_STEPS if p.m <= 2 else DEFAULT_STEPS_HIGH_DIM
    if p.m >= 3:
        warnings.warn(
            f"dual search over m={p.m} dimensions evaluates {steps}**{p.m} seeds",
            RuntimeWarning,
            stacklevel=2,
        )
    return ScanGrid(tuple((lo, hi, steps) for lo, hi in check_box(box, p.m)))


def _check_sigma(p, sigma):
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim == 0:
        sigma = sigma.reshape(1)
    if sigma.shape[-1:] != (p.m,) or sigma.ndim > 2:
        raise ValueError(f"sigma must have shape ({p.m},) or (k, {p.m}), got {sigma.shape}")
    return sigma


def _a_norm(p):
    return max(np.linalg.norm(A, 2) for A in p.A)


def eps_def(p, sigma):
    """Scale-aware definiteness threshold ``1e-8 (1 + |sigma| max_i |A_i|)``."""
    sigma = np.asarray(sigma, dtype=float)
    return 1e-8 * (1.0 + np.linalg.norm(sigma, axis=-1) * _a_norm(p))


def in_dual_domain(p, sigma):
    sigma = _check_sigma(p, sigma)
    ok = np.ones(sigma.shape[:-1], dtype=bool)
    for i, t in enumerate(p.terms):
        ok &= t.in_dual_domain(sigma[..., i])
    return ok


def build_G(p, sigma):
    """``G(sigma) = sum_i sigma_i A_i - I``."""
    sigma = _check_sigma(p, sigma)
    return np.einsum("...m,mij->...ij", sigma, p.A) - np.eye(p.n)


def _g_eigs(p, S):
    return np.linalg.eigvalsh(build_G(p, S))


def _classify_eigs(eigs, eps):
    if np.any(np.abs(eigs) <= eps):
        return GClass.NEAR_SINGULAR
    if eigs[0] > eps:
        return GClass.POS_DEF
    if eigs[-1] < -eps:
        return GClass.NEG_DEF
    return GClass.INDEFINITE


def classify_G(p, sigma):
    """Definiteness class of ``G(sigma)`` and its ascending eigenvalues."""
    sigma = check_vector(sigma, p.m, name="sigma")
    eigs = np.linalg.eigvalsh(build_G(p, sigma))
    return _classify_eigs(eigs, eps_def(p, sigma)), eigs


def _vstar_parts(p, S, method):
    return np.stack([getattr(t, method)(S[..., i]) for i, t in enumerate(p.terms)], axis=-1)


def _evaluate_batch(p, S, hessian=True):
    """Dual value, gradient and Hessian on a stack of points.

    Returns ``(valid, value, grad, hess, x)``; entries where ``valid`` is False
    (out of domain or singular ``G``) are NaN.
    """
    S = np.atleast_2d(S)
    k, m, n = S.shape[0], p.m, p.n
    value = np.full(k, np.nan)
    grad = np.full((k, m), np.nan)
    hess = np.full((k, m, m), np.nan) if hessian else None
    x = np.full((k, n), np.nan)
    valid = in_dual_domain(p, S)
    if np.any(valid):
        G = build_G(p, S[valid])
        eigs = np.linalg.eigvalsh(G)
        ok = np.min(np.abs(eigs), axis=-1) > eps_def(p, S[valid])
        valid[np.flatnonzero(valid)[~ok]] = False
    if not np.any(valid):
        return valid, value, grad, hess, x
    Sv = S[valid]
    G = build_G(p, Sv)
    xv = np.linalg.solve(G, np.broadcast_to(p.f, (Sv.shape[0], n))[..., None])[..., 0]
    value[valid] = -0.5 * xv @ p.f - _vstar_parts(p, Sv, "Vstar").sum(axis=-1)
    Ax = np.einsum("mij,kj->kmi", p.A, xv)
    lam = 0.5 * np.einsum("kmi,ki->km", Ax, xv)
    grad[valid] = lam - _vstar_parts(p, Sv, "dVstar")
    if hessian:
        # d x / d sigma_j = -G^{-1} A_j x
        GinvAx = np.linalg.solve(G[:, None, :, :], Ax[..., None])[..., 0]
        H = -np.einsum("kmi,kli->kml", Ax, GinvAx)
        d2 = _vstar_parts(p, Sv, "d2Vstar")
        H[:, np.arange(m), np.arange(m)] -= d2
        hess[valid] = 0.5 * (H + np.swapaxes(H, 1, 2))
    x[valid] = xv
    return valid, value, grad, hess, x


def _single(p, sigma, hessian=False):
    sigma = check_vector(sigma, p.m, name="sigma")
    for i, t in enumerate(p.terms):
        if not t.in_dual_domain(sigma[i]):
            raise DomainError(f"sigma_{i + 1}={sigma[i]} outside dual domain {t.dual_domain()}", term_index=i)
    cls, eigs = classify_G(p, sigma)
    if cls is GClass.NEAR_SINGULAR:
        raise PoleError(f"G(sigma) is singular at sigma={sigma.tolist()} (eigenvalues {eigs.tolist()})")
    valid, value, grad, hess, x = _evaluate_batch(p, sigma[None, :], hessian=hessian)
    return value[0], grad[0], (hess[0] if hessian else None), x[0]


def eval_Pid(p, sigma):
    """``Pi_d(sigma)`` via a linear solve with ``G(sigma)``."""
    return float(_single(p, sigma)[0])


def grad_Pid(p, sigma):
    """``xi_i(G^{-1} f) - V_i*'(sigma_i)`` for every term."""
    return _single(p, sigma)[1]


def hess_Pid(p, sigma):
    """``-(A_i x)^T G^{-1} (A_j x) - delta_ij V_i*''(sigma_i)``."""
    return _single(p, sigma, hessian=True)[2]


def _grad_tol(p, sigma, x, tol):
    # gtol is relative to the size of the two cancelling parts of the gradient
    lam = 0.5 * np.einsum("...i,mij,...j->...m", x, p.A, x)
    scale = np.max(np.abs(lam) + np.abs(_vstar_parts(p, sigma, "dVstar")), axis=-1)
    return tol.gtol * (1.0 + scale)


def _make_point(p, sigma):
    value, grad, _, _ = _single(p, sigma)
    cls, eigs = classify_G(p, sigma)
    return DualPoint(
        sigma=np.array(sigma, dtype=float),
        value=float(value),
        grad_norm=float(np.linalg.norm(grad)),
        g_class=cls,
        g_eigs=eigs,
    )


def locate_poles(p, lo=-math.inf, hi=math.inf):
    """Poles of a one-term problem inside ``(lo, hi)``: ``sigma = 1/eig(A)``."""
    if p.m != 1:
        raise ValueError("pole location in closed form needs m = 1")
    eigs = np.linalg.eigvalsh(p.A[0])
    big = np.max(np.abs(eigs))
    poles = sorted({float(1.0 / e) for e in eigs if abs(e) > 1e-14 * max(big, 1.0)})
    merged = []
    for s in poles:
        if not merged or abs(s - merged[-1]) > 1e-12 * (1.0 + abs(s)):
            merged.append(s)
    return [s for s in merged if lo < s < hi]


def newton_bisection(func, lo, hi, xtol=0.0, ftol=0.0, maxit=200):
    """Safeguarded Newton-bisection root of ``func`` bracketed by ``[lo, hi]``.

    ``func(s)`` returns ``(g, dg)``. Newton steps that leave the bracket or fail
    to halve the previous step fall back to bisection.
    """
    g_lo, _ = func(lo)
    g_hi, _ = func(hi)
    if g_lo == 0.0:
        return lo
    if g_hi == 0.0:
        return hi
    if np.sign(g_lo) == np.sign(g_hi):
        raise ValueError("root is not bracketed")
    if g_lo > 0:
        lo, hi = hi, lo
    x = 0.5 * (lo + hi)
    dx_old = dx = abs(hi - lo)
    g, dg = func(x)
    for _ in range(maxit):
        if abs(g) <= ftol:
            break
        if g < 0.0:
            lo = x
        else:
            hi = x
        out = ((x - hi) * dg - g) * ((x - lo) * dg - g) >= 0.0
        if out or abs(2.0 * g) > abs(dx_old * dg):
            dx_old, dx = dx, 0.5 * (hi - lo)
            x_new = lo + dx
        else:
            dx_old, dx = dx, g / dg
            x_new = x - dx
        if x_new == x or abs(dx) <= xtol:
            x = x_new
            break
        x = x_new
        g, dg = func(x)
    return x


def _line_samples(a, b, base, n_min):
    # uniform interior samples plus geometric clustering towards both ends
    count = max(n_min, base.size)
    inner = np.linspace(a, b, count + 2)[1:-1]
    w = b - a
    offsets = w * np.logspace(-13, -2, 45)
    pts = np.concatenate([inner, a + offsets, b - offsets, base[(base > a) & (base < b)]])
    return np.unique(pts)


def _search_1d(p, grid, tol, diagnostics):
    lo_box, hi_box, _ = grid.axes[0]
    dlo, dhi = p.terms[0].dual_domain()
    lo, hi = max(lo_box, dlo), min(hi_box, dhi)
    poles = locate_poles(p, lo, hi)
    diagnostics["poles"] = poles
    edges = [lo, *poles, hi]
    base = grid.axis_nodes(0)

    def gfun(s):
        valid, _, grad, hess, _ = _evaluate_batch(p, np.array([[s]]))
        if not valid[0]:
            return math.nan, math.nan
        return grad[0, 0], hess[0, 0, 0]

    roots = []
    for a, b in zip(edges[:-1], edges[1:]):
        s = _line_samples(a, b, base, _MIN_LINE_SAMPLES)
        # box edges are closed, domain edges and poles are open
        if a == lo_box and a > dlo:
            s = np.concatenate([[a], s])
        if b == hi_box and b < dhi:
            s = np.concatenate([s, [b]])
        valid, _, grad, hess, _ = _evaluate_batch(p, s[:, None])
        s, g, h = s[valid], grad[valid, 0], hess[valid, 0, 0]
        diagnostics["samples"] += int(s.size)
        brackets = []
        zero = np.flatnonzero(g == 0.0)
        roots.extend(float(v) for v in s[zero])
        flips = np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)
        brackets.extend((s[i], s[i + 1]) for i in flips)
        # extrema of g with no sign change between samples may hide a root pair
        for i in np.flatnonzero(np.sign(h[:-1]) * np.sign(h[1:]) < 0):
            if np.sign(g[i]) != np.sign(g[i + 1]):
                continue

            def hfun(t):
                valid_t, _, _, hh, _ = _evaluate_batch(p, np.array([[t]]))
                return (hh[0, 0, 0], math.nan) if valid_t[0] else (math.nan, math.nan)

            ext = _bisect(hfun, s[i], s[i + 1])
            g_ext = gfun(ext)[0]
            if np.sign(g_ext) != np.sign(g[i]):
                brackets.extend([(s[i], ext), (ext, s[i + 1])])
                diagnostics["hidden_pairs"] += 1
            elif abs(g_ext) <= _grad_tol(p, np.array([ext]), _evaluate_batch(p, np.array([[ext]]))[4][0], tol):
                roots.append(float(ext))
        for a_br, b_br in brackets:
            roots.append(float(newton_bisection(gfun, a_br, b_br, maxit=4 * tol.max_iter)))
    return roots


def _bisect(func, a, b, maxit=200):
    fa = func(a)[0]
    for _ in range(maxit):
        mid = 0.5 * (a + b)
        if mid in (a, b):
            break
        fm = func(mid)[0]
        if np.sign(fm) == np.sign(fa):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def _newton_batch(p, S, tol, diagnostics):
    """Damped Newton on grad Pi_d from every row of ``S``; returns converged rows."""
    S = S.copy()
    k = S.shape[0]
    active = np.ones(k, dtype=bool)
    done = np.zeros(k, dtype=bool)
    slow = np.zeros(k, dtype=int)
    valid, val, grad, hess, x = _evaluate_batch(p, S)
    active &= valid
    for _ in range(tol.max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        g, H = grad[idx], hess[idx]
        gn = np.linalg.norm(g, axis=-1)
        conv = gn <= _grad_tol(p, S[idx], x[idx], tol)
        done[idx[conv]] = True
        active[idx[conv]] = False
        idx, g, H, gn = idx[~conv], g[~conv], H[~conv], gn[~conv]
        if idx.size == 0:
            break
        # Newton direction through a clipped eigendecomposition of the dual Hessian
        w, V = np.linalg.eigh(H)
        floor = 1e-12 * np.max(np.abs(w), axis=-1, keepdims=True) + 1e-300
        w = np.where(np.abs(w) < floor, np.where(w < 0, -floor, floor), w)
        d = -np.einsum("kij,kj->ki", V, np.einsum("kji,kj->ki", V, g) / w)
        # keep single steps local so seeds do not jump across poles
        limit = 0.5 * (1.0 + np.linalg.norm(S[idx], axis=-1))
        dn = np.linalg.norm(d, axis=-1)
        d *= np.minimum(1.0, limit / np.maximum(dn, 1e-300))[:, None]
        phi0 = gn**2
        t = np.ones(idx.size)
        pending = np.ones(idx.size, dtype=bool)
        for _ in range(_MAX_HALVINGS):
            j = np.flatnonzero(pending)
            if j.size == 0:
                break
            trial = S[idx[j]] + t[j, None] * d[j]
            v_t, val_t, g_t, h_t, x_t = _evaluate_batch(p, trial)
            phi_t = np.sum(g_t**2, axis=-1)
            ok = v_t & (phi_t <= (1.0 - 1e-4 * t[j]) * phi0[j])
            acc = idx[j[ok]]
            S[acc], val[acc], grad[acc], hess[acc], x[acc] = trial[ok], val_t[ok], g_t[ok], h_t[ok], x_t[ok]
            crawl = phi_t[ok] > _SLOW_RATIO * phi0[j[ok]]
            slow[acc] = np.where(crawl, slow[acc] + 1, 0)
            pending[j[ok]] = False
            t[j[~ok]] *= 0.5
        failed = idx[pending]
        active[failed] = False
        # seeds creeping towards a nonzero minimum of |grad|^2 never converge
        active[slow >= _SLOW_LIMIT] = False
    diagnostics["seeds"] += k
    diagnostics["converged"] += int(done.sum())
    diagnostics["discarded"] += int(k - done.sum())
    return S[done]


def _dedup(points, radius_rel):
    points = points[np.lexsort(points.T[::-1])] if len(points) else points
    kept = []
    for s in points:
        r = radius_rel * (1.0 + np.linalg.norm(s))
        if not kept or np.min(np.linalg.norm(np.asarray(kept) - s, axis=-1)) > r:
            kept.append(s)
    return kept


def _search_nd(p, grid, tol, diagnostics):
    S = grid.nodes()
    mask = grid.pole_mask(p)
    diagnostics["masked_nodes"] = int(mask.sum())
    found = _newton_batch(p, S[~mask], tol, diagnostics)
    # seeds can run off to infinity where the dual gradient decays (log terms)
    lo = np.array([ax[0] for ax in grid.axes])
    hi = np.array([ax[1] for ax in grid.axes])
    inside = np.all((found >= lo) & (found <= hi), axis=-1)
    diagnostics["rejected"] += int(np.sum(~inside))
    found = found[inside]
    if len(found) == 0:
        return []
    # collapse the bulk of duplicates cheaply before the exact radius pass; two
    # points sharing a cell are closer than the smallest dedup radius
    cell = 0.5 * tol.dedup_rel / np.sqrt(p.m)
    _, first = np.unique(np.floor(found / cell), axis=0, return_index=True)
    return [s for s in _dedup(found[np.sort(first)], tol.dedup_rel)]


def _in_box(grid, s):
    return all(lo <= v <= hi for v, (lo, hi, _) in zip(s, grid.axes))


def find_dual_stationary_points(p, grid=None, tol=None, diagnostics=None):
    """All stationary points of ``Pi_d`` found in the grid box.

    For ``m = 1`` the poles are computed in closed form and every interval
    between consecutive poles and domain edges is scanned for sign changes of
    the derivative, which are then refined by safeguarded Newton-bisection.
    For ``m >= 2`` every admissible grid node seeds damped Newton on the dual
    gradient and converged points are de-duplicated.

    Parameters
    ----------
    p : FixedPointProblem
    grid : ScanGrid, optional
        Defaults to :func:`default_grid`.
    tol : SolverTolerances, optional
    diagnostics : dict, optional
        Filled with counters (seeds, converged, discarded) and, for ``m = 1``,
        the located poles.

    Returns
    -------
    list of DualPoint
        Sorted by descending sigma (m = 1) or descending dual value (m >= 2).
        An empty list means no stationary point lies in the box.
    """
    tol = tol or SolverTolerances()
    grid = grid or default_grid(p)
    if grid.dim != p.m:
        raise ValueError(f"grid has {grid.dim} axes, problem has m={p.m}")
    if diagnostics is None:
        diagnostics = {}
    for key in ("seeds", "converged", "discarded", "samples", "hidden_pairs", "rejected"):
        diagnostics.setdefault(key, 0)
    diagnostics.setdefault("poles", [])
    if p.m == 1:
        raw = [np.array([s]) for s in _search_1d(p, grid, tol, diagnostics)]
    else:
        raw = _search_nd(p, grid, tol, diagnostics)
    points = []
    for s in raw:
        try:
            dp = _make_point(p, s)
        except DomainError:
            diagnostics["rejected"] += 1
            continue
        x = _evaluate_batch(p, s[None, :], hessian=False)[4][0]
        if dp.grad_norm > _grad_tol(p, s, x, tol) or not _in_box(grid, s):
            diagnostics["rejected"] += 1
            continue
        points.append(dp)
    # final exact-radius pass; 1-D brackets may share an endpoint root
    unique = []
    for dp in points:
        r = tol.dedup_rel * (1.0 + np.linalg.norm(dp.sigma))
        if not any(np.linalg.norm(dp.sigma - q.sigma) <= r for q in unique):
            unique.append(dp)
    if p.m == 1:
        unique.sort(key=lambda d: -d.sigma[0])
    else:
        unique.sort(key=lambda d: (-d.value, *d.sigma))
    return unique


def scan(p, grid):
    """Dual values over the grid nodes; returns ``(nodes, values, mask)``."""
    S = grid.nodes()
    mask = grid.pole_mask(p)
    values = np.full(S.shape[0], np.nan)
    ok = ~mask
    valid, val, _, _, _ = _evaluate_batch(p, S[ok], hessian=False)
    idx = np.flatnonzero(ok)
    values[idx[valid]] = val[valid]
    mask[idx[~valid]] = True
    return S, values, mask


def write_scan_csv(fh, p, grid):
    """Write ``sigma_1[,sigma_2,...],pid,mask`` rows; masked rows leave pid empty."""
    S, values, mask = scan(p, grid)
    header = [f"sigma_{i + 1}" for i in range(p.m)] + ["pid", "mask"]
    fh.write(",".join(header) + "\n")
    for s, v, mk in zip(S, values, mask):
        cells = [repr(float(c)) for c in s]
        cells.append("" if mk else repr(float(v)))
        cells.append("1" if mk else "0")
        fh.write(",".join(cells) + "\n")
