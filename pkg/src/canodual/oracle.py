"""Brute-force primal search used to cross-check the dual pipeline.

Stationary points of ``Pi`` are hunted directly in x-space with damped Newton
from a scrambled Sobol sequence of starts; nothing here touches the dual.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from ._validation import check_box
from .problem import _measures, _term_values, primal_valid

MAX_DIM = 6
GRAD_TOL = 1e-8


@dataclass
class OraclePoint:
    x: np.ndarray
    pi_value: float
    grad_norm: float
    hess_signature: tuple  # (positive, negative, near-zero) eigenvalue counts

    def to_dict(self):
        return {
            "x": self.x.tolist(),
            "pi_value": self.pi_value,
            "grad_norm": self.grad_norm,
            "hess_signature": list(self.hess_signature),
        }


@dataclass
class OracleReport:
    points: list
    matched: list = field(default_factory=list)
    unmatched_oracle: list = field(default_factory=list)
    unmatched_dual: list = field(default_factory=list)
    value_mismatches: list = field(default_factory=list)

    @property
    def ok(self):
        return not (self.unmatched_oracle or self.unmatched_dual or self.value_mismatches)

    def to_dict(self):
        return {
            "ok": self.ok,
            "points": [q.to_dict() for q in self.points],
            "matched": self.matched,
            "unmatched_oracle": self.unmatched_oracle,
            "unmatched_dual": self.unmatched_dual,
            "value_mismatches": self.value_mismatches,
        }


def _batch(p, X):
    """``(valid, value, grad, hess)`` of Pi on a stack of points."""
    k, n = X.shape
    valid = primal_valid(p, X)
    value = np.full(k, np.nan)
    grad = np.full((k, n), np.nan)
    hess = np.full((k, n, n), np.nan)
    if not np.any(valid):
        return valid, value, grad, hess
    Xv = X[valid]
    xi = _measures(p, Xv)
    v = _term_values(p, xi, "V")
    dv = _term_values(p, xi, "dV")
    d2v = _term_values(p, xi, "d2V")
    Ax = np.einsum("mij,kj->kmi", p.A, Xv)
    value[valid] = v.sum(axis=-1) - 0.5 * np.sum(Xv * Xv, axis=-1) - Xv @ p.f
    grad[valid] = np.einsum("km,kmi->ki", dv, Ax) - Xv - p.f
    H = np.einsum("km,mij->kij", dv, p.A) + np.einsum("km,kmi,kmj->kij", d2v, Ax, Ax)
    hess[valid] = H - np.eye(n)
    return valid, value, grad, hess


def _nudge_invalid(p, X):
    # move starts off a log singularity along the dominant direction of each metric
    bad = ~primal_valid(p, X)
    if np.any(bad):
        w, V = np.linalg.eigh(p.A.sum(axis=0))
        X[bad] += 1e-6 * V[:, -1]
    return X


def _newton(p, X, max_iter):
    X = X.copy()
    k = X.shape[0]
    valid, _, grad, hess = _batch(p, X)
    active = valid.copy()
    done = np.zeros(k, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        g = grad[idx]
        gn = np.linalg.norm(g, axis=-1)
        conv = gn <= 0.1 * GRAD_TOL
        done[idx[conv]] = True
        active[idx[conv]] = False
        idx, g, gn = idx[~conv], g[~conv], gn[~conv]
        if idx.size == 0:
            break
        w, V = np.linalg.eigh(hess[idx])
        floor = 1e-12 * np.max(np.abs(w), axis=-1, keepdims=True) + 1e-300
        w = np.where(np.abs(w) < floor, np.where(w < 0, -floor, floor), w)
        d = -np.einsum("kij,kj->ki", V, np.einsum("kji,kj->ki", V, g) / w)
        limit = 0.5 * (1.0 + np.linalg.norm(X[idx], axis=-1))
        dn = np.linalg.norm(d, axis=-1)
        d *= np.minimum(1.0, limit / np.maximum(dn, 1e-300))[:, None]
        phi0 = gn**2
        t = np.ones(idx.size)
        pending = np.ones(idx.size, dtype=bool)
        for _ in range(40):
            j = np.flatnonzero(pending)
            if j.size == 0:
                break
            trial = X[idx[j]] + t[j, None] * d[j]
            v_t, _, g_t, h_t = _batch(p, trial)
            phi = np.sum(g_t**2, axis=-1)
            ok = v_t & (phi <= (1.0 - 1e-4 * t[j]) * phi0[j])
            acc = idx[j[ok]]
            X[acc], grad[acc], hess[acc] = trial[ok], g_t[ok], h_t[ok]
            pending[j[ok]] = False
            t[j[~ok]] *= 0.5
        active[idx[pending]] = False
    # stalled just above the threshold still counts if within the contract
    final = ~done & valid
    if np.any(final):
        gn = np.linalg.norm(grad[final], axis=-1)
        done[np.flatnonzero(final)[gn <= GRAD_TOL]] = True
    return X[done]


def multistart_stationary_search(p, box, n_starts=2000, seed=0, max_iter=100):
    """Stationary points of Pi found from ``n_starts`` low-discrepancy starts.

    Parameters
    ----------
    p : FixedPointProblem
        Primal dimension at most 6.
    box : pair or sequence of pairs
        Per-axis sampling interval for the starts.
    n_starts : int
    seed : int
        Scrambling seed of the Sobol sequence; identical seeds give identical output.

    Returns
    -------
    list of OraclePoint
        Sorted by ascending value, ties broken lexicographically in x.
    """
    if p.n > MAX_DIM:
        raise ValueError(f"primal oracle is limited to n <= {MAX_DIM}, got n={p.n}")
    bounds = np.array(check_box(box, p.n))
    sampler = qmc.Sobol(d=p.n, scramble=True, seed=seed)
    # power-of-two draw keeps the balance properties; extra points are dropped
    m = int(np.ceil(np.log2(max(n_starts, 1))))
    U = sampler.random_base2(m)[:n_starts]
    X = qmc.scale(U, bounds[:, 0], bounds[:, 1])
    X = _nudge_invalid(p, X)
    found = _newton(p, X, max_iter)
    if len(found) == 0:
        return []
    order = np.lexsort(found.T[::-1])
    found = found[order]
    kept = []
    for x in found:
        r = 1e-5 * (1.0 + np.linalg.norm(x))
        if not any(np.linalg.norm(x - q) <= r for q in kept):
            kept.append(x)
    X = np.array(kept)
    _, value, grad, hess = _batch(p, X)
    points = []
    for x, v, g, H in zip(X, value, grad, hess):
        w = np.linalg.eigvalsh(H)
        eps = 1e-8 * (1.0 + np.max(np.abs(w)))
        sig = (int(np.sum(w > eps)), int(np.sum(w < -eps)), int(np.sum(np.abs(w) <= eps)))
        points.append(OraclePoint(x=x, pi_value=float(v), grad_norm=float(np.linalg.norm(g)), hess_signature=sig))
    points.sort(key=lambda q: (q.pi_value, *q.x))
    return points


def cross_validate(records, oracle_pts, value_tol=1e-4):
    """Greedy nearest pairing between solver records and oracle points.

    A pair is accepted when the distance is at most ``1e-3 (1 + |x|)``; paired
    values that differ by more than ``value_tol`` are reported as mismatches.
    """
    pairs = []
    for i, rec in enumerate(records):
        for j, q in enumerate(oracle_pts):
            pairs.append((float(np.linalg.norm(rec.x - q.x)), i, j))
    pairs.sort()
    used_r, used_o = set(), set()
    report = OracleReport(points=list(oracle_pts))
    for dist, i, j in pairs:
        if i in used_r or j in used_o:
            continue
        if dist > 1e-3 * (1.0 + np.linalg.norm(records[i].x)):
            continue
        used_r.add(i)
        used_o.add(j)
        diff = abs(records[i].pi_value - oracle_pts[j].pi_value)
        report.matched.append({"record": i, "oracle": j, "distance": dist, "value_diff": diff})
        if diff > value_tol:
            report.value_mismatches.append({"record": i, "oracle": j, "value_diff": diff})
    report.unmatched_dual = [i for i in range(len(records)) if i not in used_r]
    report.unmatched_oracle = [j for j in range(len(oracle_pts)) if j not in used_o]
    report.matched.sort(key=lambda d: d["record"])
    return report
