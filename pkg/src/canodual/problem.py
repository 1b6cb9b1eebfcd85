"""Primal target ``Pi(x) = sum_i V_i(xi_i(x)) - |x|^2/2 - <x, f>`` and the operator F.

A fixed point ``x = F(x)`` of the potential operator ``F = grad P`` with
``P(x) = W(Dx) - <x, f>`` is exactly a stationary point of ``Pi``, since
``grad Pi(x) = F(x) - x``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_vector
from .exceptions import DomainError
from .terms import CanonicalTerm, ExponentialTerm, LogQuadraticTerm, QuarticTerm, XI_FLOOR


@dataclass(frozen=True)
class FixedPointProblem:
    """Fixed-point problem built from canonical terms.

    Parameters
    ----------
    f : array_like, shape (n,)
        Input (source) vector.
    terms : sequence of CanonicalTerm
        One term per dual coordinate; every ``D`` must have ``n`` columns.
    """

    f: np.ndarray
    terms: tuple
    A: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        f = check_vector(self.f, name="f").copy()
        f.setflags(write=False)
        terms = tuple(self.terms)
        if not terms:
            raise ValueError("a problem needs at least one canonical term")
        for i, t in enumerate(terms):
            if not isinstance(t, CanonicalTerm):
                raise TypeError(f"terms[{i}] is not a CanonicalTerm")
            if t.n != f.shape[0]:
                raise ValueError(f"terms[{i}].D has {t.n} columns, expected n={f.shape[0]}")
        A = np.stack([t.A for t in terms])
        A.setflags(write=False)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "A", A)

    @property
    def n(self):
        """Primal dimension."""
        return self.f.shape[0]

    @property
    def m(self):
        """Dual dimension (number of canonical terms)."""
        return len(self.terms)

    def with_f(self, f):
        return FixedPointProblem(f=f, terms=self.terms)

    def with_terms(self, terms):
        return FixedPointProblem(f=self.f, terms=terms)


def _check_x(p, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (p.n,) or x.ndim > 2:
        raise ValueError(f"x must have shape ({p.n},) or (k, {p.n}), got {x.shape}")
    return x


def _measures(p, x):
    """Canonical measures ``xi_i(x)`` with shape ``x.shape[:-1] + (m,)``."""
    return 0.5 * np.einsum("...i,mij,...j->...m", x, p.A, x)


def _check_measures(p, xi):
    for i, t in enumerate(p.terms):
        if isinstance(t, LogQuadraticTerm) and np.any(~(xi[..., i] > XI_FLOOR)):
            raise DomainError("|Dx|^2 must be positive for a log_quadratic term", term_index=i)


def primal_valid(p, x):
    """Boolean mask of points where every canonical measure is in its primal domain."""
    x = _check_x(p, x)
    xi = _measures(p, x)
    ok = np.ones(xi.shape[:-1], dtype=bool)
    for i, t in enumerate(p.terms):
        if isinstance(t, LogQuadraticTerm):
            ok &= xi[..., i] > XI_FLOOR
    return ok


def _term_values(p, xi, method):
    return np.stack([getattr(t, method)(xi[..., i]) for i, t in enumerate(p.terms)], axis=-1)


def eval_Pi(p, x):
    """Value of ``Pi`` at ``x`` (shape ``(n,)`` or a stack ``(k, n)``)."""
    x = _check_x(p, x)
    xi = _measures(p, x)
    _check_measures(p, xi)
    val = _term_values(p, xi, "V").sum(axis=-1) - 0.5 * np.sum(x * x, axis=-1) - x @ p.f
    return float(val) if np.ndim(val) == 0 else val


def grad_Pi(p, x):
    """``sum_i V_i'(xi_i) A_i x - x - f``."""
    x = _check_x(p, x)
    xi = _measures(p, x)
    _check_measures(p, xi)
    dv = _term_values(p, xi, "dV")
    Ax = np.einsum("mij,...j->...mi", p.A, x)
    return np.einsum("...m,...mi->...i", dv, Ax) - x - p.f


def hess_Pi(p, x):
    """``sum_i [V_i' A_i + V_i'' (A_i x)(A_i x)^T] - I``."""
    x = _check_x(p, x)
    xi = _measures(p, x)
    _check_measures(p, xi)
    dv = _term_values(p, xi, "dV")
    d2v = _term_values(p, xi, "d2V")
    Ax = np.einsum("mij,...j->...mi", p.A, x)
    H = np.einsum("...m,mij->...ij", dv, p.A)
    H = H + np.einsum("...m,...mi,...mj->...ij", d2v, Ax, Ax)
    return H - np.eye(p.n)


def eval_F(p, x):
    """Operator ``F(x) = grad P(x)``, computed as ``grad Pi(x) + x``."""
    x = _check_x(p, x)
    return grad_Pi(p, x) + x


def _direct_term_gradient(term, x):
    # Gradient of W_i(D_i x) written straight from D, bypassing A and V.
    D = term.D
    Dx = x @ D.T
    DtDx = Dx @ D
    sq = np.sum(Dx * Dx, axis=-1, keepdims=True)
    if isinstance(term, ExponentialTerm):
        return term.alpha * np.exp(0.5 * sq) * DtDx
    if isinstance(term, QuarticTerm):
        return term.beta * (0.5 * sq - term.lam) * DtDx
    if isinstance(term, LogQuadraticTerm):
        return 2.0 * term.c1 * DtDx + 2.0 * term.c2 * DtDx * (np.log(sq) + 1.0)
    raise TypeError(f"no direct gradient for {type(term).__name__}")


def eval_F_direct(p, x):
    """``F(x) = grad W(Dx) - f`` from the closed-form family gradients.

    Independent of :func:`eval_F`; the two must agree to rounding.
    """
    x = _check_x(p, x)
    _check_measures(p, _measures(p, x))
    return sum(_direct_term_gradient(t, x) for t in p.terms) - p.f


def residual(p, x):
    """Fixed-point residual ``|F(x) - x|``."""
    r = eval_F(p, x) - _check_x(p, x)
    val = np.linalg.norm(r, axis=-1)
    return float(val) if np.ndim(val) == 0 else val
