"""Canonical function families with closed-form Legendre conjugates.

Every term couples a scalar canonical function ``V`` with a quadratic
canonical measure ``xi = 0.5 * x^T A x``.  The three supported families are

========================  ==========================  ================================
family                    V(xi)                       V*(sigma)
========================  ==========================  ================================
``exponential``           alpha * exp(xi)             sigma * (log(sigma/alpha) - 1)
``quartic``               beta/2 * (xi - lambda)^2    sigma^2 / (2 beta) + lambda sigma
``log_quadratic``         c1 xi + c2 xi log(xi)       c2 * exp((sigma - c1)/c2 - 1)
========================  ==========================  ================================

``exponential`` and ``quartic`` use ``A = D^T D`` so that ``xi = |Dx|^2 / 2``;
``log_quadratic`` uses ``A = 2 D^T D`` so that ``xi = |Dx|^2``.

All evaluation methods accept scalars or numpy arrays.
"""
from __future__ import annotations

import math
from functools import cached_property

import numpy as np

from ._validation import check_matrix, check_positive, check_real
from .exceptions import DomainError

#: Smallest canonical measure accepted by the logarithmic family.
XI_FLOOR = 1e-300


def _as_float(value):
    arr = np.asarray(value, dtype=float)
    return arr


def _unwrap(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


class CanonicalTerm:
    """Base class for one ``(A_i, V_i)`` pair.

    Parameters
    ----------
    D : array_like, shape (m_i, n)
        Linear map applied to the primal vector.
    """

    kind = None
    #: Multiplier ``c`` in ``A = c * D^T D``.
    _metric_scale = 1.0

    def __init__(self, D):
        self.D = check_matrix(D, name="D")
        self.D.setflags(write=False)

    @property
    def n(self):
        return self.D.shape[1]

    @cached_property
    def A(self):
        """Symmetric PSD metric of the canonical measure."""
        A = self._metric_scale * (self.D.T @ self.D)
        A = 0.5 * (A + A.T)
        A.setflags(write=False)
        return A

    def measure(self, x):
        """``0.5 * x^T A x`` for one vector or a stack of row vectors."""
        x = np.asarray(x, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", x, self.A, x)

    def with_D(self, D):
        """Copy of this term with a different linear map."""
        return type(self)(D=D, **self.params)

    # Subclasses override the closed forms below.
    @property
    def params(self):
        raise NotImplementedError

    def dual_domain(self):
        """Open interval ``(lo, hi)`` on which ``V*`` is finite."""
        return (-math.inf, math.inf)

    def in_dual_domain(self, sigma):
        lo, hi = self.dual_domain()
        sigma = _as_float(sigma)
        return (sigma > lo) & (sigma < hi)

    def _check_primal(self, xi):
        return _as_float(xi)

    def _check_dual(self, sigma):
        sigma = _as_float(sigma)
        if not np.all(self.in_dual_domain(sigma)):
            lo, hi = self.dual_domain()
            raise DomainError(f"sigma outside dual domain ({lo}, {hi}) of {self.kind} term")
        return sigma

    def V(self, xi):
        raise NotImplementedError

    def dV(self, xi):
        raise NotImplementedError

    def d2V(self, xi):
        raise NotImplementedError

    def Vstar(self, sigma):
        raise NotImplementedError

    def dVstar(self, sigma):
        raise NotImplementedError

    def d2Vstar(self, sigma):
        raise NotImplementedError

    def to_dict(self):
        return {"kind": self.kind, **self.params, "D": self.D.tolist()}

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{type(self).__name__}({args}, D.shape={self.D.shape})"


class ExponentialTerm(CanonicalTerm):
    """``V(xi) = alpha * exp(xi)``, dual domain ``sigma > 0``."""

    kind = "exponential"

    def __init__(self, D, alpha):
        super().__init__(D)
        self.alpha = check_positive(alpha, "alpha")

    @property
    def params(self):
        return {"alpha": self.alpha}

    def dual_domain(self):
        # open at 0: log(sigma/alpha) diverges there
        return (0.0, math.inf)

    def V(self, xi):
        return _unwrap(self.alpha * np.exp(self._check_primal(xi)))

    def dV(self, xi):
        return self.V(xi)

    def d2V(self, xi):
        return self.V(xi)

    def Vstar(self, sigma):
        s = self._check_dual(sigma)
        return _unwrap(s * (np.log(s / self.alpha) - 1.0))

    def dVstar(self, sigma):
        s = self._check_dual(sigma)
        return _unwrap(np.log(s / self.alpha))

    def d2Vstar(self, sigma):
        s = self._check_dual(sigma)
        return _unwrap(1.0 / s)


class QuarticTerm(CanonicalTerm):
    """Double-well term ``V(xi) = beta/2 * (xi - lambda)^2``."""

    kind = "quartic"

    def __init__(self, D, beta, lam):
        super().__init__(D)
        self.beta = check_positive(beta, "beta")
        self.lam = check_real(lam, "lambda")

    @property
    def params(self):
        return {"beta": self.beta, "lam": self.lam}

    def to_dict(self):
        return {"kind": self.kind, "beta": self.beta, "lambda": self.lam, "D": self.D.tolist()}

    def V(self, xi):
        xi = self._check_primal(xi)
        return _unwrap(0.5 * self.beta * (xi - self.lam) ** 2)

    def dV(self, xi):
        xi = self._check_primal(xi)
        return _unwrap(self.beta * (xi - self.lam))

    def d2V(self, xi):
        xi = self._check_primal(xi)
        return _unwrap(np.full_like(xi, self.beta))

    def Vstar(self, sigma):
        s = self._check_dual(sigma)
        return _unwrap(s**2 / (2.0 * self.beta) + self.lam * s)

    def dVstar(self, sigma):
        s = self._check_dual(sigma)
        return _unwrap(s / self.beta + self.lam)

    def d2Vstar(self, sigma):
        s = self._check_dual(sigma)
        return _unwrap(np.full_like(s, 1.0 / self.beta))


class LogQuadraticTerm(CanonicalTerm):
    """``V(xi) = c1 xi + c2 xi log(xi)`` on ``xi > 0``; ``A = 2 D^T D``."""

    kind = "log_quadratic"
    _metric_scale = 2.0

    def __init__(self, D, c1, c2):
        super().__init__(D)
        self.c1 = check_real(c1, "c1")
        self.c2 = check_positive(c2, "c2")

    @property
    def params(self):
        return {"c1": self.c1, "c2": self.c2}

    def _check_primal(self, xi):
        xi = _as_float(xi)
        if np.any(~(xi > XI_FLOOR)):
            raise DomainError("log_quadratic term needs xi = |Dx|^2 > 0")
        return xi

    def V(self, xi):
        xi = self._check_primal(xi)
        return _unwrap(self.c1 * xi + self.c2 * xi * np.log(xi))

    def dV(self, xi):
        xi = self._check_primal(xi)
        return _unwrap(self.c1 + self.c2 * (np.log(xi) + 1.0))

    def d2V(self, xi):
        xi = self._check_primal(xi)
        return _unwrap(self.c2 / xi)

    def _expo(self, s):
        return np.exp((s - self.c1) / self.c2 - 1.0)

    def Vstar(self, sigma):
        s = self._check_dual(sigma)
        return _unwrap(self.c2 * self._expo(s))

    def dVstar(self, sigma):
        s = self._check_dual(sigma)
        return _unwrap(self._expo(s))

    def d2Vstar(self, sigma):
        s = self._check_dual(sigma)
        return _unwrap(self._expo(s) / self.c2)


TERM_KINDS = {
    cls.kind: cls for cls in (ExponentialTerm, QuarticTerm, LogQuadraticTerm)
}


def make_term(kind, D, **params):
    """Build a term from its family name, e.g. ``make_term("quartic", D, beta=8, lam=1)``."""
    try:
        cls = TERM_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown term kind {kind!r}; expected one of {sorted(TERM_KINDS)}") from None
    return cls(D, **params)


def eval_V(term, xi):
    return term.V(xi)


def eval_dV(term, xi):
    return term.dV(xi)


def eval_d2V(term, xi):
    return term.d2V(xi)


def eval_Vstar(term, sigma):
    return term.Vstar(sigma)


def eval_dVstar(term, sigma):
    return term.dVstar(sigma)


def eval_d2Vstar(term, sigma):
    return term.d2Vstar(sigma)


def dual_domain(term):
    return term.dual_domain()
