"""Interpolated k-harmonic speed functions and their derivatives.

The speed with parameters ``(n, k, rho, kappa)`` acts on an eigenvalue tuple
``z`` through the shifted tuple ``w = z - kappa``::

    gamma(w) = 1 / (rho * sum_S 1/w_S + (1 - rho) / tr(w))

where ``S`` ranges over the k-element index subsets and ``w_S`` is the
corresponding partial sum.  All derivatives below are closed-form (quotient
and chain rule on that reciprocal sum).

Every function accepts a single tuple of shape ``(n,)`` or a stack of shape
``(..., n)`` (matrices: ``(..., n, n)``).  Tuples are sorted ascending before
evaluation, so derivative outputs are indexed by the *sorted* tuple.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .errors import ConeDomainError, ConeUnderflowError, EigenSolverError

#: Subset sums below this (but positive) raise :class:`ConeUnderflowError`.
SUBSET_SUM_FLOOR = 1e-300


@dataclass(frozen=True)
class SpeedSpec:
    """Parameters selecting a member of the speed family.

    Parameters
    ----------
    n : int
        Dimension of the hypersurface (length of the eigenvalue tuple).
    k : int
        Convexity index, ``1 <= k <= n``.
    rho : float
        Interpolation weight in ``(0, 1]``; ``rho = 1`` is the k-harmonic
        mean, ``rho -> 0`` approaches the trace.
    kappa : float
        Nonnegative curvature shift applied before evaluation.
    """

    n: int
    k: int
    rho: float
    kappa: float = 0.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n!r}")
        if int(self.k) != self.k or not 1 <= self.k <= self.n:
            raise ValueError(f"k must satisfy 1 <= k <= n={self.n}, got {self.k!r}")
        if not (0.0 < self.rho <= 1.0):
            raise ValueError(f"rho must lie in (0, 1], got {self.rho!r}")
        if not (self.kappa >= 0.0 and np.isfinite(self.kappa)):
            raise ValueError(f"kappa must be finite and >= 0, got {self.kappa!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "kappa", float(self.kappa))

    def with_rho(self, rho):
        return replace(self, rho=rho)

    @property
    def harmonic(self):
        """The ``rho = 1`` member with the same ``n, k, kappa``."""
        return replace(self, rho=1.0)

    @property
    def is_trace(self):
        return self.k == self.n

    def as_dict(self):
        return {"n": self.n, "k": self.k, "rho": self.rho, "kappa": self.kappa}


@lru_cache(maxsize=None)
def subset_incidence(n, k):
    """0/1 matrix of shape ``(C(n, k), n)``; row ``S`` marks the members of ``S``."""
    rows = list(itertools.combinations(range(n), k))
    m = np.zeros((len(rows), n))
    for i, idx in enumerate(rows):
        m[i, list(idx)] = 1.0
    m.setflags(write=False)
    return m


def _prepare(spec, z):
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != spec.n:
        raise ValueError(f"expected tuples of length {spec.n}, got shape {z.shape}")
    return np.sort(z - spec.kappa, axis=-1)


def _check_cone(spec, s):
    """Raise if any row of subset sums ``s`` leaves the cone."""
    smin = s.min(axis=-1)
    bad = ~(smin > 0.0)
    if np.any(bad):
        idx = int(np.flatnonzero(bad.ravel())[0])
        raise ConeDomainError(
            f"shifted tuple outside the {spec.k}-positive cone "
            f"(smallest {spec.k}-sum {smin.ravel()[idx]:.6g})",
            index=idx,
        )
    tiny = smin < SUBSET_SUM_FLOOR
    if np.any(tiny):
        idx = int(np.flatnonzero(tiny.ravel())[0])
        raise ConeUnderflowError(
            f"{spec.k}-subset sum {smin.ravel()[idx]:.3g} below floor {SUBSET_SUM_FLOOR:g}",
            index=idx,
        )


def _parts(spec, z):
    """Shifted sorted tuple, subset sums, trace and speed value."""
    w = _prepare(spec, z)
    m = subset_incidence(spec.n, spec.k)
    s = w @ m.T
    _check_cone(spec, s)
    t = w.sum(axis=-1)
    if spec.is_trace:
        return w, s, t, t.copy()
    q = spec.rho * (1.0 / s).sum(axis=-1) + (1.0 - spec.rho) / t
    return w, s, t, 1.0 / q


def _unwrap(x):
    return float(x) if np.ndim(x) == 0 else x


def eval_speed(spec, z):
    """Speed value at the (shifted) tuple ``z``; positive inside the cone."""
    return _unwrap(_parts(spec, z)[3])


def speed_and_grad(spec, z):
    """Return ``(gamma, grad)`` sharing one pass over the subset sums."""
    w, s, t, g = _parts(spec, z)
    if spec.is_trace:
        return _unwrap(g), np.ones_like(w)
    m = subset_incidence(spec.n, spec.k)
    inner = spec.rho * (s**-2) @ m + ((1.0 - spec.rho) / t**2)[..., None]
    return _unwrap(g), g[..., None] ** 2 * inner


def grad_eigen(spec, z):
    """First derivatives with respect to the sorted eigenvalues.

    Zero-homogeneous, nonnegative, and satisfies the Euler relation
    ``grad . (z - kappa) = gamma``.
    """
    return speed_and_grad(spec, z)[1]


def hess_eigen(spec, z):
    """Second derivatives with respect to the sorted eigenvalues.

    Symmetric, negative semidefinite, and annihilates the shifted tuple.
    """
    w, s, t, g = _parts(spec, z)
    n = spec.n
    if spec.is_trace:
        return np.zeros(w.shape + (n,))
    m = subset_incidence(n, spec.k)
    rho = spec.rho
    # reciprocal sum Q has Q_p = -grad / g^2 and
    # Q_pq = 2 rho sum_S s^-3 [p,q in S] + 2 (1-rho) / t^3
    grad = g[..., None] ** 2 * (rho * (s**-2) @ m + ((1.0 - rho) / t**2)[..., None])
    q2 = 2.0 * rho * np.einsum("...s,sp,sq->...pq", s**-3, m, m)
    q2 = q2 + (2.0 * (1.0 - rho) / t**3)[..., None, None]
    hess = -(g**2)[..., None, None] * q2 + 2.0 * grad[..., :, None] * grad[..., None, :] / g[..., None, None]
    return 0.5 * (hess + np.swapaxes(hess, -1, -2))


def _eigh(Z):
    Z = np.asarray(Z, dtype=float)
    if Z.shape[-2:] != (Z.shape[-1], Z.shape[-1]):
        raise ValueError(f"expected square matrices, got shape {Z.shape}")
    asym = np.abs(Z - np.swapaxes(Z, -1, -2)).max(initial=0.0)
    if asym > 1e-10 * (1.0 + np.abs(Z).max(initial=0.0)):
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3g})")
    try:
        return np.linalg.eigh(Z)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(str(exc)) from exc


def matrix_first_derivative(spec, Z):
    """Derivative of ``gamma`` with respect to the entries of the symmetric ``Z``.

    Returns ``O diag(grad_eigen(z)) O^T`` where ``Z = O diag(z) O^T``.
    """
    z, O = _eigh(Z)
    d = grad_eigen(spec, z)
    return np.einsum("...ip,...p,...jp->...ij", O, d, O)


def coincidence_threshold(Z):
    """Gap below which two eigenvalues are treated as equal."""
    return 1e-8 * (1.0 + np.linalg.norm(np.asarray(Z, dtype=float), axis=(-2, -1)))


def divided_differences(spec, z, tau):
    """Matrix ``D[p, q] = (grad_p - grad_q) / (z_p - z_q)`` for sorted ``z``.

    Pairs closer than ``tau`` use the analytic limit ``hess_pp - hess_pq``.
    The diagonal is set to the same limit.
    """
    z = np.sort(np.asarray(z, dtype=float), axis=-1)
    grad = grad_eigen(spec, z)
    hess = hess_eigen(spec, z)
    gap = z[..., :, None] - z[..., None, :]
    tau = np.asarray(tau, dtype=float)[..., None, None]
    close = np.abs(gap) <= tau
    safe = np.where(close, 1.0, gap)
    dd = (grad[..., :, None] - grad[..., None, :]) / safe
    limit = np.diagonal(hess, axis1=-2, axis2=-1)[..., :, None] - hess
    return np.where(close, limit, dd)


def second_form_eigenbasis(spec, z, Bt, tau=None):
    """Second derivative ``d^2/ds^2 gamma(Z + s B)`` with ``B`` given in the eigenbasis of ``Z``.

    ``z`` must already be sorted ascending and ``Bt[p, q]`` indexed accordingly.
    """
    z = np.asarray(z, dtype=float)
    Bt = np.asarray(Bt, dtype=float)
    if tau is None:
        tau = 1e-8 * (1.0 + np.linalg.norm(z, axis=-1))
    hess = hess_eigen(spec, z)
    b = np.diagonal(Bt, axis1=-2, axis2=-1)
    diag_part = np.einsum("...p,...pq,...q->...", b, hess, b)
    D = divided_differences(spec, z, tau)
    off = Bt**2
    off = off - np.einsum("...pp->...p", off)[..., None] * np.eye(spec.n)
    return _unwrap(diag_part + np.einsum("...pq,...pq->...", D, off))


def matrix_second_form(spec, Z, B):
    """Quadratic form of the matrix Hessian of ``gamma`` at ``Z`` applied to ``B``."""
    z, O = _eigh(Z)
    B = np.asarray(B, dtype=float)
    Bt = np.swapaxes(O, -1, -2) @ B @ O
    return second_form_eigenbasis(spec, z, Bt, tau=coincidence_threshold(Z))
