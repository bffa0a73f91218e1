"""Membership and distinguished rays for the k-positive cone and its pinching subcones."""

from __future__ import annotations

import enum
from typing import NamedTuple

import numpy as np

from .errors import ConeDomainError
from .speed import SpeedSpec, eval_speed

#: Floor for the trace when normalizing margins.
SCALE_FLOOR = 1e-300


def k_margin(k, z):
    """Sum of the ``k`` smallest entries divided by ``max(tr z, SCALE_FLOOR)``.

    Vectorized over leading axes.  Every other k-subset sum dominates the
    sum of the k smallest entries, so positivity of this single number is
    equivalent to membership in the open cone.
    """
    z = np.sort(np.asarray(z, dtype=float), axis=-1)
    low = z[..., :k].sum(axis=-1)
    return low / np.maximum(z.sum(axis=-1), SCALE_FLOOR)


def in_k_cone(spec, z):
    """Return ``(inside, margin)`` for a single tuple."""
    margin = float(k_margin(spec.k, z))
    return margin > 0.0, margin


def cone_ratio(spec, z):
    """``tr(z) / gamma_{k,1}(z)``; ``z`` lies in the pinching cone of parameter ``a`` iff this is ``<= a``."""
    z = np.asarray(z, dtype=float)
    harmonic = SpeedSpec(spec.n, spec.k, 1.0)
    g1 = eval_speed(harmonic, z)
    r = z.sum(axis=-1) / g1
    return float(r) if np.ndim(r) == 0 else r


def cyl_tuple(n, m, R=1.0):
    """Cylinder ray tuple: ``m`` zeros followed by ``n - m`` copies of ``R``."""
    if int(m) != m or not 0 <= m <= n - 1:
        raise ValueError(f"m must be an integer in [0, {n - 1}], got {m!r}")
    if not R > 0:
        raise ValueError(f"R must be positive, got {R!r}")
    out = np.full(n, float(R))
    out[: int(m)] = 0.0
    return out


def alpha_rho(spec):
    """Value of ``H / G_rho`` on the cylinder with ``k - 1`` flat directions."""
    if spec.k >= spec.n:
        raise ConeDomainError("alpha_rho requires k <= n - 1")
    unshifted = SpeedSpec(spec.n, spec.k, spec.rho)
    return (spec.n - spec.k + 1) / eval_speed(unshifted, cyl_tuple(spec.n, spec.k - 1, 1.0))


class RayKind(enum.Enum):
    INTERIOR_CONVEX = "InteriorConvex"
    NEAR_CYL = "NearCyl"
    GENERIC_K_CONVEX = "GenericKConvex"
    OUTSIDE_CONE = "OutsideCone"


class RayClass(NamedTuple):
    kind: RayKind
    m: int | None = None

    def __str__(self):
        return f"{self.kind.value}({self.m})" if self.m is not None else self.kind.value


def classify_ray(spec, z, tol=1e-2):
    """Diagnostic label for the direction of ``z``.

    Cylinder rays with ``m >= 1`` flat directions are matched in the
    sup-norm after normalizing to unit trace; the round ray (``m = 0``)
    counts as convex interior.
    """
    z = np.sort(np.asarray(z, dtype=float))
    inside, _ = in_k_cone(spec, z)
    if not inside:
        return RayClass(RayKind.OUTSIDE_CONE)
    unit = z / z.sum()
    n = spec.n
    for m in range(1, n):
        ref = cyl_tuple(n, m, 1.0) / (n - m)
        if np.max(np.abs(unit - ref)) <= tol:
            return RayClass(RayKind.NEAR_CYL, m)
    if unit[0] > tol:
        return RayClass(RayKind.INTERIOR_CONVEX)
    return RayClass(RayKind.GENERIC_K_CONVEX)
