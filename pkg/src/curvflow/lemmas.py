"""Randomized falsification checks for the algebraic speed inequalities.

Samples are drawn from a compact slice ``{tr z = 1, tr z <= alpha * gamma_{k,1}(z)}``
of the k-positive cone.  Checks return a :class:`LemmaReport`; constant
estimates return :class:`ConstantEstimate` objects.  Neither is a certified
bound: extremes are observed over samples and then pushed further by a
local perturbation search.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cones import cone_ratio, k_margin
from .errors import CurvFlowError
from .profile import arc_derivative, geometry
from .speed import (
    SpeedSpec,
    divided_differences,
    eval_speed,
    grad_eigen,
    hess_eigen,
    matrix_first_derivative,
    matrix_second_form,
    second_form_eigenbasis,
)

_STREAMS = {"slice": 0, "direction": 1, "refine": 2, "rotation": 3}
MAX_LISTED = 20
POLE_EXCLUSION = 0.2


class SliceSampler:
    """Deterministic sampler for the unit-trace slice of a pinching cone.

    Draws ``n`` exponentials, flips the sign of a random subset of at most
    ``k - 1`` coordinates, renormalizes to unit trace and rejects until the
    tuple lies in the cone with ``cone_ratio <= alpha``.  Samples are
    generated in fixed-size chunks so a larger ``count`` always extends a
    smaller one.
    """

    def __init__(self, spec, alpha, seed=0, count=10_000, chunk=4096):
        self.spec = spec
        self.alpha = float(alpha)
        self.seed = int(seed)
        self.count = int(count)
        self.chunk = int(chunk)
        floor = spec.n / eval_speed(SpeedSpec(spec.n, spec.k, 1.0), np.ones(spec.n))
        if not self.alpha >= floor:
            raise ValueError(f"alpha={alpha} is below the smallest admissible value {floor:.6g}")

    def rng(self, stream):
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(_STREAMS[stream],)))

    def draw(self, count=None):
        count = self.count if count is None else int(count)
        n, k = self.spec.n, self.spec.k
        rng = self.rng("slice")
        out, have = [], 0
        while have < count:
            e = rng.exponential(size=(self.chunk, n))
            flips = rng.integers(0, k, size=self.chunk)
            order = np.argsort(rng.random((self.chunk, n)), axis=1)
            ranks = np.argsort(order, axis=1)
            z = np.where(ranks < flips[:, None], -e, e)
            tr = z.sum(axis=1)
            z = z[tr > 0] / tr[tr > 0, None]
            z = z[k_margin(k, z) > 1e-12]
            if z.size:
                z = z[cone_ratio(self.spec, z) <= self.alpha]
            out.append(np.sort(z, axis=1))
            have += len(z)
        return np.concatenate(out)[:count]

    def unit_vectors(self, count, rng=None):
        rng = rng or self.rng("direction")
        xi = rng.standard_normal((count, self.spec.n))
        return xi / np.linalg.norm(xi, axis=1, keepdims=True)

    def symmetric_matrices(self, count, rng=None):
        rng = rng or self.rng("direction")
        g = rng.standard_normal((count, self.spec.n, self.spec.n))
        return 0.5 * (g + np.swapaxes(g, 1, 2))

    def rotations(self, count, rng=None):
        rng = rng or self.rng("rotation")
        q, r = np.linalg.qr(rng.standard_normal((count, self.spec.n, self.spec.n)))
        return q * np.sign(np.diagonal(r, axis1=1, axis2=2))[:, None, :]

    def project(self, z):
        """Renormalize to unit trace; ``None`` if the result leaves the slice."""
        tr = z.sum()
        if not tr > 0:
            return None
        z = np.sort(z / tr)
        if not k_margin(self.spec.k, z) > 1e-12 or cone_ratio(self.spec, z) > self.alpha:
            return None
        return z


# ----- symmetric 3-tensors ------------------------------------------------


def symmetrize3(T):
    """Average over the six index permutations (last three axes)."""
    perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    lead = T.ndim - 3
    axes = [tuple(range(lead)) + tuple(lead + i for i in p) for p in perms]
    return sum(np.transpose(T, a) for a in axes) / 6.0


def sym3_indices(n):
    return [(i, j, l) for i in range(n) for j in range(i, n) for l in range(j, n)]


def sym3_components(T):
    """Independent components ``T[i, j, l]`` with ``i <= j <= l``."""
    n = T.shape[-1]
    return np.stack([T[..., i, j, l] for i, j, l in sym3_indices(n)], axis=-1)


def sym3_expand(c, n):
    """Inverse of :func:`sym3_components`."""
    c = np.asarray(c, dtype=float)
    T = np.zeros(c.shape[:-1] + (n, n, n))
    for m, (i, j, l) in enumerate(sym3_indices(n)):
        for a, b, d in {(i, j, l), (i, l, j), (j, i, l), (j, l, i), (l, i, j), (l, j, i)}:
            T[..., a, b, d] = c[..., m]
    return T


# ----- reports --------------------------------------------------------------


@dataclass
class LemmaReport:
    lemma: str
    spec: SpeedSpec
    alpha: float
    seed: int
    sample_count: int
    violation_count: int
    worst_margin: float
    violations: list = field(default_factory=list)
    extremizer: dict = field(default_factory=dict)
    estimates: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.violation_count == 0

    def as_dict(self):
        return {
            "lemma": self.lemma,
            "spec": self.spec.as_dict(),
            "alpha": self.alpha,
            "seed": self.seed,
            "sample_count": self.sample_count,
            "violation_count": self.violation_count,
            "worst_margin": self.worst_margin,
            "ok": self.ok,
            "violations": self.violations,
            "extremizer": self.extremizer,
            "estimates": {k: (v.as_dict() if hasattr(v, "as_dict") else v) for k, v in self.estimates.items()},
        }

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2, sort_keys=True, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


@dataclass
class ConstantEstimate:
    """Observed extremum of an objective over samples, plus local refinement."""

    name: str
    kind: str
    value: float
    observed: float
    argext: dict
    sample_count: int
    refinement_iterations: int

    def as_dict(self):
        return {
            "name": self.name,
            "kind": self.kind,
            "value": self.value,
            "observed": self.observed,
            "argext": {k: np.asarray(v).tolist() for k, v in self.argext.items()},
            "sample_count": self.sample_count,
            "refinement_iterations": self.refinement_iterations,
        }


def refine(objective, x0, propose, rng, iterations=1000, step=0.05):
    """Greedy random search minimizing ``objective``; halves ``step`` on failure.

    ``propose(x, step, rng)`` returns a candidate or ``None`` if infeasible.
    Never returns a point worse than ``x0``.
    """
    best_x, best = x0, objective(x0)
    for _ in range(iterations):
        cand = propose(best_x, step, rng)
        val = objective(cand) if cand is not None else math.inf
        if val < best:
            best_x, best = cand, val
        else:
            step *= 0.5
            if step < 1e-12:
                step = 0.05
    return best_x, best


def _estimate(name, kind, values, points, objective_point, propose, rng, iterations, extra=None):
    sign = 1.0 if kind == "inf" else -1.0
    i = int(np.argmin(sign * values))
    observed = float(values[i])
    x, best = refine(lambda p: sign * objective_point(p), points[i], propose, rng, iterations)
    value = sign * best
    argext = {"z": x} if extra is None else extra(x)
    return ConstantEstimate(name, kind, float(value), observed, argext, len(values), iterations)


def _listed(mask, **cols):
    idx = np.flatnonzero(mask)[:MAX_LISTED]
    return [{"index": int(i), **{k: np.asarray(v[i]).tolist() for k, v in cols.items()}} for i in idx]


def _harmonic(spec):
    return SpeedSpec(spec.n, spec.k, 1.0)


def _unshifted(spec):
    return SpeedSpec(spec.n, spec.k, spec.rho)


# ----- zeroth order -----------------------------------------------------------


def check_sandwich(sampler, z=None):
    """``gamma_{k,1} <= gamma_rho <= min(tr, gamma_{k,1} / rho)`` on every sample."""
    spec = _unshifted(sampler.spec)
    z = sampler.draw() if z is None else np.atleast_2d(z)
    tr = z.sum(axis=1)
    g1 = np.atleast_1d(eval_speed(_harmonic(spec), z))
    gr = np.atleast_1d(eval_speed(spec, z))
    lower = (gr - g1) / tr
    upper = (np.minimum(tr, g1 / spec.rho) - gr) / tr
    margin = np.minimum(lower, upper)
    bad = margin < -1e-12
    i = int(np.argmin(margin))
    return LemmaReport(
        "sandwich", spec, sampler.alpha, sampler.seed, len(z), int(bad.sum()), float(margin[i]),
        _listed(bad, z=z, lower=lower, upper=upper), {"z": z[i].tolist()},
    )


# ----- first order ------------------------------------------------------------


def first_order_bounds(spec, z, xi):
    """Return ``(value, lower, upper)`` of the first-derivative quadratic form in ``xi`` (diagonal ``Z``)."""
    z = np.atleast_2d(z)
    xi = np.atleast_2d(xi)
    tr = z.sum(axis=1)
    g1 = np.atleast_1d(eval_speed(_harmonic(spec), z))
    a1 = (grad_eigen(_harmonic(spec), z) * xi**2).sum(axis=1)
    ar = (grad_eigen(spec, z) * xi**2).sum(axis=1)
    nxi = (xi**2).sum(axis=1)
    lower = spec.rho * a1 + (1 - spec.rho) * (g1 / tr) ** 2 * nxi
    upper = np.minimum(1 / spec.rho, (tr / g1) ** 2) * a1 + nxi
    return ar, lower, upper


def check_first_order(sampler, z=None, rotate=True):
    """Two-sided bound on the first derivative against the ``rho = 1`` speed.

    With ``rotate`` the quadratic form is evaluated through the matrix
    derivative of a randomly rotated ``Z = O diag(z) O^T``.
    """
    spec = _unshifted(sampler.spec)
    z = sampler.draw() if z is None else np.atleast_2d(z)
    count = len(z)
    xi = sampler.unit_vectors(count)
    value, lower, upper = first_order_bounds(spec, z, xi)
    if rotate:
        O = sampler.rotations(count)
        Z = np.einsum("cip,cp,cjp->cij", O, z, O)
        eta = np.einsum("cij,cj->ci", O, xi)
        Z = 0.5 * (Z + np.swapaxes(Z, 1, 2))
        value = np.einsum("ci,cij,cj->c", eta, matrix_first_derivative(spec, Z), eta)
    margin = np.minimum(value - lower, upper - value)
    bad = margin < -1e-10
    i = int(np.argmin(margin))
    return LemmaReport(
        "first_order", spec, sampler.alpha, sampler.seed, count, int(bad.sum()), float(margin[i]),
        _listed(bad, z=z, xi=xi), {"z": z[i].tolist(), "xi": xi[i].tolist()},
    )


# ----- second order -----------------------------------------------------------


def form_blocks(spec, z):
    """Decompose the second-derivative form at ``diag(z)``.

    Returns ``(H, D)``: for ``B`` with diagonal ``b``,
    ``form(B) = b.H.b + sum_{p != q} D[p, q] B[p, q]^2`` while
    ``|B|^2 = |b|^2 + sum_{p != q} B[p, q]^2``.
    """
    z = np.sort(np.atleast_2d(z), axis=1)
    tau = 1e-8 * (1 + np.linalg.norm(z, axis=1))
    return hess_eigen(spec, z), divided_differences(spec, z, tau)


def _offdiag_extreme(D, fn):
    n = D.shape[-1]
    mask = ~np.eye(n, dtype=bool)
    return fn(D[..., mask], axis=-1)


def quotient_sup(Hm, Dm):
    """Exact ``sup_B form(B) / |B|^2`` for blocks from :func:`form_blocks` (stacked)."""
    return np.maximum(np.linalg.eigvalsh(Hm)[..., -1], _offdiag_extreme(Dm, np.max))


def second_order_constant(spec, z):
    """Smallest ``C`` per sample making the upper second-order bound hold for every ``B``."""
    z = np.atleast_2d(z)
    tr = z.sum(axis=1)
    g1 = np.atleast_1d(eval_speed(_harmonic(spec), z))
    m = np.minimum(spec.rho**-2, spec.rho * (tr / g1) ** 3)
    Hr, Dr = form_blocks(spec, z)
    H1, D1 = form_blocks(_harmonic(spec), z)
    Hc = -Hr / m[:, None, None] + H1
    Dc = -Dr / m[:, None, None] + D1
    return tr * quotient_sup(Hc, Dc)


def check_second_order(sampler, z=None, rotate=True):
    """``gamma_rho'' (B, B) <= rho gamma_1'' (B, B)`` on random pairs, plus the fitted constant of the upper bound."""
    spec = _unshifted(sampler.spec)
    z = sampler.draw() if z is None else np.atleast_2d(z)
    count = len(z)
    B = sampler.symmetric_matrices(count)
    if rotate:
        O = sampler.rotations(count)
        Z = np.einsum("cip,cp,cjp->cij", O, z, O)
        Z = 0.5 * (Z + np.swapaxes(Z, 1, 2))
        lhs = matrix_second_form(spec, Z, B)
        rhs = spec.rho * matrix_second_form(_harmonic(spec), Z, B)
    else:
        lhs = second_form_eigenbasis(spec, z, B)
        rhs = spec.rho * second_form_eigenbasis(_harmonic(spec), z, B)
    scale = (B**2).sum(axis=(1, 2)) / z.sum(axis=1)
    margin = (rhs - lhs) / scale
    bad = margin < -1e-10
    i = int(np.argmin(margin))

    # exact worst direction per sample: sup_B (lhs - rhs)/|B|^2
    Hr, Dr = form_blocks(spec, z)
    H1, D1 = form_blocks(_harmonic(spec), z)
    exact = quotient_sup(Hr - spec.rho * H1, Dr - spec.rho * D1)

    cvals = second_order_constant(spec, z)
    rng = sampler.rng("refine")
    est = _estimate(
        "second_order_C", "sup", cvals, z,
        lambda p: float(second_order_constant(spec, p)[0]),
        lambda x, s, r: sampler.project(x + s * r.standard_normal(x.shape)),
        rng, 1000,
    )
    return LemmaReport(
        "second_order", spec, sampler.alpha, sampler.seed, count, int(bad.sum()), float(margin[i]),
        _listed(bad, z=z, B=B), {"z": z[i].tolist(), "B": B[i].tolist()},
        {"C_hat": est, "max_exact_excess": float(exact.max())},
    )


# ----- uniform bounds on slices ----------------------------------------------


def first_derivative_extremes(spec, z):
    d = grad_eigen(spec, np.atleast_2d(z))
    return d.min(axis=1), d.max(axis=1)


def second_derivative_sup(spec, z):
    """``sup_B -gamma''(B, B) tr / (rho |B|^2)`` per sample."""
    z = np.atleast_2d(z)
    H, D = form_blocks(spec, z)
    return z.sum(axis=1) * quotient_sup(-H, -D) / spec.rho


def estimate_uniform_bounds(sampler, rhos=(0.4, 0.2, 0.1, 0.05, 0.025), z=None, iterations=1000):
    """Observed ellipticity and second-derivative constants over the slice, per ``rho``.

    For each ``rho`` the report holds ``C`` (with ``C^-1 <= dgamma <= C``) and
    ``C'`` (``-d2gamma(B, B) <= C' rho |B|^2 / tr``), and the ratio
    ``C'(rho) / C'(rho / 2)`` that probes the linear scaling in ``rho``.
    """
    base = _unshifted(sampler.spec)
    z = sampler.draw() if z is None else np.atleast_2d(z)
    rng = sampler.rng("refine")

    def propose(x, s, r):
        return sampler.project(x + s * r.standard_normal(x.shape))

    out = {}
    for rho in rhos:
        spec = base.with_rho(rho)
        lo, hi = first_derivative_extremes(spec, z)
        c_first = np.maximum(1.0 / lo, hi)
        est_c = _estimate(
            f"ellipticity_C(rho={rho:g})", "sup", c_first, z,
            lambda p: float(np.max(np.maximum(1 / first_derivative_extremes(spec, p)[0],
                                               first_derivative_extremes(spec, p)[1]))),
            propose, rng, iterations,
        )
        cprime = second_derivative_sup(spec, z)
        est_cp = _estimate(
            f"second_derivative_C(rho={rho:g})", "sup", cprime, z,
            lambda p: float(second_derivative_sup(spec, p)[0]), propose, rng, iterations,
        )
        half = base.with_rho(rho / 2)
        cp_half = float(np.max(second_derivative_sup(half, z)))
        ratio = float(np.max(cprime)) / cp_half
        out[rho] = {"C": est_c, "C_prime": est_cp, "C_prime_half_rho": cp_half,
                    "ratio": ratio, "ratio_ok": 0.4 <= ratio <= 1.1}
    return out


# ----- good gradient constant -------------------------------------------------


def grad_quotient(spec, z, T):
    """``-tr(Z) sum_i gamma''(T_i, T_i) / (rho |T|^2)`` at ``Z = diag(z)`` (stacked)."""
    z = np.atleast_2d(z)
    T = np.asarray(T, dtype=float).reshape(len(z), spec.n, spec.n, spec.n)
    n = spec.n
    zz = np.repeat(z, n, axis=0)
    forms = np.asarray(second_form_eigenbasis(spec, zz, T.reshape(-1, n, n))).reshape(len(z), n)
    total = forms.sum(axis=1)
    return -z.sum(axis=1) * total / (spec.rho * (T**2).sum(axis=(1, 2, 3)))


def traceless_concavity(spec, z):
    """Per-sample ``inf`` over traceless unit ``B`` of ``-gamma_1''(B, B)`` at unit-trace ``diag(z)``."""
    z = np.atleast_2d(z)
    n = spec.n
    H, D = form_blocks(_harmonic(spec), z / z.sum(axis=1, keepdims=True))
    # orthonormal basis of the sum-zero subspace
    P = np.linalg.svd(np.eye(n) - 1.0 / n)[0][:, : n - 1]
    Hs = np.einsum("pa,cpq,qb->cab", P, -H, P)
    return np.minimum(np.linalg.eigvalsh(Hs)[:, 0], _offdiag_extreme(-D, np.min))


def cross_term_constant(z):
    """Per-sample smallest eigenvalue of ``|Y|^2 I - Y^2`` at unit-trace diagonal ``Y``."""
    y = np.atleast_2d(z)
    y = y / y.sum(axis=1, keepdims=True)
    sq = y**2
    return sq.sum(axis=1) - sq.max(axis=1)


def estimate_grad_constant(sampler, z=None, iterations=1000):
    """Observed ``inf`` of the good-gradient quotient over random symmetric 3-tensors, plus ``c0`` and ``c1``."""
    spec = _unshifted(sampler.spec)
    n = spec.n
    z = sampler.draw() if z is None else np.atleast_2d(z)
    rng_dir = sampler.rng("direction")
    T = symmetrize3(rng_dir.standard_normal((len(z), n, n, n)))
    q = grad_quotient(spec, z, T)
    ncomp = len(sym3_indices(n))
    points = np.concatenate([z, sym3_components(T)], axis=1)

    def split(x):
        return x[:n], sym3_expand(x[n:], n)

    def objective(x):
        zz, TT = split(x)
        return float(grad_quotient(spec, zz, TT[None])[0])

    def propose(x, s, r):
        zz = sampler.project(x[:n] + s * r.standard_normal(n))
        if zz is None:
            return None
        c = x[n:] + s * np.linalg.norm(x[n:]) * r.standard_normal(ncomp)
        return np.concatenate([zz, c])

    rng = sampler.rng("refine")
    est = _estimate("grad_quotient", "inf", q, points, objective, propose, rng, iterations,
                    extra=lambda x: {"z": x[:n], "T_components": x[n:]})
    c0v = traceless_concavity(spec, z)
    c0 = _estimate("c0", "inf", c0v, z, lambda p: float(traceless_concavity(spec, p)[0]),
                   lambda x, s, r: sampler.project(x + s * r.standard_normal(n)), rng, iterations)
    c1v = cross_term_constant(z)
    c1 = _estimate("c1", "inf", c1v, z, lambda p: float(cross_term_constant(p)[0]),
                   lambda x, s, r: sampler.project(x + s * r.standard_normal(n)), rng, iterations)
    nonpos = q <= 0
    return LemmaReport(
        "good_gradient", spec, sampler.alpha, sampler.seed, len(z), int(nonpos.sum()),
        float(est.value), _listed(nonpos, z=z), {k: np.asarray(v).tolist() for k, v in est.argext.items()},
        {"inv_C_hat": est, "c0": c0, "c1": c1},
    )


# ----- smallest-eigenvalue derivative ---------------------------------------


def check_min_eig_derivative(sampler, mu, z=None):
    """``d/dz_1 (gamma_rho - mu tr) >= 0`` at samples where ``gamma_rho - mu tr > 0``."""
    spec = _unshifted(sampler.spec)
    z = sampler.draw() if z is None else np.atleast_2d(z)
    a = np.atleast_1d(eval_speed(spec, z)) - mu * z.sum(axis=1)
    z = z[a > 0]
    deriv = grad_eigen(spec, z)[:, 0] - mu
    bad = deriv < -1e-12
    i = int(np.argmin(deriv)) if len(z) else 0
    return LemmaReport(
        "min_eig_derivative", spec, sampler.alpha, sampler.seed, len(z), int(bad.sum()),
        float(deriv[i]) if len(z) else math.nan, _listed(bad, z=z, deriv=deriv),
        {"z": z[i].tolist()} if len(z) else {}, {"mu": mu},
    )


# ----- Codazzi structure on a profile --------------------------------------


@dataclass
class CodazziReport:
    symmetry_residual: float
    interior_residual: float
    scale: float
    mixed_max: float
    d_lam_axial: np.ndarray
    d_lam_rot: np.ndarray

    @property
    def relative_residual(self):
        return self.symmetry_residual / self.scale if self.scale > 0 else 0.0

    def as_dict(self):
        return {
            "symmetry_residual": self.symmetry_residual,
            "interior_residual": self.interior_residual,
            "scale": self.scale,
            "relative_residual": self.relative_residual,
            "mixed_max": self.mixed_max,
        }


def check_codazzi_structure(mesh):
    """Total-symmetry residual of the discrete covariant derivative of the second fundamental form.

    In a frame ``(e_s, e_2, ..., e_n)`` adapted to the rotation, the only
    nonzero components are ``T_sss = d_s lam_ax``, ``T_sjj = d_s lam_rot``
    and ``T_jsj = T_jjs = (lam_ax - lam_rot) d_s Y / Y`` (``Y`` the distance
    to the axis).  Total symmetry reduces to the single identity
    ``d_s lam_rot = (lam_ax - lam_rot) d_s Y / Y``; all other mixed
    components vanish by construction.

    On polar profiles the connection term divides by ``Y ~ theta`` near the
    poles, so the residual there is only first order in the grid spacing;
    ``interior_residual`` only counts nodes with ``|sin theta| > POLE_EXCLUSION``.
    """
    g = geometry(mesh)
    d_ax = arc_derivative(mesh, g.lam_axial, g.arc)
    d_rot = arc_derivative(mesh, g.lam_rot, g.arc)
    if mesh.topology.value == "periodic":
        dY = g.up / g.arc
    else:
        theta = mesh.x
        dY = (g.up * np.sin(theta) + mesh.u * np.cos(theta)) / g.arc
    n = mesh.n
    T = np.zeros((mesh.N, n, n, n))
    T[:, 0, 0, 0] = d_ax
    conn = (g.lam_axial - g.lam_rot) * dY / g.axis_coord
    for j in range(1, n):
        T[:, 0, j, j] = d_rot
        T[:, j, 0, j] = conn
        T[:, j, j, 0] = conn
    sym = symmetrize3(T)
    per_node = np.abs(T - sym).reshape(mesh.N, -1).max(axis=1)
    residual = float(per_node.max())
    if mesh.topology.value == "periodic":
        interior = per_node
    else:
        interior = per_node[np.abs(np.sin(mesh.x)) > POLE_EXCLUSION]
    support = np.zeros((n, n, n), dtype=bool)
    support[0, 0, 0] = True
    for j in range(1, n):
        support[0, j, j] = support[j, 0, j] = support[j, j, 0] = True
    mixed = float(np.abs(T[:, ~support]).max()) if (~support).any() else 0.0
    scale = float(np.max(np.abs(g.lam_axial)) ** 2 + np.max(np.abs(g.lam_rot)) ** 2)
    return CodazziReport(residual, float(interior.max()), scale, mixed, d_ax, d_rot)


# ----- regression corpus -----------------------------------------------------


class RegressionCorpusError(CurvFlowError):
    """The regression corpus exists but cannot be parsed."""


def regression_key(spec, alpha, seed, count):
    return f"n{spec.n}_k{spec.k}_rho{spec.rho:g}_alpha{alpha:g}_seed{seed}_count{count}"


def check_regression(directory, key, values, band=0.05, atol=1e-12):
    """Compare ``values`` with the pinned copy under ``directory/key.json``.

    A value matches if it lies within ``band`` (relative) of the pinned one,
    or within ``atol`` for estimates that are zero up to roundoff.
    Missing files are created (pinning the current values).  Returns
    ``(status, mismatches)`` with status ``"pinned"`` or ``"checked"``.
    """
    path = Path(directory) / f"{key}.json"
    if not path.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(values, indent=2, sort_keys=True) + "\n")
        return "pinned", []
    try:
        pinned = json.loads(path.read_text())
        if not isinstance(pinned, dict) or not all(isinstance(v, (int, float)) for v in pinned.values()):
            raise ValueError("expected a flat mapping of numbers")
    except ValueError as exc:
        raise RegressionCorpusError(f"corrupted regression file {path}: {exc}") from exc
    mismatches = []
    for name, old in pinned.items():
        new = values.get(name)
        if new is None or abs(new - old) > band * abs(old) + atol:
            mismatches.append({"name": name, "pinned": old, "observed": new})
    return "checked", mismatches
