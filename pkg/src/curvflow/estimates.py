"""Pinching quantities tracked along simulated flows, and trend fits on their series."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .cones import alpha_rho
from .errors import ConeDomainError, InsufficientDataError
from .speed import SpeedSpec, eval_speed

DEFAULT_GRID = (0.2, 0.1, 0.05, 0.02, 0.01)
EPS0_FACTOR = 1e-10


@dataclass(frozen=True)
class PinchingParams:
    """Constants entering the pinching function ``h = G_rho - mu H + K``."""

    alpha1: float
    eps0: float
    mu: float
    K: float
    alpha_bar: float

    def as_dict(self):
        return asdict(self)


def _unshifted(spec):
    return SpeedSpec(spec.n, spec.k, spec.rho)


def harmonic_alpha(spec):
    """Cylindrical constant of the ``rho = 1`` speed (NaN when ``k = n``)."""
    if spec.k >= spec.n:
        return math.nan
    return alpha_rho(SpeedSpec(spec.n, spec.k, 1.0))


def derive_params(spec, field_or_lam):
    """Build :class:`PinchingParams` from the initial curvature data.

    ``K`` is the smallest nonnegative constant with ``G_1 - 2 mu H + K >= 0``
    on the initial data, so that ``h >= mu H`` holds at ``t = 0``.
    """
    lam = getattr(field_or_lam, "lam", field_or_lam)
    lam = np.atleast_2d(np.asarray(lam, dtype=float))
    g1 = np.atleast_1d(eval_speed(SpeedSpec(spec.n, spec.k, 1.0), lam))
    H = lam.sum(axis=-1)
    alpha1 = harmonic_alpha(spec)
    eps0 = EPS0_FACTOR * alpha1
    mu = 1.0 / (2.0 * (1.0 + EPS0_FACTOR) * alpha1)
    K = max(0.0, float(np.max(2.0 * mu * H - g1))) if math.isfinite(mu) else math.nan
    return PinchingParams(
        alpha1=alpha1,
        eps0=eps0,
        mu=mu,
        K=K,
        alpha_bar=float(np.max(H / g1)),
    )


def pinching_h(spec, params, lam):
    """``G_rho(lam) - mu tr(lam) + K``."""
    lam = np.asarray(lam, dtype=float)
    h = eval_speed(_unshifted(spec), lam) - params.mu * lam.sum(axis=-1) + params.K
    return float(h) if np.ndim(h) == 0 else h


def convexity_ratio(spec, params, lam, eta):
    """``(-lambda_1 - eta G_rho) / h``; negative at convex points.

    Raises :class:`ConeDomainError` if ``h <= 0`` anywhere.
    """
    lam = np.sort(np.asarray(lam, dtype=float), axis=-1)
    G = eval_speed(_unshifted(spec), lam)
    h = G - params.mu * lam.sum(axis=-1) + params.K
    if np.any(~(np.asarray(h) > 0)):
        raise ConeDomainError("pinching function h is not positive")
    f = (-lam[..., 0] - eta * G) / h
    return float(f) if np.ndim(f) == 0 else f


def convexity_ratio_bound(spec, params):
    """Upper bound ``(k - 1) / mu`` valid wherever ``h >= mu H``."""
    return (spec.k - 1) / params.mu


def cylindrical_ratio(spec, lam, eps):
    """Return ``(H/G_rho - (alpha_rho + eps), H/G_1 - (alpha_1 + eps))``."""
    lam = np.asarray(lam, dtype=float)
    base = _unshifted(spec)
    H = lam.sum(axis=-1)
    r_rho = H / eval_speed(base, lam) - (alpha_rho(base) + eps)
    r_one = H / eval_speed(base.harmonic, lam) - (harmonic_alpha(base) + eps)
    if np.ndim(r_rho) == 0:
        return float(r_rho), float(r_one)
    return r_rho, r_one


def speed_floor(min_G0, t, c_hat):
    """Lower barrier ``(min_G0^-2 - c_hat t)^(-1/2)`` for the minimum speed."""
    t = np.asarray(t, dtype=float)
    base = min_G0**-2 - c_hat * t
    if np.any(base <= 0):
        raise ValueError("t is at or past the blow-up time of the speed floor")
    out = base**-0.5
    return float(out) if out.ndim == 0 else out


def fit_speed_floor(t, min_G, fraction=0.1):
    """Largest ``c_hat >= 0`` for which the floor holds on the first ``fraction`` of the samples."""
    t = np.asarray(t, dtype=float)
    g = np.asarray(min_G, dtype=float)
    cutoff = t[0] + fraction * (t[-1] - t[0])
    sel = (t > t[0]) & (t <= cutoff)
    if not np.any(sel):
        return 0.0
    slopes = (g[0] ** -2 - g[sel] ** -2) / (t[sel] - t[0])
    return max(0.0, float(np.min(slopes)))


def check_speed_floor(t, min_G, c_hat, rtol=1e-6):
    """Return ``(ok, worst)`` where ``worst`` is the minimum of ``min_G / floor - 1``."""
    t = np.asarray(t, dtype=float) - t[0]
    g = np.asarray(min_G, dtype=float)
    base = g[0] ** -2 - c_hat * t
    valid = base > 0
    floor = np.full_like(g, np.inf)
    floor[valid] = base[valid] ** -0.5
    rel = g / floor - 1.0
    worst = float(np.min(rel)) if rel.size else 0.0
    # past the barrier's blow-up the floor is infinite and no finite speed satisfies it
    return bool(np.all(valid) and worst >= -rtol), worst


@dataclass(frozen=True)
class DecayFit:
    sigma: float
    C: float
    r2: float
    samples: int

    def as_dict(self):
        return asdict(self)


def decay_fit(u, G, min_samples=10):
    """Least-squares fit of ``log u = log C - sigma log G`` over the final decade of ``G``."""
    u = np.asarray(u, dtype=float)
    G = np.asarray(G, dtype=float)
    ok = np.isfinite(u) & np.isfinite(G) & (G > 0)
    u, G = u[ok], G[ok]
    if u.size < min_samples:
        raise InsufficientDataError(f"need at least {min_samples} samples, got {u.size}")
    if G.max() < 10.0 * G.min():
        raise InsufficientDataError("G must span at least one decade")
    sel = G >= G.max() / 10.0
    u, G = u[sel], G[sel]
    if u.size < min_samples:
        raise InsufficientDataError(f"only {u.size} samples in the final decade of G")
    if np.any(u <= 0):
        raise InsufficientDataError("decay fit needs strictly positive values")
    X, Y = np.log(G), np.log(u)
    slope, intercept = np.polyfit(X, Y, 1)
    resid = Y - (intercept + slope * X)
    ss_tot = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(sigma=float(-slope), C=float(np.exp(intercept)), r2=r2, samples=int(u.size))


def windowed_medians(values, window=10):
    """Medians of consecutive non-overlapping windows, aligned to end at the last sample."""
    v = np.asarray(values, dtype=float)
    count = v.size // window
    if count == 0:
        return np.empty(0)
    v = v[v.size - count * window :]
    return np.median(v.reshape(count, window), axis=1)


def final_decade(max_G):
    """Boolean mask of samples in the final decade of the running maximum of ``max_G``."""
    g = np.asarray(max_G, dtype=float)
    return g >= np.nanmax(g) / 10.0


def nonincreasing_per_step(series, rtol=1e-7):
    """Return ``(ok, worst)`` with ``worst`` the largest relative step increase."""
    s = np.asarray(series, dtype=float)
    if s.size < 2:
        return True, 0.0
    rise = (s[1:] - s[:-1]) / np.abs(s[:-1])
    worst = float(np.max(rise))
    return worst <= rtol, worst


# ----- per-step monitor ----------------------------------------------------


class MonitorTracker:
    """Fold a :class:`~curvflow.flow.FlowState` into one flat monitor row per step."""

    def __init__(self, spec, params, initial_max_G, eps_grid=DEFAULT_GRID, eta_grid=DEFAULT_GRID):
        self.spec = _unshifted(spec)
        self.params = params
        self.initial_max_G = float(initial_max_G)
        self.eps_grid = tuple(eps_grid)
        self.eta_grid = tuple(eta_grid)
        self.alpha = alpha_rho(self.spec) if spec.k < spec.n else math.nan
        self.columns = (
            ["step", "t", "dt", "min_u", "min_G", "max_G", "argmax_G",
             "max_H_over_Grho", "max_H_over_G1", "H_over_G1_at_maxG",
             "max_neg_l1_over_Grho", "max_neg_l1_over_Grho_hi",
             "min_h_over_muH", "min_h_minus_muH_over_G", "identity_residual"]
            + [f"max_f_eps_{e:g}" for e in self.eps_grid]
            + [f"max_f_eta_{e:g}" for e in self.eta_grid]
        )

    def record(self, state, dt):
        f = state.field
        spec, p = self.spec, self.params
        lam, H, G = f.lam, f.H, f.G
        G1 = np.asarray(eval_speed(spec.harmonic, lam))
        r_rho, r_one = H / G, H / G1
        imax = int(np.argmax(G))
        neg = -lam[:, 0] / G
        hi = G >= 10.0 * self.initial_max_G
        h = G - p.mu * H + p.K
        ident = np.abs(r_rho - (spec.rho * r_one + 1.0 - spec.rho)) / r_rho
        row = {
            "step": state.step_index,
            "t": state.t,
            "dt": dt,
            "min_u": float(state.mesh.u.min()),
            "min_G": float(G.min()),
            "max_G": float(G[imax]),
            "argmax_G": imax,
            "max_H_over_Grho": float(r_rho.max()),
            "max_H_over_G1": float(r_one.max()),
            "H_over_G1_at_maxG": float(r_one[imax]),
            "max_neg_l1_over_Grho": float(neg.max()),
            "max_neg_l1_over_Grho_hi": float(neg[hi].max()) if hi.any() else math.nan,
            "min_h_over_muH": float(np.min(h / (p.mu * H))),
            "min_h_minus_muH_over_G": float(np.min((h - p.mu * H) / G)),
            "identity_residual": float(ident.max()),
        }
        max_ratio = row["max_H_over_Grho"]
        for e in self.eps_grid:
            row[f"max_f_eps_{e:g}"] = max_ratio - (self.alpha + e)
        for e in self.eta_grid:
            row[f"max_f_eta_{e:g}"] = float(np.max((-lam[:, 0] - e * G) / h))
        return row


def series(rows, name):
    return np.array([r[name] for r in rows], dtype=float)


def theorem_trend(rows, window=10):
    """Windowed-median trend of ``max(-lambda_1/G_rho)`` on high-curvature nodes over the final decade of ``max_G``."""
    g = series(rows, "max_G")
    y = series(rows, "max_neg_l1_over_Grho_hi")
    sel = final_decade(g) & np.isfinite(y)
    med = windowed_medians(y[sel], window)
    ok = med.size >= 2 and bool(np.all(np.diff(med) <= 0.0))
    return {"ok": ok, "windows": int(med.size), "medians": med.tolist()}


def cylindrical_trend(rows, params, window=10, slack=0.1):
    """``H/G_1`` at the max-curvature node: bounded by ``alpha_bar`` and near ``alpha_1`` at the end."""
    g = series(rows, "max_G")
    r = series(rows, "H_over_G1_at_maxG")
    bounded = bool(np.all(r <= params.alpha_bar * (1 + 1e-12)))
    med = windowed_medians(r[final_decade(g)], window)
    final = float(med[-1]) if med.size else math.nan
    return {
        "ok": bounded and med.size > 0 and bool(np.all(med <= params.alpha1 + slack)),
        "bounded_by_alpha_bar": bounded,
        "max_ratio": float(r.max()),
        "final_median": final,
        "max_final_decade_median": float(med.max()) if med.size else math.nan,
    }
