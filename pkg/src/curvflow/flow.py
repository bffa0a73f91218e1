"""Explicit time integration of the rotationally symmetric flow.

A profile moves with normal speed ``G`` along the inward normal; for a graph
``u(x)`` this is ``du/dt = -G sqrt(1 + u'^2)`` and for a polar profile
``dr/dt = -G sqrt(r^2 + r'^2) / r``.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cones import k_margin
from .errors import ConfigError, ConvexityLossError
from .estimates import DEFAULT_GRID, MonitorTracker, derive_params
from .profile import ProfileMesh, Topology, curvatures
from .speed import SpeedSpec, eval_speed

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    BLOW_UP = "BlowUp"
    TIME_OUT = "TimeOut"
    CONVEXITY_LOSS = "ConvexityLoss"
    ERROR = "Error"


class BlowUpReached(Exception):
    """Time step collapsed below the underflow threshold."""


@dataclass(frozen=True, eq=False)
class FlowState:
    t: float
    mesh: ProfileMesh
    field: object
    step_index: int = 0

    @classmethod
    def initial(cls, mesh, spec):
        return cls(0.0, mesh, curvatures(mesh, spec), 0)


def velocity(field):
    return -field.G * field.geom.speed_factor


def stable_dt(state, cfl_safety, max_rel_motion=0.01):
    """Parabolic CFL limit, capped so no node moves more than ``max_rel_motion`` of its radius."""
    f, mesh = state.field, state.mesh
    diffusion = f.dG.sum(axis=-1)
    if mesh.topology is Topology.PERIODIC:
        coef = diffusion * (1 + f.geom.up**2)
    else:
        u = mesh.u
        coef = diffusion * (1 + (f.geom.up / u) ** 2) / u**2
    dt = cfl_safety * mesh.dx**2 / float(coef.max())
    if max_rel_motion:
        dt = min(dt, max_rel_motion * float(np.min(mesh.u / np.abs(velocity(f)))))
    return dt


def _advance(state, spec, dt, integrator):
    mesh = state.mesh
    u0 = mesh.u

    def rhs(field):
        return velocity(field)

    def stage(u):
        m = mesh.with_u(u)
        return m, curvatures(m, spec)

    if integrator == "euler":
        return stage(u0 + dt * rhs(state.field))
    if integrator == "ssprk3":
        _, f1 = stage(u1 := u0 + dt * rhs(state.field))
        _, f2 = stage(u2 := 0.75 * u0 + 0.25 * (u1 + dt * rhs(f1)))
        return stage(u0 / 3.0 + 2.0 / 3.0 * (u2 + dt * rhs(f2)))
    raise ValueError(f"unknown integrator {integrator!r}")


def step(state, spec, cfl_safety=0.2, *, max_rel_motion=0.01, integrator="ssprk3", dt=None):
    """Advance one explicit step; returns the new state.

    Raises
    ------
    ConvexityLossError
        A node (at any stage) left the k-positive cone.
    ValueError
        A radius became nonpositive.
    """
    if dt is None:
        dt = stable_dt(state, cfl_safety, max_rel_motion)
    mesh, fld = _advance(state, spec, dt, integrator)
    return FlowState(state.t + dt, mesh, fld, state.step_index + 1)


def sphere_speed_constant(spec):
    """Speed of the unit sphere, ``gamma(1, ..., 1)`` (shift ignored)."""
    return eval_speed(SpeedSpec(spec.n, spec.k, spec.rho), np.ones(spec.n))


def sphere_extinction_time(spec, r0):
    return r0**2 / (2.0 * sphere_speed_constant(spec))


def sphere_exact(spec, r0, t):
    """Radius ``sqrt(r0^2 - 2 c t)`` of a shrinking round sphere."""
    c = sphere_speed_constant(spec)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t >= r0**2 / (2 * c)):
        raise ValueError("t outside [0, extinction time)")
    r = np.sqrt(r0**2 - 2 * c * t)
    return float(r) if r.ndim == 0 else r


# ----- configured runs -----------------------------------------------------

PROFILE_KINDS = ("neck", "cylinder", "sphere", "spheroid")


@dataclass(frozen=True)
class ProfileConfig:
    kind: str = "neck"
    R: float = 1.0
    a: float = 0.2
    L: float = 8.0
    N: int = 400
    phase: float = 0.0
    eps: float = 0.1
    jitter: float = 0.0

    def validate(self):
        if self.kind not in PROFILE_KINDS:
            raise ConfigError(f"unknown profile kind {self.kind!r}", field="profile.kind")
        if int(self.N) != self.N or self.N < 16:
            raise ConfigError(f"N must be an integer >= 16, got {self.N!r}", field="profile.N")
        if not self.R > 0:
            raise ConfigError("R must be positive", field="profile.R")
        if self.kind == "neck" and not 0 <= abs(self.a) < self.R:
            raise ConfigError("need |a| < R", field="profile.a")
        if not self.L > 0:
            raise ConfigError("L must be positive", field="profile.L")
        if not 0 <= self.jitter < 0.5:
            raise ConfigError("jitter must lie in [0, 0.5)", field="profile.jitter")

    def build(self, n, seed=0):
        """Sample the profile; a nonzero ``jitter`` adds seeded low-mode noise."""
        N = int(self.N)
        if self.kind == "neck":
            mesh = ProfileMesh.neck(n, self.R, self.a, self.L, N, self.phase)
        elif self.kind == "cylinder":
            mesh = ProfileMesh.cylinder(n, self.R, self.L, N)
        elif self.kind == "sphere":
            mesh = ProfileMesh.sphere(n, self.R, N)
        else:
            mesh = ProfileMesh.spheroid(n, self.R, self.eps, N)
        if self.jitter:
            mesh = mesh.with_u(mesh.u * (1 + self.jitter * _low_modes(mesh, seed)))
        return mesh


def _low_modes(mesh, seed, modes=(2, 3, 4)):
    """Smooth perturbation with unit sup-norm bound; even about the poles for polar profiles."""
    rng = np.random.default_rng(seed)
    coef = rng.uniform(-1, 1, len(modes)) / np.asarray(modes, dtype=float)
    phase = rng.uniform(0, 2 * np.pi, len(modes))
    coef /= np.abs(coef).sum() or 1.0
    if mesh.topology is Topology.POLAR:
        return sum(c * np.cos(2 * m * mesh.x) for c, m in zip(coef, modes))
    arg = 2 * np.pi * mesh.x / mesh.length
    return sum(c * np.cos(m * arg + p) for c, m, p in zip(coef, modes, phase))


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one flow run."""

    spec: SpeedSpec
    profile: ProfileConfig = field(default_factory=ProfileConfig)
    cfl_safety: float = 0.2
    max_rel_motion: float = 0.01
    stop_G_max: float | None = None
    stop_G_factor: float | None = 1e3
    stop_t_max: float = math.inf
    output_stride: int = 100
    integrator: str = "ssprk3"
    max_steps: int = 5_000_000
    min_margin: float = 0.1
    eps_grid: tuple = DEFAULT_GRID
    eta_grid: tuple = DEFAULT_GRID
    seed: int = 0

    def validate(self):
        self.profile.validate()
        if not 0 < self.cfl_safety < 1:
            raise ConfigError("cfl_safety must lie in (0, 1)", field="flow.cfl_safety")
        if not 0 < self.max_rel_motion < 1:
            raise ConfigError("max_rel_motion must lie in (0, 1)", field="flow.max_rel_motion")
        if self.stop_G_max is None and self.stop_G_factor is None:
            raise ConfigError("one of stop_G_max / stop_G_factor is required", field="flow.stop_G_max")
        for name in ("stop_G_max", "stop_G_factor"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive", field=f"flow.{name}")
        if not self.stop_t_max >= 0:
            raise ConfigError("stop_t_max must be >= 0", field="flow.stop_t_max")
        if int(self.output_stride) != self.output_stride or self.output_stride < 1:
            raise ConfigError("output_stride must be a positive integer", field="flow.output_stride")
        if self.integrator not in ("euler", "ssprk3"):
            raise ConfigError(f"unknown integrator {self.integrator!r}", field="flow.integrator")
        return self

    def as_dict(self):
        return {
            "spec": self.spec.as_dict(),
            "profile": dict(self.profile.__dict__),
            "cfl_safety": self.cfl_safety,
            "max_rel_motion": self.max_rel_motion,
            "stop_G_max": self.stop_G_max,
            "stop_G_factor": self.stop_G_factor,
            "stop_t_max": self.stop_t_max if math.isfinite(self.stop_t_max) else "inf",
            "output_stride": self.output_stride,
            "integrator": self.integrator,
            "max_steps": self.max_steps,
            "eps_grid": list(self.eps_grid),
            "eta_grid": list(self.eta_grid),
            "seed": self.seed,
        }


@dataclass
class RunResult:
    config: RunConfig
    status: Status
    message: str
    snapshots: list
    monitors: list
    params: object
    columns: list
    final_state: FlowState | None = None

    @property
    def steps(self):
        return self.final_state.step_index if self.final_state else 0


def initial_state(config):
    """Build and validate the ``t = 0`` state (margin check included)."""
    config.validate()
    spec = config.spec
    mesh = config.profile.build(spec.n, config.seed)
    try:
        state = FlowState.initial(mesh, spec)
    except ConvexityLossError as exc:
        raise ConfigError(f"initial data outside the cone: {exc}", field="profile") from exc
    margin = float(np.min(k_margin(spec.k, state.field.lam - spec.kappa)))
    if margin < config.min_margin:
        raise ConfigError(
            f"initial cone margin {margin:.4g} below required {config.min_margin}", field="profile"
        )
    return state


def run(config, state=None):
    """Integrate until the speed threshold, the time horizon, or an error event.

    Numerical events never propagate as exceptions; they end the run with
    the corresponding :class:`Status`.
    """
    spec = config.spec
    state = state or initial_state(config)
    params = derive_params(spec, state.field)
    g0 = float(state.field.G.max())
    g_stop = config.stop_G_max if config.stop_G_max is not None else config.stop_G_factor * g0
    tracker = MonitorTracker(spec, params, g0, config.eps_grid, config.eta_grid)
    snapshots = [state]
    monitors = [tracker.record(state, 0.0)]
    status, message = None, ""
    dt0 = None

    if config.stop_t_max <= 0:
        status, message = Status.TIME_OUT, "zero time horizon"

    while status is None:
        if state.step_index >= config.max_steps:
            status, message = Status.ERROR, f"step limit {config.max_steps} reached"
            break
        try:
            dt = stable_dt(state, config.cfl_safety, config.max_rel_motion)
            dt0 = dt0 or dt
            if dt < 1e-14 * dt0:
                status, message = Status.BLOW_UP, f"time step underflow (dt={dt:.3g})"
                break
            last = state.t + dt >= config.stop_t_max
            if last:
                dt = config.stop_t_max - state.t
            state = step(state, spec, dt=dt, integrator=config.integrator)
        except ConvexityLossError as exc:
            status, message = Status.CONVEXITY_LOSS, str(exc)
            break
        except (ValueError, FloatingPointError, ArithmeticError) as exc:
            status, message = Status.ERROR, f"{type(exc).__name__}: {exc}"
            break
        row = tracker.record(state, dt)
        monitors.append(row)
        if not all(math.isfinite(row[c]) for c in ("min_G", "max_G", "max_H_over_Grho")):
            status, message = Status.ERROR, "non-finite monitor values"
        elif row["max_G"] >= g_stop:
            status, message = Status.BLOW_UP, f"max G reached {row['max_G']:.6g} >= {g_stop:.6g}"
        elif last:
            status, message = Status.TIME_OUT, f"reached t = {state.t:.6g}"
        if status is not None or state.step_index % config.output_stride == 0:
            snapshots.append(state)

    log.info("run finished: %s after %d steps (%s)", status.value, state.step_index, message)
    return RunResult(config, status, message, snapshots, monitors, params, tracker.columns, state)


def with_profile(config, **changes):
    return replace(config, profile=replace(config.profile, **changes))
