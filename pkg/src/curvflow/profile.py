"""Rotationally symmetric hypersurfaces sampled on a uniform periodic grid.

Two profile representations are supported:

``periodic``
    A graph ``u(x) > 0`` over a periodic axis of length ``L``; the surface
    is ``{(x, u(x) w) : w in S^{n-1}}``.  Nodes sit at ``x_i = i dx``.
``polar``
    A closed surface of revolution given by its distance ``r(theta)`` from
    the center, ``theta`` measured from the symmetry axis.  The profile is
    stored over the full circle ``[0, 2 pi)`` at half-offset nodes
    ``theta_i = (i + 1/2) dtheta`` so no node sits on a pole; the even
    reflection across the poles is then carried by the periodic stencil.

All derivatives are centered second-order differences that wrap around.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConeDomainError, ConvexityLossError
from .speed import speed_and_grad

MIN_NODES = 16


class Topology(str, enum.Enum):
    PERIODIC = "periodic"
    POLAR = "polar"


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ProfileMesh:
    """Immutable snapshot of a profile curve.

    Parameters
    ----------
    n : int
        Dimension of the hypersurface.
    length : float
        Period of the grid (``L`` for graphs, ``2 pi`` for polar profiles).
    u : array_like
        Radius samples, all positive.
    topology : Topology
    """

    n: int
    length: float
    u: np.ndarray
    topology: Topology = Topology.PERIODIC

    def __post_init__(self):
        u = _frozen(self.u)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "topology", Topology(self.topology))
        if u.ndim != 1 or u.size < MIN_NODES:
            raise ValueError(f"need a 1-d profile with at least {MIN_NODES} nodes, got shape {u.shape}")
        if not (self.length > 0 and np.isfinite(self.length)):
            raise ValueError(f"length must be positive, got {self.length!r}")
        if not np.all(np.isfinite(u)) or np.any(u <= 0):
            bad = int(np.flatnonzero(~(u > 0))[0]) if np.any(~(u > 0)) else -1
            raise ValueError(f"profile radius must be finite and positive (node {bad})")

    @property
    def N(self):
        return self.u.size

    @property
    def dx(self):
        return self.length / self.N

    @property
    def x(self):
        offset = 0.5 if self.topology is Topology.POLAR else 0.0
        return (np.arange(self.N) + offset) * self.dx

    def with_u(self, u):
        return ProfileMesh(self.n, self.length, u, self.topology)

    def scaled(self, s):
        """Homothetic copy; only meaningful for graph profiles, where ``L`` scales too."""
        length = self.length if self.topology is Topology.POLAR else self.length * s
        return ProfileMesh(self.n, length, self.u * s, self.topology)

    # ----- constructors -------------------------------------------------

    @classmethod
    def graph(cls, n, L, N, func):
        x = np.arange(N) * (L / N)
        return cls(n, L, func(x), Topology.PERIODIC)

    @classmethod
    def neck(cls, n, R=1.0, a=0.2, L=8.0, N=400, phase=0.0):
        """Periodic neck ``u = R + a cos(2 pi x / L + phase)``; with zero phase the neck is at ``x = L/2``."""
        return cls.graph(n, L, N, lambda x: R + a * np.cos(2 * np.pi * x / L + phase))

    @classmethod
    def cylinder(cls, n, R=1.0, L=8.0, N=400):
        return cls.graph(n, L, N, lambda x: np.full_like(x, R))

    @classmethod
    def polar(cls, n, N, func):
        theta = (np.arange(N) + 0.5) * (2 * np.pi / N)
        return cls(n, 2 * np.pi, func(theta), Topology.POLAR)

    @classmethod
    def sphere(cls, n, r0=1.0, N=400):
        return cls.polar(n, N, lambda th: np.full_like(th, r0))

    @classmethod
    def spheroid(cls, n, r0=1.0, eps=0.1, N=400):
        """Closed surface ``r = r0 (1 + eps cos(2 theta))``, prolate for ``eps > 0``."""
        return cls.polar(n, N, lambda th: r0 * (1 + eps * np.cos(2 * th)))


def _shifts(f):
    """Periodic neighbours ``(f[i+1], f[i-1])``."""
    ahead = np.empty_like(f)
    ahead[:-1], ahead[-1] = f[1:], f[0]
    behind = np.empty_like(f)
    behind[1:], behind[0] = f[:-1], f[-1]
    return ahead, behind


def profile_derivatives(mesh):
    """Centered first and second differences of ``u`` (periodic)."""
    u = mesh.u
    up, um = _shifts(u)
    return (up - um) / (2 * mesh.dx), (up - 2 * u + um) / mesh.dx**2


@dataclass(frozen=True)
class Geometry:
    """Pointwise geometric factors of a profile.

    ``arc`` is ``ds/dx``; ``axis_coord`` is the signed distance to the symmetry axis
    (negative on the mirrored half of a polar profile);
    ``speed_factor`` converts normal speed into ``du/dt`` (``du/dt = -G * speed_factor``);
    ``lam_axial`` and ``lam_rot`` are the meridian and rotational principal curvatures.
    """

    up: np.ndarray
    upp: np.ndarray
    arc: np.ndarray
    axis_coord: np.ndarray
    speed_factor: np.ndarray
    lam_axial: np.ndarray
    lam_rot: np.ndarray


def geometry(mesh):
    u = mesh.u
    up, upp = profile_derivatives(mesh)
    if mesh.topology is Topology.PERIODIC:
        W = np.sqrt(1 + up**2)
        lam_axial = -upp / W**3
        lam_rot = 1 / (u * W)
        return Geometry(up, upp, W, u.copy(), W, lam_axial, lam_rot)
    theta = mesh.x
    S = u**2 + up**2
    root = np.sqrt(S)
    sin, cos = np.sin(theta), np.cos(theta)
    Y = u * sin
    lam_axial = (u**2 + 2 * up**2 - u * upp) / S**1.5
    lam_rot = (u * sin - up * cos) / (Y * root)
    return Geometry(up, upp, root, Y, root / u, lam_axial, lam_rot)


@dataclass(frozen=True, eq=False)
class CurvatureField:
    """Curvature data at every node of a mesh snapshot.

    ``lam`` has shape ``(N, n)`` with rows sorted ascending; ``dG`` holds the
    eigenvalue gradient of the speed at each node (same ordering as ``lam``).
    """

    lam: np.ndarray
    lam_axial: np.ndarray
    lam_rot: np.ndarray
    H: np.ndarray
    G: np.ndarray
    dG: np.ndarray
    norm_A: np.ndarray
    geom: Geometry

    @property
    def N(self):
        return self.H.size


def assemble_eigenvalues(lam_axial, lam_rot, n):
    """Sorted tuples made of one axial and ``n - 1`` rotational curvatures."""
    lam = np.empty(lam_axial.shape + (n,))
    lam[..., 1:-1] = lam_rot[..., None]
    low = lam_axial <= lam_rot
    lam[..., 0] = np.where(low, lam_axial, lam_rot)
    lam[..., -1] = np.where(low, lam_rot, lam_axial)
    return lam


def curvatures(mesh, spec):
    """Principal curvatures, mean curvature and speed at every node.

    Raises
    ------
    ConvexityLossError
        If some node leaves the k-positive cone; ``index`` is the first such node.
    """
    if spec.n != mesh.n:
        raise ValueError(f"spec dimension {spec.n} does not match mesh dimension {mesh.n}")
    geom = geometry(mesh)
    lam = assemble_eigenvalues(geom.lam_axial, geom.lam_rot, mesh.n)
    try:
        G, dG = speed_and_grad(spec, lam)
    except ConeDomainError as exc:
        raise ConvexityLossError(
            f"node {exc.index} left the {spec.k}-positive cone: {exc}", index=exc.index
        ) from exc
    return CurvatureField(
        lam=lam,
        lam_axial=geom.lam_axial,
        lam_rot=geom.lam_rot,
        H=lam.sum(axis=-1),
        G=np.asarray(G),
        dG=dG,
        norm_A=np.sqrt((lam**2).sum(axis=-1)),
        geom=geom,
    )


def arc_derivative(mesh, field_values, arc):
    """Centered derivative of a nodal quantity along arc length."""
    ahead, behind = _shifts(np.asarray(field_values, dtype=float))
    return (ahead - behind) / (2 * mesh.dx * arc)


def grad_A_magnitude(mesh, field):
    """Discrete surrogate for ``|nabla A|``: arc-length derivatives of the principal curvatures in Euclidean norm."""
    arc = field.geom.arc
    d_ax = arc_derivative(mesh, field.lam_axial, arc)
    d_rot = arc_derivative(mesh, field.lam_rot, arc)
    return np.sqrt(d_ax**2 + (mesh.n - 1) * d_rot**2)


# ----- CSV snapshots ----------------------------------------------------


def _fmt(v):
    return format(float(v), ".17g")


def snapshot_header(n):
    return ["x", "u"] + [f"lambda_{i + 1}" for i in range(n)] + ["H", "G"]


def write_snapshot(path, mesh, field):
    """Write ``x, u, lambda_1..lambda_n, H, G`` with a one-line header."""
    path = Path(path)
    x = mesh.x
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(snapshot_header(mesh.n))
        for i in range(mesh.N):
            row = [x[i], mesh.u[i], *field.lam[i], field.H[i], field.G[i]]
            w.writerow([_fmt(v) for v in row])


def read_snapshot(path, topology=Topology.PERIODIC):
    """Rebuild a :class:`ProfileMesh` from a snapshot CSV."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = sum(1 for h in header if h.startswith("lambda_"))
    data = np.array([[float(v) for v in r] for r in body])
    x, u = data[:, 0], data[:, 1]
    N = len(u)
    topology = Topology(topology)
    dx = 2 * x[0] if topology is Topology.POLAR else (x[-1] - x[0]) / (N - 1)
    length = 2 * np.pi if topology is Topology.POLAR else dx * N
    return ProfileMesh(n, length, u, topology)
