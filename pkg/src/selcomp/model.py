"""Design domain, structured mesh, DoF bookkeeping and desired kinematics."""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import DegenerateTangentError, DomainError, ResolutionError

_DIRS = {"x": 0, "y": 1}


@dataclass(frozen=True)
class DesignSpace:
    width: float
    height: float
    nelx: int
    nely: int
    thickness: float = 1.0

    def __post_init__(self):
        if self.nelx < 1 or self.nely < 1:
            raise ValueError("grid needs at least one element per direction")
        if min(self.width, self.height, self.thickness) <= 0:
            raise ValueError("lengths must be positive")

    @property
    def dx(self):
        return self.width / self.nelx

    @property
    def dy(self):
        return self.height / self.nely


@dataclass(frozen=True)
class Fixity:
    """Zero-displacement condition on a point or a straight boundary segment.

    ``kind`` is ``"clamp"`` (both directions unless ``dofs`` says otherwise),
    ``"roller"`` (only the listed ``dofs``) or ``"symmetry"`` (the DoF normal to
    the segment, which must be horizontal or vertical).
    """

    start: tuple
    end: Optional[tuple] = None
    kind: str = "clamp"
    dofs: tuple = ("x", "y")

    def directions(self):
        if self.kind == "symmetry":
            if self.end is None:
                raise ResolutionError("symmetry condition needs a segment")
            (x0, y0), (x1, y1) = self.start, self.end
            if np.isclose(y0, y1):
                return (1,)
            if np.isclose(x0, x1):
                return (0,)
            raise ResolutionError("symmetry line must be horizontal or vertical")
        return tuple(_DIRS[d] for d in self.dofs)


@dataclass(frozen=True)
class Mesh:
    space: DesignSpace
    nodes: np.ndarray
    elements: np.ndarray
    fixed_dofs: np.ndarray

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @property
    def ndof(self):
        return 2 * self.n_nodes

    @property
    def edofs(self):
        e = self.elements
        return np.stack([2 * e, 2 * e + 1], axis=-1).reshape(-1, 8)

    @property
    def free_dofs(self):
        return np.setdiff1d(np.arange(self.ndof), self.fixed_dofs)

    @property
    def element_coords(self):
        return self.nodes[self.elements]

    @property
    def centroids(self):
        return self.element_coords.mean(axis=1)

    def node_at(self, point):
        """Id of the grid node closest to ``point``; must be within half a cell."""
        s = self.space
        px, py = map(float, point)
        i, j = round(px / s.dx), round(py / s.dy)
        if not (0 <= i <= s.nelx and 0 <= j <= s.nely):
            raise ResolutionError(f"point {point} lies outside the grid")
        if abs(px - i * s.dx) > 0.5 * s.dx or abs(py - j * s.dy) > 0.5 * s.dy:
            raise ResolutionError(f"point {point} is not within half a cell of a node")
        return j * (s.nelx + 1) + i

    def dof(self, point, direction):
        return 2 * self.node_at(point) + _DIRS[direction]


def grid(space):
    """Nodes (row-major, x fastest) and counterclockwise Q4 connectivity."""
    nx, ny = space.nelx, space.nely
    xs = np.linspace(0.0, space.width, nx + 1)
    ys = np.linspace(0.0, space.height, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    n0 = (j * (nx + 1) + i).ravel()
    elements = np.column_stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])
    return nodes, elements


def _nodes_on_segment(nodes, a, b, tol):
    a, b = np.asarray(a, float), np.asarray(b, float)
    d = b - a
    L2 = float(d @ d)
    if L2 == 0.0:
        t = np.zeros(len(nodes))
    else:
        t = np.clip((nodes - a) @ d / L2, 0.0, 1.0)
    proj = a + t[:, None] * d
    dist = np.abs(nodes - proj)
    return np.nonzero((dist[:, 0] <= tol[0] * (1 + 1e-9)) & (dist[:, 1] <= tol[1] * (1 + 1e-9)))[0]


def build_mesh(space, fixities):
    """Regular ``nelx x nely`` grid with the fixities resolved to DoF numbers."""
    nodes, elements = grid(space)
    tol = (0.5 * space.dx, 0.5 * space.dy)
    fixed = []
    for fx in fixities:
        pts = [fx.start] + ([fx.end] if fx.end is not None else [])
        for p in pts:
            x, y = map(float, p)
            if not (-tol[0] <= x <= space.width + tol[0] and -tol[1] <= y <= space.height + tol[1]):
                raise ResolutionError(f"fixity point {p} lies off the grid")
        if fx.end is None:
            hit = _nodes_on_segment(nodes, fx.start, fx.start, tol)[:1]
        else:
            hit = _nodes_on_segment(nodes, fx.start, fx.end, tol)
        if hit.size == 0:
            raise ResolutionError(f"fixity {fx} does not touch any node")
        for k in fx.directions():
            fixed.append(2 * hit + k)
    if not fixed:
        raise ResolutionError("structure has no supports")
    fixed = np.unique(np.concatenate(fixed))
    return Mesh(space, nodes, elements, fixed)


@dataclass(frozen=True)
class DofPartition:
    """Active/passive split of the free DoFs.

    ``active`` and ``passive`` hold global DoF numbers; ``active_local`` and
    ``passive_local`` are the matching positions in the sorted free-DoF list.
    """

    free: np.ndarray
    active: np.ndarray
    passive: np.ndarray
    active_local: np.ndarray = field(repr=False)
    passive_local: np.ndarray = field(repr=False)

    @property
    def q(self):
        return self.active.size


def dof_partition(mesh, active):
    """Partition the free DoFs of ``mesh`` given the ordered active DoF numbers."""
    active = np.asarray(active, dtype=int)
    free = mesh.free_dofs
    if active.size < 2:
        raise ValueError("at least two active DoFs are required")
    if np.unique(active).size != active.size:
        raise ValueError("duplicate active DoFs")
    if not np.all(np.isin(active, free)):
        raise ValueError("active DoFs must not be fixed")
    passive = np.setdiff1d(free, active)
    return DofPartition(
        free, active, passive, np.searchsorted(free, active), np.searchsorted(free, passive)
    )


@dataclass(frozen=True)
class StationaryPoint:
    index: int
    u_a: np.ndarray
    phi_bar: np.ndarray

    def __post_init__(self):
        if abs(np.linalg.norm(self.phi_bar) - 1.0) > 1e-12:
            raise ValueError("phi_bar must have unit norm")


@dataclass(frozen=True)
class DesiredDeformationFunction:
    """Parametric curve of active-DoF displacements.

    Parameters
    ----------
    components : sequence of callables
        One scalar function of the path parameter per active DoF.
    bounds : (float, float)
        Domain of definition.
    derivatives : sequence of callables, optional
        Analytic derivatives; central differences are used when omitted.
    """

    components: Sequence[Callable]
    bounds: tuple
    derivatives: Optional[Sequence[Callable]] = None

    @classmethod
    def from_polynomials(cls, coefficients, bounds):
        """Components given by coefficients of ``alpha**1, alpha**2, ...``.

        There is no constant term, so the undeformed state sits at ``alpha = 0``.
        """
        coefs = [np.concatenate([[0.0], np.asarray(c, dtype=float)]) for c in coefficients]
        comps = [lambda a, c=c: P.polyval(a, c) for c in coefs]
        ders = [lambda a, c=c: P.polyval(a, P.polyder(c)) for c in coefs]
        return cls(comps, tuple(bounds), ders)

    @property
    def q(self):
        return len(self.components)

    def __call__(self, alpha):
        return np.array([f(alpha) for f in self.components], dtype=float)

    def derivative(self, alpha):
        if self.derivatives is not None:
            return np.array([f(alpha) for f in self.derivatives], dtype=float)
        h = 1e-6 * max(1.0, abs(alpha))
        return (self(alpha + h) - self(alpha - h)) / (2.0 * h)


def discretize_kinematics(func, alphas):
    """Stationary points ``(u_a, phi_bar)`` at the given path parameters."""
    alphas = np.asarray(alphas, dtype=float)
    if np.any(np.diff(alphas) <= 0):
        raise ValueError("alphas must be strictly increasing")
    lo, hi = func.bounds
    points = []
    for t, a in enumerate(alphas, start=1):
        if a < lo or a > hi:
            raise DomainError(f"alpha={a} outside [{lo}, {hi}]")
        d = func.derivative(a)
        nd = np.linalg.norm(d)
        if nd < 1e-12:
            raise DegenerateTangentError(f"derivative vanishes at alpha={a}")
        points.append(StationaryPoint(t, func(a), d / nd))
    return points


def stationary_points_from_table(rows):
    """Stationary points from explicit ``(u_a, phi_bar)`` pairs; ``phi_bar`` is normalised."""
    points = []
    for t, (u_a, phi) in enumerate(rows, start=1):
        phi = np.asarray(phi, dtype=float)
        nd = np.linalg.norm(phi)
        if nd < 1e-12:
            raise DegenerateTangentError(f"zero tangent mode at stationary point {t}")
        points.append(StationaryPoint(t, np.asarray(u_a, dtype=float), phi / nd))
    return points


@dataclass
class Problem:
    """A complete synthesis task: mesh, material, active DoFs and stationary points."""

    mesh: Mesh
    material: object
    partition: DofPartition
    points: list
    name: str = "problem"

    def __post_init__(self):
        for p in self.points:
            if p.u_a.size != self.partition.q or p.phi_bar.size != self.partition.q:
                raise ValueError(f"stationary point {p.index} does not match {self.partition.q} active DoFs")
