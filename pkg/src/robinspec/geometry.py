"""Tensor-grid domains, boundary cycles and the boundary patch.

Two domain kinds are supported: an interval ``[0, L]`` and a rectangle
``[0, a] x [0, b]``.  Both carry trapezoidal volume weights and boundary
weights, so that ``sum(volume_weights) == |Omega|`` and
``sum(boundary.weights) == |dOmega|`` (the boundary of an interval is two
points with unit counting weights).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, PatchTooSmallError

MIN_POINTS = 3


@dataclass(frozen=True)
class Interval:
    length: float
    n: int

    def __post_init__(self):
        if not self.length > 0:
            raise ConfigError(f"interval length must be positive, got {self.length}")
        if int(self.n) < MIN_POINTS:
            raise ConfigError(f"grid too small: n={self.n} < {MIN_POINTS}")


@dataclass(frozen=True)
class Rectangle:
    a: float
    b: float
    nx: int
    ny: int

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ConfigError(f"rectangle sides must be positive, got a={self.a}, b={self.b}")
        if int(self.nx) < MIN_POINTS or int(self.ny) < MIN_POINTS:
            raise ConfigError(f"grid too small: nx={self.nx}, ny={self.ny} < {MIN_POINTS}")


DomainSpec = Interval | Rectangle


def domain_from_dict(d: dict) -> DomainSpec:
    """Parse the ``"domain"`` block of an experiment config."""
    try:
        kind = d["kind"].lower()
        if kind == "interval":
            return Interval(float(d["length"]), int(d["n"]))
        if kind == "rectangle":
            return Rectangle(float(d["a"]), float(d["b"]), int(d["nx"]), int(d["ny"]))
    except KeyError as exc:
        raise ConfigError(f"domain: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"domain: {exc}") from None
    raise ConfigError(f"domain.kind: unknown kind {d.get('kind')!r}")


def domain_to_dict(spec: DomainSpec) -> dict:
    if isinstance(spec, Interval):
        return {"kind": "interval", "length": spec.length, "n": spec.n}
    return {"kind": "rectangle", "a": spec.a, "b": spec.b, "nx": spec.nx, "ny": spec.ny}


@dataclass(frozen=True, eq=False)
class Mesh:
    """Grid nodes, trapezoidal volume weights and the stencil graph.

    ``edges`` lists grid-adjacent node pairs; ``edge_weights`` are chosen so
    that ``sum(edge_weights * (u[i] - u[j])**2)`` is the tensor-trapezoid
    discretization of ``int |grad u|^2 dV``.
    """

    spec: DomainSpec
    coords: np.ndarray
    volume_weights: np.ndarray
    edges: np.ndarray
    edge_weights: np.ndarray
    shape: tuple
    spacing: tuple

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def volume(self) -> float:
        return float(self.volume_weights.sum())


@dataclass(frozen=True, eq=False)
class BoundaryMesh:
    """Ordered boundary nodes with arc-length quadrature.

    Attributes
    ----------
    nodes : ndarray of int
        Mesh indices in cycle order.  For a rectangle the cycle starts at the
        corner (0, 0) and runs counterclockwise; for an interval it is
        ``[0, n-1]``.
    weights : ndarray
        Boundary quadrature weights (``dS``), metric factor included when
        produced by :meth:`with_metric`.
    arc : ndarray
        Cumulative arc-length coordinate of each node.  For an interval the
        two endpoints sit at ``s = 0`` and ``s = L``.
    inward : ndarray of int
        Mesh index of the interior neighbour along the inward normal.
    length : float
        Perimeter (rectangle) or 2 (interval, counting measure).
    """

    mesh: Mesh = field(repr=False)
    nodes: np.ndarray
    weights: np.ndarray
    arc: np.ndarray
    inward: np.ndarray
    length: float

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def coords(self) -> np.ndarray:
        return self.mesh.coords[self.nodes]

    def with_metric(self, factor) -> "BoundaryMesh":
        """Copy with weights multiplied nodewise by ``factor``."""
        factor = np.broadcast_to(np.asarray(factor, dtype=float), self.weights.shape)
        return replace(self, weights=self.weights * factor)


@dataclass(frozen=True, eq=False)
class SigmaPatch:
    """Contiguous arc of boundary nodes on which perturbations may live.

    ``positions`` index into the boundary cycle (not the mesh).
    """

    bmesh: BoundaryMesh = field(repr=False)
    positions: np.ndarray
    arc_start: float
    arc_end: float

    @property
    def size(self) -> int:
        return self.positions.size

    @property
    def nodes(self) -> np.ndarray:
        return self.bmesh.nodes[self.positions]

    @property
    def arc(self) -> np.ndarray:
        return self.bmesh.arc[self.positions]

    @property
    def weights(self) -> np.ndarray:
        return self.bmesh.weights[self.positions]

    def mask(self) -> np.ndarray:
        m = np.zeros(self.bmesh.size, dtype=bool)
        m[self.positions] = True
        return m

    def restrict(self, f) -> np.ndarray:
        """Values of a boundary field on the patch nodes."""
        return np.asarray(f)[self.positions]

    def extend(self, values) -> np.ndarray:
        """Boundary field equal to ``values`` on the patch and 0 elsewhere."""
        out = np.zeros(self.bmesh.size)
        out[self.positions] = values
        return out


def _trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


def build_mesh(spec: DomainSpec) -> tuple[Mesh, BoundaryMesh]:
    if isinstance(spec, Interval):
        return _build_interval(spec)
    if isinstance(spec, Rectangle):
        return _build_rectangle(spec)
    raise ConfigError(f"unsupported domain spec {spec!r}")


def _build_interval(spec: Interval):
    n, L = int(spec.n), float(spec.length)
    h = L / (n - 1)
    x = np.linspace(0.0, L, n)
    edges = np.column_stack([np.arange(n - 1), np.arange(1, n)])
    mesh = Mesh(
        spec=spec,
        coords=x[:, None],
        volume_weights=_trapezoid_weights(n, h),
        edges=edges,
        edge_weights=np.full(n - 1, 1.0 / h),
        shape=(n,),
        spacing=(h,),
    )
    bmesh = BoundaryMesh(
        mesh=mesh,
        nodes=np.array([0, n - 1]),
        weights=np.ones(2),
        arc=np.array([0.0, L]),
        inward=np.array([1, n - 2]),
        length=2.0,
    )
    return mesh, bmesh


def _build_rectangle(spec: Rectangle):
    nx, ny = int(spec.nx), int(spec.ny)
    hx, hy = spec.a / (nx - 1), spec.b / (ny - 1)
    wx, wy = _trapezoid_weights(nx, hx), _trapezoid_weights(ny, hy)
    X, Y = np.meshgrid(np.linspace(0, spec.a, nx), np.linspace(0, spec.b, ny))
    coords = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange(nx * ny).reshape(ny, nx)  # idx[j, i] -> node at (x_i, y_j)

    # x-differences are exact for piecewise-linear u (midpoint in x, trapezoid in y)
    hor = np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
    hor_w = np.repeat(wy / hx, nx - 1)
    ver = np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
    ver_w = np.tile(wx / hy, ny - 1)

    mesh = Mesh(
        spec=spec,
        coords=coords,
        volume_weights=np.outer(wy, wx).ravel(),
        edges=np.vstack([hor, ver]),
        edge_weights=np.concatenate([hor_w, ver_w]),
        shape=(nx, ny),
        spacing=(hx, hy),
    )

    # counterclockwise cycle; each corner opens the edge it starts
    bottom = idx[0, :-1]
    right = idx[:-1, -1]
    top = idx[-1, :0:-1]
    left = idx[:0:-1, 0]
    nodes = np.concatenate([bottom, right, top, left])
    seg = np.concatenate([
        np.full(nx - 1, hx), np.full(ny - 1, hy), np.full(nx - 1, hx), np.full(ny - 1, hy)
    ])
    weights = 0.5 * (seg + np.roll(seg, 1))
    arc = np.concatenate([[0.0], np.cumsum(seg)[:-1]])

    inward = np.concatenate([
        idx[1, :-1],        # bottom: +y
        idx[:-1, -2],       # right: -x
        idx[-2, :0:-1],     # top: -y
        idx[:0:-1, 1],      # left: +x
    ])
    bmesh = BoundaryMesh(
        mesh=mesh,
        nodes=nodes,
        weights=weights,
        arc=arc,
        inward=inward,
        length=2.0 * (spec.a + spec.b),
    )
    return mesh, bmesh


def make_sigma(bmesh: BoundaryMesh, arc_start: float, arc_end: float) -> SigmaPatch:
    """Boundary patch covering arc coordinates in ``[arc_start, arc_end]``.

    One margin node is dropped at each end so that perturbations supported on
    the patch vanish on its closure.  On an interval the boundary is two
    isolated points and no margin is taken.
    """
    total = bmesh.arc[-1] if bmesh.mesh.dim == 1 else bmesh.length
    if not (0.0 <= arc_start < arc_end <= total + 1e-12 * max(total, 1.0)):
        raise ConfigError(
            f"sigma arc range must satisfy 0 <= start < end <= {total}, got [{arc_start}, {arc_end}]"
        )
    tol = 1e-12 * max(total, 1.0)
    inside = np.flatnonzero((bmesh.arc >= arc_start - tol) & (bmesh.arc <= arc_end + tol))
    if bmesh.mesh.dim > 1:
        inside = inside[1:-1]
    if inside.size == 0:
        raise PatchTooSmallError(f"sigma [{arc_start}, {arc_end}] is empty after margins")
    return SigmaPatch(bmesh=bmesh, positions=inside, arc_start=float(arc_start), arc_end=float(arc_end))


def integrate_boundary(bmesh: BoundaryMesh, f) -> float:
    f = np.asarray(f, dtype=float)
    if f.shape != bmesh.weights.shape:
        raise ValueError(f"boundary field has shape {f.shape}, expected {bmesh.weights.shape}")
    return float(f @ bmesh.weights)
