"""Discrete Robin-Schroedinger operator and its eigensystem.

The operator is assembled from its quadratic form

    Q(u) = int |grad u|^2 + q |u|^2 dV  -  int omega |u|^2 dS,

discretized with the stencil graph of :class:`~robinspec.geometry.Mesh`, so
the matrix is symmetric by construction and the Robin condition
``d_nu u + omega u = 0`` (``nu`` the *interior* normal) is imposed weakly.
With this orientation a positive impedance lowers the spectrum and the
eigenvalue derivative along ``omega0 + t * w`` is ``-int |phi|^2 w dS``.

For a rectangle with conformal metric ``g = c * delta`` the problem is the
generalized one ``(K + c q M0 - B) phi = lam * diag(c w_V) phi`` with
boundary weights carrying ``sqrt(c)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BranchLossError, ConfigError, ContourError, SolverError
from .geometry import BoundaryMesh, Mesh

DENSE_LIMIT = 4000
GAP_RTOL = 1e-7


def default_gap_tol(a, b=0.0):
    return GAP_RTOL * (1.0 + max(abs(a), abs(b)))


@dataclass(frozen=True, eq=False)
class RobinOperator:
    """Assembled operator ``A + B`` with diagonal mass ``M``.

    Attributes
    ----------
    stiffness : sparse matrix
        ``A``: gradient plus potential part.
    boundary : ndarray
        Diagonal of ``B`` on the boundary cycle, ``-omega * w_S``.
    mass : ndarray
        Diagonal of ``M`` (``c * w_V``).
    """

    mesh: Mesh = field(repr=False)
    bmesh: BoundaryMesh = field(repr=False)
    q: np.ndarray
    c: np.ndarray
    omega: np.ndarray
    stiffness: sp.csr_matrix = field(repr=False)
    boundary: np.ndarray
    mass: np.ndarray

    @property
    def size(self) -> int:
        return self.mass.size

    def matrix(self) -> sp.csr_matrix:
        n = self.size
        B = sp.csr_matrix((self.boundary, (self.bmesh.nodes, self.bmesh.nodes)), shape=(n, n))
        return (self.stiffness + B).tocsr()

    def form(self, u) -> float:
        """Quadratic form evaluated term by term (no cancellation in the gradient part)."""
        u = np.asarray(u, dtype=float)
        e = self.mesh.edges
        grad = self.mesh.edge_weights @ (u[e[:, 0]] - u[e[:, 1]]) ** 2
        pot = (self.c * self.q * self.mesh.volume_weights) @ (u * u)
        ub = u[self.bmesh.nodes]
        return float(grad + pot + self.boundary @ (ub * ub))

    def mass_norm(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(np.sqrt(self.mass @ (u * u)))


def _laplacian(mesh: Mesh) -> sp.csr_matrix:
    e, w = mesh.edges, mesh.edge_weights
    n = mesh.n_nodes
    rows = np.concatenate([e[:, 0], e[:, 1], e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0], e[:, 0], e[:, 1]])
    vals = np.concatenate([-w, -w, w, w])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


class ForwardModel:
    """Fixed domain, potential and metric; impedance varies per solve.

    The stiffness and mass parts are assembled once; :meth:`operator` only
    swaps the boundary diagonal.
    """

    def __init__(self, mesh: Mesh, bmesh: BoundaryMesh, q=0.0, c=1.0):
        n = mesh.n_nodes
        q = np.broadcast_to(np.asarray(q, dtype=float), (n,)).copy()
        c = np.broadcast_to(np.asarray(c, dtype=float), (n,)).copy()
        if not np.all(np.isfinite(q)) or not np.all(np.isfinite(c)):
            raise ConfigError("q and c must be finite")
        if np.any(c <= 0):
            raise ConfigError("conformal factor c must be strictly positive")
        if mesh.dim == 1 and np.any(c != 1.0):
            raise ConfigError("a conformal factor is only supported on 2-D domains")
        self.mesh = mesh
        self.base_bmesh = bmesh
        self.bmesh = bmesh.with_metric(np.sqrt(c[bmesh.nodes]))
        self.q = q
        self.c = c
        self.mass = c * mesh.volume_weights
        self.stiffness = (_laplacian(mesh) + sp.diags(c * q * mesh.volume_weights)).tocsr()

    def operator(self, omega) -> RobinOperator:
        omega = np.asarray(omega, dtype=float)
        if omega.shape != (self.bmesh.size,):
            raise ValueError(f"impedance has shape {omega.shape}, expected ({self.bmesh.size},)")
        if not np.all(np.isfinite(omega)):
            raise ConfigError("impedance must be finite")
        return RobinOperator(
            mesh=self.mesh, bmesh=self.bmesh, q=self.q, c=self.c, omega=omega.copy(),
            stiffness=self.stiffness, boundary=-omega * self.bmesh.weights, mass=self.mass,
        )

    def eigensystem(self, omega, K: int, tol: float = 1e-8) -> "EigenSystem":
        return solve_eigen(self.operator(omega), K, tol)

    def eigenvalues(self, omega, K: int, tol: float = 1e-8) -> np.ndarray:
        return self.eigensystem(omega, K, tol).values


def assemble(mesh: Mesh, bmesh: BoundaryMesh, q, c, omega) -> RobinOperator:
    return ForwardModel(mesh, bmesh, q, c).operator(omega)


# -------------------------------------------------------------- eigensolve

@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Lowest ``K`` eigenpairs, ascending, ``M``-orthonormal.

    ``vectors[:, k-1]`` is the eigenvector of the k-th eigenvalue; indices in
    the public API are 1-based as in the usual ``lambda_1 <= lambda_2 <= ...``
    convention.
    """

    op: RobinOperator = field(repr=False)
    values: np.ndarray
    vectors: np.ndarray = field(repr=False)
    residuals: np.ndarray

    @property
    def K(self) -> int:
        return self.values.size

    def vector(self, k: int) -> np.ndarray:
        return self.vectors[:, k - 1]


def _scaled_matrix(op: RobinOperator):
    d = 1.0 / np.sqrt(op.mass)
    S = sp.diags(d) @ op.matrix() @ sp.diags(d)
    return S.tocsr(), d


def _lower_bound_guess(op: RobinOperator) -> float:
    # first-order Robin shift with a safety factor; inertia check below makes it safe
    w_pos = np.clip(-op.boundary, 0.0, None).sum()
    return float(min(op.q.min(), 0.0) - 2.0 * w_pos / op.mass.sum() - 1.0)


def _inertia_factor(S: sp.csr_matrix, sigma: float):
    """LU of ``S - sigma I`` with symmetric ordering and no pivoting.

    Returns the factor and the number of eigenvalues of ``S`` below ``sigma``
    (Sylvester's law of inertia on the pivots).
    """
    n = S.shape[0]
    T = (S - sigma * sp.identity(n, format="csr")).tocsc()
    lu = spla.splu(T, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                   options=dict(SymmetricMode=True))
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise SolverError("symmetric factorization was pivoted; inertia unavailable")
    below = int(np.count_nonzero(lu.U.diagonal() < 0))
    return lu, below


def _solve_sparse(S, K, sigma):
    n = S.shape[0]
    for _ in range(60):
        lu, below = _inertia_factor(S, sigma)
        if below == 0:
            break
        sigma -= 2.0 * max(1.0, abs(sigma))
    else:
        raise SolverError("could not place a shift below the spectrum")
    OPinv = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
    v0 = np.cos(np.arange(n) * 0.7071) + 1.5
    ncv = min(n - 1, max(2 * K + 1, K + 20))
    vals, vecs = spla.eigsh(S, k=K, sigma=sigma, which="LM", OPinv=OPinv, v0=v0,
                            ncv=ncv, tol=0, maxiter=20 * n)
    return vals, vecs


def solve_eigen(op: RobinOperator, K: int, tol: float = 1e-8) -> EigenSystem:
    """Lowest ``K`` eigenpairs of ``(A + B) phi = lam M phi``.

    Dimensions up to ``DENSE_LIMIT`` use LAPACK (tridiagonal QL for 1-D
    grids); larger problems use shift-invert Lanczos with a shift certified
    below the spectrum by an inertia count.  Eigenvalues are re-evaluated as
    Rayleigh quotients of the term-wise form for full relative accuracy.

    Raises
    ------
    SolverError
        If any residual ``||(A+B) phi - lam M phi|| / ||M phi||`` exceeds
        ``tol * max(1, ||S||_inf)`` for the symmetrically scaled matrix ``S``.
    """
    K = int(K)
    n = op.size
    if K < 0 or K > n:
        raise ConfigError(f"requested K={K} eigenpairs of an operator of size {n}")
    if not tol > 0:
        raise ConfigError("tol must be positive")
    if K == 0:
        return EigenSystem(op, np.zeros(0), np.zeros((n, 0)), np.zeros(0))

    S, d = _scaled_matrix(op)
    if n <= DENSE_LIMIT:
        if op.mesh.dim == 1:
            diag = S.diagonal()
            off = S.diagonal(1)
            vals, vecs = la.eigh_tridiagonal(diag, off, select="i", select_range=(0, K - 1))
        else:
            vals, vecs = la.eigh(S.toarray(), subset_by_index=[0, K - 1])
    else:
        try:
            vals, vecs = _solve_sparse(S, K, _lower_bound_guess(op))
        except spla.ArpackNoConvergence as exc:
            raise SolverError(f"Lanczos did not converge: {exc}") from None

    order = np.argsort(vals, kind="stable")
    vecs = vecs[:, order] * d[:, None]
    vecs /= np.sqrt(op.mass @ vecs**2)[None, :]
    values = np.array([op.form(vecs[:, j]) for j in range(K)])

    A = op.matrix()
    Mphi = op.mass[:, None] * vecs
    R = A @ vecs - Mphi * values[None, :]
    residuals = np.linalg.norm(R, axis=0) / np.linalg.norm(Mphi, axis=0)
    scale = max(1.0, float(abs(S).sum(axis=1).max()))
    worst = float(residuals.max())
    if worst > tol * scale:
        raise SolverError(f"eigen residual {worst:.3e} exceeds {tol * scale:.3e}", worst)
    # re-sort: Rayleigh refinement can swap numerically tied values
    order = np.argsort(values, kind="stable")
    return EigenSystem(op, values[order], vecs[:, order], residuals[order])


# --------------------------------------------------------------- clusters

@dataclass(frozen=True)
class Cluster:
    """Eigenvalues ``lambda_first .. lambda_last`` (1-based, inclusive)."""

    first: int
    last: int
    values: tuple
    gap_below: float
    gap_above: float

    @property
    def multiplicity(self) -> int:
        return self.last - self.first + 1

    @property
    def indices(self) -> range:
        return range(self.first, self.last + 1)

    @property
    def center(self) -> float:
        return float(np.mean(self.values))

    @property
    def spread(self) -> float:
        return float(self.values[-1] - self.values[0])


def cluster_eigenvalues(values: Sequence[float], gap_tol=None) -> list[Cluster]:
    """Group ascending eigenvalues; neighbours closer than ``gap_tol`` merge.

    ``gap_tol`` is an absolute threshold, or ``None`` for the default
    ``1e-7 * (1 + |lambda|)``.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return []
    if np.any(np.diff(v) < 0):
        raise ValueError("eigenvalues must be ascending")
    gaps = np.diff(v)
    if gap_tol is None:
        thresh = GAP_RTOL * (1.0 + np.maximum(np.abs(v[:-1]), np.abs(v[1:])))
    else:
        thresh = np.full(gaps.shape, float(gap_tol))
    breaks = np.flatnonzero(gaps >= thresh)
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks, [v.size - 1]])
    out = []
    for s, e in zip(starts, ends):
        below = float(v[s] - v[s - 1]) if s > 0 else np.inf
        above = float(v[e + 1] - v[e]) if e + 1 < v.size else np.inf
        out.append(Cluster(int(s) + 1, int(e) + 1, tuple(float(x) for x in v[s:e + 1]), below, above))
    return out


def boundary_trace(eigsys: EigenSystem, k: int, bmesh: BoundaryMesh | None = None) -> np.ndarray:
    if not 1 <= k <= eigsys.K:
        raise IndexError(f"eigen index {k} outside 1..{eigsys.K}")
    bm = bmesh if bmesh is not None else eigsys.op.bmesh
    return eigsys.vectors[bm.nodes, k - 1].copy()


# ---------------------------------------------------------------- projector

@dataclass(frozen=True, eq=False)
class Projector:
    """Spectral projector ``P u = sum_i phi_i (phi_i^T M u)`` over enclosed pairs."""

    vectors: np.ndarray
    mass: np.ndarray
    indices: tuple

    @property
    def rank(self) -> int:
        return self.vectors.shape[1]

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return self.vectors @ (self.vectors.T @ (self.mass * u))

    def matrix(self) -> np.ndarray:
        return self.vectors @ (self.vectors.T * self.mass[None, :])


def riesz_projector(eigsys: EigenSystem, center: float, radius: float) -> Projector:
    """Projector onto eigenvectors with ``|lambda - center| < radius``.

    For a finite symmetric pencil the contour integral of the resolvent is
    exactly this spectral sum.
    """
    if not radius > 0:
        raise ContourError("radius must be positive")
    dist = np.abs(eigsys.values - center)
    near = np.abs(dist - radius) <= 1e-6 * radius
    if np.any(near):
        k = int(np.flatnonzero(near)[0]) + 1
        raise ContourError(f"eigenvalue lambda_{k}={eigsys.values[k - 1]:.12g} lies on the contour")
    if eigsys.K < eigsys.op.size and center + radius >= eigsys.values[-1]:
        raise ContourError("contour reaches beyond the computed part of the spectrum")
    inside = np.flatnonzero(dist < radius)
    return Projector(eigsys.vectors[:, inside].copy(), eigsys.op.mass, tuple(int(i) + 1 for i in inside))


@dataclass(frozen=True, eq=False)
class BranchTrack:
    t: np.ndarray
    vectors: np.ndarray = field(repr=False)
    values: np.ndarray
    lipschitz: float


def track_branch(model: ForwardModel, phi0, omega_path: Callable[[float], np.ndarray],
                 t_grid, center: float, radius: float, K: int) -> BranchTrack:
    """Follow ``phi(t) = P(t) phi0 / ||P(t) phi0||_M`` along an impedance path.

    ``P(t)`` is the projector for the fixed disk ``(center, radius)`` at
    ``omega_path(t)``.  ``values`` holds the Rayleigh quotient of ``phi(t)``;
    ``lipschitz`` is ``max ||phi(t_{i+1}) - phi(t_i)||_M / (t_{i+1} - t_i)``.
    """
    phi0 = np.asarray(phi0, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    vecs = np.empty((phi0.size, t_grid.size))
    vals = np.empty(t_grid.size)
    for i, t in enumerate(t_grid):
        op = model.operator(omega_path(t))
        if i == 0 and abs(op.mass_norm(phi0) - 1.0) > 1e-8:
            raise ConfigError("phi0 must have unit M-norm")
        es = solve_eigen(op, K)
        P = riesz_projector(es, center, radius)
        v = P(phi0)
        nv = op.mass_norm(v)
        if nv < 1e-8:
            raise BranchLossError(f"projection of phi0 vanished at t={t:.6g} (norm {nv:.2e})")
        v /= nv
        vecs[:, i] = v
        vals[i] = op.form(v)
    lip = 0.0
    if t_grid.size > 1:
        dv = np.diff(vecs, axis=1)
        steps = np.sqrt(model.mass @ dv**2) / np.abs(np.diff(t_grid))
        lip = float(steps.max())
    return BranchTrack(t_grid, vecs, vals, lip)
