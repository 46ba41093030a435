"""Recovery of boundary spectral data from eigenvalue queries alone.

Everything here talks to the operator only through a
:class:`~robinspec.oracle.SpectralOracle`; eigenvectors are never touched.
The patch geometry (node positions and boundary weights) is known to the
data side.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import (BasisError, ConvergenceError, MissingQueryError, MultiplicityError,
                     RobinSpecError, SplittingError)
from .fields import BumpBasis, bump_basis, smooth_profile
from .geometry import SigmaPatch
from .oracle import SpectralOracle
from .perturbation import default_step, gateaux_fd
from .signs import recover_sign
from .spectral import Cluster, cluster_eigenvalues, default_gap_tol

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TraceMagnitude:
    """``rho = |phi_k|^2`` on the patch nodes, fitted from derivative moments."""

    k: int
    rho: np.ndarray
    reg: float
    residual: float
    clipped_mass: float
    moments: np.ndarray
    steps: np.ndarray
    resolution_failure: bool = False

    @property
    def magnitude(self) -> np.ndarray:
        return np.sqrt(self.rho)


def second_difference(m: int) -> np.ndarray:
    if m < 3:
        return np.zeros((0, m))
    return np.diff(np.eye(m), 2, axis=0)


def fit_density(collocation: np.ndarray, weights: np.ndarray, moments: np.ndarray,
                reg: float | None = None):
    """Solve ``sum_i b_j(z_i) rho_i w_i = moments_j`` with smoothing.

    Minimizes ``||C rho - m||^2 + reg ||L rho||^2`` with ``L`` the second
    difference along the arc; ``reg`` defaults to ``1e-8 * ||m||``.  Returns
    ``(rho, reg, relative residual)`` before clipping.
    """
    C = collocation * weights[None, :]
    J, m = C.shape
    if np.linalg.matrix_rank(collocation) < min(J, m):
        raise BasisError("bump collocation matrix is rank deficient")
    if reg is None:
        reg = 1e-8 * float(np.linalg.norm(moments))
    L = second_difference(m)
    A = np.vstack([C, np.sqrt(reg) * L])
    rhs = np.concatenate([moments, np.zeros(L.shape[0])])
    rho, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    nrm = float(np.linalg.norm(moments))
    resid = float(np.linalg.norm(C @ rho - moments)) / nrm if nrm > 0 else 0.0
    return rho, float(reg), resid


def recover_trace_magnitude(oracle: SpectralOracle, omega0, k: int, bumps: BumpBasis,
                            h: float | None = None, reg: float | None = None,
                            gap_tol: float | None = None) -> TraceMagnitude:
    """Recover ``|phi_k|^2`` on the patch from finite-difference derivatives.

    The derivative of ``lambda_k`` along bump ``j`` equals
    ``-sum_i b_j(z_i) rho(z_i) w_i``; the moments are fitted by
    :func:`fit_density` and negative values clipped to zero.

    Raises
    ------
    MultiplicityError
        If ``lambda_k`` is not simple at ``omega0``.
    """
    sigma = bumps.sigma
    moments = np.empty(len(bumps))
    steps = np.empty(len(bumps))
    for j, w in enumerate(bumps):
        est = gateaux_fd(oracle, omega0, w, k, h, gap_tol)
        moments[j], steps[j] = -est.value, est.step
    rho, reg, resid = fit_density(bumps.collocation(), sigma.weights, moments, reg)
    total = float(np.abs(rho) @ sigma.weights)
    neg = float(np.clip(-rho, 0.0, None) @ sigma.weights)
    clipped = neg / total if total > 0 else 0.0
    rho = np.clip(rho, 0.0, None)
    failure = not np.any(rho > 1e-12 * max(1.0, float(np.abs(moments).max(initial=0.0))))
    if failure:
        log.warning("lambda_%d: recovered trace vanishes on sigma; treating as resolution failure", k)
    return TraceMagnitude(k, rho, reg, resid, clipped, moments, steps, failure)


# --------------------------------------------------------------- clusters

@dataclass(frozen=True, eq=False)
class ClusterRecovery:
    cluster: Cluster
    magnitudes: list
    history: list
    s_final: float


def default_eta(sigma: SigmaPatch) -> np.ndarray:
    """Smooth unit bump centred on the patch with half-width a quarter of its length."""
    s = sigma.arc
    if s.size < 3:
        return sigma.extend(np.ones(s.size))
    center, half = 0.5 * (s[0] + s[-1]), 0.25 * (s[-1] - s[0])
    vals = smooth_profile((s - center) / half)
    return sigma.extend(vals / vals.max())


def _l2(sigma, f):
    return float(np.sqrt((f * f) @ sigma.weights))


def recover_cluster_traces(oracle: SpectralOracle, omega0, cluster: Cluster, eta, s_schedule,
                           bumps: BumpBasis, h: float | None = None, reg: float | None = None,
                           tol: float = 5e-3, gap_tol: float | None = None,
                           safety: float = 8.0) -> ClusterRecovery:
    """Magnitudes of the ``eta``-adapted eigenvectors of a multiple eigenvalue.

    For each ``s`` in the decreasing schedule the impedance
    ``omega0 + s * eta`` splits the cluster; every member is recovered there
    as a simple eigenvalue (members matched by order inside the cluster).
    Iteration stops once consecutive magnitudes ``sqrt(rho)`` of all members
    differ by at most ``tol`` in relative ``L2(sigma)``.

    Raises
    ------
    SplittingError
        If the cluster does not split at some ``s``.
    ConvergenceError
        If no two consecutive iterates meet ``tol`` within the schedule.
    """
    sigma = bumps.sigma
    omega0 = np.asarray(omega0, dtype=float)
    if cluster.multiplicity == 1:
        mag = recover_trace_magnitude(oracle, omega0, cluster.first, bumps, h, reg, gap_tol)
        return ClusterRecovery(cluster, [mag], [], 0.0)

    s_schedule = [float(s) for s in s_schedule]
    if any(b >= a for a, b in zip(s_schedule, s_schedule[1:])) or min(s_schedule, default=0) <= 0:
        raise ValueError("s_schedule must be positive and strictly decreasing")
    eta = np.asarray(eta, dtype=float)
    amp = max(float(np.abs(bumps.fields).max()), 1e-300)
    history = []
    prev = None
    idx = list(cluster.indices)
    for n, s in enumerate(s_schedule):
        omega_n = omega0 + s * eta
        vals = oracle(omega_n)
        lo, hi = idx[0] - 1, idx[-1] - 1
        window = vals[max(lo - 1, 0): min(hi + 2, vals.size)]
        gaps = np.diff(window)
        floor = gap_tol if gap_tol is not None else default_gap_tol(vals[lo])
        if hi + 1 >= vals.size or np.any(gaps < floor):
            raise SplittingError(
                f"cluster {cluster.first}..{cluster.last} did not split at s={s:.3e} "
                f"(min gap {gaps.min():.3e})")
        split = float(gaps.min())
        h_n = default_step(omega_n, bumps.fields[0]) if h is None else h
        h_n = min(h_n, split / (safety * amp))
        mags = [recover_trace_magnitude(oracle, omega_n, k, bumps, h_n, reg, gap_tol) for k in idx]
        step = None
        if prev is not None:
            step = max(_l2(sigma, a.magnitude - b.magnitude) / max(_l2(sigma, a.magnitude), 1e-300)
                       for a, b in zip(mags, prev))
        history.append({"s": s, "split": split, "h": h_n, "change": step,
                        "eigenvalues": vals[lo:hi + 1].tolist()})
        if step is not None and step <= tol:
            return ClusterRecovery(cluster, mags, history, s)
        prev = mags
    raise ConvergenceError(
        f"cluster {cluster.first}..{cluster.last}: no Cauchy stop within {len(s_schedule)} steps",
        history)


# ---------------------------------------------------- boundary spectral data

@dataclass
class InversionParams:
    J: int = 40
    shape: str = "hat"
    h: float | None = None
    reg: float | None = None
    gap_tol: float | None = None
    s0: float = 0.05
    n_schedule: int = 8
    cauchy_tol: float = 5e-3
    zero_tol: float = 0.01
    fit_window: int = 3
    dip_tol: float = 0.1

    def schedule(self) -> list:
        return [self.s0 * 2.0**-n for n in range(self.n_schedule + 1)]

    @classmethod
    def from_dict(cls, d: dict) -> "InversionParams":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class BSDEntry:
    k: int
    eigenvalue: float
    trace: np.ndarray | None
    rho: np.ndarray | None
    sign_ambiguous: bool = True
    provenance: dict = field(default_factory=dict)
    status: str = "ok"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["trace"] = None if self.trace is None else self.trace.tolist()
        d["rho"] = None if self.rho is None else self.rho.tolist()
        return d


@dataclass
class BoundarySpectralData:
    sigma: SigmaPatch = field(repr=False)
    entries: list = field(default_factory=list)

    @property
    def K(self) -> int:
        return len(self.entries)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([e.eigenvalue for e in self.entries])

    def traces(self) -> np.ndarray:
        m = self.sigma.size
        return np.array([e.trace if e.trace is not None else np.full(m, np.nan) for e in self.entries]).reshape(-1, m)

    def to_dict(self) -> dict:
        return {"arc": self.sigma.arc.tolist(), "entries": [e.to_dict() for e in self.entries]}


def patch_basis(sigma: SigmaPatch, J: int, shape: str = "hat") -> BumpBasis:
    """:func:`bump_basis` capped at ``|sigma|``; a one-node patch gets its indicator."""
    if sigma.size == 1:
        return BumpBasis(sigma, sigma.extend(np.ones(1))[None, :], sigma.arc.copy(), np.ones(1), shape)
    return bump_basis(sigma, min(J, sigma.size), shape)


def _signed(xi, sigma, params):
    if sigma.size < 3:
        return xi.copy(), {"zones": []}
    res = recover_sign(xi, sigma.arc, params.zero_tol, params.fit_window, params.dip_tol)
    return res.values, {"zones": [z.to_dict() for z in res.zones], "anchor": res.anchor}


def assemble_bsd(oracle: SpectralOracle, omega0, K: int, sigma: SigmaPatch,
                 params: InversionParams | None = None, eta=None) -> BoundarySpectralData:
    """Full pipeline: eigenvalues and signed traces on the patch for ``k <= K``.

    Simple eigenvalues go through :func:`recover_trace_magnitude` at
    ``omega0``; multiple ones through :func:`recover_cluster_traces` along
    ``eta`` (default :func:`default_eta`).  Each trace keeps a global sign
    ambiguity.  Failures are recorded per entry in ``status``.
    """
    params = params or InversionParams()
    omega0 = np.asarray(omega0, dtype=float)
    bsd = BoundarySpectralData(sigma)
    if K == 0:
        return bsd
    if K >= oracle.K:
        raise ValueError(f"K={K} needs an oracle with at least K+1={K + 1} eigenvalues")
    vals = oracle(omega0)
    clusters = cluster_eigenvalues(vals, params.gap_tol)
    bumps = patch_basis(sigma, params.J, params.shape)
    eta = default_eta(sigma) if eta is None else np.asarray(eta, dtype=float)

    results: dict[int, tuple] = {}
    for cl in clusters:
        if cl.first > K:
            break
        if cl.last >= oracle.K:
            for k in cl.indices:
                results[k] = (None, {"route": "cluster"}, "error: cluster extends past the oracle's K")
            continue
        try:
            if cl.multiplicity == 1:
                mag = recover_trace_magnitude(oracle, omega0, cl.first, bumps, params.h, params.reg,
                                              params.gap_tol)
                results[cl.first] = (mag, {"route": "simple"}, "ok")
            else:
                rec = recover_cluster_traces(oracle, omega0, cl, eta, params.schedule(), bumps,
                                             params.h, params.reg, params.cauchy_tol, params.gap_tol)
                meta = {"route": "cluster", "cluster": [cl.first, cl.last], "s_final": rec.s_final,
                        "history": rec.history}
                for mag in rec.magnitudes:
                    results[mag.k] = (mag, meta, "ok")
        except MissingQueryError:
            raise
        except (RobinSpecError, ValueError) as exc:
            for k in cl.indices:
                results[k] = (None, {"route": "cluster" if cl.multiplicity > 1 else "simple"},
                              f"error: {type(exc).__name__}: {exc}")

    for k in range(1, K + 1):
        mag, prov, status = results[k]
        entry = BSDEntry(k, float(vals[k - 1]), None, None, True, dict(prov), status)
        if mag is not None:
            entry.rho = mag.rho
            entry.provenance.update(residual=mag.residual, clipped_mass=mag.clipped_mass, reg=mag.reg)
            if mag.resolution_failure:
                entry.status = "error: trace not resolved (vanishing moments)"
            else:
                try:
                    entry.trace, sign_info = _signed(mag.magnitude, sigma, params)
                    entry.provenance.update(sign_info)
                except RobinSpecError as exc:
                    entry.status = f"error: {type(exc).__name__}: {exc}"
        bsd.entries.append(entry)
    return bsd


def compare_bsd(recovered: BoundarySpectralData, truth_values, truth_traces, sigma: SigmaPatch | None = None) -> dict:
    """Eigenvalue and sign-quotiented trace errors against reference data.

    The trace error of entry ``k`` is
    ``min_{s=+-1} ||s psi_k - phi_k|| / ||phi_k||`` in ``L2(sigma)``.
    """
    sigma = sigma or recovered.sigma
    truth_values = np.asarray(truth_values, dtype=float)
    truth_traces = np.asarray(truth_traces, dtype=float)
    rec_traces = recovered.traces()
    if truth_values.shape != (recovered.K,) or truth_traces.shape != rec_traces.shape:
        raise ValueError(
            f"shape mismatch: recovered K={recovered.K}, traces {rec_traces.shape}; "
            f"truth {truth_values.shape}, {truth_traces.shape}")
    per_k = []
    for e, lam, phi, psi in zip(recovered.entries, truth_values, truth_traces, rec_traces):
        abs_err = abs(e.eigenvalue - lam)
        rel_err = abs_err / abs(lam) if lam != 0 else abs_err
        nphi = _l2(sigma, phi)
        if np.any(np.isnan(psi)):
            terr = float("nan")
        else:
            terr = min(_l2(sigma, psi - phi), _l2(sigma, psi + phi)) / nphi if nphi > 0 else _l2(sigma, psi)
        per_k.append({"k": e.k, "eig_abs_err": abs_err, "eig_rel_err": rel_err,
                      "trace_err": terr, "status": e.status})
    finite = [p["trace_err"] for p in per_k if np.isfinite(p["trace_err"])]
    return {
        "per_k": per_k,
        "max_eig_abs_err": max((p["eig_abs_err"] for p in per_k), default=0.0),
        "max_eig_rel_err": max((p["eig_rel_err"] for p in per_k), default=0.0),
        "max_trace_err": max(finite, default=0.0) if len(finite) == len(per_k) else float("inf"),
        "n_failed": sum(1 for p in per_k if p["status"] != "ok"),
    }
