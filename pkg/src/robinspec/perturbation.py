"""Impedance perturbation calculus.

Along ``omega(t) = omega0 + t * w`` a simple eigenvalue moves with speed
``-int |phi_k|^2 w dS``.  This module evaluates that derivative from an
eigenvector (:func:`gateaux_exact`), estimates it from eigenvalue queries
alone (:func:`gateaux_fd`), compares the two, and searches for small
impedance perturbations that make the low spectrum simple.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, MultiplicityError, SearchFailure
from .fields import random_bump
from .geometry import BoundaryMesh, SigmaPatch, integrate_boundary
from .oracle import SpectralOracle
from .spectral import EigenSystem, boundary_trace, default_gap_tol


@dataclass(frozen=True, eq=False)
class ImpedancePath:
    base: np.ndarray
    direction: np.ndarray

    def __call__(self, t: float) -> np.ndarray:
        return self.base + t * self.direction


def gateaux_exact(trace, direction, bmesh: BoundaryMesh) -> float:
    trace = np.asarray(trace, dtype=float)
    return -integrate_boundary(bmesh, trace * trace * np.asarray(direction, dtype=float))


def default_step(omega0, direction) -> float:
    return 1e-4 * (1.0 + float(np.max(np.abs(omega0), initial=0.0))) / float(np.max(np.abs(direction)))


def _neighbour_gap(vals: np.ndarray, k: int) -> float:
    g = np.inf
    if k >= 2:
        g = min(g, vals[k - 1] - vals[k - 2])
    if k < vals.size:
        g = min(g, vals[k] - vals[k - 1])
    return float(g)


@dataclass(frozen=True)
class FDEstimate:
    value: float
    error: float
    step: float


def gateaux_fd(oracle: SpectralOracle, omega0, direction, k: int, h: float | None = None,
               gap_tol: float | None = None, safety: float = 4.0) -> FDEstimate:
    """Central-difference derivative of ``lambda_k`` along ``direction``.

    ``error`` is the Richardson indicator ``|D(h) - D(h/2)| * 4/3``.  The
    eigenvalue must be isolated: its gap at ``omega0`` must exceed
    ``safety * h * max|direction|`` and no query point may bring a neighbour
    within ``gap_tol`` (default ``1e-7 (1 + |lambda|)``).

    Raises
    ------
    MultiplicityError
        If ``lambda_k`` is (nearly) multiple, or ``k == oracle.K`` so that the
        upper neighbour is unknown.
    """
    omega0 = np.asarray(omega0, dtype=float)
    direction = np.asarray(direction, dtype=float)
    amp = float(np.max(np.abs(direction), initial=0.0))
    if amp == 0.0:
        return FDEstimate(0.0, 0.0, 0.0)
    if not 1 <= k < oracle.K:
        raise MultiplicityError(
            f"lambda_{k} cannot be certified simple with an oracle of {oracle.K} values", k)
    if h is None:
        h = default_step(omega0, direction)
    if not h > 0:
        raise ConfigError("finite-difference step must be positive")

    base = oracle(omega0)
    gap0 = _neighbour_gap(base, k)
    if not gap0 > safety * h * amp:
        raise MultiplicityError(
            f"lambda_{k} gap {gap0:.3e} too small for step {h:.3e} (need > {safety * h * amp:.3e})", k)

    pts = {}
    for s in (h, -h, h / 2, -h / 2):
        vals = oracle(omega0 + s * direction)
        tol = gap_tol if gap_tol is not None else default_gap_tol(vals[k - 1])
        if _neighbour_gap(vals, k) < tol:
            raise MultiplicityError(f"lambda_{k} collides with a neighbour at step {s:.3e}", k)
        pts[s] = vals[k - 1]
    d1 = (pts[h] - pts[-h]) / (2 * h)
    d2 = (pts[h / 2] - pts[-h / 2]) / h
    return FDEstimate(float(d1), float(abs(d1 - d2) * 4.0 / 3.0), float(h))


@dataclass(frozen=True, eq=False)
class GateauxTable:
    """``D[k-1, j]``: derivative of ``lambda_k`` along basis direction ``j``."""

    ks: tuple
    D: np.ndarray
    steps: np.ndarray
    errors: np.ndarray

    def row(self, k: int) -> np.ndarray:
        return self.D[self.ks.index(k)]


def gateaux_table(oracle, omega0, directions, ks, h=None, gap_tol=None) -> GateauxTable:
    directions = np.atleast_2d(np.asarray(list(directions), dtype=float))
    ks = tuple(int(k) for k in ks)
    D = np.empty((len(ks), len(directions)))
    steps = np.empty_like(D)
    errs = np.empty_like(D)
    for a, k in enumerate(ks):
        for j, w in enumerate(directions):
            est = gateaux_fd(oracle, omega0, w, k, h, gap_tol)
            D[a, j], steps[a, j], errs[a, j] = est.value, est.step, est.error
    return GateauxTable(ks, D, steps, errs)


# ---------------------------------------------------------- Hadamard check

@dataclass
class HadamardReport:
    entries: list = field(default_factory=list)
    rtol: float = 1e-4

    @property
    def checked(self) -> list:
        return [e for e in self.entries if e["status"] == "ok" or e["status"] == "mismatch"]

    @property
    def flagged(self) -> list:
        return [e for e in self.entries if e["status"] == "mismatch"]

    @property
    def max_rel_error(self) -> float:
        errs = [e["rel_err"] for e in self.checked if e["rel_err"] is not None]
        return max(errs, default=0.0)

    def to_dict(self) -> dict:
        return {"rtol": self.rtol, "max_rel_error": self.max_rel_error,
                "n_flagged": len(self.flagged), "entries": self.entries}


def hadamard_check(eigsys: EigenSystem, oracle: SpectralOracle, directions, h=None, ks=None,
                   rtol: float = 1e-4, atol_skip: float = 1e-10) -> HadamardReport:
    """Compare finite-difference and trace-based derivatives per ``(k, j)``.

    Entries whose trace-based value is below ``atol_skip`` in magnitude are
    recorded with status ``"skipped"``; multiplicity failures are recorded
    as ``"multiple"`` and the sweep continues.
    """
    omega0 = eigsys.op.omega
    bmesh = eigsys.op.bmesh
    if ks is None:
        ks = range(1, min(eigsys.K, oracle.K - 1) + 1)
    report = HadamardReport(rtol=rtol)
    for j, w in enumerate(directions):
        w = np.asarray(w, dtype=float)
        for k in ks:
            exact = gateaux_exact(boundary_trace(eigsys, k), w, bmesh)
            entry = {"k": int(k), "j": j, "exact": exact, "fd": None, "fd_error": None,
                     "abs_err": None, "rel_err": None, "status": "ok"}
            try:
                est = gateaux_fd(oracle, omega0, w, k, h)
            except MultiplicityError:
                entry["status"] = "multiple"
                report.entries.append(entry)
                continue
            entry["fd"], entry["fd_error"] = est.value, est.error
            entry["abs_err"] = abs(est.value - exact)
            if abs(exact) < atol_skip:
                entry["status"] = "skipped"
            else:
                entry["rel_err"] = entry["abs_err"] / abs(exact)
                if entry["rel_err"] > rtol:
                    entry["status"] = "mismatch"
            report.entries.append(entry)
    return report


# ------------------------------------------------------ simplicity search

@dataclass
class SimplifyResult:
    omega: np.ndarray
    eigenvalues: np.ndarray
    stages: list
    n_trials: int

    def to_dict(self) -> dict:
        return {"eigenvalues": self.eigenvalues.tolist(), "stages": self.stages,
                "n_trials": self.n_trials, "omega": self.omega.tolist()}


def _pair_gaps(vals, n):
    return np.diff(vals[: n + 1])


def simplify_spectrum(oracle: SpectralOracle, omega0, sigma: SigmaPatch, k_max: int, eps: float,
                      seed: int, budget: int = 50, gap_floor: float | None = None) -> SimplifyResult:
    """Small patch-supported perturbation making ``lambda_1..lambda_k_max`` simple.

    Stage ``i`` tries random smooth bumps of amplitude
    ``eps / (k_max * 2**i)`` (zero perturbation first) until the pair
    ``(i, i+1)`` is separated by at least ``gap_floor`` while every pair
    ``p`` locked at an earlier stage keeps at least
    ``(1/2 - 2**-i)`` times the gap it had when locked.  The amplitudes sum
    to less than ``eps / k_max``, so the result stays in the ``eps`` ball.

    Raises
    ------
    SearchFailure
        When ``budget`` trials at some stage all fail; ``index`` names it.
    """
    if not eps > 0:
        raise ConfigError("eps must be positive")
    if budget < 1:
        raise ConfigError("budget must allow at least one trial per stage")
    k_max = int(k_max)
    if k_max + 1 > oracle.K:
        raise ConfigError(f"simplifying {k_max} eigenvalues needs an oracle with K >= {k_max + 1}")

    def floor_for(vals, i):
        if gap_floor is not None:
            return gap_floor
        return default_gap_tol(vals[i - 1], vals[i])

    omega = np.asarray(omega0, dtype=float).copy()
    locked: dict[int, float] = {}
    stages = []
    n_trials = 0
    vals = oracle(omega)
    for stage in range(1, k_max + 1):
        amp = eps / (k_max * 2.0**stage)
        factor = 0.5 - 2.0**-stage

        def acceptable(v):
            gaps = _pair_gaps(v, k_max)
            if gaps[stage - 1] < floor_for(v, stage):
                return False
            return all(gaps[p - 1] >= factor * g for p, g in locked.items()) and all(
                gaps[p - 1] >= floor_for(v, p) for p in locked)

        trial = 0
        accepted = acceptable(vals)
        while not accepted and trial < budget:
            p = random_bump(sigma, seed, amp, label=f"simplify/stage{stage}/trial{trial}")
            cand = omega + p
            v = oracle(cand)
            trial += 1
            if acceptable(v):
                omega, vals, accepted = cand, v, True
        n_trials += trial
        if not accepted:
            raise SearchFailure(f"no trial separated lambda_{stage} within {budget} trials", stage)
        gaps = _pair_gaps(vals, k_max)
        locked[stage] = float(gaps[stage - 1])
        stages.append({
            "stage": stage, "trials": trial, "amplitude": amp, "floor_factor": factor,
            "gap": locked[stage],
            "locked_gaps_now": {str(p): float(gaps[p - 1]) for p in locked},
            "locked_floors": {str(p): factor * g for p, g in locked.items() if p != stage},
        })
    return SimplifyResult(omega, vals, stages, n_trials)
