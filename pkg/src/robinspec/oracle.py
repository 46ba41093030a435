"""Spectral oracles: the only data channel of the inversion side.

An oracle maps a boundary impedance to the lowest ``K`` eigenvalues and
nothing else.  Queries are keyed by the SHA-256 of the impedance's float64
bytes, so a replayed run matches exactly the points a recorded run issued.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import MissingQueryError
from .spectral import ForwardModel


def omega_key(omega) -> str:
    a = np.ascontiguousarray(np.asarray(omega, dtype="<f8"))
    return hashlib.sha256(a.tobytes()).hexdigest()


class SpectralOracle:
    """Base class: ``oracle(omega) -> ascending eigenvalues (length K)``."""

    K: int
    n_boundary: int

    def __call__(self, omega) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        if omega.shape != (self.n_boundary,):
            raise ValueError(f"impedance has shape {omega.shape}, expected ({self.n_boundary},)")
        return self._query(omega).copy()

    def _query(self, omega: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ForwardOracle(SpectralOracle):
    """Oracle backed by the forward eigensolver, with a query log.

    Every distinct query is solved once and remembered in issue order, so the
    log can be written out with :meth:`save` and replayed later.
    """

    def __init__(self, model: ForwardModel, K: int, tol: float = 1e-8):
        self.model = model
        self.K = int(K)
        self.tol = tol
        self.n_boundary = model.bmesh.size
        self._cache: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self.n_solves = 0

    def _query(self, omega):
        key = omega_key(omega)
        hit = self._cache.get(key)
        if hit is None:
            vals = self.model.eigenvalues(omega, self.K, self.tol) if self.K else np.zeros(0)
            self.n_solves += 1
            hit = (omega.copy(), vals)
            self._cache[key] = hit
        return hit[1]

    def records(self) -> list[dict]:
        return [{"omega": w.tolist(), "eigenvalues": v.tolist()} for w, v in self._cache.values()]

    def save(self, path) -> None:
        save_records(path, self.records())


class ReplayOracle(SpectralOracle):
    """Read-only oracle serving previously recorded query/result pairs."""

    def __init__(self, records, K: int | None = None, n_boundary: int | None = None):
        self._table: dict[str, np.ndarray] = {}
        for rec in records:
            w = np.asarray(rec["omega"], dtype=float)
            self._table[omega_key(w)] = np.asarray(rec["eigenvalues"], dtype=float)
            if n_boundary is None:
                n_boundary = w.size
            if K is None:
                K = len(rec["eigenvalues"])
        self.K = int(K or 0)
        self.n_boundary = int(n_boundary or 0)

    @classmethod
    def from_file(cls, path, K=None, n_boundary=None) -> "ReplayOracle":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh), K=K, n_boundary=n_boundary)

    def _query(self, omega):
        key = omega_key(omega)
        try:
            return self._table[key]
        except KeyError:
            raise MissingQueryError(f"replay file has no record for omega {key}", key) from None


def save_records(path, records) -> None:
    Path(path).write_text(json.dumps(records), encoding="utf-8")
