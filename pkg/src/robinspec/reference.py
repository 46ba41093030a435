"""Forward-side ground truth for validating the inversion pipeline.

These helpers read eigenvectors directly and are therefore *not* part of
the data model; they exist to produce the traces an inversion run should
reproduce.
"""

from __future__ import annotations

import numpy as np

from .geometry import SigmaPatch
from .spectral import Cluster, EigenSystem, ForwardModel, cluster_eigenvalues


def perturbation_matrix(eigsys: EigenSystem, cluster: Cluster, eta) -> np.ndarray:
    """``W[a, b] = -int eta phi_a phi_b dS`` over the cluster's eigenvectors."""
    bm = eigsys.op.bmesh
    V = eigsys.vectors[bm.nodes, cluster.first - 1:cluster.last]
    return -(V * (np.asarray(eta) * bm.weights)[:, None]).T @ V


def eta_adapted_vectors(eigsys: EigenSystem, cluster: Cluster, eta):
    """Eigenspace basis diagonalizing the first-order splitting along ``eta``.

    Returns ``(vectors, first_order_slopes)``, both ordered so that column
    ``i`` continues the ``i``-th lowest member of the split cluster for small
    positive steps along ``eta``.
    """
    W = perturbation_matrix(eigsys, cluster, eta)
    slopes, R = np.linalg.eigh(W)
    V = eigsys.vectors[:, cluster.first - 1:cluster.last] @ R
    return V, slopes


def reference_data(model: ForwardModel, omega0, sigma: SigmaPatch, K: int, eta=None,
                   guard: int = 2, gap_tol=None):
    """Eigenvalues and patch traces ``(values[K], traces[K, |sigma|])``.

    Members of multiple eigenvalues are replaced by the ``eta``-adapted basis
    (required whenever a cluster is present).
    """
    es = model.eigensystem(omega0, K + guard)
    vecs = es.vectors.copy()
    for cl in cluster_eigenvalues(es.values, gap_tol):
        if cl.first > K or cl.multiplicity == 1:
            continue
        if eta is None:
            raise ValueError("a multiple eigenvalue needs a splitting direction eta")
        V, _ = eta_adapted_vectors(es, cl, eta)
        vecs[:, cl.first - 1:cl.last] = V
    traces = vecs[sigma.nodes, :K].T.copy()
    return es.values[:K].copy(), traces
