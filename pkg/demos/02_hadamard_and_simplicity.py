#!/usr/bin/env python3
"""
Eigenvalue derivatives from eigenvalues alone, and splitting a double eigenvalue
with a small impedance perturbation supported on the bottom edge.
"""

import numpy as np

from robinspec.fields import bump_basis
from robinspec.geometry import Rectangle, build_mesh, make_sigma
from robinspec.oracle import ForwardOracle
from robinspec.perturbation import hadamard_check, simplify_spectrum
from robinspec.spectral import ForwardModel, cluster_eigenvalues


mesh, bmesh = build_mesh(Rectangle(1.0, 1.0, 61, 61))
model = ForwardModel(mesh, bmesh)
sigma = make_sigma(model.bmesh, 0.0, 1.0)
w0 = np.zeros(bmesh.size)

# finite differences of lambda_k versus  -int |phi_k|^2 w dS
oracle = ForwardOracle(model, 10)
es = model.eigensystem(w0, 10)
rep = hadamard_check(es, oracle, bump_basis(sigma, 3, "smooth").fields, h=1e-2, ks=range(1, 9))
print(f"{len(rep.checked)} entries compared, max relative mismatch {rep.max_rel_error:.2e}")
print("entries at multiple eigenvalues:", sorted({e["k"] for e in rep.entries if e["status"] == "multiple"}))

# the pi^2 pair cannot be differentiated; perturb it apart
res = simplify_spectrum(oracle, w0, sigma, k_max=6, eps=0.1, seed=7)
print(f"\nsimplified with {res.n_trials} trial(s), sup|omega - omega0| = {np.abs(res.omega - w0).max():.4f}")
print("gaps:", np.array2string(np.diff(res.eigenvalues[:7]), precision=5))
print("all simple:", all(c.multiplicity == 1 for c in cluster_eigenvalues(res.eigenvalues[:6])))
