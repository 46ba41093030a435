#!/usr/bin/env python3
"""
Boundary spectral data from local spectral data on the square benchmark.

The inversion only ever calls the eigenvalue oracle; the forward solver is
consulted afterwards to score the result.  Takes about a minute.
"""

import numpy as np

from robinspec.fields import volume_field
from robinspec.geometry import Rectangle, build_mesh, make_sigma
from robinspec.inversion import assemble_bsd, compare_bsd, default_eta
from robinspec.oracle import ForwardOracle
from robinspec.reference import reference_data
from robinspec.spectral import ForwardModel


mesh, bmesh = build_mesh(Rectangle(1.0, 1.0, 101, 101))
q = volume_field({"kind": "gaussian_bump", "center": [0.5, 0.5], "width": 0.2, "height": 5.0}, mesh)
model = ForwardModel(mesh, bmesh, q)
w0 = np.full(bmesh.size, 0.3)
sigma = make_sigma(model.bmesh, 0.0, 1.0)

oracle = ForwardOracle(model, 14)
bsd = assemble_bsd(oracle, w0, 12, sigma)
print(f"{oracle.n_solves} eigenvalue queries")

values, traces = reference_data(model, w0, sigma, 12, default_eta(sigma))
scores = compare_bsd(bsd, values, traces)
for row, e in zip(scores["per_k"], bsd.entries):
    route = e.provenance["route"]
    print(f"  k={row['k']:2d}  lambda={e.eigenvalue:10.4f}  {route:7s}  trace err {row['trace_err']:.2e}")
print(f"max trace error {scores['max_trace_err']:.2e}")
