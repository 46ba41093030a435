#!/usr/bin/env python3
"""
Forward problem: Neumann and Robin spectra of an interval and the unit square.
"""

import numpy as np

from robinspec.geometry import Interval, Rectangle, build_mesh
from robinspec.spectral import ForwardModel, cluster_eigenvalues


# Neumann interval: lambda_k = ((k-1) pi)^2
mesh, bmesh = build_mesh(Interval(1.0, 2001))
line = ForwardModel(mesh, bmesh)
vals = line.eigenvalues(np.zeros(2), 6)
print("interval, omega = 0")
for k, v in enumerate(vals, start=1):
    print(f"  lambda_{k} = {v:12.6f}   exact {((k - 1) * np.pi) ** 2:12.6f}")

# A positive impedance at x=0 pulls lambda_1 below zero, roughly by -h
for h in (0.01, 0.1, 1.0):
    print(f"  omega(0) = {h:5.2f}: lambda_1 = {line.eigenvalues(np.array([h, 0.0]), 1)[0]: .6f}")

# The square has a double eigenvalue at pi^2
mesh, bmesh = build_mesh(Rectangle(1.0, 1.0, 101, 101))
square = ForwardModel(mesh, bmesh)
vals = square.eigenvalues(np.zeros(bmesh.size), 10)
print("\nunit square, omega = 0 (in units of pi^2)")
for c in cluster_eigenvalues(vals):
    print(f"  lambda_{c.first}..{c.last}: {c.center / np.pi**2:8.5f}  multiplicity {c.multiplicity}")
