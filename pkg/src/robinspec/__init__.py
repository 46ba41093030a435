"""Local spectral data for Robin-Schroedinger operators: forward solves,
impedance perturbation calculus and recovery of boundary spectral data."""

__version__ = "0.1.0"
