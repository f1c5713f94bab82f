"""Quadratic obstructions to small-time controllability of bilinear Schrodinger
equations: spectral Galerkin simulation, bracket coefficients, drift scans,
dipole design and a finite-dimensional toy model."""

__version__ = "0.1.0"
