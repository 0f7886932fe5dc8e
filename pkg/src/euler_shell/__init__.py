"""Steady compressible Euler flow in a spherical shell: radial backgrounds,
linearized stability operators and fixed-point solvers for perturbed subsonic
flow and for transonic shocks."""

__version__ = "0.1.0"

__all__ = ["gas_core", "background", "coeffs", "sphere", "transport", "spectral_elliptic",
           "subsonic_stability", "transonic_stability", "cli"]
