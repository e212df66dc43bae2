"""Finite-difference ensembles for quasilinear parabolic SPDEs with conservative noise."""

__version__ = "0.1.0"
