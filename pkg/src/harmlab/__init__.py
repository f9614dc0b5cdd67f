"""Numerical laboratory for harmonic maps of linear growth on model manifolds."""
