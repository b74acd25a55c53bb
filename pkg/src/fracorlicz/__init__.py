"""Fractional Orlicz-Sobolev toolkit: Luxemburg norms, Gagliardo modulars,
the discrete fractional a-Laplacian and a direct-method solver."""

__version__ = "0.1.0"
