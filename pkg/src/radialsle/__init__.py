"""Numerical laboratory for radial SLE martingale observables.

Simulates the radial Loewner equation, evaluates the closed-form vertex
correlators under the one-leg insertion, and verifies martingale, null
equation, exponent, and restriction identities deterministically and by
Monte Carlo.
"""

from .params import SleCftParams, DimensionSet, params_from_kappa, vertex_dimensions

__all__ = [
    "SleCftParams",
    "DimensionSet",
    "params_from_kappa",
    "vertex_dimensions",
]

__version__ = "0.1.0"
