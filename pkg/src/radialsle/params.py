"""Coupling-constant numerology for the radial SLE / CFT dictionary.

Everything downstream consumes one immutable parameter record built from
kappa.  The two basic charges are

    a = sqrt(2/kappa),        b = sqrt(kappa/8) - sqrt(2/kappa) = a*(kappa/4 - 1),

which satisfy 2a(a+b) = 1.  Derived quantities: central charge
c = 1 - 12 b^2, the weight h12 = a^2/2 - a*b = (6-kappa)/(2*kappa) and
h0half = a^2/8 - b^2/2 = (6-kappa)(kappa-2)/(16*kappa).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["SleCftParams", "DimensionSet", "params_from_kappa", "vertex_dimensions"]


@dataclass(frozen=True)
class SleCftParams:
    """kappa and the derived CFT constants.  Immutable, thread-safe."""

    kappa: float
    a: float
    b: float
    c: float
    h12: float
    h0half: float


@dataclass(frozen=True)
class DimensionSet:
    """Conformal dimensions of a charge pattern (sigma, sigma*; tau, tau*).

    h, h_star      : weights at the node,
    h_q, h_q_star  : weights at the marked interior point (plain rooting),
    h_q_hat, ...   : weights at the marked point after the one-leg insertion,
    H_q_eff        : effective dimension h_q + h_q_star - b^2.
    """

    h: float
    h_star: float
    h_q: float
    h_q_star: float
    h_q_hat: float
    h_q_star_hat: float
    H_q_eff: float


def params_from_kappa(kappa: float) -> SleCftParams:
    """Build the parameter record for a given kappa > 0.

    Raises ValueError for non-positive or non-finite kappa.  kappa > 8 is
    permitted by the formulas, but the simulator is only exercised in the
    non-space-filling regimes kappa <= 8.
    """
    kappa = float(kappa)
    if not math.isfinite(kappa) or kappa <= 0.0:
        raise ValueError(f"kappa must be a positive finite real, got {kappa!r}")
    a = math.sqrt(2.0 / kappa)
    b = math.sqrt(kappa / 8.0) - a
    c = 1.0 - 12.0 * b * b
    h12 = (6.0 - kappa) / (2.0 * kappa)
    h0half = (6.0 - kappa) * (kappa - 2.0) / (16.0 * kappa)
    return SleCftParams(kappa=kappa, a=a, b=b, c=c, h12=h12, h0half=h0half)


def vertex_dimensions(
    sigma: float, sigma_star: float, tau: float, tau_star: float, p: SleCftParams
) -> DimensionSet:
    """Dimensions of the rooted charge pattern (sigma, sigma*; tau, tau*)."""
    h = sigma * sigma / 2.0 - sigma * p.b
    h_star = sigma_star * sigma_star / 2.0 - sigma_star * p.b
    h_q = tau * tau / 2.0
    h_q_star = tau_star * tau_star / 2.0
    h_q_hat = tau * tau / 2.0 - tau * p.a / 2.0
    h_q_star_hat = tau_star * tau_star / 2.0 - tau_star * p.a / 2.0
    return DimensionSet(
        h=h,
        h_star=h_star,
        h_q=h_q,
        h_q_star=h_q_star,
        h_q_hat=h_q_hat,
        h_q_star_hat=h_q_star_hat,
        H_q_eff=h_q + h_q_star - p.b * p.b,
    )
