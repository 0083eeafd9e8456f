"""Charge divisors and closed-form multi-vertex correlator evaluation.

A divisor assigns a holomorphic/antiholomorphic charge pair (sigma_j,
sigma_j*) to finitely many interior nodes plus a root charge pair (tau,
tau*) at the marked interior point.  The correlator of the corresponding
rooted vertex field in a chart w is the product

    (w_q')^{h_q} (conj w_q')^{h_q*} prod_j M_j prod_{j<k} I_jk,

    M_j  = (w_j')^{h_j}(conj w_j')^{h_j*} w_j^{nu_j} conj(w_j)^{nu_j*}
           (1-|w_j|^2)^{sigma_j sigma_j*},
    I_jk = (w_j-w_k)^{s_j s_k}(conj w_j-conj w_k)^{s_j* s_k*}
           (1-w_j conj w_k)^{s_j s_k*}(1-conj w_j w_k)^{s_j* s_k},

with nu_j = (b+tau) sigma_j, nu_j* = (b+tau*) sigma_j*, h_q = tau^2/2.
The one-leg-inserted ("hatted") version multiplies by

    (w_q')^{-tau a/2}(conj w_q')^{-tau* a/2}
    prod_j (1-w_j)^{a sigma_j} w_j^{-a sigma_j/2}
           (1-conj w_j)^{a sigma_j*} conj(w_j)^{-a sigma_j*/2}.

All fractional powers are taken of branch-tracked logarithms, so results
are continuous along Loewner flows.  The evaluator works for complex
charges too (needed for the alpha-parametrized non-chiral fields); the
Divisor type itself keeps real charges.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from math import exp as math_exp

import numpy as np

from .conformal import BranchedValue
from .params import SleCftParams

__all__ = [
    "Divisor",
    "CorrelatorValue",
    "CorrelatorChart",
    "identity_chart",
    "chart_from_tracker",
    "is_neutral",
    "star",
    "eval_rooted",
    "eval_hatted",
    "eval_formal",
    "eval_along_path",
    "one_leg_divisor",
    "parse_divisor",
    "format_divisor",
    "nonchiral_one_point",
    "nonchiral_two_point",
    "hatted_nonchiral_one_point",
    "hatted_bivertex",
]

NEUTRALITY_TOL = 1e-12


@dataclass(frozen=True)
class Divisor:
    """Charge assignment: nodes [(z_j, sigma_j, sigma_j*)] and root (tau, tau*)."""

    nodes: tuple
    tau: float = 0.0
    tau_star: float = 0.0

    def __post_init__(self):
        zs = [complex(n[0]) for n in self.nodes]
        if any(z == 0 for z in zs):
            raise ValueError("divisor nodes must avoid the marked interior point 0")
        if len(set(zs)) != len(zs):
            raise ValueError("divisor node locations must be pairwise distinct")

    @property
    def charge_sum(self) -> complex:
        s = sum(n[1] + n[2] for n in self.nodes)
        return s + self.tau + self.tau_star

    @property
    def points(self):
        return [complex(n[0]) for n in self.nodes]


@dataclass
class CorrelatorValue:
    value: BranchedValue
    formal: bool = False   # set when the divisor violates neutrality

    @property
    def complex_value(self) -> complex:
        return self.value.value


def is_neutral(d: Divisor) -> bool:
    return abs(d.charge_sum) <= NEUTRALITY_TOL


def star(d1: Divisor, d2: Divisor) -> Divisor:
    """Normalized tensor product: charges add at shared nodes, roots add."""
    merged: dict[complex, list] = {}
    for z, s, ss in list(d1.nodes) + list(d2.nodes):
        z = complex(z)
        if z in merged:
            merged[z][0] += s
            merged[z][1] += ss
        else:
            merged[z] = [s, ss]
    nodes = tuple((z, s, ss) for z, (s, ss) in merged.items())
    return Divisor(nodes=nodes, tau=d1.tau + d2.tau, tau_star=d1.tau_star + d2.tau_star)


def one_leg_divisor(z: complex, p: SleCftParams) -> Divisor:
    """The one-leg charge pattern (a, 0; -a/2, -a/2) at node z."""
    return Divisor(nodes=((complex(z), p.a, 0.0),), tau=-p.a / 2.0, tau_star=-p.a / 2.0)


# ---------------------------------------------------------------------------
# Chart data
# ---------------------------------------------------------------------------

@dataclass
class CorrelatorChart:
    """Branch-continuous chart logarithms at the divisor's nodes.

    Per node j (arrays broadcast elementwise, so entries may be numpy
    arrays over Monte-Carlo lanes):
      lw[j]    = log w_j,       l1mw[j] = log(1 - w_j),
      lwp[j]   = log w_j',      labs[j] = log(1 - |w_j|^2)  (real),
    plus lq = log w_q' (= t - i theta along a flow) and pair logs
      ldiff[(j,k)]  = log(w_j - w_k),
      lcross[(j,k)] = log(1 - w_j conj(w_k))        for j < k.
    """

    lw: list
    lwp: list
    l1mw: list
    labs: list
    lq: complex = 0.0
    ldiff: dict = field(default_factory=dict)
    lcross: dict = field(default_factory=dict)


def identity_chart(points) -> CorrelatorChart:
    """Chart of the identity map at t=0: w = id, w' = 1, principal branches."""
    pts = [complex(z) for z in points]
    ch = CorrelatorChart(
        lw=[cmath.log(z) for z in pts],
        lwp=[0.0 + 0.0j for _ in pts],
        l1mw=[cmath.log(1.0 - z) for z in pts],
        labs=[cmath.log(1.0 - abs(z) ** 2).real for z in pts],
        lq=0.0 + 0.0j,
    )
    for j in range(len(pts)):
        for k in range(j + 1, len(pts)):
            ch.ldiff[(j, k)] = cmath.log(pts[j] - pts[k])
            ch.lcross[(j, k)] = cmath.log(1.0 - pts[j] * pts[k].conjugate())
    return ch


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _log_correlator(d: Divisor, p: SleCftParams, chart: CorrelatorChart, hatted: bool):
    """Complex log of the correlator; works for scalar or array chart data."""
    b, a = p.b, p.a
    tau, tau_s = d.tau, d.tau_star
    total = 0.0 + 0.0j
    # root factor
    h_q = tau * tau / 2.0
    h_qs = tau_s * tau_s / 2.0
    if hatted:
        h_q -= tau * a / 2.0
        h_qs -= tau_s * a / 2.0
    total = total + h_q * chart.lq + h_qs * np.conj(chart.lq)
    for j, (_, s, ss) in enumerate(d.nodes):
        h = s * s / 2.0 - b * s
        hs = ss * ss / 2.0 - b * ss
        nu = (b + tau) * s
        nus = (b + tau_s) * ss
        if hatted:
            nu = (b - a / 2.0 + tau) * s
            nus = (b - a / 2.0 + tau_s) * ss
        total = total + h * chart.lwp[j] + hs * np.conj(chart.lwp[j])
        total = total + nu * chart.lw[j] + nus * np.conj(chart.lw[j])
        total = total + (s * ss) * chart.labs[j]
        if hatted:
            total = total + (a * s) * chart.l1mw[j] + (a * ss) * np.conj(chart.l1mw[j])
    for (j, k), ld in chart.ldiff.items():
        sj, sjs = d.nodes[j][1], d.nodes[j][2]
        sk, sks = d.nodes[k][1], d.nodes[k][2]
        lc = chart.lcross[(j, k)]
        total = total + (sj * sk) * ld + (sjs * sks) * np.conj(ld)
        total = total + (sj * sks) * lc + (sjs * sk) * np.conj(lc)
    return total


def _as_value(logtot, formal: bool) -> CorrelatorValue:
    if np.ndim(logtot) != 0:
        raise TypeError("array-valued charts go through log_correlator_array")
    lt = complex(logtot)
    return CorrelatorValue(BranchedValue(lt.real, lt.imag), formal=formal)


def eval_rooted(d: Divisor, p: SleCftParams, chart: CorrelatorChart) -> CorrelatorValue:
    """Correlator of the rooted multi-vertex field (no one-leg insertion)."""
    if not is_neutral(d):
        raise ValueError("divisor violates the neutrality condition; use eval_formal")
    _check_chart(d, chart)
    return _as_value(_log_correlator(d, p, chart, hatted=False), formal=False)


def eval_hatted(d: Divisor, p: SleCftParams, chart: CorrelatorChart) -> CorrelatorValue:
    """Correlator under the one-leg insertion (the hatted field)."""
    if not is_neutral(d):
        raise ValueError("divisor violates the neutrality condition; use eval_formal")
    _check_chart(d, chart)
    return _as_value(_log_correlator(d, p, chart, hatted=True), formal=False)


def eval_formal(d: Divisor, p: SleCftParams, chart: CorrelatorChart,
                hatted: bool = True) -> CorrelatorValue:
    """Evaluate the closed-form product regardless of neutrality.

    Non-neutral divisors give a well-defined product of powers that is *not*
    a martingale-observable; the result is flagged formal.
    """
    _check_chart(d, chart)
    return _as_value(_log_correlator(d, p, chart, hatted=hatted), formal=not is_neutral(d))


def log_correlator_array(d: Divisor, p: SleCftParams, chart: CorrelatorChart,
                         hatted: bool = True) -> np.ndarray:
    """Vectorized complex log of the correlator for array-valued charts."""
    return np.asarray(_log_correlator(d, p, chart, hatted=hatted))


def _check_chart(d: Divisor, chart: CorrelatorChart) -> None:
    n = len(d.nodes)
    if len(chart.lw) != n or len(chart.lwp) != n:
        raise ValueError("chart does not match the divisor's node count")


def chart_from_tracker(tracker) -> CorrelatorChart:
    """Branch-continuous chart data from a single-path tracker whose interior
    nodes are the divisor's nodes (in order)."""
    ens = tracker.ens
    n = len(ens.nodes)
    ch = CorrelatorChart(
        lw=[complex(st.lw[0]) for st in ens.nodes],
        lwp=[complex(st.lwp[0]) for st in ens.nodes],
        l1mw=[complex(st.l1mw[0]) for st in ens.nodes],
        labs=[float(np.log(max(1.0 - abs(st.y[0]) ** 2, 1e-300))) for st in ens.nodes],
        lq=complex(ens.wq_log[0]),
    )
    for key, v in ens.ldiff.items():
        ch.ldiff[key] = complex(v[0])
    for key, v in ens.lcross.items():
        ch.lcross[key] = complex(v[0])
    return ch


def eval_along_path(d: Divisor, p: SleCftParams, tracker, sample_every: int = 1,
                    hatted: bool = True):
    """Evaluate the correlator along a tracker's flow.

    The tracker must have been built with the divisor's nodes as interior
    points (pair_nodes=True for multi-node divisors).  Returns (times,
    values, tau): sampled times, complex values (branch-continued from the
    principal choice at t=0, never re-principalized), and the first node
    swallowing time (inf if none); the series truncates there.
    """
    if len(tracker.ens.nodes) != len(d.nodes):
        raise ValueError("tracker does not carry the divisor's nodes")
    if len(d.nodes) > 1 and not tracker.ens.ldiff:
        raise ValueError("multi-node divisors need a pair-tracking tracker")
    evaluate = eval_hatted if hatted else eval_rooted
    if not is_neutral(d):
        def evaluate(dd, pp, ch):  # noqa: E306 - formal fallback
            return eval_formal(dd, pp, ch, hatted=hatted)
    times = [tracker.t]
    values = [evaluate(d, p, chart_from_tracker(tracker)).complex_value]
    tau = math.inf
    k = 0
    while tracker.has_steps():
        tracker.step()
        k += 1
        if not all(tracker.alive(j) for j in range(len(d.nodes))):
            tau = min(tracker.tau(j) for j in range(len(d.nodes)))
            break
        if k % sample_every == 0:
            times.append(tracker.t)
            values.append(evaluate(d, p, chart_from_tracker(tracker)).complex_value)
    return np.array(times), np.array(values), tau


# ---------------------------------------------------------------------------
# Explicit alpha-charge formulas (complex charges sigma = -i alpha)
# ---------------------------------------------------------------------------

def nonchiral_one_point(z: complex, alpha: float, p: SleCftParams) -> complex:
    """E V^alpha(z) = (1-|z|^2)^(alpha^2) (conj z/z)^(i alpha b) in the disk chart."""
    z = complex(z)
    return (1.0 - abs(z) ** 2) ** (alpha**2) * cmath.exp(
        1j * alpha * p.b * (cmath.log(z.conjugate()) - cmath.log(z))
    )


def nonchiral_two_point(z1: complex, z2: complex, alpha: float, p: SleCftParams) -> complex:
    """Two-point function of the non-chiral vertex field, disk chart."""
    z1, z2 = complex(z1), complex(z2)
    mod = ((1 - abs(z1) ** 2) * (1 - abs(z2) ** 2)) ** (alpha**2)
    mod *= abs((1 - z1 * z2.conjugate()) / (z1 - z2)) ** (2 * alpha**2)
    spin = cmath.exp(1j * alpha * p.b * (
        cmath.log(z1.conjugate()) - cmath.log(z1)
        + cmath.log(z2.conjugate()) - cmath.log(z2)))
    return mod * spin


def hatted_nonchiral_one_point(z: complex, alpha: float, p: SleCftParams) -> complex:
    """E V-hat^alpha(z) = (1-|z|^2)^(alpha^2)
    exp(2 alpha a arg(1-z) + alpha(-a+2b) arg z)."""
    z = complex(z)
    return (1.0 - abs(z) ** 2) ** (alpha**2) * math_exp(
        2 * alpha * p.a * cmath.phase(1 - z) + alpha * (-p.a + 2 * p.b) * cmath.phase(z)
    )


def hatted_bivertex(z: complex, z0: complex, alpha: float, p: SleCftParams) -> complex:
    """E V-hat^alpha(z, z0) = (z-z0)^(alpha^2) (1-z)^(-i alpha a)(1-z0)^(i alpha a)
    z^(i alpha(a/2-b)) z0^(-i alpha(a/2-b)), principal branches."""
    z, z0 = complex(z), complex(z0)
    a, b = p.a, p.b
    return cmath.exp(
        alpha**2 * cmath.log(z - z0)
        - 1j * alpha * a * cmath.log(1 - z)
        + 1j * alpha * a * cmath.log(1 - z0)
        + 1j * alpha * (a / 2 - b) * cmath.log(z)
        - 1j * alpha * (a / 2 - b) * cmath.log(z0)
    )


# ---------------------------------------------------------------------------
# Divisor literal format:  "node re,im sigma sigma_star" lines + "root tau tau_star"
# ---------------------------------------------------------------------------

def parse_divisor(text: str) -> Divisor:
    nodes = []
    tau = tau_star = 0.0
    seen_root = False
    for raw in text.strip().splitlines():
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "node":
            if len(parts) != 4:
                raise ValueError(f"bad node line: {raw!r}")
            re_s, im_s = parts[1].split(",")
            nodes.append((complex(float(re_s), float(im_s)), float(parts[2]), float(parts[3])))
        elif parts[0] == "root":
            if len(parts) != 3 or seen_root:
                raise ValueError(f"bad root line: {raw!r}")
            tau, tau_star = float(parts[1]), float(parts[2])
            seen_root = True
        else:
            raise ValueError(f"unknown divisor directive: {parts[0]!r}")
    return Divisor(nodes=tuple(nodes), tau=tau, tau_star=tau_star)


def format_divisor(d: Divisor) -> str:
    lines = [f"node {z.real:.17g},{z.imag:.17g} {s:.17g} {ss:.17g}"
             for z, s, ss in d.nodes]
    lines.append(f"root {d.tau:.17g} {d.tau_star:.17g}")
    return "\n".join(lines)
