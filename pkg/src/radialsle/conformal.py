"""Closed-form conformal utilities on the unit disk.

Contains the branch-tracked complex value type, the disk Green's function,
pre-Schwarzian/Schwarzian derivatives, and the analytic radial-slit map
built from the disk Koebe-type map k(z) = 4z/(1+z)^2, which sends the unit
disk onto the plane cut along [1, oo).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BranchedValue",
    "green",
    "green_complex",
    "pre_schwarzian",
    "schwarzian",
    "SlitMap",
    "slit_map",
    "koebe_disk",
    "koebe_disk_inverse",
]


@dataclass
class BranchedValue:
    """A complex value carried as (log-modulus, unwrapped argument).

    Multiplication adds the fields, a real power scales both fields.  The
    argument is never reduced mod 2*pi, which is what makes products of
    fractional powers single-valued along a continuous path.
    """

    log_mod: float
    arg: float

    @classmethod
    def from_complex(cls, z: complex) -> "BranchedValue":
        z = complex(z)
        if z == 0:
            raise ValueError("BranchedValue of zero is undefined")
        return cls(math.log(abs(z)), cmath.phase(z))

    @classmethod
    def one(cls) -> "BranchedValue":
        return cls(0.0, 0.0)

    @property
    def value(self) -> complex:
        return cmath.exp(complex(self.log_mod, self.arg))

    def __mul__(self, other: "BranchedValue") -> "BranchedValue":
        return BranchedValue(self.log_mod + other.log_mod, self.arg + other.arg)

    def __truediv__(self, other: "BranchedValue") -> "BranchedValue":
        return BranchedValue(self.log_mod - other.log_mod, self.arg - other.arg)

    def __pow__(self, p: float) -> "BranchedValue":
        p = float(p)
        return BranchedValue(p * self.log_mod, p * self.arg)

    def conj(self) -> "BranchedValue":
        return BranchedValue(self.log_mod, -self.arg)


def green(w1: complex, w2: complex) -> float:
    """Green's function of the unit disk, G(w1,w2) = log|1-w1 conj(w2)| - log|w1-w2|."""
    w1, w2 = complex(w1), complex(w2)
    if w1 == w2:
        raise ValueError("Green's function is singular on the diagonal")
    return math.log(abs(1.0 - w1 * w2.conjugate())) - math.log(abs(w1 - w2))


def green_complex(w1: complex, w2: complex) -> complex:
    """Complex Green's function G+ = (1/2) log[(1 - w1 conj(w2))/(w1 - w2)].

    Principal branch; the caller is responsible for continuing the imaginary
    part along paths (its increments are what is single-valued).
    """
    w1, w2 = complex(w1), complex(w2)
    if w1 == w2:
        raise ValueError("complex Green's function is singular on the diagonal")
    return 0.5 * cmath.log((1.0 - w1 * w2.conjugate()) / (w1 - w2))


def pre_schwarzian(fp: complex, fpp: complex) -> complex:
    """N_f = f''/f' from derivative samples at a point."""
    if fp == 0:
        raise ValueError("degenerate map: f' = 0")
    return fpp / fp


def schwarzian(fp: complex, fpp: complex, fppp: complex) -> complex:
    """S_f = f'''/f' - (3/2)(f''/f')^2 from derivative samples at a point."""
    if fp == 0:
        raise ValueError("degenerate map: f' = 0")
    n = fpp / fp
    return fppp / fp - 1.5 * n * n


# ---------------------------------------------------------------------------
# Radial slit map
# ---------------------------------------------------------------------------

def koebe_disk(z):
    """k(z) = 4z/(1+z)^2: conformal from the unit disk onto C \\ [1, oo)."""
    return 4.0 * z / (1.0 + z) ** 2


def koebe_disk_deriv(z):
    return 4.0 * (1.0 - z) / (1.0 + z) ** 3


def koebe_disk_inverse(w):
    """Inverse of k, branch fixing 0, single-valued on C \\ [1, oo).

    k_inv(w) = (2 - w - 2 sqrt(1-w)) / w = (1 - sqrt(1-w))^2 / w with the
    principal square root; the squared form is cancellation-free.
    Continuous at w = 0 with k_inv(0) = 0, k_inv'(0) = 1/4.
    """
    w = np.asarray(w, dtype=complex)
    t = 1.0 - np.sqrt(1.0 - w)
    zero = w == 0
    out = t * t / np.where(zero, 1.0, w)
    out = np.where(zero, 0.0, out)
    return out[()] if out.ndim == 0 else out


def koebe_disk_inverse_deriv(w):
    w = np.asarray(w, dtype=complex)
    s = np.sqrt(1.0 - w)
    small = np.abs(w) < 1e-8
    safe = np.where(small, 1.0, w)
    out = ((1.0 / s - 1.0) * w - (2.0 - w - 2.0 * s)) / safe**2
    out = np.where(small, 0.25 + w / 4.0, out)
    return out[()] if out.ndim == 0 else out


@dataclass
class SlitMap:
    """Conformal map psi: (D \\ [r e^{i theta0}, e^{i theta0}], 0) -> (D, 0).

    Built as psi(z) = e^{i theta0} k_inv(k(e^{-i theta0} z)/k(r)) with
    psi(0) = 0 and psi'(0) = (1+r)^2/(4r) > 1.
    """

    r: float
    theta0: float

    def __post_init__(self):
        if not (0.0 < self.r < 1.0):
            raise ValueError(f"slit inner radius must lie in (0,1), got {self.r}")
        self.kr = float(koebe_disk(self.r).real)
        self.d0 = (1.0 + self.r) ** 2 / (4.0 * self.r)  # psi'(0), real > 1

    def __call__(self, z):
        u = np.exp(-1j * self.theta0) * np.asarray(z, dtype=complex)
        return np.exp(1j * self.theta0) * koebe_disk_inverse(koebe_disk(u) / self.kr)

    def deriv(self, z):
        """psi'(z) by the chain rule; valid off the slit and away from the
        antipode -e^{i theta0} of the slit base (pole of k)."""
        u = np.exp(-1j * self.theta0) * np.asarray(z, dtype=complex)
        w = koebe_disk(u) / self.kr
        return koebe_disk_inverse_deriv(w) * koebe_disk_deriv(u) / self.kr

    def abs_deriv_boundary(self, phi: float) -> float:
        """|psi'(e^{i phi})| at a boundary point, in closed form.

        With m = sqrt(k(r)) = 2 sqrt(r)/(1+r), the boundary correspondence is
        cos(Phi/2) = m cos((phi-theta0)/2), hence
        |psi'| = m |sin((phi-theta0)/2)| / sqrt(1 - m^2 cos^2((phi-theta0)/2)).
        This is the chain rule carried out analytically; it stays finite at
        the antipode where the raw composition through k degenerates.
        """
        d = phi - self.theta0
        m = 2.0 * math.sqrt(self.r) / (1.0 + self.r)
        c = math.cos(d / 2.0)
        s = abs(math.sin(d / 2.0))
        denom = math.sqrt(max(1.0 - m * m * c * c, 0.0))
        if denom == 0.0:
            raise ValueError("boundary derivative is singular at the slit base")
        return m * s / denom

    def restriction_probability(self, lam: float, mu: float) -> float:
        """|psi'(1)|^lam * psi'(0)^mu, the closed-form avoidance probability."""
        return self.abs_deriv_boundary(0.0) ** lam * self.d0**mu


def slit_map(r: float, theta0: float) -> SlitMap:
    """Analytic map record removing the radial slit [r e^{i theta0}, e^{i theta0}]."""
    return SlitMap(r=float(r), theta0=float(theta0))
