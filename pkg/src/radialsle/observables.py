"""Catalog of closed-form radial SLE martingale observables and the
deterministic functional-equation checks built on them.

The catalog covers the named one-point observables (Poisson-kernel ratio,
the kappa=6 swallowing observable, bosonic one-point functions and their
exponentials, chiral one- and two-point functions, constant and real vertex
fields, boundary derivative-exponent fields), the Virasoro one-point
function with its n-point recursion, the two residual operators of the
second-order null equations, the Hadamard variation pair, and the slit-map
hitting asymptotics used at kappa = 8/3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conformal import slit_map
from .params import DimensionSet, SleCftParams, vertex_dimensions

__all__ = [
    "lsw_poisson",
    "lsw6",
    "sle0_pair",
    "ss_phi_hat",
    "t_hat_1pt",
    "t_hat_1pt_d1",
    "t_hat_1pt_d2",
    "t_hat_npoint",
    "bpz_residual_boundary_scalar",
    "bpz_residual_virasoro",
    "boundary_deriv_observable",
    "fw_limit_check",
    "hadamard_pair",
    "chiral_m",
    "chiral_n",
    "ObservableSpec",
    "catalog",
    "Expr",
]


# ---------------------------------------------------------------------------
# Simple closed-form observables (scalar or numpy-array inputs)
# ---------------------------------------------------------------------------

def lsw_poisson(w):
    """Poisson-kernel ratio (1-|w|^2)/|1-w|^2; the kappa=2 scalar observable."""
    w = np.asarray(w, dtype=complex)
    d = np.abs(1.0 - w) ** 2
    if np.any(d == 0):
        raise ValueError("Poisson ratio is singular at w = 1")
    out = (1.0 - np.abs(w) ** 2) / d
    return out[()] if out.ndim == 0 else out


def lsw6(log_w, log_1mw, t):
    """e^{t/4} (1-w)^{1/3} w^{-1/6} from branch-continuous logarithms."""
    return np.exp(t / 4.0 + np.asarray(log_1mw) / 3.0 - np.asarray(log_w) / 6.0)


def ss_phi_hat(arg_w, arg_1mw, arg_wp_over_w, p: SleCftParams):
    """Bosonic one-point function 2a arg(1-w) - a arg w - 2b arg(w'/w)."""
    return (2.0 * p.a * np.asarray(arg_1mw)
            - p.a * np.asarray(arg_w)
            - 2.0 * p.b * np.asarray(arg_wp_over_w))


def sle0_pair(log_w, log_1mw, log_wp, schwarzian_w, w):
    """The two kappa=0 conserved quantities.

    first  = arg[(1-w) w^{-3/2} w'], from branch-continuous logs;
    second = S_w + (3/8)(w'/w)^2 (1 - 4w/(1-w)^2).
    """
    w = np.asarray(w, dtype=complex)
    first = np.imag(np.asarray(log_1mw) - 1.5 * np.asarray(log_w) + np.asarray(log_wp))
    ratio2 = np.exp(2.0 * (np.asarray(log_wp) - np.asarray(log_w)))
    second = np.asarray(schwarzian_w) + 0.375 * ratio2 * (1.0 - 4.0 * w / (1.0 - w) ** 2)
    return first, second


# ---------------------------------------------------------------------------
# Virasoro one-point function and its exact derivatives
# ---------------------------------------------------------------------------

def t_hat_1pt(z, p: SleCftParams):
    """h12/(z(1-z)^2) + h0half/z^2, the inserted Virasoro one-point function."""
    z = np.asarray(z, dtype=complex)
    if np.any(z == 0) or np.any(z == 1):
        raise ValueError("singular at z in {0, 1}")
    out = p.h12 / (z * (1.0 - z) ** 2) + p.h0half / z**2
    return out[()] if out.ndim == 0 else out


def t_hat_1pt_d1(z, p: SleCftParams):
    z = np.asarray(z, dtype=complex)
    om = 1.0 - z
    return p.h12 * (-1.0 / (z**2 * om**2) + 2.0 / (z * om**3)) - 2.0 * p.h0half / z**3


def t_hat_1pt_d2(z, p: SleCftParams):
    z = np.asarray(z, dtype=complex)
    om = 1.0 - z
    return (p.h12 * (2.0 / (z**3 * om**2) - 4.0 / (z**2 * om**3) + 6.0 / (z * om**4))
            + 6.0 * p.h0half / z**4)


# ---------------------------------------------------------------------------
# Rational expression trees for the n-point recursion
# ---------------------------------------------------------------------------

class Expr:
    """Immutable rational expression in variables v0, v1, ... with exact
    symbolic differentiation; used to carry the n-point recursion."""

    __slots__ = ()

    def __add__(self, other):
        return Add.of(self, _lift(other))

    def __radd__(self, other):
        return Add.of(_lift(other), self)

    def __mul__(self, other):
        return Mul.of(self, _lift(other))

    def __rmul__(self, other):
        return Mul.of(_lift(other), self)

    def __sub__(self, other):
        return Add.of(self, Mul.of(Const(-1.0), _lift(other)))

    def __pow__(self, n: int):
        return Pow.of(self, n)


def _lift(x):
    return x if isinstance(x, Expr) else Const(complex(x))


class Const(Expr):
    __slots__ = ("c",)

    def __init__(self, c):
        object.__setattr__(self, "c", complex(c))

    def __setattr__(self, *a):  # immutability guard
        raise AttributeError("Expr nodes are immutable")


class Var(Expr):
    __slots__ = ("j",)

    def __init__(self, j):
        object.__setattr__(self, "j", int(j))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")


class Add(Expr):
    __slots__ = ("terms",)

    def __init__(self, terms):
        object.__setattr__(self, "terms", tuple(terms))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    @staticmethod
    def of(*terms):
        flat, const = [], 0.0 + 0.0j
        for t in terms:
            if isinstance(t, Add):
                for s in t.terms:
                    if isinstance(s, Const):
                        const += s.c
                    else:
                        flat.append(s)
            elif isinstance(t, Const):
                const += t.c
            else:
                flat.append(t)
        if const != 0:
            flat.append(Const(const))
        if not flat:
            return Const(0.0)
        return flat[0] if len(flat) == 1 else Add(flat)


class Mul(Expr):
    __slots__ = ("factors",)

    def __init__(self, factors):
        object.__setattr__(self, "factors", tuple(factors))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    @staticmethod
    def of(*factors):
        flat, const = [], 1.0 + 0.0j
        for f in factors:
            if isinstance(f, Mul):
                for g in f.factors:
                    if isinstance(g, Const):
                        const *= g.c
                    else:
                        flat.append(g)
            elif isinstance(f, Const):
                const *= f.c
            else:
                flat.append(f)
        if const == 0:
            return Const(0.0)
        if const != 1:
            flat.insert(0, Const(const))
        if not flat:
            return Const(1.0)
        return flat[0] if len(flat) == 1 else Mul(flat)


class Pow(Expr):
    __slots__ = ("base", "n")

    def __init__(self, base, n):
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "n", int(n))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    @staticmethod
    def of(base, n):
        n = int(n)
        if n == 0:
            return Const(1.0)
        if n == 1:
            return base
        if isinstance(base, Const):
            return Const(base.c**n)
        if isinstance(base, Pow):
            return Pow(base.base, base.n * n)
        return Pow(base, n)


def ediff(e: Expr, j: int) -> Expr:
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0) if e.j == j else Const(0.0)
    if isinstance(e, Add):
        return Add.of(*[ediff(t, j) for t in e.terms])
    if isinstance(e, Mul):
        out = []
        fs = e.factors
        for i in range(len(fs)):
            d = ediff(fs[i], j)
            if isinstance(d, Const) and d.c == 0:
                continue
            out.append(Mul.of(*(list(fs[:i]) + [d] + list(fs[i + 1:]))))
        return Add.of(*out) if out else Const(0.0)
    if isinstance(e, Pow):
        d = ediff(e.base, j)
        if isinstance(d, Const) and d.c == 0:
            return Const(0.0)
        return Mul.of(Const(e.n), Pow.of(e.base, e.n - 1), d)
    raise TypeError(type(e))


def esubst(e: Expr, mapping: dict) -> Expr:
    """Rename variables: Var(j) -> Var(mapping[j])."""
    if isinstance(e, Const):
        return e
    if isinstance(e, Var):
        return Var(mapping[e.j])
    if isinstance(e, Add):
        return Add.of(*[esubst(t, mapping) for t in e.terms])
    if isinstance(e, Mul):
        return Mul.of(*[esubst(f, mapping) for f in e.factors])
    if isinstance(e, Pow):
        return Pow.of(esubst(e.base, mapping), e.n)
    raise TypeError(type(e))


def eeval(e: Expr, vals) -> complex:
    if isinstance(e, Const):
        return e.c
    if isinstance(e, Var):
        return complex(vals[e.j])
    if isinstance(e, Add):
        return sum(eeval(t, vals) for t in e.terms)
    if isinstance(e, Mul):
        out = 1.0 + 0.0j
        for f in e.factors:
            out *= eeval(f, vals)
        return out
    if isinstance(e, Pow):
        return eeval(e.base, vals) ** e.n
    raise TypeError(type(e))


_MAX_NPOINT = 4
_recursion_cache: dict[tuple, Expr] = {}


def _t_hat_expr(n: int, p: SleCftParams) -> Expr:
    """Expression for the n-point inserted Virasoro correlator R(v0,...,v_{n-1}).

    Built by the boundary recursion: adding the point v0 to the (n-1)-point
    function acts by the Loewner vector field plus the dimension counting
    term (a^2/4 - b^2), divided by 2 v0^2, plus the anomaly sum with
    coefficient c/2 over 4th-power poles.
    """
    if n > _MAX_NPOINT:
        raise ValueError(f"n-point recursion supported for n <= {_MAX_NPOINT}")
    key = (n, round(p.kappa, 14))
    if key in _recursion_cache:
        return _recursion_cache[key]
    if n == 0:
        expr = Const(1.0)
    else:
        lam = p.h12
        mu2 = p.a**2 / 4.0 - p.b**2
        prev = _t_hat_expr(n - 1, p)                       # vars 0..n-2
        prev_shift = esubst(prev, {i: i + 1 for i in range(n - 1)})  # vars 1..n-1
        z = Var(0)
        one_minus = Add.of(Const(1.0), Mul.of(Const(-1.0), z))
        inv_om = Pow.of(one_minus, -1)
        pref = Mul.of(Const(0.5), Pow.of(z, -2))
        m = n - 1  # number of existing points
        terms = [
            Mul.of(Const(2.0 * m), Add.of(Const(1.0), z), inv_om, prev_shift),
            Mul.of(Const(2.0 * lam), z, Pow.of(one_minus, -2), prev_shift),
            Mul.of(Const(mu2), prev_shift),
        ]
        for j in range(1, n):
            dj = ediff(prev_shift, j)
            zj = Var(j)
            terms.append(Mul.of(Add.of(Const(1.0), z), inv_om, zj, dj))
            dz = Add.of(z, Mul.of(Const(-1.0), zj))
            terms.append(Mul.of(zj, Add.of(z, zj), Pow.of(dz, -1), dj))
            quad = Add.of(Pow.of(z, 2), Mul.of(Const(2.0), z, zj),
                          Mul.of(Const(-1.0), Pow.of(zj, 2)))
            terms.append(Mul.of(Const(2.0), quad, Pow.of(dz, -2), prev_shift))
        expr_terms = [Mul.of(pref, Add.of(*terms))]
        if m >= 1:
            for j in range(1, n):
                others = [i for i in range(1, n) if i != j]
                if m - 1 == 0:
                    rzj = Const(1.0)
                else:
                    base = _t_hat_expr(m - 1, p)           # vars 0..m-2
                    rzj = esubst(base, {i: others[i] for i in range(m - 1)})
                dz = Add.of(z, Mul.of(Const(-1.0), Var(j)))
                expr_terms.append(Mul.of(Const(p.c / 2.0), Pow.of(dz, -4), rzj))
        expr = Add.of(*expr_terms)
    _recursion_cache[key] = expr
    return expr


def t_hat_npoint(zs, p: SleCftParams) -> complex:
    """n-point inserted Virasoro correlator via the exact recursion, n <= 4."""
    zs = [complex(z) for z in zs]
    if len(set(zs)) != len(zs):
        raise ValueError("points must be pairwise distinct")
    if any(z in (0, 1) for z in zs):
        raise ValueError("singular at 0 and 1")
    return eeval(_t_hat_expr(len(zs), p), zs)


# ---------------------------------------------------------------------------
# Null-equation residual operators
# ---------------------------------------------------------------------------

def bpz_residual_boundary_scalar(R, h: float, p: SleCftParams, theta: float,
                                 root_dim: float = 0.0, step: float = 1e-4) -> float:
    """Residual of the boundary null equation at driving angle theta.

    For a boundary field of weight h observed at the fixed point 1, with
    total root dimension `root_dim` (h_q_hat + h_q_star_hat; zero for fields
    with no charge at the marked point):

        (kappa/2) R'' + cot(theta/2) R' - (h/2) csc^2(theta/2) R + root_dim R.

    Derivatives are central finite differences of the supplied R: theta -> real.
    """
    th = float(theta)
    if math.isclose(th % (2 * math.pi), 0.0, abs_tol=1e-12):
        raise ValueError("operator is singular at theta = 0 mod 2 pi")
    r0 = R(th)
    rp = (R(th + step) - R(th - step)) / (2 * step)
    rpp = (R(th + step) - 2 * r0 + R(th - step)) / step**2
    s = math.sin(th / 2.0)
    return (p.kappa / 2.0 * rpp + rp / math.tan(th / 2.0)
            - h / (2.0 * s * s) * r0 + root_dim * r0)


def bpz_residual_virasoro(z: complex, p: SleCftParams) -> complex:
    """Residual of the interior null equation for the Virasoro one-point
    function, with exact analytic derivatives:

        (1/a^2)(z^2 R'' + 5 z R' + 4 R)
        - [ z(1+z)/(1-z) R' + 2(1+2z-z^2)/(1-z)^2 R + c/(1-z)^4 ].
    """
    z = complex(z)
    if z in (0, 1):
        raise ValueError("singular at z in {0, 1}")
    R = t_hat_1pt(z, p)
    R1 = t_hat_1pt_d1(z, p)
    R2 = t_hat_1pt_d2(z, p)
    lhs = (z * z * R2 + 5.0 * z * R1 + 4.0 * R) / p.a**2
    rhs = (z * (1.0 + z) / (1.0 - z) * R1
           + 2.0 * (1.0 + 2.0 * z - z * z) / (1.0 - z) ** 2 * R
           + p.c / (1.0 - z) ** 4)
    return lhs - rhs


# ---------------------------------------------------------------------------
# Boundary derivative exponents
# ---------------------------------------------------------------------------

@dataclass
class BoundaryDerivObservable:
    """e^{2 h_q_hat t} |w_t'|^h (sin^2(x_t/2))^{a sigma/2} on the unit circle."""

    h: float
    sigma: float
    h_q_hat: float
    p: SleCftParams

    def __call__(self, x, log_abs_wp, t):
        expo = (2.0 * self.h_q_hat * t + self.h * np.asarray(log_abs_wp)
                + (self.p.a * self.sigma) * np.log(np.abs(np.sin(np.asarray(x) / 2.0))))
        return np.exp(expo)


def boundary_deriv_observable(h: float, p: SleCftParams) -> BoundaryDerivObservable:
    """Solve sigma^2/2 - b sigma = h for the sigma_+ root and return the
    boundary observable with h_q_hat = sigma^2/8 + a sigma/4."""
    disc = (p.kappa - 4.0) ** 2 + 16.0 * p.kappa * h
    if disc < 0:
        raise ValueError("negative discriminant: weight h not admissible")
    sigma = p.a / 4.0 * (p.kappa - 4.0 + math.sqrt(disc))
    h_q_hat = sigma * sigma / 8.0 + p.a * sigma / 4.0
    return BoundaryDerivObservable(h=float(h), sigma=sigma, h_q_hat=h_q_hat, p=p)


# ---------------------------------------------------------------------------
# Slit-map hitting asymptotics (kappa = 8/3)
# ---------------------------------------------------------------------------

def fw_limit_check(theta: float, t: float, p: SleCftParams):
    """Short-slit hitting rate against the Virasoro one-point prediction.

    lhs = (1 - |psi'(1)|^{h12} psi'(0)^{mu}) / (2t) with the radial slit
    [r e^{i theta}, e^{i theta}], r = 1 - 2 sqrt(t); rhs = the n=1 value
    h12/(4 sin^2(theta/2)) - h0half.  Exponents mu = a^2/4 - b^2.
    """
    if not (0.0 < t < 0.25):
        raise ValueError("need 0 < t < 1/4 so the slit stays in the disk")
    if math.isclose(math.sin(theta / 2.0), 0.0, abs_tol=1e-12):
        raise ValueError("slit base must avoid the curve's starting point")
    r = 1.0 - 2.0 * math.sqrt(t)
    psi = slit_map(r, theta)
    lam = p.h12
    mu = p.a**2 / 4.0 - p.b**2
    p_avoid = psi.abs_deriv_boundary(0.0) ** lam * psi.d0**mu
    lhs = (1.0 - p_avoid) / (2.0 * t)
    rhs = p.h12 / (4.0 * math.sin(theta / 2.0) ** 2) - p.h0half
    return lhs, rhs


# ---------------------------------------------------------------------------
# Hadamard variation
# ---------------------------------------------------------------------------

def hadamard_pair(w1, w2):
    """(G, dG/dt) for the disk Green's function along the radial flow:
    rate = -Re[(1+w1)/(1-w1)] Re[(1+w2)/(1-w2)]."""
    w1 = np.asarray(w1, dtype=complex)
    w2 = np.asarray(w2, dtype=complex)
    if np.any(w1 == w2):
        raise ValueError("Green's function singular at coincident points")
    G = np.log(np.abs(1.0 - w1 * np.conj(w2))) - np.log(np.abs(w1 - w2))
    rate = -np.real((1.0 + w1) / (1.0 - w1)) * np.real((1.0 + w2) / (1.0 - w2))
    return G, rate


# ---------------------------------------------------------------------------
# Chiral one- and two-point functions
# ---------------------------------------------------------------------------

def chiral_m(log_w, log_1mw, log_wp, log_w0, log_1mw0, log_wp0, p: SleCftParams):
    """Two-point chiral boson: -ia log(1-w) + (ia/2) log w + ib log(w'/w),
    minus the same at the second point."""
    a, b = p.a, p.b

    def piece(lw, l1, lp):
        return -1j * a * np.asarray(l1) + 0.5j * a * np.asarray(lw) \
            + 1j * b * (np.asarray(lp) - np.asarray(lw))

    return piece(log_w, log_1mw, log_wp) - piece(log_w0, log_1mw0, log_wp0)


def chiral_n(log_w, log_1mw, log_wp, log_wq, p: SleCftParams):
    """Rooted chiral boson: -ia log(1-w) + (ia/2) log(w/w_q') + ib log(w'/w)."""
    a, b = p.a, p.b
    return (-1j * a * np.asarray(log_1mw)
            + 0.5j * a * (np.asarray(log_w) - np.asarray(log_wq))
            + 1j * b * (np.asarray(log_wp) - np.asarray(log_w)))


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------

@dataclass
class ObservableSpec:
    name: str
    description: str
    inputs: tuple            # node roles, e.g. ("interior",) or ("boundary",)
    params: dict = field(default_factory=dict)
    dimensions: DimensionSet | None = None


def catalog(p: SleCftParams) -> list[ObservableSpec]:
    """Machine-readable catalog of the named observables."""
    a = p.a
    return [
        ObservableSpec("lsw_poisson", "(1-|w|^2)/|1-w|^2", ("interior",), {},
                       vertex_dimensions(-a, -a, a, a, p)),
        ObservableSpec("lsw6", "e^{t/4} (1-w)^{1/3} w^{-1/6}", ("interior",),
                       {"kappa": 6.0}, vertex_dimensions(a, 0.0, -a / 2, -a / 2, p)),
        ObservableSpec("sle0_pair", "arg[(1-w) w^{-3/2} w'] and "
                       "S_w + (3/8)(w'/w)^2 (1-4w/(1-w)^2)", ("interior",),
                       {"kappa": 0.0}),
        ObservableSpec("ss_phi_hat", "2a arg(1-w) - a arg w - 2b arg(w'/w)",
                       ("interior",)),
        ObservableSpec("ss_phi_hat_exp", "C^{alpha^2} e^{alpha phi-hat}",
                       ("interior",), {"alpha": "free"}),
        ObservableSpec("constant_vertex", "(w_q')^{h_q^} (conj w_q')^{h_q*^}, "
                       "charges (0,0;tau,-tau)", (), {"tau": "free"},
                       vertex_dimensions(0.0, 0.0, 1.0, -1.0, p)),
        ObservableSpec("real_vertex", "real field, charges (s,s;-s,-s)",
                       ("interior",), {"sigma": "free"},
                       vertex_dimensions(-a, -a, a, a, p)),
        ObservableSpec("divisor", "rooted multi-vertex correlator under the "
                       "one-leg insertion", ("interior...",), {"divisor": "literal"}),
        ObservableSpec("chiral_n", "-ia log(1-w) + (ia/2) log(w/w_q') + ib log(w'/w)",
                       ("interior",)),
        ObservableSpec("chiral_m", "chiral boson difference at two points",
                       ("interior", "interior")),
        ObservableSpec("boundary_deriv", "e^{2 h_q^ t}|w'|^h (sin^2(x/2))^{a s/2}",
                       ("boundary",), {"h": "free"}),
        ObservableSpec("t_hat_1pt", "h12/(z(1-z)^2) + h0half/z^2", ("interior",)),
    ]
