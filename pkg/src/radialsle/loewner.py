"""Radial Loewner flow engine.

Simulates the radial Loewner chain

    d g_t(z)/dt = g_t(z) (xi_t + g_t(z)) / (xi_t - g_t(z)),   xi_t = e^{i theta_t},

with theta a Brownian (sqrt(kappa) B_t) or deterministic driver, tracking
interior points, boundary points, derivatives and branch-continuous
logarithms, with swallowing detection.

Discretization.  The default scheme advances each step by a Strang split:
half the driver increment as a rotation, then the *exact* constant-driver
flow for dt, then the second half rotation.  In the frame w = g/xi the
constant-driver flow has the closed form

    w  ->  k_inv(e^{dt} k(w)),        k(w) = 4w/(1+w)^2,

because the constant-driver hull is a radial slit and k linearizes its
growth.  The scheme is unconditionally stable, gets the capacity
normalization log g_t'(0) = t exactly, and swallows points by honest
crossing detection instead of ODE blow-up.  A classical RK4 integrator of
the raw equation (theta linearly interpolated inside the step) is kept as
`step_rk4_reference` for cross-validation on smooth drivers.

Close encounters with the driving point evolve on time scale |1-w|^2, which
a fixed step cannot resolve once |1-w| ~ sqrt(kappa dt).  Lanes entering
that zone are advanced with Brownian-bridge-refined substeps (the step's
increment is partitioned conditionally on its total, so the law of the
driver is unchanged), and a lane is declared swallowed when |1-w| first
drops below the stopping radius

    d_stop = max(1e-4, c_stop sqrt(kappa dt)),

its state projected onto that circle.  Stopping at the resolution scale
keeps every stopped observable an honest bounded martingale that the
Monte-Carlo harness can actually estimate.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .conformal import (
    koebe_disk,
    koebe_disk_deriv,
    koebe_disk_inverse,
    koebe_disk_inverse_deriv,
)

__all__ = [
    "Driver",
    "brownian_driver",
    "constant_driver",
    "driver_to_csv",
    "driver_from_csv",
    "path_rng",
    "LoewnerEnsemble",
    "LoewnerTracker",
    "trace",
    "trace_batch",
    "step_rk4_reference",
]

INTERIOR_SWALLOW_TOL = 1e-4   # |g - xi| threshold; also |1-w|
BOUNDARY_SWALLOW_TOL = 1e-4   # |sin((alpha-theta)/2)| threshold
DEFAULT_C_STOP = 1.5          # stopping radius multiplier, units of sqrt(kappa dt)
DEFAULT_ZONE_MULT = 3.0       # refinement zone, units of d_stop
DEFAULT_BRIDGE_SUBSTEPS = 16


def path_rng(master_seed: int, path_index: int, stream: int = 0) -> np.random.Generator:
    """Deterministic per-path generator; independent of threading/blocking."""
    return np.random.default_rng(np.random.SeedSequence((int(master_seed), int(path_index), int(stream))))


# ---------------------------------------------------------------------------
# Drivers
# ---------------------------------------------------------------------------

@dataclass
class Driver:
    """A sampled driving function theta_{k dt}, k = 0..n_steps."""

    dt: float
    theta: np.ndarray
    kind: str = "brownian"       # "brownian" | "constant"
    kappa: float = 0.0
    seed: tuple | None = None    # (master_seed, path_index) for brownian

    @property
    def n_steps(self) -> int:
        return len(self.theta) - 1

    @property
    def t_max(self) -> float:
        return self.n_steps * self.dt

    def increments(self) -> np.ndarray:
        return np.diff(self.theta)


def brownian_driver(kappa: float, dt: float, n_steps: int, master_seed: int, path_index: int = 0) -> Driver:
    """theta_0 = 0 and i.i.d. increments sqrt(kappa) N(0, dt)."""
    if dt <= 0:
        raise ValueError("step size must be positive")
    rng = path_rng(master_seed, path_index, stream=0)
    inc = math.sqrt(kappa * dt) * rng.standard_normal(n_steps)
    theta = np.concatenate([[0.0], np.cumsum(inc)])
    return Driver(dt=dt, theta=theta, kind="brownian", kappa=float(kappa),
                  seed=(int(master_seed), int(path_index)))


def constant_driver(value: float, dt: float, n_steps: int) -> Driver:
    if dt <= 0:
        raise ValueError("step size must be positive")
    return Driver(dt=dt, theta=np.full(n_steps + 1, float(value)), kind="constant", kappa=0.0)


def driver_to_csv(driver: Driver) -> str:
    """CSV dump with columns (k, t, theta) at 17 significant digits."""
    buf = io.StringIO()
    buf.write("k,t,theta\n")
    for k, th in enumerate(driver.theta):
        buf.write(f"{k},{k * driver.dt:.17g},{th:.17g}\n")
    return buf.getvalue()


def driver_from_csv(text: str, kind: str = "brownian", kappa: float = 0.0) -> Driver:
    rows = [line.split(",") for line in text.strip().splitlines()[1:]]
    ks = np.array([int(r[0]) for r in rows])
    ts = np.array([float(r[1]) for r in rows])
    theta = np.array([float(r[2]) for r in rows])
    order = np.argsort(ks)
    ts, theta = ts[order], theta[order]
    dt = ts[1] - ts[0] if len(ts) > 1 else 1.0
    return Driver(dt=float(dt), theta=theta, kind=kind, kappa=float(kappa))


# ---------------------------------------------------------------------------
# Exact constant-driver flow in the w = g/xi frame
# ---------------------------------------------------------------------------

def _slit_flow(y: np.ndarray, dtau: float):
    """Exact time-dtau radial Loewner flow with the driver frozen at 1.

    Returns (y_new, dlog) with dlog the log-derivative increment of the flow
    map, i.e. log of d/dy [k_inv(e^{dtau} k(y))].
    """
    w = math.exp(dtau) * koebe_disk(y)
    y_new = koebe_disk_inverse(w)
    dlog = np.log(koebe_disk_inverse_deriv(w) * koebe_disk_deriv(y)) + dtau
    return y_new, dlog


def _slit_flow_partial(y: np.ndarray, s: float):
    """Exact flow value and map-derivative at intermediate time s (no logs)."""
    w = math.exp(s) * koebe_disk(y)
    return koebe_disk_inverse(w), koebe_disk_inverse_deriv(w) * math.exp(s) * koebe_disk_deriv(y)


def _u_second(y):
    """U''(y) for U(y) = y(1+y)/(1-y), the frozen-driver field."""
    om = 1.0 - y
    return 2.0 / om**2 + 2.0 * (1.0 + y) / om**3


def _u_third(y):
    om = 1.0 - y
    return 4.0 / om**3 + (8.0 + 4.0 * y) / om**4


# ---------------------------------------------------------------------------
# Ensemble engine
# ---------------------------------------------------------------------------

@dataclass
class _NodeState:
    """Arrays over lanes for one tracked interior node."""

    y: np.ndarray        # w_t(z), complex
    lw: np.ndarray       # log w_t(z), branch-continuous
    l1mw: np.ndarray     # log(1 - w_t(z)), branch-continuous
    lwp: np.ndarray      # log w_t'(z), branch-continuous
    p2: np.ndarray | None = None   # w''/w'
    p3: np.ndarray | None = None   # w'''/w'
    alive: np.ndarray = None
    tau: np.ndarray = None


@dataclass
class _BoundaryState:
    x: np.ndarray        # alpha_t - theta_t in (0, 2 pi)
    lgp: np.ndarray      # log |g_t'| = log |w_t'|
    alive: np.ndarray = None
    tau: np.ndarray = None


class LoewnerEnsemble:
    """n_lanes independent radial Loewner flows sharing a node layout.

    Each lane has its own driver (increments passed to step()); nodes are
    the same initial points in every lane.  Swallowed nodes keep the frozen
    state from their stopping time.
    """

    def __init__(self, n_lanes: int, dt: float, kappa: float,
                 interior=(), boundary=(), order: int = 1,
                 pair_nodes: bool = False, theta0: float = 0.0,
                 master_seed: int | None = None, path_indices=None,
                 c_stop: float = DEFAULT_C_STOP, zone_mult: float = DEFAULT_ZONE_MULT,
                 bridge_substeps: int = DEFAULT_BRIDGE_SUBSTEPS):
        if dt <= 0:
            raise ValueError("step size must be positive")
        self.n = int(n_lanes)
        self.dt = float(dt)
        self.kappa = float(kappa)
        self.order = int(order)
        self.t = 0.0
        self.k = 0
        self.theta0 = float(theta0)
        self.theta = np.full(self.n, float(theta0))
        self.capacity = np.zeros(self.n)  # accumulated log g_t'(0); equals t exactly
        rot0 = np.exp(-1j * self.theta0)
        self.interior_z = [complex(z) * rot0 for z in interior]
        self.boundary_a = [float(a) - self.theta0 for a in boundary]
        if any(z == 0 for z in self.interior_z):
            raise ValueError("the origin is tracked implicitly; interior nodes must be nonzero")

        self.d_stop = max(INTERIOR_SWALLOW_TOL, c_stop * math.sqrt(max(self.kappa, 0.0) * dt))
        self.d_zone = zone_mult * self.d_stop
        self.R = int(bridge_substeps)
        self._master_seed = master_seed
        self._path_indices = (np.arange(self.n) if path_indices is None
                              else np.asarray(path_indices))
        self._bridge_rngs: dict[int, np.random.Generator] = {}

        self.nodes: list[_NodeState] = []
        for z in self.interior_z:
            st = _NodeState(
                y=np.full(self.n, z, complex),
                lw=np.full(self.n, np.log(z), complex),
                l1mw=np.full(self.n, np.log(1.0 - z), complex),
                lwp=np.zeros(self.n, complex),
            )
            if self.order >= 3:
                st.p2 = np.zeros(self.n, complex)
                st.p3 = np.zeros(self.n, complex)
            st.alive = np.ones(self.n, bool)
            st.tau = np.full(self.n, np.inf)
            self.nodes.append(st)
        self.bnodes: list[_BoundaryState] = []
        for a in self.boundary_a:
            x0 = a % (2.0 * math.pi)
            if x0 == 0.0:
                raise ValueError("boundary node coincides with the initial driving point")
            st = _BoundaryState(x=np.full(self.n, x0), lgp=np.zeros(self.n))
            st.alive = np.ones(self.n, bool)
            st.tau = np.full(self.n, np.inf)
            self.bnodes.append(st)
        # pairwise interaction logs live in PairedEnsemble
        self.track_pairs = False
        self.ldiff: dict[tuple[int, int], np.ndarray] = {}
        self.lcross: dict[tuple[int, int], np.ndarray] = {}

    # -- helpers ------------------------------------------------------------

    def _bridge_rng(self, lane: int) -> np.random.Generator:
        g = self._bridge_rngs.get(lane)
        if g is None:
            seed = 0 if self._master_seed is None else self._master_seed
            g = path_rng(seed, int(self._path_indices[lane]), stream=1)
            self._bridge_rngs[lane] = g
        return g

    @property
    def wq_log(self) -> np.ndarray:
        """log w_t'(0) = t - i theta_t, exact."""
        return self.t - 1j * self.theta

    def interior_alive(self) -> np.ndarray:
        """Lanes where every interior node is alive."""
        a = np.ones(self.n, bool)
        for st in self.nodes:
            a &= st.alive
        return a

    def lane_alive(self) -> np.ndarray:
        """Lanes where every tracked node (interior and boundary) is alive."""
        a = self.interior_alive()
        for st in self.bnodes:
            a &= st.alive
        return a

    # -- one global step ----------------------------------------------------

    def step(self, dtheta: np.ndarray) -> None:
        dtheta = np.asarray(dtheta, float)
        dt = self.dt
        if self.nodes:
            min_d = np.full(self.n, np.inf)
            any_alive = np.zeros(self.n, bool)
            for st in self.nodes:
                d = np.where(st.alive, np.abs(1.0 - st.y), np.inf)
                min_d = np.minimum(min_d, d)
                any_alive |= st.alive
            in_zone = any_alive & (min_d < self.d_zone)
            plain = any_alive & ~in_zone
            if plain.any():
                self._advance_lanes(np.where(plain)[0], dtheta, n_sub=1, bridge=False)
            if in_zone.any():
                self._advance_lanes(np.where(in_zone)[0], dtheta, n_sub=self.R, bridge=True)
        for st in self.bnodes:
            self._advance_boundary(st, dtheta, dt)
        self.theta = self.theta + dtheta
        self.capacity = self.capacity + dt   # flow adds exactly dt to log g'(0)
        self.k += 1
        self.t = self.k * dt

    # -- interior lanes -----------------------------------------------------

    def _advance_lanes(self, lanes: np.ndarray, dtheta: np.ndarray, n_sub: int, bridge: bool) -> None:
        dt_sub = self.dt / n_sub
        if n_sub == 1:
            incs = dtheta[lanes][:, None]
        elif bridge and self.kappa > 0.0:
            # Brownian bridge partition: i.i.d. refinements conditioned on the total.
            m = len(lanes)
            e = np.empty((m, n_sub))
            s = math.sqrt(self.kappa * dt_sub)
            for i, lane in enumerate(lanes):
                e[i] = s * self._bridge_rng(int(lane)).standard_normal(n_sub)
            e += (dtheta[lanes] - e.sum(axis=1))[:, None] / n_sub
            incs = e
        else:
            incs = np.repeat(dtheta[lanes][:, None] / n_sub, n_sub, axis=1)

        idx = lanes
        for st in self.nodes:
            sub = {
                "y": st.y[idx].copy(), "lw": st.lw[idx].copy(),
                "l1mw": st.l1mw[idx].copy(), "lwp": st.lwp[idx].copy(),
                "alive": st.alive[idx].copy(),
            }
            if self.order >= 3:
                sub["p2"] = st.p2[idx].copy()
                sub["p3"] = st.p3[idx].copy()
            tau_sub = st.tau[idx].copy()
            for r in range(n_sub):
                newly = self._substep(sub, incs[:, r], dt_sub)
                t_death = self.t + (r + 1) * dt_sub
                tau_sub[newly] = t_death
            st.y[idx], st.lw[idx] = sub["y"], sub["lw"]
            st.l1mw[idx], st.lwp[idx] = sub["l1mw"], sub["lwp"]
            if self.order >= 3:
                st.p2[idx], st.p3[idx] = sub["p2"], sub["p3"]
            st.alive[idx] = sub["alive"]
            st.tau[idx] = tau_sub

    def _substep(self, sub: dict, dth: np.ndarray, dtau: float) -> np.ndarray:
        """Strang step on a lane subset: rotate, exact flow, rotate.

        Mutates `sub` in place for lanes alive at entry; returns the boolean
        mask (within the subset) of lanes swallowed during this substep,
        whose state is left projected onto the stopping circle.
        """
        alive = sub["alive"]
        if not alive.any():
            return np.zeros_like(alive)
        y0 = sub["y"]
        rot = np.exp(-0.5j * dth)
        y1 = y0 * rot
        y2, dlog = _slit_flow(y1, dtau)
        y3 = y2 * rot
        dead = alive & ((np.abs(1.0 - y3) < self.d_stop) | (np.abs(y3) >= 1.0)
                        | ~np.isfinite(y3))
        # project swallowed lanes onto |1 - w| = d_stop for the frozen state
        if dead.any():
            u = 1.0 - y3[dead]
            u = np.where(np.isfinite(u) & (np.abs(u) > 0),
                         u * (self.d_stop / np.maximum(np.abs(u), 1e-300)),
                         self.d_stop)
            y3 = y3.copy()
            y3[dead] = 1.0 - u
        upd = alive
        with np.errstate(divide="ignore", invalid="ignore"):
            dlw = np.log(y3 / y0)
            dl1 = np.log((1.0 - y3) / (1.0 - y0))
        if self.order >= 3:
            self._advance_p23(sub, y1, dth, dtau, upd)
        sub["y"] = np.where(upd, y3, y0)
        sub["lw"] = np.where(upd, sub["lw"] + dlw, sub["lw"])
        sub["l1mw"] = np.where(upd, sub["l1mw"] + dl1, sub["l1mw"])
        sub["lwp"] = np.where(upd, sub["lwp"] + dlog - 1j * dth, sub["lwp"])
        sub["alive"] = alive & ~dead
        return dead

    def _advance_p23(self, sub: dict, y1: np.ndarray, dth: np.ndarray, dtau: float, upd) -> None:
        """RK4 for p2 = w''/w', p3 = w'''/w' through the frozen-driver flow.

        Stage values of the flow are exact; rotations leave p2, p3 invariant.
        The map derivative converts dlog increments into w' at stage times.
        """
        wp0 = np.exp(sub["lwp"] - 0.5j * dth)   # w' just after the first rotation
        ym, dm = _slit_flow_partial(y1, 0.5 * dtau)
        ye, de = _slit_flow_partial(y1, dtau)
        wpm, wpe = wp0 * dm, wp0 * de

        def f(y, wp, p2, p3):
            u2, u3 = _u_second(y), _u_third(y)
            return u2 * wp, u3 * wp * wp + 3.0 * u2 * p2 * wp

        p2, p3 = sub["p2"], sub["p3"]
        k1a, k1b = f(y1, wp0, p2, p3)
        k2a, k2b = f(ym, wpm, p2 + 0.5 * dtau * k1a, p3 + 0.5 * dtau * k1b)
        k3a, k3b = f(ym, wpm, p2 + 0.5 * dtau * k2a, p3 + 0.5 * dtau * k2b)
        k4a, k4b = f(ye, wpe, p2 + dtau * k3a, p3 + dtau * k3b)
        sub["p2"] = np.where(upd, p2 + dtau / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a), p2)
        sub["p3"] = np.where(upd, p3 + dtau / 6.0 * (k1b + 2 * k2b + 2 * k3b + k4b), p3)

    # -- boundary stepping (exact cot-flow + Strang jumps) --------------------

    def _advance_boundary(self, st: _BoundaryState, dtheta: np.ndarray, dt: float) -> None:
        alive = st.alive
        if not alive.any():
            return
        x0 = st.x
        x1 = x0 - 0.5 * dtheta
        dead = alive & ((x1 <= 0.0) | (x1 >= 2.0 * math.pi)
                        | (np.abs(np.sin(0.5 * x1)) < BOUNDARY_SWALLOW_TOL))
        c = np.cos(0.5 * x1)
        c2 = c * c
        with np.errstate(divide="ignore", invalid="ignore"):
            dlg = -0.5 * dt + 0.5 * np.log((1.0 - c2) / (1.0 - c2 * math.exp(-dt)))
        x2 = 2.0 * np.arccos(np.clip(c * math.exp(-0.5 * dt), -1.0, 1.0))
        x3 = x2 - 0.5 * dtheta
        dead |= alive & ((x3 <= 0.0) | (x3 >= 2.0 * math.pi)
                         | (np.abs(np.sin(0.5 * x3)) < BOUNDARY_SWALLOW_TOL)
                         | ~np.isfinite(dlg))
        upd = alive & ~dead
        st.x = np.where(upd, x3, st.x)
        st.lgp = np.where(upd, st.lgp + dlg, st.lgp)
        st.tau = np.where(dead & alive, self.t + dt, st.tau)
        st.alive = alive & ~dead


# ---------------------------------------------------------------------------
# Paired ensemble: adds interaction-term branch logs by replaying substeps
# ---------------------------------------------------------------------------

class PairedEnsemble(LoewnerEnsemble):
    """Ensemble variant that also continues pairwise interaction logs.

    Pair logs log(w_j - w_k) and log(1 - w_j conj(w_k)) are advanced with
    principal-branch increments computed from start/end node values of each
    substep; the refinement zone triggers if any node of the lane is close
    to the driving point or two nodes are close to each other.
    """

    def __init__(self, *args, **kwargs):
        kwargs["pair_nodes"] = False
        super().__init__(*args, **kwargs)
        m = len(self.interior_z)
        self.track_pairs = m > 1
        self.ldiff = {}
        self.lcross = {}
        for j in range(m):
            for k2 in range(j + 1, m):
                zj, zk = self.interior_z[j], self.interior_z[k2]
                self.ldiff[(j, k2)] = np.full(self.n, np.log(zj - zk), complex)
                self.lcross[(j, k2)] = np.full(self.n, np.log(1.0 - zj * np.conj(zk)), complex)

    def step(self, dtheta: np.ndarray) -> None:
        dtheta = np.asarray(dtheta, float)
        if not self.nodes:
            super().step(dtheta)
            return
        min_d = np.full(self.n, np.inf)
        any_alive = np.zeros(self.n, bool)
        for st in self.nodes:
            d = np.where(st.alive, np.abs(1.0 - st.y), np.inf)
            min_d = np.minimum(min_d, d)
            any_alive |= st.alive
        if self.track_pairs:
            for (j, k2) in self.ldiff:
                a = self.nodes[j].alive & self.nodes[k2].alive
                sep = np.where(a, np.abs(self.nodes[j].y - self.nodes[k2].y), np.inf)
                min_d = np.minimum(min_d, sep)
        in_zone = any_alive & (min_d < self.d_zone)
        plain = any_alive & ~in_zone
        for mask, n_sub, bridge in ((plain, 1, False), (in_zone, self.R, True)):
            if not mask.any():
                continue
            lanes = np.where(mask)[0]
            incs = self._increments_for(lanes, dtheta, n_sub, bridge)
            dt_sub = self.dt / n_sub
            subs = []
            for st in self.nodes:
                sub = {"y": st.y[lanes].copy(), "lw": st.lw[lanes].copy(),
                       "l1mw": st.l1mw[lanes].copy(), "lwp": st.lwp[lanes].copy(),
                       "alive": st.alive[lanes].copy()}
                if self.order >= 3:
                    sub["p2"] = st.p2[lanes].copy()
                    sub["p3"] = st.p3[lanes].copy()
                subs.append(sub)
            taus = [st.tau[lanes].copy() for st in self.nodes]
            pd = {key: v[lanes].copy() for key, v in self.ldiff.items()}
            pc = {key: v[lanes].copy() for key, v in self.lcross.items()}
            for r in range(n_sub):
                olds = [s["y"].copy() for s in subs]
                oldalive = [s["alive"].copy() for s in subs]
                for jn, sub in enumerate(subs):
                    newly = self._substep(sub, incs[:, r], dt_sub)
                    taus[jn][newly] = self.t + (r + 1) * dt_sub
                for (j, k2) in pd:
                    both = oldalive[j] & oldalive[k2]
                    yj0, yk0 = olds[j], olds[k2]
                    yj1, yk1 = subs[j]["y"], subs[k2]["y"]
                    with np.errstate(divide="ignore", invalid="ignore"):
                        dd = np.log((yj1 - yk1) / (yj0 - yk0))
                        dc = np.log((1.0 - yj1 * np.conj(yk1)) / (1.0 - yj0 * np.conj(yk0)))
                    pd[(j, k2)] = np.where(both, pd[(j, k2)] + dd, pd[(j, k2)])
                    pc[(j, k2)] = np.where(both, pc[(j, k2)] + dc, pc[(j, k2)])
            for jn, st in enumerate(self.nodes):
                sub = subs[jn]
                st.y[lanes], st.lw[lanes] = sub["y"], sub["lw"]
                st.l1mw[lanes], st.lwp[lanes] = sub["l1mw"], sub["lwp"]
                if self.order >= 3:
                    st.p2[lanes], st.p3[lanes] = sub["p2"], sub["p3"]
                st.alive[lanes] = sub["alive"]
                st.tau[lanes] = taus[jn]
            for key in pd:
                self.ldiff[key][lanes] = pd[key]
                self.lcross[key][lanes] = pc[key]
        for st in self.bnodes:
            self._advance_boundary(st, dtheta, self.dt)
        self.theta = self.theta + dtheta
        self.capacity = self.capacity + self.dt
        self.k += 1
        self.t = self.k * self.dt

    def _increments_for(self, lanes, dtheta, n_sub, bridge):
        if n_sub == 1:
            return dtheta[lanes][:, None]
        if bridge and self.kappa > 0.0:
            m = len(lanes)
            e = np.empty((m, n_sub))
            s = math.sqrt(self.kappa * self.dt / n_sub)
            for i, lane in enumerate(lanes):
                e[i] = s * self._bridge_rng(int(lane)).standard_normal(n_sub)
            e += (dtheta[lanes] - e.sum(axis=1))[:, None] / n_sub
            return e
        return np.repeat(dtheta[lanes][:, None] / n_sub, n_sub, axis=1)


# ---------------------------------------------------------------------------
# Reference RK4 scheme (raw equation, linear driver interpolation)
# ---------------------------------------------------------------------------

def step_rk4_reference(g: complex, lgp: complex, theta0: float, theta1: float, dt: float):
    """One RK4 step of d g/dt = g (xi+g)/(xi-g) and the log-derivative ODE
    d(log g')/dt = (xi+g)/(xi-g) + 2 xi g/(xi-g)^2, theta linear in the step.

    Reference integrator for cross-validation on smooth drivers; not used by
    the production engine (stiff near swallowing).
    """

    def f(gv, th):
        xi = np.exp(1j * th)
        q = (xi + gv) / (xi - gv)
        return gv * q, q + 2.0 * xi * gv / (xi - gv) ** 2

    thm = 0.5 * (theta0 + theta1)
    k1g, k1l = f(g, theta0)
    k2g, k2l = f(g + 0.5 * dt * k1g, thm)
    k3g, k3l = f(g + 0.5 * dt * k2g, thm)
    k4g, k4l = f(g + dt * k3g, theta1)
    g_new = g + dt / 6.0 * (k1g + 2 * k2g + 2 * k3g + k4g)
    lgp_new = lgp + dt / 6.0 * (k1l + 2 * k2l + 2 * k3l + k4l)
    return g_new, lgp_new


# ---------------------------------------------------------------------------
# Single-path tracker (spec-facing view over a 1-lane ensemble)
# ---------------------------------------------------------------------------

class LoewnerTracker:
    """Per-path state of the radial Loewner flow for a stored driver."""

    def __init__(self, driver: Driver, interior=(), boundary=(), order: int = 1,
                 pair_nodes: bool = False, **engine_kwargs):
        self.driver = driver
        cls = PairedEnsemble if pair_nodes else LoewnerEnsemble
        self.ens = cls(1, driver.dt, driver.kappa, interior=interior,
                       boundary=boundary, order=order,
                       theta0=float(driver.theta[0]),
                       master_seed=(driver.seed[0] if driver.seed else 0),
                       path_indices=[driver.seed[1] if driver.seed else 0],
                       **engine_kwargs)
        self._inc = driver.increments()

    @property
    def t(self) -> float:
        return self.ens.t

    @property
    def theta(self) -> float:
        return float(self.ens.theta[0])

    def has_steps(self) -> bool:
        return self.ens.k < len(self._inc)

    def step(self, n: int = 1) -> None:
        for _ in range(n):
            if not self.has_steps():
                raise ValueError("driver exhausted")
            self.ens.step(np.array([self._inc[self.ens.k]]))

    def run(self) -> None:
        while self.has_steps():
            self.step()

    # chart accessors for node j (interior)
    def w(self, j: int) -> complex:
        return complex(self.ens.nodes[j].y[0])

    def w_prime(self, j: int) -> complex:
        return complex(np.exp(self.ens.nodes[j].lwp[0]))

    def log_w(self, j: int) -> complex:
        return complex(self.ens.nodes[j].lw[0])

    def log_one_minus_w(self, j: int) -> complex:
        return complex(self.ens.nodes[j].l1mw[0])

    def log_w_prime(self, j: int) -> complex:
        return complex(self.ens.nodes[j].lwp[0])

    def log_g_prime(self, j: int) -> complex:
        return complex(self.ens.nodes[j].lwp[0] + 1j * self.ens.theta[0])

    def alive(self, j: int) -> bool:
        return bool(self.ens.nodes[j].alive[0])

    def tau(self, j: int) -> float:
        return float(self.ens.nodes[j].tau[0])

    def schwarzian_w(self, j: int) -> complex:
        st = self.ens.nodes[j]
        if st.p2 is None:
            raise ValueError("tracker was not built with order=3")
        p2, p3 = complex(st.p2[0]), complex(st.p3[0])
        return p3 - 1.5 * p2 * p2

    def w_of(self, j: int):
        """(w, w', arg w, arg(1-w), arg(w'/w)) for interior node j; errors if swallowed."""
        st = self.ens.nodes[j]
        if not st.alive[0]:
            raise ValueError(f"node {j} was swallowed at t={st.tau[0]:.6g}")
        lw, lwp = st.lw[0], st.lwp[0]
        return (complex(st.y[0]), complex(np.exp(lwp)), float(lw.imag),
                float(st.l1mw[0].imag), float((lwp - lw).imag))

    # boundary accessors
    def boundary_angle(self, j: int) -> float:
        """alpha_t - theta_t (image angle relative to the driving point)."""
        return float(self.ens.bnodes[j].x[0])

    def boundary_log_abs_g_prime(self, j: int) -> float:
        return float(self.ens.bnodes[j].lgp[0])

    def boundary_alive(self, j: int) -> bool:
        return bool(self.ens.bnodes[j].alive[0])

    @property
    def capacity_error(self) -> float:
        """|accumulated log g'(0) - t|; capacity normalization check."""
        return abs(float(self.ens.capacity[0]) - self.ens.t)


# ---------------------------------------------------------------------------
# Trace extraction (exact inverse flow through the discrete hull)
# ---------------------------------------------------------------------------

def _backward_step(h: np.ndarray, theta_mid: np.ndarray, dt: float) -> np.ndarray:
    """Inverse of one forward Strang step: conjugate the exact inverse flow
    by the frozen mid-step rotation."""
    rot = np.exp(-1j * theta_mid)
    u = h * rot
    u = koebe_disk_inverse(math.exp(-dt) * koebe_disk(u))
    return u / rot


def trace_batch(theta: np.ndarray, dt: float, eps_tip: float = 1e-3,
                sample_every: int = 1, k_group: int = 256,
                progress=None) -> np.ndarray:
    """Trace polylines for a batch of drivers.

    theta has shape (P, n_steps+1); returns gamma of shape (P, n_samples)
    with samples at t = j*sample_every*dt, j = 1..n_samples.  Each sample is
    obtained by seeding a point just inside the boundary at the driving
    angle and composing the exact inverse flow through all earlier steps.
    Work is O(n_samples * n_steps / 2) per path, batched over sample groups.
    """
    theta = np.atleast_2d(np.asarray(theta, float))
    P, n1 = theta.shape
    n = n1 - 1
    thmid = 0.5 * (theta[:, :-1] + theta[:, 1:])
    ks = np.arange(sample_every, n + 1, sample_every)
    out = np.empty((P, len(ks)), complex)
    rot_mid = np.exp(-1j * thmid)  # precomputed rotations
    c4 = 4.0 * math.exp(-dt)
    for g0 in range(0, len(ks), k_group):
        kg = ks[g0: g0 + k_group]
        G = len(kg)
        # active integration state: (P, G)
        h = (1.0 - eps_tip) * np.exp(1j * theta[:, kg])
        # backward step s = 1..max(kg): sample col j integrates while s <= kg[j]
        smax = int(kg[-1])
        for s in range(1, smax + 1):
            act = kg >= s          # columns still integrating
            cols = np.where(act)[0]
            src = kg[cols] - s     # driver step index used at this depth
            r = rot_mid[:, src]    # (P, len(cols))
            u = h[:, cols]
            u = u * r
            t1 = 1.0 + u
            np.multiply(t1, t1, out=t1)
            np.divide(u, t1, out=u)
            u *= c4                         # w = 4 e^{-dt} u/(1+u)^2
            t1 = np.subtract(1.0, u, out=t1)
            np.sqrt(t1, out=t1)
            np.subtract(1.0, t1, out=t1)    # 1 - sqrt(1-w)
            np.multiply(t1, t1, out=t1)
            np.divide(t1, u, out=u)         # k_inv(w), cancellation-free
            np.multiply(u, np.conj(r), out=u)
            h[:, cols] = u
        out[:, g0: g0 + G] = h
        if progress is not None:
            progress(g0 + G, len(ks))
    return out


def trace(driver: Driver, n_samples: int, eps_tip: float = 1e-3) -> np.ndarray:
    """Approximate trace gamma at n_samples uniformly spaced times.

    Returns an array of length n_samples+1 starting at gamma_0 = boundary
    seed at t=0 (the point 1 for a zero driver).
    """
    n = driver.n_steps
    stride = max(1, n // n_samples)
    g = trace_batch(driver.theta[None, :], driver.dt, eps_tip=eps_tip, sample_every=stride)[0]
    start = (1.0 - eps_tip) * np.exp(1j * driver.theta[0])
    return np.concatenate([[start], g])
