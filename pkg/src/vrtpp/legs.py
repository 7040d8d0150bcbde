"""Per-leg transfer-time optimization and the Δv / mass-ratio cost matrix."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .astro import GeometryDegenerate, NoConvergence, OrbitalElements, mass_ratio, transfer_dv_canonical
from .units import DEFAULT_UNITS, CanonicalUnits

EPS_TOF = 1e-5  # minimum transfer time [TU]
SENTINEL_DV = 50.0  # km/s, assigned to degenerate or unusable arcs
FD_STEP = 1e-6


class InfeasibleWindow(ValueError):
    """No departure/transfer pair fits inside the leg's time window."""


@dataclass(frozen=True)
class LegTimes:
    t_dep: float
    t_tr: float
    dv: float
    mu: float
    converged: bool = True

    @property
    def t_arr_next(self) -> float:
        return self.t_dep + self.t_tr


def hohmann_time(a_i: float, a_j: float) -> float:
    """Half-period of the Hohmann ellipse between radii ``a_i`` and ``a_j`` (DU -> TU)."""
    return math.pi * math.sqrt(((a_i + a_j) / 2.0) ** 3)


def leg_dv(el_i, el_j, t_dep, t_tr, units: CanonicalUnits = DEFAULT_UNITS) -> float:
    """Δv in km/s, or the sentinel when the Lambert geometry is degenerate."""
    try:
        dv = transfer_dv_canonical(el_i, el_j, t_dep, t_tr)
    except (GeometryDegenerate, NoConvergence, ValueError, ZeroDivisionError):
        return SENTINEL_DV
    dv = units.speed_to_kms(dv)
    return dv if math.isfinite(dv) else SENTINEL_DV


def leg_window(t_arr_i, t_svc_i, t_svc_j, t_max):
    """(lowest departure, latest arrival) of a leg; raises InfeasibleWindow."""
    lo = t_arr_i + t_svc_i
    hi = t_max - t_svc_j
    if lo + EPS_TOF > hi or lo > t_max:
        raise InfeasibleWindow(f"departure >= {lo:.4f} cannot arrive by {hi:.4f} TU")
    return lo, hi


def clip_guess(guess, lo, hi):
    t_dep, t_tr = guess
    t_dep = min(max(t_dep, lo), hi - EPS_TOF)
    t_tr = min(max(t_tr, EPS_TOF), hi - t_dep)
    return t_dep, t_tr


def optimize_leg(el_i: OrbitalElements, el_j: OrbitalElements, t_arr_i: float, t_svc_i: float,
                 t_svc_j: float, t_max: float, guess, isp: float = 320.0, g0: float = 9.81,
                 units: CanonicalUnits = DEFAULT_UNITS) -> LegTimes:
    """Locally minimize the two-impulse Δv over (departure, transfer) time.

    Feasible set: t_arr_i + t_svc_i <= t_dep <= t_max, eps <= t_tr <= t_max,
    eps <= t_dep + t_tr <= t_max - t_svc_j. Starts from ``guess`` clipped
    into the window; never returns a point worse than that start.
    """
    lo, hi = leg_window(t_arr_i, t_svc_i, t_svc_j, t_max)
    x0 = np.array(clip_guess(guess, lo, hi))

    def f(x):
        return leg_dv(el_i, el_j, x[0], x[1], units)

    def jac(x):
        g = np.empty(2)
        for k in range(2):
            xp = x.copy()
            xm = x.copy()
            xp[k] += FD_STEP
            xm[k] -= FD_STEP
            g[k] = (f(xp) - f(xm)) / (2.0 * FD_STEP)
        return g

    f0 = f(x0)
    with warnings.catch_warnings():
        # SLSQP clips its own line-search steps into the bounds and says so; the result is projected anyway
        warnings.filterwarnings("ignore", "Values in x were outside bounds", RuntimeWarning)
        res = minimize(
            f, x0, jac=jac, method="SLSQP",
            bounds=[(lo, t_max), (EPS_TOF, t_max)],
            constraints=[{"type": "ineq", "fun": lambda x: hi - x[0] - x[1], "jac": lambda x: np.array([-1.0, -1.0])}],
            options={"ftol": 1e-12, "maxiter": 200},
        )
    x = _project(res.x, lo, hi, t_max)
    fx = f(x)
    converged = bool(res.success)
    if not fx <= f0:
        x, fx, converged = x0, f0, False
    return LegTimes(float(x[0]), float(x[1]), float(fx), mass_ratio(fx, isp, g0), converged)


def _project(x, lo, hi, t_max):
    # SLSQP may end a hair outside the box
    t_dep = min(max(float(x[0]), lo), min(t_max, hi - EPS_TOF))
    t_tr = min(max(float(x[1]), EPS_TOF), hi - t_dep)
    return np.array([t_dep, t_tr])


@dataclass
class CostMatrix:
    """Δv and timing tables over original nodes (depot, stations, targets).

    Duplicated depots and stations share their original's row and column;
    ``expand`` produces the tables over the duplicated index space.
    """

    dv: np.ndarray
    t_dep: np.ndarray
    t_tr: np.ndarray
    status: np.ndarray  # 1 optimized, 0 degenerate / not computed
    isp: float = 320.0
    g0: float = 9.81

    @classmethod
    def empty(cls, n: int, isp: float = 320.0, g0: float = 9.81) -> "CostMatrix":
        return cls(np.full((n, n), SENTINEL_DV), np.zeros((n, n)), np.zeros((n, n)), np.zeros((n, n), dtype=int), isp, g0)

    @property
    def mu(self) -> np.ndarray:
        return np.exp(-self.dv * 1000.0 / (self.g0 * self.isp))

    def copy(self) -> "CostMatrix":
        return CostMatrix(self.dv.copy(), self.t_dep.copy(), self.t_tr.copy(), self.status.copy(), self.isp, self.g0)

    def set_leg(self, a: int, b: int, leg: LegTimes) -> None:
        self.dv[a, b] = leg.dv
        self.t_dep[a, b] = leg.t_dep
        self.t_tr[a, b] = leg.t_tr
        self.status[a, b] = 1 if leg.dv < SENTINEL_DV else 0

    def leg(self, a: int, b: int) -> LegTimes:
        return LegTimes(float(self.t_dep[a, b]), float(self.t_tr[a, b]), float(self.dv[a, b]),
                        mass_ratio(float(self.dv[a, b]), self.isp, self.g0))

    def expand(self, sets) -> tuple[np.ndarray, np.ndarray]:
        """(dv, mu) over duplicated indices; unusable arcs carry the sentinel."""
        n = sets.n_nodes
        orig = np.array([sets.original(j) for j in range(n)])
        dv = self.dv[np.ix_(orig, orig)].copy()
        starts = list(sets.S_Ds)
        ends = list(sets.S_De)
        dv[:, starts] = SENTINEL_DV
        dv[ends, :] = SENTINEL_DV
        for k in starts:
            dv[k, ends] = SENTINEL_DV
        for j in sets.S_R:
            for jj in sets.S_R:
                if sets.orig_station(j) == sets.orig_station(jj):
                    dv[j, jj] = SENTINEL_DV
        np.fill_diagonal(dv, SENTINEL_DV)
        mu = np.exp(-dv * 1000.0 / (self.g0 * self.isp))
        return dv, mu


def init_cost_matrix(scenario) -> CostMatrix:
    """Optimize every ordered pair of distinct original nodes from guess (0, Hohmann time).

    Origins may depart from t = 0 (no origin service time); the destination's
    service time still bounds the arrival.
    """
    n = scenario.n_orig
    cm = CostMatrix.empty(n, scenario.isp, scenario.g0)
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            el_a, el_b = scenario.nodes[a], scenario.nodes[b]
            guess = (0.0, hohmann_time(el_a.a, el_b.a))
            try:
                leg = optimize_leg(el_a, el_b, 0.0, 0.0, scenario.t_svc[b], scenario.t_max,
                                   guess, scenario.isp, scenario.g0, scenario.units)
            except InfeasibleWindow:
                continue
            cm.set_leg(a, b, leg)
    return cm


@dataclass(frozen=True)
class RefinedLeg:
    src: int  # duplicated index
    dst: int
    times: LegTimes


def refine_sequence(seq, scenario, warm: CostMatrix, cold: bool = False) -> tuple[CostMatrix, list[RefinedLeg]]:
    """Optimize the legs of ``seq`` one after another, carrying arrival times forward.

    ``seq`` runs from a starting depot to its ending depot (duplicated
    indices). Each leg starts from the warm entry clipped into its window,
    or with ``cold`` from (earliest departure, Hohmann time).
    Raises InfeasibleWindow if any leg has no admissible time window.
    """
    sets = scenario.sets
    out = warm.copy()
    legs = []
    t_arr = 0.0
    for src, dst in zip(seq[:-1], seq[1:]):
        a, b = sets.original(src), sets.original(dst)
        guess = (warm.t_dep[a, b], warm.t_tr[a, b])
        if cold or (warm.status[a, b] == 0 and warm.t_tr[a, b] <= 0):
            el_a, el_b = scenario.nodes[a], scenario.nodes[b]
            guess = (0.0, hohmann_time(el_a.a, el_b.a))
        leg = optimize_leg(scenario.nodes[a], scenario.nodes[b], t_arr, scenario.service_time(src),
                           scenario.service_time(dst), scenario.t_max, guess, scenario.isp, scenario.g0,
                           scenario.units)
        out.set_leg(a, b, leg)
        legs.append(RefinedLeg(src, dst, leg))
        t_arr = leg.t_arr_next
    return out, legs


def dv_grid(el_i, el_j, dep_range, tof_range, n: int, m: int, units: CanonicalUnits = DEFAULT_UNITS):
    """Δv [km/s] over an ``n`` x ``m`` (departure x transfer) grid; rows are departures."""
    if tof_range[0] < EPS_TOF:
        raise ValueError("transfer-time lower bound must be at least eps")
    deps = np.linspace(dep_range[0], dep_range[1], n)
    tofs = np.linspace(tof_range[0], tof_range[1], m)
    grid = np.empty((n, m))
    for p, td in enumerate(deps):
        for q, tt in enumerate(tofs):
            grid[p, q] = leg_dv(el_i, el_j, td, tt, units)
    return deps, tofs, grid


def write_grid_csv(path, deps, tofs, grid) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_dep_tu", "t_tr_tu", "dv_kms"])
        for p, td in enumerate(deps):
            for q, tt in enumerate(tofs):
                w.writerow([f"{td:.6g}", f"{tt:.6g}", f"{grid[p, q]:.6g}"])
