"""Path-based formulation: column generation with backward labeling pricing."""

from __future__ import annotations

import csv
import heapq
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .arc import build_Pl, extract_plan, matrix_delta, plan_arcs
from .legs import CostMatrix, LegTimes, init_cost_matrix
from .mission import MissionSolution, build_route, refine_route, solve_mass_plan
from .optkernel import NO_SOLUTION_TIME_LIMIT, OPTIMAL, LinearModel, solve_lp, solve_mip
from .scenario import omega_of

log = logging.getLogger(__name__)

CG_MAX_ITER = 200
RC_TOL = 1e-9
PR_BACKEND = "highs"


class InfeasibleColumn(ValueError):
    def __init__(self, message, omega=None):
        super().__init__(message)
        self.omega = omega


class NoFeasibleColumns(RuntimeError):
    pass


@dataclass
class Column:
    omega: int
    sequence: list[int]
    a_t: np.ndarray
    a_r: np.ndarray
    r0: np.ndarray
    m_p: float
    c: float
    leg_times: list[LegTimes]
    arrival: list[float] = field(default_factory=list)
    departure: list[float] = field(default_factory=list)
    refuel: dict[int, float] = field(default_factory=dict)  # position -> kg
    converged: bool = True

    def reduced_cost(self, duals: "Duals") -> float:
        return self.c - (float(self.a_t @ duals.w1) + float(self.a_r @ duals.w2) + duals.w3
                         + float(self.r0 @ duals.w4))


@dataclass
class Duals:
    w1: np.ndarray
    w2: np.ndarray
    w3: float
    w4: np.ndarray

    @classmethod
    def zeros(cls, n_t: int, n_r: int) -> "Duals":
        return cls(np.zeros(n_t), np.zeros(n_r), 0.0, np.zeros(n_r))


@dataclass(order=True)
class Label:
    sort_key: tuple = field(init=False, repr=False)
    node: int = field(compare=False)
    phi: float = field(compare=False)
    u: float = field(compare=False)
    gamma: tuple = field(compare=False)  # backward: end depot first
    rho: dict = field(compare=False)  # duplicated station -> refuel [kg]
    payload: float = field(default=0.0, compare=False)

    def __post_init__(self):
        self.sort_key = (-self.phi, self.u, self.gamma)

    def sequence(self) -> list[int]:
        return list(reversed(self.gamma))


def make_column(seq, legs, scenario, omega=None, converged=True) -> Column:
    """Column for a fixed sequence; masses from the least-propellant mass plan."""
    sets = scenario.sets
    plans = solve_mass_plan([(seq, [lt.mu for lt in legs])], scenario)
    if plans is None:
        raise InfeasibleColumn(f"no admissible mass plan for {seq}")
    arr, dep, refuels = plans[0]
    targets = [j for j in seq if sets.is_target(j)]
    omega = omega_of(targets, sets) if omega is None else omega
    a_t = np.zeros(sets.n_t)
    for j in targets:
        a_t[sets.target_offset(j)] = 1.0
    a_r = np.zeros(sets.n_r)
    r0 = np.zeros(sets.n_r)
    for p, j in enumerate(seq):
        if sets.is_station(j):
            a_r[sets.station_offset(j)] += 1
            r0[sets.station_offset(j)] += refuels.get(p, 0.0)
    payload = sum(scenario.target_payload(j) for j in targets)
    m_p = dep[0] - scenario.m_dry - payload
    profit = sum(scenario.target_profit(j) for j in targets)
    c = profit - scenario.lam * (m_p + float(r0.sum()))
    return Column(omega, list(seq), a_t, a_r, r0, m_p, c, list(legs), arr, dep, refuels, converged)


# --------------------------------------------------------------------------- master


def build_master(columns, scenario, relaxed: bool = True) -> LinearModel:
    """max c z over the given columns; rows: targets, stations, vehicles, capacities."""
    if not columns:
        raise ValueError("master needs at least one column")
    m = LinearModel("P_m" if relaxed else "P_p", sense="max")
    z = [m.add_var(f"z_{col.omega}_{k}", 0.0, math.inf if relaxed else 1.0, binary=not relaxed, obj=col.c)
         for k, col in enumerate(columns)]
    n_t, n_r = scenario.n_t, scenario.n_r
    for t in range(n_t):
        m.add_constr({z[k]: col.a_t[t] for k, col in enumerate(columns)}, "<=", 1.0, f"target_{t}")
    for s in range(n_r):
        m.add_constr({z[k]: col.a_r[s] for k, col in enumerate(columns)}, "<=", float(scenario.n_rv), f"visits_{s}")
    m.add_constr({zk: 1.0 for zk in z}, "<=", float(scenario.n_dv), "vehicles")
    for s in range(n_r):
        m.add_constr({z[k]: col.r0[s] for k, col in enumerate(columns)}, "<=", float(scenario.r_max[s]),
                     f"capacity_{s}")
    return m


def master_duals(outcome, scenario) -> Duals:
    n_t, n_r = scenario.n_t, scenario.n_r
    d = np.maximum(outcome.duals, 0.0)  # clip round-off
    return Duals(d[:n_t], d[n_t:n_t + n_r], float(d[n_t + n_r]), d[n_t + n_r + 1:])


# --------------------------------------------------------------------------- pricing


def refuel_amount(capacity_left: float, u: float, mu_ji: float, m_dry: float, payload: float) -> float:
    """Refuel at a station reached backward: fill the deficit, within remaining capacity."""
    return min(capacity_left, u / mu_ji - m_dry - payload)


def label_search(duals: Duals, omega_m, mu_hat: np.ndarray, scenario, targets=None, require=None,
                 stats: dict | None = None, forbidden=frozenset()):
    """Best reduced-cost route by backward labeling, or None.

    ``mu_hat`` is over duplicated indices. ``targets`` restricts which
    targets may be visited; ``require`` (an omega) accepts only that route;
    ``forbidden`` holds forward sequences that may not be returned.
    """
    sets = scenario.sets
    lam, m_dry, m_max, q_max = scenario.lam, scenario.m_dry, scenario.m_max, scenario.q_max
    start, end = 0, sets.end_depot(0)
    allowed = list(sets.S_T) if targets is None else sorted(targets)
    gain = {j: scenario.target_profit(j) - duals.w1[sets.target_offset(j)] for j in allowed}
    pay = {j: scenario.target_payload(j) for j in allowed}
    copies = {s: sets.S_R_of(s) for s in sets.S_R0}
    r_max = {s: float(scenario.r_max[s - sets.S_R0.start]) for s in sets.S_R0}
    priced_cap = {s: duals.w4[s - sets.S_R0.start] > 0 for s in sets.S_R0}
    omega_m = set(omega_m)

    best_val, best = 0.0, None
    root = Label(end, -duals.w3, m_dry, (end,), {}, 0.0)
    heap = [root]
    store: dict[tuple, list[tuple]] = {}
    popped = 0
    while heap:
        L = heapq.heappop(heap)
        popped += 1
        visited = set(L.gamma)
        phi_u = sum(max(0.0, g) for j, g in gain.items() if j not in visited)
        m_p = L.u - m_dry - L.payload
        if L.phi + phi_u - lam * m_p <= best_val:
            continue
        if L.node == start:
            tg = [j for j in L.gamma if sets.is_target(j)]
            om = omega_of(tg, sets)
            if om in omega_m or (require is not None and om != require):
                continue
            if forbidden and tuple(reversed(L.gamma)) in forbidden:
                continue
            cbar = L.phi - lam * m_p
            if cbar > best_val:
                best_val, best = cbar, L
            continue
        usage = tuple(sum(L.rho.get(c, 0.0) for c in copies[s]) for s in sets.S_R0)
        key = (L.node, frozenset(L.gamma))
        front = store.setdefault(key, [])
        if any(_dominates(e, L.phi, L.u, usage, priced_cap, sets) for e in front):
            continue
        front[:] = [e for e in front if not _dominates((L.phi, L.u, usage), e[0], e[1], e[2], priced_cap, sets)]
        front.append((L.phi, L.u, usage))
        has_target = any(sets.is_target(j) for j in L.gamma)
        preds = [j for j in allowed if j not in visited]
        for s in sets.S_R0:
            if sets.is_station(L.node) and sets.orig_station(L.node) == s:
                continue
            free = [c for c in copies[s] if c not in visited]
            if free:
                preds.append(free[0])
        if has_target and (require is None or all(j in visited for j in _targets_of(require, sets))):
            preds.append(start)
        for j in preds:
            mu = mu_hat[j, L.node]
            u = L.u / mu
            if u > m_max:
                continue
            phi = L.phi
            rho = L.rho
            payload = L.payload
            if sets.is_target(j):
                if payload + pay[j] > q_max or u + pay[j] > m_max:
                    continue
                phi += gain[j]
                u += pay[j]
                payload += pay[j]
            elif sets.is_station(j):
                s = sets.orig_station(j)
                used = sum(L.rho.get(c, 0.0) for c in copies[s])
                r = refuel_amount(r_max[s] - used, L.u, mu, m_dry, payload)
                if r < 0:
                    continue
                w = s - sets.S_R0.start
                phi -= duals.w2[w] + r * (lam + duals.w4[w])
                u -= r
                rho = dict(L.rho)
                rho[j] = r
            heapq.heappush(heap, Label(j, phi, u, L.gamma + (j,), rho, payload))
    if stats is not None:
        stats["popped"] = popped
        stats["best"] = best_val
    return best


def _targets_of(omega, sets):
    base = sets.S_T.start
    return [base + j for j in range(sets.n_t) if omega >> j & 1]


def _dominates(stored, phi, u, usage, priced_cap, sets) -> bool:
    """Does stored (phi', u', usage') dominate (phi, u, usage)?

    Beyond phi' >= phi and u' <= u, a station whose capacity dual is zero
    must have no more capacity drawn; one with a positive dual must match.
    """
    p2, u2, use2 = stored
    if not (p2 >= phi and u2 <= u):
        return False
    for k, s in enumerate(sets.S_R0):
        if priced_cap[s]:
            if abs(use2[k] - usage[k]) > 1e-9:
                return False
        elif use2[k] > usage[k] + 1e-9:
            return False
    return True


# --------------------------------------------------------------------------- refinement loops


def _refine_until_stable(first_seq, scenario, warm: CostMatrix, next_seq, frozen: bool = False):
    """Shared refinement loop: sequence -> refine -> next sequence.

    ``next_seq(matrix, forbidden)`` yields the next sequence (or None),
    avoiding the sequences in ``forbidden``. A sequence whose refined legs
    admit no mass plan is forbidden and its leg updates are discarded.
    With ``frozen`` the matrix is taken as exact and nothing is refined.
    Returns (sequence, legs, matrix, converged).
    """
    if frozen:
        orig = scenario.sets.original
        return first_seq, [warm.leg(orig(a), orig(b)) for a, b in zip(first_seq[:-1], first_seq[1:])], warm, True
    history = []
    forbidden: set[tuple] = set()
    seq = first_seq
    cost = warm
    orig = scenario.sets.original
    for ell in range(scenario.l_max):
        got = refine_route(seq, scenario, cost)
        if got is None:
            log.debug("sequence %s infeasible after refinement", seq)
            forbidden.add(tuple(seq))
            nxt = next_seq(cost, forbidden)
            if nxt is None:
                tg = [j for j in seq if scenario.sets.is_target(j)]
                raise InfeasibleColumn(f"refined sequence {seq} violates mass or time limits",
                                       omega_of(tg, scenario.sets))
            seq = nxt
            continue
        new, times = got[0], [lg.times for lg in got[1]]
        mask = np.zeros_like(cost.dv, dtype=bool)
        for a, b in zip(seq[:-1], seq[1:]):
            mask[orig(a), orig(b)] = True
        rec = (tuple(seq), new.dv.copy(), mask, times)
        if any(h[0] == rec[0] and matrix_delta(rec[1], h[1], rec[2] & h[2]) < scenario.eps_c for h in history):
            return seq, times, new, True
        history.append(rec)
        cost = new
        nxt = next_seq(cost, forbidden)
        if nxt is None:
            return seq, times, cost, True
        seq = nxt
    if not history:
        tg = [j for j in seq if scenario.sets.is_target(j)]
        raise InfeasibleColumn(f"no feasible refinement within {scenario.l_max} iterations",
                               omega_of(tg, scenario.sets))
    return list(history[-1][0]), history[-1][3], cost, False


def solve_Pr(scenario, omega: int, warm: CostMatrix, backend: str = PR_BACKEND, time_limit=None,
             frozen: bool = False):
    """Single-vehicle least-propellant route through all targets of ``omega``.

    Returns (Column, matrix). Raises InfeasibleColumn.
    """
    sets = scenario.sets
    targets = _targets_of(omega, sets)
    time_limit = scenario.milp_time_limit if time_limit is None else time_limit

    def milp_seq(cost, forbidden=()):
        am = build_Pl(scenario, cost, targets=targets, vehicles=1, objective="propellant",
                      exclude=[plan_arcs([list(f)]) for f in forbidden])
        out = solve_mip(am.model, time_limit=time_limit, backend=backend)
        if out.status == NO_SOLUTION_TIME_LIMIT:
            return "timeout"
        if not out.has_solution:
            return None
        seqs = extract_plan(out, am).sequences
        return seqs[0] if seqs else None

    first = milp_seq(warm)
    if first == "timeout":
        lab = label_search(Duals.zeros(sets.n_t, sets.n_r), set(), warm.expand(sets)[1], scenario,
                           targets=targets, require=omega)
        if lab is None:
            raise InfeasibleColumn(f"route {omega} found by neither MILP nor labeling")
        first = lab.sequence()
    if first is None:
        raise InfeasibleColumn(f"P_r infeasible for route {omega}")

    def nxt(cost, forbidden):
        s = milp_seq(cost, forbidden)
        if s == "timeout":
            return None
        if s is None:
            raise InfeasibleColumn(f"P_r infeasible for route {omega}")
        return s

    seq, legs, cost, conv = _refine_until_stable(first, scenario, warm, nxt, frozen)
    return make_column(seq, legs, scenario, omega, conv), cost


def price_and_refine(duals: Duals, scenario, warm: CostMatrix, omega_m, frozen: bool = False):
    """Labeling <-> refinement loop. Returns (Column or None, c̄_true, matrix)."""
    sets = scenario.sets

    def nxt(cost, forbidden=frozenset()):
        lab = label_search(duals, omega_m, cost.expand(sets)[1], scenario, forbidden=forbidden)
        if lab is not None:
            log.debug("label %s estimated reduced cost %.5f", lab.sequence(), lab.phi - scenario.lam * (lab.u - scenario.m_dry - lab.payload))
        return None if lab is None else lab.sequence()

    first = nxt(warm)
    if first is None:
        return None, 0.0, warm
    seq, legs, cost, conv = _refine_until_stable(first, scenario, warm, nxt, frozen)
    try:
        col = make_column(seq, legs, scenario, None, conv)
    except InfeasibleColumn as exc:
        tg = [j for j in seq if sets.is_target(j)]
        raise InfeasibleColumn(str(exc), omega_of(tg, sets)) from exc
    return col, col.reduced_cost(duals), cost


def column_generation(scenario, warm: CostMatrix | None = None, max_iter: int = CG_MAX_ITER,
                      pool_path=None, frozen: bool = False) -> MissionSolution:
    """Single-visit initialization, pricing loop, then the integer master.

    ``frozen`` treats ``warm`` as exact mass ratios and skips refinement.
    """
    t0 = time.perf_counter()
    sets = scenario.sets
    cost = init_cost_matrix(scenario) if warm is None else warm
    columns: list[Column] = []
    omega_c: set[int] = set()
    banned: set[int] = set()  # routes whose refinement proved infeasible
    for t in range(sets.n_t):
        omega = 1 << t
        omega_c.add(omega)
        try:
            col, cost = solve_Pr(scenario, omega, cost, frozen=frozen)
        except InfeasibleColumn as exc:
            log.info("single-visit route %d infeasible: %s", omega, exc)
            continue
        columns.append(col)
    if not columns:
        raise NoFeasibleColumns("every single-visit route is infeasible")
    objectives = []
    accepted_rc = []
    ended_by = "iteration_limit"
    it = 0
    for it in range(max_iter):
        lp = solve_lp(build_master(columns, scenario, relaxed=True))
        if lp.status != OPTIMAL:
            raise RuntimeError(f"restricted master returned {lp.status}")
        objectives.append(lp.objective)
        duals = master_duals(lp, scenario)
        try:
            col, rc, cost = price_and_refine(duals, scenario, cost, {c.omega for c in columns} | banned, frozen)
        except InfeasibleColumn as exc:
            log.info("pricing column infeasible: %s", exc)
            if exc.omega is None or exc.omega in banned:
                ended_by = "infeasible_column"
                break
            banned.add(exc.omega)
            continue
        if col is None:
            ended_by = "no_column"
            break
        if rc > RC_TOL and col.omega not in omega_c:
            columns.append(col)
            accepted_rc.append(rc)
            omega_c.add(col.omega)
            log.info("column %d added, true reduced cost %.5f", col.omega, rc)
        else:
            omega_c.add(col.omega)
            ended_by = "no_improving_column"
            break
    final = solve_mip(build_master(columns, scenario, relaxed=False), backend="embedded")
    chosen = [col for col, z in zip(columns, final.x) if z > 0.5] if final.has_solution else []
    routes = [build_route(c.sequence, c.leg_times, c.arrival, c.departure, c.refuel, scenario) for c in chosen]
    if pool_path is not None:
        write_column_pool(pool_path, columns)
    diag = {"ended_by": ended_by, "columns": len(columns), "banned_routes": sorted(banned),
            "master_objectives": objectives, "accepted_reduced_costs": accepted_rc,
            "integer_status": final.status, "pool": [(c.omega, c.c) for c in columns]}
    return MissionSolution("path", routes, scenario.lam, True, ended_by != "iteration_limit", it + 1,
                           time.perf_counter() - t0, diag)


def write_column_pool(path, columns) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["omega", "c", "m_p_kg", "r0_kg", "sequence"])
        for col in columns:
            w.writerow([col.omega, f"{col.c:.9f}", f"{col.m_p:.6f}", " ".join(f"{v:.6f}" for v in col.r0),
                        " ".join(str(j) for j in col.sequence)])
