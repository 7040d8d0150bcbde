"""Arc-based formulation: the linearized MILP and the MILP <-> trajectory loop."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .legs import SENTINEL_DV, CostMatrix, InfeasibleWindow, init_cost_matrix
from .mission import MissionSolution, build_route, refine_route, solve_mass_plan
from .optkernel import LinearModel, SolveOutcome, solve_mip

log = logging.getLogger(__name__)

ARC_BACKEND = "highs"


class BrokenFlow(ValueError):
    """Arc selections do not decompose into depot-to-depot paths."""


@dataclass
class ArcModel:
    """A P_l / P_r instance plus the maps from decision symbols to columns."""

    model: LinearModel
    sets: object
    x: dict[tuple[int, int, int], int]  # (i, j, k) -> column
    u: dict[int, int]
    q: dict[int, int]
    r: dict[int, int]
    y: dict[tuple[int, int], int]
    targets: list[int]

    def arcs_of(self, k: int):
        return [(i, j) for (i, j, kk) in self.x if kk == k]


def build_Pl(scenario, cost: CostMatrix, targets=None, vehicles: int | None = None,
             objective: str = "profit", symmetry: bool = True, exclude=()) -> ArcModel:
    """Linearized arc MILP over the expanded node set.

    ``targets`` restricts S_T (and V) to a subset; ``objective="propellant"``
    with ``targets`` given yields the restricted single-route problem in
    which every listed target must be visited. Arcs whose Δv is the sentinel
    are left out. ``symmetry`` adds vehicle- and copy-ordering rows.
    ``exclude`` lists arc sets (pairs (i, j), any vehicle) that may not all
    be used together again.
    """
    sets = scenario.sets
    n_dv = sets.n_dv if vehicles is None else vehicles
    starts = list(range(n_dv))
    end = {k: sets.end_depot(k) for k in starts}
    tgt = list(sets.S_T) if targets is None else sorted(targets)
    stations = list(sets.S_R)
    V = stations + tgt
    dv, mu = cost.expand(sets)
    m_max, q_max, m_dry = scenario.m_max, scenario.q_max, scenario.m_dry
    s = {j: scenario.target_payload(j) for j in tgt}
    s.update({j: 0.0 for j in stations})

    def usable(i, j):
        return dv[i, j] < SENTINEL_DV

    sense = "max" if objective == "profit" else "min"
    m = LinearModel("P_l" if objective == "profit" else "P_r", sense=sense)
    x: dict[tuple[int, int, int], int] = {}
    for k in starts:
        for j in V:
            if usable(k, j):
                x[k, j, k] = m.add_var(f"x_{k}_{j}_{k}", binary=True)
        for i in V:
            for j in V:
                if i != j and usable(i, j):
                    x[i, j, k] = m.add_var(f"x_{i}_{j}_{k}", binary=True)
        for i in V:
            if usable(i, end[k]):
                x[i, end[k], k] = m.add_var(f"x_{i}_{end[k]}_{k}", binary=True)
        x[k, end[k], k] = m.add_var(f"x_{k}_{end[k]}_{k}", binary=True)  # idle vehicle
    u = {i: m.add_var(f"u_{i}", 0.0, m_max) for i in starts + V}
    q = {i: m.add_var(f"q_{i}", 0.0, q_max) for i in V}
    r = {i: m.add_var(f"r_{i}", 0.0) for i in stations}
    y = {(k, j): m.add_var(f"y_{k}_{j}", 0.0, q_max) for k in starts for j in V}

    into: dict[int, list[int]] = {j: [] for j in V}
    out: dict[int, list[int]] = {j: [] for j in V}
    into_k: dict[tuple[int, int], list[int]] = {}
    out_k: dict[tuple[int, int], list[int]] = {}
    for (i, j, k), col in x.items():
        if j in into:
            into[j].append(col)
            into_k.setdefault((j, k), []).append(col)
        if i in out:
            out[i].append(col)
            out_k.setdefault((i, k), []).append(col)

    # objective
    sign = 1.0 if objective == "profit" else -1.0  # propellant terms are -λ(...) in profit form
    w = scenario.lam if objective == "profit" else 1.0
    if objective == "profit":
        for j in tgt:
            for col in into[j]:
                m.obj[col] += scenario.target_profit(j)
    for k in starts:
        m.obj[u[k]] += -sign * w
        for j in V:
            if (k, j, k) in x:
                m.obj[x[k, j, k]] += sign * w * m_dry
            m.obj[y[k, j]] += sign * w
    for i in stations:
        m.obj[r[i]] += -sign * w

    # visit limits
    for k in starts:
        m.add_constr({x[k, j, k]: 1.0 for j in V if (k, j, k) in x} | {x[k, end[k], k]: 1.0}, "=", 1.0,
                     f"depart_{k}")
    for j in tgt:
        m.add_constr({c: 1.0 for c in into[j]}, "=" if objective != "profit" else "<=", 1.0, f"visit_t{j}")
    for j in stations:
        m.add_constr({c: 1.0 for c in into[j]}, "<=", 1.0, f"visit_r{j}")
    # flow balance per vehicle
    for k in starts:
        for j in V:
            coeffs = {c: 1.0 for c in into_k.get((j, k), [])}
            for c in out_k.get((j, k), []):
                coeffs[c] = coeffs.get(c, 0.0) - 1.0
            m.add_constr(coeffs, "=", 0.0, f"flow_{j}_{k}")

    def big_m_pair(base: dict, const: float, switch: list[int], M: float, name: str):
        # -M(1 - Σx) <= base + const <= M(1 - Σx)
        up = dict(base)
        lo = dict(base)
        for c in switch:
            up[c] = up.get(c, 0.0) + M
            lo[c] = lo.get(c, 0.0) - M
        m.add_constr(up, "<=", M - const, name + "_ub")
        m.add_constr(lo, ">=", -M - const, name + "_lb")

    # rocket equation on arcs
    for k in starts:
        for j in V:
            if (k, j, k) in x:
                big_m_pair({u[j]: 1.0, u[k]: -mu[k, j]}, 0.0, [x[k, j, k]], m_max, f"mass_{k}_{j}")
    for i in V:
        for j in V:
            if i == j:
                continue
            cols = [x[i, j, k] for k in starts if (i, j, k) in x]
            if not cols:
                continue
            if i in s and i in tgt:
                big_m_pair({u[j]: 1.0, u[i]: -mu[i, j]}, mu[i, j] * s[i], cols, m_max, f"mass_{i}_{j}")
            else:
                big_m_pair({u[j]: 1.0, u[i]: -mu[i, j], r[i]: -mu[i, j]}, 0.0, cols, m_max, f"mass_{i}_{j}")
    for k in starts:
        e = end[k]
        for i in V:
            if (i, e, k) not in x:
                continue
            if i in tgt:
                big_m_pair({u[i]: -mu[i, e]}, m_dry + mu[i, e] * s[i], [x[i, e, k]], m_max, f"home_{i}_{k}")
            else:
                big_m_pair({u[i]: -mu[i, e], r[i]: -mu[i, e]}, m_dry, [x[i, e, k]], m_max, f"home_{i}_{k}")
    # mass bounds; the lower bound is also applied at stations
    for i in V:
        m.add_constr({u[i]: 1.0, q[i]: -1.0}, ">=", m_dry, f"minmass_{i}")
    for i in stations:
        m.add_constr({u[i]: 1.0, r[i]: 1.0}, "<=", m_max, f"maxmass_{i}")
    # payload recursion
    for i in V:
        home = [x[i, end[k], k] for k in starts if (i, end[k], k) in x]
        if home:
            big_m_pair({q[i]: 1.0}, -s[i], home, q_max, f"lastq_{i}")
        for j in V:
            if i == j:
                continue
            cols = [x[i, j, k] for k in starts if (i, j, k) in x]
            if cols:
                big_m_pair({q[i]: 1.0, q[j]: -1.0}, -s[i], cols, q_max, f"q_{i}_{j}")
    # station capacity
    for i0 in sets.S_R0:
        m.add_constr({r[j]: 1.0 for j in sets.S_R_of(i0)}, "<=", float(scenario.r_max[i0 - sets.S_R0.start]),
                     f"cap_{i0}")
    # y = q_j x_kj
    for k in starts:
        for j in V:
            m.add_constr({y[k, j]: 1.0, q[j]: -1.0}, "<=", 0.0, f"y1_{k}_{j}")
            if (k, j, k) in x:
                m.add_constr({y[k, j]: 1.0, x[k, j, k]: -q_max}, "<=", 0.0, f"y2u_{k}_{j}")
                m.add_constr({y[k, j]: 1.0, q[j]: -1.0, x[k, j, k]: -q_max}, ">=", -q_max, f"y2l_{k}_{j}")
            else:
                m.set_bounds(y[k, j], 0.0, 0.0)
    if symmetry:
        for a, b in zip(starts[:-1], starts[1:]):
            # vehicle b may depart only if vehicle a does
            m.add_constr({x[a, end[a], a]: -1.0, x[b, end[b], b]: 1.0}, ">=", 0.0, f"sym_vehicle_{b}")
        for i0 in sets.S_R0:
            copies = sets.S_R_of(i0)
            for a, b in zip(copies[:-1], copies[1:]):
                coeffs = {c: -1.0 for c in into[b]}
                for c in into[a]:
                    coeffs[c] = coeffs.get(c, 0.0) + 1.0
                m.add_constr(coeffs, ">=", 0.0, f"sym_copy_{b}")
    for n, arcs in enumerate(exclude):
        cols: dict[int, float] = {}
        for a, b in arcs:
            for k in starts:
                i = k if a == "start" else a
                j = end[k] if b == "end" else b
                if (i, j, k) in x:
                    cols[x[i, j, k]] = 1.0
        m.add_constr(cols, "<=", len(arcs) - 1, f"nogood_{n}")
    return ArcModel(m, sets, x, u, q, r, y, tgt)


def plan_arcs(sequences) -> list[tuple]:
    """Arcs of a plan with depots replaced by the tokens "start" / "end".

    Vehicle labels are interchangeable, so an excluded plan stays excluded
    under any relabelling of depots.
    """
    arcs = set()
    for seq in sequences:
        for p, (a, b) in enumerate(zip(seq[:-1], seq[1:])):
            arcs.add(("start" if p == 0 else a, "end" if p == len(seq) - 2 else b))
    return sorted(arcs, key=str)


@dataclass
class ArcPlan:
    """Per-vehicle sequences and MILP masses read from a solution."""

    sequences: list[list[int]]
    masses: list[list[float]]  # MILP u along each sequence
    refuels: list[dict[int, float]]  # position -> kg


def extract_plan(outcome: SolveOutcome, am: ArcModel, tol: float = 0.5) -> ArcPlan:
    """Follow the chosen arcs from each departing vehicle to its ending depot."""
    if not outcome.has_solution:
        raise ValueError("outcome carries no solution")
    xv = outcome.x
    sets = am.sets
    used = {key for key, col in am.x.items() if xv[col] > tol}
    used = {key for key in used if not (key[0] in sets.S_Ds and key[1] == sets.end_depot(key[0]))}
    seqs, masses, refuels = [], [], []
    consumed = set()
    starts = sorted({k for (_, _, k) in am.x})
    for k in starts:
        first = [(i, j, kk) for (i, j, kk) in used if kk == k and i == k]
        if not first:
            continue
        if len(first) > 1:
            raise BrokenFlow(f"vehicle {k} leaves its depot more than once")
        seq = [k]
        node = first[0][1]
        consumed.add(first[0])
        end = sets.end_depot(k)
        while True:
            seq.append(node)
            if node == end:
                break
            if len(seq) > sets.n_nodes + 1:
                raise BrokenFlow(f"vehicle {k} route does not close")
            nxt = [(i, j, kk) for (i, j, kk) in used if kk == k and i == node]
            if len(nxt) != 1:
                raise BrokenFlow(f"vehicle {k} has {len(nxt)} successors at node {node}")
            consumed.add(nxt[0])
            node = nxt[0][1]
        seqs.append(seq)
        masses.append([float(xv[am.u[j]]) if j in am.u else float("nan") for j in seq])
        refuels.append({p: float(xv[am.r[j]]) for p, j in enumerate(seq) if j in am.r})
    if used - consumed:
        raise BrokenFlow(f"arcs outside any depot path: {sorted(used - consumed)}")
    return ArcPlan(seqs, masses, refuels)


def matrix_delta(A: np.ndarray, B: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Max absolute entrywise difference, over ``mask`` or entries finite in both."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise ValueError("shape mismatch")
    if mask is None:
        mask = (A < SENTINEL_DV) & (B < SENTINEL_DV)
    if not np.any(mask):
        return 0.0
    return float(np.max(np.abs(A - B)[mask]))


@dataclass
class IterationRecord:
    sequences: list[list[int]]
    x_key: tuple
    refuel: list[dict[int, float]]
    dv: np.ndarray  # refined Δv snapshot over original nodes
    refined: np.ndarray  # boolean mask of arcs refined this iteration
    objective: float
    feasible: bool
    legs: list = field(default_factory=list)
    plan: list | None = None


def _x_key(seqs) -> tuple:
    return tuple(sorted(tuple(s) for s in seqs))


def refine_plan(sequences, scenario, cost: CostMatrix):
    """Refine every vehicle's legs against ``cost``; returns (matrix, legs, mask).

    Raises InfeasibleWindow when some route has no feasible refinement.
    """
    new = cost.copy()
    mask = np.zeros_like(cost.dv, dtype=bool)
    all_legs = []
    orig = scenario.sets.original
    for seq in sequences:
        got = refine_route(seq, scenario, cost)
        if got is None:
            raise InfeasibleWindow(f"route {seq} has no feasible refinement")
        legs = got[1]
        for leg in legs:
            a, b = orig(leg.src), orig(leg.dst)
            new.set_leg(a, b, leg.times)
            mask[a, b] = True
        all_legs.append([leg.times for leg in legs])
    return new, all_legs, mask


def mission_from_legs(sequences, legs, scenario, method: str):
    """Mass plan for fixed sequences and refined legs; None if mass-infeasible."""
    routes = [(seq, [lt.mu for lt in lg]) for seq, lg in zip(sequences, legs)]
    plans = solve_mass_plan(routes, scenario)
    if plans is None:
        return None
    out = []
    for seq, lg, (arr, dep, refuels) in zip(sequences, legs, plans):
        out.append(build_route(seq, lg, arr, dep, refuels, scenario))
    return out


def solve_arc(scenario, cost: CostMatrix | None = None, backend: str = ARC_BACKEND,
              time_limit: float | None = None) -> MissionSolution:
    """Iterate the arc MILP and sequential leg refinement until a repeat is seen."""
    t0 = time.perf_counter()
    time_limit = scenario.milp_time_limit if time_limit is None else time_limit
    cost = init_cost_matrix(scenario) if cost is None else cost
    history: list[IterationRecord] = []
    ended_by = "iteration_limit"
    milp_status = []
    infeasible_plans: list[list[tuple[int, int]]] = []
    ell = 0
    while ell < scenario.l_max:
        am = build_Pl(scenario, cost, exclude=infeasible_plans)
        outcome = solve_mip(am.model, time_limit=time_limit, backend=backend)
        milp_status.append(outcome.status)
        if not outcome.has_solution:
            ended_by = "no_milp_solution"
            break
        plan = extract_plan(outcome, am)
        if not plan.sequences:
            ended_by = "no_task"
            break
        feasible = True
        try:
            new_cost, legs, mask = refine_plan(plan.sequences, scenario, cost)
        except InfeasibleWindow:
            feasible = False
            new_cost, legs, mask = cost.copy(), [], np.zeros_like(cost.dv, dtype=bool)
        routes = mission_from_legs(plan.sequences, legs, scenario, "arc") if feasible else None
        if routes is None:
            feasible = False
        if not feasible:
            # a time-squeezed refinement says nothing about the arcs elsewhere
            infeasible_plans.append(plan_arcs(plan.sequences))
            new_cost = cost
        rec = IterationRecord(plan.sequences, _x_key(plan.sequences), plan.refuels, new_cost.dv.copy(), mask,
                              outcome.objective, feasible, legs, routes)
        log.info("arc iteration %d: objective %.4f, routes %s, feasible %s", ell, outcome.objective,
                 plan.sequences, feasible)
        if ell > 0 and any(h.x_key == rec.x_key and matrix_delta(rec.dv, h.dv, rec.refined & h.refined)
                           < scenario.eps_c for h in history):
            history.append(rec)
            ended_by = "cycle"
            break
        history.append(rec)
        cost = new_cost
        ell += 1
    runtime = time.perf_counter() - t0
    diag = {"ended_by": ended_by, "milp_status": milp_status, "history_length": len(history)}
    converged = ended_by in ("cycle", "no_task")
    if not history:
        return MissionSolution("arc", [], scenario.lam, True, converged, ell, runtime, diag)
    last = history[-1]
    if not last.feasible:
        return MissionSolution("arc", [], scenario.lam, False, converged, len(history), runtime, diag)
    return MissionSolution("arc", last.plan, scenario.lam, True, converged, len(history), runtime, diag)
