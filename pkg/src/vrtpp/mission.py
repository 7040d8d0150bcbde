"""Mission plans shared by both solvers: mass bookkeeping, serialization, checks."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .legs import InfeasibleWindow, LegTimes, refine_sequence
from .optkernel import OPTIMAL, LinearModel, solve_lp


@dataclass
class LegRecord:
    src: int
    dst: int
    from_name: str
    to_name: str
    t_dep: float
    t_tr: float
    dv: float
    mu: float
    m0: float  # departure mass, after payload drop or refuel [kg]
    mf: float  # arrival mass [kg]

    def to_dict(self) -> dict:
        return {"from": self.from_name, "to": self.to_name, "t_dep_tu": self.t_dep, "t_tr_tu": self.t_tr,
                "dv_kms": self.dv, "m0_kg": self.m0, "mf_kg": self.mf}


@dataclass
class RoutePlan:
    sequence: list[int]  # duplicated indices, start depot ... end depot
    legs: list[LegRecord]
    refuel: dict[int, float]  # duplicated station index -> kg
    targets: list[int]
    payload: float
    profit: float

    @property
    def initial_propellant(self) -> float:
        return self.legs[0].m0 - self.legs[-1].mf - self.payload if self.legs else 0.0

    @property
    def total_refuel(self) -> float:
        return float(sum(self.refuel.values()))


@dataclass
class MissionSolution:
    method: str
    routes: list[RoutePlan]
    lam: float
    feasible: bool = True
    converged: bool = True
    iterations: int = 0
    runtime_s: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        if not self.feasible:
            return "Infeasible"
        if not self.routes:
            return "NoTask"
        return "Converged" if self.converged else "NotConverged"

    @property
    def trivial(self) -> bool:
        return self.feasible and not self.routes

    @property
    def total_profit(self) -> float:
        return float(sum(r.profit for r in self.routes))

    @property
    def total_initial_propellant(self) -> float:
        return float(sum(r.initial_propellant for r in self.routes))

    @property
    def total_refuel(self) -> float:
        return float(sum(r.total_refuel for r in self.routes))

    @property
    def n_vehicles(self) -> int:
        return len(self.routes)

    @property
    def n_targets(self) -> int:
        return sum(len(r.targets) for r in self.routes)

    @property
    def objective(self) -> float:
        return self.total_profit - self.lam * (self.total_initial_propellant + self.total_refuel)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "status": self.status,
            "converged": self.converged,
            "iterations": self.iterations,
            "runtime_s": self.runtime_s,
            "totals": {
                "objective": self.objective,
                "profit": self.total_profit,
                "initial_propellant_kg": self.total_initial_propellant,
                "refuel_kg": self.total_refuel,
                "vehicles": self.n_vehicles,
                "targets_visited": self.n_targets,
            },
            "vehicles": [
                {
                    "name": f"Servicer {v + 1}",
                    "sequence": [leg.from_name for leg in r.legs] + [r.legs[-1].to_name],
                    "initial_propellant_kg": r.initial_propellant,
                    "refuel_kg": r.total_refuel,
                    "legs": [leg.to_dict() for leg in r.legs],
                }
                for v, r in enumerate(self.routes)
            ],
            "diagnostics": self.diagnostics,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, default=_json_default)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["vehicle", "from", "to", "t_dep_tu", "t_tr_tu", "dv_kms", "m0_kg", "mf_kg"])
            for v, r in enumerate(self.routes):
                for leg in r.legs:
                    w.writerow([f"Servicer {v + 1}", leg.from_name, leg.to_name, f"{leg.t_dep:.6f}",
                                f"{leg.t_tr:.6f}", f"{leg.dv:.6f}", f"{leg.m0:.4f}", f"{leg.mf:.4f}"])


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def node_name(j: int, scenario) -> str:
    return scenario.names[scenario.sets.original(j)]


def remaining_payload(seq, scenario) -> list[float]:
    """Payload aboard on arrival at each position of ``seq``."""
    sets = scenario.sets
    out = [0.0] * len(seq)
    acc = 0.0
    for p in range(len(seq) - 1, -1, -1):
        if sets.is_target(seq[p]):
            acc += scenario.target_payload(seq[p])
        out[p] = acc
    return out


def replay_backward(seq, mus, refuels, scenario):
    """Arrival and departure masses along ``seq`` from m_dry at the end depot.

    ``refuels`` maps positions (station visits) to kg. Returns (arrival,
    departure) lists indexed by position; departure of the end depot is NaN.
    """
    sets = scenario.sets
    n = len(seq)
    arr = [0.0] * n
    dep = [float("nan")] * n
    arr[-1] = scenario.m_dry
    for p in range(n - 2, -1, -1):
        dep[p] = arr[p + 1] / mus[p]
        j = seq[p]
        if sets.is_target(j):
            arr[p] = dep[p] + scenario.target_payload(j)
        elif sets.is_station(j):
            arr[p] = dep[p] - refuels.get(p, 0.0)
        else:
            arr[p] = dep[p]
    return arr, dep


def solve_mass_plan(routes, scenario):
    """Least-propellant masses and refuels for fixed sequences and leg mass ratios.

    ``routes`` is a list of (sequence, mus) pairs. Returns a list of
    (arrival, departure, refuel-by-position) triples, or None when no mass
    plan satisfies the payload, capacity, bound and empty-return conditions.
    """
    sets = scenario.sets
    lp = LinearModel("mass_plan", sense="min")
    handles = []
    for v, (seq, mus) in enumerate(routes):
        q = remaining_payload(seq, scenario)
        if q[0] > scenario.q_max + 1e-9:
            return None
        u = [lp.add_var(f"u_{v}_{p}", 0.0, scenario.m_max, obj=1.0 if p == 0 else 0.0) for p in range(len(seq))]
        r = {p: lp.add_var(f"r_{v}_{p}", obj=1.0) for p, j in enumerate(seq) if sets.is_station(j)}
        for p in range(len(seq) - 1):
            j = seq[p]
            # u_{p+1} = mu (u_p - s | u_p + r | u_p)
            coeffs = {u[p + 1]: 1.0, u[p]: -mus[p]}
            rhs = 0.0
            if sets.is_target(j):
                rhs = -mus[p] * scenario.target_payload(j)
            elif j in sets.S_R:
                coeffs[r[p]] = -mus[p]
            lp.add_constr(coeffs, "=", rhs)
        lp.add_constr({u[-1]: 1.0}, "=", scenario.m_dry)
        for p in range(len(seq) - 1):
            lp.add_constr({u[p]: 1.0}, ">=", scenario.m_dry + q[p])
            if p in r:
                lp.add_constr({u[p]: 1.0, r[p]: 1.0}, "<=", scenario.m_max)
        handles.append((seq, mus, u, r))
    for i in sets.S_R0:
        cols = {r[p]: 1.0 for seq, _, _, r in handles for p in r if sets.orig_station(seq[p]) == i}
        if cols:
            lp.add_constr(cols, "<=", float(scenario.r_max[i - sets.S_R0.start]))
    out = solve_lp(lp)
    if out.status != OPTIMAL:
        return None
    x = out.x
    plans = []
    for seq, mus, u, r in handles:
        refuels = {p: max(0.0, float(x[k])) for p, k in r.items()}
        arr, dep = replay_backward(seq, mus, refuels, scenario)
        plans.append((arr, dep, refuels))
    return plans


def refine_route(seq, scenario, warm):
    """Refine ``seq`` from warm guesses and from cold ones; keep the cheaper.

    An attempt counts when its legs fit the time windows and admit a mass
    plan on their own; the one needing less propellant (initial load plus
    refuel) wins, warm on ties. Returns (matrix, refined legs) or None.
    """
    best, best_mass = None, math.inf
    for cold in (False, True):
        try:
            new, legs = refine_sequence(seq, scenario, warm, cold=cold)
        except InfeasibleWindow:
            continue
        plans = solve_mass_plan([(seq, [lg.times.mu for lg in legs])], scenario)
        if plans is None:
            continue
        _, dep, refuels = plans[0]
        mass = dep[0] + sum(refuels.values())
        if mass < best_mass - 1e-9:
            best, best_mass = (new, legs), mass
    return best


def build_route(seq, legs: list[LegTimes], arrival, departure, refuels, scenario) -> RoutePlan:
    sets = scenario.sets
    records = []
    for p, leg in enumerate(legs):
        records.append(LegRecord(seq[p], seq[p + 1], node_name(seq[p], scenario), node_name(seq[p + 1], scenario),
                                 leg.t_dep, leg.t_tr, leg.dv, leg.mu, departure[p], arrival[p + 1]))
    targets = [j for j in seq if sets.is_target(j)]
    return RoutePlan(
        sequence=list(seq),
        legs=records,
        refuel={seq[p]: v for p, v in refuels.items()},
        targets=targets,
        payload=float(sum(scenario.target_payload(j) for j in targets)),
        profit=float(sum(scenario.target_profit(j) for j in targets)),
    )


def route_residuals(route: RoutePlan, scenario) -> dict:
    """Largest violations of the per-route mass/payload/bound invariants."""
    sets = scenario.sets
    seq = route.sequence
    q = remaining_payload(seq, scenario)
    rec = 0.0
    lower = 0.0
    upper = 0.0
    for p, leg in enumerate(route.legs):
        j = seq[p]
        rec = max(rec, abs(leg.mf - leg.mu * leg.m0))
        if p > 0:
            prev_arr = route.legs[p - 1].mf
            if sets.is_target(j):
                rec = max(rec, abs(leg.m0 - (prev_arr - scenario.target_payload(j))))
            elif sets.is_station(j):
                rec = max(rec, abs(leg.m0 - (prev_arr + route.refuel.get(j, 0.0))))
            lower = max(lower, scenario.m_dry + q[p] - prev_arr)
        upper = max(upper, leg.m0 - scenario.m_max)
    final = abs(route.legs[-1].mf - scenario.m_dry) if route.legs else 0.0
    payload_monotone = all(q[p] >= q[p + 1] for p in range(len(q) - 1))
    return {"recursion": rec, "propellant_deficit": max(lower, 0.0), "over_max": max(upper, 0.0),
            "final_mass": final, "payload_monotone": payload_monotone}


def station_usage(routes, scenario) -> np.ndarray:
    """Refuel drawn from each original station across ``routes``."""
    sets = scenario.sets
    use = np.zeros(scenario.n_r)
    for r in routes:
        for j, v in r.refuel.items():
            use[sets.station_offset(j)] += v
    return use
