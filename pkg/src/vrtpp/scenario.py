"""Problem instances: duplicated-node index sets, route encoding, JSON I/O, generator."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .astro import OrbitalElements
from .units import CanonicalUnits

GEO_A_KM = 42164.0


class SchemaError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class NodeSets:
    """Index bookkeeping for duplicated depots and stations.

    Layout: starting depots, ending depots, stations (all copies of station 0,
    then of station 1, ... repeating every ``n_r``), targets.
    """

    n_dv: int
    n_rv: int
    n_r: int
    n_t: int

    def __post_init__(self):
        if self.n_dv < 1 or self.n_rv < 1 or self.n_r < 0 or self.n_t < 1:
            raise ValueError(f"invalid counts {self}")

    @property
    def S_D0(self) -> range:
        return range(0, 1)

    @property
    def S_Dv(self) -> range:
        return range(1, self.n_dv)

    @property
    def S_Ds(self) -> range:
        return range(0, self.n_dv)

    @property
    def S_De(self) -> range:
        return range(self.n_dv, 2 * self.n_dv)

    @property
    def S_R0(self) -> range:
        return range(2 * self.n_dv, 2 * self.n_dv + self.n_r)

    @property
    def S_Rv(self) -> range:
        return range(2 * self.n_dv + self.n_r, 2 * self.n_dv + self.n_r * self.n_rv)

    @property
    def S_R(self) -> range:
        return range(2 * self.n_dv, 2 * self.n_dv + self.n_r * self.n_rv)

    @property
    def S_T(self) -> range:
        start = 2 * self.n_dv + self.n_r * self.n_rv
        return range(start, start + self.n_t)

    @property
    def V(self) -> range:
        return range(2 * self.n_dv, self.n_nodes)

    @property
    def n_nodes(self) -> int:
        return 2 * self.n_dv + self.n_r * self.n_rv + self.n_t

    def end_depot(self, k: int) -> int:
        return k + self.n_dv

    def orig_station(self, j: int) -> int:
        return (j - 2 * self.n_dv) % self.n_r + 2 * self.n_dv

    def S_R_of(self, i: int) -> list[int]:
        """All copies of original station ``i`` (``i`` in S_R0)."""
        return [i + m * self.n_r for m in range(self.n_rv)]

    def is_target(self, j: int) -> bool:
        return j in self.S_T

    def is_station(self, j: int) -> bool:
        return j in self.S_R

    def is_depot(self, j: int) -> bool:
        return 0 <= j < 2 * self.n_dv

    def original(self, j: int) -> int:
        """Position of node ``j`` in the scenario's original-node list.

        Original list: depot, stations 0..n_r-1, targets 0..n_t-1.
        """
        if self.is_depot(j):
            return 0
        if self.is_station(j):
            return 1 + self.orig_station(j) - 2 * self.n_dv
        if self.is_target(j):
            return 1 + self.n_r + (j - self.S_T.start)
        raise IndexError(j)

    def target_offset(self, j: int) -> int:
        return j - self.S_T.start

    def station_offset(self, j: int) -> int:
        """Original-station number (0..n_r-1) of any station copy ``j``."""
        return self.orig_station(j) - 2 * self.n_dv


def build_index_sets(n_dv: int, n_rv: int, n_r: int, n_t: int) -> NodeSets:
    return NodeSets(n_dv, n_rv, n_r, n_t)


def satellites_of(omega: int, sets: NodeSets) -> list[int]:
    """Target indices encoded by the bits of ``omega``."""
    if not 1 <= omega < 2**sets.n_t:
        raise ValueError(f"omega must be in [1, 2^{sets.n_t}), got {omega}")
    base = sets.S_T.start
    return [base + j for j in range(sets.n_t) if omega >> j & 1]


def omega_of(targets, sets: NodeSets) -> int:
    targets = set(targets)
    if not targets:
        raise ValueError("EmptySet: a route must contain at least one target")
    omega = 0
    for j in targets:
        if j not in sets.S_T:
            raise ValueError(f"{j} is not a target index")
        omega |= 1 << (j - sets.S_T.start)
    return omega


@dataclass
class Scenario:
    """A full problem instance.

    ``nodes`` holds original nodes only: depot, then stations, then targets.
    Masses are kg, times TU, ``isp`` s, ``g0`` m/s^2, ``lam`` 1/kg.
    """

    nodes: list[OrbitalElements]
    names: list[str]
    payload: np.ndarray
    profit: np.ndarray
    r_max: np.ndarray
    t_svc: np.ndarray
    t_max: float
    m_dry: float = 500.0
    m_max: float = 2000.0
    q_max: float = 200.0
    isp: float = 320.0
    g0: float = 9.81
    lam: float = 0.0005
    n_dv: int = 3
    n_rv: int = 3
    l_max: int = 20
    eps_c: float = 0.01
    milp_time_limit: float = 100.0
    units: CanonicalUnits = field(default_factory=CanonicalUnits)

    def __post_init__(self):
        self.payload = np.asarray(self.payload, dtype=float)
        self.profit = np.asarray(self.profit, dtype=float)
        self.r_max = np.asarray(self.r_max, dtype=float)
        self.t_svc = np.asarray(self.t_svc, dtype=float)
        self.validate()

    @property
    def n_r(self) -> int:
        return len(self.r_max)

    @property
    def n_t(self) -> int:
        return len(self.payload)

    @property
    def sets(self) -> NodeSets:
        return NodeSets(self.n_dv, self.n_rv, self.n_r, self.n_t)

    @property
    def n_orig(self) -> int:
        return 1 + self.n_r + self.n_t

    def validate(self):
        if len(self.nodes) != 1 + self.n_r + self.n_t:
            raise ValueError("node list length must be 1 + n_r + n_t")
        if len(self.profit) != self.n_t or len(self.t_svc) != self.n_orig or len(self.names) != self.n_orig:
            raise ValueError("per-node arrays have inconsistent lengths")
        if np.any(self.payload <= 0) or np.any(self.payload > self.q_max):
            raise ValueError("payloads must lie in (0, q_max]")
        if not 0 < self.m_dry <= self.m_max:
            raise ValueError("require 0 < m_dry <= m_max")
        if self.q_max <= 0 or np.any(self.r_max < 0):
            raise ValueError("capacities must be positive")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.t_max <= 0 or np.any(self.t_svc < 0):
            raise ValueError("times must be non-negative and t_max positive")
        if self.n_dv < 1 or self.n_rv < 1:
            raise ValueError("n_dv and n_rv must be at least 1")

    def elements(self, j: int) -> OrbitalElements:
        """Elements of duplicated-index node ``j``."""
        return self.nodes[self.sets.original(j)]

    def service_time(self, j: int) -> float:
        return float(self.t_svc[self.sets.original(j)])

    def target_payload(self, j: int) -> float:
        return float(self.payload[self.sets.target_offset(j)])

    def target_profit(self, j: int) -> float:
        return float(self.profit[self.sets.target_offset(j)])

    def with_overrides(self, **kw) -> "Scenario":
        return replace(copy.deepcopy(self), **kw)


DEFAULT_PARAMETERS = {
    "g0": 9.81,
    "isp_s": 320.0,
    "n_dv": 3,
    "n_rv": 3,
    "m_dry_kg": 500.0,
    "m_max_kg": 2000.0,
    "q_max_kg": 200.0,
    "r_max_kg": 1000.0,
    "t_svc_days": 2.0,
    "lambda": 0.0005,
    "l_max": 20,
    "eps_c_kms": 0.01,
    "milp_time_limit_s": 100.0,
}
DEFAULT_UNITS_JSON = {"mu_e_km3s2": 3.986e5, "du_km": 42164.0, "tu_hours": 3.809}

_NODE = {
    "type": "object",
    "required": ["a_km", "e", "i_deg", "raan_deg", "argp_deg", "M_deg"],
    "properties": {
        "name": {"type": "string"},
        "a_km": {"type": "number", "exclusiveMinimum": 0},
        "e": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "i_deg": {"type": "number", "minimum": 0, "maximum": 180},
        "raan_deg": {"type": "number"},
        "argp_deg": {"type": "number"},
        "M_deg": {"type": "number"},
        "t_svc_days": {"type": "number", "minimum": 0},
    },
}
_STATION = copy.deepcopy(_NODE)
_STATION["properties"]["r_max_kg"] = {"type": "number", "minimum": 0}
_TARGET = copy.deepcopy(_NODE)
_TARGET["required"] = _NODE["required"] + ["payload_kg", "profit"]
_TARGET["properties"]["payload_kg"] = {"type": "number", "exclusiveMinimum": 0}
_TARGET["properties"]["profit"] = {"type": "number", "minimum": 0}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["parameters", "depot", "stations", "targets"],
    "properties": {
        "units": {
            "type": "object",
            "properties": {k: {"type": "number", "exclusiveMinimum": 0} for k in DEFAULT_UNITS_JSON},
        },
        "parameters": {
            "type": "object",
            "required": ["t_max_tu"],
            "properties": {
                "t_max_tu": {"type": "number", "exclusiveMinimum": 0},
                "g0": {"type": "number", "exclusiveMinimum": 0},
                "isp_s": {"type": "number", "exclusiveMinimum": 0},
                "n_dv": {"type": "integer", "minimum": 1},
                "n_rv": {"type": "integer", "minimum": 1},
                "m_dry_kg": {"type": "number", "exclusiveMinimum": 0},
                "m_max_kg": {"type": "number", "exclusiveMinimum": 0},
                "q_max_kg": {"type": "number", "exclusiveMinimum": 0},
                "r_max_kg": {"type": "number", "minimum": 0},
                "t_svc_days": {"type": "number", "minimum": 0},
                "lambda": {"type": "number", "exclusiveMinimum": 0},
                "l_max": {"type": "integer", "minimum": 1},
                "eps_c_kms": {"type": "number", "exclusiveMinimum": 0},
                "milp_time_limit_s": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "depot": _NODE,
        "stations": {"type": "array", "items": _STATION},
        "targets": {"type": "array", "items": _TARGET, "minItems": 1},
    },
}


def _node_from_json(d: dict, units: CanonicalUnits) -> OrbitalElements:
    return OrbitalElements.from_degrees(d["a_km"], d["e"], d["i_deg"], d["raan_deg"], d["argp_deg"], d["M_deg"], units)


def scenario_from_dict(data: dict) -> Scenario:
    validator = jsonschema.Draft7Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise SchemaError(path, err.message)

    u = {**DEFAULT_UNITS_JSON, **data.get("units", {})}
    p = {**DEFAULT_PARAMETERS, **data["parameters"]}
    units = CanonicalUnits(mu_e=u["mu_e_km3s2"], du=u["du_km"], tu=u["tu_hours"], g0=p["g0"])

    depot, stations, targets = data["depot"], data["stations"], data["targets"]
    raw = [depot, *stations, *targets]
    nodes = [_node_from_json(d, units) for d in raw]
    names = [depot.get("name", "Depot")]
    names += [s.get("name", f"Station {k + 1}") for k, s in enumerate(stations)]
    names += [t.get("name", f"Target {k + 1}") for k, t in enumerate(targets)]
    t_svc = [units.days_to_tu(depot.get("t_svc_days", 0.0))]
    t_svc += [units.days_to_tu(d.get("t_svc_days", p["t_svc_days"])) for d in (*stations, *targets)]
    try:
        return Scenario(
            nodes=nodes,
            names=names,
            payload=[t["payload_kg"] for t in targets],
            profit=[t["profit"] for t in targets],
            r_max=[s.get("r_max_kg", p["r_max_kg"]) for s in stations],
            t_svc=t_svc,
            t_max=p["t_max_tu"],
            m_dry=p["m_dry_kg"],
            m_max=p["m_max_kg"],
            q_max=p["q_max_kg"],
            isp=p["isp_s"],
            g0=p["g0"],
            lam=p["lambda"],
            n_dv=p["n_dv"],
            n_rv=p["n_rv"],
            l_max=p["l_max"],
            eps_c=p["eps_c_kms"],
            milp_time_limit=p["milp_time_limit_s"],
            units=units,
        )
    except ValueError as exc:
        raise SchemaError("parameters", str(exc)) from exc


def _node_to_json(el: OrbitalElements, name: str, units: CanonicalUnits) -> dict:
    return {
        "name": name,
        "a_km": el.a * units.du,
        "e": el.e,
        "i_deg": math.degrees(el.i),
        "raan_deg": math.degrees(el.raan),
        "argp_deg": math.degrees(el.argp),
        "M_deg": math.degrees(el.M0),
    }


def scenario_to_dict(sc: Scenario) -> dict:
    u = sc.units
    days = lambda tu: tu * u.tu / 24.0  # noqa: E731
    depot = _node_to_json(sc.nodes[0], sc.names[0], u)
    depot["t_svc_days"] = days(sc.t_svc[0])
    stations = []
    for k in range(sc.n_r):
        d = _node_to_json(sc.nodes[1 + k], sc.names[1 + k], u)
        d["r_max_kg"] = float(sc.r_max[k])
        d["t_svc_days"] = days(sc.t_svc[1 + k])
        stations.append(d)
    targets = []
    for k in range(sc.n_t):
        idx = 1 + sc.n_r + k
        d = _node_to_json(sc.nodes[idx], sc.names[idx], u)
        d["payload_kg"] = float(sc.payload[k])
        d["profit"] = float(sc.profit[k])
        d["t_svc_days"] = days(sc.t_svc[idx])
        targets.append(d)
    return {
        "units": {"mu_e_km3s2": u.mu_e, "du_km": u.du, "tu_hours": u.tu},
        "parameters": {
            "t_max_tu": sc.t_max,
            "g0": sc.g0,
            "isp_s": sc.isp,
            "n_dv": sc.n_dv,
            "n_rv": sc.n_rv,
            "m_dry_kg": sc.m_dry,
            "m_max_kg": sc.m_max,
            "q_max_kg": sc.q_max,
            "lambda": sc.lam,
            "l_max": sc.l_max,
            "eps_c_kms": sc.eps_c,
            "milp_time_limit_s": sc.milp_time_limit,
        },
        "depot": depot,
        "stations": stations,
        "targets": targets,
    }


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError("<root>", f"invalid JSON: {exc}") from exc
    return scenario_from_dict(data)


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2) + "\n")


def case_study() -> Scenario:
    """The bundled two-station, five-target geosynchronous servicing case."""
    text = resources.files("vrtpp.data").joinpath("case_study.json").read_text()
    return scenario_from_dict(json.loads(text))


def generate_instance(seed: int, n_r: int, n_t: int, t_max: float = 100.0) -> Scenario:
    """Random geosynchronous instance; stations and targets share the orbital ranges.

    The depot is the case-study depot. Deterministic per ``seed``.
    """
    rng = np.random.default_rng(seed)
    base = case_study()
    units = base.units

    def random_node():
        return OrbitalElements.from_degrees(
            GEO_A_KM,
            rng.uniform(0.0, 0.01),
            rng.uniform(0.0, 30.0),
            rng.uniform(0.0, 360.0),
            rng.uniform(0.0, 360.0),
            rng.uniform(0.0, 360.0),
            units,
        )

    stations = [random_node() for _ in range(n_r)]
    targets = [random_node() for _ in range(n_t)]
    payload = rng.uniform(50.0, 100.0, size=n_t)
    profit = rng.integers(1, 4, size=n_t).astype(float)
    svc = units.days_to_tu(DEFAULT_PARAMETERS["t_svc_days"])
    return Scenario(
        nodes=[base.nodes[0], *stations, *targets],
        names=["Depot"] + [f"Station {k + 1}" for k in range(n_r)] + [f"Target {k + 1}" for k in range(n_t)],
        payload=payload,
        profit=profit,
        r_max=np.full(n_r, DEFAULT_PARAMETERS["r_max_kg"]),
        t_svc=np.array([0.0] + [svc] * (n_r + n_t)),
        t_max=t_max,
        units=units,
    )
