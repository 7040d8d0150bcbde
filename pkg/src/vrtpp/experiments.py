"""Case-study reproduction and batch comparison of the two solution methods."""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .arc import solve_arc
from .mission import MissionSolution
from .path import NoFeasibleColumns, column_generation
from .scenario import case_study, generate_instance

log = logging.getLogger(__name__)

DESK_NR = (1, 2)
DESK_NT = (4, 6)
DESK_INSTANCES = 5
FULL_NR = (1, 2, 3)
FULL_NT = (4, 6, 8, 10)
FULL_INSTANCES = 50
METHODS = ("arc", "path")


class ZeroIdealProfit(ValueError):
    pass


def gap_to_ideal(J: float, profits) -> float:
    """Percent gap between objective ``J`` and the zero-transfer-cost profit."""
    p_ideal = float(np.sum(profits))
    if p_ideal <= 0:
        raise ZeroIdealProfit("ideal profit must be positive")
    return 100.0 * (p_ideal - J) / p_ideal


@dataclass
class RunRecord:
    instance: str
    method: str
    objective: float
    profit: float
    initial_propellant_kg: float
    refuel_kg: float
    vehicles: int
    targets: int
    wall_time_s: float
    trivial: bool
    converged: bool
    g_ideal: float
    status: str
    error: str = ""


def run_method(scenario, method: str, instance: str = "case_study"):
    """Solve with one method, timing the whole call; failures become flags."""
    t0 = time.perf_counter()
    error = ""
    try:
        if method == "arc":
            sol = solve_arc(scenario)
        elif method == "path":
            try:
                sol = column_generation(scenario)
            except NoFeasibleColumns as exc:
                sol = MissionSolution("path", [], scenario.lam, True, True, 0, 0.0, {"ended_by": str(exc)})
        else:
            raise ValueError(f"unknown method {method!r}")
    except Exception as exc:  # recorded, not thrown
        log.exception("%s failed on %s", method, instance)
        sol = MissionSolution(method, [], scenario.lam, False, False, 0, 0.0, {"error": repr(exc)})
        error = repr(exc)
    wall = time.perf_counter() - t0
    sol.runtime_s = wall
    J = sol.objective if sol.feasible else 0.0
    try:
        gap = gap_to_ideal(J, scenario.profit)
    except ZeroIdealProfit:
        gap = float("nan")
    rec = RunRecord(instance, method, J, sol.total_profit, sol.total_initial_propellant, sol.total_refuel,
                    sol.n_vehicles, sol.n_targets, wall, sol.n_targets == 0, sol.converged,
                    gap, sol.status, error)
    return rec, sol


def run_case_study(out_dir=None, methods=METHODS):
    """Both methods on the bundled case study; returns {method: (record, solution)}."""
    sc = case_study()
    results = {}
    for m in methods:
        results[m] = run_method(sc, m, "case_study")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for m, (rec, sol) in results.items():
            sol.write_json(out / f"case_study_{m}.json")
            sol.write_csv(out / f"case_study_{m}.csv")
        write_records(out / "case_study_runs.csv", [r for r, _ in results.values()])
        (out / "case_study_report.txt").write_text(case_study_report(results))
    return results


def case_study_report(results) -> str:
    """Plain-text comparison table followed by per-method leg tables."""
    lines = [f"{'Result':32s}" + "".join(f"{m:>14s}" for m in results)]
    rows = [("Total profit collected", lambda r: f"{r.profit:.3f}"),
            ("Total initial propellant, kg", lambda r: f"{r.initial_propellant_kg:.3f}"),
            ("Total refueling mass, kg", lambda r: f"{r.refuel_kg:.3f}"),
            ("Vehicles used", lambda r: str(r.vehicles)),
            ("Targets visited", lambda r: str(r.targets)),
            ("Computation time, s", lambda r: f"{r.wall_time_s:.3f}"),
            ("Gap to ideal profit, %", lambda r: f"{r.g_ideal:.3f}")]
    for name, fmt in rows:
        lines.append(f"{name:32s}" + "".join(f"{fmt(rec):>14s}" for rec, _ in results.values()))
    for m, (_, sol) in results.items():
        lines.append("")
        lines.append(f"[{m}] {sol.status}")
        lines.append(leg_table(sol))
    return "\n".join(lines) + "\n"


def leg_table(sol: MissionSolution) -> str:
    out = [f"{'Segment':40s}{'Dep TU':>8s}{'Tr TU':>8s}{'dv km/s':>9s}{'m0 kg':>10s}{'mf kg':>10s}"]
    for v, r in enumerate(sol.routes):
        out.append(f"Servicer {v + 1}")
        for leg in r.legs:
            seg = f"{leg.from_name} -> {leg.to_name}"
            out.append(f"{seg:40s}{leg.t_dep:8.2f}{leg.t_tr:8.2f}{leg.dv:9.3f}{leg.m0:10.2f}{leg.mf:10.2f}")
    if not sol.routes:
        out.append("(no route: 0 targets)")
    return "\n".join(out)


# --------------------------------------------------------------------------- batches


def instance_seed(seed_base: int, n_r: int, n_t: int, k: int) -> int:
    return seed_base + 100_000 * n_r + 1_000 * n_t + k


def _run_one(args):
    seed_base, n_r, n_t, k, method, out_dir = args
    sc = generate_instance(instance_seed(seed_base, n_r, n_t, k), n_r, n_t)
    iid = f"r{n_r}_t{n_t}_{k:03d}"
    logging.getLogger("vrtpp").setLevel(logging.WARNING)
    rec, sol = run_method(sc, method, iid)
    if out_dir is not None:
        sol.write_json(Path(out_dir) / "missions" / f"{iid}_{method}.json")
    return (n_r, n_t, k, METHODS.index(method) if method in METHODS else 9), rec


def run_benchmark(n_r_list=DESK_NR, n_t_list=DESK_NT, instances: int = DESK_INSTANCES, seed_base: int = 0,
                  methods=METHODS, workers: int = 1, out_dir=None):
    """All (n_r, n_t, instance, method) runs; returns (records, summary rows, parity rows)."""
    if out_dir is not None:
        (Path(out_dir) / "missions").mkdir(parents=True, exist_ok=True)
    jobs = [(seed_base, n_r, n_t, k, m, out_dir) for n_r in n_r_list for n_t in n_t_list
            for k in range(instances) for m in methods]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    results.sort(key=lambda t: t[0])
    records = [r for _, r in results]
    summary = summarize(records)
    parity = parity_pairs(records)
    if out_dir is not None:
        out = Path(out_dir)
        write_records(out / "runs.csv", records)
        write_rows(out / "summary.csv", summary)
        write_rows(out / "parity.csv", parity, ["instance", "g_ideal_arc", "g_ideal_path"])
    return records, summary, parity


def _cell(iid: str):
    r, t, _ = iid.split("_")
    return int(r[1:]), int(t[1:])


def _mean_std(vals):
    if not vals:
        return float("nan"), float("nan")
    a = np.asarray(vals, dtype=float)
    return float(a.mean()), float(a.std(ddof=1)) if len(a) > 1 else 0.0


SUMMARY_FIELDS = ["n_r", "n_t", "method", "runs", "time_mean_s", "time_std_s", "gap_mean_pct", "gap_std_pct",
                  "trivial", "non_converged", "infeasible"]


def summarize(records):
    """Per-(n_r, n_t, method) statistics in the comparison-table layout.

    Times cover every run; gap statistics cover converged non-trivial runs.
    """
    cells: dict[tuple, list[RunRecord]] = {}
    for rec in records:
        cells.setdefault((*_cell(rec.instance), rec.method), []).append(rec)
    rows = []
    for (n_r, n_t, m), recs in sorted(cells.items(), key=lambda kv: (kv[0][0], kv[0][1], METHODS.index(kv[0][2]))):
        tm, ts = _mean_std([r.wall_time_s for r in recs])
        good = [r.g_ideal for r in recs if r.converged and not r.trivial and r.status != "Infeasible"]
        gm, gs = _mean_std(good)
        rows.append({"n_r": n_r, "n_t": n_t, "method": m, "runs": len(recs), "time_mean_s": _fmt(tm),
                     "time_std_s": _fmt(ts), "gap_mean_pct": _fmt(gm), "gap_std_pct": _fmt(gs),
                     "trivial": sum(r.trivial for r in recs),
                     "non_converged": sum((not r.converged) for r in recs),
                     "infeasible": sum(r.status == "Infeasible" for r in recs)})
    return rows


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else f"{v:.6f}"


def parity_pairs(records):
    """G_ideal pairs for instances where both methods converged to non-trivial plans."""
    by: dict[str, dict[str, RunRecord]] = {}
    for r in records:
        by.setdefault(r.instance, {})[r.method] = r
    rows = []
    for iid in sorted(by):
        d = by[iid]
        if all(m in d and d[m].converged and not d[m].trivial and d[m].status != "Infeasible" for m in METHODS):
            rows.append({"instance": iid, "g_ideal_arc": _fmt(d["arc"].g_ideal), "g_ideal_path": _fmt(d["path"].g_ideal)})
    return rows


def write_records(path, records) -> None:
    names = [f.name for f in fields(RunRecord)]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=names)
        w.writeheader()
        for r in records:
            w.writerow(asdict(r))


def read_records(path) -> list[RunRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(RunRecord(
                row["instance"], row["method"], float(row["objective"]), float(row["profit"]),
                float(row["initial_propellant_kg"]), float(row["refuel_kg"]), int(row["vehicles"]),
                int(row["targets"]), float(row["wall_time_s"]), row["trivial"] == "True",
                row["converged"] == "True", float(row["g_ideal"]), row["status"], row["error"]))
    return out


def write_rows(path, rows, names=None) -> None:
    names = names or SUMMARY_FIELDS
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=names)
        w.writeheader()
        for row in rows:
            w.writerow(row)
