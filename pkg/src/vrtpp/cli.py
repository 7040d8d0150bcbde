"""Command-line entry point: ``vrtpp solve|gen|contour|bench``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from . import experiments
from .legs import dv_grid, write_grid_csv
from .scenario import SchemaError, case_study, generate_instance, load_scenario, save_scenario, scenario_from_dict, \
    scenario_to_dict

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2

# keys applied to every station / target node instead of the parameter block
_NODE_KEYS = {"r_max_kg": ("stations",), "t_svc_days": ("stations", "targets"), "profit": ("targets",),
              "payload_kg": ("targets",)}


def parse_override(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"override must look like key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_overrides(scenario, overrides):
    """Re-validate ``scenario`` with parameter overrides (JSON parameter names)."""
    if not overrides:
        return scenario
    data = scenario_to_dict(scenario)
    for key, value in overrides:
        if key in _NODE_KEYS:
            for group in _NODE_KEYS[key]:
                for node in data[group]:
                    node[key] = value
        elif key in data["parameters"] or key in ("r_max_kg", "t_svc_days"):
            data["parameters"][key] = value
        else:
            raise SchemaError(f"parameters/{key}", "unknown parameter")
    return scenario_from_dict(data)


def _scenario(args):
    sc = case_study() if args.scenario in (None, "case_study") else load_scenario(args.scenario)
    return apply_overrides(sc, args.override)


def cmd_solve(args) -> int:
    sc = _scenario(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    methods = ("arc", "path") if args.method == "both" else (args.method,)
    stem = Path(args.scenario).stem if args.scenario not in (None, "case_study") else "case_study"
    status = EXIT_OK
    for m in methods:
        rec, sol = experiments.run_method(sc, m, stem)
        sol.write_json(out / f"{stem}_{m}.json")
        sol.write_csv(out / f"{stem}_{m}.csv")
        print(f"[{m}] status={sol.status} objective={sol.objective:.4f} profit={sol.total_profit:g} "
              f"targets={sol.n_targets} vehicles={sol.n_vehicles} "
              f"propellant={sol.total_initial_propellant:.2f} kg refuel={sol.total_refuel:.2f} kg "
              f"time={rec.wall_time_s:.1f} s")
        print(experiments.leg_table(sol))
        if rec.error:
            print(f"[{m}] error: {rec.error}", file=sys.stderr)
            status = max(status, EXIT_ERROR) if status != EXIT_INFEASIBLE else status
        elif not sol.feasible:
            status = EXIT_INFEASIBLE
    return status


def cmd_gen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k in range(args.count):
        seed = args.seed + k
        sc = apply_overrides(generate_instance(seed, args.nr, args.nt, args.tmax), args.override)
        path = out / f"instance_r{args.nr}_t{args.nt}_s{seed}.json"
        save_scenario(sc, path)
        print(path)
    return EXIT_OK


def _node_index(sc, name: str) -> int:
    for k, n in enumerate(sc.names):
        if n == name:
            return k
    raise SchemaError("nodes", f"no node named {name!r}; choose from {sc.names}")


def _range(text: str):
    lo, hi = (float(v) for v in text.split(":"))
    return lo, hi


def cmd_contour(args) -> int:
    sc = _scenario(args)
    a, b = _node_index(sc, args.src), _node_index(sc, args.dst)
    deps, tofs, grid = dv_grid(sc.nodes[a], sc.nodes[b], _range(args.dep), _range(args.tof), args.n, args.m, sc.units)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"contour_{args.src}_{args.dst}.csv".replace(" ", "_")
    write_grid_csv(path, deps, tofs, grid)
    print(f"{path}: min dv {grid.min():.4f} km/s over {grid.size} points")
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.full:
        nr, nt, count = experiments.FULL_NR, experiments.FULL_NT, experiments.FULL_INSTANCES
    else:
        nr, nt, count = experiments.DESK_NR, experiments.DESK_NT, experiments.DESK_INSTANCES
    nr = tuple(int(v) for v in args.nr.split(",")) if args.nr else nr
    nt = tuple(int(v) for v in args.nt.split(",")) if args.nt else nt
    count = args.instances or count
    _, summary, _ = experiments.run_benchmark(nr, nt, count, args.seed, experiments.METHODS, args.workers, args.out)
    for row in summary:
        print(", ".join(f"{k}={v}" for k, v in row.items()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="runs", help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--override", action="append", type=parse_override, default=[], metavar="KEY=VALUE",
                        help="scenario parameter override, e.g. lambda=0.001 (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="vrtpp", description="Servicing-mission routing with partial refueling.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="solve a scenario")
    s.add_argument("--scenario", default=None, help="scenario JSON (default: bundled case study)")
    s.add_argument("--method", choices=("arc", "path", "both"), default="path")
    s.set_defaults(func=cmd_solve)

    g = sub.add_parser("gen", parents=[common], help="generate random instances")
    g.add_argument("--nr", type=int, required=True)
    g.add_argument("--nt", type=int, required=True)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--tmax", type=float, default=100.0)
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("contour", parents=[common], help="Δv grid over departure and transfer time")
    c.add_argument("--scenario", default=None)
    c.add_argument("--from", dest="src", required=True, help="origin node name")
    c.add_argument("--to", dest="dst", required=True, help="destination node name")
    c.add_argument("--dep", default="0:25", help="departure range lo:hi [TU]")
    c.add_argument("--tof", default="0.5:12", help="transfer-time range lo:hi [TU]")
    c.add_argument("--n", type=int, default=60)
    c.add_argument("--m", type=int, default=60)
    c.set_defaults(func=cmd_contour)

    b = sub.add_parser("bench", parents=[common], help="compare both methods over random instances")
    b.add_argument("--full", action="store_true", help="50 instances x n_t {4,6,8,10} x n_r {1,2,3}")
    b.add_argument("--nr", default=None, help="comma list of station counts")
    b.add_argument("--nt", default=None, help="comma list of target counts")
    b.add_argument("--instances", type=int, default=None)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    warnings.filterwarnings("ignore", category=RuntimeWarning, module="scipy")
    try:
        return args.func(args)
    except (SchemaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
