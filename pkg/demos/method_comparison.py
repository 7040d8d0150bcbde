"""Arc-based versus path-based planning on a few random instances.

Generates instances with the case-study depot and parameters but random
targets and stations, solves each with both methods, and prints the per-cell
mean wall time and gap to the ideal profit. The default grid is small enough
to run in a few minutes; the desk benchmark is ``--nr 1,2 --nt 4,6 --instances 5``.

    python demos/method_comparison.py [--nr 1] [--nt 3] [--instances 2]
"""

import argparse

from vrtpp.experiments import run_benchmark

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--nr", default="1")
parser.add_argument("--nt", default="3")
parser.add_argument("--instances", type=int, default=2)
parser.add_argument("--out", default="comparison_out")
args = parser.parse_args()

nr = [int(v) for v in args.nr.split(",")]
nt = [int(v) for v in args.nt.split(",")]
records, summary, parity = run_benchmark(nr, nt, args.instances, seed_base=0, out_dir=args.out)

print(f"{'n_r':>4s}{'n_t':>5s}{'method':>8s}{'mean s':>10s}{'gap %':>9s}{'not conv.':>11s}")
for row in summary:
    print(f"{row['n_r']:>4}{row['n_t']:>5}{row['method']:>8s}{float(row['time_mean_s']):10.1f}"
          f"{row['gap_mean_pct']:>9.7s}{row['non_converged']:>11}")

print("\nSame instance, both methods (gap to ideal, %):")
for p in parity:
    print(f"  {p['instance']}: arc {float(p['g_ideal_arc']):.2f}, path {float(p['g_ideal_path']):.2f}")
print(f"\nruns.csv, summary.csv and mission files are in {args.out}/")
