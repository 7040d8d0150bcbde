"""Delta-v landscape of one transfer, and where the leg optimizer lands on it.

Evaluates the two-impulse Lambert cost from Target 2 to Target 1 over a grid of
departure and transfer times, then runs the leg optimizer from a Hohmann-time
guess and from the best grid point. With matplotlib installed the grid is
drawn as a contour plot; otherwise the grid is summarised in text.

    python demos/transfer_contour.py [--png contour.png]
"""

import argparse

import numpy as np

from vrtpp.legs import dv_grid, hohmann_time, optimize_leg
from vrtpp.scenario import case_study

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--png", default="transfer_contour.png")
parser.add_argument("--n", type=int, default=60, help="grid points per axis")
args = parser.parse_args()

sc = case_study()
i, j = sc.names.index("Target 2"), sc.names.index("Target 1")
el_i, el_j = sc.nodes[i], sc.nodes[j]
deps, tofs, grid = dv_grid(el_i, el_j, (38.0, 50.0), (1.0, 10.0), args.n, args.n, sc.units)

k = np.unravel_index(np.argmin(grid), grid.shape)
print(f"grid minimum: {grid[k]:.3f} km/s at departure {deps[k[0]]:.2f} TU, transfer {tofs[k[1]]:.2f} TU")
print(f"grid median {np.median(grid):.3f} km/s, max {grid.max():.3f} km/s")

# The landscape has several basins, so the answer depends on the starting guess.
t_h = hohmann_time(el_i.a, el_j.a)
t_arr = 25.46  # arrival at Target 2 on the case-study route; service then blocks 12.6 TU
starts = {"Hohmann-time guess": (t_arr + sc.t_svc[i], t_h), "grid minimum": (deps[k[0]], tofs[k[1]])}
legs = {}
for name, guess in starts.items():
    leg = optimize_leg(el_i, el_j, t_arr, sc.t_svc[i], sc.t_svc[j], sc.t_max, guess, sc.isp, sc.g0, sc.units)
    legs[name] = leg
    print(f"optimizer from {name} ({guess[0]:.2f}, {guess[1]:.2f}): {leg.dv:.3f} km/s at departure "
          f"{leg.t_dep:.2f} TU, transfer {leg.t_tr:.2f} TU")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    print("matplotlib not installed; skipping the plot")
else:
    fig, ax = plt.subplots(figsize=(7, 5))
    cs = ax.contourf(deps, tofs, np.minimum(grid, 3.0).T, levels=30, cmap="viridis")
    fig.colorbar(cs, label="delta-v, km/s (clipped at 3)")
    for (name, leg), mk in zip(legs.items(), ("r*", "w*")):
        ax.plot(leg.t_dep, leg.t_tr, mk, ms=12, label=f"optimum from {name}")
    ax.set_xlabel("departure time, TU")
    ax.set_ylabel("transfer time, TU")
    ax.set_title("Target 2 -> Target 1")
    ax.legend()
    fig.savefig(args.png, dpi=120, bbox_inches="tight")
    print(f"plot written to {args.png}")
