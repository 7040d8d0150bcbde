"""Small random instances with a frozen (hand-made) mass-ratio matrix."""

from __future__ import annotations

import numpy as np

from vrtpp.legs import CostMatrix
from vrtpp.scenario import generate_instance


def frozen_instance(seed: int, n_r: int, n_t: int, n_rv: int = 1, n_dv: int = 2, dv_range=(0.1, 1.2)):
    """(scenario, CostMatrix) whose Δv entries are random and never refined."""
    rng = np.random.default_rng(10_000 + seed)
    sc = generate_instance(seed, n_r, n_t).with_overrides(n_rv=n_rv, n_dv=n_dv)
    n = sc.n_orig
    cm = CostMatrix.empty(n, sc.isp, sc.g0)
    dv = rng.uniform(*dv_range, size=(n, n))
    np.fill_diagonal(dv, 50.0)
    cm.dv[:] = dv
    cm.t_tr[:] = 1.0
    cm.status[:] = 1
    np.fill_diagonal(cm.status, 0)
    return sc, cm


def random_duals(rng, sc, priced_capacity: bool):
    from vrtpp.path import Duals

    w1 = rng.uniform(0.0, 1.0, sc.n_t) * sc.profit
    w2 = rng.uniform(0.0, 0.05, sc.n_r)
    w3 = float(rng.uniform(0.0, 0.3))
    w4 = rng.uniform(0.0, 2e-4, sc.n_r) if priced_capacity else np.zeros(sc.n_r)
    return Duals(w1, w2, w3, w4)


def random_lp(rng, n: int, m: int, sense: str = "max"):
    """Feasible, bounded LP over x >= 0 with a mix of <=, >= and = rows.

    Returns (model, A, b, rels, c) so tests can form the dual by hand.
    """
    from vrtpp.optkernel import LinearModel

    A = rng.uniform(0.1, 2.0, size=(m, n))
    x_feas = rng.uniform(0.0, 1.0, n)
    rels = rng.choice(["<=", "<=", ">=", "="], size=m)
    rels[0] = "<="  # keeps a max problem bounded since A > 0
    lhs = A @ x_feas
    b = np.where(rels == "<=", lhs + rng.uniform(0.1, 1.0, m), np.where(rels == ">=", lhs - rng.uniform(0.0, 0.5, m), lhs))
    c = rng.uniform(-1.0, 2.0, n) if sense == "max" else rng.uniform(0.1, 2.0, n)
    model = LinearModel(sense=sense)
    for k in range(n):
        model.add_var(f"x{k}", obj=c[k])
    for i in range(m):
        model.add_constr({k: A[i, k] for k in range(n)}, str(rels[i]), float(b[i]))
    return model, A, b, rels, c


def random_binary_model(rng, n: int, m: int):
    """Max c x over binaries with random mixed-sign <= rows; returns (model, c, A, b)."""
    from vrtpp.optkernel import LinearModel

    c = rng.integers(-3, 10, n).astype(float) + rng.uniform(0, 0.1, n)
    A = rng.integers(-2, 8, size=(m, n)).astype(float)
    b = rng.uniform(0.3, 0.6) * np.maximum(A, 0).sum(axis=1)
    model = LinearModel(sense="max")
    for k in range(n):
        model.add_var(f"y{k}", binary=True, obj=c[k])
    for i in range(m):
        model.add_constr({k: A[i, k] for k in range(n)}, "<=", float(b[i]))
    return model, c, A, b
