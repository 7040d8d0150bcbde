"""Linear and mixed-binary programming.

The embedded engine is a dense two-phase revised simplex (with dual
extraction) under a best-bound branch-and-bound. ``HighsSolver`` wraps
SciPy's HiGHS interface behind the same contract so large formulations can
be handed to an external engine without touching the model builders.
"""

from __future__ import annotations

import heapq
import math
import re
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

FEAS_TOL = 1e-7
INT_TOL = 1e-6
PIVOT_TOL = 1e-9
BLAND_AFTER = 1000

OPTIMAL = "Optimal"
FEASIBLE_TIME_LIMIT = "FeasibleTimeLimit"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"
NO_SOLUTION_TIME_LIMIT = "NoSolutionTimeLimit"


class SolverError(RuntimeError):
    pass


@dataclass
class Variable:
    name: str
    lb: float = 0.0
    ub: float = math.inf
    binary: bool = False


@dataclass
class Constraint:
    coeffs: dict[int, float]
    rel: str
    rhs: float
    name: str


class LinearModel:
    """Variables, a linear objective and linear rows.

    >>> m = LinearModel(sense="max")
    >>> x = m.add_var("x", obj=1.0)
    >>> _ = m.add_constr({x: 1.0}, "<=", 3.0)
    """

    def __init__(self, name: str = "model", sense: str = "max"):
        if sense not in ("max", "min"):
            raise ValueError(sense)
        self.name = name
        self.sense = sense
        self.variables: list[Variable] = []
        self.obj: list[float] = []
        self.constraints: list[Constraint] = []
        self.obj_constant = 0.0
        self._names: dict[str, int] = {}

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_constrs(self) -> int:
        return len(self.constraints)

    @property
    def binaries(self) -> list[int]:
        return [k for k, v in enumerate(self.variables) if v.binary]

    def var_index(self, name: str) -> int:
        return self._names[name]

    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf, binary: bool = False, obj: float = 0.0) -> int:
        if name in self._names:
            raise ValueError(f"duplicate variable name {name!r}")
        if binary:
            lb, ub = max(0.0, lb), min(1.0, ub)
        if lb > ub:
            raise ValueError(f"empty bounds on {name}")
        self._names[name] = len(self.variables)
        self.variables.append(Variable(name, lb, ub, binary))
        self.obj.append(float(obj))
        return len(self.variables) - 1

    def add_constr(self, coeffs: dict[int, float], rel: str, rhs: float, name: str | None = None) -> int:
        if rel not in ("<=", ">=", "="):
            raise ValueError(f"unknown relation {rel!r}")
        for k in coeffs:
            if not 0 <= k < self.n_vars:
                raise IndexError(f"constraint references undeclared variable {k}")
        clean = {k: float(v) for k, v in coeffs.items() if v != 0.0}
        self.constraints.append(Constraint(clean, rel, float(rhs), name or f"c{len(self.constraints)}"))
        return len(self.constraints) - 1

    def set_bounds(self, k: int, lb: float, ub: float) -> None:
        self.variables[k].lb = lb
        self.variables[k].ub = ub

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([v.lb for v in self.variables], dtype=float),
                np.array([v.ub for v in self.variables], dtype=float))

    def matrix(self) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        for i, c in enumerate(self.constraints):
            for k, v in c.coeffs.items():
                rows.append(i)
                cols.append(k)
                vals.append(v)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_constrs, self.n_vars))

    def objective_value(self, x) -> float:
        return float(np.dot(self.obj, x)) + self.obj_constant

    def max_violation(self, x) -> float:
        """Largest bound or row violation of point ``x``."""
        x = np.asarray(x, dtype=float)
        lb, ub = self.bounds()
        worst = float(max(0.0, np.max(lb - x, initial=0.0), np.max(x - ub, initial=0.0)))
        for c in self.constraints:
            lhs = sum(v * x[k] for k, v in c.coeffs.items())
            if c.rel == "<=":
                worst = max(worst, lhs - c.rhs)
            elif c.rel == ">=":
                worst = max(worst, c.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - c.rhs))
        return worst

    def write_lp(self, path) -> None:
        """Dump in CPLEX LP text format for cross-checking with external solvers."""
        with open(path, "w") as fh:
            fh.write(self.to_lp_string())

    def to_lp_string(self) -> str:
        names = [_lp_name(v.name, k) for k, v in enumerate(self.variables)]

        def expr(coeffs):
            if not coeffs:
                return "0 " + names[0] if names else "0"
            parts = []
            for k, v in sorted(coeffs.items()):
                sign = "-" if v < 0 else "+"
                parts.append(f"{sign} {abs(v):.12g} {names[k]}")
            s = " ".join(parts)
            return s[2:] if s.startswith("+ ") else s

        out = [f"\\ {self.name}", "Maximize" if self.sense == "max" else "Minimize"]
        out.append(" obj: " + expr({k: c for k, c in enumerate(self.obj) if c != 0.0}))
        out.append("Subject To")
        for i, c in enumerate(self.constraints):
            out.append(f" {_lp_name(c.name, i, 'r')}: {expr(c.coeffs)} {c.rel} {c.rhs:.12g}")
        out.append("Bounds")
        for k, v in enumerate(self.variables):
            if v.binary:
                continue
            lo = "-inf" if v.lb == -math.inf else f"{v.lb:.12g}"
            hi = "+inf" if v.ub == math.inf else f"{v.ub:.12g}"
            out.append(f" {lo} <= {names[k]} <= {hi}")
        bins = [names[k] for k in self.binaries]
        if bins:
            out.append("Binaries")
            out.append(" " + " ".join(bins))
        out.append("End")
        return "\n".join(out) + "\n"


def _lp_name(name: str, k: int, prefix: str = "v") -> str:
    s = re.sub(r"[^A-Za-z0-9_.]", "_", name)
    if not s or s[0].isdigit() or s[0] == ".":
        s = f"{prefix}{k}_{s}"
    return s


@dataclass
class SolveOutcome:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    duals: np.ndarray | None = None
    bound: float | None = None
    nodes: int = 0
    info: dict = field(default_factory=dict)

    @property
    def has_solution(self) -> bool:
        return self.x is not None and self.status in (OPTIMAL, FEASIBLE_TIME_LIMIT)


# --------------------------------------------------------------------------- simplex


class _StandardForm:
    """min c^T z, A z = b, z >= 0, b >= 0, built from a LinearModel and bound overrides."""

    def __init__(self, model: LinearModel, lb: np.ndarray, ub: np.ndarray):
        n = model.n_vars
        self.n = n
        self.sign = -1.0 if model.sense == "max" else 1.0
        c = self.sign * np.asarray(model.obj, dtype=float)

        # x_k = shift_k + z_pos - z_neg ; z_neg only for free variables
        cols: list[tuple[int, float]] = []  # (original var, multiplier)
        shift = np.zeros(n)
        for k in range(n):
            lo, hi = lb[k], ub[k]
            if math.isfinite(lo):
                shift[k] = lo
                cols.append((k, 1.0))
            elif math.isfinite(hi):
                shift[k] = hi
                cols.append((k, -1.0))
            else:
                cols.append((k, 1.0))
                cols.append((k, -1.0))
        self.cols = cols
        self.shift = shift

        rows: list[dict[int, float]] = []
        rels: list[str] = []
        rhs: list[float] = []
        self.user_rows = model.n_constrs
        for con in model.constraints:
            rows.append(con.coeffs)
            rels.append(con.rel)
            rhs.append(con.rhs)
        # finite second bound becomes a row
        for k in range(n):
            lo, hi = lb[k], ub[k]
            if math.isfinite(lo) and math.isfinite(hi):
                rows.append({k: 1.0})
                rels.append("<=")
                rhs.append(hi)
        m = len(rows)
        nz = len(cols)
        A = np.zeros((m, nz))
        colmap: dict[int, list[tuple[int, float]]] = {}
        for j, (k, mult) in enumerate(cols):
            colmap.setdefault(k, []).append((j, mult))
        b = np.array(rhs, dtype=float)
        for i, coeffs in enumerate(rows):
            for k, v in coeffs.items():
                for j, mult in colmap[k]:
                    A[i, j] += v * mult
                b[i] -= v * shift[k]
        cz = np.array([c[k] * mult for k, mult in cols])
        self.obj_shift = float(np.dot(c, shift))

        # slacks
        slack_cols = []
        for i, rel in enumerate(rels):
            if rel == "<=":
                slack_cols.append((i, 1.0))
            elif rel == ">=":
                slack_cols.append((i, -1.0))
        S = np.zeros((m, len(slack_cols)))
        for s, (i, v) in enumerate(slack_cols):
            S[i, s] = v
        A = np.hstack([A, S])
        cz = np.concatenate([cz, np.zeros(len(slack_cols))])
        self.row_slack = {i: nz + s for s, (i, _) in enumerate(slack_cols)}
        flip = np.where(b < 0, -1.0, 1.0)
        self.flip = flip
        self.A = A * flip[:, None]
        self.b = b * flip
        self.c = cz
        self.m = m
        self.nz = nz

    def recover(self, z: np.ndarray) -> np.ndarray:
        x = self.shift.copy()
        for j, (k, mult) in enumerate(self.cols):
            x[k] += mult * z[j]
        return x


def _revised_simplex(A, b, c, basis, max_iter=50000):
    """Primal revised simplex from a feasible ``basis``.

    Returns (status, basis, x_B, y) with y = c_B B^-1.
    """
    m, ncol = A.shape
    basis = list(basis)
    degenerate = 0
    for _ in range(max_iter):
        B = A[:, basis]
        try:
            lu_xb = np.linalg.solve(B, b)
            y = np.linalg.solve(B.T, c[basis])
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular basis") from exc
        d = c - A.T @ y
        d[basis] = 0.0
        use_bland = degenerate >= BLAND_AFTER
        if use_bland:
            cand = np.nonzero(d < -PIVOT_TOL)[0]
            if cand.size == 0:
                return "optimal", basis, lu_xb, y
            q = int(cand[0])
        else:
            q = int(np.argmin(d))
            if d[q] >= -PIVOT_TOL:
                return "optimal", basis, lu_xb, y
        col = np.linalg.solve(B, A[:, q])
        pos = col > PIVOT_TOL
        if not np.any(pos):
            return "unbounded", basis, lu_xb, y
        ratios = np.full(m, math.inf)
        ratios[pos] = np.maximum(lu_xb[pos], 0.0) / col[pos]
        tmin = ratios.min()
        ties = np.nonzero(ratios <= tmin + 1e-12)[0]
        # lowest-index leaving variable among ties (Bland-compatible)
        r = int(min(ties, key=lambda i: basis[i]))
        if tmin <= 1e-12:
            degenerate += 1
        basis[r] = q
    raise SolverError("simplex iteration limit reached")


def _simplex_solve(sf: _StandardForm):
    m, ncol = sf.A.shape
    if m == 0:
        if np.any(sf.c < -PIVOT_TOL):
            return UNBOUNDED, None, None
        return OPTIMAL, np.zeros(ncol), np.zeros(0)
    # phase I: artificials on rows without a usable +1 slack
    basis = []
    art_rows = []
    for i in range(m):
        s = sf.row_slack.get(i)
        if s is not None and sf.A[i, s] > 0:
            basis.append(s)
        else:
            basis.append(None)
            art_rows.append(i)
    A1 = sf.A
    if art_rows:
        art = np.zeros((m, len(art_rows)))
        for t, i in enumerate(art_rows):
            art[i, t] = 1.0
            basis[i] = ncol + t
        A1 = np.hstack([sf.A, art])
        c1 = np.concatenate([np.zeros(ncol), np.ones(len(art_rows))])
        status, basis, xb, _ = _revised_simplex(A1, sf.b, c1, basis)
        if float(np.dot(c1[basis], xb)) > 1e-8 * max(1.0, float(np.abs(sf.b).max())):
            return INFEASIBLE, None, None
        # drive remaining artificials out of the basis
        for r in range(m):
            if basis[r] >= ncol:
                B = A1[:, basis]
                row = np.linalg.solve(B.T, np.eye(m)[r])
                alpha = row @ sf.A
                cands = [j for j in range(ncol) if j not in basis and abs(alpha[j]) > 1e-9]
                if cands:
                    basis[r] = cands[0]
        keep = [r for r in range(m) if basis[r] < ncol]
        if len(keep) < m:
            # redundant rows: drop them, dual for those rows is zero
            A2, b2 = sf.A[keep], sf.b[keep]
            bas2 = [basis[r] for r in keep]
            status, bas2, xb, y2 = _revised_simplex(A2, b2, sf.c, bas2)
            if status == "unbounded":
                return UNBOUNDED, None, None
            y = np.zeros(m)
            y[keep] = y2
            z = np.zeros(ncol)
            z[bas2] = xb
            return OPTIMAL, z, y
    status, basis, xb, y = _revised_simplex(sf.A, sf.b, sf.c, basis)
    if status == "unbounded":
        return UNBOUNDED, None, None
    z = np.zeros(ncol)
    z[basis] = xb
    return OPTIMAL, z, y


def _embedded_lp(model: LinearModel, lb=None, ub=None) -> SolveOutcome:
    if lb is None or ub is None:
        lb, ub = model.bounds()
    if np.any(lb > ub + FEAS_TOL):
        return SolveOutcome(INFEASIBLE)
    sf = _StandardForm(model, lb, ub)
    status, z, y = _simplex_solve(sf)
    if status != OPTIMAL:
        return SolveOutcome(status)
    x = sf.recover(z)
    # shadow prices d(objective)/d(rhs) in the model's own sense
    duals = (sf.flip[: sf.user_rows] * y[: sf.user_rows]) * sf.sign
    obj = model.objective_value(x)
    return SolveOutcome(OPTIMAL, x, obj, duals)


# --------------------------------------------------------------------------- backends


class EmbeddedSolver:
    """Dense revised simplex + best-bound branch-and-bound on binaries."""

    name = "embedded"

    def solve_lp(self, model: LinearModel) -> SolveOutcome:
        return _embedded_lp(model)

    def solve_mip(self, model: LinearModel, time_limit: float = math.inf) -> SolveOutcome:
        bins = model.binaries
        lb0, ub0 = model.bounds()
        if not bins:
            return _embedded_lp(model, lb0, ub0)
        sgn = 1.0 if model.sense == "max" else -1.0  # work in max
        start = time.monotonic()
        root = _embedded_lp(model, lb0, ub0)
        if root.status == INFEASIBLE:
            return SolveOutcome(INFEASIBLE, nodes=1)
        if root.status == UNBOUNDED:
            return SolveOutcome(UNBOUNDED, nodes=1)
        incumbent_x, incumbent = None, -math.inf
        counter = 0
        heap = [(-sgn * root.objective, counter, lb0, ub0, root)]
        nodes = 0
        timed_out = False
        while heap:
            if time.monotonic() - start > time_limit:
                timed_out = True
                break
            negbound, _, lb, ub, sol = heapq.heappop(heap)
            if -negbound <= incumbent + 1e-9:
                continue
            nodes += 1
            x = sol.x
            frac = [(abs(x[k] - round(x[k])), k) for k in bins if abs(x[k] - round(x[k])) > INT_TOL]
            if not frac:
                val = sgn * sol.objective
                if val > incumbent + 1e-12:
                    incumbent, incumbent_x = val, x.copy()
                    for k in bins:
                        incumbent_x[k] = round(incumbent_x[k])
                continue
            # most fractional, lowest index on ties
            best = max(frac, key=lambda t: (min(t[0], 1.0 - t[0]) if t[0] <= 1 else 0.0, -t[1]))
            k = best[1]
            for val in (math.floor(x[k]), math.ceil(x[k])):
                lbc, ubc = lb.copy(), ub.copy()
                lbc[k] = ubc[k] = val
                child = _embedded_lp(model, lbc, ubc)
                if child.status != OPTIMAL:
                    continue
                if sgn * child.objective <= incumbent + 1e-9:
                    continue
                counter += 1
                heapq.heappush(heap, (-sgn * child.objective, counter, lbc, ubc, child))
        open_bound = max([-h[0] for h in heap], default=-math.inf)
        if incumbent_x is None:
            if timed_out:
                return SolveOutcome(NO_SOLUTION_TIME_LIMIT, nodes=nodes, bound=sgn * open_bound)
            return SolveOutcome(INFEASIBLE, nodes=nodes)
        bound = max(incumbent, open_bound)
        status = FEASIBLE_TIME_LIMIT if timed_out and open_bound > incumbent + 1e-9 else OPTIMAL
        return SolveOutcome(status, incumbent_x, model.objective_value(incumbent_x), None, sgn * bound, nodes)


class HighsSolver:
    """SciPy/HiGHS backend with the embedded solver's outcome contract."""

    name = "highs"

    def solve_lp(self, model: LinearModel) -> SolveOutcome:
        sgn = -1.0 if model.sense == "max" else 1.0
        c = sgn * np.asarray(model.obj)
        A = model.matrix()
        ub_rows, b_ub, eq_rows, b_eq = [], [], [], []
        row_sign = []
        for i, con in enumerate(model.constraints):
            if con.rel == "<=":
                ub_rows.append(i), b_ub.append(con.rhs), row_sign.append(("ub", len(ub_rows) - 1, 1.0))
            elif con.rel == ">=":
                ub_rows.append(i), b_ub.append(-con.rhs), row_sign.append(("ub", len(ub_rows) - 1, -1.0))
            else:
                eq_rows.append(i), b_eq.append(con.rhs), row_sign.append(("eq", len(eq_rows) - 1, 1.0))
        A_ub = A[ub_rows] if ub_rows else None
        if A_ub is not None:
            signs = np.array([1.0 if model.constraints[i].rel == "<=" else -1.0 for i in ub_rows])
            A_ub = sp.diags(signs) @ A_ub
        A_eq = A[eq_rows] if eq_rows else None
        lb, ub = model.bounds()
        res = linprog(c, A_ub=A_ub, b_ub=b_ub or None, A_eq=A_eq, b_eq=b_eq or None,
                      bounds=list(zip(np.where(np.isfinite(lb), lb, None), np.where(np.isfinite(ub), ub, None))),
                      method="highs")
        if res.status == 2:
            return SolveOutcome(INFEASIBLE)
        if res.status == 3:
            return SolveOutcome(UNBOUNDED)
        if res.status != 0:
            raise SolverError(res.message)
        duals = np.zeros(model.n_constrs)
        for i, (kind, pos, s) in enumerate(row_sign):
            marg = res.ineqlin.marginals[pos] if kind == "ub" else res.eqlin.marginals[pos]
            duals[i] = sgn * s * marg
        return SolveOutcome(OPTIMAL, res.x, model.objective_value(res.x), duals)

    def solve_mip(self, model: LinearModel, time_limit: float = math.inf) -> SolveOutcome:
        sgn = -1.0 if model.sense == "max" else 1.0
        c = sgn * np.asarray(model.obj)
        lb, ub = model.bounds()
        A = model.matrix()
        lo = np.array([con.rhs if con.rel in (">=", "=") else -np.inf for con in model.constraints])
        hi = np.array([con.rhs if con.rel in ("<=", "=") else np.inf for con in model.constraints])
        integrality = np.array([1 if v.binary else 0 for v in model.variables])
        options = {"disp": False, "presolve": True}
        if math.isfinite(time_limit):
            options["time_limit"] = float(time_limit)
        cons = [LinearConstraint(A, lo, hi)] if model.n_constrs else []
        res = milp(c, constraints=cons, integrality=integrality, bounds=Bounds(lb, ub), options=options)
        bound = getattr(res, "mip_dual_bound", None)
        bound = None if bound is None else sgn * bound
        if res.x is None:
            if res.status == 2:
                return SolveOutcome(INFEASIBLE)
            if res.status == 3:
                return SolveOutcome(UNBOUNDED)
            if res.status == 1:
                return SolveOutcome(NO_SOLUTION_TIME_LIMIT, bound=bound)
            raise SolverError(res.message)
        x = np.asarray(res.x, dtype=float)
        for k in model.binaries:
            x[k] = round(x[k])
        status = OPTIMAL if res.status == 0 else FEASIBLE_TIME_LIMIT
        return SolveOutcome(status, x, model.objective_value(x), None, bound, info={"message": res.message})


BACKENDS = {"embedded": EmbeddedSolver, "highs": HighsSolver}
AUTO_BINARY_LIMIT = 40


def get_solver(backend: str = "embedded"):
    try:
        return BACKENDS[backend]()
    except KeyError:
        raise ValueError(f"unknown backend {backend!r}; choose from {sorted(BACKENDS)}") from None


def solve_lp(model: LinearModel, backend: str = "embedded") -> SolveOutcome:
    if model.binaries:
        raise ValueError("solve_lp called on a model with binary variables")
    return get_solver(backend).solve_lp(model)


def solve_mip(model: LinearModel, time_limit: float = math.inf, backend: str = "auto") -> SolveOutcome:
    """Mixed-binary solve; ``auto`` keeps small models on the embedded engine."""
    if backend == "auto":
        backend = "embedded" if len(model.binaries) <= AUTO_BINARY_LIMIT else "highs"
    return get_solver(backend).solve_mip(model, time_limit)
