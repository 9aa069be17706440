"""HiGHS backend (via scipy) behind the same LpSolution/MilpSolution contract.

Used as the production MILP engine for models whose binary count is beyond
the reach of the built-in branch and bound, and as an independent
cross-check of the built-in simplex in tests.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .model import EQ, GE, LE, LinearModel, LpSolution, MilpSolution


def _row_bounds(arr):
    lo = np.where([s in (GE, EQ) for s in arr.senses], arr.b, -np.inf)
    hi = np.where([s in (LE, EQ) for s in arr.senses], arr.b, np.inf)
    return lo, hi


def solve_lp_highs(model: LinearModel, lb=None, ub=None) -> LpSolution:
    arr = model.arrays()
    sign = -1.0 if arr.maximize else 1.0
    lb = arr.lb if lb is None else lb
    ub = arr.ub if ub is None else ub
    le = [i for i, s in enumerate(arr.senses) if s == LE]
    ge = [i for i, s in enumerate(arr.senses) if s == GE]
    eq = [i for i, s in enumerate(arr.senses) if s == EQ]
    A = arr.A.tocsr()
    ub_rows = le + ge
    A_ub = None
    b_ub = None
    if ub_rows:
        flip = np.array([1.0] * len(le) + [-1.0] * len(ge))
        A_ub = A[ub_rows].multiply(flip[:, None]).tocsr()
        b_ub = arr.b[ub_rows] * flip
    res = linprog(sign * arr.c, A_ub=A_ub, b_ub=b_ub,
                  A_eq=A[eq] if eq else None, b_eq=arr.b[eq] if eq else None,
                  bounds=list(zip(lb, ub)), method="highs",
                  options={"primal_feasibility_tolerance": 1e-9,
                           "dual_feasibility_tolerance": 1e-9})
    if res.status == 2:
        return LpSolution("infeasible", engine="highs")
    if res.status == 3:
        return LpSolution("unbounded", engine="highs")
    if res.status != 0:
        return LpSolution(f"error: {res.message}", engine="highs")
    y = np.zeros(model.num_constraints)
    if ub_rows:
        y[ub_rows] = res.ineqlin.marginals * flip
    if eq:
        y[eq] = res.eqlin.marginals
    d = res.lower.marginals + res.upper.marginals
    x = np.asarray(res.x, dtype=float)
    return LpSolution("optimal", x=x, duals=sign * y, reduced_costs=sign * d,
                      objective=float(arr.c @ x) + arr.constant, engine="highs")


def solve_milp_highs(model: LinearModel, gap=1e-6, time_limit=None, node_limit=None,
                     lb=None, ub=None) -> MilpSolution:
    arr = model.arrays()
    sign = -1.0 if arr.maximize else 1.0
    lo, hi = _row_bounds(arr)
    options = {"mip_rel_gap": gap, "presolve": True, "disp": False}
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    if node_limit is not None:
        options["node_limit"] = int(node_limit)
    cons = [LinearConstraint(arr.A, lo, hi)] if model.num_constraints else []
    res = milp(sign * arr.c, constraints=cons, integrality=arr.binary.astype(int),
               bounds=Bounds(arr.lb if lb is None else lb, arr.ub if ub is None else ub),
               options=options)
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.x is None:
        status = {2: "infeasible", 3: "unbounded"}.get(res.status, "node-limit")
        return MilpSolution(status, engine="highs", nodes=nodes)
    x = np.asarray(res.x, dtype=float)
    x[arr.binary] = np.round(x[arr.binary])
    obj = float(arr.c @ x) + arr.constant
    bound = getattr(res, "mip_dual_bound", None)
    best_bound = sign * bound + arr.constant if bound is not None else obj
    rel = abs(best_bound - obj) / max(1.0, abs(obj))
    status = "optimal" if res.status == 0 else "gap-limit"
    if math.isfinite(rel) and rel <= gap:
        status = "optimal" if res.status == 0 else status
    return MilpSolution(status, x=x, objective=obj, gap=rel, nodes=nodes,
                        best_bound=best_bound, engine="highs")
