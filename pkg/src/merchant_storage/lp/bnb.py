"""Best-first branch and bound over binary variables."""

from __future__ import annotations

import heapq
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from .model import LinearModel, MilpSolution
from .simplex import FEAS_TOL, simplex

INT_TOL = 1e-6


@dataclass(frozen=True)
class MilpOptions:
    gap: float = float(os.environ.get("GAP", 1e-6))
    node_limit: int = 200_000
    time_limit: float | None = None
    engine: str = "bnb"
    feas_tol: float = FEAS_TOL


def _relative_gap(bound, incumbent):
    return abs(bound - incumbent) / max(1.0, abs(incumbent))


def branch_and_bound(model: LinearModel, options: MilpOptions) -> MilpSolution:
    """Deterministic best-first B&B with LP bounds from :func:`simplex`.

    Branching: most fractional binary, lowest index on ties. Node
    selection: best bound, then creation order.
    """
    arr = model.arrays()
    bins = np.flatnonzero(arr.binary)
    sense = -1.0 if arr.maximize else 1.0  # internal minimisation of sense*obj
    names = [con.name for con in model.constraints]
    started = time.monotonic()

    def lp(lb, ub):
        return simplex(arr.c, arr.A, arr.senses, arr.b, lb, ub, arr.maximize, arr.constant,
                       feas_tol=options.feas_tol, row_names=names)

    root = lp(arr.lb, arr.ub)
    if root.status == "infeasible":
        return MilpSolution("infeasible", engine="bnb", nodes=1)
    if root.status == "unbounded":
        return MilpSolution("unbounded", engine="bnb", nodes=1)
    root_bound = root.objective

    inc_x, inc_val = None, math.inf  # internal (minimised) incumbent value
    heap = [(sense * root.objective, 0, arr.lb.copy(), arr.ub.copy(), root)]
    seq, nodes = 1, 0
    trace = []
    status = "optimal"
    best_bound = sense * root.objective

    while heap:
        best_bound = heap[0][0]
        if inc_x is not None and best_bound >= inc_val - options.gap * max(1.0, abs(inc_val)):
            break
        if nodes >= options.node_limit:
            status = "node-limit"
            break
        if options.time_limit is not None and time.monotonic() - started > options.time_limit:
            status = "gap-limit"
            break
        bound, _, lb, ub, sol = heapq.heappop(heap)
        nodes += 1
        if inc_x is not None and bound >= inc_val - options.gap * max(1.0, abs(inc_val)):
            continue
        xb = sol.x[bins]
        frac = np.abs(xb - np.round(xb))
        if bins.size == 0 or frac.max() <= INT_TOL:
            x = sol.x.copy()
            if bins.size:
                fixed_lb, fixed_ub = lb.copy(), ub.copy()
                fixed_lb[bins] = fixed_ub[bins] = np.round(xb)
                polished = lp(fixed_lb, fixed_ub)
                if polished.status != "optimal":
                    continue
                x = polished.x
                x[bins] = np.round(xb)
                val = sense * polished.objective
            else:
                val = bound
            if val < inc_val:
                inc_x, inc_val = x, val
                trace.append((nodes, sense * inc_val, sense * bound))
            continue
        # argmax returns the first maximiser, i.e. the lowest index on ties
        k = int(bins[np.argmax(frac)])
        for value in (0.0, 1.0):
            clb, cub = lb.copy(), ub.copy()
            clb[k] = cub[k] = value
            child = lp(clb, cub)
            if child.status != "optimal":
                continue
            cb = sense * child.objective
            if inc_x is not None and cb >= inc_val - options.gap * max(1.0, abs(inc_val)):
                continue
            heapq.heappush(heap, (cb, seq, clb, cub, child))
            seq += 1

    if inc_x is None:
        return MilpSolution("infeasible" if status == "optimal" else status, engine="bnb",
                            nodes=nodes, root_bound=root_bound)
    best_bound = min(best_bound, inc_val) if heap else inc_val
    gap = _relative_gap(best_bound, inc_val)
    if status == "optimal" and gap > options.gap:
        status = "gap-limit"
    return MilpSolution(status, x=inc_x, objective=sense * inc_val, gap=gap, nodes=nodes,
                        root_bound=root_bound, best_bound=sense * best_bound, engine="bnb",
                        trace=trace)
