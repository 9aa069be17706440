"""Linear/mixed-integer modelling and solvers."""

from __future__ import annotations

import numpy as np

from .bnb import MilpOptions, branch_and_bound
from .highs import solve_lp_highs, solve_milp_highs
from .model import (BINARY, CONTINUOUS, EQ, GE, LE, MAX, MIN, Constraint, LinearModel, LinExpr,
                    LpSolution, MilpSolution, Variable, dual_objective)
from .mps import export_mps, import_mps
from .simplex import simplex
from .simplex import solve_lp as _solve_lp_simplex

__all__ = [
    "BINARY", "CONTINUOUS", "EQ", "GE", "LE", "MAX", "MIN", "Constraint", "LinearModel",
    "LinExpr", "LpSolution", "MilpOptions", "MilpSolution", "Variable", "dual_objective",
    "export_mps", "import_mps", "solve_lp", "solve_milp", "relaxation_bound", "resolve_engine",
    "BNB_BINARY_BUDGET", "MILP_BINARY_BUDGET",
]

# above this many columns the dense simplex is too slow for routine polishing
DENSE_LIMIT = 1500
# "auto" uses the built-in branch and bound up to this many binaries
BNB_BINARY_BUDGET = 24
# largest bidding MILP the desk-scale run attempts before shortening the horizon
MILP_BINARY_BUDGET = 1500


def solve_lp(model: LinearModel, engine: str = "simplex", **kwargs) -> LpSolution:
    if engine == "simplex":
        return _solve_lp_simplex(model, **kwargs)
    if engine == "highs":
        return solve_lp_highs(model)
    raise ValueError(f"unknown LP engine {engine!r}")


def _polish(model: LinearModel, sol: MilpSolution) -> MilpSolution:
    """Re-solve the continuous part with binaries fixed at their rounded values."""
    arr = model.arrays()
    bins = arr.binary
    lb, ub = arr.lb.copy(), arr.ub.copy()
    lb[bins] = ub[bins] = np.round(sol.x[bins])
    if model.num_vars <= DENSE_LIMIT:
        lp = simplex(arr.c, arr.A, arr.senses, arr.b, lb, ub, arr.maximize, arr.constant)
    else:
        lp = solve_lp_highs(model, lb, ub)
    if lp.status != "optimal":
        return sol
    x = lp.x.copy()
    x[bins] = lb[bins]
    sol.x = x
    sol.objective = lp.objective
    return sol


def resolve_engine(model: LinearModel, engine: str) -> str:
    if engine == "auto":
        return "bnb" if len(model.binaries) <= BNB_BINARY_BUDGET else "highs"
    return engine


def solve_milp(model: LinearModel, options: MilpOptions | None = None) -> MilpSolution:
    """Solve a binary MILP with the engine named in ``options``.

    ``bnb`` is the built-in deterministic best-first branch and bound;
    ``highs`` delegates the search to HiGHS; ``auto`` picks ``bnb`` for
    models with at most ``BNB_BINARY_BUDGET`` binaries. Either way the incumbent's
    continuous part is re-solved with binaries fixed so that binaries are
    exactly 0/1 and the continuous values are vertex-accurate.
    """
    options = options or MilpOptions()
    engine = resolve_engine(model, options.engine)
    if engine == "bnb":
        return branch_and_bound(model, options)
    if engine == "highs":
        sol = solve_milp_highs(model, gap=options.gap, time_limit=options.time_limit,
                               node_limit=options.node_limit)
        if sol.has_incumbent:
            sol = _polish(model, sol)
        return sol
    raise ValueError(f"unknown MILP engine {options.engine!r}")


def relaxation_bound(model: LinearModel, engine: str | None = None) -> float:
    """Objective of the continuous relaxation (root bound)."""
    relaxed = model.relaxed()
    if engine is None:
        engine = "simplex" if model.num_vars <= DENSE_LIMIT else "highs"
    sol = solve_lp(relaxed, engine=engine)
    if sol.status != "optimal":
        raise RuntimeError(f"relaxation status {sol.status}")
    return sol.objective
