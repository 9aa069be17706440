"""Solver-agnostic linear model IR."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

CONTINUOUS = "continuous"
BINARY = "binary"
LE, EQ, GE = "<=", "=", ">="
MIN, MAX = "min", "max"


class LinExpr:
    """Sparse affine expression ``sum(coef * var) + const`` keyed by variable index."""

    __slots__ = ("terms", "const")

    def __init__(self, terms=None, const=0.0):
        self.terms = dict(terms) if terms else {}
        self.const = float(const)

    @classmethod
    def var(cls, index, coef=1.0):
        return cls({index: float(coef)})

    def copy(self):
        return LinExpr(self.terms, self.const)

    def add_term(self, index, coef):
        if coef:
            self.terms[index] = self.terms.get(index, 0.0) + coef
        return self

    def iadd(self, other, scale=1.0):
        if isinstance(other, LinExpr):
            for k, v in other.terms.items():
                self.terms[k] = self.terms.get(k, 0.0) + scale * v
            self.const += scale * other.const
        else:
            self.const += scale * float(other)
        return self

    def __add__(self, other):
        return self.copy().iadd(other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.copy().iadd(other, -1.0)

    def __rsub__(self, other):
        return (-self).iadd(other)

    def __neg__(self):
        return LinExpr({k: -v for k, v in self.terms.items()}, -self.const)

    def __mul__(self, k):
        k = float(k)
        return LinExpr({i: k * v for i, v in self.terms.items()}, k * self.const)

    __rmul__ = __mul__

    def value(self, x):
        return self.const + sum(v * x[k] for k, v in self.terms.items())

    def pruned(self):
        return LinExpr({k: v for k, v in self.terms.items() if v != 0.0}, self.const)

    def __repr__(self):
        return f"LinExpr({self.terms!r}, {self.const!r})"


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str = CONTINUOUS
    lb: float = 0.0
    ub: float = math.inf


@dataclass(frozen=True)
class Constraint:
    name: str
    coeffs: dict
    sense: str
    rhs: float


@dataclass
class ModelArrays:
    c: np.ndarray
    A: sp.csr_matrix
    senses: list
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    binary: np.ndarray
    maximize: bool
    constant: float


class LinearModel:
    """Variables, linear constraints and a linear objective.

    Build with ``add_var`` / ``add_constraint`` / ``set_objective``; call
    ``freeze`` once complete. A frozen model refuses further edits.
    """

    def __init__(self, name="model"):
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.objective = LinExpr()
        self.sense = MIN
        self._vindex: dict[str, int] = {}
        self._cindex: dict[str, int] = {}
        self._frozen = False
        self._arrays = None

    # -- building ------------------------------------------------------------

    def _check_open(self):
        if self._frozen:
            raise RuntimeError(f"model {self.name!r} is frozen")

    def add_var(self, name, lb=0.0, ub=math.inf, kind=CONTINUOUS) -> int:
        self._check_open()
        if name in self._vindex:
            raise ValueError(f"duplicate variable name {name!r}")
        lb, ub = float(lb), float(ub)
        if kind == BINARY:
            ub = min(ub, 1.0)
            if lb < 0 or ub > 1:
                raise ValueError(f"binary variable {name!r} must have bounds within [0, 1]")
        elif kind != CONTINUOUS:
            raise ValueError(f"unknown variable kind {kind!r}")
        if lb > ub or math.isnan(lb) or math.isnan(ub) or lb == math.inf or ub == -math.inf:
            raise ValueError(f"variable {name!r}: invalid bounds [{lb}, {ub}]")
        self._vindex[name] = len(self.variables)
        self.variables.append(Variable(name, kind, lb, ub))
        return len(self.variables) - 1

    def add_constraint(self, name, expr, sense, rhs=0.0) -> int:
        """Add ``expr (sense) rhs``; a constant inside ``expr`` moves to the rhs."""
        self._check_open()
        if name in self._cindex:
            raise ValueError(f"duplicate constraint name {name!r}")
        if sense not in (LE, EQ, GE):
            raise ValueError(f"unknown sense {sense!r}")
        if not isinstance(expr, LinExpr):
            expr = LinExpr(expr)
        n = len(self.variables)
        coeffs = {}
        for k, v in expr.terms.items():
            if not 0 <= k < n:
                raise ValueError(f"constraint {name!r} references unknown variable {k}")
            if v != 0.0:
                coeffs[k] = float(v)
        self._cindex[name] = len(self.constraints)
        self.constraints.append(Constraint(name, coeffs, sense, float(rhs) - expr.const))
        return len(self.constraints) - 1

    def set_objective(self, expr, sense=MIN):
        self._check_open()
        if sense not in (MIN, MAX):
            raise ValueError(f"unknown objective sense {sense!r}")
        if not isinstance(expr, LinExpr):
            expr = LinExpr(expr)
        self.objective = expr.pruned()
        self.sense = sense

    def freeze(self):
        self._frozen = True
        return self

    @property
    def frozen(self):
        return self._frozen

    # -- lookup --------------------------------------------------------------

    def var_index(self, name) -> int:
        return self._vindex[name]

    def con_index(self, name) -> int:
        return self._cindex[name]

    def has_var(self, name):
        return name in self._vindex

    @property
    def num_vars(self):
        return len(self.variables)

    @property
    def num_constraints(self):
        return len(self.constraints)

    @property
    def binaries(self):
        return [j for j, v in enumerate(self.variables) if v.kind == BINARY]

    # -- derived views -------------------------------------------------------

    def arrays(self) -> ModelArrays:
        if self._arrays is not None and self._frozen:
            return self._arrays
        n, m = self.num_vars, self.num_constraints
        rows, cols, vals = [], [], []
        for i, con in enumerate(self.constraints):
            for j, v in con.coeffs.items():
                rows.append(i)
                cols.append(j)
                vals.append(v)
        A = sp.csr_matrix((vals, (rows, cols)), shape=(m, n), dtype=float)
        c = np.zeros(n)
        for j, v in self.objective.terms.items():
            c[j] = v
        out = ModelArrays(
            c=c,
            A=A,
            senses=[con.sense for con in self.constraints],
            b=np.array([con.rhs for con in self.constraints], dtype=float),
            lb=np.array([v.lb for v in self.variables], dtype=float),
            ub=np.array([v.ub for v in self.variables], dtype=float),
            binary=np.array([v.kind == BINARY for v in self.variables], dtype=bool),
            maximize=self.sense == MAX,
            constant=self.objective.const,
        )
        if self._frozen:
            self._arrays = out
        return out

    def copy(self, name=None) -> "LinearModel":
        out = LinearModel(name or self.name)
        out.variables = list(self.variables)
        out.constraints = list(self.constraints)
        out.objective = self.objective.copy()
        out.sense = self.sense
        out._vindex = dict(self._vindex)
        out._cindex = dict(self._cindex)
        return out

    def with_bounds(self, bounds: dict) -> "LinearModel":
        """Frozen copy with some variable bounds replaced (``{index: (lb, ub)}``)."""
        out = self.copy()
        for j, (lb, ub) in bounds.items():
            out.variables[j] = Variable(out.variables[j].name, out.variables[j].kind, lb, ub)
        return out.freeze()

    def relaxed(self) -> "LinearModel":
        """Frozen copy where every binary becomes continuous in its bounds."""
        out = self.copy(self.name + "_relaxed")
        out.variables = [Variable(v.name, CONTINUOUS, v.lb, v.ub) for v in out.variables]
        return out.freeze()

    def evaluate_objective(self, x) -> float:
        return self.objective.value(x)

    def row_activity(self, x) -> np.ndarray:
        return self.arrays().A @ np.asarray(x, dtype=float)

    def max_violation(self, x) -> float:
        """Largest absolute violation of rows and bounds at ``x``."""
        x = np.asarray(x, dtype=float)
        arr = self.arrays()
        act = arr.A @ x if arr.A.shape[0] else np.zeros(0)
        worst = 0.0
        for i, sense in enumerate(arr.senses):
            r = act[i] - arr.b[i]
            if sense == LE:
                worst = max(worst, r)
            elif sense == GE:
                worst = max(worst, -r)
            else:
                worst = max(worst, abs(r))
        if x.size:
            worst = max(worst, float(np.max(arr.lb - x, initial=0.0)),
                        float(np.max(x - arr.ub, initial=0.0)))
        return worst

    def same_as(self, other: "LinearModel") -> bool:
        """Equality on names, kinds, bounds, coefficients and objective, ignoring order."""
        if self.sense != other.sense or self.num_vars != other.num_vars:
            return False
        if self.num_constraints != other.num_constraints:
            return False
        if abs(self.objective.const - other.objective.const) > 0:
            return False
        for v in self.variables:
            if not other.has_var(v.name):
                return False
            w = other.variables[other.var_index(v.name)]
            if (v.kind, v.lb, v.ub) != (w.kind, w.lb, w.ub):
                return False
        names = [v.name for v in self.variables]
        onames = [v.name for v in other.variables]
        obj = {names[j]: c for j, c in self.objective.terms.items()}
        oobj = {onames[j]: c for j, c in other.objective.terms.items()}
        if obj != oobj:
            return False
        for con in self.constraints:
            if con.name not in other._cindex:
                return False
            ocon = other.constraints[other.con_index(con.name)]
            if (con.sense, con.rhs) != (ocon.sense, ocon.rhs):
                return False
            if ({names[j]: c for j, c in con.coeffs.items()}
                    != {onames[j]: c for j, c in ocon.coeffs.items()}):
                return False
        return True

    def __repr__(self):
        return (f"LinearModel({self.name!r}, vars={self.num_vars}, "
                f"rows={self.num_constraints}, binaries={len(self.binaries)})")


@dataclass
class LpSolution:
    status: str
    x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reduced_costs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective: float = math.nan
    iterations: int = 0
    infeasible_rows: list = field(default_factory=list)
    engine: str = "simplex"

    @property
    def optimal(self):
        return self.status == "optimal"


@dataclass
class MilpSolution:
    status: str
    x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective: float = math.nan
    gap: float = math.inf
    nodes: int = 0
    root_bound: float = math.nan
    best_bound: float = math.nan
    engine: str = "bnb"
    trace: list = field(default_factory=list)

    @property
    def has_incumbent(self):
        return self.x.size > 0 and self.status not in ("infeasible", "unbounded")


def dual_objective(model: LinearModel, duals, reduced_costs) -> float:
    """Dual bound implied by row duals and reduced costs (``inf`` if dual infeasible).

    Duals follow the sensitivity convention ``d objective / d rhs`` in the
    model's own sense; reduced costs are ``c - A^T y``.
    """
    arr = model.arrays()
    val = float(np.dot(arr.b, duals)) + arr.constant
    sign = -1.0 if arr.maximize else 1.0
    for j in range(model.num_vars):
        d = sign * reduced_costs[j]
        if d > 0:
            bound = arr.lb[j]
        elif d < 0:
            bound = arr.ub[j]
        else:
            continue
        if not math.isfinite(bound):
            if abs(d) > 1e-9:
                return math.inf if arr.maximize else -math.inf
            continue
        val += reduced_costs[j] * bound
    return val
