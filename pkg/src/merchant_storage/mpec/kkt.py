"""KKT systems of lower-level LPs and their big-M linearisation.

A lower-level LP is read in minimisation form

    min  c.x   s.t.  a_k.x (<=|=|>=) b_k,   l <= x <= u

where some cost coefficients are *parameters* chosen by the upper level
(``c_j = coef * p``). The derived system is expressed over named symbols:
primal variables keep their LP names, parameters get their own names and
every dual gets a name derived from the row or bound it belongs to:

    dual[row]   equality rows (free) and inequality rows (>= 0)
    lo[var]     finite lower bound (>= 0)
    up[var]     finite upper bound (>= 0)
    fix[var]    fixed variable, l == u (free)

Stationarity of column j reads

    c_j + sum_le pi a_kj - sum_ge pi a_kj - sum_eq y a_kj - lo_j + up_j - fix_j = 0

and the dual objective is

    sum_eq y b + sum_ge pi b - sum_le pi b + sum lo l - sum up u + sum fix l.

With solver duals ``y = d obj / d rhs`` this means ``pi = y`` on >= rows,
``pi = -y`` on <= rows, and ``lo - up`` (or ``fix``) equals the reduced
cost ``c - A^T y``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import BigMPolicyError, DerivationError
from ..lp import BINARY, EQ, GE, LE, MAX, LinearModel, LinExpr

ROW, LO, UP, FIX = "row", "lo", "up", "fix"


@dataclass(frozen=True)
class DualVar:
    name: str
    kind: str
    ref: str
    nonneg: bool


@dataclass
class SymRow:
    """Linear row over named symbols."""

    name: str
    coeffs: dict
    sense: str
    rhs: float

    def activity(self, values) -> float:
        return sum(c * values[s] for s, c in self.coeffs.items())

    def residual(self, values) -> float:
        r = self.activity(values) - self.rhs
        if self.sense == LE:
            return max(r, 0.0)
        if self.sense == GE:
            return max(-r, 0.0)
        return abs(r)


@dataclass
class ComplementarityPair:
    """``0 <= slack  perp  dual >= 0`` with ``slack = sum(coef * primal) + const``."""

    name: str
    slack: dict
    slack_const: float
    dual: str
    source: str
    slack_bound: float

    def slack_value(self, values) -> float:
        return self.slack_const + sum(c * values[s] for s, c in self.slack.items())


@dataclass
class StrongDuality:
    """``sum fixed_c x + sum coef*p*x + const == sum dual_terms + const``."""

    fixed_costs: dict
    bilinear: list
    dual_terms: dict
    constant: float

    def primal_value(self, values) -> float:
        return (self.constant + sum(c * values[v] for v, c in self.fixed_costs.items())
                + sum(k * values[p] * values[v] for p, v, k in self.bilinear))

    def dual_value(self, values) -> float:
        return self.constant + sum(c * values[d] for d, c in self.dual_terms.items())


@dataclass
class KktResiduals:
    stationarity: float
    dual_sign: float
    primal: float
    complementarity: float
    strong_duality: float

    def worst(self) -> float:
        return max(self.stationarity, self.dual_sign, self.primal, self.complementarity,
                   self.strong_duality)


@dataclass
class KktSystem:
    lp: LinearModel
    strategic: dict
    primal: list
    params: list
    duals: list
    stationarity: list
    pairs: list
    strong_duality: StrongDuality
    sign: float = 1.0
    _dual_index: dict = field(default_factory=dict, repr=False)

    def dual(self, name) -> DualVar:
        return self.duals[self._dual_index[name]]

    def duals_from_lp(self, duals, reduced_costs) -> dict:
        """Named dual values from a solver's row duals and reduced costs."""
        lp = self.lp
        out = {}
        for dv in self.duals:
            if dv.kind == ROW:
                k = lp.con_index(dv.ref)
                y = self.sign * float(duals[k])
                out[dv.name] = -y if lp.constraints[k].sense == LE else y
            else:
                d = self.sign * float(reduced_costs[lp.var_index(dv.ref)])
                if dv.kind == FIX:
                    out[dv.name] = d
                elif dv.kind == LO:
                    out[dv.name] = max(d, 0.0)
                else:
                    out[dv.name] = max(-d, 0.0)
        return out

    def point(self, x, duals, reduced_costs, params) -> dict:
        """Full symbol assignment from an LP solution and parameter values."""
        values = {v.name: float(x[j]) for j, v in enumerate(self.lp.variables)}
        values.update(self.duals_from_lp(duals, reduced_costs))
        values.update(params)
        return values

    def residuals(self, values) -> KktResiduals:
        stat = max((r.residual(values) for r in self.stationarity), default=0.0)
        sign = max((max(-values[d.name], 0.0) for d in self.duals if d.nonneg), default=0.0)
        primal = float(self.lp.max_violation(
            np.array([values[v.name] for v in self.lp.variables])))
        comp = 0.0
        for pr in self.pairs:
            comp = max(comp, abs(min(pr.slack_value(values), values[pr.dual])))
        sd = self.strong_duality
        gap = abs(sd.primal_value(values) - sd.dual_value(values))
        scale = 1.0 + abs(sd.primal_value(values))
        return KktResiduals(stat, sign, primal, comp, gap / scale)


def _slack_bound(lp: LinearModel, coeffs: dict, const: float) -> float:
    """Exact upper bound of ``const + sum(coef * x)`` over the variable box."""
    hi = const
    for j, a in coeffs.items():
        v = lp.variables[j]
        hi += a * (v.ub if a > 0 else v.lb)
    return hi if not math.isnan(hi) else math.inf


def derive_kkt(lp: LinearModel, strategic: dict | None = None) -> KktSystem:
    """KKT conditions of ``lp`` with parametric cost coefficients.

    ``strategic`` maps a variable name to ``(parameter name, coef)``; that
    variable's cost becomes ``coef * parameter`` and its fixed cost in
    ``lp`` is ignored. A maximisation LP is read as ``min -c.x``.
    """
    strategic = dict(strategic or {})
    arr = lp.arrays()
    sign = -1.0 if lp.sense == MAX else 1.0
    names = [v.name for v in lp.variables]
    known = set(names)
    for var, (param, _) in strategic.items():
        if var not in known:
            raise DerivationError(f"strategic variable {var!r} is not in the model")
        if param in known:
            raise DerivationError(f"parameter name {param!r} clashes with a variable")
    if len({p for p, _ in strategic.values()}) != len(strategic):
        raise DerivationError("each parameter may price exactly one variable")

    duals, pairs, dual_terms = [], [], {}
    stat = [dict() for _ in names]
    for j, name in enumerate(names):
        if name in strategic:
            param, coef = strategic[name]
            stat[j][param] = sign * coef
    cost = {j: sign * arr.c[j] for j in range(lp.num_vars)
            if names[j] not in strategic and arr.c[j] != 0.0}

    for k, con in enumerate(lp.constraints):
        dname = f"dual[{con.name}]"
        if con.sense == EQ:
            scale, nonneg = -1.0, False
            dual_terms[dname] = con.rhs
        elif con.sense == GE:
            scale, nonneg = -1.0, True
            dual_terms[dname] = con.rhs
        else:
            scale, nonneg = 1.0, True
            dual_terms[dname] = -con.rhs
        duals.append(DualVar(dname, ROW, con.name, nonneg))
        for j, a in con.coeffs.items():
            stat[j][dname] = stat[j].get(dname, 0.0) + scale * a
        if con.sense != EQ:
            if con.sense == LE:
                slack, const = {j: -a for j, a in con.coeffs.items()}, con.rhs
            else:
                slack, const = dict(con.coeffs), -con.rhs
            pairs.append(ComplementarityPair(
                f"row[{con.name}]", {names[j]: a for j, a in slack.items()}, const, dname,
                con.name, _slack_bound(lp, slack, const)))

    for j, v in enumerate(lp.variables):
        if v.lb == v.ub:
            dname = f"fix[{v.name}]"
            duals.append(DualVar(dname, FIX, v.name, False))
            stat[j][dname] = -1.0
            dual_terms[dname] = v.lb
            continue
        if math.isfinite(v.lb):
            dname = f"lo[{v.name}]"
            duals.append(DualVar(dname, LO, v.name, True))
            stat[j][dname] = -1.0
            dual_terms[dname] = v.lb
            pairs.append(ComplementarityPair(f"lo[{v.name}]", {v.name: 1.0}, -v.lb, dname,
                                             v.name, v.ub - v.lb))
        if math.isfinite(v.ub):
            dname = f"up[{v.name}]"
            duals.append(DualVar(dname, UP, v.name, True))
            stat[j][dname] = 1.0
            dual_terms[dname] = -v.ub
            pairs.append(ComplementarityPair(f"up[{v.name}]", {v.name: -1.0}, v.ub, dname,
                                             v.name, v.ub - v.lb))

    stationarity = [SymRow(f"stat[{names[j]}]", {s: c for s, c in stat[j].items() if c != 0.0},
                           EQ, -cost.get(j, 0.0)) for j in range(lp.num_vars)]
    sd = StrongDuality(
        fixed_costs={names[j]: c for j, c in cost.items()},
        bilinear=[(p, v, sign * k) for v, (p, k) in strategic.items()],
        dual_terms={d: b for d, b in dual_terms.items() if b != 0.0},
        constant=sign * arr.constant,
    )
    kkt = KktSystem(lp, strategic, names, [p for p, _ in strategic.values()], duals,
                    stationarity, pairs, sd, sign)
    kkt._dual_index = {d.name: i for i, d in enumerate(duals)}
    return kkt


@dataclass
class NamedExpr:
    """Affine expression over symbol names (before columns exist)."""

    coeffs: dict
    const: float = 0.0
    doc: str = ""

    def value(self, values) -> float:
        return self.const + sum(c * values[s] for s, c in self.coeffs.items())

    def bind(self, model: LinearModel) -> LinExpr:
        return LinExpr({model.var_index(s): c for s, c in self.coeffs.items()}, self.const)


def linearize_revenue(kkt: KktSystem) -> NamedExpr:
    """Linear stand-in for the bilinear strategic terms ``sum coef*p*x``.

    At any KKT point strong duality holds, so the strategic part of the
    lower-level objective equals the dual objective minus the costs of
    the non-strategic columns. Rival prices and bounds are data, which
    keeps the result linear in the MILP columns. The value is in the
    LP's minimisation orientation: for a clearing LP it equals
    ``sum(O*P) - sum(B*D)`` of the strategic participant.
    """
    sd = kkt.strong_duality
    coeffs = dict(sd.dual_terms)
    for v, c in sd.fixed_costs.items():
        coeffs[v] = coeffs.get(v, 0.0) - c
    terms = " + ".join(f"{k:g}*{p}*{v}" for p, v, k in sd.bilinear) or "0"
    doc = (f"{kkt.lp.name}: {terms} == dual objective ({len(sd.dual_terms)} terms)"
           f" - non-strategic costs ({len(sd.fixed_costs)} terms)")
    return NamedExpr({s: c for s, c in coeffs.items() if c != 0.0}, 0.0, doc)


# -- big-M -------------------------------------------------------------------


@dataclass
class BigMPolicy:
    """Sizing of Fortuny-Amat constants.

    Primal M is the exact bound of each slack over the variable box; the
    dual M is ``dual_multiplier * price_cap`` unless ``dual_override`` is
    set. ``override`` replaces both for every pair.
    """

    price_cap: float
    dual_multiplier: float = 10.0
    dual_override: float | None = None
    override: float | None = None
    post_check: bool = True
    max_escalations: int = 3

    def __post_init__(self):
        for label, v in (("price_cap", self.price_cap), ("dual_multiplier", self.dual_multiplier),
                         ("dual_override", self.dual_override), ("override", self.override)):
            if v is not None and not (math.isfinite(v) and v > 0):
                raise BigMPolicyError(f"{label}: must be finite and > 0")

    def primal_m(self, pair: ComplementarityPair) -> float:
        if self.override is not None:
            return self.override
        if not math.isfinite(pair.slack_bound):
            raise BigMPolicyError(f"pair {pair.name}: slack has no finite bound")
        return max(pair.slack_bound, 0.0)

    def dual_m(self, pair: ComplementarityPair) -> float:
        if self.override is not None:
            return self.override
        if self.dual_override is not None:
            return self.dual_override
        return self.dual_multiplier * self.price_cap

    def escalated(self) -> "BigMPolicy":
        """Same policy with the dual M (or the global override) multiplied by 10."""
        if self.override is not None:
            return replace(self, override=self.override * 10.0)
        return replace(self, dual_override=self.dual_m(None) * 10.0)


@dataclass
class LinearizedKkt:
    """Columns and rows added for one KKT system."""

    kkt: KktSystem
    policy: BigMPolicy
    binaries: dict          # pair name -> column
    dual_caps: dict         # dual name -> M used
    primal_caps: dict       # pair name -> M used
    prefix: str = ""


def _col(model, name, lb, ub, kind="continuous"):
    if model.has_var(name):
        return model.var_index(name)
    return model.add_var(name, lb, ub, kind)


def linearize(kkt: KktSystem, policy: BigMPolicy, model: LinearModel | None = None,
              param_bounds: dict | None = None, prefix: str = "") -> tuple:
    """Add primal feasibility, stationarity, dual signs and big-M pairs.

    Each pair ``0 <= s perp d >= 0`` becomes ``s <= Mp*u`` and
    ``d <= Md*(1-u)`` with ``u`` binary. For a column with two finite,
    distinct bounds the row ``u_lo + u_up >= 1`` is added (the column
    cannot rest on both bounds). Returns ``(model, LinearizedKkt)``; pass
    ``model`` to extend an existing MILP, whose same-named columns
    (typically the shared parameters) are reused.
    """
    model = model if model is not None else LinearModel(f"kkt_{kkt.lp.name}")
    lp = kkt.lp
    param_bounds = param_bounds or {}
    for v in lp.variables:
        _col(model, v.name, v.lb, v.ub)
    for p in kkt.params:
        lo, hi = param_bounds.get(p, (-math.inf, math.inf))
        _col(model, p, lo, hi)
    for con in lp.constraints:
        expr = LinExpr({model.var_index(lp.variables[j].name): a for j, a in con.coeffs.items()})
        model.add_constraint(f"{prefix}primal[{con.name}]", expr, con.sense, con.rhs)

    pair_of_dual = {pr.dual: pr for pr in kkt.pairs}
    dual_caps = {}
    for d in kkt.duals:
        if d.nonneg:
            cap = policy.dual_m(pair_of_dual.get(d.name))
            dual_caps[d.name] = cap
            _col(model, d.name, 0.0, cap)
        else:
            _col(model, d.name, -math.inf, math.inf)
    for row in kkt.stationarity:
        expr = LinExpr({model.var_index(s): c for s, c in row.coeffs.items()})
        model.add_constraint(f"{prefix}{row.name}", expr, row.sense, row.rhs)

    binaries, primal_caps = {}, {}
    for pr in kkt.pairs:
        mp = policy.primal_m(pr)
        md = dual_caps[pr.dual]
        primal_caps[pr.name] = mp
        u = model.add_var(f"{prefix}cmp[{pr.name}]", 0.0, 1.0, BINARY)
        binaries[pr.name] = u
        slack = LinExpr({model.var_index(s): c for s, c in pr.slack.items()}, pr.slack_const)
        model.add_constraint(f"{prefix}bigm_p[{pr.name}]", slack.add_term(u, -mp), LE, 0.0)
        model.add_constraint(f"{prefix}bigm_d[{pr.name}]",
                             {model.var_index(pr.dual): 1.0, u: md}, LE, md)
    for v in lp.variables:
        lo, up = f"lo[{v.name}]", f"up[{v.name}]"
        if lo in binaries and up in binaries:
            model.add_constraint(f"{prefix}cmp_link[{v.name}]",
                                 {binaries[lo]: 1.0, binaries[up]: 1.0}, GE, 1.0)
    return model, LinearizedKkt(kkt, policy, binaries, dual_caps, primal_caps, prefix)


@dataclass
class BigMAudit:
    both_active: list
    at_cap: list
    max_min_pair: float

    @property
    def clean(self) -> bool:
        return not self.both_active and not self.at_cap


def audit_bigm(lin: LinearizedKkt, values: dict, tol: float = 1e-6) -> BigMAudit:
    """Post-solve check: no pair active on both sides, no dual resting on its cap."""
    both, at_cap, worst = [], [], 0.0
    for pr in lin.kkt.pairs:
        s = pr.slack_value(values)
        d = values[pr.dual]
        worst = max(worst, min(s, d))
        if s > tol and d > tol:
            both.append(pr.name)
    for name, cap in lin.dual_caps.items():
        if values[name] >= cap - tol:
            at_cap.append(name)
    return BigMAudit(both, at_cap, worst)
