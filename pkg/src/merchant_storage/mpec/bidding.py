"""Single-level bidding MILP of the price-maker storage facility.

Each market's clearing LP is replaced by its linearised KKT system; the
facility's offer and bid prices are upper-level columns in
``[0, price_cap]`` that enter the lower level as cost parameters. The
pay-as-bid revenue ``O*P - B*D`` is bilinear in (price, quantity); it is
replaced by its strong-duality equivalent, which is linear because rival
prices and quantity caps are data.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..clearing import EsfMarketOrder, build_clearing_lp
from ..errors import InfeasibleError
from ..lp import EQ, LinearModel, LinExpr, MilpOptions, relaxation_bound, solve_milp
from ..model import MarketCase, StorageSchedule, operation_cost, validate_schedule
from ..storage_block import StorageVars, add_storage_block
from .kkt import BigMPolicy, LinearizedKkt, NamedExpr, audit_bigm, derive_kkt, linearize, \
    linearize_revenue


def offer_name(market, t):
    return f"{market}.offer[{t}]"


def bid_name(market, t):
    return f"{market}.bid[{t}]"


def strategic_map(lp) -> dict:
    m = lp.market
    out = {}
    for t, j in enumerate(lp.esf_sell):
        out[lp.variables[j].name] = (offer_name(m, t), 1.0)
    for t, j in enumerate(lp.esf_buy):
        out[lp.variables[j].name] = (bid_name(m, t), -1.0)
    return out


@dataclass
class BiddingMilp:
    """The assembled model plus everything needed to read a solution back."""

    model: LinearModel
    case: MarketCase
    policy: BigMPolicy
    storage: StorageVars
    lps: dict               # market -> ClearingModel
    kkts: dict              # market -> KktSystem
    lins: dict              # market -> LinearizedKkt
    revenue: dict           # market -> NamedExpr (per-hour-energy units, before delta_t)

    def values(self, x) -> dict:
        return {v.name: float(x[j]) for j, v in enumerate(self.model.variables)}

    @property
    def num_binaries(self):
        return len(self.model.binaries)


def _default_order(case, market):
    cap = case.price_cap
    T = case.horizon
    return EsfMarketOrder(market, (cap,) * T, case.esf.sell_cap[market], (0.0,) * T,
                          case.esf.buy_cap[market])


def assemble_bidding_milp(case: MarketCase, policy: BigMPolicy | None = None,
                          fixed_order: dict | None = None) -> BiddingMilp:
    """Build the MILP.

    ``fixed_order`` (market -> EsfMarketOrder) pins prices and caps of the
    facility's orders; the result is then the optimistic outcome of that
    fixed strategy, used for price-taker realisation.
    """
    policy = policy or BigMPolicy(case.price_cap)
    spec = case.storage
    model = LinearModel(f"bidding_{case.name}")
    sv = add_storage_block(model, spec, case.horizon)
    lps, kkts, lins, revenue = {}, {}, {}, {}
    objective = LinExpr()
    dis = [LinExpr.var(j, -1.0) for j in sv.p_dis]
    ch = [LinExpr.var(j, -1.0) for j in sv.p_ch]
    for m in case.markets:
        order = (fixed_order or {}).get(m) or _default_order(case, m)
        lp = build_clearing_lp(case, order, m)
        kkt = derive_kkt(lp, strategic_map(lp))
        bounds = {}
        for t in case.hours:
            if fixed_order and m in fixed_order:
                bounds[offer_name(m, t)] = (order.offer_price[t],) * 2
                bounds[bid_name(m, t)] = (order.bid_price[t],) * 2
            else:
                bounds[offer_name(m, t)] = (0.0, case.price_cap)
                bounds[bid_name(m, t)] = (0.0, case.price_cap)
        model, lin = linearize(kkt, policy, model, bounds)
        rev = linearize_revenue(kkt)
        objective.iadd(rev.bind(model), spec.delta_t)
        for t in case.hours:
            dis[t].add_term(model.var_index(lp.variables[lp.esf_sell[t]].name), 1.0)
            ch[t].add_term(model.var_index(lp.variables[lp.esf_buy[t]].name), 1.0)
        lps[m], kkts[m], lins[m], revenue[m] = lp, kkt, lin, rev
    for t in case.hours:
        model.add_constraint(f"couple_dis[{t}]", dis[t], EQ, 0.0)
        model.add_constraint(f"couple_ch[{t}]", ch[t], EQ, 0.0)
    objective.iadd(sv.op_cost, -1.0)
    model.set_objective(objective, "max")
    model.freeze()
    return BiddingMilp(model, case, policy, sv, lps, kkts, lins, revenue)


@dataclass
class BiddingOptions:
    milp: MilpOptions = field(default_factory=lambda: MilpOptions(engine="auto"))
    policy: BigMPolicy | None = None
    replay: bool = True
    root_bound: bool = True
    fixed_order: dict | None = None


@dataclass
class BiddingSolution:
    status: str
    case_name: str
    horizon: int
    markets: tuple
    offer_price: dict = field(default_factory=dict)
    bid_price: dict = field(default_factory=dict)
    sell: dict = field(default_factory=dict)
    buy: dict = field(default_factory=dict)
    schedule: StorageSchedule | None = None
    profit: float = 0.0
    revenue: dict = field(default_factory=dict)
    cost: dict = field(default_factory=dict)
    op_cost: float = 0.0
    prices: dict = field(default_factory=dict)      # market -> price at the facility's bus
    lmp: dict = field(default_factory=dict)         # market -> bus -> per-hour price
    milp_objective: float = math.nan
    gap: float = math.nan
    root_bound: float = math.nan
    nodes: int = 0
    engine: str = ""
    num_binaries: int = 0
    substitution_residual: float = math.nan
    kkt_residual: float = math.nan
    dual_m: float = math.nan
    escalations: list = field(default_factory=list)
    bigm_unresolved: bool = False
    bigm_audit: dict = field(default_factory=dict)
    replay: object = None
    warnings: list = field(default_factory=list)
    solve_seconds: float = 0.0
    values: dict = field(default_factory=dict, repr=False)
    milp: BiddingMilp | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.schedule is not None

    def decomposition_residual(self) -> float:
        total = sum(self.revenue.values()) - sum(self.cost.values()) - self.op_cost
        return abs(total - self.profit)


def _idle_solution(case: MarketCase, status: str) -> BiddingSolution:
    T = case.horizon
    zeros = (0.0,) * T
    return BiddingSolution(
        status=status, case_name=case.name, horizon=T, markets=case.markets,
        offer_price={m: zeros for m in case.markets}, bid_price={m: zeros for m in case.markets},
        sell={m: zeros for m in case.markets}, buy={m: zeros for m in case.markets},
        schedule=None, revenue={m: 0.0 for m in case.markets},
        cost={m: 0.0 for m in case.markets})


def read_solution(bm: BiddingMilp, x, status: str) -> BiddingSolution:
    case, spec = bm.case, bm.case.storage
    values = bm.values(x)
    sched = bm.storage.schedule(spec, x)
    sol = BiddingSolution(status=status, case_name=case.name, horizon=case.horizon,
                          markets=case.markets, schedule=sched)
    dt = spec.delta_t
    for m in case.markets:
        lp = bm.lps[m]
        O = tuple(values[offer_name(m, t)] for t in case.hours)
        B = tuple(values[bid_name(m, t)] for t in case.hours)
        P = tuple(_clean(values[lp.variables[j].name]) for j in lp.esf_sell)
        D = tuple(_clean(values[lp.variables[j].name]) for j in lp.esf_buy)
        sol.offer_price[m], sol.bid_price[m], sol.sell[m], sol.buy[m] = O, B, P, D
        sol.revenue[m] = dt * float(np.dot(O, P))
        sol.cost[m] = dt * float(np.dot(B, D))
        lmp = {}
        for (bus, t), row in lp.balance.items():
            lmp.setdefault(bus, [0.0] * case.horizon)[t] = values[f"dual[{lp.constraints[row].name}]"]
        sol.lmp[m] = {b: tuple(v) for b, v in lmp.items()}
        sol.prices[m] = sol.lmp[m][lp.bus_key(case.esf.bus)]
    sol.op_cost = operation_cost(sched, spec)
    sol.profit = sum(sol.revenue.values()) - sum(sol.cost.values()) - sol.op_cost
    sol.values = values
    sol.milp = bm
    return sol


def _clean(v, tol=1e-10):
    return 0.0 if abs(v) < tol else float(v)


def solve_bidding(case: MarketCase, options: BiddingOptions | None = None) -> BiddingSolution:
    """Solve the bidding MILP, audit the big-M constants and replay the result.

    When the audit finds a dual resting on its cap (or the MILP is
    infeasible under the current constants) the dual M is multiplied by
    10 and the model re-solved, at most ``policy.max_escalations`` times.
    """
    options = options or BiddingOptions()
    policy = options.policy or BigMPolicy(case.price_cap)
    escalations = []
    t0 = time.perf_counter()
    while True:
        bm = assemble_bidding_milp(case, policy, options.fixed_order)
        milp_sol = solve_milp(bm.model, options.milp)
        can_escalate = policy.post_check and len(escalations) < policy.max_escalations
        if not milp_sol.has_incumbent:
            if milp_sol.status == "infeasible" and can_escalate:
                escalations.append({"reason": "infeasible", "dual_m": policy.dual_m(None)})
                policy = policy.escalated()
                continue
            sol = _idle_solution(case, milp_sol.status)
            sol.escalations = escalations
            sol.bigm_unresolved = milp_sol.status == "infeasible" and options.fixed_order is None
            sol.engine = milp_sol.engine
            sol.num_binaries = bm.num_binaries
            sol.dual_m = policy.dual_m(None)
            sol.solve_seconds = time.perf_counter() - t0
            if sol.bigm_unresolved:
                sol.warnings.append("bidding MILP infeasible under the big-M policy")
            return sol
        sol = read_solution(bm, milp_sol.x, milp_sol.status)
        audits = {m: audit_bigm(lin, sol.values) for m, lin in bm.lins.items()}
        clean = all(a.clean for a in audits.values())
        if clean or not policy.post_check:
            break
        if not can_escalate:
            sol.bigm_unresolved = True
            sol.warnings.append("big-M audit unresolved after escalation limit")
            break
        escalations.append({"reason": "dual at cap", "dual_m": policy.dual_m(None),
                            "duals": sorted(d for a in audits.values() for d in a.at_cap)})
        policy = policy.escalated()

    sol.bigm_audit = {m: {"both_active": a.both_active, "at_cap": a.at_cap,
                          "max_min_pair": a.max_min_pair} for m, a in audits.items()}
    if not clean and not policy.post_check:
        sol.bigm_unresolved = True
        sol.warnings.append("big-M audit failed (post-check disabled)")
    sol.escalations = escalations
    sol.dual_m = policy.dual_m(None)
    sol.milp_objective = milp_sol.objective
    sol.gap = milp_sol.gap
    sol.nodes = milp_sol.nodes
    sol.engine = milp_sol.engine
    sol.num_binaries = bm.num_binaries
    scale = 1.0 + abs(sol.profit)
    sol.substitution_residual = abs(milp_sol.objective - sol.profit) / scale
    sol.kkt_residual = max(kkt.residuals(sol.values).worst() for kkt in bm.kkts.values())
    if milp_sol.status != "optimal":
        sol.warnings.append(f"MILP stopped early: {milp_sol.status} (gap {milp_sol.gap:.3g})")
    if options.root_bound:
        sol.root_bound = relaxation_bound(bm.model)
    for issue in validate_schedule(sol.schedule, case.storage):
        sol.warnings.append(f"schedule: {issue.message}")
    if options.replay:
        from .replay import replay_check
        sol.replay = replay_check(sol, case)
        if sol.replay.tie:
            sol.warnings.append("replay: lower-level tie resolved optimistically")
        if sol.replay.flagged:
            sol.warnings.append("replay: unexplained deviation")
    sol.solve_seconds = time.perf_counter() - t0
    return sol


def require_solution(sol: BiddingSolution) -> BiddingSolution:
    if not sol.ok:
        raise InfeasibleError(f"bidding problem: {sol.status}")
    return sol


__all__ = ["BiddingMilp", "BiddingOptions", "BiddingSolution", "NamedExpr",
           "LinearizedKkt", "assemble_bidding_milp", "solve_bidding", "read_solution",
           "offer_name", "bid_name", "strategic_map", "require_solution"]
