"""Brute-force price-grid oracle for the bidding problem.

For every combination of the facility's offer/bid prices on a grid, each
market is cleared once to get its optimal welfare ``z*``; a small MILP
then picks the facility's most profitable point of the optimal face
(clearing rows plus ``welfare <= z*``) that respects storage physics.
This is the optimistic bilevel value at that price vector, computed
without KKT conditions or big-M constants.

With ``prune=True`` (single-bus cases only) each price dimension is
restricted to grid points adjacent to a rival price, plus 0 and the
price cap. In a single-bus clearing the optimal face only changes when
the facility's price crosses a rival price, and within one such interval
profit is monotone in the facility's price, so the best grid point of
every interval is among these candidates.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..clearing import EsfMarketOrder, build_clearing_lp
from ..errors import CaseError, InfeasibleError
from ..lp import EQ, LE, LinearModel, LinExpr, MilpOptions, solve_lp, solve_milp
from ..model import NETWORK, MarketCase, operation_cost
from ..storage_block import add_storage_block

MAX_HOURS = 3
MAX_DIMS = 2


class OracleGuardError(CaseError):
    pass


@dataclass
class OracleResult:
    profit: float
    offer_price: dict
    bid_price: dict
    sell: dict
    buy: dict
    schedule: object
    dims: list
    combos: int
    grid: float
    resolution_bound: float
    seconds: float
    candidates: dict = field(default_factory=dict)


def active_dims(case: MarketCase) -> list:
    out = []
    for m in case.markets:
        for t in case.hours:
            if case.esf.sell_cap[m][t] > 0:
                out.append((m, t, "offer"))
            if case.esf.buy_cap[m][t] > 0:
                out.append((m, t, "bid"))
    return out


def _grid(cap, h):
    n = int(math.floor(cap / h + 1e-9))
    pts = [k * h for k in range(n + 1)]
    if cap - pts[-1] > 1e-9:
        pts.append(cap)
    return pts


def _candidates(case, m, t, h, prune):
    cap = case.price_cap
    if not prune:
        return _grid(cap, h)
    rivals = {g.offers[m].price[t] for g in case.gencos if m in g.offers}
    rivals |= {r.bids[m].price[t] for r in case.retailers if m in r.bids}
    pts = {0.0, cap}
    for r in rivals:
        for p in (r - h, r, r + h):
            snapped = round(p / h) * h
            if 0.0 <= snapped <= cap:
                pts.add(float(snapped))
            if 0.0 <= p <= cap:
                pts.add(float(p))
    return sorted(pts)


def resolution_bound(case: MarketCase, h: float) -> float:
    """Profit a continuous price can gain over the best grid price."""
    total = 0.0
    for m in case.markets:
        total += sum(case.esf.sell_cap[m]) + sum(case.esf.buy_cap[m])
    return h * case.storage.delta_t * total


def _evaluate(case, orders, options):
    """Best optimistic profit for fixed orders, or None when infeasible."""
    spec = case.storage
    model = LinearModel("oracle")
    sv = add_storage_block(model, spec, case.horizon)
    obj = LinExpr()
    dis = [LinExpr.var(j, -1.0) for j in sv.p_dis]
    ch = [LinExpr.var(j, -1.0) for j in sv.p_ch]
    cols = {}
    for m, order in orders.items():
        lp = build_clearing_lp(case, order, m)
        base = solve_lp(lp)
        if not base.optimal:
            raise InfeasibleError(f"oracle: {m} clearing {base.status}")
        offset = model.num_vars
        for v in lp.variables:
            model.add_var(v.name, v.lb, v.ub)
        for con in lp.constraints:
            model.add_constraint(con.name, {offset + j: a for j, a in con.coeffs.items()},
                                 con.sense, con.rhs)
        z = base.objective - lp.objective.const
        model.add_constraint(f"{m}.face", {offset + j: c for j, c in lp.objective.terms.items()},
                             LE, z + 1e-9 * (1.0 + abs(z)))
        for t in case.hours:
            p, d = offset + lp.esf_sell[t], offset + lp.esf_buy[t]
            obj.add_term(p, spec.delta_t * order.offer_price[t])
            obj.add_term(d, -spec.delta_t * order.bid_price[t])
            dis[t].add_term(p, 1.0)
            ch[t].add_term(d, 1.0)
        cols[m] = (offset, lp)
    for t in case.hours:
        model.add_constraint(f"couple_dis[{t}]", dis[t], EQ, 0.0)
        model.add_constraint(f"couple_ch[{t}]", ch[t], EQ, 0.0)
    obj.iadd(sv.op_cost, -1.0)
    model.set_objective(obj, "max")
    model.freeze()
    sol = solve_milp(model, options)
    if not sol.has_incumbent:
        return None
    sched = sv.schedule(spec, sol.x)
    sell = {m: tuple(float(sol.x[o + j]) for j in lp.esf_sell) for m, (o, lp) in cols.items()}
    buy = {m: tuple(float(sol.x[o + j]) for j in lp.esf_buy) for m, (o, lp) in cols.items()}
    profit = spec.delta_t * sum(
        float(np.dot(orders[m].offer_price, sell[m]) - np.dot(orders[m].bid_price, buy[m]))
        for m in orders) - operation_cost(sched, spec)
    return profit, sell, buy, sched


def grid_oracle(case: MarketCase, grid: float = 1.0, prune: bool | None = None,
                max_dims: int = MAX_DIMS, max_hours: int = MAX_HOURS,
                force: bool = False) -> OracleResult:
    """Enumerate the facility's price grid; see the module docstring.

    Raises :class:`OracleGuardError` beyond ``max_hours`` hours or
    ``max_dims`` active price dimensions unless ``force`` is set.
    """
    if not grid > 0:
        raise CaseError("oracle grid must be > 0")
    dims = active_dims(case)
    if not force and (case.horizon > max_hours or len(dims) > max_dims):
        raise OracleGuardError(
            f"oracle limited to {max_hours} hours and {max_dims} active price dimensions "
            f"(case has {case.horizon} hours, {len(dims)} dimensions)")
    if prune is None:
        prune = case.mode != NETWORK
    if prune and case.mode == NETWORK:
        raise CaseError("candidate pruning is only valid for single-bus clearing")
    t0 = time.perf_counter()
    cands = {d: _candidates(case, d[0], d[1], grid, prune) for d in dims}
    options = MilpOptions(engine="bnb")
    T = case.horizon
    best = None
    combos = 0
    for choice in itertools.product(*(cands[d] for d in dims)):
        combos += 1
        offer = {m: [case.price_cap] * T for m in case.markets}
        bid = {m: [0.0] * T for m in case.markets}
        for (m, t, side), price in zip(dims, choice):
            (offer if side == "offer" else bid)[m][t] = price
        orders = {m: EsfMarketOrder(m, offer[m], case.esf.sell_cap[m], bid[m],
                                    case.esf.buy_cap[m]) for m in case.markets}
        out = _evaluate(case, orders, options)
        if out is None:
            continue
        if best is None or out[0] > best[0] + 1e-9:
            best = (out[0], offer, bid, out[1], out[2], out[3])
    if best is None:
        raise InfeasibleError("oracle: no feasible price combination")
    profit, offer, bid, sell, buy, sched = best
    return OracleResult(profit, {m: tuple(v) for m, v in offer.items()},
                        {m: tuple(v) for m, v in bid.items()}, sell, buy, sched,
                        [list(d) for d in dims], combos, grid, resolution_bound(case, grid),
                        time.perf_counter() - t0,
                        {f"{m}[{t}].{s}": v for (m, t, s), v in cands.items()})
