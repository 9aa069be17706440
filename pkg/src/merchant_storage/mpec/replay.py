"""Replay a bidding solution through stand-alone market clearing.

The MILP selects, among tied lower-level optima, the one best for the
facility. A plain clearing run may land elsewhere in that optimal face.
Every deviation is therefore classified: it is a *tie* when the MILP's
lower-level point attains the replay's optimal welfare (both are optima
of the same LP), and a *dual tie* when the MILP's prices are an optimal
dual of the replayed LP. Anything else is flagged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..clearing import EsfMarketOrder, build_clearing_lp, clear_market, hour_slice
from ..lp import LE, solve_lp

TOL = 1e-6


@dataclass
class MarketReplay:
    market: str
    sell: tuple
    buy: tuple
    prices: tuple
    quantity_dev: float
    price_dev: float
    welfare_gap: float
    milp_point_violation: float
    dual_consistent: bool
    revenue: float
    cost: float


@dataclass
class ReplayReport:
    markets: dict
    profit_milp: float
    profit_replay: float
    profit_dev: float
    residual: float
    scale: float
    tie: bool
    dual_tie: bool
    flagged: bool
    price_ties: list = field(default_factory=list)
    faces: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def explained(self) -> bool:
        return not self.flagged


def _rival_prices(case, market, t):
    out = set()
    for g in case.gencos:
        if market in g.offers:
            out.add(g.offers[market].price[t])
    for r in case.retailers:
        if market in r.bids:
            out.add(r.bids[market].price[t])
    return out


def optimal_face(case, order: EsfMarketOrder, market: str, t: int, tol=1e-7):
    """Range of the facility's cleared sell/buy over the hour's optimal face."""
    sub = hour_slice(case, t)
    o = EsfMarketOrder(market, (order.offer_price[t],), (order.offer_cap[t],),
                       (order.bid_price[t],), (order.bid_cap[t],))
    lp = build_clearing_lp(sub, o, market)
    base = solve_lp(lp)
    if not base.optimal:
        return None
    face = lp.copy()
    face.add_constraint("face", dict(lp.objective.terms), LE,
                        base.objective - lp.objective.const + tol * (1 + abs(base.objective)))
    out = {}
    for label, j in (("sell", lp.esf_sell[0]), ("buy", lp.esf_buy[0])):
        lo_hi = []
        for sense in ("min", "max"):
            probe = face.copy()
            probe.set_objective({j: 1.0}, sense)
            res = solve_lp(probe.freeze())
            lo_hi.append(float(res.x[j]) if res.optimal else float("nan"))
        out[label] = tuple(lo_hi)
    return out


def replay_check(sol, case, tol: float = TOL, faces: bool = True) -> ReplayReport:
    bm = sol.milp
    spec = case.storage
    dt = spec.delta_t
    markets = {}
    scale = 1.0 + abs(sol.profit)
    q_scale = 1.0 + max([max(v, default=0.0) for v in case.esf.sell_cap.values()]
                        + [max(v, default=0.0) for v in case.esf.buy_cap.values()])
    tie = dual_tie = False
    unexplained = []
    for m in case.markets:
        order = EsfMarketOrder(m, np.clip(sol.offer_price[m], 0, case.price_cap),
                               case.esf.sell_cap[m], np.clip(sol.bid_price[m], 0, case.price_cap),
                               case.esf.buy_cap[m])
        res = clear_market(case, order, m)
        lp = res.model
        # MILP lower-level point, evaluated in the replay LP
        x_milp = np.array([sol.values[v.name] for v in lp.variables])
        viol = lp.max_violation(x_milp)
        welfare_gap = lp.evaluate_objective(x_milp) - res.welfare_objective
        dq = max(float(np.max(np.abs(np.subtract(res.esf_sell, sol.sell[m])), initial=0.0)),
                 float(np.max(np.abs(np.subtract(res.esf_buy, sol.buy[m])), initial=0.0)))
        dp = float(np.max(np.abs(np.subtract(res.esf_price, sol.prices[m])), initial=0.0))
        kkt = bm.kkts[m]
        point = {v.name: float(res.x[j]) for j, v in enumerate(lp.variables)}
        point.update({d.name: sol.values[d.name] for d in kkt.duals})
        point.update({p: sol.values[p] for p in kkt.params})
        dual_ok = kkt.residuals(point).worst() <= tol * scale
        rev = dt * float(np.dot(order.offer_price, res.esf_sell))
        cost = dt * float(np.dot(order.bid_price, res.esf_buy))
        markets[m] = MarketReplay(m, res.esf_sell, res.esf_buy, res.esf_price, dq, dp,
                                  float(welfare_gap), float(viol), dual_ok, rev, cost)
        point_is_optimum = viol <= tol * q_scale and abs(welfare_gap) <= tol * scale
        if dq > tol * q_scale:
            if point_is_optimum:
                tie = True
            else:
                unexplained.append(f"{m}: cleared quantities differ by {dq:.3g}")
        if dp > tol * (1 + case.price_cap):
            if dual_ok:
                dual_tie = True
            elif dq > tol * q_scale and point_is_optimum:
                tie = True
            else:
                unexplained.append(f"{m}: prices differ by {dp:.3g}")

    # realised profit of the replayed dispatch; operation cost on the replayed powers
    p_dis = np.sum([markets[m].sell for m in case.markets], axis=0)
    p_ch = np.sum([markets[m].buy for m in case.markets], axis=0)
    op = spec.cost_coeff * dt * float(np.sum(p_dis) + np.sum(p_ch))
    profit_replay = sum(r.revenue - r.cost for r in markets.values()) - op
    profit_dev = sol.profit - profit_replay
    if abs(profit_dev) > tol * scale and not tie:
        unexplained.append(f"profit differs by {profit_dev:.3g}")

    report = ReplayReport(
        markets=markets, profit_milp=sol.profit, profit_replay=profit_replay,
        profit_dev=profit_dev,
        residual=max([abs(profit_dev) / scale] + [r.quantity_dev / q_scale for r in markets.values()]),
        scale=scale, tie=tie, dual_tie=dual_tie, flagged=bool(unexplained), notes=unexplained)
    if tie and profit_dev > tol * scale:
        report.notes.append("stand-alone clearing realises a tie less favourable to the facility")
    for m in case.markets:
        for t in case.hours:
            rivals = _rival_prices(case, m, t)
            for side, price, cap in (("offer", sol.offer_price[m][t], case.esf.sell_cap[m][t]),
                                     ("bid", sol.bid_price[m][t], case.esf.buy_cap[m][t])):
                if cap > 0 and any(abs(price - r) <= 1e-9 for r in rivals):
                    report.price_ties.append({"market": m, "hour": t, "side": side,
                                              "price": price})
    if faces and (tie or report.price_ties) and case.mode != "network":
        hours = sorted({(p["market"], p["hour"]) for p in report.price_ties})
        for m in case.markets:
            for t in case.hours:
                if markets[m].quantity_dev > tol * q_scale:
                    hours.append((m, t))
        for m, t in sorted(set(hours)):
            order = EsfMarketOrder(m, np.clip(sol.offer_price[m], 0, case.price_cap),
                                   case.esf.sell_cap[m], np.clip(sol.bid_price[m], 0, case.price_cap),
                                   case.esf.buy_cap[m])
            report.faces[f"{m}[{t}]"] = optimal_face(case, order, m, t)
    return report
