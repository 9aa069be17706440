"""Price-taker benchmark.

A price taker schedules against a price forecast as if its own orders
could not move prices, then submits quantity-only orders priced at the
forecast. The realised outcome is the optimistic clearing of those fixed
orders under the storage constraints (the same machinery as the
price-maker, with every price and cap pinned).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..clearing import EsfMarketOrder, clear_market
from ..lp import EQ, LinearModel, LinExpr, MilpOptions, solve_milp
from ..model import MarketCase, StorageSchedule, operation_cost
from ..storage_block import add_storage_block
from .bidding import BiddingOptions, BiddingSolution, solve_bidding


def forecast_prices(case: MarketCase) -> dict:
    """Prices at the facility's bus when it stays out of both markets."""
    return {m: clear_market(case, None, m).esf_price for m in case.markets}


@dataclass
class SelfSchedule:
    schedule: StorageSchedule
    sell: dict
    buy: dict
    forecast_profit: float


def self_schedule(case: MarketCase, forecast: dict, options: MilpOptions | None = None
                  ) -> SelfSchedule:
    """Maximise ``sum dt * lam * (sell - buy) - operation cost`` under storage physics."""
    spec = case.storage
    model = LinearModel("self_schedule")
    sv = add_storage_block(model, spec, case.horizon)
    obj = LinExpr()
    sells, buys = {}, {}
    for m in case.markets:
        sells[m], buys[m] = [], []
        for t in case.hours:
            p = model.add_var(f"{m}.sell[{t}]", 0.0, case.esf.sell_cap[m][t])
            d = model.add_var(f"{m}.buy[{t}]", 0.0, case.esf.buy_cap[m][t])
            sells[m].append(p)
            buys[m].append(d)
            obj.add_term(p, spec.delta_t * forecast[m][t])
            obj.add_term(d, -spec.delta_t * forecast[m][t])
    for t in case.hours:
        model.add_constraint(f"couple_dis[{t}]",
                             {**{sells[m][t]: 1.0 for m in case.markets}, sv.p_dis[t]: -1.0},
                             EQ, 0.0)
        model.add_constraint(f"couple_ch[{t}]",
                             {**{buys[m][t]: 1.0 for m in case.markets}, sv.p_ch[t]: -1.0},
                             EQ, 0.0)
    obj.iadd(sv.op_cost, -1.0)
    model.set_objective(obj, "max")
    model.freeze()
    sol = solve_milp(model, options or MilpOptions(engine="auto"))
    sched = sv.schedule(spec, sol.x)
    sell = {m: tuple(_clean(sol.x[j]) for j in sells[m]) for m in case.markets}
    buy = {m: tuple(_clean(sol.x[j]) for j in buys[m]) for m in case.markets}
    profit = spec.delta_t * sum(float(np.dot(forecast[m], np.subtract(sell[m], buy[m])))
                                for m in case.markets) - operation_cost(sched, spec)
    return SelfSchedule(sched, sell, buy, profit)


def _clean(v, tol=1e-10):
    return 0.0 if abs(v) < tol else float(v)


@dataclass
class PriceTakerResult:
    forecast: dict
    plan: SelfSchedule
    status: str                 # "cleared" or "abstain"
    realized_profit: float
    realized: BiddingSolution | None


def price_taker_profit(case: MarketCase, forecast: dict | None = None,
                       options: BiddingOptions | None = None) -> PriceTakerResult:
    """Schedule against ``forecast`` (default: clearing prices without the
    facility) and realise the plan with orders priced at the forecast.

    If the fixed orders admit no clearing outcome compatible with the
    storage constraints, the facility abstains and earns 0.
    """
    forecast = forecast or forecast_prices(case)
    plan = self_schedule(case, forecast)
    orders = {}
    for m in case.markets:
        price = tuple(float(np.clip(p, 0.0, case.price_cap)) for p in forecast[m])
        orders[m] = EsfMarketOrder(m, price, plan.sell[m], price, plan.buy[m])
    base = options or BiddingOptions()
    opts = BiddingOptions(milp=base.milp, policy=base.policy, replay=base.replay,
                          root_bound=base.root_bound,
                          fixed_order=orders)
    realized = solve_bidding(case, opts)
    if not realized.ok:
        return PriceTakerResult(forecast, plan, "abstain", 0.0, None)
    return PriceTakerResult(forecast, plan, "cleared", realized.profit, realized)
