"""Day-ahead / real-time market clearing for fixed ESF orders, and the
price-quota-curve scheduling mode.

The clearing LP minimises offered cost minus bid value (negative social
welfare) subject to power balance, participant quantity limits and, in
network mode, DC power flow with two-sided line limits. Bus prices are the
duals of the balance rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CaseError, InfeasibleError
from .lp import EQ, MIN, LinearModel, LinExpr, MilpOptions, solve_lp, solve_milp
from .model import NETWORK, MarketCase, OrderBook, StorageSchedule, StorageSpec
from .storage_block import add_storage_block

SYSTEM = "system"


@dataclass(frozen=True)
class EsfMarketOrder:
    market: str
    offer_price: tuple
    offer_cap: tuple
    bid_price: tuple
    bid_cap: tuple

    def __post_init__(self):
        for name in ("offer_price", "offer_cap", "bid_price", "bid_cap"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))

    @classmethod
    def idle(cls, case: MarketCase, market: str) -> "EsfMarketOrder":
        """An order that cannot clear: zero quantity on both sides."""
        T = case.horizon
        return cls(market, (case.price_cap,) * T, (0.0,) * T, (0.0,) * T, (0.0,) * T)

    @classmethod
    def at_prices(cls, case: MarketCase, market: str, offer_price, bid_price) -> "EsfMarketOrder":
        """Order at the given prices with the case's full quantity caps."""
        return cls(market, offer_price, case.esf.sell_cap[market], bid_price,
                   case.esf.buy_cap[market])

    def validate(self, case: MarketCase):
        T = case.horizon
        if self.market not in case.markets:
            raise CaseError(f"order for inactive market {self.market!r}")
        for name in ("offer_price", "offer_cap", "bid_price", "bid_cap"):
            if len(getattr(self, name)) != T:
                raise CaseError(f"order.{name}: expected {T} values")
        for p in self.offer_price + self.bid_price:
            if not 0 <= p <= case.price_cap + 1e-9:
                raise CaseError("order prices must lie in [0, price_cap]")
        for q, cap in zip(self.offer_cap, case.esf.sell_cap[self.market]):
            if not 0 <= q <= cap + 1e-9:
                raise CaseError("order.offer_cap exceeds the ESF sell cap")
        for q, cap in zip(self.bid_cap, case.esf.buy_cap[self.market]):
            if not 0 <= q <= cap + 1e-9:
                raise CaseError("order.bid_cap exceeds the ESF buy cap")


class ClearingModel(LinearModel):
    """Clearing LP plus index maps from market entities to columns/rows."""

    def __init__(self, case: MarketCase, market: str):
        super().__init__(f"clearing_{market}")
        self.case = case
        self.market = market
        self.network_mode = case.mode == NETWORK
        self.esf_sell: list[int] = []
        self.esf_buy: list[int] = []
        self.gen: dict = {}
        self.dem: dict = {}
        self.theta: dict = {}
        self.flow: dict = {}
        self.balance: dict = {}
        self.flowdef: dict = {}

    def bus_key(self, bus):
        return bus if self.network_mode else SYSTEM

    def balance_row(self, bus, t) -> int:
        return self.balance[(self.bus_key(bus), t)]


def _bounds(book: OrderBook, t):
    lo = 0.0 if book.floor is None else book.floor[t]
    return lo, book.cap[t]


def build_clearing_lp(case: MarketCase, order: EsfMarketOrder, market: str) -> ClearingModel:
    if case.mode == NETWORK and case.network is None:
        raise CaseError("network mode without a network")
    if order.market != market:
        raise CaseError(f"order is for {order.market!r}, not {market!r}")
    order.validate(case)
    m = market
    lp = ClearingModel(case, m)
    obj = LinExpr()
    buses = list(case.network.buses) if lp.network_mode else [SYSTEM]
    esf_bus = lp.bus_key(case.esf.bus)
    for t in case.hours:
        inj = {b: LinExpr() for b in buses}
        p = lp.add_var(f"{m}.esf_sell[{t}]", 0.0, order.offer_cap[t])
        d = lp.add_var(f"{m}.esf_buy[{t}]", 0.0, order.bid_cap[t])
        lp.esf_sell.append(p)
        lp.esf_buy.append(d)
        obj.add_term(p, order.offer_price[t])
        obj.add_term(d, -order.bid_price[t])
        inj[esf_bus].add_term(p, 1.0).add_term(d, -1.0)
        for g in case.gencos:
            book = g.offers.get(m)
            if book is None:
                continue
            j = lp.add_var(f"{m}.gen[{g.name},{t}]", *_bounds(book, t))
            lp.gen[(g.name, t)] = j
            obj.add_term(j, book.price[t])
            inj[lp.bus_key(g.bus)].add_term(j, 1.0)
        for r in case.retailers:
            book = r.bids.get(m)
            if book is None:
                continue
            i = lp.add_var(f"{m}.dem[{r.name},{t}]", *_bounds(book, t))
            lp.dem[(r.name, t)] = i
            obj.add_term(i, -book.price[t])
            inj[lp.bus_key(r.bus)].add_term(i, -1.0)
        if lp.network_mode:
            net = case.network
            for b in net.buses:
                if b != net.reference:
                    lp.theta[(b, t)] = lp.add_var(f"{m}.theta[{b},{t}]", -math.inf, math.inf)
            for ln in net.lines:
                f = lp.add_var(f"{m}.flow[{ln.name},{t}]", -ln.f_max, ln.f_max)
                lp.flow[(ln.name, t)] = f
                inj[ln.from_bus].add_term(f, -1.0)
                inj[ln.to_bus].add_term(f, 1.0)
                k = net.base_mva / ln.x
                row = LinExpr.var(f)
                if (ln.from_bus, t) in lp.theta:
                    row.add_term(lp.theta[(ln.from_bus, t)], -k)
                if (ln.to_bus, t) in lp.theta:
                    row.add_term(lp.theta[(ln.to_bus, t)], k)
                lp.flowdef[(ln.name, t)] = lp.add_constraint(f"{m}.flowdef[{ln.name},{t}]", row,
                                                             EQ, 0.0)
        for b in buses:
            name = f"{m}.balance[{b},{t}]" if lp.network_mode else f"{m}.balance[{t}]"
            lp.balance[(b, t)] = lp.add_constraint(name, inj[b], EQ, 0.0)
    lp.set_objective(obj, MIN)
    return lp.freeze()


@dataclass
class ClearingResult:
    market: str
    esf_sell: tuple
    esf_buy: tuple
    gen: dict
    dem: dict
    prices: dict           # bus -> per-hour price (bus "system" in single-bus mode)
    esf_price: tuple       # price at the ESF bus
    flows: dict
    duals: np.ndarray
    dual_names: list
    welfare_objective: float
    x: np.ndarray = field(repr=False, default=None)
    model: ClearingModel = field(repr=False, default=None)

    def balance_residual(self) -> float:
        arr = self.model.arrays()
        rows = list(self.model.balance.values())
        return float(np.max(np.abs(arr.A[rows] @ self.x - arr.b[rows]), initial=0.0))


def extract_clearing(lp: ClearingModel, x, duals) -> ClearingResult:
    case = lp.case
    T = case.horizon
    prices = {}
    for (b, t), row in lp.balance.items():
        prices.setdefault(b, [0.0] * T)[t] = float(duals[row])
    prices = {b: tuple(v) for b, v in prices.items()}
    gen, dem, flows = {}, {}, {}
    for (name, t), j in lp.gen.items():
        gen.setdefault(name, [0.0] * T)[t] = float(x[j])
    for (name, t), j in lp.dem.items():
        dem.setdefault(name, [0.0] * T)[t] = float(x[j])
    for (name, t), j in lp.flow.items():
        flows.setdefault(name, [0.0] * T)[t] = float(x[j])
    return ClearingResult(
        market=lp.market,
        esf_sell=tuple(float(x[j]) for j in lp.esf_sell),
        esf_buy=tuple(float(x[j]) for j in lp.esf_buy),
        gen={k: tuple(v) for k, v in gen.items()},
        dem={k: tuple(v) for k, v in dem.items()},
        prices=prices,
        esf_price=prices[lp.bus_key(case.esf.bus)],
        flows={k: tuple(v) for k, v in flows.items()},
        duals=np.asarray(duals, dtype=float),
        dual_names=[c.name for c in lp.constraints],
        welfare_objective=float(lp.evaluate_objective(x)),
        x=np.asarray(x, dtype=float),
        model=lp,
    )


def clear_market(case: MarketCase, order: EsfMarketOrder | None, market: str,
                 engine: str = "simplex") -> ClearingResult:
    """Clear one market for a fixed ESF order (``None`` means the ESF abstains)."""
    if order is None:
        order = EsfMarketOrder.idle(case, market)
    lp = build_clearing_lp(case, order, market)
    sol = solve_lp(lp, engine=engine)
    if sol.status == "infeasible":
        raise InfeasibleError(f"{market} clearing is infeasible", sol.infeasible_rows)
    if sol.status != "optimal":
        raise InfeasibleError(f"{market} clearing status: {sol.status}")
    res = extract_clearing(lp, sol.x, sol.duals)
    res.lp_solution = sol
    return res


def hour_slice(case: MarketCase, t: int) -> MarketCase:
    """One-hour sub-case (the clearing LP has no inter-hour coupling)."""

    def cut(book):
        return OrderBook((book.price[t],), (book.cap[t],),
                         None if book.floor is None else (book.floor[t],))

    gencos = [replace(g, offers={m: cut(b) for m, b in g.offers.items()}) for g in case.gencos]
    retailers = [replace(r, bids={m: cut(b) for m, b in r.bids.items()}) for r in case.retailers]
    esf = replace(case.esf, sell_cap={m: (v[t],) for m, v in case.esf.sell_cap.items()},
                  buy_cap={m: (v[t],) for m, v in case.esf.buy_cap.items()})
    return replace(case, horizon=1, gencos=gencos, retailers=retailers, esf=esf, net_load=None)


# -- price-quota curves --------------------------------------------------------


@dataclass(frozen=True)
class PriceQuotaCurve:
    """Step functions for one hour.

    ``sell_steps`` is a sequence of ``(quota_upper, price)``: selling a quota
    ``q`` in ``(prev_upper, quota_upper]`` realises ``price`` for the whole
    quota. ``buy_steps`` likewise maps a purchased quota to the unit price
    paid. Quota uppers must be strictly increasing.
    """

    sell_steps: tuple = ()
    buy_steps: tuple = ()

    def __post_init__(self):
        for label in ("sell_steps", "buy_steps"):
            steps = tuple((float(q), float(p)) for q, p in getattr(self, label))
            prev = 0.0
            for q, p in steps:
                if not q > prev:
                    raise CaseError(f"{label}: quota uppers must be strictly increasing and > 0")
                if not (math.isfinite(p) and p >= 0):
                    raise CaseError(f"{label}: prices must be finite and >= 0")
                prev = q
            object.__setattr__(self, label, steps)
        prices = [p for _, p in self.sell_steps]
        if any(b > a for a, b in zip(prices, prices[1:])):
            raise CaseError("sell_steps: generation price-quota curve must be non-increasing")

    def sell_price(self, q):
        return _step_value(self.sell_steps, q)

    def buy_price(self, q):
        return _step_value(self.buy_steps, q)


def _step_value(steps, q):
    if q <= 0:
        return 0.0
    for upper, price in steps:
        if q <= upper + 1e-12:
            return price
    raise ValueError(f"quota {q} beyond the curve")


def _add_step_choice(model, steps, prefix, t):
    """Quota ``q = sum w_k`` with at most one active step; returns (q expr, value expr)."""
    q, value, flags = LinExpr(), LinExpr(), {}
    prev = 0.0
    for k, (upper, price) in enumerate(steps):
        z = model.add_var(f"{prefix}.z[{t},{k}]", 0.0, 1.0, "binary")
        w = model.add_var(f"{prefix}.w[{t},{k}]", 0.0, upper)
        model.add_constraint(f"{prefix}.wlo[{t},{k}]", {w: 1.0, z: -prev}, ">=", 0.0)
        model.add_constraint(f"{prefix}.whi[{t},{k}]", {w: 1.0, z: -upper}, "<=", 0.0)
        flags[z] = 1.0
        q.add_term(w, 1.0)
        value.add_term(w, price)
        prev = upper
    if flags:
        model.add_constraint(f"{prefix}.one[{t}]", flags, "<=", 1.0)
    return q, value


def schedule_against_quota(curves, spec: StorageSpec, options: MilpOptions | None = None):
    """Maximise quota revenue minus purchase cost and operation cost.

    Returns ``(StorageSchedule, profit)``.
    """
    curves = list(curves)
    if not curves:
        raise CaseError("schedule_against_quota: no curves")
    T = len(curves)
    model = LinearModel("quota")
    sv = add_storage_block(model, spec, T)
    objective = LinExpr()
    for t, curve in enumerate(curves):
        sell_q, revenue = _add_step_choice(model, curve.sell_steps, "sell", t)
        buy_q, cost = _add_step_choice(model, curve.buy_steps, "buy", t)
        model.add_constraint(f"couple_dis[{t}]", sell_q - LinExpr.var(sv.p_dis[t]), EQ, 0.0)
        model.add_constraint(f"couple_ch[{t}]", buy_q - LinExpr.var(sv.p_ch[t]), EQ, 0.0)
        objective.iadd(revenue, spec.delta_t).iadd(cost, -spec.delta_t)
    objective.iadd(sv.op_cost, -1.0)
    model.set_objective(objective, "max")
    model.freeze()
    sol = solve_milp(model, options or MilpOptions(engine="auto"))
    if not sol.has_incumbent:
        raise InfeasibleError(f"quota scheduling: {sol.status}")
    sched = sv.schedule(spec, sol.x)
    return sched, quota_profit(curves, sched, spec)


def quota_profit(curves, sched: StorageSchedule, spec: StorageSpec) -> float:
    """Direct profit of a schedule against quota curves (used as a check)."""
    from .model import operation_cost
    total = 0.0
    for t, curve in enumerate(curves):
        total += spec.delta_t * (curve.sell_price(sched.p_dis[t]) * sched.p_dis[t]
                                 - curve.buy_price(sched.p_ch[t]) * sched.p_ch[t])
    return total - operation_cost(sched, spec)


def idle_schedule(spec: StorageSpec, T: int) -> StorageSchedule:
    return StorageSchedule.idle(spec, T)
