"""Seeded synthetic cases: small random markets and toy constructions."""

from __future__ import annotations

import math

import numpy as np

from .model import (NETWORK, EsfParticipant, Genco, Line, MarketCase, NetworkSpec, OrderBook,
                    Retailer, StorageSpec)


def random_small_case(seed: int, max_hours: int = 3, active: int = 2,
                      price_cap: float = 100.0) -> MarketCase:
    """Single-bus case with integer prices and ``active`` nonzero ESF caps.

    The active dimensions always include one sell and one buy opportunity
    in different hours, so that arbitrage is possible.
    """
    rng = np.random.default_rng(seed)
    T = int(rng.integers(2, max_hours + 1))
    markets = ("DA", "RT") if rng.random() < 0.5 else ("DA",)

    slots = [(m, t) for m in markets for t in range(T)]
    sell = {m: [0.0] * T for m in markets}
    buy = {m: [0.0] * T for m in markets}
    order = rng.permutation(len(slots))
    m_s, t_s = slots[order[0]]
    m_b, t_b = next(slots[i] for i in order[1:] if slots[i][1] != t_s)
    sell[m_s][t_s] = float(rng.integers(10, 60))
    buy[m_b][t_b] = float(rng.integers(10, 60))
    extra = active - 2
    for i in order[1:]:
        if extra <= 0:
            break
        m, t = slots[i]
        side = sell if rng.random() < 0.5 else buy
        other = buy if side is sell else sell
        if side[m][t] == 0.0 and other[m][t] == 0.0:
            side[m][t] = float(rng.integers(10, 60))
            extra -= 1

    # tilt rival prices so the facility's selling hour tends to be dear and its
    # buying hour cheap; otherwise most draws leave no spread worth trading
    def prices(lo, hi, tilt):
        lo_t = [lo + tilt if sell_hour else lo for sell_hour in sell_hours]
        hi_t = [hi - tilt if buy_hour else hi for buy_hour in buy_hours]
        return tuple(float(rng.integers(min(a, b), max(a, b) + 1)) for a, b in zip(lo_t, hi_t))

    sell_hours = [any(sell[m][t] > 0 for m in markets) for t in range(T)]
    buy_hours = [any(buy[m][t] > 0 for m in markets) for t in range(T)]
    gencos = []
    for k in range(int(rng.integers(1, 3))):
        gencos.append(Genco(f"g{k}", "n", {
            m: OrderBook(prices(5, 70, 25), tuple(float(v) for v in rng.integers(10, 80, size=T)))
            for m in markets}))
    retailers = []
    for k in range(int(rng.integers(1, 3))):
        retailers.append(Retailer(f"r{k}", "n", {
            m: OrderBook(prices(20, 95, 25), tuple(float(v) for v in rng.integers(10, 80, size=T)))
            for m in markets}))

    soc_max = float(rng.integers(20, 80))
    storage = StorageSpec(
        soc_min=0.0, soc_max=soc_max, soc_initial=float(rng.integers(0, int(soc_max) + 1)),
        p_ch_max=float(rng.integers(10, 50)), p_dis_max=float(rng.integers(10, 50)),
        eta_ch=float(rng.choice([1.0, 0.95, 0.9])), eta_dis=float(rng.choice([1.0, 0.95, 0.9])),
        cost_coeff=float(rng.choice([0.0, 1.0, 2.0])))
    esf = EsfParticipant("n", storage, {m: tuple(v) for m, v in sell.items()},
                         {m: tuple(v) for m, v in buy.items()})
    return MarketCase(T, gencos, retailers, esf, price_cap, markets=markets,
                      name=f"random_{seed}")


def monopolist_case(cost_coeff: float = 2.0) -> MarketCase:
    """Two hours: the facility is the only seller in hour 0 (retailer bid 50,
    demand 80) and must recharge in hour 1 from a genco offering at 10.

    Optimal: sell 80 at 50, buy 80 at 10; profit ``3200 - 160*cost_coeff``.
    """
    spec = StorageSpec(soc_min=0, soc_max=80, soc_initial=80, p_ch_max=80, p_dis_max=80,
                       cost_coeff=cost_coeff)
    esf = EsfParticipant("b", spec, {"DA": (100, 100)}, {"DA": (100, 100)})
    return MarketCase(2, [Genco("g", "b", {"DA": OrderBook((10, 10), (0, 100))})],
                      [Retailer("r", "b", {"DA": OrderBook((50, 50), (80, 0))})],
                      esf, 100.0, markets=("DA",), name="monopolist")


def strict_maker_case() -> MarketCase:
    """Price-maker beats price-taker strictly.

    Hour 0: G1 offers 50 MW at 20, G2 30 MW at 40, a retailer bids 100 MW
    at 60. The facility (50 MWh stored) can sell up to 50 MW. Hour 1: a
    genco at 5 with ample capacity (and a small 8-priced load that pins
    the price at 5) lets it recharge.
    """
    spec = StorageSpec(soc_min=0, soc_max=50, soc_initial=50, p_ch_max=50, p_dis_max=50)
    esf = EsfParticipant("b", spec, {"DA": (50, 0)}, {"DA": (0, 50)})
    gencos = [Genco("g1", "b", {"DA": OrderBook((20, 5), (50, 200))}),
              Genco("g2", "b", {"DA": OrderBook((40, 40), (30, 0))})]
    retailers = [Retailer("r", "b", {"DA": OrderBook((60, 8), (100, 10))})]
    return MarketCase(2, gencos, retailers, esf, 100.0, markets=("DA",), name="strict_maker")


def three_bus_case(f_max: float = 30.0, horizon: int = 1) -> MarketCase:
    """Triangle network: cheap genco at bus 1, expensive at bus 2, load at bus 3.

    With the 1-2 line limited to ``f_max`` the cheap power is bottled up
    and bus 2 and 3 prices rise above bus 1.
    """
    T = horizon
    net = NetworkSpec((1, 2, 3), (Line("l12", 1, 2, 0.1, f_max), Line("l23", 2, 3, 0.1),
                                  Line("l13", 1, 3, 0.1)), 1)
    spec = StorageSpec(soc_min=0, soc_max=40, soc_initial=20, p_ch_max=20, p_dis_max=20)
    esf = EsfParticipant(3, spec, {"DA": (0.0,) * T}, {"DA": (0.0,) * T})
    gencos = [Genco("g1", 1, {"DA": OrderBook((10.0,) * T, (200.0,) * T)}),
              Genco("g2", 2, {"DA": OrderBook((40.0,) * T, (200.0,) * T)})]
    retailers = [Retailer("r2", 2, {"DA": OrderBook((90.0,) * T, (60.0,) * T)}),
                 Retailer("r3", 3, {"DA": OrderBook((90.0,) * T, (90.0,) * T)})]
    return MarketCase(T, gencos, retailers, esf, 100.0, network=net, mode=NETWORK,
                      markets=("DA",), name="three_bus")


# IEEE 30-bus branch list: (from, to, reactance in p.u.)
CASE30_BRANCHES = (
    (1, 2, 0.0575), (1, 3, 0.1652), (2, 4, 0.1737), (3, 4, 0.0379), (2, 5, 0.1983),
    (2, 6, 0.1763), (4, 6, 0.0414), (5, 7, 0.1160), (6, 7, 0.0820), (6, 8, 0.0420),
    (6, 9, 0.2080), (6, 10, 0.5560), (9, 11, 0.2080), (9, 10, 0.1100), (4, 12, 0.2560),
    (12, 13, 0.1400), (12, 14, 0.2559), (12, 15, 0.1304), (12, 16, 0.1987), (14, 15, 0.1997),
    (16, 17, 0.1923), (15, 18, 0.2185), (18, 19, 0.1292), (19, 20, 0.0680), (10, 20, 0.2090),
    (10, 17, 0.0845), (10, 21, 0.0749), (10, 22, 0.1499), (21, 22, 0.0236), (15, 23, 0.2020),
    (22, 24, 0.1790), (23, 24, 0.2700), (24, 25, 0.3292), (25, 26, 0.3800), (25, 27, 0.2087),
    (28, 27, 0.3960), (27, 29, 0.4153), (27, 30, 0.6027), (29, 30, 0.4533), (8, 28, 0.2000),
    (6, 28, 0.0599),
)

# (bus, capacity MW, base offer price)
CASE30_GENCOS = ((1, 140.0, 14.0), (2, 90.0, 18.0), (5, 60.0, 34.0), (8, 60.0, 38.0),
                 (11, 50.0, 44.0), (13, 50.0, 52.0))

# (bus, peak demand MW, base bid price); the loads of the standard case
# aggregated onto ten retail buses
CASE30_RETAILERS = ((2, 25.0, 78.0), (4, 20.0, 82.0), (7, 30.0, 75.0), (8, 35.0, 80.0),
                    (10, 25.0, 85.0), (12, 25.0, 72.0), (15, 20.0, 88.0), (19, 20.0, 70.0),
                    (21, 30.0, 90.0), (30, 20.0, 76.0))

# normalised daily load shape
CASE30_PROFILE = (0.62, 0.58, 0.56, 0.55, 0.57, 0.63, 0.72, 0.82, 0.90, 0.95, 0.97, 0.98,
                  0.96, 0.95, 0.94, 0.95, 0.98, 1.00, 0.99, 0.96, 0.90, 0.82, 0.74, 0.67)

# lines with finite ratings (MW); the rest are unconstrained
CASE30_LIMITS = {"l2_4": 25.0, "l2_6": 40.0, "l6_28": 40.0}


def build_case30(seed: int = 30, horizon: int = 24, esf_bus: int = 4) -> MarketCase:
    """Synthetic order books on the 30-bus topology.

    Offer prices follow a merit order with seeded hourly noise; RT books
    deviate from DA by a few percent. Demand follows a daily profile.
    Ratings on a few lines around bus 2 make the cheap bus-1/bus-2 output
    partly undeliverable at peak, which lowers the bus-2 price. The
    facility may buy up to 200 MW and sell up to 100 MW in each market.
    """
    rng = np.random.default_rng(seed)
    T = horizon
    profile = np.array(CASE30_PROFILE[:T]) if T <= 24 else np.resize(CASE30_PROFILE, T)
    lines = tuple(Line(f"l{a}_{b}", a, b, x, CASE30_LIMITS.get(f"l{a}_{b}", math.inf))
                  for a, b, x in CASE30_BRANCHES)
    net = NetworkSpec(tuple(range(1, 31)), lines, 1)

    def series(values):
        return tuple(float(round(v, 2)) for v in values)

    gencos = []
    for k, (bus, cap, price) in enumerate(CASE30_GENCOS):
        da = np.clip(price * (1 + 0.15 * (profile - profile.mean()))
                     + rng.normal(0, 1.0, T), 1, 99)
        rt = np.clip(da * (1 + rng.normal(0, 0.04, T)), 1, 99)
        gencos.append(Genco(f"G{k + 1}", bus, {
            "DA": OrderBook(series(da), (cap,) * T),
            "RT": OrderBook(series(rt), series(np.full(T, 0.5 * cap)))}))
    retailers = []
    for k, (bus, peak, price) in enumerate(CASE30_RETAILERS):
        d = peak * profile * (1 + rng.normal(0, 0.03, T))
        bid = np.clip(price + rng.normal(0, 1.5, T), 1, 99)
        rt_bid = np.clip(bid * (1 + rng.normal(0, 0.04, T)), 1, 99)
        retailers.append(Retailer(f"R{k + 1}", bus, {
            "DA": OrderBook(series(bid), series(d)),
            "RT": OrderBook(series(rt_bid), series(0.2 * d))}))
    storage = StorageSpec(soc_min=20.0, soc_max=300.0, soc_initial=100.0, p_ch_max=200.0,
                          p_dis_max=100.0, eta_ch=0.95, eta_dis=0.95, cost_coeff=1.0)
    esf = EsfParticipant(esf_bus, storage, {m: (100.0,) * T for m in MARKET_PAIR},
                         {m: (200.0,) * T for m in MARKET_PAIR})
    return MarketCase(T, gencos, retailers, esf, 100.0, network=net, mode=NETWORK,
                      markets=MARKET_PAIR, name="case30")


MARKET_PAIR = ("DA", "RT")
