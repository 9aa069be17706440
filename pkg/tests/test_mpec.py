import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from merchant_storage.clearing import EsfMarketOrder, build_clearing_lp, clear_market
from merchant_storage.errors import BigMPolicyError, DerivationError
from merchant_storage.lp import LE, MAX, LinearModel, MilpOptions, solve_lp
from merchant_storage.model import (EsfParticipant, Genco, MarketCase, OrderBook, Retailer,
                                    StorageSpec, validate_schedule)
from merchant_storage.mpec import (BiddingOptions, BigMPolicy, assemble_bidding_milp, derive_kkt,
                                   forecast_prices, grid_oracle, linearize, linearize_revenue,
                                   price_taker_profit, replay_check, self_schedule,
                                   solve_bidding)
from merchant_storage.mpec.bidding import strategic_map
from merchant_storage.mpec.oracle import OracleGuardError
from merchant_storage.synthetic import (monopolist_case, random_small_case, strict_maker_case,
                                        three_bus_case)


def one_var_lp(c=3.0, u=5.0):
    m = LinearModel("one")
    m.add_var("x", 0.0, u)
    m.set_objective({0: c}, MAX)
    return m


def zero_capacity_case():
    spec = StorageSpec(soc_min=10, soc_max=10, soc_initial=10, p_ch_max=0, p_dis_max=0)
    esf = EsfParticipant("b", spec, {"DA": (50, 50)}, {"DA": (50, 50)})
    return MarketCase(2, [Genco("g", "b", {"DA": OrderBook((10, 40), (100, 100))})],
                      [Retailer("r", "b", {"DA": OrderBook((60, 60), (50, 50))})],
                      esf, 100.0, markets=("DA",), name="zero_cap")


class TestDeriveKkt:
    def test_textbook_one_variable(self):
        kkt = derive_kkt(one_var_lp())
        (row,) = kkt.stationarity
        # min -3x: -3 - lo + up = 0
        assert row.coeffs == {"lo[x]": -1.0, "up[x]": 1.0}
        assert row.rhs == 3.0
        pairs = {p.name: (p.slack, p.slack_const) for p in kkt.pairs}
        assert pairs == {"lo[x]": ({"x": 1.0}, 0.0), "up[x]": ({"x": -1.0}, 5.0)}

    def test_point_satisfies_conditions(self):
        lp = one_var_lp()
        sol = solve_lp(lp)
        kkt = derive_kkt(lp)
        vals = kkt.point(sol.x, sol.duals, sol.reduced_costs, {})
        assert vals["up[x]"] == pytest.approx(3.0)
        assert kkt.residuals(vals).worst() <= 1e-12

    def test_unknown_strategic_variable(self):
        with pytest.raises(DerivationError, match="not in the model"):
            derive_kkt(one_var_lp(), {"nope": ("p", 1.0)})

    def test_parameter_clash(self):
        with pytest.raises(DerivationError, match="clashes"):
            derive_kkt(one_var_lp(), {"x": ("x", 1.0)})

    def test_clearing_residuals(self):
        case = three_bus_case()
        order = EsfMarketOrder.at_prices(case, "DA", (35.0,), (5.0,))
        lp = build_clearing_lp(case, order, "DA")
        sol = solve_lp(lp)
        kkt = derive_kkt(lp, strategic_map(lp))
        params = {"DA.offer[0]": 35.0, "DA.bid[0]": 5.0}
        vals = kkt.point(sol.x, sol.duals, sol.reduced_costs, params)
        assert kkt.residuals(vals).worst() <= 1e-6


class TestRevenueSubstitution:
    @pytest.mark.parametrize("offer, bid", [(35.0, 5.0), (20.0, 0.0), (45.0, 12.0)])
    def test_matches_bilinear(self, offer, bid):
        case = three_bus_case()
        lp = build_clearing_lp(case, EsfMarketOrder.at_prices(case, "DA", (offer,), (bid,)), "DA")
        sol = solve_lp(lp)
        kkt = derive_kkt(lp, strategic_map(lp))
        vals = kkt.point(sol.x, sol.duals, sol.reduced_costs,
                         {"DA.offer[0]": offer, "DA.bid[0]": bid})
        direct = offer * vals["DA.esf_sell[0]"] - bid * vals["DA.esf_buy[0]"]
        assert linearize_revenue(kkt).value(vals) == pytest.approx(direct, abs=1e-6)

    def test_only_own_bounds(self):
        # no rivals: the dual objective is made of the ESF's own bound terms
        m = LinearModel("own")
        s = m.add_var("s", 0.0, 40.0)
        m.set_objective({s: 1.0})
        kkt = derive_kkt(m, {"s": ("p", 1.0)})
        expr = linearize_revenue(kkt)
        assert expr.coeffs == {"up[s]": -40.0}


class TestBigM:
    def test_rows(self):
        kkt = derive_kkt(one_var_lp())
        model, lin = linearize(kkt, BigMPolicy(price_cap=10.0, dual_multiplier=10.0))
        row = model.constraints[model.con_index("bigm_p[up[x]]")]
        u = model.var_index("cmp[up[x]]")
        x = model.var_index("x")
        assert row.coeffs == {x: -1.0, u: -5.0} and row.rhs == -5.0
        row = model.constraints[model.con_index("bigm_d[up[x]]")]
        assert row.coeffs == {model.var_index("up[x]"): 1.0, u: 100.0} and row.rhs == 100.0
        assert model.has_var("cmp[lo[x]]")
        assert model.con_index("cmp_link[x]") >= 0

    def test_unbounded_slack(self):
        m = LinearModel("free")
        m.add_var("x", 0.0, math.inf)
        m.add_constraint("r", {0: 1.0}, LE, 10.0)
        with pytest.raises(BigMPolicyError, match="no finite bound"):
            linearize(derive_kkt(m), BigMPolicy(price_cap=10.0))

    def test_policy_validation(self):
        with pytest.raises(BigMPolicyError):
            BigMPolicy(price_cap=-1.0)

    def test_escalation(self):
        pol = BigMPolicy(price_cap=10.0)
        assert pol.escalated().dual_m(None) == 1000.0


class TestSolveBidding:
    def test_zero_capacity(self):
        sol = solve_bidding(zero_capacity_case())
        assert sol.ok
        assert sol.profit == pytest.approx(0.0, abs=1e-9)
        assert max(sol.schedule.p_ch + sol.schedule.p_dis) == 0.0

    def test_monopolist(self):
        sol = solve_bidding(monopolist_case())
        assert sol.ok
        assert sol.offer_price["DA"][0] == pytest.approx(50.0)
        assert sol.sell["DA"][0] == pytest.approx(80.0)
        assert sol.revenue["DA"] == pytest.approx(4000.0)
        assert sol.profit == pytest.approx(4000.0 - 800.0 - 320.0)
        assert sol.decomposition_residual() <= 1e-9

    def test_monopolist_matches_oracle(self):
        case = monopolist_case()
        assert solve_bidding(case).profit == pytest.approx(grid_oracle(case, force=True).profit,
                                                        abs=1e-6)

    def test_schedule_is_physical(self):
        case = strict_maker_case()
        sol = solve_bidding(case)
        assert validate_schedule(sol.schedule, case.esf.storage, tol=1e-9) == []

    def test_network_bidding(self):
        sol = solve_bidding(three_bus_case(horizon=2))
        assert sol.ok
        assert sol.kkt_residual <= 1e-6
        assert not sol.replay.flagged

    def test_rt_market(self):
        case = random_small_case(3)
        sol = solve_bidding(case)
        assert sol.ok
        assert set(sol.markets) == set(case.markets)

    def test_engines_agree(self):
        case = strict_maker_case()
        a = solve_bidding(case, BiddingOptions(milp=MilpOptions(engine="bnb")))
        b = solve_bidding(case, BiddingOptions(milp=MilpOptions(engine="highs")))
        assert a.profit == pytest.approx(b.profit, abs=1e-6)

    def test_root_bound(self):
        sol = solve_bidding(strict_maker_case())
        assert sol.milp_objective <= sol.root_bound + 1e-6 * max(1.0, abs(sol.milp_objective))

    def test_assembled_model_counts(self):
        bm = assemble_bidding_milp(monopolist_case())
        assert bm.num_binaries == len(bm.model.binaries) > 0


class TestReplay:
    def test_tie_is_explained(self):
        case = monopolist_case()
        sol = solve_bidding(case)
        rep = sol.replay
        assert rep.tie and not rep.flagged
        assert rep.price_ties
        assert rep.faces

    def test_clean_case(self):
        sol = solve_bidding(strict_maker_case())
        rep = replay_check(sol, strict_maker_case())
        assert not rep.flagged
        assert rep.residual <= 1e-6 * rep.scale or rep.tie or rep.dual_tie

    def test_tiny_big_m_is_flagged(self):
        pol = BigMPolicy(price_cap=100.0, override=1e-3, post_check=False)
        sol = solve_bidding(monopolist_case(), BiddingOptions(policy=pol))
        assert sol.bigm_unresolved
        assert not sol.ok
        assert any("big-M" in w for w in sol.warnings)

    def test_escalation_exhausts(self):
        pol = BigMPolicy(price_cap=100.0, override=1e-3)
        sol = solve_bidding(monopolist_case(), BiddingOptions(policy=pol))
        assert len(sol.escalations) == pol.max_escalations
        assert sol.bigm_unresolved


class TestPriceTaker:
    def test_flat_forecast_lossy(self):
        case = zero_capacity_case()
        spec = StorageSpec(soc_min=0, soc_max=50, soc_initial=25, p_ch_max=20, p_dis_max=20,
                           eta_ch=0.9, eta_dis=0.9)
        case = MarketCase(2, case.gencos, case.retailers,
                          EsfParticipant("b", spec, {"DA": (50, 50)}, {"DA": (50, 50)}),
                          100.0, markets=("DA",))
        plan = self_schedule(case, {"DA": (30.0, 30.0)})
        assert plan.forecast_profit == pytest.approx(0.0)
        assert max(plan.schedule.p_ch + plan.schedule.p_dis) == 0.0

    def test_two_hour_spread(self):
        spec = StorageSpec(soc_min=0, soc_max=40, soc_initial=20, p_ch_max=20, p_dis_max=20)
        case = MarketCase(2, [], [], EsfParticipant("b", spec, {"DA": (50, 50)},
                                                    {"DA": (50, 50)}),
                          100.0, markets=("DA",))
        plan = self_schedule(case, {"DA": (10.0, 60.0)})
        assert plan.schedule.p_ch == pytest.approx((20.0, 0.0))
        assert plan.schedule.p_dis == pytest.approx((0.0, 20.0))
        assert plan.forecast_profit == pytest.approx(1000.0)

    def test_forecast_is_idle_clearing(self):
        case = strict_maker_case()
        fc = forecast_prices(case)
        assert fc["DA"] == pytest.approx(clear_market(case, None, "DA").esf_price)

    def test_strict_dominance(self):
        case = strict_maker_case()
        maker = solve_bidding(case).profit
        taker = price_taker_profit(case).realized_profit
        assert maker == pytest.approx(1750.0)
        assert taker == pytest.approx(1100.0)
        assert maker > taker

    @pytest.mark.parametrize("seed", range(6))
    def test_dominance_random(self, seed):
        case = random_small_case(seed)
        assert solve_bidding(case).profit >= price_taker_profit(case).realized_profit - 1e-6


class TestOracle:
    def test_guard(self):
        with pytest.raises(OracleGuardError):
            grid_oracle(three_bus_case(horizon=4))

    @given(st.integers(0, 10_000))
    @settings(max_examples=5, deadline=None)
    def test_milp_not_below_oracle(self, seed):
        case = random_small_case(seed)
        oracle = grid_oracle(case)
        sol = solve_bidding(case)
        assert sol.profit >= oracle.profit - 1e-4 * max(1.0, abs(oracle.profit))
        assert sol.profit <= oracle.profit + oracle.resolution_bound + 1e-6
