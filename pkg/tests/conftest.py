import numpy as np
import pytest

from merchant_storage.model import (EsfParticipant, Genco, MarketCase, OrderBook, Retailer,
                                    StorageSpec)


@pytest.fixture
def spec():
    return StorageSpec(soc_min=10, soc_max=100, soc_initial=50, p_ch_max=20, p_dis_max=20,
                       eta_ch=0.9, eta_dis=0.9, cost_coeff=2.0)


def one_hour_case(gen_price=30.0, gen_cap=100.0, bid=50.0, demand=80.0, floor=None,
                  storage=None):
    """1 genco, 1 retailer, idle storage; single bus, DA only."""
    storage = storage or StorageSpec(soc_min=0, soc_max=0, soc_initial=0, p_ch_max=0,
                                     p_dis_max=0)
    esf = EsfParticipant("n", storage, {"DA": (0.0,)}, {"DA": (0.0,)})
    return MarketCase(1, [Genco("g", "n", {"DA": OrderBook((gen_price,), (gen_cap,))})],
                      [Retailer("r", "n", {"DA": OrderBook((bid,), (demand,),
                                                           None if floor is None else (floor,))})],
                      esf, 100.0, markets=("DA",), name="one_hour")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
