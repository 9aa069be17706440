"""Regenerate the bundled case files under src/merchant_storage/data/cases.

    python3 scripts/make_cases.py

The 30-bus order books are synthetic (seeded); see
merchant_storage.synthetic.build_case30 for the construction.
"""

from pathlib import Path

from merchant_storage.io import save_case
from merchant_storage.model import EsfParticipant, Genco, MarketCase, OrderBook, Retailer, \
    StorageSpec
from merchant_storage.synthetic import build_case30, monopolist_case

OUT = Path(__file__).resolve().parents[1] / "src" / "merchant_storage" / "data" / "cases"


def toy3() -> MarketCase:
    """Three hours, DA only: buy opportunity in hour 0, sell opportunity in hour 2."""
    spec = StorageSpec(soc_min=0, soc_max=40, soc_initial=10, p_ch_max=30, p_dis_max=30,
                       eta_ch=0.95, eta_dis=0.95, cost_coeff=1.0)
    esf = EsfParticipant("n", spec, {"DA": (0, 0, 40)}, {"DA": (40, 0, 0)})
    gencos = [Genco("g1", "n", {"DA": OrderBook((12, 20, 30), (40, 60, 50))}),
              Genco("g2", "n", {"DA": OrderBook((25, 35, 55), (50, 50, 40))})]
    retailers = [Retailer("r1", "n", {"DA": OrderBook((40, 60, 80), (30, 70, 60))}),
                 Retailer("r2", "n", {"DA": OrderBook((22, 45, 70), (20, 30, 40))})]
    return MarketCase(3, gencos, retailers, esf, 100.0, markets=("DA",), name="toy3")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    save_case(monopolist_case(), OUT / "toy.json",
              igdt={"target": "rival", "robustness_betas": [0.05, 0.1, 0.2],
                    "opportunity_betas": [0.05, 0.1, 0.2]})
    save_case(toy3(), OUT / "toy3.json")
    save_case(build_case30(seed=30, horizon=24), OUT / "case30.json",
              igdt={"target": "rival", "robustness_betas": [0.05, 0.1, 0.2]})


if __name__ == "__main__":
    main()
