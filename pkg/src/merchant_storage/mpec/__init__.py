"""Bilevel bidding: KKT derivation, big-M linearisation, MILP assembly and checks."""

from .bidding import (BiddingMilp, BiddingOptions, BiddingSolution, assemble_bidding_milp,
                      solve_bidding)
from .kkt import (BigMPolicy, KktSystem, audit_bigm, derive_kkt, linearize,
                  linearize_revenue)
from .oracle import OracleGuardError, grid_oracle
from .price_taker import forecast_prices, price_taker_profit, self_schedule
from .replay import replay_check

__all__ = [
    "BiddingMilp", "BiddingOptions", "BiddingSolution", "BigMPolicy", "KktSystem",
    "OracleGuardError", "assemble_bidding_milp", "audit_bigm", "derive_kkt", "forecast_prices",
    "grid_oracle", "linearize", "linearize_revenue", "price_taker_profit", "replay_check",
    "self_schedule", "solve_bidding",
]
