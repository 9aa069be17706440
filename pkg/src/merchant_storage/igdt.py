"""Information-gap robustness and opportunity analysis.

Uncertainty follows an envelope-bound model around a nominal price
trajectory, ``|lam - lam_bar| / lam_bar <= alpha * gamma(t)``. Since
market prices are outputs of the clearing, the default target of the
envelope is the rival order prices that drive them: every genco offer and
retailer bid is scaled by ``1 -/+ alpha * gamma(t)``. The alternative
``forecast`` target applies the envelope to an exogenous forecast of the
facility's own price and evaluates the price-taker schedule against it.

Radii are found by bisection on alpha; the worst (best) case is taken at
the envelope vertex, an assumption that every run audits by checking the
evaluated profits for monotonicity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CaseError, MerchantStorageError
from .model import MarketCase, OrderBook

RIVAL = "rival"
FORECAST = "forecast"
ADVERSE, FAVORABLE = "adverse", "favorable"
ROBUSTNESS, OPPORTUNITY = "robustness", "opportunity"


class ConsistencyError(MerchantStorageError):
    pass


@dataclass(frozen=True)
class EnvelopeModel:
    gamma: tuple | None = None      # per-hour weights; None means 1 everywhere
    target: str = RIVAL
    nominal: dict | None = None     # forecast target: market -> per-hour prices
    floor: bool = True

    def __post_init__(self):
        if self.target not in (RIVAL, FORECAST):
            raise CaseError(f"envelope target must be {RIVAL!r} or {FORECAST!r}")
        if self.gamma is not None:
            g = tuple(float(v) for v in self.gamma)
            if any(not (math.isfinite(v) and v >= 0) for v in g):
                raise CaseError("envelope gamma: weights must be finite and >= 0")
            object.__setattr__(self, "gamma", g)

    def weights(self, horizon: int) -> np.ndarray:
        if self.gamma is None:
            return np.ones(horizon)
        if len(self.gamma) != horizon:
            raise CaseError(f"envelope gamma: expected {horizon} values")
        return np.array(self.gamma)


def envelope_factors(envelope: EnvelopeModel, horizon: int, alpha: float, direction: str):
    if alpha < 0:
        raise CaseError("alpha must be >= 0")
    if direction not in (ADVERSE, FAVORABLE):
        raise CaseError(f"direction must be {ADVERSE!r} or {FAVORABLE!r}")
    g = envelope.weights(horizon)
    if direction == ADVERSE:
        if not envelope.floor and np.any(alpha * g >= 1.0):
            raise CaseError("alpha * gamma(t) >= 1 drives prices negative (flooring disabled)")
        return np.maximum(1.0 - alpha * g, 0.0)
    return 1.0 + alpha * g


def scale_prices(prices, factors, cap):
    return tuple(float(min(max(p * f, 0.0), cap)) for p, f in zip(prices, factors))


def realize_envelope(case: MarketCase, envelope: EnvelopeModel, alpha: float,
                     direction: str) -> MarketCase:
    """Case with every rival price moved to the envelope vertex."""
    if envelope.target != RIVAL:
        raise CaseError("realize_envelope applies to the rival-price target")
    f = envelope_factors(envelope, case.horizon, alpha, direction)
    if alpha == 0:
        return case
    cap = case.price_cap

    def book(b):
        return OrderBook(scale_prices(b.price, f, cap), b.cap, b.floor)

    gencos = [replace(g, offers={m: book(b) for m, b in g.offers.items()}) for g in case.gencos]
    retailers = [replace(r, bids={m: book(b) for m, b in r.bids.items()}) for r in case.retailers]
    return replace(case, gencos=gencos, retailers=retailers)


def realize_forecast(nominal: dict, envelope: EnvelopeModel, alpha: float, direction: str,
                     cap: float) -> dict:
    T = len(next(iter(nominal.values())))
    f = envelope_factors(envelope, T, alpha, direction)
    return {m: scale_prices(v, f, cap) for m, v in nominal.items()}


class ProfitEvaluator:
    """Cached profit as a function of (alpha, direction)."""

    def __init__(self, case: MarketCase, envelope: EnvelopeModel | None = None, options=None):
        self.case = case
        self.envelope = envelope or EnvelopeModel()
        self.options = options
        self.cache = {}
        if self.envelope.target == FORECAST:
            from .mpec.price_taker import forecast_prices
            nominal = self.envelope.nominal or forecast_prices(case)
            for m, v in nominal.items():
                if any(p <= 0 for p in v):
                    raise CaseError(f"nominal forecast for {m} must be > 0")
            self.nominal = nominal
        else:
            self.nominal = None

    def profit(self, alpha: float, direction: str = ADVERSE) -> float:
        key = (round(float(alpha), 15), direction if alpha > 0 else "nominal")
        if key not in self.cache:
            self.cache[key] = self._solve(float(alpha), direction)
        return self.cache[key]

    def _solve(self, alpha, direction):
        if self.envelope.target == RIVAL:
            from .mpec.bidding import solve_bidding
            sol = solve_bidding(realize_envelope(self.case, self.envelope, alpha, direction),
                                self.options)
            if not sol.ok:
                raise ConsistencyError(f"bidding problem at alpha={alpha}: {sol.status}")
            return sol.profit
        from .mpec.price_taker import self_schedule
        lam = realize_forecast(self.nominal, self.envelope, alpha, direction,
                               self.case.price_cap)
        return self_schedule(self.case, lam).forecast_profit

    def base(self) -> float:
        return self.profit(0.0)


def base_case(case: MarketCase, options=None) -> float:
    """Nominal profit of the price-maker."""
    return ProfitEvaluator(case, options=options).base()


@dataclass
class InfoGapResult:
    mode: str
    beta: float
    target_profit: float
    base_profit: float
    radius: float | None
    profit_at_radius: float | None
    status: str                  # ok | saturated | unattainable | ill-posed
    tolerance: float
    alpha_max: float
    trace: list = field(default_factory=list)
    monotone_ok: bool = True
    monotone_violations: list = field(default_factory=list)
    envelope_target: str = RIVAL


def _audit(evaluator, direction, scale, tol=1e-6):
    pts = sorted((a, p) for (a, d), p in evaluator.cache.items()
                 if d in (direction, "nominal"))
    bad = []
    for (a0, p0), (a1, p1) in zip(pts, pts[1:]):
        worse = p1 - p0 if direction == ADVERSE else p0 - p1
        if worse > tol * scale:
            bad.append({"alpha_lo": a0, "alpha_hi": a1, "profit_lo": p0, "profit_hi": p1})
    return bad


def robustness(case: MarketCase, beta: float, tolerance: float = 1e-3, alpha_max: float = 1.0,
               envelope: EnvelopeModel | None = None, options=None,
               evaluator: ProfitEvaluator | None = None) -> InfoGapResult:
    """Largest alpha whose adverse vertex still earns ``(1 - beta) * Z_BC``."""
    if not 0 <= beta < 1:
        raise CaseError("robustness: beta must satisfy 0 <= beta < 1")
    ev = evaluator or ProfitEvaluator(case, envelope, options)
    z = ev.base()
    target = (1.0 - beta) * z
    scale = 1.0 + abs(z)
    res = InfoGapResult(ROBUSTNESS, beta, target, z, 0.0, z, "ok", tolerance, alpha_max,
                        envelope_target=ev.envelope.target)
    res.trace.append({"iteration": 0, "alpha": 0.0, "profit": z, "meets_target": True})
    if beta == 0:
        return res
    if ev.profit(0.0) < target - 1e-6 * scale:
        raise ConsistencyError("nominal profit below the critical profit")
    top = ev.profit(alpha_max, ADVERSE)
    res.trace.append({"iteration": 1, "alpha": alpha_max, "profit": top,
                      "meets_target": top >= target})
    if top >= target:
        res.radius, res.profit_at_radius, res.status = alpha_max, top, "saturated"
    else:
        lo, hi = 0.0, alpha_max
        it = 1
        while hi - lo > tolerance:
            it += 1
            mid = 0.5 * (lo + hi)
            p = ev.profit(mid, ADVERSE)
            ok = p >= target
            res.trace.append({"iteration": it, "alpha": mid, "profit": p, "meets_target": ok})
            if ok:
                lo = mid
            else:
                hi = mid
        res.radius, res.profit_at_radius = lo, ev.profit(lo, ADVERSE)
    res.monotone_violations = _audit(ev, ADVERSE, scale)
    res.monotone_ok = not res.monotone_violations
    return res


def opportunity(case: MarketCase, beta: float, tolerance: float = 1e-3, alpha_max: float = 1.0,
                envelope: EnvelopeModel | None = None, options=None,
                evaluator: ProfitEvaluator | None = None) -> InfoGapResult:
    """Smallest alpha whose favourable vertex earns ``(1 + beta) * Z_BC``."""
    if beta < 0:
        raise CaseError("opportunity: beta must be >= 0")
    ev = evaluator or ProfitEvaluator(case, envelope, options)
    z = ev.base()
    target = (1.0 + beta) * z
    scale = 1.0 + abs(z)
    res = InfoGapResult(OPPORTUNITY, beta, target, z, 0.0, z, "ok", tolerance, alpha_max,
                        envelope_target=ev.envelope.target)
    res.trace.append({"iteration": 0, "alpha": 0.0, "profit": z, "meets_target": True})
    if beta == 0:
        return res
    if z <= 0:
        res.radius = res.profit_at_radius = None
        res.status = "ill-posed"
        return res
    top = ev.profit(alpha_max, FAVORABLE)
    res.trace.append({"iteration": 1, "alpha": alpha_max, "profit": top,
                      "meets_target": top >= target})
    if top < target:
        res.radius = res.profit_at_radius = None
        res.status = "unattainable"
    else:
        lo, hi = 0.0, alpha_max
        it = 1
        while hi - lo > tolerance:
            it += 1
            mid = 0.5 * (lo + hi)
            p = ev.profit(mid, FAVORABLE)
            ok = p >= target
            res.trace.append({"iteration": it, "alpha": mid, "profit": p, "meets_target": ok})
            if ok:
                hi = mid
            else:
                lo = mid
        res.radius, res.profit_at_radius = hi, ev.profit(hi, FAVORABLE)
    res.monotone_violations = _audit(ev, FAVORABLE, scale)
    res.monotone_ok = not res.monotone_violations
    return res


@dataclass
class Certificate:
    at_radius: float
    beyond: float | None
    meets_at_radius: bool
    fails_beyond: bool | None


def certify(case: MarketCase, result: InfoGapResult, envelope: EnvelopeModel | None = None,
            options=None) -> Certificate:
    """Independent re-solve at the radius and ``2 * tolerance`` past it."""
    ev = ProfitEvaluator(case, envelope, options)
    scale = 1.0 + abs(result.base_profit)
    direction = ADVERSE if result.mode == ROBUSTNESS else FAVORABLE
    if result.radius is None:
        raise CaseError(f"no radius to certify ({result.status})")
    p = ev.profit(result.radius, direction)
    meets = p >= result.target_profit - 1e-6 * scale
    if result.mode == ROBUSTNESS:
        probe = result.radius + 2 * result.tolerance
        if result.status == "saturated" or probe > result.alpha_max:
            return Certificate(p, None, meets, None)
        q = ev.profit(probe, direction)
        return Certificate(p, q, meets, q < result.target_profit)
    probe = result.radius - 2 * result.tolerance
    if result.radius == 0 or probe < 0:
        return Certificate(p, None, meets, None)
    q = ev.profit(probe, direction)
    return Certificate(p, q, meets, q < result.target_profit)


def sweep(case: MarketCase, betas, mode: str = ROBUSTNESS, tolerance: float = 1e-3,
          alpha_max: float = 1.0, envelope: EnvelopeModel | None = None, options=None) -> list:
    """One result per beta; profits are shared between runs through one cache."""
    ev = ProfitEvaluator(case, envelope, options)
    fn = robustness if mode == ROBUSTNESS else opportunity
    return [fn(case, float(b), tolerance, alpha_max, envelope, options, evaluator=ev)
            for b in betas]
