"""Case data model and storage physics.

Units: power in MW, energy in MWh, prices in currency/MWh, time in hours.
Hours are indexed from 0; ``soc[t]`` is the state of charge at the *end*
of hour ``t`` so ``soc[T-1]`` is the terminal state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .errors import CaseError, ScheduleShapeError

MARKETS = ("DA", "RT")
SINGLE_BUS = "single-bus"
NETWORK = "network"

SOC_TOL = 1e-9


def _tuple(values, name, length=None):
    try:
        out = tuple(float(v) for v in values)
    except TypeError as exc:
        raise CaseError(f"{name}: expected a sequence of numbers") from exc
    if any(not math.isfinite(v) for v in out):
        raise CaseError(f"{name}: values must be finite")
    if length is not None and len(out) != length:
        raise CaseError(f"{name}: expected {length} values, got {len(out)}")
    return out


@dataclass(frozen=True)
class StorageSpec:
    soc_min: float
    soc_max: float
    soc_initial: float
    p_ch_max: float
    p_dis_max: float
    eta_ch: float = 1.0
    eta_dis: float = 1.0
    cost_coeff: float = 0.0
    p_ch_min: float = 0.0
    p_dis_min: float = 0.0
    delta_t: float = 1.0

    def __post_init__(self):
        for name in ("soc_min", "soc_max", "soc_initial", "p_ch_min", "p_ch_max",
                     "p_dis_min", "p_dis_max", "eta_ch", "eta_dis", "cost_coeff", "delta_t"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise CaseError(f"storage.{name}: must be a finite number")
            object.__setattr__(self, name, float(value))
        if not 0 <= self.soc_min <= self.soc_initial <= self.soc_max:
            raise CaseError("storage: requires 0 <= soc_min <= soc_initial <= soc_max")
        if not 0 < self.eta_ch <= 1:
            raise CaseError("storage.eta_ch: must lie in (0, 1]")
        if not 0 < self.eta_dis <= 1:
            raise CaseError("storage.eta_dis: must lie in (0, 1]")
        if not 0 <= self.p_ch_min <= self.p_ch_max:
            raise CaseError("storage: requires 0 <= p_ch_min <= p_ch_max")
        if not 0 <= self.p_dis_min <= self.p_dis_max:
            raise CaseError("storage: requires 0 <= p_dis_min <= p_dis_max")
        if self.cost_coeff < 0:
            raise CaseError("storage.cost_coeff: must be >= 0")
        if self.delta_t <= 0:
            raise CaseError("storage.delta_t: must be > 0")


@dataclass(frozen=True)
class StorageSchedule:
    p_ch: tuple
    p_dis: tuple
    x: tuple
    y: tuple
    soc: tuple

    def __post_init__(self):
        object.__setattr__(self, "p_ch", tuple(float(v) for v in self.p_ch))
        object.__setattr__(self, "p_dis", tuple(float(v) for v in self.p_dis))
        object.__setattr__(self, "x", tuple(int(round(v)) for v in self.x))
        object.__setattr__(self, "y", tuple(int(round(v)) for v in self.y))
        object.__setattr__(self, "soc", tuple(float(v) for v in self.soc))
        lengths = {len(self.p_ch), len(self.p_dis), len(self.x), len(self.y), len(self.soc)}
        if len(lengths) != 1:
            raise ScheduleShapeError("schedule fields have inconsistent lengths")

    @property
    def horizon(self):
        return len(self.soc)

    @classmethod
    def idle(cls, spec: StorageSpec, horizon: int) -> "StorageSchedule":
        zeros = (0.0,) * horizon
        return cls(zeros, zeros, (0,) * horizon, (0,) * horizon, (spec.soc_initial,) * horizon)

    @classmethod
    def from_powers(cls, spec: StorageSpec, p_ch: Sequence[float], p_dis: Sequence[float]):
        """Build a schedule by replaying ``soc_step``; flags follow the powers."""
        soc, prev = [], spec.soc_initial
        for c, d in zip(p_ch, p_dis):
            prev = soc_step(prev, c, d, spec)
            soc.append(prev)
        x = [1 if c > 0 else 0 for c in p_ch]
        y = [1 if d > 0 else 0 for d in p_dis]
        return cls(p_ch, p_dis, x, y, soc)


@dataclass(frozen=True)
class Violation:
    equation: int
    hour: int | None
    message: str
    amount: float = 0.0


def soc_step(soc_prev: float, p_ch: float, p_dis: float, spec: StorageSpec) -> float:
    """One step of the state-of-charge recursion. No clamping."""
    return soc_prev + spec.delta_t * (p_ch * spec.eta_ch - p_dis / spec.eta_dis)


def validate_schedule(s: StorageSchedule, spec: StorageSpec, horizon: int | None = None,
                      tol: float = SOC_TOL) -> list[Violation]:
    """Return every violated storage constraint, tagged by constraint number and hour.

    Tags: 1 SOC recursion, 2 SOC bounds, 3 charge bounds/gating, 4 discharge
    bounds/gating, 5 cyclic terminal state, 7 charge/discharge exclusivity.
    An empty list means the schedule is feasible.
    """
    if horizon is not None and s.horizon != horizon:
        raise ScheduleShapeError(f"schedule has {s.horizon} hours, case has {horizon}")
    out = []
    prev = spec.soc_initial
    for t in range(s.horizon):
        c, d, x, y, soc = s.p_ch[t], s.p_dis[t], s.x[t], s.y[t], s.soc[t]
        resid = soc - soc_step(prev, c, d, spec)
        if abs(resid) > tol:
            out.append(Violation(1, t, "SOC recursion residual", resid))
        if soc < spec.soc_min - tol or soc > spec.soc_max + tol:
            out.append(Violation(2, t, "SOC outside [soc_min, soc_max]", soc))
        if c < spec.p_ch_min * x - tol or c > spec.p_ch_max * x + tol:
            out.append(Violation(3, t, "charge power outside flag-gated bounds", c))
        if d < spec.p_dis_min * y - tol or d > spec.p_dis_max * y + tol:
            out.append(Violation(4, t, "discharge power outside flag-gated bounds", d))
        if x + y > 1:
            out.append(Violation(7, t, "simultaneous charge and discharge"))
        prev = soc
    if s.horizon and abs(s.soc[-1] - spec.soc_initial) > tol:
        out.append(Violation(5, None, "terminal SOC differs from initial SOC",
                             s.soc[-1] - spec.soc_initial))
    return out


def operation_cost(s: StorageSchedule, spec: StorageSpec) -> float:
    return spec.cost_coeff * spec.delta_t * sum(
        x * c + y * d for x, c, y, d in zip(s.x, s.p_ch, s.y, s.p_dis))


# -- market case -------------------------------------------------------------


@dataclass(frozen=True)
class OrderBook:
    """Per-hour price and quantity limits of one participant in one market."""

    price: tuple
    cap: tuple
    floor: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "price", _tuple(self.price, "price"))
        object.__setattr__(self, "cap", _tuple(self.cap, "cap"))
        if self.floor is not None:
            object.__setattr__(self, "floor", _tuple(self.floor, "floor"))


@dataclass(frozen=True)
class Genco:
    name: str
    bus: object
    offers: Mapping[str, OrderBook]


@dataclass(frozen=True)
class Retailer:
    name: str
    bus: object
    bids: Mapping[str, OrderBook]


@dataclass(frozen=True)
class EsfParticipant:
    bus: object
    storage: StorageSpec
    sell_cap: Mapping[str, tuple]
    buy_cap: Mapping[str, tuple]

    def __post_init__(self):
        object.__setattr__(self, "sell_cap",
                           {m: _tuple(v, f"esf.sell_cap.{m}") for m, v in self.sell_cap.items()})
        object.__setattr__(self, "buy_cap",
                           {m: _tuple(v, f"esf.buy_cap.{m}") for m, v in self.buy_cap.items()})


@dataclass(frozen=True)
class Line:
    name: str
    from_bus: object
    to_bus: object
    x: float
    f_max: float = math.inf


@dataclass(frozen=True)
class NetworkSpec:
    buses: tuple
    lines: tuple
    reference: object
    base_mva: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        if len(set(self.buses)) != len(self.buses):
            raise CaseError("network.buses: duplicate bus id")
        known = set(self.buses)
        if self.reference not in known:
            raise CaseError(f"network.reference: unknown bus {self.reference!r}")
        names = set()
        adj = {b: set() for b in self.buses}
        for ln in self.lines:
            if ln.name in names:
                raise CaseError(f"network.lines: duplicate line name {ln.name!r}")
            names.add(ln.name)
            if ln.from_bus not in known or ln.to_bus not in known:
                raise CaseError(f"line {ln.name}: unknown bus")
            if ln.from_bus == ln.to_bus:
                raise CaseError(f"line {ln.name}: self loop")
            if not ln.x > 0:
                raise CaseError(f"line {ln.name}: reactance must be > 0")
            if not ln.f_max > 0:
                raise CaseError(f"line {ln.name}: flow limit must be > 0")
            adj[ln.from_bus].add(ln.to_bus)
            adj[ln.to_bus].add(ln.from_bus)
        seen, stack = {self.reference}, [self.reference]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        if len(seen) != len(self.buses):
            raise CaseError("network: graph is not connected")


@dataclass(frozen=True)
class MarketCase:
    horizon: int
    gencos: tuple
    retailers: tuple
    esf: EsfParticipant
    price_cap: float
    network: NetworkSpec | None = None
    mode: str = SINGLE_BUS
    markets: tuple = MARKETS
    net_load: tuple | None = None
    name: str = "case"
    meta: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "gencos", tuple(self.gencos))
        object.__setattr__(self, "retailers", tuple(self.retailers))
        object.__setattr__(self, "markets", tuple(self.markets))
        self._validate()

    def _validate(self):
        T = self.horizon
        if not isinstance(T, int) or T < 1:
            raise CaseError("horizon: must be a positive integer")
        if not (math.isfinite(self.price_cap) and self.price_cap > 0):
            raise CaseError("price_cap: must be finite and > 0")
        if self.mode not in (SINGLE_BUS, NETWORK):
            raise CaseError(f"mode: must be {SINGLE_BUS!r} or {NETWORK!r}")
        if self.mode == NETWORK and self.network is None:
            raise CaseError("mode 'network' requires a network block")
        for m in self.markets:
            if m not in MARKETS:
                raise CaseError(f"markets: unknown market {m!r}")
        names = set()
        for who, books in ([(g, g.offers) for g in self.gencos]
                           + [(r, r.bids) for r in self.retailers]):
            if who.name in names:
                raise CaseError(f"duplicate participant name {who.name!r}")
            names.add(who.name)
            for m, book in books.items():
                if m not in self.markets:
                    raise CaseError(f"{who.name}: order book for inactive market {m!r}")
                self._check_book(f"{who.name}.{m}", book)
            self._check_bus(who.name, who.bus)
        self._check_bus("esf", self.esf.bus)
        for label, caps in (("sell_cap", self.esf.sell_cap), ("buy_cap", self.esf.buy_cap)):
            for m in self.markets:
                if m not in caps:
                    raise CaseError(f"esf.{label}: missing market {m!r}")
                vals = _tuple(caps[m], f"esf.{label}.{m}", T)
                if any(v < 0 for v in vals):
                    raise CaseError(f"esf.{label}.{m}: caps must be >= 0")
        if self.net_load is not None and len(self.net_load) != T:
            raise CaseError("net_load: length must equal horizon")

    def _check_book(self, label, book: OrderBook):
        T = self.horizon
        price = _tuple(book.price, f"{label}.price", T)
        cap = _tuple(book.cap, f"{label}.cap", T)
        if any(p < 0 or p > self.price_cap for p in price):
            raise CaseError(f"{label}.price: prices must lie in [0, price_cap]")
        if any(c < 0 for c in cap):
            raise CaseError(f"{label}.cap: quantity caps must be >= 0")
        if book.floor is not None:
            floor = _tuple(book.floor, f"{label}.floor", T)
            if any(f < 0 or f > c for f, c in zip(floor, cap)):
                raise CaseError(f"{label}.floor: requires 0 <= floor <= cap")

    def _check_bus(self, who, bus):
        if self.mode == NETWORK and bus not in set(self.network.buses):
            raise CaseError(f"{who}: bus {bus!r} not in network")

    @property
    def storage(self) -> StorageSpec:
        return self.esf.storage

    @property
    def hours(self):
        return range(self.horizon)

    def with_storage(self, storage: StorageSpec) -> "MarketCase":
        return replace(self, esf=replace(self.esf, storage=storage))

    def truncated(self, horizon: int) -> "MarketCase":
        """Keep the first ``horizon`` hours of every per-hour series."""
        if not 1 <= horizon <= self.horizon:
            raise CaseError("truncated: horizon out of range")

        def cut_book(book):
            return OrderBook(book.price[:horizon], book.cap[:horizon],
                             None if book.floor is None else book.floor[:horizon])

        gencos = [replace(g, offers={m: cut_book(b) for m, b in g.offers.items()})
                  for g in self.gencos]
        retailers = [replace(r, bids={m: cut_book(b) for m, b in r.bids.items()})
                     for r in self.retailers]
        esf = replace(self.esf,
                      sell_cap={m: tuple(v[:horizon]) for m, v in self.esf.sell_cap.items()},
                      buy_cap={m: tuple(v[:horizon]) for m, v in self.esf.buy_cap.items()})
        net_load = None if self.net_load is None else tuple(self.net_load[:horizon])
        return replace(self, horizon=horizon, gencos=gencos, retailers=retailers,
                       esf=esf, net_load=net_load)
