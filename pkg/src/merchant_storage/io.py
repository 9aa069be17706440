"""Case files, run reports and CSV outputs."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import CaseError
from .model import (MARKETS, SINGLE_BUS, EsfParticipant, Genco, Line, MarketCase, NetworkSpec,
                    OrderBook, Retailer, StorageSpec)

SCHEMA_VERSION = 1
SIG_DIGITS = 9

SCHEDULE_COLUMNS = ["hour", "p_ch", "p_dis", "soc", "da_sell", "da_buy", "rt_sell", "rt_buy",
                    "offer", "bid"]
LMP_COLUMNS = ["hour", "bus", "lmp"]
IGDT_COLUMNS = ["beta", "radius", "profit"]


def case_schema() -> dict:
    text = resources.files("merchant_storage").joinpath("data/case.schema.json").read_text()
    return json.loads(text)


def _path(err) -> str:
    parts = [str(p) for p in err.absolute_path]
    return ".".join(parts) if parts else "(root)"


@dataclass
class LoadedCase:
    case: MarketCase
    igdt: dict
    warnings: list
    digest: str


def validate_payload(data, strict: bool = True) -> list:
    """Schema-check a case payload; returns warnings (lenient unknown fields)."""
    validator = jsonschema.Draft202012Validator(case_schema())
    warnings, errors = [], []
    for err in sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path)):
        if err.validator == "additionalProperties" and not strict:
            warnings.append(f"{_path(err)}: {err.message}")
        else:
            errors.append(f"{_path(err)}: {err.message}")
    if errors:
        raise CaseError("case schema violation: " + "; ".join(errors))
    return warnings


def _book(d):
    return OrderBook(d["price"], d["cap"], d.get("floor"))


_STORAGE_FIELDS = ("soc_min", "soc_max", "soc_initial", "p_ch_min", "p_ch_max", "p_dis_min",
                   "p_dis_max", "eta_ch", "eta_dis", "cost_coeff", "delta_t")


def case_from_dict(data: dict, strict: bool = True) -> tuple:
    """Build a MarketCase; returns ``(case, igdt block, warnings)``."""
    warnings = validate_payload(data, strict)
    try:
        st = data["esf"]["storage"]
        storage = StorageSpec(**{k: float(st[k]) for k in _STORAGE_FIELDS if k in st})
    except CaseError as exc:
        raise CaseError(f"esf.{exc}") from None
    network = None
    if "network" in data:
        n = data["network"]
        lines = tuple(Line(ln["name"], ln["from"], ln["to"], float(ln["x"]),
                           math.inf if ln.get("f_max") is None else float(ln["f_max"]))
                      for ln in n["lines"])
        network = NetworkSpec(tuple(n["buses"]), lines, n["reference"],
                              float(n.get("base_mva", 100.0)))
    gencos = [Genco(g["name"], g["bus"], {m: _book(b) for m, b in g["offers"].items()})
              for g in data["gencos"]]
    retailers = [Retailer(r["name"], r["bus"], {m: _book(b) for m, b in r["bids"].items()})
                 for r in data["retailers"]]
    e = data["esf"]
    esf = EsfParticipant(e["bus"], storage, e["sell_cap"], e["buy_cap"])
    case = MarketCase(
        horizon=data["horizon"], gencos=gencos, retailers=retailers, esf=esf,
        price_cap=float(data["price_cap"]), network=network,
        mode=data.get("mode", SINGLE_BUS), markets=tuple(data.get("markets", MARKETS)),
        net_load=None if data.get("net_load") is None else tuple(data["net_load"]),
        name=data.get("name", "case"))
    return case, dict(data.get("igdt", {})), warnings


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False)


def digest(data) -> str:
    return hashlib.sha256(canonical_json(data).encode()).hexdigest()


def load_case(path, strict: bool = True) -> LoadedCase:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise CaseError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CaseError(f"{path}: invalid JSON ({exc})") from None
    case, igdt, warnings = case_from_dict(data, strict)
    return LoadedCase(case, igdt, warnings, digest(data))


def bundled_case_path(name: str) -> Path:
    return Path(str(resources.files("merchant_storage").joinpath(f"data/cases/{name}.json")))


def _book_dict(b: OrderBook):
    d = {"price": list(b.price), "cap": list(b.cap)}
    if b.floor is not None:
        d["floor"] = list(b.floor)
    return d


def case_to_dict(case: MarketCase, igdt: dict | None = None) -> dict:
    s = case.storage
    out = {
        "schema_version": SCHEMA_VERSION,
        "name": case.name,
        "horizon": case.horizon,
        "price_cap": case.price_cap,
        "mode": case.mode,
        "markets": list(case.markets),
        "gencos": [{"name": g.name, "bus": g.bus,
                    "offers": {m: _book_dict(b) for m, b in g.offers.items()}}
                   for g in case.gencos],
        "retailers": [{"name": r.name, "bus": r.bus,
                       "bids": {m: _book_dict(b) for m, b in r.bids.items()}}
                      for r in case.retailers],
        "esf": {
            "bus": case.esf.bus,
            "storage": {k: getattr(s, k) for k in _STORAGE_FIELDS},
            "sell_cap": {m: list(v) for m, v in case.esf.sell_cap.items()},
            "buy_cap": {m: list(v) for m, v in case.esf.buy_cap.items()},
        },
    }
    if case.network is not None:
        n = case.network
        out["network"] = {
            "buses": list(n.buses), "reference": n.reference, "base_mva": n.base_mva,
            "lines": [{"name": ln.name, "from": ln.from_bus, "to": ln.to_bus, "x": ln.x,
                       "f_max": None if math.isinf(ln.f_max) else ln.f_max}
                      for ln in n.lines]}
    if case.net_load is not None:
        out["net_load"] = list(case.net_load)
    if igdt:
        out["igdt"] = igdt
    return out


def save_case(case: MarketCase, path, igdt: dict | None = None):
    write_atomic(path, json.dumps(case_to_dict(case, igdt), indent=1) + "\n")


# -- numbers and atomic files -------------------------------------------------


def round_sig(x):
    """Round to 9 significant digits; non-finite values become None."""
    if x is None:
        return None
    x = float(x)
    if not math.isfinite(x):
        return None
    r = float(f"{x:.{SIG_DIGITS}g}")
    return 0.0 if r == 0 else r


def fmt(x) -> str:
    r = round_sig(x)
    return "" if r is None else repr(r)


def rounded(obj):
    """Deep copy with every float rounded like the CSV writer."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return round_sig(obj)
    if isinstance(obj, dict):
        return {str(k): rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [rounded(v) for v in obj]
    if hasattr(obj, "item"):
        return rounded(obj.item())
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_atomic(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


# -- payloads -------------------------------------------------------------------


def schedule_rows(bid: dict) -> list:
    """Rows of schedule.csv from a bid payload (see :func:`bidding_payload`)."""
    T = bid["horizon"]
    sched = bid["schedule"]
    zero = [0.0] * T

    def market(m, key):
        return bid["markets"].get(m, {}).get(key, zero)

    price_market = "DA" if "DA" in bid["markets"] else "RT"
    rows = []
    for t in range(T):
        rows.append([t, fmt(sched["p_ch"][t]), fmt(sched["p_dis"][t]), fmt(sched["soc"][t]),
                     fmt(market("DA", "sell")[t]), fmt(market("DA", "buy")[t]),
                     fmt(market("RT", "sell")[t]), fmt(market("RT", "buy")[t]),
                     fmt(market(price_market, "offer_price")[t]),
                     fmt(market(price_market, "bid_price")[t])])
    return rows


def lmp_rows(lmp: dict) -> list:
    """``lmp`` maps bus -> per-hour prices."""
    rows = []
    buses = list(lmp)
    T = len(next(iter(lmp.values()))) if lmp else 0
    for t in range(T):
        for b in buses:
            rows.append([t, b, fmt(lmp[b][t])])
    return rows


def igdt_rows(results: list) -> list:
    return [[fmt(r["beta"]), fmt(r["radius"]), fmt(r["profit_at_radius"])] for r in results]


def schedule_payload(sched) -> dict:
    return {"p_ch": list(sched.p_ch), "p_dis": list(sched.p_dis), "x": list(sched.x),
            "y": list(sched.y), "soc": list(sched.soc)}


def bidding_payload(sol) -> dict:
    from .model import StorageSchedule
    T = sol.horizon
    sched = sol.schedule
    if sched is None:
        sched = StorageSchedule((0.0,) * T, (0.0,) * T, (0,) * T, (0,) * T, (0.0,) * T)
    out = {
        "status": sol.status,
        "horizon": T,
        "profit": sol.profit,
        "decomposition": {
            **{f"{m.lower()}_revenue": sol.revenue.get(m, 0.0) for m in sol.markets},
            **{f"{m.lower()}_cost": sol.cost.get(m, 0.0) for m in sol.markets},
            "operation_cost": sol.op_cost,
        },
        "markets": {m: {
            "offer_price": list(sol.offer_price.get(m, ())),
            "bid_price": list(sol.bid_price.get(m, ())),
            "sell": list(sol.sell.get(m, ())),
            "buy": list(sol.buy.get(m, ())),
            "price": list(sol.prices.get(m, ())),
            "lmp": {str(b): list(v) for b, v in sol.lmp.get(m, {}).items()},
        } for m in sol.markets},
        "schedule": schedule_payload(sched),
        "solver": {
            "engine": sol.engine, "binaries": sol.num_binaries, "nodes": sol.nodes,
            "milp_objective": sol.milp_objective, "gap": sol.gap, "root_bound": sol.root_bound,
            "substitution_residual": sol.substitution_residual,
            "kkt_residual": sol.kkt_residual,
        },
        "bigm": {"dual_m": sol.dual_m, "escalations": sol.escalations,
                 "unresolved": sol.bigm_unresolved, "audit": sol.bigm_audit},
    }
    if sol.replay is not None:
        r = sol.replay
        out["replay"] = {
            "residual": r.residual, "scale": r.scale, "profit_replay": r.profit_replay,
            "profit_dev": r.profit_dev, "tie": r.tie, "dual_tie": r.dual_tie,
            "flagged": r.flagged, "notes": r.notes, "price_ties": r.price_ties,
            "faces": {k: v for k, v in r.faces.items() if v is not None},
            "markets": {m: {"quantity_dev": mr.quantity_dev, "price_dev": mr.price_dev,
                            "welfare_gap": mr.welfare_gap} for m, mr in r.markets.items()},
        }
    return out


def clearing_payload(res) -> dict:
    return {
        "market": res.market,
        "esf_sell": list(res.esf_sell), "esf_buy": list(res.esf_buy),
        "gen": {k: list(v) for k, v in res.gen.items()},
        "dem": {k: list(v) for k, v in res.dem.items()},
        "prices": {str(b): list(v) for b, v in res.prices.items()},
        "flows": {k: list(v) for k, v in res.flows.items()},
        "welfare_objective": res.welfare_objective,
        "duals": {n: float(v) for n, v in zip(res.dual_names, res.duals)},
    }


def igdt_payload(res) -> dict:
    return {"mode": res.mode, "beta": res.beta, "target_profit": res.target_profit,
            "base_profit": res.base_profit, "radius": res.radius,
            "profit_at_radius": res.profit_at_radius, "status": res.status,
            "tolerance": res.tolerance, "alpha_max": res.alpha_max,
            "envelope_target": res.envelope_target, "monotone_ok": res.monotone_ok,
            "monotone_violations": res.monotone_violations, "trace": res.trace}


@dataclass
class RunReport:
    command: str
    input_digest: str
    options: dict
    payload: dict
    warnings: list = field(default_factory=list)
    timing: dict | None = None
    exit_code: int = 0

    def to_dict(self) -> dict:
        out = {"command": self.command, "input_digest": self.input_digest,
               "options": self.options, "payload": self.payload, "warnings": self.warnings,
               "exit_code": self.exit_code}
        if self.timing is not None:
            out["timing"] = self.timing
        return rounded(out)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True, allow_nan=False) + "\n"


def emit_outputs(report: RunReport, outdir) -> list:
    """Write report.json plus the CSV files that apply to the command."""
    outdir = Path(outdir)
    written = []
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        p = report.payload
        files = {"report.json": report.to_json()}
        if "bid" in p:
            files["schedule.csv"] = _csv(SCHEDULE_COLUMNS, schedule_rows(p["bid"]))
            first = "DA" if "DA" in p["bid"]["markets"] else "RT"
            files["lmp.csv"] = _csv(LMP_COLUMNS, lmp_rows(p["bid"]["markets"][first]["lmp"]))
        elif "clearing" in p:
            first = next(iter(p["clearing"]))
            files["lmp.csv"] = _csv(LMP_COLUMNS, lmp_rows(p["clearing"][first]["prices"]))
        if "igdt" in p:
            files["igdt.csv"] = _csv(IGDT_COLUMNS, igdt_rows(p["igdt"]))
        for name, text in files.items():
            write_atomic(outdir / name, text)
            written.append(outdir / name)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write outputs: {exc.strerror}",
                      exc.filename or str(outdir)) from None
    return written
