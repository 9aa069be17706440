"""Command-line entry point: clear | bid | igdt | oracle | export."""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import sys
import time
from pathlib import Path

from . import igdt as ig
from .clearing import EsfMarketOrder, clear_market
from .errors import CaseError, InfeasibleError, MerchantStorageError
from .io import (RunReport, bidding_payload, clearing_payload, emit_outputs, igdt_payload,
                 load_case, write_atomic)
from .lp import MILP_BINARY_BUDGET, MilpOptions, export_mps
from .mpec import BiddingOptions, assemble_bidding_milp, price_taker_profit, solve_bidding
from .mpec.oracle import OracleGuardError, grid_oracle

log = logging.getLogger("merchant_storage")

EXIT_OK, EXIT_INFEASIBLE, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3

EPILOG = """\
environment:
  GAP      default relative MILP gap (1e-6)
  FEASTOL  simplex primal feasibility tolerance (1e-7)

exit codes: 0 success, 1 infeasible or unattainable, 2 usage or invalid case,
3 internal error
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="merchant-storage", description=__doc__, epilog=EPILOG,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--case", required=True, help="case file (JSON)")
        sp.add_argument("--out", default="out", help="output directory (default: out)")
        sp.add_argument("--no-timestamp", action="store_true",
                        help="omit timing from report.json (byte-stable output)")
        sp.add_argument("--lenient", action="store_true",
                        help="warn about unknown case fields instead of failing")
        sp.add_argument("--engine", choices=["auto", "bnb", "highs"], default="auto",
                        help="MILP engine (auto: built-in B&B for small models)")
        sp.add_argument("--gap", type=float, default=None, help="relative MILP gap")
        sp.add_argument("--time-limit", type=float, default=None, help="MILP time limit (s)")
        sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("clear", help="clear DA/RT markets for a fixed facility order")
    common(sp)
    sp.add_argument("--market", choices=["DA", "RT", "all"], default="all")
    sp.add_argument("--offer-price", type=float, default=None,
                    help="facility offer price for every hour (default: stay out)")
    sp.add_argument("--bid-price", type=float, default=None,
                    help="facility bid price for every hour (default: stay out)")

    sp = sub.add_parser("bid", help="optimal price-maker offers and bids")
    common(sp)
    sp.add_argument("--price-taker", action="store_true",
                    help="also evaluate the price-taker benchmark")
    sp.add_argument("--mps", default=None, help="also write the bidding MILP as MPS")
    sp.add_argument("--binary-budget", type=int, default=MILP_BINARY_BUDGET,
                    help="truncate the horizon when the MILP has more binaries than this "
                         f"(default {MILP_BINARY_BUDGET}; 0 disables)")
    sp.add_argument("--fallback-horizon", type=int, default=12,
                    help="horizon used when the binary budget is exceeded (default 12)")

    sp = sub.add_parser("igdt", help="robustness / opportunity radii over a beta list")
    common(sp)
    sp.add_argument("--mode", choices=["robust", "opportunity"], default="robust")
    sp.add_argument("--beta", type=float, nargs="+", default=None)
    sp.add_argument("--tolerance", type=float, default=1e-3)
    sp.add_argument("--alpha-max", type=float, default=1.0)
    sp.add_argument("--target", choices=["rival", "forecast"], default=None)
    sp.add_argument("--certify", action="store_true",
                    help="re-solve at each radius and just past it")

    sp = sub.add_parser("oracle", help="brute-force price-grid search (small cases)")
    common(sp)
    sp.add_argument("--grid", type=float, default=1.0, help="price grid resolution")
    sp.add_argument("--no-prune", action="store_true", help="enumerate the full grid")
    sp.add_argument("--force", action="store_true", help="lift the size guard")
    sp.add_argument("--compare", action="store_true", help="also run bid and compare")

    sp = sub.add_parser("export", help="write a model as MPS")
    common(sp)
    sp.add_argument("--kind", choices=["bidding", "clearing"], default="bidding")
    sp.add_argument("--market", choices=["DA", "RT"], default="DA")
    sp.add_argument("--mps", default=None, help="output path (default: OUT/model.mps)")
    return p


def _milp_options(args) -> MilpOptions:
    kw = {"engine": args.engine, "time_limit": args.time_limit}
    if args.gap is not None:
        kw["gap"] = args.gap
    return MilpOptions(**kw)


def _clear(args, loaded):
    case = loaded.case
    markets = case.markets if args.market == "all" else (args.market,)
    payload, code = {}, EXIT_OK
    for m in markets:
        if m not in case.markets:
            raise CaseError(f"market {m} is not active in this case")
        if args.offer_price is None and args.bid_price is None:
            order = None
        else:
            T = case.horizon
            offer = args.offer_price if args.offer_price is not None else case.price_cap
            bid = args.bid_price if args.bid_price is not None else 0.0
            sell = case.esf.sell_cap[m] if args.offer_price is not None else (0.0,) * T
            buy = case.esf.buy_cap[m] if args.bid_price is not None else (0.0,) * T
            order = EsfMarketOrder(m, (offer,) * T, sell, (bid,) * T, buy)
        payload[m] = clearing_payload(clear_market(case, order, m))
    return {"clearing": payload}, [], code


def _bid(args, loaded):
    case = loaded.case
    warnings, extra = [], {}
    opts = BiddingOptions(milp=_milp_options(args))
    if args.binary_budget > 0:
        n = assemble_bidding_milp(case).num_binaries
        if n > args.binary_budget and case.horizon > args.fallback_horizon:
            msg = (f"horizon reduced from {case.horizon} to {args.fallback_horizon} h: "
                   f"{n} binaries exceed the budget of {args.binary_budget}")
            warnings.append(msg)
            extra["horizon_reduction"] = {"from": case.horizon, "to": args.fallback_horizon,
                                          "binaries": n, "budget": args.binary_budget}
            case = case.truncated(args.fallback_horizon)
    sol = solve_bidding(case, opts)
    warnings += sol.warnings
    payload = {"bid": bidding_payload(sol), **extra}
    code = EXIT_OK if sol.ok else EXIT_INFEASIBLE
    if args.price_taker and sol.ok:
        pt = price_taker_profit(case, options=BiddingOptions(milp=_milp_options(args)))
        payload["comparison"] = {
            "price_maker": {"profit": sol.profit, **payload["bid"]["decomposition"]},
            "price_taker": {
                "status": pt.status, "profit": pt.realized_profit,
                "forecast_profit": pt.plan.forecast_profit,
                "forecast": {m: list(v) for m, v in pt.forecast.items()},
                **({f"{m.lower()}_revenue": pt.realized.revenue[m] for m in case.markets}
                   if pt.realized else {}),
                **({f"{m.lower()}_cost": pt.realized.cost[m] for m in case.markets}
                   if pt.realized else {}),
                "operation_cost": pt.realized.op_cost if pt.realized else 0.0,
            },
            "maker_minus_taker": sol.profit - pt.realized_profit,
        }
    if args.mps:
        write_atomic(args.mps, export_mps(sol.milp.model if sol.milp else
                                          assemble_bidding_milp(case).model))
    return payload, warnings, code


def _igdt(args, loaded):
    case = loaded.case
    block = loaded.igdt
    mode = ig.ROBUSTNESS if args.mode == "robust" else ig.OPPORTUNITY
    betas = args.beta
    if betas is None:
        key = "robustness_betas" if mode == ig.ROBUSTNESS else "opportunity_betas"
        betas = block.get(key, [0.05, 0.10, 0.20])
    envelope = ig.EnvelopeModel(gamma=block.get("gamma"),
                                target=args.target or block.get("target", ig.RIVAL),
                                nominal=block.get("nominal"))
    opts = BiddingOptions(milp=_milp_options(args))
    results = ig.sweep(case, betas, mode, args.tolerance, args.alpha_max, envelope, opts)
    payload = [igdt_payload(r) for r in results]
    warnings = []
    if args.certify:
        for r, p in zip(results, payload):
            if r.radius is not None:
                c = ig.certify(case, r, envelope, opts)
                p["certificate"] = {"profit_at_radius": c.at_radius, "profit_beyond": c.beyond,
                                    "meets_at_radius": c.meets_at_radius,
                                    "fails_beyond": c.fails_beyond}
    for r in results:
        if not r.monotone_ok:
            warnings.append(f"beta={r.beta}: profit not monotone in alpha")
    code = EXIT_INFEASIBLE if any(r.status in ("unattainable", "ill-posed")
                                  for r in results) else EXIT_OK
    return {"igdt": payload}, warnings, code


def _oracle(args, loaded):
    case = loaded.case
    res = grid_oracle(case, args.grid, prune=False if args.no_prune else None, force=args.force)
    warnings = ["size guard lifted (--force)"] if args.force else []
    payload = {"oracle": {
        "profit": res.profit, "grid": res.grid, "resolution_bound": res.resolution_bound,
        "combos": res.combos, "dims": res.dims,
        "offer_price": {m: list(v) for m, v in res.offer_price.items()},
        "bid_price": {m: list(v) for m, v in res.bid_price.items()},
        "sell": {m: list(v) for m, v in res.sell.items()},
        "buy": {m: list(v) for m, v in res.buy.items()},
    }}
    if args.compare:
        sol = solve_bidding(case, BiddingOptions(milp=_milp_options(args)))
        diff = sol.profit - res.profit
        tol = max(1e-4 * abs(sol.profit), res.resolution_bound)
        payload["comparison"] = {"bid_profit": sol.profit, "oracle_profit": res.profit,
                                 "difference": diff, "tolerance": tol,
                                 "agree": bool(-1e-6 * (1 + abs(res.profit)) <= diff <= tol)}
    return payload, warnings, EXIT_OK


def _export(args, loaded):
    case = loaded.case
    if args.kind == "bidding":
        model = assemble_bidding_milp(case).model
    else:
        from .clearing import build_clearing_lp
        model = build_clearing_lp(case, EsfMarketOrder.idle(case, args.market), args.market)
    path = Path(args.mps) if args.mps else Path(args.out) / "model.mps"
    write_atomic(path, export_mps(model))
    return {"export": {"path": str(path), "kind": args.kind, "variables": model.num_vars,
                       "constraints": model.num_constraints,
                       "binaries": len(model.binaries)}}, [], EXIT_OK


HANDLERS = {"clear": _clear, "bid": _bid, "igdt": _igdt, "oracle": _oracle, "export": _export}

_OPTION_KEYS = ("market", "offer_price", "bid_price", "price_taker", "binary_budget",
                "fallback_horizon", "mode", "beta", "tolerance", "alpha_max", "target",
                "certify", "grid", "no_prune", "force", "compare", "kind", "engine", "gap",
                "time_limit", "lenient")


def run_command(argv) -> tuple:
    """Parse ``argv``, run the command and write outputs; returns ``(report, exit code)``."""
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None, EXIT_USAGE
    except SystemExit as exc:      # --help
        return None, int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    try:
        loaded = load_case(args.case, strict=not args.lenient)
        payload, warnings, code = HANDLERS[args.command](args, loaded)
    except (CaseError, OracleGuardError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None, EXIT_USAGE
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        if getattr(exc, "rows", None):
            print("rows: " + ", ".join(map(str, exc.rows)), file=sys.stderr)
        return None, EXIT_INFEASIBLE
    except (MerchantStorageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None, EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return None, EXIT_INTERNAL
    options = {k: getattr(args, k) for k in _OPTION_KEYS if hasattr(args, k)}
    timing = None if args.no_timestamp else {"started": started,
                                             "seconds": time.perf_counter() - t0}
    report = RunReport(args.command, loaded.digest, options, payload,
                       loaded.warnings + warnings, timing, code)
    try:
        emit_outputs(report, args.out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return report, EXIT_INTERNAL
    for w in report.warnings:
        log.warning(w)
    return report, code


def main(argv=None) -> int:
    _, code = run_command(sys.argv[1:] if argv is None else argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
