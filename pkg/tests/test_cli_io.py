import csv
import json

import pytest

from merchant_storage.cli import run_command
from merchant_storage.clearing import clear_market
from merchant_storage.errors import CaseError
from merchant_storage.io import (IGDT_COLUMNS, LMP_COLUMNS, SCHEDULE_COLUMNS, bundled_case_path,
                                 case_from_dict, case_to_dict, load_case, round_sig, save_case)
from merchant_storage.model import validate_schedule
from merchant_storage.mpec import solve_bidding
from merchant_storage.synthetic import three_bus_case

from .conftest import one_hour_case

TOY = str(bundled_case_path("toy"))
TOY3 = str(bundled_case_path("toy3"))

TOY_SCHEDULE = """\
hour,p_ch,p_dis,soc,da_sell,da_buy,rt_sell,rt_buy,offer,bid
0,0.0,80.0,0.0,80.0,0.0,0.0,0.0,50.0,50.0
1,80.0,0.0,80.0,0.0,80.0,0.0,0.0,10.0,10.0
"""


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run(tmp_path, *argv):
    out = tmp_path / "out"
    report, code = run_command([*argv, "--out", str(out), "--no-timestamp"])
    return out, report, code


class TestCaseFiles:
    def test_round_trip(self, tmp_path):
        case = one_hour_case()
        save_case(case, tmp_path / "c.json")
        again = load_case(tmp_path / "c.json").case
        assert again == case
        save_case(again, tmp_path / "d.json")
        assert (tmp_path / "c.json").read_bytes() == (tmp_path / "d.json").read_bytes()

    def test_network_round_trip(self, tmp_path):
        case = three_bus_case()
        save_case(case, tmp_path / "n.json")
        assert load_case(tmp_path / "n.json").case == case

    def test_eta_above_one(self):
        data = case_to_dict(one_hour_case())
        data["esf"]["storage"]["eta_ch"] = 1.2
        with pytest.raises(CaseError, match=r"eta_ch.*\(0, *1\]"):
            case_from_dict(data)

    def test_schema_names_field(self):
        data = case_to_dict(one_hour_case())
        data["price_cap"] = "high"
        with pytest.raises(CaseError, match="price_cap"):
            case_from_dict(data)

    def test_unknown_field_strict_and_lenient(self):
        data = case_to_dict(one_hour_case())
        data["colour"] = "blue"
        with pytest.raises(CaseError, match="colour"):
            case_from_dict(data)
        case, _, warnings = case_from_dict(data, strict=False)
        assert case == one_hour_case()
        assert any("colour" in w for w in warnings)

    def test_network_mode_without_network(self):
        data = case_to_dict(one_hour_case())
        data["mode"] = "network"
        with pytest.raises(CaseError, match="network"):
            case_from_dict(data)

    def test_bundled_case30_clears(self):
        case = load_case(bundled_case_path("case30")).case
        assert case.horizon == 24
        assert len(case.network.buses) == 30
        for m in case.markets:
            assert clear_market(case.truncated(3), None, m).balance_residual() <= 1e-7

    def test_digest_is_content_based(self, tmp_path):
        case = one_hour_case()
        save_case(case, tmp_path / "a.json")
        text = json.loads((tmp_path / "a.json").read_text())
        (tmp_path / "b.json").write_text(json.dumps(text, indent=4))
        assert load_case(tmp_path / "a.json").digest == load_case(tmp_path / "b.json").digest


class TestNumbers:
    @pytest.mark.parametrize("x, expect", [(0.1 + 0.2, 0.3), (1234.56789012345, 1234.56789),
                                           (-0.0, 0.0), (5, 5.0)])
    def test_round_sig(self, x, expect):
        assert round_sig(x) == expect


class TestBid:
    def test_toy_outputs(self, tmp_path):
        out, report, code = run(tmp_path, "bid", "--case", TOY)
        assert code == 0
        assert (out / "schedule.csv").read_text() == TOY_SCHEDULE
        bid = report.payload["bid"]
        assert bid["profit"] == pytest.approx(2880.0)
        assert set(bid["decomposition"]) == {"da_revenue", "da_cost", "operation_cost"}

    def test_csv_matches_json(self, tmp_path):
        out, report, _ = run(tmp_path, "bid", "--case", TOY3)
        rows = read_csv(out / "schedule.csv")
        assert list(rows[0]) == SCHEDULE_COLUMNS
        data = json.loads((out / "report.json").read_text())["payload"]["bid"]
        for t, row in enumerate(rows):
            assert float(row["p_ch"]) == data["schedule"]["p_ch"][t]
            assert float(row["da_sell"]) == data["markets"]["DA"]["sell"][t]
            assert float(row["offer"]) == data["markets"]["DA"]["offer_price"][t]
        assert list(read_csv(out / "lmp.csv")[0]) == LMP_COLUMNS

    def test_schedule_from_report_is_valid(self, tmp_path):
        from merchant_storage.model import StorageSchedule
        _, report, _ = run(tmp_path, "bid", "--case", TOY3)
        s = report.payload["bid"]["schedule"]
        sched = StorageSchedule(s["p_ch"], s["p_dis"], s["x"], s["y"], s["soc"])
        spec = load_case(TOY3).case.esf.storage
        assert validate_schedule(sched, spec, tol=1e-6) == []

    def test_deterministic(self, tmp_path):
        a, _, _ = run(tmp_path / "a", "bid", "--case", TOY, "--price-taker")
        b, _, _ = run(tmp_path / "b", "bid", "--case", TOY, "--price-taker")
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()

    def test_price_taker_comparison(self, tmp_path):
        _, report, _ = run(tmp_path, "bid", "--case", TOY3, "--price-taker")
        cmp_ = report.payload["comparison"]
        assert cmp_["maker_minus_taker"] >= -1e-9
        assert {"profit", "status", "forecast"} <= set(cmp_["price_taker"])

    def test_binary_budget_truncates(self, tmp_path):
        _, report, code = run(tmp_path, "bid", "--case", TOY3, "--binary-budget", "5",
                              "--fallback-horizon", "2")
        assert code == 0
        red = report.payload["horizon_reduction"]
        assert (red["from"], red["to"]) == (3, 2)
        assert report.payload["bid"]["horizon"] == 2
        assert any("horizon reduced" in w for w in report.warnings)

    def test_mps_export(self, tmp_path):
        from merchant_storage.lp import import_mps
        from merchant_storage.mpec import assemble_bidding_milp
        out, _, code = run(tmp_path, "export", "--case", TOY)
        assert code == 0
        model = import_mps((out / "model.mps").read_text())
        assert model.same_as(assemble_bidding_milp(load_case(TOY).case).model)

    def test_timestamp_present_by_default(self, tmp_path):
        report, _ = run_command(["bid", "--case", TOY, "--out", str(tmp_path)])
        assert "started" in report.timing


class TestClear:
    def test_uncongested_lmps_equal(self, tmp_path):
        save_case(three_bus_case(f_max=1e4), tmp_path / "net.json")
        out, _, code = run(tmp_path, "clear", "--case", str(tmp_path / "net.json"))
        assert code == 0
        rows = read_csv(out / "lmp.csv")
        vals = {float(r["lmp"]) for r in rows}
        assert len(rows) == 3 and len(vals) == 1

    def test_infeasible_exit(self, tmp_path):
        save_case(one_hour_case(gen_cap=10, floor=50), tmp_path / "bad.json")
        _, report, code = run(tmp_path, "clear", "--case", str(tmp_path / "bad.json"))
        assert code == 1 and report is None

    def test_fixed_prices(self, tmp_path):
        _, report, code = run(tmp_path, "clear", "--case", TOY, "--offer-price", "40")
        assert code == 0
        assert report.payload["clearing"]["DA"]["esf_sell"][0] == pytest.approx(80.0)


class TestIgdt:
    def test_beta_zero(self, tmp_path):
        out, report, code = run(tmp_path, "igdt", "--case", TOY, "--mode", "robust",
                                "--beta", "0")
        assert code == 0
        assert report.payload["igdt"][0]["radius"] == 0.0
        assert list(read_csv(out / "igdt.csv")[0]) == IGDT_COLUMNS

    def test_unattainable_exit(self, tmp_path):
        _, report, code = run(tmp_path, "igdt", "--case", TOY, "--mode", "opportunity",
                              "--beta", "5", "--alpha-max", "0.1")
        assert code == 1
        assert report.payload["igdt"][0]["status"] == "unattainable"

    def test_certify(self, tmp_path):
        _, report, _ = run(tmp_path, "igdt", "--case", TOY, "--beta", "0.1", "--certify")
        cert = report.payload["igdt"][0]["certificate"]
        assert cert["meets_at_radius"] and cert["fails_beyond"]


class TestOracleCommand:
    def test_compare_agrees(self, tmp_path):
        _, report, code = run(tmp_path, "oracle", "--case", TOY3, "--grid", "1.0", "--compare")
        assert code == 0
        cmp_ = report.payload["comparison"]
        assert cmp_["agree"]
        assert abs(cmp_["difference"]) <= cmp_["tolerance"]

    def test_guard_exit(self, tmp_path):
        save_case(three_bus_case(horizon=4), tmp_path / "big.json")
        _, _, code = run(tmp_path, "oracle", "--case", str(tmp_path / "big.json"))
        assert code == 2


class TestExitCodes:
    def test_usage(self, tmp_path):
        _, code = run_command(["bid", "--engine", "nope", "--case", TOY])
        assert code == 2

    def test_missing_file(self, tmp_path):
        _, _, code = run(tmp_path, "clear", "--case", str(tmp_path / "missing.json"))
        assert code == 2

    def test_bad_case(self, tmp_path):
        (tmp_path / "bad.json").write_text("{not json")
        _, _, code = run(tmp_path, "clear", "--case", str(tmp_path / "bad.json"))
        assert code == 2


def test_solve_matches_cli(tmp_path):
    _, report, _ = run(tmp_path, "bid", "--case", TOY3)
    assert report.payload["bid"]["profit"] == pytest.approx(
        solve_bidding(load_case(TOY3).case).profit)
