import math

import pytest

from merchant_storage.errors import MpsParseError
from merchant_storage.lp import (BINARY, EQ, GE, LE, MAX, LinearModel, export_mps, import_mps,
                                 solve_lp, solve_milp)
from merchant_storage.mpec import assemble_bidding_milp
from merchant_storage.synthetic import monopolist_case

SAMPLE = """\
NAME          demo
OBJSENSE
    MAX
ROWS
 N  obj
 L  cap
 G  floor
COLUMNS
    MARKER                 'MARKER'                 'INTORG'
    z         obj       5.0        cap       2.0
    MARKER                 'MARKER'                 'INTEND'
    x         obj       1.0        cap       1.0
    x         floor     1.0
RHS
    RHS       cap       4.0        floor     0.5
BOUNDS
 UP BND       x         3.0
 UP BND       z         1.0
ENDATA
"""


def mixed_model():
    m = LinearModel("mixed")
    z = m.add_var("z", kind=BINARY)
    x = m.add_var("x", -2, 7.5)
    f = m.add_var("free", -math.inf, math.inf)
    m.add_constraint("a", {z: 1, x: 2}, LE, 6)
    m.add_constraint("b", {x: 1, f: -1}, EQ, 0)
    m.add_constraint("c", {f: 1}, GE, -1)
    m.set_objective({z: 3, x: 1, f: 0.25}, MAX)
    return m


class TestRoundTrip:
    def test_small(self):
        m = mixed_model()
        back = import_mps(export_mps(m))
        assert back.same_as(m)
        assert back.sense == MAX

    def test_solves_the_same(self):
        m = mixed_model()
        assert solve_milp(import_mps(export_mps(m))).objective == pytest.approx(
            solve_milp(m).objective)

    def test_bidding_milp(self):
        model = assemble_bidding_milp(monopolist_case()).model
        assert import_mps(export_mps(model)).same_as(model)

    def test_export_is_stable(self):
        assert export_mps(mixed_model()) == export_mps(mixed_model())

    def test_bad_name(self):
        m = LinearModel()
        m.add_var("has space")
        with pytest.raises(ValueError):
            export_mps(m)


class TestParser:
    def test_markers(self):
        m = import_mps(SAMPLE)
        assert [v.name for v in m.variables] == ["z", "x"]
        assert m.binaries == [0]
        assert solve_milp(m).objective == pytest.approx(7.0)

    def test_missing_rhs_is_zero(self):
        text = SAMPLE.replace("    RHS       cap       4.0        floor     0.5\n", "")
        m = import_mps(text)
        assert all(con.rhs == 0 for con in m.constraints)

    def test_truncated_columns_line(self):
        text = SAMPLE.replace("    x         floor     1.0", "    x         floor")
        with pytest.raises(MpsParseError) as info:
            import_mps(text)
        assert info.value.line_no == 13

    def test_unknown_row(self):
        with pytest.raises(MpsParseError, match="unknown row"):
            import_mps(SAMPLE.replace("x         floor     1.0", "x         nope      1.0"))

    def test_missing_endata(self):
        with pytest.raises(MpsParseError, match="ENDATA"):
            import_mps(SAMPLE.replace("ENDATA\n", ""))

    def test_bad_number(self):
        with pytest.raises(MpsParseError, match="invalid number"):
            import_mps(SAMPLE.replace("5.0", "five"))


class TestExternalReader:
    def test_highspy_reads_export(self, tmp_path):
        highspy = pytest.importorskip("highspy")
        m = mixed_model()
        path = tmp_path / "m.mps"
        path.write_text(export_mps(m))
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        assert h.readModel(str(path)) == highspy.HighsStatus.kOk
        h.run()
        assert h.getInfo().objective_function_value == pytest.approx(
            solve_milp(m).objective)

    def test_lp_only(self):
        m = LinearModel()
        x = m.add_var("x", 0, 4)
        m.add_constraint("r", {x: 1}, LE, 3)
        m.set_objective({x: 1}, MAX)
        assert solve_lp(import_mps(export_mps(m))).objective == pytest.approx(3.0)
