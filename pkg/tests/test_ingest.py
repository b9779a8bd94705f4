"""CSV parsing, validation, and the counts cube arithmetic."""

import textwrap

import pytest

from markovpop.config import build_run_config
from markovpop.errors import DataError
from markovpop.ingest import (
    ReserveSpec,
    build_counts,
    build_reserve,
    load_reserve_csv,
    parse_records,
)


def small_cfg():
    return build_run_config(
        {
            "categories": ["out", "A", "B"],
            "age_min": 16,
            "age_max": 20,
            "age_groups": [[16, 18], [18, 20]],
            "seniority_max": 2,
            "seniority_groups": [[0, 2]],
            "working_age_min": 18,
            "characteristics": [{"name": "g", "levels": ["x", "y"]}],
        }
    )


HEADER = "month,person_id,category,age,seniority,workload,g\n"

PANEL = HEADER + textwrap.dedent(
    """\
    2020-11,p1,A,18,0,40,x
    2020-12,p1,A,18,0,40,x
    2021-01,p1,B,19,1,40,y
    2020-11,p2,B,19,1,20,y
    2020-12,p2,B,19,1,20,y
    2021-01,p3,A,19,1,40,x
    """
)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_records_happy_path(tmp_path):
    cfg = small_cfg()
    records = parse_records(write(tmp_path, "r.csv", PANEL), cfg)
    assert len(records) == 6
    # sorted by (normalized month, person); the latest month is 0
    assert [(r.month, r.person_id) for r in records] == [
        (-2, "p1"), (-2, "p2"), (-1, "p1"), (-1, "p2"), (0, "p1"), (0, "p3"),
    ]
    first = records[0]
    assert (first.cal_year, first.cal_month) == (2020, 11)
    assert first.category == 1  # A
    assert first.characteristics == (0,)  # x
    assert records[1].workload == 20.0
    assert records[4].characteristics == (1,)  # y


def test_parse_records_header_mismatch(tmp_path):
    cfg = small_cfg()
    bad = "month,person_id,category,age,seniority,workload,g,extra\n"
    with pytest.raises(DataError, match="unexpected columns: extra"):
        parse_records(write(tmp_path, "r.csv", bad), cfg)
    bad = "month,person_id,category,age,seniority,g\n"
    with pytest.raises(DataError, match="missing columns: workload"):
        parse_records(write(tmp_path, "r.csv", bad), cfg)


def test_parse_records_collects_row_problems(tmp_path):
    cfg = small_cfg()
    text = HEADER + textwrap.dedent(
        """\
        2020/11,p1,A,18,0,40,x
        2020-11,p2,Z,18,0,40,x
        2020-11,p3,A,25,0,40,x
        2020-11,p4,A,18,0,-5,x
        2020-11,p5,A,18,0,40,zzz
        2020-11,p6,out,18,0,40,x
        2020-11,p7,A,18,1,40,x
        """
    )
    with pytest.raises(DataError) as err:
        parse_records(write(tmp_path, "r.csv", text), cfg)
    msg = str(err.value)
    assert "7 invalid row(s)" in msg
    assert "malformed month" in msg
    assert "unknown category code 'Z'" in msg
    assert "age 25" in msg
    assert "workload must be positive" in msg
    assert "unknown level 'zzz'" in msg
    assert "out-of-system code" in msg
    assert "infeasible seniority 1 at age 18" in msg


def test_parse_records_rejects_duplicates(tmp_path):
    cfg = small_cfg()
    text = HEADER + "2020-11,p1,A,18,0,40,x\n2020-11,p1,B,18,0,40,x\n"
    with pytest.raises(DataError, match="duplicate"):
        parse_records(write(tmp_path, "r.csv", text), cfg)


def test_parse_records_missing_file():
    with pytest.raises(DataError, match="not found"):
        parse_records("/nonexistent/records.csv", small_cfg())


def test_load_reserve_csv(tmp_path):
    cfg = small_cfg()
    good = "age,total\n16,3\n17,2\n18,2\n19,2.5\n"
    res = load_reserve_csv(write(tmp_path, "res.csv", good), cfg.space)
    assert res.age_totals == {16: 3.0, 17: 2.0, 18: 2.0, 19: 2.5}
    assert res.total_population == 9.5

    with pytest.raises(DataError, match="header must be exactly"):
        load_reserve_csv(write(tmp_path, "r1.csv", "age,count\n16,3\n"), cfg.space)
    with pytest.raises(DataError, match="missing ages: 19"):
        load_reserve_csv(
            write(tmp_path, "r2.csv", "age,total\n16,3\n17,2\n18,2\n"), cfg.space
        )
    with pytest.raises(DataError, match="duplicate age"):
        load_reserve_csv(
            write(tmp_path, "r3.csv", "age,total\n16,3\n16,4\n17,2\n18,2\n19,1\n"),
            cfg.space,
        )
    with pytest.raises(DataError, match="negative total"):
        load_reserve_csv(
            write(tmp_path, "r4.csv", "age,total\n16,-3\n17,2\n18,2\n19,1\n"),
            cfg.space,
        )


def test_build_counts_flows_and_events(tmp_path):
    cfg = small_cfg()
    records = parse_records(write(tmp_path, "r.csv", PANEL), cfg)
    cube = build_counts(records, cfg)

    assert cube.months == (-2, -1, 0)
    assert cube.flow_months == (-2, -1)
    assert cube.base_calendar_year == 2021
    assert cube.q_years == (2021,)

    # workload-weighted group totals; p2 works half time
    assert cube.group_totals[(-2, 1, 0, 1)] == 1.0
    assert cube.group_totals[(-2, 1, 0, 2)] == 0.5

    # November -> December: both stay in their categories
    assert cube.flows[(-2, 1, 0, 1, 1)] == 1.0
    assert cube.flows[(-2, 1, 0, 2, 2)] == 0.5
    # December -> January: p1 moves A -> B, p2 disappears (exit to 0)
    assert cube.flows[(-1, 1, 0, 1, 2)] == 1.0
    assert cube.flows[(-1, 1, 0, 2, 0)] == 0.5

    # year boundary: p1 stays (from the December cell), p2 exits
    assert cube.stay_exit[(2021, 1, 0, 1)] == [1.0, 0.0]
    assert cube.stay_exit[(2021, 1, 0, 2)] == [0.0, 0.5]

    # p3 appears in January at (19, 1): source cell is (18, 0)
    assert cube.hires[(2021, 1, 0)] == 1.0
    assert cube.entry_cats[(2021, 1, 0, 1)] == 1.0

    # characteristic counts keyed by (month, category, cell, tuple)
    assert cube.char_counts[(0, 2, 1, 0, (1,))] == 1.0


def test_build_counts_skips_gap_months(tmp_path):
    cfg = small_cfg()
    text = HEADER + "2020-11,p1,A,18,0,40,x\n2021-01,p1,A,18,0,40,x\n"
    cube = build_counts(parse_records(write(tmp_path, "r.csv", text), cfg), cfg)
    # November and January are not consecutive: no flows, no year boundary
    assert cube.flow_months == ()
    assert cube.flows == {}
    assert cube.q_years == ()


def test_build_counts_clamps_hire_below_age_range(tmp_path):
    cfg = small_cfg()
    text = HEADER + textwrap.dedent(
        """\
        2020-12,p1,A,18,0,40,x
        2021-01,p1,A,19,1,40,x
        2021-01,p9,A,16,0,40,x
        """
    )
    cube = build_counts(parse_records(write(tmp_path, "r.csv", text), cfg), cfg)
    assert cube.hires[(2021, 0, 0)] == 1.0
    assert any("clamped to 16" in w for w in cube.warnings)


def test_build_reserve_splits_equally_over_feasible_seniorities(tmp_path):
    cfg = small_cfg()
    records = parse_records(write(tmp_path, "r.csv", PANEL), cfg)
    reserve = ReserveSpec({16: 3.0, 17: 2.0, 18: 2.0, 19: 2.5})
    cube = build_reserve(build_counts(records, cfg), reserve, cfg)
    assert cube.has_reserve

    # January: p1 absent at 18, p3 holds weight 1 at age 19
    assert cube.cells[(0, 0, 16, 0)] == 3.0  # below working age: seniority 0 only
    assert cube.cells[(0, 0, 18, 0)] == 2.0
    # age 19 splits over feasible seniorities {0, 1}
    assert cube.cells[(0, 0, 19, 0)] == pytest.approx(0.25)
    assert cube.cells[(0, 0, 19, 1)] == pytest.approx(0.25)
    # December: ages 18 and 19 carry in-system weight 1 and 0.5
    assert cube.cells[(-1, 0, 18, 0)] == 1.0
    assert cube.cells[(-1, 0, 19, 0)] == pytest.approx(1.0)
    assert cube.cells[(-1, 0, 19, 1)] == pytest.approx(1.0)
    # reserve mass lands in the cell totals under category 0
    assert cube.group_totals[(-1, 0, 0, 0)] == pytest.approx(5.0)  # ages 16+17
    assert cube.group_totals[(-1, 1, 0, 0)] == pytest.approx(3.0)


def test_build_reserve_rejects_census_deficit(tmp_path):
    cfg = small_cfg()
    records = parse_records(write(tmp_path, "r.csv", PANEL), cfg)
    reserve = ReserveSpec({16: 3.0, 17: 2.0, 18: 0.5, 19: 2.5})
    with pytest.raises(DataError, match="age 18, month 2020-11"):
        build_reserve(build_counts(records, cfg), reserve, cfg)
