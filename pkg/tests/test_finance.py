"""Cost formulas against a high-precision oracle, plus schedule goldens."""

import mpmath as mp
import pytest

from markovpop.errors import ConfigError, DataError
from markovpop.finance import (
    PensionRegime,
    ProfileBindings,
    RateSchedule,
    SalaryProfile,
    aggregate_costs,
    load_salary_scale,
    parse_finance_config,
    profile_for,
    salary_cost,
    total_cost,
)
from markovpop.states import CharacteristicSpace

from conftest import make_toy_space


def test_school_board_levy_schedule():
    s = RateSchedule()
    assert s.escolar_rate(2014) == 0.0819
    assert s.escolar_rate(2015) == 0.0819
    assert s.escolar_rate(2016) == 0.0823
    assert s.escolar_rate(2017) == 0.0828
    assert s.escolar_rate(2018) == 0.0833
    assert s.escolar_rate(2045) == 0.0833
    with pytest.raises(ConfigError, match="before 2000"):
        s.escolar_rate(1999)


def test_employer_pension_schedule():
    s = RateSchedule()
    cases = [
        (2014, 0.0492), (2015, 0.0508), (2019, 0.0508), (2020, 0.0525),
        (2024, 0.0525), (2025, 0.0542), (2029, 0.0542), (2030, 0.0558),
        (2034, 0.0558), (2035, 0.0575), (2100, 0.0575), (2200, 0.0575),
    ]
    for year, rate in cases:
        assert s.employer_pension_rate(PensionRegime.IVM, year) == rate
    # JUPEMA rates are flat, and string codes are accepted
    assert s.employer_pension_rate("JUPEMA_CAPITALIZACION", 2016) == 0.0675
    assert s.employer_pension_rate("JUPEMA_REPARTO", 2040) == 0.05


def mp_salary(year, base, workload, supplements, inflation):
    mp.mp.dps = 50
    infl = 1 + mp.mpf(str(inflation))
    growth = infl ** (year - 2016 + mp.mpf("0.5")) + infl ** (year - 2015)
    return (
        mp.mpf(workload) / 40 * 6 * mp.mpf(base) * growth * mp.mpf(str(supplements))
        / mp.mpf("0.90")
    )


def test_salary_cost_matches_high_precision_oracle():
    schedule = RateSchedule(inflation=0.0388)
    profile = SalaryProfile(
        base_salary=500000.0, workload_hours=30.0, annuity_pct=0.20,
        prohibition_pct=0.05,
    )
    assert profile.supplements_factor() == pytest.approx(1.25)
    for year in (2016, 2018, 2031):
        got = salary_cost(year, profile, schedule)
        want = mp_salary(year, 500000, 30, "1.25", "0.0388")
        assert got == pytest.approx(float(want), rel=1e-12)


def test_salary_cost_rejects_years_before_scale_anchor():
    with pytest.raises(ConfigError, match="before 2016"):
        salary_cost(2015, SalaryProfile(base_salary=1.0), RateSchedule())


def test_total_cost_applies_all_employer_charges():
    schedule = RateSchedule(inflation=0.04)
    profile = SalaryProfile(base_salary=650000.0, pension_regime=PensionRegime.IVM)
    year = 2017
    g = salary_cost(year, profile, schedule)
    want = g * 1.0828 * (1 + 0.0508 + 0.1425 + 0.0425 + 0.0833) * 1.0025
    assert total_cost(year, profile, schedule) == pytest.approx(want, rel=1e-14)

    reparto = SalaryProfile(
        base_salary=650000.0, pension_regime=PensionRegime.JUPEMA_REPARTO
    )
    want = g * 1.0828 * (1 + 0.05 + 0.1425 + 0.0425 + 0.0833) * 1.0025
    assert total_cost(year, reparto, schedule) == pytest.approx(want, rel=1e-14)


def make_chars():
    return CharacteristicSpace(("band", "reg"), (("b0", "b1"), ("ivm", "jc")))


def finance_raw():
    return {
        "inflation": 0.05,
        "full_time_hours": 48,
        "bindings": {
            "annuity_pct": {
                "characteristic": "band",
                "levels": {"b0": 0.0, "b1": 0.30},
            },
            "pension_regime": {
                "characteristic": "reg",
                "levels": {"ivm": "IVM", "jc": "JUPEMA_CAPITALIZACION"},
            },
        },
    }


def test_parse_finance_config_happy_path():
    schedule, bindings = parse_finance_config(finance_raw(), make_chars())
    assert schedule.inflation == 0.05
    assert schedule.full_time_hours == 48.0
    assert bindings.pct["annuity_pct"] == (0, {0: 0.0, 1: 0.30})
    assert bindings.regime == (
        1, {0: PensionRegime.IVM, 1: PensionRegime.JUPEMA_CAPITALIZACION}
    )
    assert bindings.workload is None


def test_parse_finance_config_errors():
    chars = make_chars()
    with pytest.raises(ConfigError, match="inflation must be a number"):
        parse_finance_config({"inflation": "high"}, chars)
    with pytest.raises(ConfigError, match="bindings must be a mapping"):
        parse_finance_config({"bindings": [1]}, chars)
    with pytest.raises(ConfigError, match="need 'characteristic' and 'levels'"):
        parse_finance_config({"bindings": {"annuity_pct": {"levels": {}}}}, chars)

    raw = finance_raw()
    raw["bindings"]["annuity_pct"]["levels"] = {"b0": 0.0, "nope": 0.1}
    with pytest.raises(ConfigError, match="no level 'nope'"):
        parse_finance_config(raw, chars)

    raw = finance_raw()
    raw["bindings"]["annuity_pct"]["levels"] = {"b0": 0.0}
    with pytest.raises(ConfigError, match="unmapped levels"):
        parse_finance_config(raw, chars)

    raw = finance_raw()
    raw["bindings"]["pension_regime"]["levels"]["jc"] = "NO_SUCH_REGIME"
    with pytest.raises(ConfigError, match="pension_regime"):
        parse_finance_config(raw, chars)

    raw = finance_raw()
    raw["bindings"]["hat_size"] = {"characteristic": "band", "levels": {"b0": 1, "b1": 2}}
    with pytest.raises(ConfigError, match="unknown profile field"):
        parse_finance_config(raw, chars)


def test_load_salary_scale(tmp_path):
    space = make_toy_space()
    path = tmp_path / "scale.csv"
    path.write_text("category,base_salary\nX,500000\nY,750000.5\n")
    assert load_salary_scale(path, space) == {1: 500000.0, 2: 750000.5}

    with pytest.raises(DataError, match="not found"):
        load_salary_scale(tmp_path / "missing.csv", space)
    path.write_text("category,salary\nX,1\n")
    with pytest.raises(DataError, match="header must be exactly"):
        load_salary_scale(path, space)
    path.write_text("category,base_salary\nZ,1\nout,1\nX,abc\nY,-5\nX,2\nX,3\n")
    with pytest.raises(DataError) as err:
        load_salary_scale(path, space)
    msg = str(err.value)
    for part in (
        "unknown category code 'Z'",
        "out-of-system category has no salary",
        "non-numeric base_salary",
        "negative base_salary",
        "duplicate category 'X'",
    ):
        assert part in msg


def test_profile_for_bindings_and_fallbacks():
    schedule, bindings = parse_finance_config(finance_raw(), make_chars())
    scale = {1: 400000.0, 2: 900000.0}

    p = profile_for(2, (1, 1), scale, bindings, schedule)
    assert p.base_salary == 900000.0
    assert p.annuity_pct == 0.30
    assert p.pension_regime is PensionRegime.JUPEMA_CAPITALIZACION
    assert p.workload_hours == 48.0  # schedule full time, no workload binding

    # unsplittable cells fall back to defaults
    p = profile_for(1, None, scale, bindings, schedule)
    assert p.annuity_pct == 0.0
    assert p.pension_regime is PensionRegime.IVM

    # explicit workload wins over everything
    p = profile_for(1, (0, 0), scale, bindings, schedule, workload_hours=12.0)
    assert p.workload_hours == 12.0

    with pytest.raises(ConfigError, match="no salary scale entry"):
        profile_for(0, None, scale, bindings, schedule)


def test_workload_binding_applies_without_override():
    chars = CharacteristicSpace(("shift",), (("half", "full"),))
    raw = {
        "bindings": {
            "workload_hours": {
                "characteristic": "shift",
                "levels": {"half": 20, "full": 40},
            }
        }
    }
    schedule, bindings = parse_finance_config(raw, chars)
    p = profile_for(1, (0,), {1: 100.0}, bindings, schedule)
    assert p.workload_hours == 20.0
    p = profile_for(1, (0,), {1: 100.0}, bindings, schedule, workload_hours=40.0)
    assert p.workload_hours == 40.0


def test_aggregate_costs_sums_groups():
    schedule = RateSchedule(inflation=0.03)
    profiles = {
        "a": SalaryProfile(base_salary=300000.0),
        "b": SalaryProfile(base_salary=500000.0, annuity_pct=0.1),
    }
    counts = {"a": 2.5, "b": 1.0}
    out = aggregate_costs(counts, profiles, 2018, schedule)
    want_a = 2.5 * total_cost(2018, profiles["a"], schedule)
    want_b = 1.0 * total_cost(2018, profiles["b"], schedule)
    assert out["a"] == pytest.approx(want_a, rel=1e-14)
    assert out[None] == pytest.approx(want_a + want_b, rel=1e-14)
    with pytest.raises(ConfigError, match="no salary profile"):
        aggregate_costs({"c": 1.0}, profiles, 2018, schedule)
