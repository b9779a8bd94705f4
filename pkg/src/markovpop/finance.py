"""Payroll cost formulas, employer rate schedules and cost aggregation.

The projected gross salary cost anchors on a December 2015 base salary
scale and inflates it at a fixed yearly rate; the employer total adds
the school-board levy, the pension contribution for the person's regime,
social security, severance accrual, the year-end bonus month and the
occupational insurance premium.  Rate schedules are piecewise constant
in the calendar year.

All currency math stays in double precision; rounding to whole currency
units happens only when reports are written.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field

from .errors import ConfigError, DataError
from .states import CharacteristicSpace

BASE_YEAR = 2016  # first projectable calendar year; the scale is Dec 2015


class PensionRegime(str, enum.Enum):
    IVM = "IVM"
    JUPEMA_CAPITALIZACION = "JUPEMA_CAPITALIZACION"
    JUPEMA_REPARTO = "JUPEMA_REPARTO"


# School-board levy by calendar year.
ESCOLAR_RATES = ((2015, 0.0819), (2016, 0.0823), (2017, 0.0828), (2018, 0.0833))

# Employer pension contribution for the IVM regime, by calendar year band.
IVM_RATES = (
    (2014, 0.0492),
    (2019, 0.0508),
    (2024, 0.0525),
    (2029, 0.0542),
    (2034, 0.0558),
    (2100, 0.0575),
)

JUPEMA_CAPITALIZACION_RATE = 0.0675
JUPEMA_REPARTO_RATE = 0.05

SOCIAL_SECURITY_RATE = 0.1425
SEVERANCE_RATE = 0.0425
YEAR_END_BONUS_RATE = 0.0833  # one extra month, accrued monthly
INSURANCE_RATE = 0.0025
SUPPLEMENT_COVERAGE = 0.90  # scale salaries cover this share of the true base


@dataclass(frozen=True)
class RateSchedule:
    """Inflation plus the statutory employer rates."""

    inflation: float = 0.0388
    full_time_hours: float = 40.0

    def escolar_rate(self, year: int) -> float:
        """School-board levy for a calendar year (>= 2000)."""
        if year < 2000:
            raise ConfigError(f"school-board levy undefined before 2000 (got {year})")
        for upto, rate in ESCOLAR_RATES[:-1]:
            if year <= upto:
                return rate
        return ESCOLAR_RATES[-1][1]

    def employer_pension_rate(self, regime: PensionRegime, year: int) -> float:
        regime = PensionRegime(regime)
        if regime is PensionRegime.JUPEMA_CAPITALIZACION:
            return JUPEMA_CAPITALIZACION_RATE
        if regime is PensionRegime.JUPEMA_REPARTO:
            return JUPEMA_REPARTO_RATE
        for upto, rate in IVM_RATES:
            if year <= upto:
                return rate
        return IVM_RATES[-1][1]


@dataclass(frozen=True)
class SalaryProfile:
    """Salary-determining facts for one worker (or one worker class)."""

    base_salary: float  # monthly, from the December 2015 scale
    workload_hours: float = 40.0
    annuity_pct: float = 0.0
    exclusive_dedication_pct: float = 0.0
    prohibition_pct: float = 0.0
    availability_pct: float = 0.0
    pension_regime: PensionRegime = PensionRegime.IVM

    def supplements_factor(self) -> float:
        return 1.0 + self.annuity_pct + self.exclusive_dedication_pct + (
            self.prohibition_pct + self.availability_pct
        )


def salary_cost(year: int, profile: SalaryProfile, schedule: RateSchedule) -> float:
    """Projected yearly gross salary cost for one worker.

    Two half-year blocks of six months each: the first at mid-year
    inflation depth, the second at full next-year depth; scaled by the
    workload share, the salary supplements, and the coverage divisor of
    the December 2015 scale.
    """
    if year < BASE_YEAR:
        raise ConfigError(
            f"salary cost is anchored at the December 2015 scale; "
            f"year {year} is before {BASE_YEAR}"
        )
    growth = (1.0 + schedule.inflation) ** (year - 2016 + 0.5) + (
        1.0 + schedule.inflation
    ) ** (year - 2015)
    return (
        (profile.workload_hours / schedule.full_time_hours)
        * (6.0 * profile.base_salary * growth)
        * profile.supplements_factor()
        / SUPPLEMENT_COVERAGE
    )


def total_cost(year: int, profile: SalaryProfile, schedule: RateSchedule) -> float:
    """Employer-borne yearly cost: gross salary plus statutory charges."""
    g = salary_cost(year, profile, schedule)
    pension = schedule.employer_pension_rate(profile.pension_regime, year)
    return (
        g
        * (1.0 + schedule.escolar_rate(year))
        * ((1.0 + pension + SOCIAL_SECURITY_RATE + SEVERANCE_RATE) + YEAR_END_BONUS_RATE)
        * (1.0 + INSURANCE_RATE)
    )


# -- mapping characteristic tuples to profiles -------------------------

_PCT_FIELDS = (
    "annuity_pct",
    "exclusive_dedication_pct",
    "prohibition_pct",
    "availability_pct",
)


@dataclass(frozen=True)
class ProfileBindings:
    """How characteristic levels determine salary profile fields.

    Each binding names a characteristic and maps its levels to field
    values.  Unbound percentage fields default to 0, the regime to IVM,
    and the workload to full time.
    """

    pct: dict[str, tuple[int, dict[int, float]]] = field(default_factory=dict)
    regime: tuple[int, dict[int, PensionRegime]] | None = None
    workload: tuple[int, dict[int, float]] | None = None


def parse_finance_config(raw: dict, chars: CharacteristicSpace):
    """Parse the finance section into (schedule, bindings)."""
    inflation = raw.get("inflation", 0.0388)
    if not isinstance(inflation, (int, float)) or isinstance(inflation, bool):
        raise ConfigError(f"finance.inflation must be a number (got {inflation!r})")
    full_time = raw.get("full_time_hours", 40)
    schedule = RateSchedule(inflation=float(inflation), full_time_hours=float(full_time))

    bindings_raw = raw.get("bindings") or {}
    if not isinstance(bindings_raw, dict):
        raise ConfigError("finance.bindings must be a mapping")
    pct = {}
    regime = None
    workload = None
    for fld, spec in bindings_raw.items():
        if not isinstance(spec, dict) or "characteristic" not in spec or "levels" not in spec:
            raise ConfigError(
                f"finance.bindings.{fld}: need 'characteristic' and 'levels'"
            )
        ci = chars.index_of(spec["characteristic"])
        levels = chars.levels[ci]
        mapped = {}
        for level_name, value in spec["levels"].items():
            if level_name not in levels:
                raise ConfigError(
                    f"finance.bindings.{fld}: {spec['characteristic']!r} has no "
                    f"level {level_name!r}"
                )
            mapped[levels.index(level_name)] = value
        missing = [lv for i, lv in enumerate(levels) if i not in mapped]
        if missing:
            raise ConfigError(
                f"finance.bindings.{fld}: unmapped levels {missing} of "
                f"{spec['characteristic']!r}"
            )
        if fld in _PCT_FIELDS:
            pct[fld] = (ci, {i: float(v) for i, v in mapped.items()})
        elif fld == "pension_regime":
            try:
                regime = (ci, {i: PensionRegime(v) for i, v in mapped.items()})
            except ValueError as exc:
                raise ConfigError(f"finance.bindings.pension_regime: {exc}") from None
        elif fld == "workload_hours":
            workload = (ci, {i: float(v) for i, v in mapped.items()})
        else:
            raise ConfigError(f"finance.bindings: unknown profile field {fld!r}")
    return schedule, ProfileBindings(pct=pct, regime=regime, workload=workload)


def load_salary_scale(path, space) -> dict[int, float]:
    """Load the per-category base salary scale (header: category,base_salary)."""
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except FileNotFoundError:
        raise DataError(f"salary scale file not found: {path}") from None
    problems = []
    scale: dict[int, float] = {}
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(reader.fieldnames) != {"category", "base_salary"}:
            raise DataError(
                f"salary scale {path}: header must be exactly 'category,base_salary'"
            )
        for i, row in enumerate(reader, start=1):
            code = (row["category"] or "").strip()
            if code not in space.categories:
                problems.append(f"row {i}: unknown category code {code!r}")
                continue
            idx = space.categories.index(code)
            if idx == 0:
                problems.append(f"row {i}: the out-of-system category has no salary")
                continue
            try:
                w = float(row["base_salary"])
            except (TypeError, ValueError):
                problems.append(f"row {i}: non-numeric base_salary {row['base_salary']!r}")
                continue
            if w < 0:
                problems.append(f"row {i}: negative base_salary at {code!r}")
                continue
            if idx in scale:
                problems.append(f"row {i}: duplicate category {code!r}")
                continue
            scale[idx] = w
    if problems:
        raise DataError(f"salary scale {path} is invalid", problems)
    return scale


def profile_for(
    category: int,
    char_tuple,
    scale: dict[int, float],
    bindings: ProfileBindings,
    schedule: RateSchedule,
    workload_hours: float | None = None,
) -> SalaryProfile:
    """Build the salary profile for a cell.

    `char_tuple` may be None for unsplittable cells; bound fields then
    fall back to their defaults.  `workload_hours`, when given, overrides
    the workload binding (used when counts are already workload-weighted
    full-time equivalents).
    """
    if category not in scale:
        raise ConfigError(
            f"category index {category} has no salary scale entry"
        )
    fields = {"base_salary": scale[category]}
    if char_tuple is not None:
        for fld, (ci, mapping) in bindings.pct.items():
            fields[fld] = mapping[char_tuple[ci]]
        if bindings.regime is not None:
            ci, mapping = bindings.regime
            fields["pension_regime"] = mapping[char_tuple[ci]]
        if bindings.workload is not None and workload_hours is None:
            ci, mapping = bindings.workload
            fields["workload_hours"] = mapping[char_tuple[ci]]
    if workload_hours is not None:
        fields["workload_hours"] = workload_hours
    else:
        fields.setdefault("workload_hours", schedule.full_time_hours)
    return SalaryProfile(**fields)


def aggregate_costs(counts: dict, profiles: dict, year: int, schedule: RateSchedule):
    """Total cost of groups of identical workers.

    `counts` and `profiles` share keys; the result maps each key to
    count x per-person total cost, plus a grand total under the key
    None.  Counts may be fractional (full-time equivalents).
    """
    out = {}
    total = 0.0
    for key, n in counts.items():
        if key not in profiles:
            raise ConfigError(f"no salary profile for group {key!r}")
        cost = n * total_cost(year, profiles[key], schedule)
        out[key] = cost
        total += cost
    out[None] = total
    return out
