"""Estimators that turn the counts cube into a fitted model.

Monthly transition rows are per-month ratios averaged over the months
where the denominator (cell population minus exits) is positive; rows
never observed fall back to the identity and are flagged.  Yearly entry
probabilities average per-year hire/stay ratios the same way.  The
characteristic distribution averages per-month tuple shares.  Everything
is workload-weighted because the cube is.
"""

from __future__ import annotations

import logging

import numpy as np

from .config import RunConfig
from .errors import DataError
from .ingest import CountsCube, ReserveSpec, build_reserve
from .model import FittedModel

log = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-12


def estimate_initial_distribution(cube: CountsCube, i0: float, cfg: RunConfig) -> np.ndarray:
    """Average the latest 12 months of counts and normalize by i0.

    Requires the reserve rows to be present, otherwise the result cannot
    cover the whole population.
    """
    if not cube.has_reserve:
        raise DataError("initial distribution needs reserve rows; run build_reserve first")
    window = range(-11, 1)
    missing = [m for m in window if m not in cube.calendar]
    if missing:
        raise DataError(
            "initial distribution needs the 12 latest months; "
            f"missing normalized months: {sorted(missing)}"
        )
    space = cfg.space
    n0 = np.zeros((space.n_categories, space.n_ages, space.seniority_max))
    for (m, c, e, a), w in cube.cells.items():
        if m in window:
            n0[c, e - space.age_min, a] += w
    n0 /= 12.0
    pi = n0 / i0
    total = pi.sum()
    if abs(total - 1.0) > 1e-9:
        raise DataError(
            f"initial distribution sums to {total!r}; census totals and panel disagree"
        )
    return pi


def estimate_monthly_transitions(cube: CountsCube, cfg: RunConfig):
    """Per-cell monthly category transition matrices over in-system rows.

    Returns (matrices, diagnostics).  Matrix index i corresponds to
    category index i+1.
    """
    if not cube.flow_months:
        raise DataError("monthly transitions need at least two consecutive observed months")
    space = cfg.space
    nc = space.n_categories - 1

    flow_rows: dict[tuple, np.ndarray] = {}
    exits: dict[tuple, float] = {}
    for (m, ei, ai, r, l), w in cube.flows.items():
        if l == 0:
            exits[(m, ei, ai, r)] = exits.get((m, ei, ai, r), 0.0) + w
        else:
            row = flow_rows.get((m, ei, ai, r))
            if row is None:
                row = flow_rows[(m, ei, ai, r)] = np.zeros(nc)
            row[l - 1] += w

    matrices = {}
    unobserved = []
    renormalized = []
    for ei, ai in space.cells():
        mat = np.zeros((nc, nc))
        for r in range(1, nc + 1):
            acc = np.zeros(nc)
            n_months = 0
            for m in cube.flow_months:
                total = cube.group_totals.get((m, ei, ai, r), 0.0)
                denom = total - exits.get((m, ei, ai, r), 0.0)
                if denom <= 0.0:
                    continue
                row = flow_rows.get((m, ei, ai, r))
                if row is not None:
                    acc += row / denom
                n_months += 1
            if n_months == 0:
                mat[r - 1, r - 1] = 1.0
                unobserved.append([ei, ai, r])
                continue
            row = acc / n_months
            dev = abs(row.sum() - 1.0)
            if dev > ROW_SUM_TOL:
                if row.sum() <= 0.0:
                    raise DataError(
                        f"monthly transition row (cell {ei},{ai}, category {r}) sums to 0"
                    )
                log.warning(
                    "renormalizing monthly transition row (cell %d,%d, category %d): "
                    "deviation %.3e",
                    ei, ai, r, dev,
                )
                renormalized.append([ei, ai, r, dev])
                row = row / row.sum()
            mat[r - 1] = row
        matrices[(ei, ai)] = mat
    diag = {
        "unobserved_transition_rows": unobserved,
        "renormalized_transition_rows": renormalized,
    }
    return matrices, diag


def annualize_transitions(
    monthly: dict,
    pmf,
    overrides: dict,
    cfg: RunConfig,
):
    """Mix monthly matrix powers by the stopping-time pmf.

    P = sum_t pmf[t] * monthly^t for t = 1..12.  Per-category pmf
    overrides replace single columns; when any override is present the
    rows are renormalized (and reported), since mixed columns need not
    leave the rows stochastic.
    """
    space = cfg.space
    pmf = np.asarray(pmf, dtype=float)
    if pmf.shape != (12,):
        raise DataError("stopping-time pmf must have 12 entries")
    override_cols = {}
    for code, values in (overrides or {}).items():
        idx = space.category_index(code)
        override_cols[idx - 1] = np.asarray(values, dtype=float)

    annual = {}
    renormalized = []
    for cell, m in monthly.items():
        powers = []
        p = np.eye(m.shape[0])
        for _t in range(12):
            p = p @ m
            powers.append(p)
        acc = sum(w * powers[t] for t, w in enumerate(pmf))
        for col, colpmf in override_cols.items():
            acc[:, col] = sum(w * powers[t][:, col] for t, w in enumerate(colpmf))
        if override_cols:
            sums = acc.sum(axis=1)
            if np.any(sums <= 0.0):
                raise DataError(f"annualized matrix for cell {cell} has a zero row")
            if np.max(np.abs(sums - 1.0)) > ROW_SUM_TOL:
                renormalized.append([cell[0], cell[1], float(np.max(np.abs(sums - 1.0)))])
                acc = acc / sums[:, None]
        annual[cell] = acc
    diag = {"renormalized_annual_cells": renormalized}
    return annual, diag


def estimate_entry_probabilities(cube: CountsCube, cfg: RunConfig):
    """Probability of belonging to the system next year, per cell and category.

    In-system rows average stay/(stay+exit) over observed year
    boundaries.  The out-of-system row uses the December reserve mass as
    the not-hired pool.  Cells with no observations get 0 and a flag.
    """
    if not cube.has_reserve:
        raise DataError("entry probabilities need reserve rows; run build_reserve first")
    if not cube.q_years:
        raise DataError(
            "entry probabilities need at least one year boundary "
            "(previous December observed plus a month of the next year)"
        )
    space = cfg.space
    cal_to_norm = {cal: m for m, cal in cube.calendar.items()}

    sums: dict[tuple, float] = {}
    counts: dict[tuple, int] = {}
    inconsistent = []
    for (y, ei, ai, c), (stay, exit_) in cube.stay_exit.items():
        denom = stay + exit_
        if denom <= 0.0:
            continue
        key = (ei, ai, c)
        sums[key] = sums.get(key, 0.0) + stay / denom
        counts[key] = counts.get(key, 0) + 1
    for ei, ai in space.cells():
        for y in cube.q_years:
            dec_m = cal_to_norm.get((y - 1, 12))
            if dec_m is None:
                continue
            reserve_mass = cube.group_totals.get((dec_m, ei, ai, 0), 0.0)
            h = cube.hires.get((y, ei, ai), 0.0)
            if reserve_mass <= 0.0 and h <= 0.0:
                continue
            if h > reserve_mass:
                inconsistent.append([y, ei, ai, h, reserve_mass])
            denom = max(reserve_mass, h)
            key = (ei, ai, 0)
            sums[key] = sums.get(key, 0.0) + h / denom
            counts[key] = counts.get(key, 0) + 1

    q1 = {}
    unobserved = []
    for ei, ai in space.cells():
        vec = np.zeros(space.n_categories)
        for c in range(space.n_categories):
            key = (ei, ai, c)
            if key in counts:
                vec[c] = sums[key] / counts[key]
            else:
                unobserved.append([ei, ai, c])
        q1[(ei, ai)] = vec
    diag = {"unobserved_q_cells": unobserved, "hires_exceeding_reserve": inconsistent}
    return q1, diag


def estimate_entry_categories(cube: CountsCube, cfg: RunConfig):
    """Distribution of the category hires enter, per source cell.

    Averaged over years with hires.  Cells without any observed hire get
    a uniform fallback plus a flag; such rows are only reachable when the
    fitted hire probability is zero, so the fallback is inert.
    """
    space = cfg.space
    nc = space.n_categories - 1
    per_cell_years: dict[tuple, dict[int, np.ndarray]] = {}
    for (y, ei, ai, c), w in cube.entry_cats.items():
        years = per_cell_years.setdefault((ei, ai), {})
        vec = years.get(y)
        if vec is None:
            vec = years[y] = np.zeros(nc)
        vec[c - 1] += w

    entry = {}
    unobserved = []
    for cell in space.cells():
        years = per_cell_years.get(cell)
        if not years:
            entry[cell] = np.full(nc, 1.0 / nc)
            unobserved.append(list(cell))
            continue
        acc = np.zeros(nc)
        for vec in years.values():
            acc += vec / vec.sum()
        entry[cell] = acc / len(years)
    diag = {"unobserved_entry_cells": unobserved}
    return entry, diag


def estimate_characteristic_distribution(cube: CountsCube, cfg: RunConfig):
    """Per-month tuple shares averaged over months with observations."""
    space = cfg.space
    by_cell: dict[tuple, dict[int, dict]] = {}
    for (m, c, ei, ai, t), w in cube.char_counts.items():
        months = by_cell.setdefault((c, ei, ai), {})
        dist = months.setdefault(m, {})
        dist[t] = dist.get(t, 0.0) + w

    r = {}
    unobserved = []
    for c in range(1, space.n_categories):
        for cell in space.cells():
            key = (c, *cell)
            months = by_cell.get(key)
            if not months:
                r[key] = {}
                unobserved.append([c, *cell])
                continue
            acc: dict[tuple, float] = {}
            n_months = 0
            for dist in months.values():
                total = sum(dist.values())
                if total <= 0.0:
                    continue
                for t, w in dist.items():
                    acc[t] = acc.get(t, 0.0) + w / total
                n_months += 1
            r[key] = {t: v / n_months for t, v in sorted(acc.items())}
    diag = {"unobserved_r_cells": unobserved}
    return r, diag


def fit_model(cube: CountsCube, reserve: ReserveSpec, cfg: RunConfig) -> FittedModel:
    """Run every estimator and assemble the fitted model."""
    if not cube.has_reserve:
        cube = build_reserve(cube, reserve, cfg)
    i0 = reserve.total_population
    pi = estimate_initial_distribution(cube, i0, cfg)
    monthly, diag_m = estimate_monthly_transitions(cube, cfg)
    annual, diag_a = annualize_transitions(
        monthly, cfg.stopping_time_pmf, cfg.stopping_time_overrides, cfg
    )
    q1, diag_q = estimate_entry_probabilities(cube, cfg)
    entry, diag_e = estimate_entry_categories(cube, cfg)
    r, diag_r = estimate_characteristic_distribution(cube, cfg)
    diagnostics = {
        **diag_m,
        **diag_a,
        **diag_q,
        **diag_e,
        **diag_r,
        "warnings": list(cube.warnings),
    }
    return FittedModel(
        space=cfg.space,
        characteristics=cfg.characteristics,
        i0=i0,
        base_year=cube.base_calendar_year,
        full_time_hours=cfg.full_time_hours,
        stopping_time_pmf=tuple(cfg.stopping_time_pmf),
        stopping_time_overrides=dict(cfg.stopping_time_overrides),
        pi=pi,
        monthly=monthly,
        annual=annual,
        entry=entry,
        q1=q1,
        r=r,
        diagnostics=diagnostics,
    )
