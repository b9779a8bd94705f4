"""Exact yearly propagation of the triple distribution.

The one-step law: membership next year is decided by the cell's entry
probability; members move categories per the cell's annual operator and
gain one year of seniority; non-members keep their seniority.  Everyone
ages one year.  Cell lookup always uses the source state's groups.

Age or seniority that would leave the configured ranges is an error
under the default "strict" policy; the "absorb" policy clamps into the
top value instead (useful for long horizons and the bounded toy spaces
used in tests).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import HorizonError
from .model import FittedModel
from .states import Triple


@dataclass(frozen=True)
class TripleDistribution:
    """Distribution over (category, age, seniority) at a given year."""

    values: np.ndarray  # (n_categories, n_ages, seniority_max)
    year: int

    def total(self) -> float:
        return float(self.values.sum())


def one_step_triple_probability(frm: Triple, to: Triple, model: FittedModel) -> float:
    """Probability of one yearly step from `frm` to `to`.

    Implements the four-case law literally: moving (or entering) raises
    seniority by one and cannot target category 0; leaving (or staying
    out) keeps seniority; everyone ages one year; anything else has
    probability zero.  No feasibility gate is applied (see README).
    """
    space = model.space
    if to.age != frm.age + 1:
        return 0.0
    ei, ai = space.locate_groups(frm.age, frm.seniority)
    q = float(model.q1[(ei, ai)][frm.category])
    delta = to.seniority - frm.seniority
    if to.category != 0:
        if delta != 1:
            return 0.0
        t = model.transition_operator(ei, ai)
        return float(t[frm.category, to.category]) * q
    if delta != 0:
        return 0.0
    return 1.0 - q


def propagate_distribution(
    dist: TripleDistribution, model: FittedModel, policy: str = "strict"
) -> TripleDistribution:
    """Apply one yearly step to the whole distribution.

    Accumulation into each target cell runs in ascending source-category
    order (the einsum contracts categories in index order), so repeated
    runs are bit-identical.
    """
    space = model.space
    d = dist.values
    n_cat = space.n_categories
    n_ages = space.n_ages
    n_sen = space.seniority_max
    cats = np.arange(1, n_cat)

    if policy == "strict":
        top_age_mass = d[:, n_ages - 1, :].sum()
        if top_age_mass > 0.0:
            raise HorizonError(
                f"age overflow: mass {top_age_mass:.3g} at the top age "
                f"{space.age_max - 1} cannot age further (year {dist.year}); "
                "shorten the horizon or set overflow_policy: absorb"
            )

    out = np.zeros_like(d)
    for ei, ai in space.cells():
        elo, ehi = space.age_groups[ei]
        alo, ahi = space.seniority_groups[ai]
        eo_lo, eo_hi = elo - space.age_min, ehi - space.age_min
        sub = d[:, eo_lo:eo_hi, alo:ahi]
        if not sub.any():
            continue
        q1 = model.q1[(ei, ai)]
        t = model.transition_operator(ei, ai)

        enter = np.einsum("cea,cl->lea", sub * q1[:, None, None], t[:, 1:])
        stay_out = (sub * (1.0 - q1)[:, None, None]).sum(axis=0)

        e_tgt = np.arange(eo_lo, eo_hi) + 1
        a_src = np.arange(alo, ahi)
        a_tgt = a_src + 1
        if policy == "strict" and ahi == n_sen and enter[:, :, -1].sum() > 0.0:
            raise HorizonError(
                f"seniority overflow: in-system mass at the top seniority "
                f"{n_sen - 1} (cell {ei},{ai}, year {dist.year}); "
                "shorten the horizon or set overflow_policy: absorb"
            )
        # Clamping is safe under strict as well: the overflow checks above
        # guarantee the clamped target rows receive only zero mass.
        e_tgt = np.minimum(e_tgt, n_ages - 1)
        a_tgt = np.minimum(a_tgt, n_sen - 1)

        np.add.at(
            out,
            (cats[:, None, None], e_tgt[None, :, None], a_tgt[None, None, :]),
            enter,
        )
        np.add.at(
            out,
            (np.zeros(1, dtype=int)[:, None, None], e_tgt[None, :, None], a_src[None, None, :]),
            stay_out[None, :, :],
        )
    return TripleDistribution(values=out, year=dist.year + 1)


def distribution_at_year(
    pi: np.ndarray, model: FittedModel, n: int, policy: str = "strict"
) -> TripleDistribution:
    """Propagate the initial distribution n years forward."""
    return trajectory(pi, model, n, policy)[-1]


def trajectory(
    pi: np.ndarray, model: FittedModel, n: int, policy: str = "strict"
) -> list[TripleDistribution]:
    """Distributions for years 0..n (year 0 is the initial distribution)."""
    if n < 0:
        raise HorizonError(f"projection horizon must be >= 0 (got {n})")
    space = model.space
    if policy == "strict" and n > 0:
        with_mass = np.argwhere(pi.sum(axis=(0, 2)) > 0.0)
        if with_mass.size:
            top = int(with_mass.max()) + space.age_min
            if top + n > space.age_max - 1:
                raise HorizonError(
                    f"age overflow: initial mass at age {top} cannot be projected "
                    f"{n} years within [{space.age_min},{space.age_max}); "
                    "shorten the horizon or set overflow_policy: absorb"
                )
    out = [TripleDistribution(values=np.array(pi, dtype=float), year=0)]
    for _ in range(n):
        out.append(propagate_distribution(out[-1], model, policy))
    return out


@dataclass(frozen=True)
class GroupProbabilityTable:
    """Cell-level probabilities and their characteristic splits for one year.

    `v` maps (category, age group, seniority group) to a distribution over
    characteristic tuples; the aggregate pseudo-tuple None carries cells
    that cannot be split (category 0, or in-system cells whose
    characteristic distribution was never observed).
    """

    year: int
    p: np.ndarray  # (n_categories, n_age_groups, n_seniority_groups)
    v: dict
    unsplittable: tuple


def group_probabilities(dist: TripleDistribution, model: FittedModel) -> GroupProbabilityTable:
    """Aggregate a triple distribution to cells and split by characteristics."""
    space = model.space
    p = np.zeros((space.n_categories, space.n_age_groups, space.n_seniority_groups))
    for ei, ai in space.cells():
        elo, ehi = space.age_groups[ei]
        alo, ahi = space.seniority_groups[ai]
        p[:, ei, ai] = dist.values[
            :, elo - space.age_min : ehi - space.age_min, alo:ahi
        ].sum(axis=(1, 2))

    v = {}
    unsplittable = []
    for c in range(space.n_categories):
        for ei, ai in space.cells():
            mass = float(p[c, ei, ai])
            if c == 0:
                v[(c, ei, ai)] = {None: mass}
                continue
            r = model.r_distribution(c, ei, ai)
            if not r:
                if mass > 0.0:
                    unsplittable.append((c, ei, ai))
                v[(c, ei, ai)] = {None: mass}
            else:
                v[(c, ei, ai)] = {t: mass * w for t, w in r.items()}
    return GroupProbabilityTable(
        year=dist.year, p=p, v=v, unsplittable=tuple(unsplittable)
    )


@dataclass(frozen=True)
class ExpectedPopulationTable:
    """Expected head counts: the group table scaled by the population size."""

    year: int
    counts: np.ndarray
    split: dict


def expected_populations(table: GroupProbabilityTable, i0: float) -> ExpectedPopulationTable:
    return ExpectedPopulationTable(
        year=table.year,
        counts=table.p * i0,
        split={
            cell: {t: i0 * w for t, w in dist.items()} for cell, dist in table.v.items()
        },
    )


def flatten_v(table: GroupProbabilityTable):
    """Fixed-order flattening of the joint cell/tuple distribution.

    Order: categories ascending, age groups ascending, seniority groups
    ascending, tuples in index order (None first when present).  The
    label set depends only on the model, not the year, so simulation
    streams stay aligned across years and horizons.
    """
    labels = []
    probs = []
    for (c, ei, ai), dist in sorted(
        table.v.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])
    ):
        for t in sorted(dist.keys(), key=lambda t: (t is not None, t)):
            labels.append((c, ei, ai, t))
            probs.append(dist[t])
    return labels, np.array(probs, dtype=float)
