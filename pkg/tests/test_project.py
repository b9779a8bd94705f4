"""Yearly propagation: the one-step law, overflow policies, aggregation."""

import numpy as np
import pytest

from markovpop.errors import HorizonError
from markovpop.project import (
    TripleDistribution,
    distribution_at_year,
    expected_populations,
    flatten_v,
    group_probabilities,
    one_step_triple_probability,
    propagate_distribution,
    trajectory,
)
from markovpop.states import Triple

from conftest import make_random_model, make_toy_space
from test_model import make_chars


def test_one_step_law_cases():
    model = make_random_model(make_toy_space(), seed=20)
    q = model.q1[(0, 0)]
    t = model.transition_operator(0, 0)

    frm = Triple(1, 1, 1)
    # in-system target: operator entry times membership probability
    assert one_step_triple_probability(frm, Triple(2, 2, 2), model) == pytest.approx(
        t[1, 2] * q[1]
    )
    assert one_step_triple_probability(frm, Triple(1, 2, 2), model) == pytest.approx(
        t[1, 1] * q[1]
    )
    # leaving keeps seniority
    assert one_step_triple_probability(frm, Triple(0, 2, 1), model) == pytest.approx(
        1.0 - q[1]
    )
    # hires come through the entry row of the operator
    out = Triple(0, 1, 1)
    assert one_step_triple_probability(out, Triple(2, 2, 2), model) == pytest.approx(
        t[0, 2] * q[0]
    )
    assert one_step_triple_probability(out, Triple(0, 2, 1), model) == pytest.approx(
        1.0 - q[0]
    )

    # everything else is zero: wrong age step, wrong seniority step
    assert one_step_triple_probability(frm, Triple(2, 1, 2), model) == 0.0
    assert one_step_triple_probability(frm, Triple(2, 3, 2), model) == 0.0
    assert one_step_triple_probability(frm, Triple(2, 2, 1), model) == 0.0
    assert one_step_triple_probability(frm, Triple(2, 2, 0), model) == 0.0
    assert one_step_triple_probability(frm, Triple(0, 2, 2), model) == 0.0
    assert one_step_triple_probability(frm, Triple(0, 2, 0), model) == 0.0


def test_propagation_conserves_mass_under_absorb():
    model = make_random_model(make_toy_space(), seed=21)
    dists = trajectory(model.pi, model, 5, policy="absorb")
    assert len(dists) == 6
    for k, d in enumerate(dists):
        assert d.year == k
        assert d.total() == pytest.approx(1.0, abs=1e-12)
    last = distribution_at_year(model.pi, model, 5, policy="absorb")
    np.testing.assert_array_equal(last.values, dists[-1].values)


def test_strict_policy_rejects_age_overflow():
    model = make_random_model(make_toy_space(), seed=22)
    pi = np.zeros_like(model.pi)
    pi[1, 3, 1] = 1.0  # mass at the top age
    with pytest.raises(HorizonError, match="age overflow"):
        propagate_distribution(TripleDistribution(pi, 0), model)

    # the horizon check fires before any stepping
    pi = np.zeros_like(model.pi)
    pi[1, 2, 1] = 1.0
    with pytest.raises(HorizonError, match="age overflow"):
        trajectory(pi, model, 2)
    assert len(trajectory(pi, model, 1)) == 2


def test_strict_policy_rejects_seniority_overflow():
    model = make_random_model(make_toy_space(), seed=23)
    pi = np.zeros_like(model.pi)
    pi[1, 0, 2] = 1.0  # top seniority; entering next year would overflow
    with pytest.raises(HorizonError, match="seniority overflow"):
        propagate_distribution(TripleDistribution(pi, 0), model)


def test_absorb_clamps_top_cell():
    model = make_random_model(make_toy_space(), seed=24)
    pi = np.zeros_like(model.pi)
    pi[1, 3, 2] = 1.0  # top age and top seniority at once
    out = propagate_distribution(TripleDistribution(pi, 0), model, policy="absorb")
    q = model.q1[(1, 1)][1]
    t = model.transition_operator(1, 1)
    assert out.values[0, 3, 2] == pytest.approx(1.0 - q)
    for c in (1, 2):
        assert out.values[c, 3, 2] == pytest.approx(q * t[1, c])
    assert out.total() == pytest.approx(1.0, abs=1e-15)


def test_negative_horizon_rejected():
    model = make_random_model(make_toy_space(), seed=25)
    with pytest.raises(HorizonError, match=">= 0"):
        trajectory(model.pi, model, -1)


def test_group_probabilities_aggregate_and_split():
    space = make_toy_space()
    model = make_random_model(space, make_chars(), seed=26, with_r=True)
    dist = TripleDistribution(model.pi, 0)
    table = group_probabilities(dist, model)

    # block sums match direct aggregation
    assert table.p[1, 0, 0] == pytest.approx(model.pi[1, 0:2, 0:2].sum())
    assert table.p[2, 1, 1] == pytest.approx(model.pi[2, 2:4, 2:3].sum())
    assert table.p.sum() == pytest.approx(1.0, abs=1e-12)

    # v covers every category/cell pair; splits preserve the cell mass
    assert set(table.v) == {
        (c, ei, ai) for c in range(3) for ei, ai in space.cells()
    }
    for (c, ei, ai), split in table.v.items():
        assert sum(split.values()) == pytest.approx(table.p[c, ei, ai], abs=1e-12)
        if c == 0:
            assert set(split) == {None}
    assert table.unsplittable == ()


def test_group_probabilities_flag_unsplit_cells():
    model = make_random_model(make_toy_space(), seed=27)  # no r fitted at all
    table = group_probabilities(TripleDistribution(model.pi, 0), model)
    for (c, ei, ai), split in table.v.items():
        assert set(split) == {None}
    assert len(table.unsplittable) == 8  # every in-system cell holds mass


def test_flatten_v_order_is_year_invariant():
    model = make_random_model(make_toy_space(), make_chars(), seed=28, with_r=True)
    del model.r[(1, 0, 0)]  # unobserved cell contributes a None label
    t0 = group_probabilities(TripleDistribution(model.pi, 0), model)
    labels0, probs0 = flatten_v(t0)
    assert probs0.sum() == pytest.approx(1.0, abs=1e-12)
    assert labels0 == sorted(
        labels0, key=lambda l: (l[0], l[1], l[2], l[3] is not None, l[3] or ())
    )
    assert (1, 0, 0, None) in labels0

    d2 = distribution_at_year(model.pi, model, 2, policy="absorb")
    labels2, _ = flatten_v(group_probabilities(d2, model))
    assert labels2 == labels0


def test_expected_populations_scale_by_i0():
    model = make_random_model(make_toy_space(), make_chars(), seed=29, with_r=True)
    table = group_probabilities(TripleDistribution(model.pi, 3), model)
    pops = expected_populations(table, 500.0)
    assert pops.year == 3
    np.testing.assert_allclose(pops.counts, table.p * 500.0)
    assert pops.counts.sum() == pytest.approx(500.0, abs=1e-9)
    cell = (1, 1, 1)
    for t, w in table.v[cell].items():
        assert pops.split[cell][t] == pytest.approx(500.0 * w)
