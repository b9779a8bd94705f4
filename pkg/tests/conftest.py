"""Shared fixtures: toy spaces, randomized models, a generated CLI world."""

import numpy as np
import pytest
import yaml

from markovpop.model import FittedModel
from markovpop.states import CharacteristicSpace, StateSpaceConfig

import panelgen


def make_toy_space() -> StateSpaceConfig:
    """3 categories (one out-of-system), 4 ages, 3 seniorities."""
    return StateSpaceConfig(
        categories=("out", "X", "Y"),
        age_min=0,
        age_max=4,
        age_groups=((0, 2), (2, 4)),
        seniority_max=3,
        seniority_groups=((0, 2), (2, 3)),
        working_age_min=0,
    )


def make_random_model(
    space: StateSpaceConfig,
    chars: CharacteristicSpace | None = None,
    seed: int = 0,
    i0: float = 1000.0,
    base_year: int = 2016,
    with_r: bool = False,
) -> FittedModel:
    """Fitted-model shaped object with random but valid probabilities."""
    rng = np.random.Generator(np.random.Philox(seed))
    chars = chars if chars is not None else CharacteristicSpace((), ())
    nc = space.n_categories
    n_in = nc - 1

    def stochastic(shape):
        m = rng.random(shape) + 0.05
        return m / m.sum(axis=-1, keepdims=True)

    monthly, annual, entry, q1, r = {}, {}, {}, {}, {}
    tuples = list(chars.all_tuples()) if chars.n_characteristics else []
    for cell in space.cells():
        monthly[cell] = stochastic((n_in, n_in))
        annual[cell] = stochastic((n_in, n_in))
        entry[cell] = stochastic((n_in,))
        q1[cell] = rng.uniform(0.1, 0.9, size=nc)
        if with_r and tuples:
            for c in range(1, nc):
                weights = stochastic((len(tuples),))
                r[(c, *cell)] = {t: float(w) for t, w in zip(tuples, weights)}
    pi = rng.random((nc, space.n_ages, space.seniority_max))
    pi /= pi.sum()
    return FittedModel(
        space=space,
        characteristics=chars,
        i0=i0,
        base_year=base_year,
        full_time_hours=40.0,
        stopping_time_pmf=tuple([1.0 / 12.0] * 12),
        stopping_time_overrides={},
        pi=pi,
        monthly=monthly,
        annual=annual,
        entry=entry,
        q1=q1,
        r=r,
        diagnostics={},
    )


def write_world_inputs(spec, panel, base, scale=None):
    """Write the CSV/YAML inputs a CLI run needs; returns their paths."""
    paths = {
        "config": base / "config.yaml",
        "records": base / "records.csv",
        "reserve": base / "reserve.csv",
    }
    with open(paths["config"], "w") as fh:
        yaml.safe_dump(spec.config, fh)
    panel.write_records_csv(paths["records"])
    panel.write_reserve_csv(paths["reserve"])
    if scale is not None:
        paths["scale"] = base / "scale.csv"
        panelgen.write_salary_scale_csv(paths["scale"], scale)
    return paths


@pytest.fixture(scope="session")
def mini_pipeline(tmp_path_factory):
    """Generated mini world with its inputs written and the model fitted."""
    from markovpop.cli import main

    base = tmp_path_factory.mktemp("mini")
    spec = panelgen.make_mini_world()
    panel = panelgen.generate(spec, start_year=2014, n_years=3, seed=3)
    paths = write_world_inputs(spec, panel, base, scale=panelgen.MINI_SALARY_SCALE)
    paths["model"] = base / "model.json"
    rc = main([
        "fit",
        "--config", str(paths["config"]),
        "--records", str(paths["records"]),
        "--reserve", str(paths["reserve"]),
        "--out", str(paths["model"]),
    ])
    assert rc == 0
    paths["base"] = base
    return paths
