"""Fitted model container and JSON (de)serialization.

A fitted model bundles every probability object the projection and the
simulation need: the initial distribution over triples, monthly and
annualized category transition matrices per (age group, seniority group)
cell, entry probabilities, hire entry-category rows, characteristic
distributions, and the stopping-time pmf, together with the state-space
snapshot they were fitted against.

Serialization is a single JSON document.  The initial distribution is a
sparse triplet list; matrices are dense row-major lists.  Floats are
written with Python's shortest round-trip repr, so loading recovers the
exact binary values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .states import CharacteristicSpace, StateSpaceConfig

FORMAT_NAME = "markovpop-model"
FORMAT_VERSION = 1


def _cell_key(ei: int, ai: int) -> str:
    return f"{ei},{ai}"


def _parse_cell_key(s: str) -> tuple[int, int]:
    ei, ai = s.split(",")
    return int(ei), int(ai)


@dataclass
class FittedModel:
    """All fitted probability objects plus the space they live on."""

    space: StateSpaceConfig
    characteristics: CharacteristicSpace
    i0: float
    base_year: int
    full_time_hours: float
    stopping_time_pmf: tuple[float, ...]
    stopping_time_overrides: dict[str, tuple[float, ...]]
    pi: np.ndarray  # (n_categories, n_ages, seniority_max)
    monthly: dict[tuple[int, int], np.ndarray]  # in-system square per cell
    annual: dict[tuple[int, int], np.ndarray]  # in-system square per cell
    entry: dict[tuple[int, int], np.ndarray]  # hire entry distribution per cell
    q1: dict[tuple[int, int], np.ndarray]  # (n_categories,) per cell
    r: dict[tuple[int, int, int], dict[tuple[int, ...], float]]  # (c, ei, ai)
    diagnostics: dict = field(default_factory=dict)
    _operators: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_in_system(self) -> int:
        return self.space.n_categories - 1

    def transition_operator(self, ei: int, ai: int) -> np.ndarray:
        """Square annual operator over all categories for one cell.

        Row 0 is the hire entry-category distribution, rows >= 1 the
        annualized in-system transitions.  Column 0 is structurally zero:
        the operator is applied only to the in-system branch of the
        yearly step, conditioning on membership next year.
        """
        key = (ei, ai)
        op = self._operators.get(key)
        if op is None:
            c = self.space.n_categories
            op = np.zeros((c, c))
            op[0, 1:] = self.entry[key]
            op[1:, 1:] = self.annual[key]
            op.flags.writeable = False
            self._operators[key] = op
        return op

    def r_distribution(self, c: int, ei: int, ai: int) -> dict[tuple[int, ...], float]:
        """Characteristic tuple distribution for an in-system cell.

        Empty dict means the cell was never observed (flagged at fit
        time); callers must treat it as unsplittable.
        """
        return self.r.get((c, ei, ai), {})

    # -- serialization -------------------------------------------------

    def to_json_dict(self) -> dict:
        sp = self.space
        pi_triplets = []
        nz = np.argwhere(self.pi != 0.0)
        for c, eo, a in nz:
            pi_triplets.append(
                [int(c), int(eo) + sp.age_min, int(a), float(self.pi[c, eo, a])]
            )
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "space": {
                "categories": list(sp.categories),
                "age_min": sp.age_min,
                "age_max": sp.age_max,
                "age_groups": [list(g) for g in sp.age_groups],
                "seniority_max": sp.seniority_max,
                "seniority_groups": [list(g) for g in sp.seniority_groups],
                "working_age_min": sp.working_age_min,
            },
            "characteristics": {
                "names": list(self.characteristics.names),
                "levels": [list(lv) for lv in self.characteristics.levels],
            },
            "i0": float(self.i0),
            "base_year": self.base_year,
            "full_time_hours": self.full_time_hours,
            "stopping_time_pmf": list(self.stopping_time_pmf),
            "stopping_time_overrides": {
                k: list(v) for k, v in sorted(self.stopping_time_overrides.items())
            },
            "pi": pi_triplets,
            "monthly": {
                _cell_key(*k): v.tolist() for k, v in sorted(self.monthly.items())
            },
            "annual": {
                _cell_key(*k): v.tolist() for k, v in sorted(self.annual.items())
            },
            "entry": {
                _cell_key(*k): v.tolist() for k, v in sorted(self.entry.items())
            },
            "q1": {_cell_key(*k): v.tolist() for k, v in sorted(self.q1.items())},
            "r": {
                f"{c}|{ei},{ai}": {
                    ",".join(str(j) for j in t): p for t, p in sorted(dist.items())
                }
                for (c, ei, ai), dist in sorted(self.r.items())
            },
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ": "))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def from_json_dict(cls, doc: dict) -> "FittedModel":
        if doc.get("format") != FORMAT_NAME:
            raise DataError("model file: unrecognized format marker")
        if doc.get("version") != FORMAT_VERSION:
            raise DataError(f"model file: unsupported version {doc.get('version')!r}")
        sp_raw = doc["space"]
        space = StateSpaceConfig(
            categories=tuple(sp_raw["categories"]),
            age_min=sp_raw["age_min"],
            age_max=sp_raw["age_max"],
            age_groups=tuple(tuple(g) for g in sp_raw["age_groups"]),
            seniority_max=sp_raw["seniority_max"],
            seniority_groups=tuple(tuple(g) for g in sp_raw["seniority_groups"]),
            working_age_min=sp_raw["working_age_min"],
        )
        chars = CharacteristicSpace(
            names=tuple(doc["characteristics"]["names"]),
            levels=tuple(tuple(lv) for lv in doc["characteristics"]["levels"]),
        )
        pi = np.zeros((space.n_categories, space.n_ages, space.seniority_max))
        for c, e, a, p in doc["pi"]:
            pi[c, e - space.age_min, a] = p

        def cell_arrays(section, shape=None):
            out = {}
            for key, rows in doc[section].items():
                arr = np.array(rows, dtype=float)
                if shape is not None and arr.shape != shape:
                    raise DataError(f"model file: {section}[{key}] has shape {arr.shape}")
                out[_parse_cell_key(key)] = arr
            return out

        nc = space.n_categories - 1
        monthly = cell_arrays("monthly", (nc, nc))
        annual = cell_arrays("annual", (nc, nc))
        entry = cell_arrays("entry", (nc,))
        q1 = cell_arrays("q1", (space.n_categories,))
        r = {}
        for key, dist in doc["r"].items():
            c_str, cell = key.split("|")
            ei, ai = _parse_cell_key(cell)
            parsed = {}
            for tkey, p in dist.items():
                t = tuple(int(x) for x in tkey.split(",")) if tkey else ()
                parsed[t] = float(p)
            r[(int(c_str), ei, ai)] = parsed
        return cls(
            space=space,
            characteristics=chars,
            i0=float(doc["i0"]),
            base_year=int(doc["base_year"]),
            full_time_hours=float(doc["full_time_hours"]),
            stopping_time_pmf=tuple(doc["stopping_time_pmf"]),
            stopping_time_overrides={
                k: tuple(v) for k, v in doc["stopping_time_overrides"].items()
            },
            pi=pi,
            monthly=monthly,
            annual=annual,
            entry=entry,
            q1=q1,
            r=r,
            diagnostics=doc.get("diagnostics", {}),
        )

    @classmethod
    def load(cls, path) -> "FittedModel":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise DataError(f"model file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"model file {path} is not valid JSON: {exc}") from None
        return cls.from_json_dict(doc)

    def check_against(self, space: StateSpaceConfig, chars: CharacteristicSpace) -> None:
        """Fail if the model was fitted on a different configuration."""
        if self.space != space:
            raise ConfigError(
                "model/config mismatch: the model was fitted on a different state space"
            )
        if self.characteristics != chars:
            raise ConfigError(
                "model/config mismatch: characteristic declarations differ"
            )
