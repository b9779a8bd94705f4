"""Report emission: CSV writers and the embedded run manifest.

Every report starts with a comment block ('# ' lines) identifying the
command, package version, seed and the SHA-256 of each input file, so a
report can be traced back to exactly what produced it.  A timestamp line
is included only when SOURCE_DATE_EPOCH is set; by default reports are
byte-identical across repeated runs.

Probabilities and counts are written with shortest round-trip precision;
currency amounts are rounded to whole units here and nowhere else.
"""

from __future__ import annotations

import csv
import hashlib
import os
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .montecarlo import SimulationResult, nearest_rank


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class RunManifest:
    """Provenance block embedded at the top of every report."""

    command: str
    inputs: tuple[tuple[str, str, str], ...]  # (role, path, sha256)
    params: tuple[tuple[str, str], ...]
    version: str = __version__

    @classmethod
    def collect(cls, command: str, inputs: dict, params: dict) -> "RunManifest":
        resolved = tuple(
            (role, str(path), _sha256(path)) for role, path in sorted(inputs.items())
        )
        rendered = tuple((k, str(v)) for k, v in sorted(params.items()))
        return cls(command=command, inputs=resolved, params=rendered)

    def comment_lines(self) -> list[str]:
        lines = [
            "# markovpop-report",
            f"# command: {self.command}",
            f"# version: {self.version}",
        ]
        for k, v in self.params:
            lines.append(f"# {k}: {v}")
        for role, path, digest in self.inputs:
            lines.append(f"# input {role}: {path} sha256={digest}")
        epoch = os.environ.get("SOURCE_DATE_EPOCH")
        if epoch:
            stamp = datetime.fromtimestamp(int(epoch), tz=timezone.utc)
            lines.append(f"# timestamp: {stamp.isoformat()}")
        return lines


def _fstr(x) -> str:
    return repr(float(x))


def _open_report(path, manifest: RunManifest):
    fh = open(path, "w", encoding="utf-8", newline="")
    for line in manifest.comment_lines():
        fh.write(line + "\n")
    return fh


def write_projection_csv(path, manifest, model, tables) -> None:
    """Projection report: cell probabilities and expected head counts.

    `tables` is a list of (GroupProbabilityTable, ExpectedPopulationTable)
    pairs.  Each populated cell gets a '*' aggregate row followed by its
    characteristic tuple rows; never-populated cells are omitted.
    """
    space = model.space
    chars = model.characteristics
    with _open_report(path, manifest) as fh:
        w = csv.writer(fh)
        w.writerow(
            [
                "year",
                "category",
                "age_group",
                "seniority_group",
                "characteristic_tuple",
                "probability",
                "expected_count",
            ]
        )
        for probs, expect in tables:
            year = model.base_year + probs.year
            for c in range(space.n_categories):
                for ei, ai in space.cells():
                    mass = float(probs.p[c, ei, ai])
                    if mass == 0.0:
                        continue
                    base = [
                        year,
                        space.categories[c],
                        space.group_label("age", ei),
                        space.group_label("seniority", ai),
                    ]
                    w.writerow(
                        base + ["*", _fstr(mass), _fstr(expect.counts[c, ei, ai])]
                    )
                    dist = probs.v[(c, ei, ai)]
                    if set(dist.keys()) == {None}:
                        continue
                    for t in sorted(dist.keys()):
                        w.writerow(
                            base
                            + [
                                chars.label(t),
                                _fstr(dist[t]),
                                _fstr(expect.split[(c, ei, ai)][t]),
                            ]
                        )


def write_simulation_csv(path, manifest, model, result: SimulationResult) -> None:
    """Simulation report: summary statistics per cell and tuple."""
    space = model.space
    chars = model.characteristics
    with _open_report(path, manifest) as fh:
        w = csv.writer(fh)
        w.writerow(
            [
                "year",
                "category",
                "age_group",
                "seniority_group",
                "characteristic_tuple",
                "mean",
                "sd",
                "p05",
                "p50",
                "p95",
            ]
        )
        for year in sorted(result.years):
            sim = result.years[year]
            cells, agg = sim.aggregate_by_cell()
            agg_sorted = np.sort(agg, axis=0)
            agg_mean = agg.mean(axis=0)
            agg_sd = agg.std(axis=0, ddof=0)
            tuple_rows: dict = {}
            for j, (c, ei, ai, t) in enumerate(sim.labels):
                tuple_rows.setdefault((c, ei, ai), []).append((t, j))
            for idx, (c, ei, ai) in enumerate(cells):
                if agg_mean[idx] == 0.0 and agg_sd[idx] == 0.0:
                    continue
                base = [
                    year,
                    space.categories[c],
                    space.group_label("age", ei),
                    space.group_label("seniority", ai),
                ]
                w.writerow(
                    base
                    + [
                        "*",
                        _fstr(agg_mean[idx]),
                        _fstr(agg_sd[idx]),
                        str(int(nearest_rank(agg_sorted, 0.05)[idx])),
                        str(int(nearest_rank(agg_sorted, 0.50)[idx])),
                        str(int(nearest_rank(agg_sorted, 0.95)[idx])),
                    ]
                )
                entries = tuple_rows[(c, ei, ai)]
                if len(entries) == 1 and entries[0][0] is None:
                    continue
                for t, j in sorted(entries, key=lambda e: (e[0] is None, e[0])):
                    if sim.stats["mean"][j] == 0.0 and sim.stats["sd"][j] == 0.0:
                        continue
                    w.writerow(
                        base
                        + [
                            chars.label(t),
                            _fstr(sim.stats["mean"][j]),
                            _fstr(sim.stats["sd"][j]),
                            str(int(sim.stats["p05"][j])),
                            str(int(sim.stats["p50"][j])),
                            str(int(sim.stats["p95"][j])),
                        ]
                    )


def write_cost_csv(path, manifest, rows) -> None:
    """Cost report; currency columns are rounded to whole units here."""
    with _open_report(path, manifest) as fh:
        w = csv.writer(fh)
        w.writerow(
            [
                "year",
                "category",
                "age_group",
                "seniority_group",
                "expected_cost",
                "sim_mean_cost",
                "sim_p05",
                "sim_p95",
            ]
        )
        for year, cat, eg, ag, expected, mean, p05, p95 in rows:
            w.writerow(
                [year, cat, eg, ag]
                + [str(int(round(x))) for x in (expected, mean, p05, p95)]
            )


def write_backtest_csv(path, manifest, rows) -> None:
    """Backtest report: observed vs expected vs simulated, with errors."""
    with _open_report(path, manifest) as fh:
        w = csv.writer(fh)
        w.writerow(
            [
                "year",
                "category",
                "age_group",
                "seniority_group",
                "observed_population",
                "expected_population",
                "sim_mean_population",
                "observed_cost",
                "expected_cost",
                "sim_mean_cost",
                "rel_err_population",
                "rel_err_cost",
            ]
        )
        for row in rows:
            (year, cat, eg, ag, obs_p, exp_p, sim_p, obs_c, exp_c, sim_c) = row
            rel_p = "" if obs_p == 0 else "%.6g" % ((exp_p - obs_p) / obs_p)
            rel_c = "" if obs_c == 0 else "%.6g" % ((exp_c - obs_c) / obs_c)
            w.writerow(
                [
                    year,
                    cat,
                    eg,
                    ag,
                    "%.6g" % obs_p,
                    "%.6g" % exp_p,
                    "%.6g" % sim_p,
                    str(int(round(obs_c))),
                    str(int(round(exp_c))),
                    str(int(round(sim_c))),
                    rel_p,
                    rel_c,
                ]
            )
