"""Parameter-recovery study: simulate a session, re-estimate, aggregate.

Replication j of grid cell c draws its session seed and its optimizer seed from
``SeedSequence(master, spawn_key=(c, j))``, so results for j never depend on how
many replications were requested.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .agents import TYPE_ORDER, TypeId
from .game import GameConfig, Treatment, as_treatment
from .sfem import DEFAULT_RESTARTS, OptimizationError, compile_treatment, fit_treatment
from .simulator import PopulationSpec, simulate_session

log = logging.getLogger(__name__)

NOISE_LEVELS = {"high": 0.60, "medium": 0.75, "low": 0.90}
DEFAULT_FREQS = {
    Treatment.T1: (6, 9, 12, 5),
    Treatment.T2: (6, 9, 12, 5),
    Treatment.T3: (7, 11, 14),
}
PARAM_COLUMNS = ("beta",) + tuple(f"pi_{k.value}" for k in TYPE_ORDER)


@dataclass(frozen=True)
class GridCell:
    treatment: Treatment
    beta: float
    freqs: tuple[int, ...]

    @property
    def truth(self) -> dict[str, float]:
        total = sum(self.freqs)
        out = {"beta": self.beta}
        for k, c in zip(TYPE_ORDER, self.freqs):
            out[f"pi_{k.value}"] = c / total
        return out

    @property
    def label(self) -> str:
        return f"{self.treatment.value}_beta{self.beta:.2f}"

    def to_dict(self) -> dict:
        return {"treatment": self.treatment.value, "beta": self.beta, "freqs": list(self.freqs)}


def default_grid() -> list[GridCell]:
    return [GridCell(t, b, DEFAULT_FREQS[t]) for b in NOISE_LEVELS.values() for t in Treatment]


@dataclass
class McConfig:
    grid: list[GridCell] = field(default_factory=default_grid)
    replications: int = 100
    seed: int = 2024
    restarts: int = DEFAULT_RESTARTS
    workers: int = 1
    cache_dir: str | None = None

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "McConfig":
        known = {"grid", "replications", "seed", "restarts", "workers", "cache_dir"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown McConfig keys: {sorted(unknown)}")
        kw = dict(d)
        if "grid" in kw:
            kw["grid"] = [GridCell(as_treatment(g["treatment"]), float(g["beta"]), tuple(g["freqs"]))
                          for g in kw["grid"]]
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "grid": [g.to_dict() for g in self.grid],
            "replications": self.replications,
            "seed": self.seed,
            "restarts": self.restarts,
            "workers": self.workers,
            "cache_dir": self.cache_dir,
        }


@dataclass
class CellResult:
    cell: GridCell
    estimates: list[dict[str, float]]
    failures: list[int]

    def _column(self, name: str) -> np.ndarray:
        return np.array([e[name] for e in self.estimates if name in e])

    def mean(self) -> dict[str, float]:
        return {k: float(self._column(k).mean()) for k in self.cell.truth if self._column(k).size}

    def sd(self) -> dict[str, float]:
        """Across-replication s.d. with the N-1 divisor (0 for a single replication)."""
        out = {}
        for k in self.cell.truth:
            col = self._column(k)
            if col.size:
                out[k] = float(col.std(ddof=1)) if col.size > 1 else 0.0
        return out

    def modal_top_type(self) -> str:
        names = [k for k in self.cell.truth if k.startswith("pi_")]
        tops = [max(names, key=lambda k: e[k]) for e in self.estimates]
        return max(set(tops), key=lambda k: (tops.count(k), k))

    def to_dict(self) -> dict:
        return {"cell": self.cell.to_dict(), "estimates": self.estimates, "failures": self.failures}


@dataclass
class McReport:
    config: McConfig
    cells: list[CellResult]

    @property
    def n_failures(self) -> int:
        return sum(len(c.failures) for c in self.cells)

    def find(self, treatment, beta: float) -> CellResult:
        t = as_treatment(treatment)
        for c in self.cells:
            if c.cell.treatment is t and math.isclose(c.cell.beta, beta):
                return c
        raise KeyError((t.value, beta))

    def summary(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "failures": self.n_failures,
            "cells": [
                {"cell": c.cell.to_dict(), "true": c.cell.truth, "mean": c.mean(), "sd": c.sd(),
                 "replications": len(c.estimates), "failed": c.failures}
                for c in self.cells
            ],
        }


def replication_seeds(master: int, cell_index: int, rep: int) -> tuple[int, int]:
    ss = np.random.SeedSequence(master, spawn_key=(cell_index, rep))
    sim, opt = ss.generate_state(2, dtype=np.uint32)
    return int(sim), int(opt)


def run_replication(cell: GridCell, master: int, cell_index: int, rep: int, restarts: int) -> dict | None:
    sim_seed, opt_seed = replication_seeds(master, cell_index, rep)
    spec = PopulationSpec.from_freqs(cell.treatment, cell.freqs, cell.beta, seed=sim_seed)
    cfg = GameConfig.for_treatment(cell.treatment)
    data = simulate_session(spec, cfg, session_id=f"mc{rep}")
    try:
        est = fit_treatment(compile_treatment(data.rows, cell.treatment, cfg.n, cfg.r),
                            restarts=restarts, seed=opt_seed, inference=False)
    except OptimizationError as exc:
        log.warning("replication %d of %s failed: %s", rep, cell.label, exc)
        return None
    return est.parameters()


def _run_cell(args) -> CellResult:
    cell, master, index, reps, restarts = args
    estimates, failures = [], []
    for rep in range(reps):
        out = run_replication(cell, master, index, rep, restarts)
        if out is None:
            failures.append(rep)
        else:
            estimates.append(out)
    return CellResult(cell, estimates, failures)


def _cache_path(cfg: McConfig, index: int, cell: GridCell) -> Path | None:
    if not cfg.cache_dir:
        return None
    tag = f"{index:02d}_{cell.label}_s{cfg.seed}_n{cfg.replications}_r{cfg.restarts}.json"
    return Path(cfg.cache_dir) / tag


def run_mc(cfg: McConfig) -> McReport:
    """Run every grid cell; cells already present in ``cache_dir`` are reused."""
    results: dict[int, CellResult] = {}
    todo = []
    for i, cell in enumerate(cfg.grid):
        path = _cache_path(cfg, i, cell)
        if path is not None and path.exists():
            d = json.loads(path.read_text())
            results[i] = CellResult(cell, d["estimates"], d["failures"])
        else:
            todo.append((i, (cell, cfg.seed, i, cfg.replications, cfg.restarts)))
    if cfg.workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            done = list(pool.map(_run_cell, [a for _, a in todo]))
    else:
        done = [_run_cell(a) for _, a in todo]
    for (i, _), res in zip(todo, done):
        results[i] = res
        path = _cache_path(cfg, i, res.cell)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(res.to_dict()))
    return McReport(cfg, [results[i] for i in range(len(cfg.grid))])


def noise_label(beta: float) -> str:
    for name, value in NOISE_LEVELS.items():
        if math.isclose(beta, value):
            return name
    return f"beta{beta:.2f}"


def _table_rows(cells: Sequence[CellResult]) -> list[list[str]]:
    rows = []
    for c in cells:
        stats = (("True", c.cell.truth), ("Mean Estimate", c.mean()), ("s.d.", c.sd()))
        for label, values in stats:
            rows.append([c.cell.treatment.value, label]
                        + [f"{values[k]:.3f}" if k in values else "-" for k in PARAM_COLUMNS])
    return rows


def format_tables(report: McReport, out_dir: str | os.PathLike) -> list[Path]:
    """One CSV and one text table per noise level, rows True / Mean Estimate / s.d."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = ["treatment", "row", *PARAM_COLUMNS]
    by_level: dict[str, list[CellResult]] = {}
    for c in report.cells:
        by_level.setdefault(noise_label(c.cell.beta), []).append(c)
    if not by_level:
        path = out / "mc_table.csv"
        path.write_text(",".join(header) + "\n")
        return [path]
    written = []
    for level, cells in by_level.items():
        rows = _table_rows(sorted(cells, key=lambda c: c.cell.treatment.value))
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        csv_path = out / f"mc_{level}.csv"
        csv_path.write_text(buf.getvalue())
        widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
        text = "\n".join("  ".join(str(x).ljust(w) for x, w in zip(line, widths))
                         for line in [header, *rows])
        txt_path = out / f"mc_{level}.txt"
        txt_path.write_text(text + "\n")
        written += [csv_path, txt_path]
    (out / "mc_summary.json").write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n")
    written.append(out / "mc_summary.json")
    return written
