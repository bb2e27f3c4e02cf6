"""CSV datasets, JSON run configs, and contribution reports."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping

from .agents import TYPE_ORDER
from .dataset import COLUMNS, DatasetRow, SessionDataset, check_integrity
from .game import GameConfig, GameError, as_treatment

log = logging.getLogger(__name__)

FORMAT_TAG = "seqpg-dataset/1"
OUTPUT_DIR_ENV = "SEQPG_OUTPUT_DIR"


class SchemaError(ValueError):
    pass


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, "."))


# ---- datasets ------------------------------------------------------------

def dumps_dataset(dataset: SessionDataset) -> str:
    buf = io.StringIO()
    buf.write(f"# {FORMAT_TAG}\n")
    for key in sorted(dataset.meta):
        buf.write(f"# {key}: {json.dumps(dataset.meta[key])}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in dataset.rows:
        writer.writerow([row.treatment.value, row.session_id, row.subject_id, row.true_type, row.round,
                         row.group_id, row.position, f"c{row.condition}", row.choice, row.realized])
    return buf.getvalue()


def export(dataset: SessionDataset, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_dataset(dataset))
    return path


def _parse_int(value: str, column: str, lineno: int, allowed=None) -> int:
    try:
        out = int(value)
    except ValueError:
        raise SchemaError(f"line {lineno}: column {column!r} expects an integer, got {value!r}") from None
    if allowed is not None and out not in allowed:
        raise SchemaError(f"line {lineno}: column {column!r} must be one of {sorted(allowed)}, got {out}")
    return out


def loads_dataset(text: str, adapter: Mapping[str, str] | None = None, validate: bool = True) -> SessionDataset:
    """Parse the CSV schema; ``adapter`` maps schema columns to a foreign file's column names."""
    meta: dict = {}
    lines = text.splitlines()
    body_start = 0
    for i, line in enumerate(lines):
        if not line.startswith("#"):
            body_start = i
            break
        content = line[1:].strip()
        if ":" in content:
            key, _, raw = content.partition(":")
            try:
                meta[key.strip()] = json.loads(raw)
            except json.JSONDecodeError:
                meta[key.strip()] = raw.strip()
    else:
        body_start = len(lines)
    reader = csv.reader(lines[body_start:])
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("file has no header row") from None
    names = {c: (adapter or {}).get(c, c) for c in COLUMNS}
    if adapter is None and tuple(header) != COLUMNS:
        raise SchemaError(f"line {body_start + 1}: header must be {','.join(COLUMNS)}")
    missing = [c for c, src in names.items() if src not in header and c != "true_type"]
    if missing:
        raise SchemaError(f"line {body_start + 1}: missing columns {missing}")
    idx = {c: header.index(src) for c, src in names.items() if src in header}

    rows = []
    for offset, rec in enumerate(reader, start=body_start + 2):
        if not rec:
            continue
        if len(rec) != len(header):
            raise SchemaError(f"line {offset}: expected {len(header)} fields, got {len(rec)}")
        get = {c: rec[i].strip() for c, i in idx.items()}
        try:
            treatment = as_treatment(get["treatment"])
        except GameError as exc:
            raise SchemaError(f"line {offset}: {exc}") from None
        cond = get["condition"]
        cond = cond[1:] if cond[:1] in ("c", "C") else cond
        rows.append(DatasetRow(
            treatment,
            get["session_id"],
            _parse_int(get["subject_id"], "subject_id", offset),
            get.get("true_type", ""),
            _parse_int(get["round"], "round", offset),
            _parse_int(get["group_id"], "group_id", offset),
            _parse_int(get["position"], "position", offset),
            _parse_int(cond, "condition", offset, {0, 1, 2}),
            _parse_int(get["choice"], "choice", offset, {0, 1}),
            _parse_int(get["realized"], "realized", offset, {0, 1}),
        ))
    dataset = SessionDataset(tuple(rows), meta)
    if validate:
        check_integrity(dataset)
    return dataset


def ingest(path: str | os.PathLike, adapter: Mapping[str, str] | None = None) -> SessionDataset:
    dataset = loads_dataset(Path(path).read_text(), adapter)
    log.info("ingested %d rows from %s: %s", len(dataset), path, dataset.counts())
    return dataset


# ---- run configuration ---------------------------------------------------

@dataclass
class GameSection:
    n: int = 4
    r: float = 3.0
    m: int = 2
    position_known: bool = False
    rounds: int = 10
    endowment: float = 10.0


@dataclass
class RunConfig:
    treatment: str = "T1"
    game: GameSection = field(default_factory=GameSection)
    population: dict[str, int] = field(default_factory=lambda: {"gm": 6, "alt": 9, "coop": 12, "free": 5})
    beta: float = 0.9
    seed: int = 0
    fit_seed: int = 0
    restarts: int = 50
    outputs: dict[str, str] = field(default_factory=dict)

    def game_config(self) -> GameConfig:
        return GameConfig(**asdict(self.game))

    def freqs(self) -> list[int]:
        return [self.population.get(k.value, 0) for k in TYPE_ORDER]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunConfig":
        allowed = {f.name for f in fields(cls)}
        unknown = set(d) - allowed
        if unknown:
            raise SchemaError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(d)
        if "game" in kw:
            game_keys = {f.name for f in fields(GameSection)}
            bad = set(kw["game"]) - game_keys
            if bad:
                raise SchemaError(f"unknown game keys: {sorted(bad)}")
            kw["game"] = GameSection(**kw["game"])
        if "population" in kw:
            bad = set(kw["population"]) - {k.value for k in TYPE_ORDER}
            if bad:
                raise SchemaError(f"unknown population types: {sorted(bad)}")
        cfg = cls(**kw)
        t = as_treatment(cfg.treatment)
        if cfg.game.m != t.sample_size or cfg.game.position_known != t.position_known:
            raise SchemaError(f"game section does not match treatment {t.value}")
        return cfg

    @classmethod
    def load(cls, path: str | os.PathLike) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def dump(self, path: str | os.PathLike) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path


# ---- contribution report -------------------------------------------------

@dataclass
class ContributionReport:
    rows: list[dict]
    condition_means: dict[str, dict[str, float]]
    mean_tokens: dict[str, float]


def report_contributions(dataset: SessionDataset) -> ContributionReport:
    """Per-round, per-condition average group contribution with a 95% band.

    A condition's group contribution is the share of contribute decisions in
    that condition scaled to a full group (n x endowment tokens).
    ``mean_tokens`` averages the per-subject contribution over conditions.
    """
    if not dataset.rows:
        raise ValueError("dataset is empty")
    n = dataset.n
    endowment = float(dataset.meta.get("endowment", 10.0))
    scale = n * endowment
    cells: dict[tuple, list[int]] = defaultdict(list)
    pooled: dict[tuple, list[int]] = defaultdict(list)
    for row in dataset.rows:
        cells[(row.treatment.value, row.round, row.condition)].append(row.choice)
        pooled[(row.treatment.value, row.condition)].append(row.choice)
    rows = []
    for (t, rnd, cond), choices in sorted(cells.items()):
        p = sum(choices) / len(choices)
        half = 1.959964 * math.sqrt(p * (1 - p) / len(choices))
        rows.append({
            "treatment": t, "round": rnd, "condition": f"c{cond}", "decisions": len(choices),
            "proportion": p, "group_contribution": scale * p,
            "lower": scale * max(p - half, 0.0), "upper": scale * min(p + half, 1.0),
        })
    condition_means: dict[str, dict[str, float]] = defaultdict(dict)
    for (t, cond), choices in sorted(pooled.items()):
        condition_means[t][f"c{cond}"] = sum(choices) / len(choices)
    mean_tokens = {t: endowment * sum(m.values()) / len(m) for t, m in condition_means.items()}
    return ContributionReport(rows, dict(condition_means), mean_tokens)


def contributions_csv(report: ContributionReport) -> str:
    buf = io.StringIO()
    cols = ["treatment", "round", "condition", "decisions", "proportion", "group_contribution", "lower", "upper"]
    writer = csv.DictWriter(buf, cols, lineterminator="\n")
    writer.writeheader()
    for row in report.rows:
        writer.writerow({k: (f"{v:.4f}" if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


COLORS = {"c0": "#d62728", "c1": "#1f77b4", "c2": "#2ca02c"}


def contributions_svg(report: ContributionReport, treatment: str, max_tokens: float = 40.0) -> str:
    rows = [r for r in report.rows if r.get("treatment") == treatment]
    width, height, pad = 480, 300, 40
    rounds = sorted({r["round"] for r in rows}) or [1]
    lo_r, hi_r = rounds[0], max(rounds[-1], rounds[0] + 1)

    def x(rnd):
        return pad + (rnd - lo_r) / (hi_r - lo_r) * (width - 2 * pad)

    def y(v):
        return height - pad - v / max_tokens * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{treatment}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
    ]
    for tick in range(0, int(max_tokens) + 1, 10):
        parts.append(f'<text x="{pad - 6}" y="{y(tick) + 4:.1f}" text-anchor="end" font-size="10">{tick}</text>')
    for rnd in rounds:
        parts.append(f'<text x="{x(rnd):.1f}" y="{height - pad + 14}" text-anchor="middle" font-size="10">{rnd}</text>')
    for cond in sorted({r["condition"] for r in rows}):
        series = sorted((r for r in rows if r["condition"] == cond), key=lambda r: r["round"])
        color = COLORS.get(cond, "gray")
        band = [f"{x(r['round']):.1f},{y(r['upper']):.1f}" for r in series]
        band += [f"{x(r['round']):.1f},{y(r['lower']):.1f}" for r in reversed(series)]
        parts.append(f'<polygon points="{" ".join(band)}" fill="{color}" fill-opacity="0.15" stroke="none"/>')
        line = " ".join(f"{x(r['round']):.1f},{y(r['group_contribution']):.1f}" for r in series)
        parts.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        if series:
            parts.append(f'<text x="{width - pad + 4}" y="{y(series[-1]["group_contribution"]) + 4:.1f}" '
                         f'font-size="10" fill="{color}">{cond}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_report(dataset: SessionDataset, prefix: str | os.PathLike) -> list[Path]:
    report = report_contributions(dataset)
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    csv_path = prefix.with_name(prefix.name + "_contributions.csv")
    csv_path.write_text(contributions_csv(report))
    written = [csv_path]
    scale = dataset.n * float(dataset.meta.get("endowment", 10.0))
    for t in report.condition_means:
        svg_path = prefix.with_name(f"{prefix.name}_{t}.svg")
        svg_path.write_text(contributions_svg(report, t, scale))
        written.append(svg_path)
    return written
