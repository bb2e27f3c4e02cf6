"""Panel of strategy-method decisions and its integrity checks."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .game import (
    ConditionCell,
    DataIntegrityError,
    GameConfig,
    Treatment,
    as_treatment,
    enumerate_cells,
    is_reachable,
    resolve_round,
)

COLUMNS = (
    "treatment",
    "session_id",
    "subject_id",
    "true_type",
    "round",
    "group_id",
    "position",
    "condition",
    "choice",
    "realized",
)


@dataclass(frozen=True, order=True)
class DatasetRow:
    treatment: Treatment
    session_id: str
    subject_id: int
    true_type: str
    round: int
    group_id: int
    position: int
    condition: int
    choice: int
    realized: int

    @property
    def cell(self) -> ConditionCell:
        return ConditionCell(self.treatment, self.position, self.condition)

    @property
    def subject_key(self) -> tuple[str, str, int]:
        return (self.treatment.value, self.session_id, self.subject_id)


@dataclass(frozen=True)
class GroupOutcome:
    treatment: Treatment
    session_id: str
    round: int
    group_id: int
    members: tuple[int, ...]
    actions: tuple[int, ...]
    group_contribution: float
    payoffs: tuple[float, ...]


@dataclass(frozen=True)
class SessionDataset:
    rows: tuple[DatasetRow, ...]
    meta: Mapping[str, object] = field(default_factory=dict)
    groups: tuple[GroupOutcome, ...] = field(default=(), compare=False)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def n(self) -> int:
        return int(self.meta.get("n", 4))

    @property
    def r(self) -> float:
        return float(self.meta.get("r", 3.0))

    @property
    def treatments(self) -> tuple[Treatment, ...]:
        return tuple(sorted({row.treatment for row in self.rows}, key=lambda t: t.value))

    def for_treatment(self, treatment) -> "SessionDataset":
        t = as_treatment(treatment)
        return SessionDataset(tuple(r for r in self.rows if r.treatment is t), dict(self.meta))

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = defaultdict(int)
        for row in self.rows:
            out[row.treatment.value] += 1
        return dict(out)

    def subjects(self) -> dict[tuple[str, str, int], list[DatasetRow]]:
        out: dict[tuple[str, str, int], list[DatasetRow]] = defaultdict(list)
        for row in self.rows:
            out[row.subject_key].append(row)
        return dict(out)


def merge(datasets: Iterable[SessionDataset]) -> SessionDataset:
    datasets = list(datasets)
    rows = tuple(row for d in datasets for row in d.rows)
    meta = dict(datasets[0].meta) if datasets else {}
    groups = tuple(g for d in datasets for g in d.groups)
    return SessionDataset(rows, meta, groups)


def check_integrity(dataset: SessionDataset) -> None:
    """Raise DataIntegrityError listing every offending row.

    Checks reachability, binary codes, complete cell sets per subject-round,
    group composition, one realized row per subject-round, and that replaying
    each group's responses reproduces the realized rows.
    """
    n = dataset.n
    problems: list[str] = []
    by_subject_round: dict[tuple, list[DatasetRow]] = defaultdict(list)
    for row in dataset.rows:
        if row.choice not in (0, 1) or row.realized not in (0, 1):
            problems.append(f"non-binary choice/realized: {row}")
        if not is_reachable(row.cell, n):
            problems.append(f"unreachable cell {row.cell.label} at position {row.position}: {row}")
        by_subject_round[row.subject_key + (row.round,)].append(row)
    if problems:
        raise DataIntegrityError("\n".join(problems))

    groups: dict[tuple, dict[int, list[DatasetRow]]] = defaultdict(dict)
    for key, rows in by_subject_round.items():
        positions = {r.position for r in rows}
        group_ids = {r.group_id for r in rows}
        if len(positions) != 1 or len(group_ids) != 1:
            problems.append(f"subject-round {key} spans several positions or groups")
            continue
        pos = positions.pop()
        expected = {c.condition for c in enumerate_cells(rows[0].treatment, pos, n)}
        seen = [r.condition for r in rows]
        if sorted(seen) != sorted(expected):
            problems.append(f"subject-round {key} answered {sorted(seen)}, expected {sorted(expected)}")
        if sum(r.realized for r in rows) != 1:
            problems.append(f"subject-round {key} has {sum(r.realized for r in rows)} realized rows")
        gkey = (key[0], key[1], key[3], group_ids.pop())
        if pos in groups[gkey]:
            problems.append(f"group {gkey} has two subjects at position {pos}")
        groups[gkey][pos] = rows
    if problems:
        raise DataIntegrityError("\n".join(problems))

    for gkey, members in groups.items():
        if sorted(members) != list(range(1, n + 1)):
            problems.append(f"group {gkey} positions {sorted(members)} are not a permutation of 1..{n}")
            continue
        treatment = as_treatment(gkey[0])
        cfg = GameConfig.for_treatment(treatment, n=n, r=dataset.r)
        responses = {pos: {r.cell: r.choice for r in rows} for pos, rows in members.items()}
        outcome = resolve_round(responses, list(range(1, n + 1)), cfg, treatment)
        realized = {r.cell for rows in members.values() for r in rows if r.realized}
        if set(outcome.cells) != realized:
            problems.append(f"group {gkey} realized rows do not match the replayed sequence")
    if problems:
        raise DataIntegrityError("\n".join(problems))
