"""Synthetic sessions mirroring the lab protocol.

Every round subjects are re-matched into groups of n with a random order of
play, answer every information set of their position with trembling-hand
noise, and the realized path is resolved from those answers.

Random streams are derived from the master seed by key, never by draw order:
``(0,)`` picks the payment round, ``(round, 0)`` the matching of that round and
``(round, 1, subject)`` the subject's answers in that round.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .agents import TYPE_ORDER, TypeId, TypeSpec, as_type, validate_beta
from .dataset import DatasetRow, GroupOutcome, SessionDataset
from .game import GameConfig, GameError, Treatment, as_treatment, enumerate_cells, resolve_round


class ConfigError(GameError):
    pass


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass(frozen=True)
class PopulationSpec:
    treatment: Treatment
    counts: Mapping[TypeId, int]
    beta: float
    seed: int = 0
    allow_degenerate_beta: bool = False  # beta = 1, for deterministic tests only

    def __post_init__(self):
        t = as_treatment(self.treatment)
        counts = {as_type(k): int(v) for k, v in dict(self.counts).items()}
        if any(v < 0 for v in counts.values()):
            raise ConfigError(f"negative type count in {counts}")
        if t.position_known and counts.get(TypeId.FREE_RIDER, 0):
            # the two types prescribe identical play under position certainty
            counts[TypeId.GM] = counts.get(TypeId.GM, 0) + counts.pop(TypeId.FREE_RIDER)
        ordered = {k: counts[k] for k in TYPE_ORDER if counts.get(k)}
        object.__setattr__(self, "treatment", t)
        object.__setattr__(self, "counts", ordered)
        try:
            validate_beta(self.beta, self.allow_degenerate_beta)
        except GameError as exc:
            raise ConfigError(str(exc)) from None
        if self.total == 0:
            raise ConfigError("population is empty")

    @classmethod
    def from_freqs(cls, treatment, freqs: Sequence[int], beta: float, seed: int = 0,
                   **kw) -> "PopulationSpec":
        """``freqs`` follow the gm, alt, coop, free column order (free may be omitted)."""
        if not 1 <= len(freqs) <= len(TYPE_ORDER):
            raise ConfigError(f"expected up to {len(TYPE_ORDER)} frequencies, got {len(freqs)}")
        return cls(treatment, dict(zip(TYPE_ORDER, freqs)), beta, seed, **kw)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def subject_types(self) -> list[TypeId]:
        return [k for k, v in self.counts.items() for _ in range(v)]

    def to_dict(self) -> dict:
        return {
            "treatment": self.treatment.value,
            "counts": {k.value: v for k, v in self.counts.items()},
            "beta": self.beta,
            "seed": self.seed,
        }


def config_digest(spec: PopulationSpec, cfg: GameConfig) -> str:
    blob = json.dumps({"population": spec.to_dict(), "game": asdict(cfg)}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def rematch(subjects: Sequence[int], n: int, rng: np.random.Generator) -> list[list[int]]:
    """Shuffle and slice into groups; list order within a group is the order of play."""
    if len(subjects) % n:
        raise ConfigError(f"{len(subjects)} subjects cannot form groups of {n}")
    order = rng.permutation(len(subjects))
    shuffled = [subjects[i] for i in order]
    return [shuffled[i:i + n] for i in range(0, len(shuffled), n)]


def select_payment_round(rounds: int, rng: np.random.Generator) -> int:
    if rounds < 1:
        raise ConfigError("rounds must be >= 1")
    return int(rng.integers(1, rounds + 1))


def simulate_session(spec: PopulationSpec, cfg: GameConfig | None = None,
                     session_id: str = "S1") -> SessionDataset:
    t = spec.treatment
    if cfg is None:
        cfg = GameConfig.for_treatment(t)
    if cfg.m != t.sample_size or cfg.position_known != t.position_known:
        raise ConfigError(f"game config {cfg} does not match treatment {t.value}")
    if spec.total % cfg.n:
        raise ConfigError(f"{spec.total} subjects cannot form groups of {cfg.n}")

    types = spec.subject_types()
    subjects = list(range(1, spec.total + 1))
    cells_by_pos = {p: enumerate_cells(t, p, cfg.n) for p in range(1, cfg.n + 1)}
    contribute_prob = {}
    for kind in set(types):
        table = TypeSpec.build(kind, t, cfg.n, cfg.r).prescription
        b = spec.beta
        contribute_prob[kind] = {cell: s * b + (1 - s) * (1 - b) for cell, s in table.items()}

    rows: list[DatasetRow] = []
    groups: list[GroupOutcome] = []
    for rnd in range(1, cfg.rounds + 1):
        for gid, members in enumerate(rematch(subjects, cfg.n, stream(spec.seed, rnd, 0)), start=1):
            responses = {}
            for pos, sid in enumerate(members, start=1):
                kind = types[sid - 1]
                cells = cells_by_pos[pos]
                u = stream(spec.seed, rnd, 1, sid).random(len(cells))
                probs = contribute_prob[kind]
                responses[sid] = {c: int(x < probs[c]) for c, x in zip(cells, u)}
            outcome = resolve_round(responses, members, cfg, t)
            used = set(outcome.cells)
            for pos, sid in enumerate(members, start=1):
                for cell, choice in responses[sid].items():
                    rows.append(DatasetRow(t, session_id, sid, types[sid - 1].value, rnd, gid,
                                           pos, cell.condition, choice, int(cell in used)))
            groups.append(GroupOutcome(t, session_id, rnd, gid, tuple(members), outcome.actions,
                                       outcome.group_contribution, outcome.payoffs))

    meta = {
        "seed": spec.seed,
        "config_digest": config_digest(spec, cfg),
        "n": cfg.n,
        "r": cfg.r,
        "endowment": cfg.endowment,
        "payment_round": select_payment_round(cfg.rounds, stream(spec.seed, 0)),
    }
    return SessionDataset(tuple(rows), meta, tuple(groups))
