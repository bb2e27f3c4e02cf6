"""Sequential binary public-goods game with sampling of predecessors.

Contributions are unit stakes internally (contribute = 1); the endowment only
scales token reporting.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Mapping, Sequence

CONTRIBUTE = 1
DEFECT = 0


class GameError(ValueError):
    """Raised for out-of-domain game arguments."""


class DataIntegrityError(ValueError):
    """Raised when elicited responses or dataset rows are inconsistent."""


class Treatment(str, Enum):
    T1 = "T1"  # sample of two, position unknown
    T2 = "T2"  # sample of one, position unknown
    T3 = "T3"  # sample of two, position known

    @property
    def sample_size(self) -> int:
        return 1 if self is Treatment.T2 else 2

    @property
    def position_known(self) -> bool:
        return self is Treatment.T3


def as_treatment(value) -> Treatment:
    try:
        return Treatment(str(value.value if isinstance(value, Treatment) else value).upper())
    except ValueError:
        raise GameError(f"unknown treatment {value!r}") from None


@dataclass(frozen=True)
class GameConfig:
    n: int = 4
    r: float = 3.0
    m: int = 2
    position_known: bool = False
    rounds: int = 10
    endowment: float = 10.0

    def __post_init__(self):
        if self.n < 2:
            raise GameError(f"group size must be >= 2, got {self.n}")
        # r = n is admitted as the closed end of the mixed region
        if not 1 < self.r <= self.n:
            raise GameError(f"need 1 < r <= n, got r={self.r}, n={self.n}")
        if not 1 <= self.m <= self.n - 1:
            raise GameError(f"sample window must be in [1, n-1], got {self.m}")
        if self.rounds < 1:
            raise GameError("rounds must be >= 1")
        if self.endowment <= 0:
            raise GameError("endowment must be positive")

    @classmethod
    def for_treatment(cls, treatment, **overrides) -> "GameConfig":
        t = as_treatment(treatment)
        base = cls(m=t.sample_size, position_known=t.position_known)
        return replace(base, **overrides) if overrides else base


@dataclass(frozen=True)
class Sample:
    observed: int
    contributed: int

    def __post_init__(self):
        if not 0 <= self.contributed <= self.observed:
            raise GameError(f"invalid sample {self}")


@dataclass(frozen=True, order=True)
class ConditionCell:
    treatment: Treatment
    position: int
    condition: int

    @property
    def label(self) -> str:
        return f"c{self.condition}"


@dataclass(frozen=True)
class RealizedRound:
    actions: tuple[int, ...]
    group_contribution: float
    payoffs: tuple[float, ...]
    cells: tuple[ConditionCell, ...]


def _check_others(g_others: int, cfg: GameConfig) -> None:
    if not 0 <= g_others <= cfg.n - 1:
        raise GameError(f"g_others must be in [0, {cfg.n - 1}], got {g_others}")


def payoff_contribute(g_others: int, cfg: GameConfig) -> float:
    _check_others(g_others, cfg)
    return cfg.r / cfg.n * (g_others + 1) - 1


def payoff_defect(g_others: int, cfg: GameConfig) -> float:
    _check_others(g_others, cfg)
    return cfg.r / cfg.n * g_others


def token_payoffs(actions: Sequence[int], cfg: GameConfig) -> tuple[float, ...]:
    """Per-position token earnings for one round of realized play."""
    if len(actions) != cfg.n:
        raise GameError(f"expected {cfg.n} actions, got {len(actions)}")
    if any(a not in (0, 1) for a in actions):
        raise GameError("actions must be binary")
    pool = cfg.endowment * sum(actions)
    share = cfg.r / cfg.n * pool
    return tuple(cfg.endowment * (1 - a) + share for a in actions)


def sample_for(position: int, history: Sequence[int], cfg: GameConfig) -> Sample:
    if not 1 <= position <= cfg.n:
        raise GameError(f"position {position} outside 1..{cfg.n}")
    if len(history) != position - 1:
        raise GameError(
            f"history for position {position} must have length {position - 1}, got {len(history)}"
        )
    size = min(cfg.m, position - 1)
    window = history[len(history) - size:] if size else ()
    return Sample(size, int(sum(window)))


def enumerate_cells(treatment, position: int, n: int = 4) -> tuple[ConditionCell, ...]:
    """Information sets a subject at ``position`` answers under the strategy method."""
    t = as_treatment(treatment)
    if not 1 <= position <= n:
        raise GameError(f"position {position} outside 1..{n}")
    if t.sample_size > n - 1:
        raise GameError(f"treatment {t.value} needs n > {t.sample_size}")
    size = min(t.sample_size, position - 1)
    return tuple(ConditionCell(t, position, k) for k in range(size + 1))


def cells_per_group(treatment, n: int = 4) -> int:
    return sum(len(enumerate_cells(treatment, p, n)) for p in range(1, n + 1))


def is_reachable(cell: ConditionCell, n: int = 4) -> bool:
    if not 1 <= cell.position <= n:
        return False
    return 0 <= cell.condition <= min(cell.treatment.sample_size, cell.position - 1)


def resolve_round(
    responses: Mapping[object, Mapping[ConditionCell, int]],
    ordering: Sequence[object],
    cfg: GameConfig,
    treatment=None,
) -> RealizedRound:
    """Walk the sequence and look up each player's stated choice for the realized sample.

    ``ordering[t-1]`` is the subject at position t. ``treatment`` defaults to the
    one implied by ``cfg``.
    """
    if len(ordering) != cfg.n:
        raise GameError(f"ordering must list {cfg.n} subjects")
    if treatment is None:
        if cfg.m == 1 and not cfg.position_known:
            treatment = Treatment.T2
        else:
            treatment = Treatment.T3 if cfg.position_known else Treatment.T1
    t = as_treatment(treatment)
    history: list[int] = []
    used = []
    for position, subject in enumerate(ordering, start=1):
        k = sample_for(position, history, cfg).contributed
        cell = ConditionCell(t, position, k)
        try:
            choice = responses[subject][cell]
        except KeyError:
            raise DataIntegrityError(f"subject {subject!r} has no response for {cell}") from None
        if choice not in (0, 1):
            raise DataIntegrityError(f"non-binary response {choice!r} for {cell}")
        history.append(int(choice))
        used.append(cell)
    payoffs = token_payoffs(history, cfg)
    return RealizedRound(tuple(history), cfg.endowment * sum(history), payoffs, tuple(used))
