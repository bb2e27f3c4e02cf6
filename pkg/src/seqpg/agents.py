"""Behavioural types and the tremble that blurs their prescriptions."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .equilibrium import solve_gamma
from .game import ConditionCell, GameError, Treatment, as_treatment, enumerate_cells, is_reachable


class TypeId(str, Enum):
    GM = "gm"
    ALTRUIST = "alt"
    COOPERATOR = "coop"
    FREE_RIDER = "free"


# Column order used for frequencies everywhere (CLI --freqs, tables).
TYPE_ORDER = (TypeId.GM, TypeId.ALTRUIST, TypeId.COOPERATOR, TypeId.FREE_RIDER)


def as_type(value) -> TypeId:
    if isinstance(value, TypeId):
        return value
    key = str(value).strip().lower().replace("_", "").replace("-", "")
    key = _ALIASES.get(key, key)
    try:
        return TypeId(key)
    except ValueError:
        raise GameError(f"unknown type {value!r}") from None


_ALIASES = {"freerider": "free", "altruist": "alt", "conditionalcooperator": "coop", "g&m": "gm"}


def validate_beta(beta: float, allow_degenerate: bool = False) -> float:
    """Production code requires 1/2 < beta < 1; tests may switch on beta = 1."""
    if allow_degenerate:
        if not 0.5 < beta <= 1.0:
            raise GameError(f"beta must be in (1/2, 1], got {beta}")
    elif not 0.5 < beta < 1.0:
        raise GameError(f"beta must be in (1/2, 1), got {beta}")
    return float(beta)


def _gm(cell: ConditionCell, gamma: float) -> float:
    t = cell.treatment
    if t.position_known:
        return 0.0
    if cell.position == 1:
        return 1.0
    window = min(t.sample_size, cell.position - 1)
    if cell.condition == window:
        return 1.0
    # only a lone observed defection with a window of one is forgiven
    if t.sample_size == 1:
        return gamma
    return 0.0


def prescription(type_id, cell: ConditionCell, n: int = 4, r: float = 3.0) -> float:
    """Probability that ``type_id`` contributes in ``cell``."""
    if not is_reachable(cell, n):
        raise GameError(f"unreachable cell {cell} for n={n}")
    kind = as_type(type_id)
    if kind is TypeId.ALTRUIST:
        return 1.0
    if kind is TypeId.FREE_RIDER:
        return 0.0
    if kind is TypeId.COOPERATOR:
        return 1.0 if cell.position == 1 or cell.condition >= 1 else 0.0
    gamma = solve_gamma(n, r) if cell.treatment is Treatment.T2 else 0.0
    return _gm(cell, gamma)


@dataclass(frozen=True)
class TypeSpec:
    type_id: TypeId
    treatment: Treatment
    prescription: Mapping[ConditionCell, float]

    @classmethod
    def build(cls, type_id, treatment, n: int = 4, r: float = 3.0) -> "TypeSpec":
        t = as_treatment(treatment)
        table = {
            cell: prescription(type_id, cell, n, r)
            for pos in range(1, n + 1)
            for cell in enumerate_cells(t, pos, n)
        }
        return cls(as_type(type_id), t, MappingProxyType(table))


def choice_probability(type_id, cell: ConditionCell, beta: float, n: int = 4, r: float = 3.0,
                       allow_degenerate: bool = False) -> float:
    """Contribution probability once the prescribed action is played with probability beta."""
    beta = validate_beta(beta, allow_degenerate)
    sigma = prescription(type_id, cell, n, r)
    return sigma * beta + (1 - sigma) * (1 - beta)


def draw_choice(type_id, cell: ConditionCell, beta: float, rng: np.random.Generator,
                n: int = 4, r: float = 3.0, allow_degenerate: bool = False) -> int:
    p = choice_probability(type_id, cell, beta, n, r, allow_degenerate)
    return int(rng.random() < p)
