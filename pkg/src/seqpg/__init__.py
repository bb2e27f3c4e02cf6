"""Simulation and type-mixture estimation for sequential public-goods games
played under position uncertainty."""

from .agents import TYPE_ORDER, TypeId, TypeSpec, choice_probability, draw_choice, prescription
from .equilibrium import (
    EquilibriumSummary,
    classify_regime,
    expected_defect_payoff_full_sample,
    pure_threshold,
    solve_gamma,
    unravel_position,
)
from .game import (
    ConditionCell,
    GameConfig,
    Sample,
    Treatment,
    enumerate_cells,
    payoff_contribute,
    payoff_defect,
    resolve_round,
    sample_for,
    token_payoffs,
)
from .sfem import SfemEstimate, fit, subject_likelihood, total_log_likelihood
from .simulator import PopulationSpec, simulate_session

__version__ = "0.1.0"
