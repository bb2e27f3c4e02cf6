"""Closed-form equilibrium objects of the sequential game.

The mixed-strategy forgiveness probability ``gamma`` solves

    2/g - (n-1)(1-(1-g)^n) / (g n - 1 + (1-g)^n) = n/r.

Both sides of the fraction vanish like g^2 near g = 0, so the left side is
evaluated as a ratio of polynomials with the cancelling low-order terms removed
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb

import numpy as np
from scipy.optimize import brentq

from .game import GameConfig, GameError

GAMMA_BRACKET = (1e-6, 1.0)


class RegionError(GameError):
    """r lies outside the region where the mixed equilibrium exists."""


class SolverError(RuntimeError):
    pass


def _check_window(n: int, m: int) -> None:
    if n < 2 or not 1 <= m <= n - 1:
        raise GameError(f"need 1 <= m <= n-1, got n={n}, m={m}")


def pure_threshold(n: int, m: int) -> Fraction:
    """Smallest r sustaining full contribution with a sample window of m."""
    _check_window(n, m)
    return 2 * (1 + Fraction(m - 1, n - m + 1))


def expected_defect_payoff_full_sample(n: int, m: int, r: float) -> float:
    """Payoff from defecting after a full-contribution sample of size m.

    The deviator sits at expected position (n+m+1)/2, so (n+m-1)/2 predecessors
    have contributed and no successor will.
    """
    _check_window(n, m)
    return r / n * (n + m - 1) / 2


def mixed_region(n: int) -> tuple[float, float]:
    """Open lower end, closed upper end (r = n handled by continuity)."""
    return 3 - 3 / (n + 1), float(n)


@lru_cache(maxsize=None)
def _gamma_polys(n: int) -> tuple[np.ndarray, np.ndarray]:
    # Writing q^n = sum_j C(n,j)(-g)^j:
    #   D = g n - 1 + q^n = g^2 * Q(g)
    #   N = 2 D - (n-1) g (1 - q^n) = g^3 * P(g)
    # so the left-hand side equals P(g)/Q(g). Coefficients are ascending.
    d = [0] * (n + 1)
    for j in range(2, n + 1):
        d[j] = comb(n, j) * (-1) ** j
    one_minus_qn = [0] * (n + 1)
    for j in range(1, n + 1):
        one_minus_qn[j] = -comb(n, j) * (-1) ** j
    num = [0] * (n + 2)
    for j in range(n + 1):
        num[j] += 2 * d[j]
        num[j + 1] -= (n - 1) * one_minus_qn[j]
    if num[0] or num[1] or num[2]:
        raise AssertionError("low-order terms should cancel")
    return np.array(num[3:], dtype=float), np.array(d[2:], dtype=float)


def gamma_lhs(gamma: float, n: int) -> float:
    """Left-hand side of the defining equation, stable down to gamma = 0."""
    p, q = _gamma_polys(n)
    return float(np.polynomial.polynomial.polyval(gamma, p) / np.polynomial.polynomial.polyval(gamma, q))


def gamma_residual(gamma: float, n: int, r: float) -> float:
    return gamma_lhs(gamma, n) - n / r


@lru_cache(maxsize=256)
def solve_gamma(n: int, r: float) -> float:
    """Forgiveness probability after an observed defection when m = 1."""
    lo_r, hi_r = mixed_region(n)
    if not lo_r < r <= hi_r:
        raise RegionError(f"r={r} outside the mixed region ({lo_r:.4g}, {hi_r:g}] for n={n}")
    if r == hi_r:
        return 1.0
    lo, hi = GAMMA_BRACKET
    f_lo, f_hi = gamma_residual(lo, n, r), gamma_residual(hi, n, r)
    if f_lo == 0.0:
        return lo
    if np.sign(f_lo) == np.sign(f_hi):
        raise SolverError(f"no sign change on [{lo}, {hi}] for n={n}, r={r}")
    root = brentq(gamma_residual, lo, hi, args=(n, r), xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return float(root)


def unravel_position(n: int, r: float) -> int | None:
    """First position that prefers defecting after a full-contribution history.

    Under position certainty the position-t player compares (r/n)(t-1) with r-1.
    Returns None when no position defects.
    """
    for t in range(2, n + 1):
        if r / n * (t - 1) > r - 1:
            return t
    return None


@dataclass(frozen=True)
class EquilibriumSummary:
    regime: str
    pure_threshold: float
    pure_exists: bool
    mixed_region: tuple[float, float] | None
    gamma: float | None
    unravel_position: int | None

    def describe(self) -> str:
        lines = [
            f"regime: {self.regime}",
            f"pure threshold: r >= {self.pure_threshold:.4f}",
            f"pure equilibrium exists: {self.pure_exists}",
        ]
        if self.mixed_region is not None:
            lo, hi = self.mixed_region
            lines.append(f"mixed region: ({lo:.4f}, {hi:g}]")
        if self.gamma is not None:
            lines.append(f"gamma: {self.gamma:.3f}")
        if self.unravel_position is not None:
            lines.append(f"unravel position: {self.unravel_position}")
        return "\n".join(lines)


def classify_regime(cfg: GameConfig) -> EquilibriumSummary:
    n, m, r = cfg.n, cfg.m, cfg.r
    threshold = float(pure_threshold(n, m))
    if cfg.position_known:
        unravel = unravel_position(n, r) if r < n else None
        pure = unravel is None
        return EquilibriumSummary("pure" if pure else "unravel", float(n), pure, None, None, unravel)
    if m >= 2:
        pure = r >= threshold
        return EquilibriumSummary("pure" if pure else "none", threshold, pure, None, None, None)
    region = mixed_region(n)
    if region[0] < r <= region[1]:
        return EquilibriumSummary("mixed", threshold, False, region, solve_gamma(n, r), None)
    pure = threshold <= r <= region[0]
    return EquilibriumSummary("pure" if pure else "none", threshold, pure, region, None, None)
