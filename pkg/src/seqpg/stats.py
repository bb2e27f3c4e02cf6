"""Hypothesis tests for binary contribution data."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as st
from scipy.optimize import brentq


class StatsWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest class

    name: str
    statistic: float
    p_value: float
    interval: tuple[float, float] | None = None
    inputs: dict = field(default_factory=dict)

    def describe(self) -> str:
        out = f"{self.name}: statistic={self.statistic:.4f} p={self.p_value:.4g}"
        if self.interval is not None:
            out += f" interval=({self.interval[0]:.4f}, {self.interval[1]:.4f})"
        return out


def _check_count(**counts: int) -> None:
    for name, v in counts.items():
        if int(v) != v or v < 0:
            raise ValueError(f"{name} must be a non-negative integer, got {v}")


def binomial_test(successes: int, trials: int, p0: float) -> TestResult:
    """Exact two-sided test; outcomes no more likely than the observed one form the tail."""
    _check_count(successes=successes, trials=trials)
    if successes > trials:
        raise ValueError("successes cannot exceed trials")
    if not 0 < p0 < 1:
        raise ValueError("p0 must lie in (0, 1)")
    res = st.binomtest(int(successes), int(trials), p0, alternative="two-sided")
    return TestResult("binomial", successes / trials if trials else float("nan"), float(res.pvalue),
                      None, {"successes": successes, "trials": trials, "p0": p0})


def beta_hpd(successes: int, failures: int, prior_a: float = 1.0, prior_b: float = 1.0,
             mass: float = 0.95) -> tuple[float, float]:
    """Shortest interval holding ``mass`` of the Beta posterior.

    For a unimodal posterior the endpoints are where the density is equal; the
    left tail probability is solved so that holds. Monotone posteriors get a
    one-sided interval, U-shaped ones fall back to equal tails.
    """
    if not 0 < mass < 1:
        raise ValueError("mass must lie in (0, 1)")
    if prior_a <= 0 or prior_b <= 0:
        raise ValueError("prior shapes must be positive")
    _check_count(successes=successes, failures=failures)
    a, b = prior_a + successes, prior_b + failures
    dist = st.beta(a, b)
    if a < 1 and b < 1:
        warnings.warn("posterior is not unimodal; returning the equal-tail interval", StatsWarning,
                      stacklevel=2)
        return float(dist.ppf((1 - mass) / 2)), float(dist.ppf((1 + mass) / 2))
    if a == 1 and b == 1:
        return (1 - mass) / 2, (1 + mass) / 2
    if a <= 1:
        return 0.0, float(dist.ppf(mass))
    if b <= 1:
        return float(dist.ppf(1 - mass)), 1.0

    def gap(tail):
        return dist.logpdf(dist.ppf(tail)) - dist.logpdf(dist.ppf(tail + mass))

    tail = brentq(gap, 1e-15, 1 - mass - 1e-15, xtol=1e-15, rtol=1e-14)
    return float(dist.ppf(tail)), float(dist.ppf(tail + mass))


def beta_hpd_sampled(successes: int, failures: int, prior_a: float = 1.0, prior_b: float = 1.0,
                     mass: float = 0.95, draws: int = 3000, thin: int = 2,
                     seed: int = 0) -> tuple[float, float]:
    """Monte Carlo check of ``beta_hpd``: shortest window over thinned posterior draws."""
    rng = np.random.default_rng(seed)
    sample = np.sort(rng.beta(prior_a + successes, prior_b + failures, size=draws * thin)[::thin])
    k = int(math.ceil(mass * sample.size))
    widths = sample[k - 1:] - sample[: sample.size - k + 1]
    i = int(np.argmin(widths))
    return float(sample[i]), float(sample[i + k - 1])


def equal_tail(successes: int, failures: int, prior_a: float = 1.0, prior_b: float = 1.0,
               mass: float = 0.95) -> tuple[float, float]:
    dist = st.beta(prior_a + successes, prior_b + failures)
    return float(dist.ppf((1 - mass) / 2)), float(dist.ppf((1 + mass) / 2))


MCNEMAR_EXACT_BELOW = 25


def mcnemar_test(b: int, c: int) -> TestResult:
    """Paired test on the discordant counts.

    Exact binomial form below 25 discordant pairs, continuity-corrected
    chi-square otherwise.
    """
    _check_count(b=b, c=c)
    inputs = {"b": b, "c": c}
    if b + c == 0:
        warnings.warn("no discordant pairs", StatsWarning, stacklevel=2)
        return TestResult("mcnemar", 0.0, 1.0, None, inputs)
    if b + c < MCNEMAR_EXACT_BELOW:
        p = st.binomtest(int(min(b, c)), int(b + c), 0.5).pvalue
        return TestResult("mcnemar-exact", float(min(b, c)), float(min(p, 1.0)), None, inputs)
    # the correction never pushes |b - c| past zero
    stat = max(abs(b - c) - 1, 0) ** 2 / (b + c)
    return TestResult("mcnemar-chi2", stat, float(st.chi2.sf(stat, 1)), None, inputs)


def chisq_independence(table, correction: bool = False) -> TestResult:
    """Pearson chi-square on a 2x2 table, one degree of freedom."""
    obs = np.asarray(table, dtype=float)
    if obs.shape != (2, 2):
        raise ValueError("expected a 2x2 table")
    if np.any(obs < 0):
        raise ValueError("counts must be non-negative")
    if np.any(obs.sum(axis=0) == 0) or np.any(obs.sum(axis=1) == 0):
        raise ValueError("a zero marginal leaves the test undefined")
    stat, p, _, _ = st.chi2_contingency(obs, correction=correction)
    return TestResult("chi2", float(stat), float(p), None, {"table": obs.tolist(), "correction": correction})


def two_prop_ztest(s1: int, n1: int, s2: int, n2: int) -> TestResult:
    """Pooled-variance z test for p1 = p2, two-sided."""
    _check_count(s1=s1, n1=n1, s2=s2, n2=n2)
    if n1 < 1 or n2 < 1 or s1 > n1 or s2 > n2:
        raise ValueError("need 0 <= s <= n and n >= 1 in both samples")
    inputs = {"s1": s1, "n1": n1, "s2": s2, "n2": n2}
    pooled = (s1 + s2) / (n1 + n2)
    if pooled in (0.0, 1.0):
        warnings.warn("pooled proportion is degenerate", StatsWarning, stacklevel=2)
        return TestResult("two-prop-z", 0.0, 1.0, None, inputs)
    se = math.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2))
    z = (s1 / n1 - s2 / n2) / se
    return TestResult("two-prop-z", z, float(2 * st.norm.sf(abs(z))), None, inputs)
