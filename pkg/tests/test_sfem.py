import json
import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqpg.dataset import DatasetRow, SessionDataset, merge
from seqpg.game import Treatment
from seqpg.sfem import (
    InferenceWarning,
    OptimizationError,
    compile_dataset,
    compile_treatment,
    fit,
    fit_treatment,
    mixture_loglik,
    subject_likelihood,
    subject_log_likelihoods,
    total_log_likelihood,
    wald_interval,
    wald_p_value,
)
from seqpg.simulator import PopulationSpec, simulate_session

from oracles import grid_optimum, random_rows


def session(t="T1", freqs=(6, 9, 12, 5), beta=0.9, seed=0):
    return simulate_session(PopulationSpec.from_freqs(t, list(freqs), beta, seed))


class TestLikelihood:
    def test_altruist_ten_matches(self):
        tr = Treatment.T1
        rows = [DatasetRow(tr, "S", 1, "alt", k, 1, 1, 0, 1, 1) for k in range(1, 11)]
        assert subject_likelihood(rows, "alt", 0.9) == pytest.approx(0.9 ** 10, abs=1e-12)
        assert 0.9 ** 10 == pytest.approx(0.34868, abs=1e-5)

    def test_sufficient_statistics_match_direct_product(self):
        d = session("T2", seed=3)
        data = compile_treatment(d.rows, "T2")
        logp = subject_log_likelihoods(data, 0.8)
        subjects = d.subjects()
        for i, key in enumerate(data.subjects):
            for k, kind in enumerate(data.types):
                direct = math.log(subject_likelihood(subjects[key], kind, 0.8))
                assert logp[i, k] == pytest.approx(direct, abs=1e-12)

    def test_mixture_matches_direct_sum(self):
        d = session("T1", seed=4)
        data = compile_treatment(d.rows, "T1")
        pi = np.array([0.2, 0.3, 0.4, 0.1])
        direct = sum(
            math.log(sum(w * subject_likelihood(rows, k, 0.75) for w, k in zip(pi, data.types)))
            for rows in d.subjects().values()
        )
        assert mixture_loglik(data, 0.75, pi) == pytest.approx(direct, abs=1e-9)

    def test_row_order_irrelevant(self):
        d = session("T3", (7, 11, 14), seed=2)
        rng = np.random.default_rng(0)
        shuffled = replace(d, rows=tuple(d.rows[i] for i in rng.permutation(len(d.rows))))
        betas, pis = {"T3": 0.8}, {"T3": [0.3, 0.3, 0.4]}
        assert total_log_likelihood(shuffled, betas, pis) == pytest.approx(
            total_log_likelihood(d, betas, pis), abs=1e-12)

    def test_uninformative_limit(self):
        d = session("T1", seed=1)
        ll = total_log_likelihood(d, {"T1": 0.5 + 1e-9}, {"T1": [0.25] * 4})
        assert ll == pytest.approx(len(d) * math.log(0.5), abs=1e-5)

    def test_truth_beats_swapped_labels(self):
        wins = 0
        for seed in range(100):
            d = session("T1", (0, 0, 32, 0), seed=seed)
            truth = total_log_likelihood(d, {"T1": 0.9}, {"T1": {"coop": 1.0}})
            swapped = total_log_likelihood(d, {"T1": 0.9}, {"T1": {"gm": 1.0}})
            wins += truth > swapped
        assert wins == 100

    def test_zero_share_subject_gives_minus_inf(self):
        tr = Treatment.T1
        rows = [DatasetRow(tr, "S", 1, "alt", 1, 1, 1, 0, 1, 1)]
        data = compile_treatment(rows, tr)
        with pytest.warns(InferenceWarning):
            # only the free rider has weight and beta = 1 makes the choice impossible
            ll = mixture_loglik(data, 1.0, [0, 0, 0, 1])
        assert ll == -math.inf

    def test_dict_shares(self):
        d = session("T1", seed=1)
        a = total_log_likelihood(d, {"T1": 0.8}, {"T1": [0.1, 0.2, 0.3, 0.4]})
        b = total_log_likelihood(d, {Treatment.T1: 0.8},
                                 {Treatment.T1: {"gm": 0.1, "alt": 0.2, "coop": 0.3, "free": 0.4}})
        assert a == b


class TestFitAgainstGrid:
    @pytest.mark.parametrize("t,seed", [("T1", 0), ("T1", 1), ("T2", 2), ("T2", 3), ("T3", 4), ("T3", 5)])
    def test_not_worse_than_grid(self, t, seed):
        rows = random_rows(t, 4, 3, seed)
        est = fit_treatment(compile_treatment(rows, t), restarts=50, seed=0, inference=False)
        grid = grid_optimum(rows, t)
        assert est.loglik >= grid - 1e-9
        # the continuous optimum can only beat the grid by what one step in beta buys
        assert est.loglik - grid <= len(rows) * math.log(1 / 0.99) + 1e-9


@pytest.fixture(scope="module")
def estimate():
    d = merge([session("T1", seed=11), session("T2", seed=12), session("T3", (7, 11, 14), seed=13)])
    return d, fit(d, restarts=20, seed=0)


class TestFit:
    def test_parameter_count(self, estimate):
        _, est = estimate
        assert est.n_params == 11
        assert est.n_obs == 2000

    def test_loglik_recomputes(self, estimate):
        d, est = estimate
        betas = {t: e.beta for t, e in est.treatments.items()}
        pis = {t: [e.pi[k] for k in e.types] for t, e in est.treatments.items()}
        assert total_log_likelihood(d, betas, pis) == pytest.approx(est.loglik, abs=1e-8)

    def test_shares_on_simplex(self, estimate):
        _, est = estimate
        for e in est.treatments.values():
            assert sum(e.pi.values()) == pytest.approx(1.0, abs=1e-12)
            assert 0.5 < e.beta < 1

    def test_recovers_beta(self, estimate):
        _, est = estimate
        for e in est.treatments.values():
            assert e.beta == pytest.approx(0.9, abs=0.03)

    def test_deterministic(self):
        d = session(seed=21)
        a, b = fit(d, restarts=5, seed=3), fit(d, restarts=5, seed=3)
        assert a.to_dict() == b.to_dict()

    def test_serialisable(self, estimate):
        _, est = estimate
        doc = json.loads(json.dumps(est.to_dict()))
        assert doc["format"] == "seqpg-estimate/1"
        assert doc["treatments"]["T3"]["diagnostics"]["restarts"] == 20
        assert "Num. pars" in est.table()

    def test_pure_altruists_hit_boundary(self):
        d = session("T1", (0, 32, 0, 0), seed=5)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", InferenceWarning)
            e = fit(d, restarts=10)["T1"]
        assert e.pi["alt"] > 0.99
        assert e.boundary

    def test_empty_dataset(self):
        with pytest.raises(OptimizationError):
            fit(SessionDataset(()))

    def test_bad_restarts(self):
        with pytest.raises(ValueError):
            fit(session(), restarts=0)


class TestWald:
    def test_interval_arithmetic(self):
        lo, hi = wald_interval(0.5, 0.1)
        assert (round(lo, 3), round(hi, 3)) == (0.304, 0.696)

    def test_p_value(self):
        assert wald_p_value(0.196, 0.1) == pytest.approx(0.05, abs=1e-3)
        assert wald_p_value(0.9, 0.1, null=0.5) < 1e-4

    def test_intervals_centered(self):
        e = fit(session(seed=8), restarts=10)["T1"]
        for name, v in e.parameters().items():
            if e.se[name] is not None:
                assert (e.lower[name] + e.upper[name]) / 2 == pytest.approx(v)

    def test_standard_errors_shrink_with_sample(self):
        small, large = [], []
        for seed in range(20):
            small.append(fit(session(seed=seed), restarts=5, seed=seed)["T1"].se["beta"])
            big = session(freqs=(60, 90, 120, 50), seed=1000 + seed)
            large.append(fit(big, restarts=5, seed=seed)["T1"].se["beta"])
        ratio = np.median(small) / np.median(large)
        assert math.sqrt(10) * 0.75 < ratio < math.sqrt(10) * 1.33

    def test_se_matches_replication_spread(self):
        est, ses = [], []
        for seed in range(30):
            e = fit(session(beta=0.9, seed=seed), restarts=5, seed=seed)["T1"]
            est.append(e.beta)
            ses.append(e.se["beta"])
        assert np.std(est, ddof=1) == pytest.approx(np.median(ses), rel=0.4)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.55, 0.95), st.lists(st.floats(0.01, 1.0), min_size=4, max_size=4))
def test_loglik_is_nonpositive_and_finite(beta, w):
    d = _cached_session()
    pi = np.array(w) / sum(w)
    ll = mixture_loglik(compile_dataset(d)[Treatment.T1], beta, pi)
    assert math.isfinite(ll) and ll < 0


_CACHE = {}


def _cached_session():
    if "d" not in _CACHE:
        _CACHE["d"] = session(seed=99)
    return _CACHE["d"]
