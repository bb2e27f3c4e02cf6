"""Strategy frequency estimation: finite-mixture maximum likelihood with trembles.

Each elicited cell is one Bernoulli observation. A subject following type k
contributes in a cell with probability s*beta + (1-s)*(1-beta), where s is the
type's prescription there. Because prescriptions take only a handful of distinct
values (0, 1 and gamma), the subject-by-type likelihood reduces to counts of
contributions and defections per prescription level, which makes every
likelihood evaluation a couple of small matrix products.

Trembles and mixing weights are separate per treatment, so treatments are
fitted independently and their log-likelihoods add.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit, logsumexp, xlog1py, xlogy
from scipy.stats import norm

from .agents import TypeId, prescription, validate_beta
from .dataset import DatasetRow, SessionDataset
from .game import DataIntegrityError, Treatment, as_treatment, is_reachable

DEFAULT_RESTARTS = 50
BETA_INIT = (0.55, 0.95)
# unconstrained coordinates are boxed so estimates can sit numerically on a boundary
COORD_BOUND = 30.0
# tighter than scipy's defaults: the surface is flat near the beta = 1/2 edge
LBFGS_OPTIONS = {"ftol": 1e-14, "gtol": 1e-9, "maxiter": 5000}
Z95 = float(norm.ppf(0.975))


class OptimizationError(RuntimeError):
    pass


class InferenceWarning(UserWarning):
    pass


def candidate_types(treatment) -> tuple[TypeId, ...]:
    """Mixture components; the last one is reported as the residual share."""
    if as_treatment(treatment).position_known:
        # gm and free-rider coincide under position certainty
        return (TypeId.GM, TypeId.ALTRUIST, TypeId.COOPERATOR)
    return (TypeId.GM, TypeId.ALTRUIST, TypeId.COOPERATOR, TypeId.FREE_RIDER)


@dataclass(frozen=True)
class TreatmentData:
    """Sufficient statistics for one treatment.

    ``ones[i, k, s]`` / ``zeros[i, k, s]`` count subject i's contributions /
    defections in cells where type k prescribes ``levels[s]``.
    """

    treatment: Treatment
    subjects: tuple[tuple[str, str, int], ...]
    types: tuple[TypeId, ...]
    levels: np.ndarray
    ones: np.ndarray
    zeros: np.ndarray
    n_obs: int

    @property
    def n_subjects(self) -> int:
        return len(self.subjects)


def compile_treatment(rows: list[DatasetRow], treatment, n: int = 4, r: float = 3.0) -> TreatmentData:
    t = as_treatment(treatment)
    types = candidate_types(t)
    by_subject: dict[tuple, list[DatasetRow]] = {}
    for row in rows:
        if row.treatment is not t:
            continue
        if not is_reachable(row.cell, n):
            raise DataIntegrityError(f"unreachable cell in likelihood data: {row}")
        by_subject.setdefault(row.subject_key, []).append(row)
    subjects = tuple(sorted(by_subject))
    sigma_cache: dict = {}

    def sigma(kind, cell):
        key = (kind, cell)
        if key not in sigma_cache:
            sigma_cache[key] = prescription(kind, cell, n, r)
        return sigma_cache[key]

    levels = sorted({sigma(k, row.cell) for rs in by_subject.values() for row in rs for k in types})
    index = {v: i for i, v in enumerate(levels)}
    ones = np.zeros((len(subjects), len(types), len(levels)))
    zeros = np.zeros_like(ones)
    for i, key in enumerate(subjects):
        for row in by_subject[key]:
            target = ones if row.choice else zeros
            for k, kind in enumerate(types):
                target[i, k, index[sigma(kind, row.cell)]] += 1
    n_obs = sum(len(v) for v in by_subject.values())
    return TreatmentData(t, subjects, types, np.array(levels, dtype=float), ones, zeros, n_obs)


def compile_dataset(dataset: SessionDataset) -> dict[Treatment, TreatmentData]:
    return {t: compile_treatment(dataset.rows, t, dataset.n, dataset.r) for t in dataset.treatments}


def _type_loglik(data: TreatmentData, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """log P(subject data | type) and its derivative in beta, shape (subjects, types)."""
    s = data.levels
    p = s * beta + (1 - s) * (1 - beta)
    logp = xlogy(data.ones, p).sum(axis=2) + xlog1py(data.zeros, -p).sum(axis=2)
    dp = 2 * s - 1
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = np.where(data.ones > 0, data.ones * dp / p, 0.0)
        d0 = np.where(data.zeros > 0, data.zeros * dp / (1 - p), 0.0)
    return logp, (d1 - d0).sum(axis=2)


def subject_log_likelihoods(data: TreatmentData, beta: float) -> np.ndarray:
    return _type_loglik(data, beta)[0]


def subject_likelihood(rows: list[DatasetRow], type_id, beta: float, n: int = 4, r: float = 3.0,
                       allow_degenerate: bool = False) -> float:
    """Probability that one subject's elicited choices came from ``type_id``."""
    validate_beta(beta, allow_degenerate)
    total = 0.0
    for row in rows:
        if not is_reachable(row.cell, n):
            raise DataIntegrityError(f"unreachable cell in likelihood data: {row}")
        s = prescription(type_id, row.cell, n, r)
        p = s * beta + (1 - s) * (1 - beta)
        q = p if row.choice else 1 - p
        if q == 0.0:
            return 0.0
        total += math.log(q)
    return math.exp(total)


def mixture_loglik(data: TreatmentData, beta: float, pi) -> float:
    pi = np.asarray(pi, dtype=float)
    logp = subject_log_likelihoods(data, beta)
    with np.errstate(divide="ignore"):
        per_subject = logsumexp(logp + np.log(pi), axis=1)
    if np.any(~np.isfinite(per_subject)):
        bad = [data.subjects[i] for i in np.flatnonzero(~np.isfinite(per_subject))]
        warnings.warn(f"zero mixture likelihood for subjects {bad}", InferenceWarning, stacklevel=2)
        return -math.inf
    return math.fsum(per_subject)


def total_log_likelihood(dataset: SessionDataset | dict, betas: dict, pis: dict) -> float:
    """Sum over treatments of sum_i log sum_k pi_k P_i(k).

    ``pis[t]`` is either a sequence ordered like ``candidate_types(t)`` or a
    mapping from type to share.
    """
    compiled = dataset if isinstance(dataset, dict) else compile_dataset(dataset)
    total = []
    for t, data in sorted(compiled.items(), key=lambda kv: kv[0].value):
        pi = pis[t] if t in pis else pis[t.value]
        if isinstance(pi, dict):
            pi = [pi.get(k, pi.get(k.value, 0.0)) for k in data.types]
        beta = betas[t] if t in betas else betas[t.value]
        total.append(mixture_loglik(data, beta, pi))
    return -math.inf if any(v == -math.inf for v in total) else math.fsum(total)


# ---- optimisation in unconstrained coordinates ---------------------------

def _unpack(x: np.ndarray) -> tuple[float, np.ndarray]:
    beta = 0.5 + 0.5 * expit(x[0])
    v = np.append(x[1:], 0.0)
    pi = np.exp(v - logsumexp(v))
    return beta, pi


def _pack(beta: float, pi: np.ndarray) -> np.ndarray:
    u = logit((beta - 0.5) / 0.5)
    v = np.log(pi[:-1]) - np.log(pi[-1])
    return np.clip(np.concatenate([[u], v]), -COORD_BOUND, COORD_BOUND)


def _neg_loglik_unconstrained(x: np.ndarray, data: TreatmentData) -> tuple[float, np.ndarray]:
    beta, pi = _unpack(x)
    logp, dlogp = _type_loglik(data, beta)
    joint = logp + np.log(pi)
    per_subject = logsumexp(joint, axis=1)
    resp = np.exp(joint - per_subject[:, None])
    dbeta = np.sum(resp * dlogp)
    dv = (resp - pi).sum(axis=0)[:-1]
    e = expit(x[0])
    grad = np.concatenate([[dbeta * 0.5 * e * (1 - e)], dv])
    return -float(per_subject.sum()), -grad


def _raw_gradient(theta: np.ndarray, data: TreatmentData) -> np.ndarray:
    """Gradient of the log-likelihood in (beta, pi_1..pi_{K-1}), residual share last."""
    beta = theta[0]
    pi = np.append(theta[1:], 1 - theta[1:].sum())
    logp, dlogp = _type_loglik(data, beta)
    lik = np.exp(logp - logp.max(axis=1, keepdims=True))
    mix = lik @ pi
    dbeta = np.sum((lik * dlogp) @ pi / mix)
    dpi = ((lik[:, :-1] - lik[:, -1:]) / mix[:, None]).sum(axis=0)
    return np.concatenate([[dbeta], dpi])


@dataclass(frozen=True)
class RestartRecord:
    start_beta: float
    start_pi: tuple[float, ...]
    objective: float
    converged: bool
    message: str


@dataclass
class TreatmentEstimate:
    treatment: Treatment
    types: tuple[TypeId, ...]
    beta: float
    pi: dict[TypeId, float]
    loglik: float
    n_obs: int
    n_subjects: int
    restarts: list[RestartRecord] = field(default_factory=list, repr=False)
    se: dict[str, float | None] = field(default_factory=dict)
    p_value: dict[str, float | None] = field(default_factory=dict)
    lower: dict[str, float | None] = field(default_factory=dict)
    upper: dict[str, float | None] = field(default_factory=dict)
    boundary: bool = False
    inference_note: str = ""

    @property
    def n_params(self) -> int:
        return len(self.types)

    @property
    def n_converged(self) -> int:
        return int(sum(r.converged for r in self.restarts))

    def parameters(self) -> dict[str, float]:
        out = {"beta": self.beta}
        out.update({f"pi_{k.value}": v for k, v in self.pi.items()})
        return out

    def to_dict(self) -> dict:
        params = {}
        for name, value in self.parameters().items():
            params[name] = {
                "estimate": value,
                "se": self.se.get(name),
                "p_value": self.p_value.get(name),
                "lower": self.lower.get(name),
                "upper": self.upper.get(name),
            }
        return {
            "treatment": self.treatment.value,
            "parameters": params,
            "loglik": self.loglik,
            "n_obs": self.n_obs,
            "n_subjects": self.n_subjects,
            "n_params": self.n_params,
            "boundary": self.boundary,
            "inference_note": self.inference_note,
            "diagnostics": {
                "restarts": len(self.restarts),
                "converged": self.n_converged,
                "best_objective": -self.loglik,
                "objectives": [r.objective for r in self.restarts],
            },
        }


@dataclass
class SfemEstimate:
    treatments: dict[Treatment, TreatmentEstimate]
    seed: int
    restarts: int

    @property
    def loglik(self) -> float:
        return math.fsum(e.loglik for e in self.treatments.values())

    @property
    def n_obs(self) -> int:
        return sum(e.n_obs for e in self.treatments.values())

    @property
    def n_params(self) -> int:
        return sum(e.n_params for e in self.treatments.values())

    def __getitem__(self, treatment) -> TreatmentEstimate:
        return self.treatments[as_treatment(treatment)]

    def to_dict(self) -> dict:
        return {
            "format": "seqpg-estimate/1",
            "seed": self.seed,
            "restarts": self.restarts,
            "loglik": self.loglik,
            "n_params": self.n_params,
            "n_obs": self.n_obs,
            "treatments": {t.value: e.to_dict() for t, e in sorted(self.treatments.items(),
                                                                    key=lambda kv: kv[0].value)},
        }

    def table(self) -> str:
        lines = [f"{'Parameter':<14}{'Estimate':>10}{'s.e.':>9}{'p-value':>9}{'lower':>9}{'upper':>9}"]

        def fmt(v):
            return f"{v:9.3f}" if v is not None else f"{'-':>9}"

        for t, est in sorted(self.treatments.items(), key=lambda kv: kv[0].value):
            for name, value in est.parameters().items():
                label = f"{name}[{t.value}]"
                lines.append(f"{label:<14}{value:10.3f}{fmt(est.se.get(name))}{fmt(est.p_value.get(name))}"
                             f"{fmt(est.lower.get(name))}{fmt(est.upper.get(name))}")
        lines.append(f"{'Log Lik.':<14}{self.loglik:10.3f}")
        lines.append(f"{'Num. pars':<14}{self.n_params:10d}")
        lines.append(f"{'Num. Obs.':<14}{self.n_obs:10d}")
        return "\n".join(lines)


def fit_treatment(data: TreatmentData, restarts: int = DEFAULT_RESTARTS, seed: int = 0,
                  inference: bool = True) -> TreatmentEstimate:
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if data.n_subjects == 0:
        raise OptimizationError(f"no subjects in treatment {data.treatment.value}")
    K = len(data.types)
    bounds = [(-COORD_BOUND, COORD_BOUND)] * K
    key = ["T1", "T2", "T3"].index(data.treatment.value)
    records, best_x, best_obj = [], None, math.inf
    for j in range(restarts):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key, j)))
        beta0 = rng.uniform(*BETA_INIT)
        pi0 = rng.dirichlet(np.ones(K))
        res = minimize(_neg_loglik_unconstrained, _pack(beta0, pi0), args=(data,), jac=True,
                       method="L-BFGS-B", bounds=bounds, options=LBFGS_OPTIONS)
        ok = bool(res.success and np.isfinite(res.fun))
        records.append(RestartRecord(beta0, tuple(pi0), float(res.fun), ok, str(res.message)))
        if ok and res.fun < best_obj:
            best_obj, best_x = float(res.fun), res.x
    if best_x is None:
        raise OptimizationError(
            f"all {restarts} restarts failed for {data.treatment.value}: "
            + "; ".join(sorted({r.message for r in records}))
        )
    beta, pi = _unpack(best_x)
    est = TreatmentEstimate(
        data.treatment, data.types, float(beta), {k: float(v) for k, v in zip(data.types, pi)},
        mixture_loglik(data, beta, pi), data.n_obs, data.n_subjects, records,
    )
    if inference:
        wald_inference(est, data)
    return est


def fit(dataset: SessionDataset, restarts: int = DEFAULT_RESTARTS, seed: int = 0,
        inference: bool = True) -> SfemEstimate:
    """Best of ``restarts`` random starts per treatment; deterministic given ``seed``."""
    compiled = compile_dataset(dataset)
    if not compiled:
        raise OptimizationError("dataset has no rows")
    return SfemEstimate(
        {t: fit_treatment(d, restarts, seed, inference) for t, d in compiled.items()}, seed, restarts
    )


# ---- Wald inference --------------------------------------------------------

def wald_interval(estimate: float, se: float, z: float = Z95) -> tuple[float, float]:
    return estimate - z * se, estimate + z * se


def wald_p_value(estimate: float, se: float, null: float = 0.0) -> float:
    return float(2 * norm.sf(abs(estimate - null) / se))


def observed_information(data: TreatmentData, beta: float, pi: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Negative Hessian of the log-likelihood in raw (beta, pi without residual) coordinates.

    Central differences of the analytic gradient; the beta step shrinks near the
    edges of (1/2, 1).
    """
    theta = np.concatenate([[beta], pi[:-1]])
    h = np.full(theta.size, step)
    h[0] = min(step, (1 - beta) / 2, (beta - 0.5) / 2)
    H = np.empty((theta.size, theta.size))
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h[i]
        H[:, i] = (_raw_gradient(theta + e, data) - _raw_gradient(theta - e, data)) / (2 * h[i])
    H = (H + H.T) / 2
    return -H


def wald_inference(est: TreatmentEstimate, data: TreatmentData) -> TreatmentEstimate:
    """Fill standard errors, p-values and 95% bounds in place.

    beta is tested against 1/2 (pure noise), shares against 0. The residual
    share gets its variance by the delta method.
    """
    pi = np.array([est.pi[k] for k in est.types])
    names = ["beta"] + [f"pi_{k.value}" for k in est.types]
    edge = 1e-6
    est.boundary = bool(est.beta > 1 - edge or est.beta < 0.5 + edge or np.any(pi < edge))
    note = "boundary estimate; " if est.boundary else ""
    if est.beta > 1 - 1e-9:
        est.inference_note = note + "beta at its upper bound, information undefined"
        warnings.warn(est.inference_note, InferenceWarning, stacklevel=2)
        est.se = dict.fromkeys(names)
        return est
    info = observed_information(data, est.beta, pi)
    try:
        np.linalg.cholesky(info)
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        est.inference_note = note + "singular or indefinite information matrix"
        warnings.warn(est.inference_note, InferenceWarning, stacklevel=2)
        est.se = dict.fromkeys(names)
        return est
    ones = np.ones(len(est.types) - 1)
    var = list(np.diag(cov)) + [float(ones @ cov[1:, 1:] @ ones)]
    est.inference_note = note.rstrip("; ")
    values = est.parameters()
    for name, v in zip(names, var):
        se = math.sqrt(v) if v > 0 else None
        est.se[name] = se
        if se is None:
            est.p_value[name] = est.lower[name] = est.upper[name] = None
            continue
        null = 0.5 if name == "beta" else 0.0
        est.p_value[name] = wald_p_value(values[name], se, null)
        est.lower[name], est.upper[name] = wald_interval(values[name], se)
    return est
