"""Bayes factors, posterior model probabilities, Gelfand-Ghosh scores and
the information-paradox probe."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .compat import DerivedPrior, Procedure, derive
from .core_model import Dataset, ModelId, enumerate_models
from .errors import ImproperPriorError
from .priors import (
    NigPrior,
    PriorMeanChoice,
    log_mvt_density,
    posterior_update,
    resolve_prior_mean,
)

DEFAULT_SCALES = tuple(10.0**k for k in range(7))
BOUNDED_SPAN = 0.1
DIVERGENCE_FROM = 1e3


def _eq11_quadratic(data: Dataset, model: ModelId, b, g: float) -> float:
    """g/(1+g) y'M_k y + (y - X_k b)'(y - X_k b)/(1+g)."""
    blk = data.design.block(model)
    y = data.y
    res = blk.residual(y)
    r = y - blk.X @ np.asarray(b, float) if model.size else y
    return g / (1.0 + g) * float(res @ res) + float(r @ r) / (1.0 + g)


def bayes_factor(prior_k: NigPrior, prior_s: NigPrior, model_k: ModelId, model_s: ModelId, data: Dataset) -> float:
    """log B_ks of model k against model s under g-priors.

    B_ks = C_ks {a_s + S_s}^{(d_s+n)/2} / {a_k + S_k}^{(d_k+n)/2}, where
    C_ks collects the gamma functions, a^{d/2} and (1+g)^{p/2} factors.
    With d = a = 0 on both sides the gamma ratio and a^{d/2} terms are 1.
    """
    if prior_k.proper != prior_s.proper:
        raise ImproperPriorError("cannot compare a proper with an improper prior")
    n = data.n
    Sk = _eq11_quadratic(data, model_k, prior_k.b, prior_k.g)
    Ss = _eq11_quadratic(data, model_s, prior_s.b, prior_s.g)
    log_c = 0.5 * model_s.size * math.log1p(prior_s.g) - 0.5 * model_k.size * math.log1p(prior_k.g)
    dk, ds, ak, as_ = prior_k.d, prior_s.d, prior_k.a, prior_s.a
    if prior_k.proper:
        log_c += (
            gammaln(0.5 * (dk + n)) + gammaln(0.5 * ds) - gammaln(0.5 * dk) - gammaln(0.5 * (ds + n))
            + 0.5 * dk * math.log(ak) - 0.5 * ds * math.log(as_)
        )
    else:
        if n <= max(model_k.size, model_s.size):
            raise ImproperPriorError("improper-prior Bayes factor needs n > p_k")
    return float(log_c + 0.5 * (ds + n) * math.log(as_ + Ss) - 0.5 * (dk + n) * math.log(ak + Sk))


def savage_ratio(full_prior: NigPrior, model: ModelId, data: Dataset) -> float:
    """log pi(beta_{\\k} = 0 | y) - log pi(beta_{\\k} = 0) under the full prior.

    Both marginals of beta_{\\k} are multivariate t: the prior one with d
    degrees of freedom and scale (a/d) g [(X'X)^{-1}]_{\\k\\k}, the posterior
    one with d_n and (a_n/d_n) [V_n]_{\\k\\k}.
    """
    if not full_prior.proper:
        raise ImproperPriorError("Savage ratio needs a proper prior")
    p = data.p
    excl = list(model.excluded(p))
    if not excl:
        return 0.0
    full = ModelId.full(p)
    gram_inv = data.design.block(full).gram_inv()
    zero = np.zeros(len(excl))
    sel = np.ix_(excl, excl)
    log_prior = log_mvt_density(
        zero, full_prior.b[excl], (full_prior.a / full_prior.d) * full_prior.g * gram_inv[sel], full_prior.d
    )
    post = posterior_update(full_prior, data, full)
    log_post = log_mvt_density(zero, post.b_n[excl], (post.a_n / post.d_n) * post.V_n[sel], post.d_n)
    return log_post - log_prior


@dataclass(frozen=True)
class BayesFactorMatrix:
    """log B_{k,ref} for every model; any B_{ks} follows by subtraction."""

    models: list
    log_bf_vs_ref: np.ndarray
    ref: ModelId

    def index(self, model: ModelId) -> int:
        return self.models.index(model)

    def log_bf(self, model_k: ModelId, model_s: ModelId) -> float:
        return float(self.log_bf_vs_ref[self.index(model_k)] - self.log_bf_vs_ref[self.index(model_s)])

    def matrix(self) -> np.ndarray:
        v = self.log_bf_vs_ref
        return v[:, None] - v[None, :]


def bayes_factor_matrix(priors: Dict[ModelId, NigPrior], data: Dataset, ref: Optional[ModelId] = None) -> BayesFactorMatrix:
    """Bayes factors of every model against ``ref`` (default: the full model)."""
    ref = ModelId.full(data.p) if ref is None else ref
    if ref not in priors:
        raise ValueError(f"reference model {ref} has no prior")
    models = list(priors)
    vals = np.array([bayes_factor(priors[m], priors[ref], m, ref, data) for m in models])
    return BayesFactorMatrix(models, vals, ref)


def posterior_model_probs(bfm: BayesFactorMatrix, prior_model_probs=None) -> np.ndarray:
    """Posterior probabilities from Bayes factors; uniform model prior by default."""
    logb = np.asarray(bfm.log_bf_vs_ref, float)
    if prior_model_probs is None:
        logw = logb
    else:
        pr = np.asarray(prior_model_probs, float)
        if pr.shape != logb.shape or np.any(pr < 0) or abs(pr.sum() - 1.0) > 1e-10:
            raise ValueError("prior model probabilities must be nonnegative, one per model, and sum to 1")
        with np.errstate(divide="ignore"):
            logw = logb + np.log(pr)
    return np.exp(logw - logsumexp(logw))


@dataclass(frozen=True)
class GGScore:
    """Gelfand-Ghosh criterion D = c/(c+1) G + P (smaller is better)."""

    G: float
    P: float
    D: float
    c: float


def gelfand_ghosh(prior, model: ModelId, data: Dataset, c: float = 1.0) -> GGScore:
    """Posterior predictive loss of the replicate y_rep under ``model``.

    mu_i is the predictive mean x_i'b_n; sigma_i^2 = a_n/(d_n-2) (1 + x_i'V_n x_i).
    """
    if not c > 0:
        raise ValueError("c must be positive")
    post = posterior_update(prior, data, model)
    scale = post.predictive_scale()
    Xk = data.design.cols(model)
    mu = Xk @ post.b_n if model.size else np.zeros(data.n)
    lev = np.einsum("ij,jk,ik->i", Xk, post.V_n, Xk) if model.size else np.zeros(data.n)
    G = float(np.sum((mu - data.y) ** 2))
    P = float(scale * np.sum(1.0 + lev))
    return GGScore(G, P, c / (c + 1.0) * G + P, c)


@dataclass(frozen=True)
class ModelComparison:
    """Every submodel's derived prior, Bayes factors and posterior probabilities."""

    procedure: Procedure
    models: list
    derived: Dict[ModelId, DerivedPrior]
    bfm: BayesFactorMatrix
    probs: np.ndarray

    def prob(self, model: ModelId) -> float:
        return float(self.probs[self.models.index(model)])

    def ranked(self) -> list:
        order = np.argsort(-self.probs, kind="stable")
        return [(self.models[i], float(self.probs[i])) for i in order]

    def top(self) -> ModelId:
        return self.ranked()[0][0]

    def median_model(self) -> ModelId:
        """Predictors whose posterior inclusion probability is at least 1/2."""
        p = max(m.included[-1] for m in self.models) + 1
        incl = np.zeros(p)
        for m, pr in zip(self.models, self.probs):
            incl[list(m.included)] += pr
        return ModelId(tuple(j for j in range(p) if j == 0 or incl[j] >= 0.5))


def compare_models(procedure, full_prior: NigPrior, data: Dataset,
                   models: Optional[Sequence[ModelId]] = None, prior_model_probs=None,
                   uc_rate: str = "exact") -> ModelComparison:
    """Derive each submodel prior from ``full_prior`` and compare them all."""
    if isinstance(procedure, str):
        procedure = Procedure.parse(procedure)
    models = list(models) if models is not None else enumerate_models(data.p)
    full = ModelId.full(data.p)
    if full not in models:
        models.append(full)
    derived = {m: derive(procedure, full_prior, m, data.design, uc_rate) for m in models}
    if procedure is Procedure.IMPROPER:
        derived[full] = DerivedPrior(NigPrior.improper(full_prior.b, full_prior.g), procedure, full)
    bfm = bayes_factor_matrix({m: dp.prior for m, dp in derived.items()}, data, full)
    return ModelComparison(procedure, models, derived, bfm, posterior_model_probs(bfm, prior_model_probs))


@dataclass(frozen=True)
class ParadoxTrajectory:
    scales: np.ndarray
    log_bf: np.ndarray
    a_k: np.ndarray
    classification: str


def classify_trajectory(scales, log_bf) -> str:
    """'bounded', 'diverging' or 'indeterminate'.

    Bounded: the last three values span less than 0.1, or the tail from
    s = 1e3 on never increases (so log B stays below its value at 1e3).
    Diverging: the tail is strictly increasing and still moving.
    """
    scales = np.asarray(scales, float)
    v = np.asarray(log_bf, float)
    span = float(np.ptp(v[-3:])) if v.size >= 3 else math.inf
    tail = v[scales >= DIVERGENCE_FROM]
    steps = np.diff(tail)
    if span < BOUNDED_SPAN or (tail.size >= 2 and np.all(steps <= 0)):
        return "bounded"
    if tail.size >= 2 and np.all(steps > 0):
        return "diverging"
    return "indeterminate"


def info_paradox_probe(procedure, mean_choice: PriorMeanChoice, base_data: Dataset, model: ModelId,
                       scales: Sequence[float] = DEFAULT_SCALES, g: Optional[float] = None,
                       d: float = 5.0, a: float = 1.0, fixed_noise: bool = False) -> ParadoxTrajectory:
    """log B_{k0} of ``model`` against the intercept-only model as the signal grows.

    At scale s the response is y(s) = s X_k bhat_k + e / s, where bhat_k and
    e are the OLS fit and residual of ``model`` on the base data, so the fit
    of model k becomes perfect while its coefficients blow up.  With
    ``fixed_noise`` the residual is kept at e instead.  Data-dependent prior
    means are re-resolved at each scale.  ``g`` defaults to n.
    """
    if isinstance(procedure, str):
        procedure = Procedure.parse(procedure)
    if procedure is Procedure.IMPROPER:
        raise ValueError("the probe compares proper priors")
    g = float(base_data.n) if g is None else float(g)
    null = ModelId.of(0)
    blk = base_data.design.block(model)
    signal = blk.project(base_data.y)
    noise = base_data.y - signal
    scales = np.asarray(scales, float)
    out, ak = [], []
    for s in scales:
        data = base_data.with_y(s * signal + (noise if fixed_noise else noise / s))
        b = resolve_prior_mean(mean_choice, data)
        full_prior = NigPrior(b, g, d, a)
        pk = derive(procedure, full_prior, model, data.design).prior
        p0 = derive(procedure, full_prior, null, data.design).prior
        out.append(bayes_factor(pk, p0, model, null, data))
        ak.append(pk.a)
    out = np.array(out)
    return ParadoxTrajectory(scales, out, np.array(ak), classify_trajectory(scales, out))
