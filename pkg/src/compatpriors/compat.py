"""Deriving compatible submodel priors from one full-model g-prior.

Given NIGa(b, g (X'X)^{-1}, d, a) on the full model, each procedure maps
it to a g-prior NIGa(b_k, g_k (X_k'X_k)^{-1}, d_k, a_k) on a submodel:

* Standard / Improper: project the mean, keep (g, d, a) (or drop to d=a=0).
* UC: condition on beta_{\\k} = 0.
* JC: UC times the ratio of Jeffreys priors, (sigma^2)^{(p-p_k)/2}.
* KL-conditional: push the prior through the KL projection, keep sigma^2.
* KL-conjugate: moment-match the pushed-forward (beta_k, sigma_k^2) prior.

Marginalization is only diagnosed: the marginal of a g-prior is not a
g-prior on the submodel.  The coherence checkers compare one-hop with
two-hop derivations and the two orders of integrating out sigma^2.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict

import numpy as np
from scipy import integrate

from .core_model import Dataset, Design, ModelId, as_design
from .errors import ImproperPriorError, NumericalError
from .priors import (
    NigPrior,
    log_marginal_likelihood,
    log_mvt_density,
    posterior_update,
    restrict_mean_standard,
)
from .rng import stream
from .special_fn import psi_minus_log_half, solve_psi_log_half, upper_incomplete_gamma

EXACT_BRANCH_TOL = 1e-12
UC_RATES = ("exact", "printed")
QUAD_EPSREL = 1e-10
SAMPLE_CHUNK = 1 << 16


class Procedure(enum.Enum):
    STANDARD = "S"
    IMPROPER = "I"
    UC = "UC"
    JC = "JC"
    KL_CONDITIONAL = "KLcond"
    KL_CONJUGATE = "KL"
    MARGINAL_DIAGNOSTIC = "M"

    @classmethod
    def parse(cls, text: str) -> "Procedure":
        key = text.strip().lower().replace("-", "").replace("_", "")
        for proc in cls:
            if key in (proc.value.lower(), proc.name.lower().replace("_", "")):
                return proc
        aliases = {"standard": cls.STANDARD, "improper": cls.IMPROPER, "klconjugate": cls.KL_CONJUGATE,
                   "klconditional": cls.KL_CONDITIONAL, "marginal": cls.MARGINAL_DIAGNOSTIC}
        if key in aliases:
            return aliases[key]
        raise ValueError(f"unknown procedure {text!r}; expected one of {[p.value for p in cls]}")

    @property
    def yields_prior(self) -> bool:
        return self is not Procedure.MARGINAL_DIAGNOSTIC

    def __str__(self):
        return self.value


PRIOR_PROCEDURES = tuple(p for p in Procedure if p.yields_prior)


@dataclass(frozen=True)
class DerivedPrior:
    """A submodel g-prior together with how it was obtained."""

    prior: NigPrior
    procedure: Procedure
    model: ModelId
    diagnostics: Dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class KlProjectionPoint:
    beta_perp: np.ndarray
    sigma2_perp: float


# ---------------------------------------------------------------- KL basics


def kl_divergence(beta, sigma2: float, beta_k, sigma2_k: float, model: ModelId, X) -> float:
    """KL( N(X beta, sigma2 I) || N(X_k beta_k, sigma2_k I) )."""
    if not (sigma2 > 0 and sigma2_k > 0):
        raise ValueError("variances must be positive")
    design = as_design(X)
    diff = design.X @ np.asarray(beta, float) - design.cols(model) @ np.asarray(beta_k, float)
    r = sigma2 / sigma2_k
    return float(diff @ diff) / (2.0 * sigma2_k) + 0.5 * design.n * (r - math.log(r) - 1.0)


def kl_project(beta, sigma2: float, model: ModelId, X) -> KlProjectionPoint:
    """Submodel point closest in KL to the full-model point (beta, sigma2)."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    design = as_design(X)
    mean = design.X @ np.asarray(beta, float)
    blk = design.block(model)
    w = blk.residual(mean)
    return KlProjectionPoint(blk.lstsq(mean), sigma2 + float(w @ w) / design.n)


# ------------------------------------------------------------- helpers


def _check_full_prior(full_prior: NigPrior, design: Design, need_proper: bool = True):
    if full_prior.b.size != design.p:
        raise ValueError(f"prior mean has length {full_prior.b.size}, design has p={design.p}")
    if need_proper and not full_prior.proper:
        raise ImproperPriorError("procedure requires a proper full-model prior")


def _conditional_mean(b, model: ModelId, design: Design) -> np.ndarray:
    """b_k + (X_k'X_k)^{-1} X_k'X_{\\k} b_{\\k}, the same as the KL-projected mean."""
    return restrict_mean_standard(b, model, design)


def _excluded_shift(b, model: ModelId, design: Design) -> float:
    """b_{\\k}' X_{\\k}' M_k X_{\\k} b_{\\k}."""
    excl = list(model.excluded(design.p))
    v = design.X[:, excl] @ np.asarray(b, float)[excl]
    w = design.block(model).residual(v)
    return float(w @ w)


def _excluded_is_zero(b, model: ModelId, p: int) -> bool:
    excl = list(model.excluded(p))
    return not excl or float(np.max(np.abs(np.asarray(b)[excl]))) < EXACT_BRANCH_TOL


def _unchanged(full_prior, model, procedure):
    return DerivedPrior(full_prior, procedure, model, {})


# ------------------------------------------------------------- procedures


def derive_standard(full_prior: NigPrior, model: ModelId, X, improper: bool = False) -> DerivedPrior:
    """Same (g, d, a); mean projected onto the submodel. ``improper`` gives d = a = 0."""
    design = as_design(X)
    _check_full_prior(full_prior, design, need_proper=False)
    bk = restrict_mean_standard(full_prior.b, model, design)
    proc = Procedure.IMPROPER if improper else Procedure.STANDARD
    if improper:
        return DerivedPrior(NigPrior.improper(bk, full_prior.g), proc, model)
    return DerivedPrior(NigPrior(bk, full_prior.g, full_prior.d, full_prior.a), proc, model)


def derive_uc(full_prior: NigPrior, model: ModelId, X, rate: str = "exact") -> DerivedPrior:
    """Condition the full prior on beta_{\\k} = 0.

    beta_{\\k} | sigma^2 has covariance g sigma^2 [(X'X)^{-1}]_{\\k\\k}, whose
    inverse is X_{\\k}'M_k X_{\\k} / (g sigma^2); conditioning therefore adds
    p - p_k to d and b_{\\k}'X_{\\k}'M_k X_{\\k} b_{\\k} / g to a.

    ``rate="printed"`` drops the 1/g in the rate update.  It is not the
    conditional distribution (unless g = 1 or b_{\\k} = 0) but it is the
    variant behind the published simulation table, so it is kept for
    reproducing those numbers.
    """
    if rate not in UC_RATES:
        raise ValueError(f"rate must be one of {UC_RATES}, got {rate!r}")
    design = as_design(X)
    _check_full_prior(full_prior, design)
    if model.is_full(design.p):
        return _unchanged(full_prior, model, Procedure.UC)
    q = design.p - model.size
    shift = _excluded_shift(full_prior.b, model, design)
    if rate == "exact":
        shift /= full_prior.g
    prior = NigPrior(
        _conditional_mean(full_prior.b, model, design),
        full_prior.g,
        full_prior.d + q,
        full_prior.a + shift,
    )
    return DerivedPrior(prior, Procedure.UC, model, {"rate_shift": shift})


def derive_jc(full_prior: NigPrior, model: ModelId, X, rate: str = "exact") -> DerivedPrior:
    """UC prior reweighted by j_k / j = (sigma^2)^{(p-p_k)/2}.

    The Fisher information of N(X beta, sigma^2 I) in (beta, sigma^2) is
    blockdiag(X'X / sigma^2, n / (2 sigma^4)), so the Jeffreys densities are
    proportional to sigma^{-(p+2)} and sigma^{-(p_k+2)}.  The extra factor
    cancels the (p-p_k)/2 added to the shape by conditioning: d_k = d.
    """
    uc = derive_uc(full_prior, model, X, rate)
    if model.is_full(as_design(X).p):
        return _unchanged(full_prior, model, Procedure.JC)
    d_jc = uc.prior.d - (as_design(X).p - model.size)
    if not d_jc > 0:
        raise ImproperPriorError(f"JC prior is improper (d_k = {d_jc})")
    prior = NigPrior(uc.prior.b, uc.prior.g, d_jc, uc.prior.a)
    return DerivedPrior(prior, Procedure.JC, model, dict(uc.diagnostics))


def derive_kl_conditional(full_prior: NigPrior, model: ModelId, X) -> DerivedPrior:
    """KL projection of beta given sigma^2, with sigma_k^2 distributed as sigma^2."""
    design = as_design(X)
    _check_full_prior(full_prior, design)
    if model.is_full(design.p):
        return _unchanged(full_prior, model, Procedure.KL_CONDITIONAL)
    bk = _conditional_mean(full_prior.b, model, design)
    return DerivedPrior(NigPrior(bk, full_prior.g, full_prior.d, full_prior.a), Procedure.KL_CONDITIONAL, model)


@dataclass(frozen=True)
class LemmaA1:
    """Moments of R_k = (1 + Q_k(beta)/sigma^2)^{-1} under the full prior."""

    E_R_inv: float
    Var_R_inv: float
    E_R: float
    E_log_R: float
    exact: bool

    def __iter__(self):
        return iter((self.E_R_inv, self.Var_R_inv, self.E_R, self.E_log_R))


@lru_cache(maxsize=1024)
def _mean_R_central(q: int, c: float) -> float:
    """E[1/(1 + c W)], W ~ chi^2_q, through the incomplete gamma function."""
    z = 1.0 / (2.0 * c)
    return (2.0 * c) ** (-0.5 * q) * upper_incomplete_gamma(1.0 - 0.5 * q, z, scaled=True)


@lru_cache(maxsize=1024)
def _mean_log1p_central(q: int, c: float) -> float:
    """E[log(1 + c W)], W ~ chi^2_q, by quadrature.

    With W = u^2 the chi-squared density becomes proportional to
    u^{q-1} exp(-u^2/2), which is smooth at the origin for every q >= 1.
    """
    lognorm = math.log(2.0) - 0.5 * q * math.log(2.0) - math.lgamma(0.5 * q)

    def f(u):
        if u == 0.0:
            return 0.0
        return math.exp(lognorm + (q - 1) * math.log(u) - 0.5 * u * u) * math.log1p(c * u * u)

    val, err = integrate.quad(f, 0.0, np.inf, epsabs=0.0, epsrel=QUAD_EPSREL, limit=400)
    if not err <= 1e-8 * max(abs(val), 1e-300):
        raise NumericalError(f"E[log(1+cW)] quadrature error {err:.3g} too large")
    return val


def lemma_a1_expectations(full_prior: NigPrior, model: ModelId, X) -> LemmaA1:
    """E[R^{-1}], Var[R^{-1}], E[R] and E[log R] for the full prior.

    Given sigma^2, Q_k(beta)/sigma^2 is (g/n) times a noncentral chi^2 with
    p - p_k degrees of freedom.  E[R] is exact when b_{\\k} = 0 and the
    delta-method value 1/E[R^{-1}] otherwise; E[log R] is only defined
    (and only needed) in the exact case and is NaN otherwise.
    """
    design = as_design(X)
    _check_full_prior(full_prior, design)
    n, q = design.n, design.p - model.size
    g, d, a = full_prior.g, full_prior.d, full_prior.a
    if q == 0:
        return LemmaA1(1.0, 0.0, 1.0, 0.0, True)
    c = g / n
    exact = _excluded_is_zero(full_prior.b, model, design.p)
    Qb = 0.0 if exact else _excluded_shift(full_prior.b, model, design) / n
    e_inv = 1.0 + c * q + Qb * d / a
    var_inv = (2.0 * d / a) * Qb * (Qb / a + 2.0 * c) + 2.0 * c * c * q
    if exact:
        e_r = _mean_R_central(q, c)
        e_log = -_mean_log1p_central(q, c)
    else:
        e_r, e_log = 1.0 / e_inv, math.nan
    return LemmaA1(e_inv, var_inv, e_r, e_log, exact)


def derive_kl_conjugate(full_prior: NigPrior, model: ModelId, X) -> DerivedPrior:
    """gNIGa prior matching the KL-projected prior on E(beta_k | sigma_k^2),
    E(sigma_k^{-2}) and E(log sigma_k^2).

    With b_{\\k} = 0 the matching is exact; otherwise it uses the delta
    approximation of E[R] and E[log R] built from E[R^{-1}] and Var[R^{-1}].
    """
    design = as_design(X)
    _check_full_prior(full_prior, design)
    if model.is_full(design.p):
        return _unchanged(full_prior, model, Procedure.KL_CONJUGATE)
    g, d, a = full_prior.g, full_prior.d, full_prior.a
    mom = lemma_a1_expectations(full_prior, model, design)
    if mom.E_R_inv <= 0 or mom.E_R <= 0 or not mom.E_R <= 1.0:
        raise NumericalError(f"invalid Lemma A1 moments {mom}")
    base = psi_minus_log_half(d)
    if mom.exact:
        rhs = base + mom.E_log_R - math.log(mom.E_R)
        sol = solve_psi_log_half(rhs, hint=(0.5 * d, d))
        g_kl = g * mom.E_R
        a_kl = sol.root * (a / d) / mom.E_R
    else:
        rhs = base - 0.5 * mom.Var_R_inv / mom.E_R_inv**2
        sol = solve_psi_log_half(rhs, hint=(0.5 * d, d))
        g_kl = g / mom.E_R_inv
        a_kl = sol.root * (a / d) * mom.E_R_inv
    bk = _conditional_mean(full_prior.b, model, design)
    diag = {
        "solver_residual": sol.residual,
        "solver_iterations": float(sol.iterations),
        "E_R_inv": mom.E_R_inv,
        "Var_R_inv": mom.Var_R_inv,
        "E_R": mom.E_R,
        "E_log_R": mom.E_log_R,
        "exact_branch": float(mom.exact),
    }
    return DerivedPrior(NigPrior(bk, g_kl, sol.root, a_kl), Procedure.KL_CONJUGATE, model, diag)


def derive(procedure, full_prior: NigPrior, model: ModelId, X, uc_rate: str = "exact") -> DerivedPrior:
    """Dispatch on a :class:`Procedure` (or its short name).

    ``uc_rate`` selects the UC/JC rate convention (see :func:`derive_uc`).
    """
    if isinstance(procedure, str):
        procedure = Procedure.parse(procedure)
    if procedure is Procedure.STANDARD:
        return derive_standard(full_prior, model, X)
    if procedure is Procedure.IMPROPER:
        return derive_standard(full_prior, model, X, improper=True)
    if procedure is Procedure.UC:
        return derive_uc(full_prior, model, X, uc_rate)
    if procedure is Procedure.JC:
        return derive_jc(full_prior, model, X, uc_rate)
    if procedure is Procedure.KL_CONDITIONAL:
        return derive_kl_conditional(full_prior, model, X)
    if procedure is Procedure.KL_CONJUGATE:
        return derive_kl_conjugate(full_prior, model, X)
    raise ValueError("marginalization does not produce a g-prior; use marginalization_diagnostic")


# ------------------------------------------------------------- sampling


def iter_prior_draws(full_prior: NigPrior, X, n_draws: int, seed: int, chunk: int = SAMPLE_CHUNK):
    """Yield (beta, sigma2) blocks of full-prior draws.

    Block j always comes from stream (seed, "nig-prior", j), so the draws
    do not depend on how the blocks are consumed.
    """
    design = as_design(X)
    _check_full_prior(full_prior, design)
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    R = design.block(ModelId.full(design.p)).R
    g, d, a, b = full_prior.g, full_prior.d, full_prior.a, full_prior.b
    for j, start in enumerate(range(0, n_draws, chunk)):
        m = min(chunk, n_draws - start)
        rng = stream(seed, "nig-prior", j)
        sigma2 = a / rng.chisquare(d, size=m)
        z = rng.standard_normal((m, design.p))
        # beta - b = sqrt(g sigma2) R^{-1} z has covariance g sigma2 (X'X)^{-1}
        dev = np.linalg.solve(R, z.T).T * np.sqrt(g * sigma2)[:, None]
        yield b + dev, sigma2


@dataclass(frozen=True)
class KlProjectionSample:
    beta_perp: np.ndarray
    sigma2_perp: np.ndarray
    sigma2: np.ndarray

    def __len__(self):
        return self.sigma2.size

    def __getitem__(self, i) -> KlProjectionPoint:
        return KlProjectionPoint(self.beta_perp[i], float(self.sigma2_perp[i]))


def sample_kl_prior(full_prior: NigPrior, model: ModelId, X, n_draws: int, seed: int) -> KlProjectionSample:
    """Exact draws of the KL-projected prior: sample the full prior, then project."""
    design = as_design(X)
    blk = design.block(model)
    bp, sp, s = [], [], []
    for beta, sigma2 in iter_prior_draws(full_prior, design, n_draws, seed):
        mean = beta @ design.X.T
        fitted = mean @ blk.Q
        resid = mean - fitted @ blk.Q.T
        bp.append(blk.lstsq(mean.T).T)
        sp.append(sigma2 + np.einsum("ij,ij->i", resid, resid) / design.n)
        s.append(sigma2)
    return KlProjectionSample(np.concatenate(bp), np.concatenate(sp), np.concatenate(s))


# ------------------------------------------------------------- diagnostics


@dataclass(frozen=True)
class MarginalizationReport:
    """Marginal of beta_k under the full prior versus the submodel g-prior shape."""

    marginal_cov: np.ndarray
    gprior_cov: np.ndarray
    discrepancy: float
    marginal_mean: np.ndarray
    recentered_mean: np.ndarray
    recentered_cov: np.ndarray
    recentering_shift: float


def marginalization_diagnostic(full_prior: NigPrior, model: ModelId, X) -> MarginalizationReport:
    """Why marginalizing leaves the g-prior family, and why it is not invariant.

    Covariances are per unit sigma^2.  The recentering replaces every
    excluded predictor x_j by x_j - mean(x_j), which changes the meaning of
    the intercept (and hence the marginal prior of the submodel's own
    coefficients) although the full model is the same.
    """
    design = as_design(X)
    _check_full_prior(full_prior, design)
    g, b = full_prior.g, full_prior.b
    inc = list(model.included)
    full_inv = design.block(ModelId.full(design.p)).gram_inv()
    marg = g * full_inv[np.ix_(inc, inc)]
    gcov = g * design.block(model).gram_inv()
    disc = float(np.max(np.abs(marg - gcov))) if inc else 0.0

    # X' = X T with T = I except T[0, j] = -xbar_j on excluded columns; beta' = T^{-1} beta.
    T = np.eye(design.p)
    for j in model.excluded(design.p):
        if j != 0:
            T[0, j] = -design.X[:, j].mean()
    Tinv = np.linalg.inv(T)
    b_new = Tinv @ b
    Xr = design.X @ T
    inv_new = np.linalg.inv(Xr.T @ Xr)
    rmean, rcov = b_new[inc], g * inv_new[np.ix_(inc, inc)]
    shift = 0.0
    if inc:
        shift = max(float(np.max(np.abs(rmean - b[inc]))), float(np.max(np.abs(rcov - marg))))
    return MarginalizationReport(marg, gcov, disc, b[inc].copy(), rmean, rcov, shift)


@dataclass(frozen=True)
class NestedCoherenceReport:
    direct: NigPrior
    two_hop: NigPrior
    discrepancy: Dict[str, float]

    @property
    def max_discrepancy(self) -> float:
        return max(self.discrepancy.values())


def check_nested_coherence(full_prior: NigPrior, model_mid: ModelId, model_small: ModelId, X,
                           procedure) -> NestedCoherenceReport:
    """Derive full -> small directly and through full -> mid -> small."""
    if isinstance(procedure, str):
        procedure = Procedure.parse(procedure)
    design = as_design(X)
    if not (model_small.issubset(model_mid) and model_small != model_mid):
        raise ValueError(f"{model_small} is not strictly nested in {model_mid}")
    if model_mid.included[-1] >= design.p:
        raise ValueError("middle model exceeds the design")
    direct = derive(procedure, full_prior, model_small, design).prior
    mid = derive(procedure, full_prior, model_mid, design).prior
    two = derive(procedure, mid, model_small.relative_to(model_mid), design.sub(model_mid)).prior
    disc = {
        "b": float(np.max(np.abs(direct.b - two.b))) if direct.b.size else 0.0,
        "g": abs(direct.g - two.g),
        "d": abs(direct.d - two.d),
        "a": abs(direct.a - two.a),
    }
    return NestedCoherenceReport(direct, two, disc)


@dataclass(frozen=True)
class NuisanceCoherenceReport:
    log_density_direct: float
    log_density_integrated: float
    quad_error: float

    @property
    def gap(self) -> float:
        return abs(self.log_density_direct - self.log_density_integrated)


MAX_NUISANCE_DIM = 3


def _log_student_likelihood(y, X, beta, full_prior: NigPrior, gram) -> float:
    """log of int N(y | X beta, sigma^2 I) pi(sigma^2 | beta) d sigma^2 under the full prior.

    pi(sigma^2 | beta) is IGa((d+p)/2, (a + (beta-b)'X'X(beta-b)/g)/2).
    """
    n, p = X.shape
    dev = beta - full_prior.b
    alpha = 0.5 * (full_prior.d + p)
    rate = 0.5 * (full_prior.a + float(dev @ gram @ dev) / full_prior.g)
    r = y - X @ beta
    return (
        math.lgamma(alpha + 0.5 * n)
        - math.lgamma(alpha)
        - 0.5 * n * math.log(2.0 * math.pi)
        + alpha * math.log(rate)
        - (alpha + 0.5 * n) * math.log(rate + 0.5 * float(r @ r))
    )


def check_nuisance_coherence(full_prior: NigPrior, model: ModelId, data: Dataset, procedure) -> NuisanceCoherenceReport:
    """Two orders of removing sigma^2, compared at the observed y.

    Direct: closed-form marginal of y under the derived (beta_k, sigma_k^2)
    prior.  Integrated: sigma^2 is first integrated out of the full model
    against its prior given beta, giving a Student likelihood in beta; the
    submodel likelihood is its restriction to beta_{\\k} = 0, and it is
    integrated against the beta_k-marginal of the derived prior (a
    multivariate t).  The two agree for every data set iff the procedure is
    nuisance-coherent.  Numerical integration limits p_k to 3.
    """
    if isinstance(procedure, str):
        procedure = Procedure.parse(procedure)
    design = data.design
    derived = derive(procedure, full_prior, model, design)
    pk = derived.prior
    if not pk.proper:
        raise ImproperPriorError("nuisance coherence needs a proper derived prior")
    k = model.size
    if not 1 <= k <= MAX_NUISANCE_DIM:
        raise ValueError(f"integrated route supports 1 <= p_k <= {MAX_NUISANCE_DIM}, got {k}")
    direct = log_marginal_likelihood(pk, data, model)

    blk = design.block(model)
    scale = (pk.a / pk.d) * pk.g * blk.gram_inv()
    gram = design.block(ModelId.full(design.p)).gram()
    inc = list(model.included)
    y, X = data.y, design.X

    # whiten around the posterior so the integrand is O(1) near the origin
    post = posterior_update(pk, data, model)
    center = post.b_n
    L = np.linalg.cholesky(post.a_n / post.d_n * post.V_n)
    logdetL = float(np.sum(np.log(np.diag(L))))

    def log_integrand(z):
        bk = center + L @ z
        beta = np.zeros(design.p)
        beta[inc] = bk
        return _log_student_likelihood(y, X, beta, full_prior, gram) + log_mvt_density(bk, pk.b, scale, pk.d)

    ref = log_integrand(np.zeros(k))

    def f(*z):
        return math.exp(log_integrand(np.array(z)) - ref)

    opts = {"epsabs": 0.0, "epsrel": 1e-10, "limit": 200}
    val, err = integrate.nquad(f, [(-np.inf, np.inf)] * k, opts=[opts] * k)
    integrated = ref + logdetL + math.log(val)
    return NuisanceCoherenceReport(direct, integrated, err / val)
