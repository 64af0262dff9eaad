"""Normal-inverted-gamma g-priors on a linear (sub)model.

Parametrization follows the classical NIGa(b, V, d, a) convention:
beta | sigma^2 ~ N(b, sigma^2 V) and sigma^2 ~ IGa(d/2, a/2), whose mean is
a/(d-2).  A g-prior has V = g (X_k' X_k)^{-1}.  The improper reference prior
pi(sigma^2) ∝ 1/sigma^2 is the d = a = 0 member.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.special import gammaln

from .core_model import Dataset, Design, ModelId, as_design
from .errors import DataError, ImproperPriorError

LOG_PI = math.log(math.pi)


@dataclass(frozen=True)
class NigPrior:
    """g-prior NIGa(b, g (X_k'X_k)^{-1}, d, a) on one model's coefficients."""

    b: np.ndarray
    g: float
    d: float
    a: float
    proper: bool = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        b = np.array(self.b, dtype=float).ravel()
        b.setflags(write=False)
        object.__setattr__(self, "b", b)
        if not self.g > 0:
            raise ValueError(f"g must be positive, got {self.g}")
        if self.d < 0 or self.a < 0:
            raise ValueError(f"d and a must be nonnegative, got d={self.d}, a={self.a}")
        is_proper = self.d > 0 and self.a > 0
        if self.proper is None:
            object.__setattr__(self, "proper", is_proper)
        elif bool(self.proper) != is_proper:
            raise ValueError(f"proper={self.proper} inconsistent with d={self.d}, a={self.a}")
        if not is_proper and (self.d != 0 or self.a != 0):
            raise ValueError("improper priors are encoded as d = a = 0")

    @classmethod
    def improper(cls, b, g: float) -> "NigPrior":
        return cls(b, g, 0.0, 0.0)

    def with_mean(self, b) -> "NigPrior":
        return NigPrior(b, self.g, self.d, self.a)

    def sigma2_mean(self) -> float:
        return self.a / (self.d - 2) if self.d > 2 else math.inf


@dataclass(frozen=True)
class GeneralNigPosterior:
    """NIGa(b_n, V_n, d_n, a_n) with an arbitrary SPD scale matrix."""

    b_n: np.ndarray
    V_n: np.ndarray
    d_n: float
    a_n: float

    def predictive_scale(self) -> float:
        """E(sigma^2 | y) = a_n / (d_n - 2)."""
        if not self.d_n > 2:
            raise ImproperPriorError(f"predictive variance infinite for d_n = {self.d_n} <= 2")
        return self.a_n / (self.d_n - 2)


PriorLike = Union[NigPrior, GeneralNigPosterior]

MEAN_KINDS = ("zero", "ybar", "ols", "custom")


@dataclass(frozen=True)
class PriorMeanChoice:
    """How the full-model prior mean E(beta) is chosen."""

    kind: str
    custom_value: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in MEAN_KINDS:
            raise ValueError(f"unknown mean choice {self.kind!r}; expected one of {MEAN_KINDS}")
        if self.kind == "custom" and self.custom_value is None:
            raise ValueError("custom mean choice needs a value")

    @classmethod
    def from_prediction(cls, eta, data: Dataset) -> "PriorMeanChoice":
        """Coefficients whose fit reproduces a prior guess ``eta`` of y: (X'X)^{-1} X' eta."""
        eta = np.asarray(eta, dtype=float).ravel()
        if eta.size != data.n:
            raise DataError(f"prediction has length {eta.size}, expected {data.n}")
        full = ModelId.full(data.p)
        return cls("custom", data.design.block(full).lstsq(eta))

    @property
    def data_dependent(self) -> bool:
        return self.kind in ("ybar", "ols")

    def __str__(self):
        return self.kind


def resolve_prior_mean(choice: PriorMeanChoice, data: Dataset) -> np.ndarray:
    p = data.p
    if choice.kind == "zero":
        return np.zeros(p)
    if choice.kind == "ybar":
        b = np.zeros(p)
        b[0] = data.y.mean()
        return b
    if choice.kind == "ols":
        return data.design.block(ModelId.full(p)).lstsq(data.y)
    v = np.asarray(choice.custom_value, dtype=float).ravel()
    if v.size != p:
        raise DataError(f"custom prior mean has length {v.size}, expected {p}")
    return v.copy()


def restrict_mean_standard(b, model: ModelId, X) -> np.ndarray:
    """(X_k'X_k)^{-1} X_k' X b: coefficients of the best fit of X b within col(X_k)."""
    design = as_design(X)
    return design.block(model).lstsq(design.X @ np.asarray(b, dtype=float))


def _scale_matrix(prior: PriorLike, design: Design, model: ModelId):
    if np.size(prior.b if isinstance(prior, NigPrior) else prior.b_n) != model.size:
        raise ValueError(f"prior mean length does not match model {model} with {model.size} coefficients")
    if isinstance(prior, NigPrior):
        blk = design.block(model)
        return prior.b, prior.g * blk.gram_inv(), prior.d, prior.a
    return prior.b_n, prior.V_n, prior.d_n, prior.a_n


def posterior_update(prior: PriorLike, data: Dataset, model: ModelId) -> GeneralNigPosterior:
    """Conjugate update of a NIGa prior on model ``model``'s coefficients."""
    design = data.design
    Xk = design.cols(model)
    b, V, d, a = _scale_matrix(prior, design, model)
    pk = Xk.shape[1]
    if isinstance(prior, NigPrior) and not prior.proper and data.n <= pk:
        raise ImproperPriorError(f"improper prior needs n > p_k for a proper posterior (n={data.n}, p_k={pk})")
    y = data.y
    if pk == 0:
        return GeneralNigPosterior(np.zeros(0), np.zeros((0, 0)), d + data.n, a + float(y @ y))
    Vinv = np.linalg.inv(V) if not isinstance(prior, NigPrior) else design.block(model).gram() / prior.g
    prec_n = Vinv + Xk.T @ Xk
    L = np.linalg.cholesky(prec_n)
    rhs = Vinv @ b + Xk.T @ y
    b_n = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
    V_n = np.linalg.solve(L.T, np.linalg.solve(L, np.eye(pk)))
    V_n = 0.5 * (V_n + V_n.T)
    # equals a + y'y + b'V^{-1}b - b_n'V_n^{-1}b_n without the cancellation
    r = y - Xk @ b_n
    a_n = a + float(r @ r) + float((b_n - b) @ Vinv @ (b_n - b))
    return GeneralNigPosterior(b_n, V_n, d + data.n, a_n)


def gprior_quadratic(y: np.ndarray, design: Design, model: ModelId, b_k, g: float) -> float:
    """y'M_k y + (y - X_k b)' P_k (y - X_k b) / (1 + g).

    This is r'(I + g P_k)^{-1} r with r = y - X_k b, the Mahalanobis term of
    the marginal Student-t.
    """
    blk = design.block(model)
    r = y - blk.X @ np.asarray(b_k, dtype=float) if blk.X.shape[1] else np.asarray(y, dtype=float)
    Qr = blk.Q.T @ r
    res = blk.residual(y)
    return float(res @ res) + float(Qr @ Qr) / (1.0 + g)


def log_marginal_likelihood(prior: PriorLike, data: Dataset, model: ModelId) -> float:
    """log f(y) under the n-variate Student-t marginal of a proper NIGa prior.

    For a g-prior, det(I + g P_k) = (1+g)^{p_k} and
    (I + g P_k)^{-1} = I - g/(1+g) P_k, so no n x n matrix is formed.
    General (b, V) priors go through the matrix determinant lemma.
    """
    n = data.n
    if isinstance(prior, NigPrior):
        if not prior.proper:
            raise ImproperPriorError(
                "improper prior has no absolute marginal likelihood; use selection.bayes_factor"
            )
        d, a, g = prior.d, prior.a, prior.g
        S = gprior_quadratic(data.y, data.design, model, prior.b, g)
        logdet = model.size * math.log1p(g)
    else:
        b, V, d, a = prior.b_n, prior.V_n, prior.d_n, prior.a_n
        if not (d > 0 and a > 0):
            raise ImproperPriorError("general NIGa prior must have d > 0 and a > 0")
        Xk = data.design.cols(model)
        r = data.y - Xk @ b
        if Xk.shape[1]:
            Vinv = np.linalg.inv(V)
            A = Vinv + Xk.T @ Xk
            u = Xk.T @ r
            S = float(r @ r) - float(u @ np.linalg.solve(A, u))
            logdet = np.linalg.slogdet(V)[1] + np.linalg.slogdet(A)[1]
        else:
            S, logdet = float(r @ r), 0.0
    return float(
        gammaln(0.5 * (d + n))
        - gammaln(0.5 * d)
        - 0.5 * n * LOG_PI
        + 0.5 * d * math.log(a)
        - 0.5 * logdet
        - 0.5 * (d + n) * math.log(a + S)
    )


def log_mvt_density(x, loc, scale, df: float) -> float:
    """log density of a multivariate t with scale matrix ``scale`` (covariance df/(df-2) scale)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    loc = np.atleast_1d(np.asarray(loc, dtype=float))
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    k = x.size
    L = np.linalg.cholesky(scale)
    z = np.linalg.solve(L, x - loc)
    maha = float(z @ z)
    return float(
        gammaln(0.5 * (df + k))
        - gammaln(0.5 * df)
        - 0.5 * k * math.log(df * math.pi)
        - np.sum(np.log(np.diag(L)))
        - 0.5 * (df + k) * math.log1p(maha / df)
    )


def log_nig_density(beta, sigma2: float, b, V, d: float, a: float) -> float:
    """log NIGa(beta, sigma2; b, V, d, a) density (proper priors only)."""
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    k = beta.size
    out = 0.5 * d * math.log(0.5 * a) - gammaln(0.5 * d) - (0.5 * d + 1) * math.log(sigma2) - 0.5 * a / sigma2
    if k:
        L = np.linalg.cholesky(np.atleast_2d(V))
        z = np.linalg.solve(L, beta - np.asarray(b, dtype=float))
        out += -0.5 * k * math.log(2 * math.pi * sigma2) - np.sum(np.log(np.diag(L))) - 0.5 * float(z @ z) / sigma2
    return float(out)
