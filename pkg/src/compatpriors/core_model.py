"""Linear-model bookkeeping: datasets, submodels, projections and OLS.

Every submodel keeps the intercept (column 0 of ``X``).  Submodels are
identified by the set of design columns they retain.  Per-model QR
factorizations are cached on a :class:`Design` so that exhaustive
enumeration over ``2**(p-1)`` models does not refactor the same blocks.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError, SingularDesignError

RANK_RTOL = 1e-10
MATERIALIZE_MAX_N = 512
MAX_ENUM_P = 25


@dataclass(frozen=True, order=True)
class ModelId:
    """Ordered set of design columns retained by a submodel.

    The empty set is allowed only for the zero-mean submodel of a pure
    location model; anything else must contain the intercept (index 0).
    """

    included: tuple[int, ...]

    def __post_init__(self):
        cols = tuple(sorted(set(int(j) for j in self.included)))
        if any(j < 0 for j in cols):
            raise ValueError(f"negative column index in {self.included}")
        if cols and cols[0] != 0:
            raise ValueError(f"submodel {cols} does not contain the intercept")
        object.__setattr__(self, "included", cols)

    @classmethod
    def of(cls, *cols: int) -> "ModelId":
        return cls(tuple(cols))

    @classmethod
    def full(cls, p: int) -> "ModelId":
        return cls(tuple(range(p)))

    @property
    def size(self) -> int:
        return len(self.included)

    def excluded(self, p: int) -> tuple[int, ...]:
        inc = set(self.included)
        return tuple(j for j in range(p) if j not in inc)

    def is_full(self, p: int) -> bool:
        return self.size == p

    def issubset(self, other: "ModelId") -> bool:
        return set(self.included) <= set(other.included)

    def relative_to(self, outer: "ModelId") -> "ModelId":
        """Re-index this model as columns of ``outer``'s design."""
        if not self.issubset(outer):
            raise ValueError(f"{self} is not nested in {outer}")
        pos = {j: i for i, j in enumerate(outer.included)}
        return ModelId(tuple(pos[j] for j in self.included))

    def label(self) -> str:
        """Predictor set without the intercept, e.g. ``{1,2}``."""
        return "{" + ",".join(str(j) for j in self.included if j != 0) + "}"

    def __str__(self):
        return self.label()


def enumerate_models(p: int) -> list[ModelId]:
    """All intercept-containing submodels, ordered by size then lexicographically."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if p > MAX_ENUM_P:
        raise ValueError(f"exhaustive enumeration capped at p <= {MAX_ENUM_P}, got {p}")
    out = []
    for r in range(p):
        for combo in itertools.combinations(range(1, p), r):
            out.append(ModelId((0,) + combo))
    return out


def check_full_rank(X: np.ndarray, what: str = "design") -> None:
    if X.shape[1] == 0:
        return
    s = np.linalg.svd(X, compute_uv=False)
    if s[0] == 0 or s[-1] / s[0] < RANK_RTOL:
        raise SingularDesignError(
            f"{what} is rank deficient (sigma_min/sigma_max = {s[-1] / s[0] if s[0] else 0:.3g})"
        )


class _Block:
    """Thin-QR view of one column block ``X_k``."""

    def __init__(self, Xk: np.ndarray):
        self.X = Xk
        n, pk = Xk.shape
        if pk == 0:
            self.Q = np.zeros((n, 0))
            self.R = np.zeros((0, 0))
            return
        if pk > n:
            raise SingularDesignError(f"block has {pk} columns but only {n} rows")
        Q, R = np.linalg.qr(Xk)
        d = np.abs(np.diag(R))
        if d.min() <= RANK_RTOL * d.max():
            raise SingularDesignError("submodel design is rank deficient")
        self.Q, self.R = Q, R

    def solve_gram(self, rhs: np.ndarray) -> np.ndarray:
        """(X_k^T X_k)^{-1} rhs through the triangular factor."""
        if self.R.size == 0:
            return np.zeros((0,) + np.shape(rhs)[1:])
        t = np.linalg.solve(self.R.T, rhs)
        return np.linalg.solve(self.R, t)

    def lstsq(self, v: np.ndarray) -> np.ndarray:
        """(X_k^T X_k)^{-1} X_k^T v."""
        if self.R.size == 0:
            return np.zeros((0,) + np.shape(v)[1:])
        return np.linalg.solve(self.R, self.Q.T @ v)

    def project(self, v: np.ndarray) -> np.ndarray:
        return self.Q @ (self.Q.T @ v)

    def residual(self, v: np.ndarray) -> np.ndarray:
        return v - self.project(v)

    def gram(self) -> np.ndarray:
        return self.X.T @ self.X

    def gram_inv(self) -> np.ndarray:
        return self.solve_gram(np.eye(self.X.shape[1]))

    def logdet_gram(self) -> float:
        if self.R.size == 0:
            return 0.0
        return 2.0 * float(np.sum(np.log(np.abs(np.diag(self.R)))))


class Design:
    """Design matrix with a per-model factorization cache.

    Instances are effectively immutable; the cache only memoizes pure
    functions of ``X`` and is safe to share between threads (a duplicate
    factorization under contention is harmless).
    """

    def __init__(self, X, check_rank: bool = True):
        X = np.array(X, dtype=float)
        if X.ndim != 2:
            raise ValueError("design must be a 2-d array")
        X.setflags(write=False)
        self.X = X
        if check_rank:
            check_full_rank(X)
        self._blocks: dict[ModelId, _Block] = {}

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def block(self, model: ModelId) -> _Block:
        blk = self._blocks.get(model)
        if blk is None:
            if model.included and model.included[-1] >= self.p:
                raise ValueError(f"model {model.included} indexes beyond p={self.p}")
            blk = _Block(self.X[:, list(model.included)])
            self._blocks[model] = blk
        return blk

    def cols(self, model: ModelId) -> np.ndarray:
        return self.X[:, list(model.included)]

    def excluded_cols(self, model: ModelId) -> np.ndarray:
        return self.X[:, list(model.excluded(self.p))]

    def sub(self, model: ModelId) -> "Design":
        """Design restricted to ``model``'s columns (for chained derivations)."""
        return Design(self.cols(model), check_rank=False)


def as_design(X) -> Design:
    return X if isinstance(X, Design) else Design(X)


@dataclass(frozen=True)
class Dataset:
    """Response ``y`` with design ``X`` whose column 0 is the intercept."""

    y: np.ndarray
    X: np.ndarray
    predictor_names: list[str] = field(default_factory=list)
    design: Design = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        y = np.array(self.y, dtype=float).ravel()
        X = np.array(self.X, dtype=float)
        if X.ndim != 2 or X.shape[0] != y.size:
            raise DataError(f"X has shape {X.shape} but y has length {y.size}")
        n, p = X.shape
        if not n >= p >= 1:
            raise DataError(f"need n >= p >= 1, got n={n}, p={p}")
        if not np.all(X[:, 0] == 1.0):
            raise DataError("column 0 of X must be the all-ones intercept")
        names = list(self.predictor_names) or ["(intercept)"] + [f"x{j}" for j in range(1, p)]
        if len(names) != p:
            raise DataError(f"{len(names)} predictor names for {p} columns")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "predictor_names", names)
        object.__setattr__(self, "design", Design(X))
        object.__setattr__(self, "X", self.design.X)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def with_y(self, y) -> "Dataset":
        """Same design (and factorization cache), new response."""
        new = object.__new__(Dataset)
        y = np.array(y, dtype=float).ravel()
        if y.size != self.n:
            raise DataError("response length does not match design")
        y.setflags(write=False)
        object.__setattr__(new, "y", y)
        object.__setattr__(new, "X", self.X)
        object.__setattr__(new, "predictor_names", self.predictor_names)
        object.__setattr__(new, "design", self.design)
        return new

    def subset_rows(self, rows: Sequence[int]) -> "Dataset":
        rows = list(rows)
        return Dataset(self.y[rows], self.X[rows], self.predictor_names)


@dataclass(frozen=True)
class ProjectionPair:
    """Materialized hat matrix ``P_k`` and residual maker ``M_k = I - P_k``."""

    P_k: np.ndarray
    M_k: np.ndarray


def projection_pair(X, model: ModelId) -> ProjectionPair:
    design = as_design(X)
    if design.n > MATERIALIZE_MAX_N:
        raise ValueError(
            f"refusing to materialize {design.n}x{design.n} projections; use residuals instead"
        )
    Q = design.block(model).Q
    P = Q @ Q.T
    return ProjectionPair(P, np.eye(design.n) - P)


def ols_fit(data: Dataset, model: ModelId) -> tuple[np.ndarray, float]:
    """OLS coefficients under ``model`` and the residual sum of squares y'M_k y."""
    blk = data.design.block(model)
    beta = blk.lstsq(data.y)
    r = blk.residual(data.y)
    return beta, float(r @ r)


def quad_form_Qk(beta, model: ModelId, X) -> float:
    """(1/n) beta' X' M_k X beta: squared length of the part of X beta outside col(X_k)."""
    design = as_design(X)
    w = design.block(model).residual(design.X @ np.asarray(beta, dtype=float))
    return float(w @ w) / design.n


def quad_form_Qk_excluded(beta_excl, model: ModelId, X) -> float:
    """Same quadratic form from the excluded coefficients alone."""
    design = as_design(X)
    v = design.excluded_cols(model) @ np.asarray(beta_excl, dtype=float)
    w = design.block(model).residual(v)
    return float(w @ w) / design.n
