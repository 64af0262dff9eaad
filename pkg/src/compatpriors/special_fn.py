"""Scalar special functions and a bracketing root solver.

Only what the KL-conjugate approximation needs: log-gamma, digamma, the
upper incomplete gamma function for any real shape (including zero and
negative shapes), and a monotone-equation solver with automatic bracket
expansion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from scipy.optimize import brentq

from .errors import BracketingError, DomainError, NumericalError

EULER_GAMMA = 0.57721566490153286061

SOLVE_FTOL = 1e-10
SOLVE_MAXITER = 200
MAX_EXPANSIONS = 200

# Bernoulli-number coefficients B_2k / (2k) of the digamma asymptotic series
_PSI_ASYMPTOTIC = (
    1.0 / 12,
    -1.0 / 120,
    1.0 / 252,
    -1.0 / 240,
    1.0 / 132,
    -691.0 / 32760,
    1.0 / 12,
)


def log_gamma(x: float) -> float:
    if not x > 0:
        raise DomainError(f"log_gamma requires x > 0, got {x}")
    return math.lgamma(x)


def digamma(x: float) -> float:
    """psi(x) = d/dx log Gamma(x) for x > 0.

    Upward recurrence psi(x) = psi(x+1) - 1/x until x >= 10, then the
    asymptotic series in 1/x^2.
    """
    if not x > 0:
        raise DomainError(f"digamma requires x > 0, got {x}")
    shift = 0.0
    while x < 10.0:
        shift -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    tail = 0.0
    for c in reversed(_PSI_ASYMPTOTIC):
        tail = tail * inv2 + c
    return shift + math.log(x) - 0.5 / x - tail * inv2


def _lower_series_scaled(alpha: float, z: float) -> float:
    """sum_k z^k / (alpha (alpha+1) ... (alpha+k)), so gamma(alpha,z) = e^-z z^alpha * this."""
    term = 1.0 / alpha
    total = term
    a = alpha
    for _ in range(10_000):
        a += 1.0
        term *= z / a
        total += term
        if abs(term) < abs(total) * 1e-17:
            return total
    raise NumericalError(f"incomplete gamma series did not converge (alpha={alpha}, z={z})")


def _upper_cf_scaled(alpha: float, z: float) -> float:
    """Modified-Lentz continued fraction: Gamma(alpha,z) = e^-z z^alpha * this."""
    tiny = 1e-300
    b = z + 1.0 - alpha
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - alpha)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise NumericalError(f"incomplete gamma continued fraction did not converge (alpha={alpha}, z={z})")


def _exp1_scaled(z: float) -> float:
    """e^z * E_1(z) = e^z * Gamma(0, z)."""
    if z >= 1.0:
        return _upper_cf_scaled(0.0, z)
    # E_1(z) = -gamma - log z - sum_{k>=1} (-z)^k / (k k!)
    s = 0.0
    term = 1.0
    for k in range(1, 200):
        term *= -z / k
        s += term / k
        if abs(term) < 1e-18:
            break
    return math.exp(z) * (-EULER_GAMMA - math.log(z) - s)


def _upper_positive_scaled(alpha: float, z: float) -> float:
    """e^z * Gamma(alpha, z) for alpha > 0."""
    if z < alpha + 1.0:
        lower = math.exp(alpha * math.log(z)) * _lower_series_scaled(alpha, z)
        return math.exp(z + math.lgamma(alpha)) - lower
    return math.exp(alpha * math.log(z)) * _upper_cf_scaled(alpha, z)


def upper_incomplete_gamma(alpha: float, z: float, scaled: bool = False) -> float:
    """Gamma(alpha, z) = int_z^inf e^-t t^(alpha-1) dt, any real alpha, z > 0.

    Shapes alpha <= 0 are reached by the downward recurrence
    Gamma(a, z) = (Gamma(a+1, z) - z^a e^-z) / a, started from a shape in
    (0, 1], or from E_1(z) = Gamma(0, z) when alpha is a non-positive integer.
    With ``scaled=True`` returns e^z * Gamma(alpha, z), which stays finite
    for large z.
    """
    if not z > 0:
        raise DomainError(f"upper_incomplete_gamma requires z > 0, got {z}")
    if alpha > 0:
        val = _upper_positive_scaled(alpha, z)
    else:
        steps = int(math.floor(-alpha + 1e-12))
        start = alpha + steps
        if abs(start) < 1e-12:
            val = _exp1_scaled(z)
            start = 0.0
        else:
            start = alpha + steps + 1
            steps += 1
            val = _upper_positive_scaled(start, z)
        a = start
        logz = math.log(z)
        for _ in range(steps):
            a -= 1.0
            val = (val - math.exp(a * logz)) / a
    return val if scaled else val * math.exp(-z)


@dataclass(frozen=True)
class SolveResult:
    root: float
    residual: float
    iterations: int
    bracket: tuple[float, float]


def _expand(lo: float, hi: float, positive: bool) -> tuple[float, float]:
    if positive:
        return lo / 2.0, hi * 2.0
    mid, half = 0.5 * (lo + hi), hi - lo
    return mid - half, mid + half


def solve_monotone(
    f: Callable[[float], float],
    bracket_hint: tuple[float, float],
    ftol: float = SOLVE_FTOL,
    maxiter: int = SOLVE_MAXITER,
) -> SolveResult:
    """Root of a continuous strictly monotone ``f``.

    The hint is widened geometrically until ``f`` changes sign (a hint
    with ``lo > 0`` stays on the positive half-line), then the bracket is
    refined by Brent's hybrid bisection/secant/inverse-quadratic method.
    Raises BracketingError if no sign change appears within 200 expansions
    and NumericalError if the final |f(root)| exceeds ``ftol``.
    """
    lo, hi = map(float, bracket_hint)
    if not lo < hi:
        raise ValueError(f"bracket must satisfy lo < hi, got {bracket_hint}")
    positive = lo > 0
    flo, fhi = f(lo), f(hi)
    expansions = 0
    while flo * fhi > 0:
        if expansions >= MAX_EXPANSIONS:
            raise BracketingError(f"no sign change after {MAX_EXPANSIONS} expansions, last bracket ({lo}, {hi})")
        lo, hi = _expand(lo, hi, positive)
        flo, fhi = f(lo), f(hi)
        expansions += 1
    if flo == 0:
        return SolveResult(lo, 0.0, 0, (lo, hi))
    if fhi == 0:
        return SolveResult(hi, 0.0, 0, (lo, hi))
    root, info = brentq(f, lo, hi, xtol=1e-300, rtol=8.9e-16, maxiter=maxiter, full_output=True, disp=False)
    resid = f(root)
    if not info.converged and abs(resid) > ftol:
        raise NumericalError(f"root solver did not converge: {info.flag}")
    if abs(resid) > ftol:
        raise NumericalError(f"root residual {resid:.3g} exceeds tolerance {ftol:g}")
    return SolveResult(float(root), float(resid), int(info.iterations), (lo, hi))


def psi_minus_log_half(x: float) -> float:
    """psi(x/2) - log(x/2): strictly increasing from -inf to 0 on (0, inf)."""
    return digamma(0.5 * x) - math.log(0.5 * x)


def solve_psi_log_half(rhs: float, hint: tuple[float, float] = (0.5, 10.0)) -> SolveResult:
    """Solve psi(x/2) - log(x/2) = rhs for x > 0 (requires rhs < 0)."""
    if not rhs < 0:
        raise BracketingError(f"psi(x/2)-log(x/2) is negative everywhere; no solution for rhs={rhs}")
    return solve_monotone(lambda x: psi_minus_log_half(x) - rhs, hint)
