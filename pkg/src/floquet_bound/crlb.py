"""Cramer-Rao bounds for Floquet multiplier estimates.

Two levels are provided.  For a periodic autoregressive (PAR) model with
section gains ``alpha_1..alpha_p`` the bound on unbiased estimates of
``lambda = prod(alpha)`` is available in closed form.  Letting the number of
equal-time sections grow turns the sums into integrals of the scalar mode
restriction ``phi``, which gives a bound that depends only on the linearized
flow:

    var >= (1 - lambda^2) / n * int_0^tau ds / (phi(s)^2 int_0^tau phi(t+s)^-2 dt)

Neither bound depends on the noise amplitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson, simpson
from scipy.interpolate import CubicSpline
from scipy.special import logsumexp

from .errors import (
    DegenerateCoefficientError,
    InstabilityError,
    InvalidParameterError,
    NumericRangeError,
)

__all__ = [
    "ParCoefficients",
    "BoundResult",
    "asymptotic_return_variance",
    "fisher_information_diagonal",
    "discrete_bound",
    "continuum_bound",
    "coefficients_from_mode",
    "LAMBDA_MIN",
    "LAMBDA_MAX",
]

LAMBDA_MIN = 1e-6
LAMBDA_MAX = 1.0 - 1e-9

# Fisher information per unit innovation variance relative to Gaussian noise
_INFO_FACTOR = {"gaussian": 1.0, "laplace": 2.0}


@dataclass(frozen=True)
class ParCoefficients:
    """Gains ``alpha_1..alpha_p`` (stored 0-based) and innovation variance."""

    alphas: tuple
    sigma2: float = 1.0

    def __post_init__(self):
        alphas = tuple(float(a) for a in np.atleast_1d(self.alphas))
        if len(alphas) < 1:
            raise InvalidParameterError("a PAR model needs at least one section")
        if not self.sigma2 > 0:
            raise InvalidParameterError("sigma2 must be positive")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "sigma2", float(self.sigma2))

    @property
    def p(self) -> int:
        return len(self.alphas)

    @property
    def lam(self) -> float:
        return math.prod(self.alphas)

    def alpha(self, j: int) -> float:
        """``alpha_j`` with the 1-based index taken modulo ``p``."""
        return self.alphas[(j - 1) % self.p]


@dataclass(frozen=True)
class BoundResult:
    value: float
    n_cycles: int
    kind: str
    lam: float = float("nan")

    @property
    def sqrt(self) -> float:
        return math.sqrt(self.value)


def _require_stable(coeffs):
    if not abs(coeffs.lam) < 1.0:
        raise InstabilityError(f"|lambda| = {abs(coeffs.lam):.6g} >= 1; no stationary variance")


def asymptotic_return_variance(coeffs: ParCoefficients, k: int) -> float:
    """Stationary variance of returns to section ``k``.

    ``sigma^2 / (1 - lambda^2) * (1 + sum_{i=2}^p prod_{j=i}^p alpha_{j+k}^2)``
    """
    _require_stable(coeffs)
    p = coeffs.p
    total, prod = 1.0, 1.0
    # accumulate the products from the innermost (i = p) outward
    for i in range(p, 1, -1):
        prod *= coeffs.alpha(i + k) ** 2
        total += prod
    return coeffs.sigma2 / (1.0 - coeffs.lam**2) * total


def fisher_information_diagonal(coeffs: ParCoefficients, n_cycles: int = 1) -> list:
    """Asymptotic diagonal of the information for ``(alpha_1, ..., alpha_p)``.

    Entry ``k`` (0-based here, ``alpha_{k+1}``) is
    ``n_cycles * var(x_k) / sigma^2``, the information carried by the
    regressor into section ``k + 1``.  The innovation variance cancels.
    """
    if n_cycles < 1:
        raise InvalidParameterError("n_cycles must be >= 1")
    return [n_cycles * asymptotic_return_variance(coeffs, k) / coeffs.sigma2
            for k in range(coeffs.p)]


def discrete_bound(coeffs: ParCoefficients, n_cycles: int = 1) -> BoundResult:
    """Lower bound on the variance of unbiased estimates of ``prod(alpha)``.

    ``lambda^2 (1 - lambda^2) / n * sum_k (sum_i prod_{j=i}^p alpha_{j+k}^2)^-1``,
    evaluated with log-sum-exp so long products of small gains do not
    underflow.
    """
    if n_cycles < 1:
        raise InvalidParameterError("n_cycles must be >= 1")
    alphas = np.asarray(coeffs.alphas)
    if np.any(alphas == 0):
        raise DegenerateCoefficientError("every alpha must be nonzero")
    _require_stable(coeffs)
    p = coeffs.p
    log_a2 = 2.0 * np.log(np.abs(alphas))
    log_lam2 = float(log_a2.sum())
    total = 0.0
    for k in range(1, p + 1):
        # c_j = log alpha_{j+k}^2 for j = 1..p, then suffix sums over j >= i
        c = np.roll(log_a2, -k)
        suffix = np.cumsum(c[::-1])[::-1]
        total += math.exp(-logsumexp(suffix))
    lam2 = math.exp(log_lam2)
    value = lam2 * (1.0 - lam2) * total / n_cycles
    return BoundResult(value, int(n_cycles), f"discrete({p})", coeffs.lam)


def _first_period(mode):
    t = np.asarray(mode.t)
    tau = mode.tau
    end = int(np.searchsorted(t, tau * (1.0 + 1e-12), side="right"))
    if end < 3 or abs(t[end - 1] - tau) > 1e-9 * tau or t[0] != 0.0:
        raise InvalidParameterError("mode grid must start at 0 and contain tau")
    return t[:end], np.asarray(mode.log_abs)[:end]


def continuum_bound(mode, n_cycles: int = 1, noise: str = "gaussian") -> BoundResult:
    """Continuum-limit bound from the scalar restriction ``phi`` of one mode.

    The inner integral over ``[s, s + tau]`` is folded back onto ``[0, tau]``
    with ``phi(t + tau) = lambda phi(t)``; both integrals use composite
    Simpson on the mode grid.  ``noise="laplace"`` doubles the information.

    Raises
    ------
    NumericRangeError
        If ``|lambda|`` lies outside ``[1e-6, 1 - 1e-9]``.
    """
    if n_cycles < 1:
        raise InvalidParameterError("n_cycles must be >= 1")
    lam = float(mode.lam)
    if not (LAMBDA_MIN <= abs(lam) <= LAMBDA_MAX):
        raise NumericRangeError(f"|lambda| = {abs(lam):.3g} outside [{LAMBDA_MIN}, {LAMBDA_MAX}]")
    try:
        factor = _INFO_FACTOR[noise]
    except KeyError:
        raise InvalidParameterError(f"unknown noise kind {noise!r}") from None
    t, log_abs = _first_period(mode)
    expo = -2.0 * log_abs
    if not np.all(np.isfinite(expo)):
        raise NumericRangeError("phi grid contains non-finite values")
    # phi^-2 scaled by its maximum; the same scale cancels in w / A below
    w = np.exp(expo - expo.max())
    cum = cumulative_simpson(w, x=t, initial=0.0)
    inner = (cum[-1] - cum) + cum / lam**2
    outer = simpson(w / inner, x=t)
    value = (1.0 - lam**2) * outer / n_cycles / factor
    if not math.isfinite(value):
        raise NumericRangeError("continuum bound overflowed")
    return BoundResult(float(value), int(n_cycles), "continuum", lam)


def coefficients_from_mode(mode, p: int, sigma2: float = 1.0) -> ParCoefficients:
    """Section gains ``phi(t_k) / phi(t_{k-1})`` for ``p`` equal-time sections.

    Uses the grid directly when ``t_k = k tau / p`` are grid points and a
    cubic spline of ``log|phi|`` otherwise.
    """
    if p < 1:
        raise InvalidParameterError("p must be >= 1")
    t, log_abs = _first_period(mode)
    sign = np.asarray(mode.sign)[: len(t)]
    n = len(t) - 1
    if n % p == 0:
        stride = n // p
        la, sg = log_abs[::stride], sign[::stride]
    else:
        tk = np.linspace(0.0, mode.tau, p + 1)
        la = CubicSpline(t, log_abs)(tk)
        sg = sign[np.clip(np.rint(tk / mode.tau * n).astype(int), 0, n)]
        la[0], la[-1], sg[0], sg[-1] = log_abs[0], log_abs[-1], sign[0], sign[n]
    alphas = sg[1:] * sg[:-1] * np.exp(np.diff(la))
    return ParCoefficients(tuple(alphas), sigma2)
