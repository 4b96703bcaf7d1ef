"""Least-squares fits of periodic autoregressive models to crossing series.

Each transition into section ``k`` is regressed on the coordinate at section
``k - 1`` (no intercept, after removing per-section means).  In 2D the gains
are scalars and the multiplier estimate is their product; in 3D the gains
are 2x2 maps and the multiplier estimates are the eigenvalues of the
ordered product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, InsufficientDataError, InvalidParameterError
from .stochsim import CrossingSeries

__all__ = ["ParFit", "MultiplierEstimate", "fit_par", "multiplier_estimate"]


@dataclass(frozen=True)
class ParFit:
    """Per-transition gains.

    ``alphas[j]`` maps section ``j`` to section ``(j + 1) mod p``: a scalar for
    one coordinate, an ``m x m`` matrix otherwise.  ``counts[j]`` is the
    number of pairs it was fit from.
    """

    alphas: np.ndarray
    sigma2_hat: float
    counts: np.ndarray
    means: np.ndarray
    n_cycles: int

    @property
    def p(self) -> int:
        return len(self.alphas)

    @property
    def is_scalar(self) -> bool:
        return self.alphas.ndim == 1


@dataclass(frozen=True)
class MultiplierEstimate:
    lambda_hat: object
    n_cycles: int
    complex_flag: bool = False


def fit_par(series: CrossingSeries, p: int | None = None, center: bool = True,
            scalar: bool = False) -> ParFit:
    """Fit section-to-section gains by least squares.

    Parameters
    ----------
    series : CrossingSeries
    p : int, optional
        Number of sections; defaults to ``series.p``.
    center : bool
        Subtract the per-section mean before regressing.
    scalar : bool
        For multi-coordinate series, fit only the first coordinate (the
        projected mode direction) with scalar gains.

    Raises
    ------
    InsufficientDataError
        A transition has fewer than two observations, or the series covers
        fewer than two cycles.
    DegenerateDataError
        A regressor has zero variance (scalar) or a singular Gram matrix.
    """
    p = series.p if p is None else p
    if p != series.p:
        raise InvalidParameterError(f"series has {series.p} sections, not {p}")
    x = np.asarray(series.coords, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if scalar:
        x = x[:, :1]
    n = len(x)
    if n < 2 * p + 1 and p > 1 or n < 3:
        raise InsufficientDataError(f"{n} crossings cover fewer than two cycles of {p} sections")
    sec = np.asarray(series.section) % p
    means = np.zeros((p, x.shape[1]))
    if center:
        for k in range(p):
            means[k] = x[sec == k].mean(axis=0)
        x = x - means[sec]
    prev, nxt, src = x[:-1], x[1:], sec[:-1]
    counts = np.bincount(src, minlength=p)
    if np.any(counts < 2):
        raise InsufficientDataError(f"transition {int(np.argmin(counts))} has {counts.min()} pairs")
    m = x.shape[1]
    resid_ss = 0.0
    if m == 1:
        num = np.bincount(src, weights=prev[:, 0] * nxt[:, 0], minlength=p)
        den = np.bincount(src, weights=prev[:, 0] ** 2, minlength=p)
        if np.any(den == 0):
            raise DegenerateDataError("a section has zero coordinate variance")
        alphas = num / den
        resid_ss = float(np.sum((nxt[:, 0] - alphas[src] * prev[:, 0]) ** 2))
    else:
        alphas = np.empty((p, m, m))
        for k in range(p):
            sel = src == k
            a, b = prev[sel], nxt[sel]
            gram = a.T @ a
            if np.linalg.cond(gram) > 1e14:
                raise DegenerateDataError(f"singular Gram matrix for transition {k}")
            # minimizes sum |b - A a|^2: A = (b^T a) (a^T a)^-1
            alphas[k] = np.linalg.solve(gram, a.T @ b).T
            resid_ss += float(np.sum((b - a @ alphas[k].T) ** 2))
    sigma2 = resid_ss / (len(prev) * m)
    return ParFit(alphas, sigma2, counts, means, n // p)


def multiplier_estimate(fit: ParFit) -> MultiplierEstimate:
    """Product of the gains around one cycle.

    For matrix gains the eigenvalues of ``A_p ... A_1`` are returned in
    descending magnitude; a complex pair is reported by its real part and
    flagged.
    """
    if fit.is_scalar:
        return MultiplierEstimate(float(np.prod(fit.alphas)), fit.n_cycles)
    prod = np.eye(fit.alphas.shape[1])
    for a in fit.alphas:
        prod = a @ prod
    eig = np.linalg.eigvals(prod)
    eig = eig[np.argsort(-np.abs(eig), kind="stable")]
    flagged = bool(np.any(np.abs(eig.imag) > 0))
    return MultiplierEstimate(tuple(float(e) for e in eig.real), fit.n_cycles, flagged)
