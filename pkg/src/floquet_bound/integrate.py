"""Adaptive Dormand-Prince 5(4) integration with dense output.

Two entry points are provided.  :func:`integrate` advances the state only;
:func:`integrate_variational` advances the state together with the principal
solution matrix of the variational equation ``dPhi/dt = Df(x(t)) Phi``.  Both
use the same step-size controller driven by the state components alone, so
the two produce the same step sequence for the same inputs.

The matrix is stored in factored form, ``Phi = F @ diag(exp(c))``, where the
columns of ``F`` are kept within ``[1e-8, 1e8]`` in norm and ``c`` collects the
log-magnitude removed during renormalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynsys import SystemSpec
from .errors import IntegrationFailure, InvalidParameterError

__all__ = ["Trajectory", "VariationalSolution", "dopri5", "integrate", "integrate_variational"]

# Dormand-Prince tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# difference between the 5th and embedded 4th order weights (7 stages, FSAL)
_E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# Shampine's 4th order continuous extension; y(t + th*h) = y + h K^T P [th, th^2, th^3, th^4]
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_SAFETY = 0.9
_FAC_MIN = 0.2
_FAC_MAX = 10.0
_BETA = 0.04  # PI stabilization
_ALPHA = 0.2 - 0.75 * _BETA

RENORM_LOW = 1e-8
RENORM_HIGH = 1e8


@dataclass(frozen=True)
class Trajectory:
    """Accepted integration steps plus their interpolants.

    ``y[i]`` is the state at ``t[i]``; ``coeffs[i]`` holds ``h K^T P`` for the
    step ``[t[i], t[i+1]]`` so that the interpolant is a quartic in the
    normalized step time.
    """

    t: np.ndarray
    y: np.ndarray
    coeffs: np.ndarray

    @property
    def t_start(self) -> float:
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    @property
    def dim(self) -> int:
        return self.y.shape[1]

    def _locate(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t[0]) or np.any(t > self.t[-1]):
            raise ValueError(f"t outside [{self.t[0]}, {self.t[-1]}]")
        idx = np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, len(self.t) - 2)
        h = self.t[idx + 1] - self.t[idx]
        theta = (t - self.t[idx]) / h
        return t, idx, theta

    def __call__(self, t):
        """Evaluate the dense output at scalar or array ``t``."""
        t, idx, theta = self._locate(t)
        powers = np.stack([theta, theta**2, theta**3, theta**4], axis=-1)
        out = self.y[idx] + np.einsum("...mk,...k->...m", self.coeffs[idx], powers)
        # sample times reproduce the stored states exactly
        exact = t == self.t[idx]
        if np.ndim(t) == 0:
            return self.y[idx].copy() if exact else out
        out[exact] = self.y[idx[exact]]
        return out

    def sample(self, n: int, t0: float | None = None, t1: float | None = None):
        """``n`` equispaced times on ``[t0, t1]`` and the interpolated states."""
        t0 = self.t_start if t0 is None else t0
        t1 = self.t_end if t1 is None else t1
        ts = np.linspace(t0, t1, n)
        return ts, self(ts)


@dataclass(frozen=True)
class VariationalSolution:
    """State trajectory with the principal solution matrix in factored form.

    Attributes
    ----------
    trajectory : Trajectory
        The state part.
    frames : ndarray, shape (n, d, d)
        Unit-scale columns of ``Phi`` at each sample time.
    log_scale : ndarray, shape (n, d)
        Per-column log-magnitudes; ``Phi[i] = frames[i] * exp(log_scale[i])``.
    """

    trajectory: Trajectory
    frames: np.ndarray
    log_scale: np.ndarray
    _frame_coeffs: np.ndarray

    @property
    def t(self):
        return self.trajectory.t

    def phi(self, i: int = -1) -> np.ndarray:
        """``Phi`` at sample index ``i`` (may overflow for long integrations)."""
        return self.frames[i] * np.exp(self.log_scale[i])[None, :]

    @property
    def monodromy(self) -> np.ndarray:
        return self.phi(-1)

    def log_det(self, i: int = -1) -> float:
        sign, logabs = np.linalg.slogdet(self.frames[i])
        if sign == 0:
            return -np.inf
        return float(logabs + self.log_scale[i].sum())

    def phi_at(self, t: float) -> np.ndarray:
        """Dense evaluation of ``Phi(t)``."""
        t, idx, theta = self.trajectory._locate(t)
        d = self.frames.shape[1]
        if t == self.t[idx]:
            return self.phi(int(idx))
        powers = np.array([theta, theta**2, theta**3, theta**4])
        flat = self.frames[idx].ravel() + self._frame_coeffs[idx] @ powers
        # within a step the scale is the one in force at its start
        return flat.reshape(d, d) * np.exp(self.log_scale[idx])[None, :]


def _check_args(t_end, tol):
    if not (1e-14 <= tol <= 1e-3):
        raise InvalidParameterError(f"tol must lie in [1e-14, 1e-3], got {tol}")
    if not t_end > 0:
        raise InvalidParameterError(f"t_end must be positive, got {t_end}")


def _rms(v):
    return float(np.sqrt(np.mean(v * v)))


def _comb(coefs, K):
    # fixed summation order, so each column's result does not depend on the
    # array width (BLAS products do); keeps the state part of an augmented
    # system bit-identical to a plain run
    acc = coefs[0] * K[0]
    for c, k in zip(coefs[1:], K[1:]):
        if c != 0.0:
            acc = acc + c * k
    return acc


def _initial_step(rhs, y0, f0, n_ctrl, tol):
    scale = tol + tol * np.abs(y0[:n_ctrl])
    d0 = _rms(y0[:n_ctrl] / scale)
    d1 = _rms(f0[:n_ctrl] / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    f1 = rhs(y0 + h0 * f0)
    d2 = _rms((f1 - f0)[:n_ctrl] / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1)


def dopri5(rhs, y0, t_end, tol, n_ctrl=None, post_step=None, max_steps=10_000_000):
    """Integrate ``y' = rhs(y)`` on ``[0, t_end]``.

    Parameters
    ----------
    rhs : callable
        Autonomous right-hand side.
    y0 : array_like
        Initial value.
    t_end : float
        Final time (> 0).
    tol : float
        Used as both relative and absolute tolerance.
    n_ctrl : int, optional
        Only the first ``n_ctrl`` components enter the error norm.
    post_step : callable, optional
        ``post_step(y) -> y`` applied after every accepted step (used for
        renormalization).  It must not change the first ``n_ctrl`` entries.

    Returns
    -------
    t, y, coeffs : ndarray
        Sample times, samples, and dense-output coefficients per step.
    """
    y = np.array(y0, dtype=float)
    n_ctrl = y.size if n_ctrl is None else n_ctrl
    f = rhs(y)
    h = _initial_step(rhs, y, f, n_ctrl, tol)
    t = 0.0
    ts, ys, qs = [0.0], [y.copy()], []
    err_prev = 1e-4
    K = np.empty((7, y.size))
    steps = 0
    while t < t_end:
        if steps >= max_steps:
            raise IntegrationFailure("maximum number of steps exceeded", t)
        h_min = 16 * np.finfo(float).eps * max(abs(t), 1.0)
        if h < h_min:
            raise IntegrationFailure("step size underflow", t)
        last = t + h >= t_end or t + 1.01 * h >= t_end
        if last:
            h = t_end - t
        K[0] = f
        for s in range(1, 6):
            K[s] = rhs(y + h * _comb(_A[s], K[:s]))
        y_new = y + h * _comb(_B, K[:6])
        f_new = rhs(y_new)
        K[6] = f_new
        err_vec = h * _comb(_E, K)
        scale = tol + tol * np.maximum(np.abs(y[:n_ctrl]), np.abs(y_new[:n_ctrl]))
        err = _rms(err_vec[:n_ctrl] / scale)
        if err <= 1.0:
            steps += 1
            qs.append(h * np.stack([_comb(_P[:, j], K) for j in range(_P.shape[1])], axis=-1))
            t = t_end if last else t + h
            if post_step is not None:
                y_new = post_step(y_new)
                f_new = rhs(y_new)
            y, f = y_new, f_new
            ts.append(t)
            ys.append(y.copy())
            err = max(err, 1e-10)
            fac = _SAFETY * err**-_ALPHA * err_prev**_BETA
            h *= min(_FAC_MAX, max(_FAC_MIN, fac))
            err_prev = err
        else:
            h *= max(_FAC_MIN, _SAFETY * err**-0.2)
    return np.array(ts), np.array(ys), np.array(qs)


def integrate(system: SystemSpec, x0, t_end: float, tol: float = 1e-8) -> Trajectory:
    """Integrate the noise-free system from ``x0`` over ``[0, t_end]``."""
    _check_args(t_end, tol)
    t, y, q = dopri5(system.field, np.asarray(x0, dtype=float), t_end, tol)
    return Trajectory(t, y, q)


def integrate_variational(system: SystemSpec, x0, t_end: float,
                          tol: float = 1e-10) -> VariationalSolution:
    """Integrate the state and the principal solution matrix together.

    ``Phi(0)`` is the identity.  The step sequence is identical to the one
    :func:`integrate` takes with the same arguments.
    """
    _check_args(t_end, tol)
    d = system.dim
    field, jac = system.field, system.jacobian
    log_scale = np.zeros(d)
    scales = [log_scale.copy()]

    def rhs(y):
        x = y[:d]
        m = y[d:].reshape(d, d)
        return np.concatenate([field(x), (jac(x) @ m).ravel()])

    def renormalize(y):
        m = y[d:].reshape(d, d)
        norms = np.linalg.norm(m, axis=0)
        bad = (norms < RENORM_LOW) | (norms > RENORM_HIGH)
        if np.any(bad):
            y = y.copy()
            m = y[d:].reshape(d, d)
            m[:, bad] /= norms[bad]
            log_scale[bad] += np.log(norms[bad])
        scales.append(log_scale.copy())
        return y

    y0 = np.concatenate([np.asarray(x0, dtype=float), np.eye(d).ravel()])
    t, y, q = dopri5(rhs, y0, t_end, tol, n_ctrl=d, post_step=renormalize)
    traj = Trajectory(t, y[:, :d].copy(), q[:, :d, :].copy())
    return VariationalSolution(traj, y[:, d:].reshape(-1, d, d).copy(),
                               np.array(scales), q[:, d:, :].copy())
