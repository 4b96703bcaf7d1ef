"""Stable periodic orbits, Floquet multipliers and scalar mode restrictions.

The orbit is located by relaxing a guess onto the attractor and then running
Newton's method on the return map to a hyperplane through the relaxed point,
with derivatives from the variational equation.  The converged orbit is
re-anchored at the point of maximum speed ``|f|``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import brentq, minimize_scalar

from .dynsys import SystemSpec, make_system
from .errors import (
    InvalidParameterError,
    NoReturnError,
    NumericRangeError,
    OrbitNotFoundError,
    UnsupportedSpectrumError,
)
from .integrate import (
    RENORM_HIGH,
    RENORM_LOW,
    Trajectory,
    VariationalSolution,
    dopri5,
    integrate,
    integrate_variational,
)

__all__ = [
    "PeriodicOrbit",
    "FloquetMode",
    "Multipliers",
    "find_periodic_orbit",
    "orbit_from_anchor",
    "floquet_multipliers",
    "eigenvalues_closed_form",
    "mode_restriction",
    "nontrivial_modes",
    "write_orbit_record",
    "read_orbit_record",
    "OrbitRecord",
    "DEFAULT_N_GRID",
]

DEFAULT_N_GRID = 4096
ORBIT_TOL = 1e-12
RELAX_PERIODS = 20


@dataclass(frozen=True)
class PeriodicOrbit:
    """A periodic orbit ``gamma`` with ``gamma(0) = anchor``.

    ``variational`` holds the state over one period together with the
    principal solution matrix, so ``variational.monodromy`` is ``Phi(tau)``.
    """

    system: SystemSpec
    tau: float
    anchor: np.ndarray
    variational: VariationalSolution
    residual: float = 0.0

    @property
    def trajectory(self) -> Trajectory:
        return self.variational.trajectory

    @property
    def monodromy(self) -> np.ndarray:
        return self.variational.monodromy

    @property
    def dim(self) -> int:
        return self.system.dim

    def __call__(self, t):
        """``gamma(t)``, extended periodically."""
        return self.trajectory(np.mod(t, self.tau) if np.ndim(t) else float(t) % self.tau)

    def trace_integral(self, n: int = 20001) -> float:
        """Simpson quadrature of ``tr Df`` along the orbit over one period."""
        ts, xs = self.trajectory.sample(n)
        tr = np.array([np.trace(self.system.df(x)) for x in xs])
        return float(simpson(tr, x=ts))


class Multipliers(NamedTuple):
    trivial: float
    nontrivial: tuple


@dataclass(frozen=True)
class FloquetMode:
    """Scalar restriction ``phi`` of the flow to one real Floquet mode.

    ``t`` is an equispaced grid starting at 0; ``log_abs`` and ``sign`` give
    ``phi`` on it and ``direction`` the unit mode vector ``xi/|xi|``.  The
    sign is measured against the first-period direction field, so
    ``phi(t + tau) = lam * phi(t)`` holds on grids covering several periods.
    """

    lam: float
    eigvec: np.ndarray
    tau: float
    t: np.ndarray
    log_abs: np.ndarray
    sign: np.ndarray
    direction: np.ndarray

    @property
    def n_grid(self) -> int:
        return len(self.t)

    @property
    def values(self) -> np.ndarray:
        return self.sign * np.exp(self.log_abs)

    def negated(self) -> "FloquetMode":
        """The same mode traced with ``-v``: ``phi`` and the direction flip sign."""
        return FloquetMode(self.lam, -self.eigvec, self.tau, self.t, self.log_abs,
                           -self.sign, -self.direction)


# --- shooting ----------------------------------------------------------------


def _first_return(system, x0, normal, t_guess, tol, t_min_frac=0.25, max_factor=4.0):
    """Time of the first upward crossing of the hyperplane through ``x0``."""
    t_span = 1.5 * t_guess
    while True:
        traj = integrate(system, x0, t_span, tol)
        ts, xs = traj.sample(max(2000, 4 * len(traj.t)))
        s = (xs - x0) @ normal
        start = np.searchsorted(ts, t_min_frac * t_guess)
        ups = np.nonzero((s[start:-1] < 0) & (s[start + 1:] >= 0))[0]
        if len(ups):
            j = ups[0] + start
            fn = lambda t: float((traj(t) - x0) @ normal)
            return brentq(fn, ts[j], ts[j + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps), traj
        if t_span >= max_factor * t_guess:
            raise NoReturnError(f"no return to the section within {t_span:.4g} time units")
        t_span *= 2.0


def _newton(system, x, T, tol, int_tol, max_iter=25):
    normal = system.f(x)
    normal = normal / np.linalg.norm(normal)
    d = system.dim
    residual = np.inf
    for _ in range(max_iter):
        sol = integrate_variational(system, x, T, int_tol)
        xT = sol.trajectory.y[-1]
        r = xT - x
        residual = float(np.linalg.norm(r))
        if residual < tol:
            return x, T, sol, residual
        jac = np.zeros((d + 1, d + 1))
        jac[:d, :d] = sol.monodromy - np.eye(d)
        jac[:d, d] = system.f(xT)
        jac[d, :d] = normal
        rhs = np.concatenate([-r, [0.0]])
        try:
            delta = np.linalg.solve(jac, rhs)
        except np.linalg.LinAlgError:
            raise OrbitNotFoundError("singular shooting Jacobian") from None
        # damp wild steps so the return time stays positive
        step = 1.0
        while T + step * delta[d] <= 0.1 * T:
            step *= 0.5
        x = x + step * delta[:d]
        T = T + step * delta[d]
    raise OrbitNotFoundError(f"Newton did not converge (residual {residual:.3g})")


def _max_speed_time(system, traj, tau):
    ts, xs = traj.sample(20001, 0.0, tau)
    speed = np.array([np.linalg.norm(system.f(x)) for x in xs])
    j = int(np.argmax(speed))
    lo, hi = ts[max(j - 1, 0)], ts[min(j + 1, len(ts) - 1)]
    res = minimize_scalar(lambda t: -np.linalg.norm(system.f(traj(t))), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-12})
    return float(res.x)


def find_periodic_orbit(system: SystemSpec, guess, guess_period: float,
                        tol: float = 1e-10, relax_periods: int = RELAX_PERIODS) -> PeriodicOrbit:
    """Locate the stable limit cycle attracting ``guess``.

    Parameters
    ----------
    system : SystemSpec
    guess : array_like
        A state in the basin of the cycle.
    guess_period : float
        Rough period, within a factor of two.
    tol : float
        Required shooting residual ``|flow(anchor, tau) - anchor|``.

    Raises
    ------
    OrbitNotFoundError
        Newton's method does not converge.
    NoReturnError
        No return to the section could be found.
    """
    if guess_period <= 0:
        raise InvalidParameterError("guess_period must be positive")
    int_tol = min(ORBIT_TOL, max(tol * 1e-2, 1e-13))
    x = np.asarray(guess, dtype=float)
    relaxed = integrate(system, x, relax_periods * guess_period, 1e-8)
    x = relaxed.y[-1]
    if not np.all(np.isfinite(x)):
        raise OrbitNotFoundError("relaxation diverged")
    normal = system.f(x)
    normal /= np.linalg.norm(normal)
    T, _ = _first_return(system, x, normal, guess_period, 1e-9)
    x, T, sol, _ = _newton(system, x, T, max(tol, 1e-8), int_tol)
    # re-anchor at maximum speed and polish
    t_star = _max_speed_time(system, sol.trajectory, T)
    anchor = sol.trajectory(t_star)
    anchor, T, sol, residual = _newton(system, anchor, T, tol, int_tol)
    normal = system.f(anchor)
    normal /= np.linalg.norm(normal)
    T_ret, _ = _first_return(system, anchor, normal, T, int_tol)
    if abs(T_ret - T) > 1e-6 * T:
        raise OrbitNotFoundError(f"converged time {T:.10g} is not the first return ({T_ret:.10g})")
    return PeriodicOrbit(system, float(T), anchor.copy(), sol, residual)


def orbit_from_anchor(system: SystemSpec, anchor, tau: float, tol: float = ORBIT_TOL) -> PeriodicOrbit:
    """Rebuild a :class:`PeriodicOrbit` from a known anchor and period without shooting."""
    anchor = np.asarray(anchor, dtype=float)
    sol = integrate_variational(system, anchor, tau, tol)
    residual = float(np.linalg.norm(sol.trajectory.y[-1] - anchor))
    return PeriodicOrbit(system, float(tau), anchor, sol, residual)


# --- multipliers -------------------------------------------------------------


def _polish(coeffs, root, iters=3):
    dcoeffs = np.polyder(coeffs)
    for _ in range(iters):
        d = np.polyval(dcoeffs, root)
        if d == 0:
            break
        root = root - np.polyval(coeffs, root) / d
    return root


def eigenvalues_closed_form(m) -> list:
    """Eigenvalues of a 2x2 or 3x3 matrix from its characteristic polynomial.

    Real roots are returned as floats, complex ones as complex numbers.
    """
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    if m.shape != (n, n) or n not in (2, 3):
        raise ValueError("closed-form eigenvalues need a 2x2 or 3x3 matrix")
    if n == 2:
        tr = m[0, 0] + m[1, 1]
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        disc = (0.5 * (m[0, 0] - m[1, 1])) ** 2 + m[0, 1] * m[1, 0]
        if disc < 0:
            s = cmath.sqrt(disc)
            return [0.5 * tr + s, 0.5 * tr - s]
        # cancellation-free pair
        big = 0.5 * tr + math.copysign(math.sqrt(disc), tr if tr != 0 else 1.0)
        small = det / big if big != 0 else 0.5 * tr - math.sqrt(disc)
        return [big, small]
    c2 = np.trace(m)
    c1 = (m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0] + m[0, 0] * m[2, 2] - m[0, 2] * m[2, 0]
          + m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
    c0 = np.linalg.det(m)
    coeffs = np.array([1.0, -c2, c1, -c0])
    # depressed cubic t^3 + p t + q with lambda = t + c2/3
    shift = c2 / 3.0
    p = c1 - c2 * c2 / 3.0
    q = -2.0 * c2**3 / 27.0 + c2 * c1 / 3.0 - c0
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if disc <= 0 and p < 0:
        r = 2.0 * math.sqrt(-p / 3.0)
        arg = max(-1.0, min(1.0, 3.0 * q / (p * r)))
        phi = math.acos(arg) / 3.0
        roots = [r * math.cos(phi - 2.0 * math.pi * k / 3.0) + shift for k in range(3)]
        return [float(_polish(coeffs, x)) for x in roots]
    if p == 0 and q == 0:
        return [shift] * 3
    sq = math.sqrt(max(disc, 0.0))
    u = np.cbrt(-q / 2.0 + sq)
    v = np.cbrt(-q / 2.0 - sq)
    real = float(_polish(coeffs, u + v + shift))
    # remaining pair from deflation
    b = real - c2
    c = c0 / real if real != 0 else c1 - real * b
    d2 = b * b - 4.0 * c
    if d2 < 0:
        s = cmath.sqrt(d2)
        return [real, (-b + s) / 2.0, (-b - s) / 2.0]
    s = math.sqrt(d2)
    return [real, float(_polish(coeffs, (-b + s) / 2.0)), float(_polish(coeffs, (-b - s) / 2.0))]


def _multipliers_of(monodromy) -> Multipliers:
    eig = eigenvalues_closed_form(monodromy)
    j = int(np.argmin([abs(e - 1.0) for e in eig]))
    trivial = eig[j]
    rest = [e for i, e in enumerate(eig) if i != j]
    if isinstance(trivial, complex) or any(isinstance(e, complex) for e in rest):
        raise UnsupportedSpectrumError(f"complex multipliers {eig}")
    vals = [trivial] + rest
    for i in range(len(vals)):
        for k in range(i + 1, len(vals)):
            if abs(vals[i] - vals[k]) <= 1e-8 * max(1.0, abs(vals[i])):
                raise UnsupportedSpectrumError(f"repeated multipliers {eig}")
    rest.sort(key=lambda e: -abs(e))
    return Multipliers(float(trivial), tuple(float(e) for e in rest))


def floquet_multipliers(orbit) -> Multipliers:
    """Trivial multiplier (nearest 1) and the nontrivial ones by descending magnitude.

    Accepts a :class:`PeriodicOrbit` or a bare monodromy matrix.

    Raises
    ------
    UnsupportedSpectrumError
        If a multiplier is complex or two multipliers coincide.
    """
    m = orbit.monodromy if isinstance(orbit, PeriodicOrbit) else np.asarray(orbit, dtype=float)
    return _multipliers_of(m)


# --- mode restriction --------------------------------------------------------


def _eigvec(m, lam):
    d = m.shape[0]
    _, _, vt = np.linalg.svd(m - lam * np.eye(d))
    v = vt[-1]
    v = v / np.linalg.norm(v)
    return v if v[np.argmax(np.abs(v))] > 0 else -v


def _integrate_mode(system, x0, v, t_end, tol):
    d = system.dim
    field, jac = system.field, system.jacobian
    acc = [0.0]
    accs = [0.0]

    def rhs(y):
        return np.concatenate([field(y[:d]), jac(y[:d]) @ y[d:]])

    def renormalize(y):
        nrm = np.linalg.norm(y[d:])
        if nrm < RENORM_LOW or nrm > RENORM_HIGH:
            y = y.copy()
            y[d:] /= nrm
            acc[0] += math.log(nrm)
        accs.append(acc[0])
        return y

    y0 = np.concatenate([x0, v])
    t, y, q = dopri5(rhs, y0, t_end, tol, n_ctrl=d, post_step=renormalize)
    return t, y[:, d:], q[:, d:, :], np.array(accs)


def mode_restriction(orbit: PeriodicOrbit, lam: float, n_grid: int = DEFAULT_N_GRID,
                     periods: int = 1, tol: float = ORBIT_TOL) -> FloquetMode:
    """Restrict the linearized flow to the Floquet mode of multiplier ``lam``.

    ``xi(t) = Phi(t) v`` is integrated from the unit eigenvector ``v`` and
    ``phi(t) = +-|xi(t)|`` is sampled on ``n_grid`` equispaced points per
    period, so ``phi(0) = 1`` and ``phi(tau) = lam``.

    Raises
    ------
    NumericRangeError
        If ``|xi|`` leaves the representable range or ``lam`` is not a
        stable nontrivial multiplier.
    """
    if not (0 < abs(lam) < 1):
        raise NumericRangeError(f"mode restriction needs 0 < |lambda| < 1, got {lam}")
    if n_grid < 3:
        raise InvalidParameterError("n_grid must be at least 3")
    tau = orbit.tau
    v = _eigvec(orbit.monodromy, lam)
    t_end = periods * tau
    ts, xi, q, acc = _integrate_mode(orbit.system, orbit.anchor, v, t_end, tol)
    n_total = (n_grid - 1) * periods + 1
    grid = np.linspace(0.0, t_end, n_total)
    idx = np.clip(np.searchsorted(ts, grid, side="right") - 1, 0, len(ts) - 2)
    theta = (grid - ts[idx]) / (ts[idx + 1] - ts[idx])
    powers = np.stack([theta, theta**2, theta**3, theta**4], axis=-1)
    vec = xi[idx] + np.einsum("nmk,nk->nm", q[idx], powers)
    exact = grid == ts[idx]
    vec[exact] = xi[idx[exact]]
    nrm = np.linalg.norm(vec, axis=1)
    if np.any(nrm == 0) or not np.all(np.isfinite(nrm)):
        raise NumericRangeError("mode vector left the representable range")
    # within a step the log scale is the one in force at its start
    log_abs = np.log(nrm) + acc[idx]
    direction = vec / nrm[:, None]
    if np.any(np.einsum("ij,ij->i", direction[1:], direction[:-1]) <= 0):
        raise InvalidParameterError("grid too coarse: mode direction turns more than 90 degrees per step")
    # sign against the first-period direction field, extended periodically
    period_of = np.minimum(np.arange(n_total) // (n_grid - 1), periods)
    ref = np.arange(n_total) - period_of * (n_grid - 1)
    dots = np.einsum("ij,ij->i", direction, direction[ref])
    sign = np.where(dots < 0, -1.0, 1.0)
    log_abs = log_abs - log_abs[0]
    return FloquetMode(float(lam), v, float(tau), grid, log_abs, sign, direction)


def nontrivial_modes(orbit: PeriodicOrbit, n_grid: int = DEFAULT_N_GRID) -> list:
    """One :class:`FloquetMode` per nontrivial multiplier."""
    mult = floquet_multipliers(orbit)
    return [mode_restriction(orbit, lam, n_grid) for lam in mult.nontrivial]


# --- orbit record ------------------------------------------------------------

_RECORD_HEADER = "# floquet-bound orbit record v1"


@dataclass(frozen=True)
class OrbitRecord:
    system_name: str
    params: dict
    tau: float
    anchor: np.ndarray
    trivial: float
    modes: list

    def system(self) -> SystemSpec:
        return make_system(self.system_name, **self.params)

    def orbit(self, tol: float = ORBIT_TOL) -> PeriodicOrbit:
        return orbit_from_anchor(self.system(), self.anchor, self.tau, tol)

    @property
    def multipliers(self) -> list:
        return [m.lam for m in self.modes]


def write_orbit_record(path, orbit: PeriodicOrbit, modes: list) -> None:
    """Plain-text record: header lines, then one ``t log|phi| sign`` table per mode."""
    mult = floquet_multipliers(orbit)
    with open(path, "w") as fh:
        fh.write(_RECORD_HEADER + "\n")
        fh.write(f"system {orbit.system.name}\n")
        for k, v in orbit.system.params.items():
            fh.write(f"param {k} {v!r}\n")
        fh.write(f"tau {orbit.tau!r}\n")
        fh.write("anchor " + " ".join(repr(float(a)) for a in orbit.anchor) + "\n")
        fh.write(f"trivial {mult.trivial!r}\n")
        fh.write("multipliers " + " ".join(repr(m) for m in mult.nontrivial) + "\n")
        for i, mode in enumerate(modes):
            fh.write(f"mode {i} lambda {mode.lam!r} n_grid {mode.n_grid}\n")
            fh.write("eigvec " + " ".join(repr(float(a)) for a in mode.eigvec) + "\n")
            fh.write("# t log_abs_phi sign dir...\n")
            for j in range(mode.n_grid):
                row = [mode.t[j], mode.log_abs[j], mode.sign[j], *mode.direction[j]]
                fh.write(" ".join(repr(float(a)) for a in row) + "\n")
            fh.write("end\n")


def read_orbit_record(path) -> OrbitRecord:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != _RECORD_HEADER:
        raise ValueError(f"{path}: not an orbit record")
    params, modes = {}, []
    name = tau = anchor = trivial = None
    i = 1
    while i < len(lines):
        parts = lines[i].split()
        i += 1
        if not parts or parts[0].startswith("#"):
            continue
        key = parts[0]
        if key == "system":
            name = parts[1]
        elif key == "param":
            params[parts[1]] = float(parts[2])
        elif key == "tau":
            tau = float(parts[1])
        elif key == "anchor":
            anchor = np.array([float(p) for p in parts[1:]])
        elif key == "trivial":
            trivial = float(parts[1])
        elif key == "multipliers":
            pass
        elif key == "mode":
            lam, n = float(parts[3]), int(parts[5])
            eigvec = np.array([float(p) for p in lines[i].split()[1:]])
            i += 2
            table = np.array([[float(p) for p in lines[i + j].split()] for j in range(n)])
            i += n
            if lines[i].strip() != "end":
                raise ValueError(f"{path}: malformed mode table")
            i += 1
            modes.append(FloquetMode(lam, eigvec, tau, table[:, 0], table[:, 1], table[:, 2],
                                     table[:, 3:]))
        else:
            raise ValueError(f"{path}: unknown record key {key!r}")
    if name is None or tau is None or anchor is None:
        raise ValueError(f"{path}: incomplete orbit record")
    return OrbitRecord(name, params, tau, anchor, trivial, modes)
