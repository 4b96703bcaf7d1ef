"""Vector fields with analytic Jacobians, and the benchmark systems.

A :class:`SystemSpec` bundles a smooth autonomous field ``f``, its Jacobian
``Df`` and the named parameters used to build them.  Built-in systems are
registered by name so that configuration files and the command line can
refer to them.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from types import MappingProxyType
from typing import Callable, Mapping

import numba
import numpy as np

from .errors import InvalidParameterError

__all__ = [
    "SystemSpec",
    "make_van_der_pol",
    "make_lorenz",
    "make_system",
    "register_system",
    "system_names",
    "custom_system",
    "check_jacobian",
]


@dataclass(frozen=True)
class SystemSpec:
    """Immutable description of ``dx/dt = f(x)``.

    Parameters
    ----------
    name : str
        Registry name (``"vdp"``, ``"lorenz"`` or a user name).
    dim : int
        State dimension.
    params : mapping
        Named real parameters, read-only.
    field : callable
        ``field(x) -> ndarray`` of shape ``(dim,)``.
    jacobian : callable
        ``jacobian(x) -> ndarray`` of shape ``(dim, dim)``.
    kernel : callable, optional
        A numba-compiled ``kernel(x, theta) -> ndarray`` evaluating the same
        field, where ``theta`` is :attr:`theta`.  Used by the SDE simulator;
        systems without one fall back to a pure Python loop.
    """

    name: str
    dim: int
    params: Mapping[str, float]
    field: Callable[[np.ndarray], np.ndarray] = dataclasses.field(repr=False)
    jacobian: Callable[[np.ndarray], np.ndarray] = dataclasses.field(repr=False)
    kernel: Callable | None = dataclasses.field(default=None, repr=False, compare=False)
    theta: tuple = dataclasses.field(default=(), repr=False)

    def __post_init__(self):
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))

    def f(self, x):
        return self.field(np.asarray(x, dtype=float))

    def df(self, x):
        return self.jacobian(np.asarray(x, dtype=float))


# --- van der Pol -------------------------------------------------------------


@numba.njit(cache=True)
def _vdp_kernel(x, theta):
    eps, a = theta[0], theta[1]
    out = np.empty(2)
    out[0] = (x[1] - x[0] * x[0] * x[0] / 3.0 + x[0]) / eps
    out[1] = a - x[0]
    return out


def make_van_der_pol(epsilon: float = 0.1, a: float = 0.99) -> SystemSpec:
    """Relaxation oscillator ``eps*x' = y - x^3/3 + x``, ``y' = a - x``."""
    epsilon = float(epsilon)
    a = float(a)
    if epsilon == 0.0:
        raise InvalidParameterError("van der Pol epsilon must be nonzero")

    # same operation order as the compiled kernel, so both give identical paths
    def f(x):
        return np.array([(x[1] - x[0] * x[0] * x[0] / 3.0 + x[0]) / epsilon, a - x[0]])

    def df(x):
        return np.array([[(1.0 - x[0] ** 2) / epsilon, 1.0 / epsilon], [-1.0, 0.0]])

    return SystemSpec("vdp", 2, {"eps": epsilon, "a": a}, f, df,
                      kernel=_vdp_kernel, theta=(epsilon, a))


# --- Lorenz ------------------------------------------------------------------


@numba.njit(cache=True)
def _lorenz_kernel(x, theta):
    sigma, r, b = theta[0], theta[1], theta[2]
    out = np.empty(3)
    out[0] = sigma * (x[1] - x[0])
    out[1] = r * x[0] - x[1] - x[0] * x[2]
    out[2] = -b * x[2] + x[0] * x[1]
    return out


def make_lorenz(sigma: float = 10.0, r: float = 240.0, b: float = 8.0 / 3.0) -> SystemSpec:
    sigma, r, b = float(sigma), float(r), float(b)

    def f(x):
        return np.array([
            sigma * (x[1] - x[0]),
            r * x[0] - x[1] - x[0] * x[2],
            -b * x[2] + x[0] * x[1],
        ])

    def df(x):
        return np.array([
            [-sigma, sigma, 0.0],
            [r - x[2], -1.0, -x[0]],
            [x[1], x[0], -b],
        ])

    return SystemSpec("lorenz", 3, {"sigma": sigma, "r": r, "b": b}, f, df,
                      kernel=_lorenz_kernel, theta=(sigma, r, b))


# --- registry ----------------------------------------------------------------

_REGISTRY: dict[str, Callable[..., SystemSpec]] = {
    "vdp": lambda eps=0.1, a=0.99: make_van_der_pol(eps, a),
    "lorenz": make_lorenz,
}

# Parameter aliases accepted on the command line and in config files.
_ALIASES = {"vdp": {"epsilon": "eps"}, "lorenz": {}}


def register_system(name: str, factory: Callable[..., SystemSpec]) -> None:
    """Make ``factory(**params)`` available as ``make_system(name, ...)``."""
    if name in _REGISTRY:
        raise InvalidParameterError(f"system {name!r} already registered")
    _REGISTRY[name] = factory


def system_names() -> list[str]:
    return sorted(_REGISTRY)


def make_system(name: str, **params: float) -> SystemSpec:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown system {name!r}; known: {', '.join(system_names())}") from None
    aliases = _ALIASES.get(name, {})
    params = {aliases.get(k, k): float(v) for k, v in params.items()}
    try:
        return factory(**params)
    except TypeError as exc:
        raise InvalidParameterError(f"bad parameters for {name!r}: {exc}") from None


def custom_system(field, jacobian, dim: int, params: Mapping[str, float] | None = None,
                  name: str = "custom", kernel=None, theta=()) -> SystemSpec:
    """Wrap user callables as a :class:`SystemSpec`."""
    return SystemSpec(name, int(dim), dict(params or {}), field, jacobian, kernel, tuple(theta))


def check_jacobian(system: SystemSpec, x) -> float:
    """Largest componentwise relative error of ``Df`` against central differences."""
    x = np.asarray(x, dtype=float)
    jac = system.df(x)
    fd = np.empty_like(jac)
    for j in range(system.dim):
        h = 1e-6 * (1.0 + abs(x[j]))
        e = np.zeros(system.dim)
        e[j] = h
        fd[:, j] = (system.f(x + e) - system.f(x - e)) / (2.0 * h)
    scale = np.maximum(np.abs(jac), 1.0)
    return float(np.max(np.abs(fd - jac) / scale))
