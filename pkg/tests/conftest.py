import math

import numpy as np
import pytest
from hypothesis import settings

from floquet_bound.dynsys import custom_system, make_lorenz, make_van_der_pol
from floquet_bound.orbit import find_periodic_orbit, floquet_multipliers, mode_restriction

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


KAPPA = 0.05


def radial_system(kappa=KAPPA):
    """Unit-circle limit cycle with r' = kappa r (1 - r^2), theta' = 1.

    Period 2 pi; the radial perturbation decays at rate 2 kappa, so the
    nontrivial multiplier is exp(-4 pi kappa) and phi(t) = lambda^(t / tau).
    """
    def field(x):
        s = kappa * (1.0 - x[0] ** 2 - x[1] ** 2)
        return np.array([s * x[0] - x[1], s * x[1] + x[0]])

    def jac(x):
        s = kappa * (1.0 - x[0] ** 2 - x[1] ** 2)
        return np.array([[s - 2 * kappa * x[0] ** 2, -2 * kappa * x[0] * x[1] - 1.0],
                         [-2 * kappa * x[0] * x[1] + 1.0, s - 2 * kappa * x[1] ** 2]])

    return custom_system(field, jac, 2, params={"kappa": kappa}, name="radial")


def radial_lambda(kappa):
    return math.exp(-4.0 * math.pi * kappa)


def radial_path(r0, n_steps, dt, theta0=0.0):
    """Closed-form solution of the radial system, sampled at j dt, j = 1..n_steps."""
    t = dt * np.arange(1, n_steps + 1)
    c = 1.0 / r0**2 - 1.0
    r = 1.0 / np.sqrt(1.0 + c * np.exp(-2 * KAPPA * t))
    th = theta0 + t
    return np.column_stack([r * np.cos(th), r * np.sin(th)])


def anchor_angle(orbit):
    return math.atan2(orbit.anchor[1], orbit.anchor[0])


def simulate_par(alphas, n_cycles, sigma=1.0, seed=0):
    """Direct PAR recursion; returns an (n_cycles, p) array of section values."""
    p = len(alphas)
    eps = np.random.default_rng(seed).normal(scale=sigma, size=(n_cycles + 50) * p)
    x = np.empty_like(eps)
    prev = 0.0
    for i in range(len(eps)):
        # alphas[k - 1] maps section k - 1 to section k
        prev = alphas[(i - 1) % p] * prev + eps[i]
        x[i] = prev
    return x[50 * p:].reshape(n_cycles, p)


@pytest.fixture(scope="session")
def vdp():
    return make_van_der_pol()


@pytest.fixture(scope="session")
def lorenz():
    return make_lorenz()


@pytest.fixture(scope="session")
def vdp_orbit(vdp):
    return find_periodic_orbit(vdp, (1.0, 0.0), 2.0)


@pytest.fixture(scope="session")
def lorenz_orbit(lorenz):
    return find_periodic_orbit(lorenz, (-10.0, -10.0, 200.0), 0.5)


@pytest.fixture(scope="session")
def vdp_mode(vdp_orbit):
    lam = floquet_multipliers(vdp_orbit).nontrivial[0]
    return mode_restriction(vdp_orbit, lam)


@pytest.fixture(scope="session")
def lorenz_modes(lorenz_orbit):
    return [mode_restriction(lorenz_orbit, lam)
            for lam in floquet_multipliers(lorenz_orbit).nontrivial]


@pytest.fixture(scope="session")
def radial_orbit():
    return find_periodic_orbit(radial_system(KAPPA), (1.2, 0.0), 6.0)


# PASS/FAIL lines from the acceptance suite, repeated after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
