import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from floquet_bound.crlb import (
    ParCoefficients,
    asymptotic_return_variance,
    coefficients_from_mode,
    continuum_bound,
    discrete_bound,
    fisher_information_diagonal,
)
from floquet_bound.errors import (
    DegenerateCoefficientError,
    InstabilityError,
    InvalidParameterError,
    NumericRangeError,
)
from floquet_bound.orbit import FloquetMode

from conftest import simulate_par


def uniform_mode(lam, n_grid=4097, tau=1.0):
    t = np.linspace(0.0, tau, n_grid)
    log_abs = t / tau * math.log(abs(lam))
    sign = np.ones(n_grid)
    if lam < 0:
        sign[t > tau / 2] = -1.0
    direction = np.tile([1.0, 0.0], (n_grid, 1))
    return FloquetMode(lam, np.array([1.0, 0.0]), tau, t, log_abs, sign, direction)


# --- return variance and information --------------------------------------


def test_return_variance_examples():
    assert asymptotic_return_variance(ParCoefficients((0.5,)), 0) == pytest.approx(4 / 3)
    assert asymptotic_return_variance(ParCoefficients((0.5, 0.8)), 0) == pytest.approx(
        1.0 / 0.84 * 1.64, rel=1e-14)
    assert asymptotic_return_variance(ParCoefficients((0.0, 0.0, 0.0), 2.5), 1) == 2.5


def test_return_variance_against_simulation():
    coeffs = ParCoefficients((0.5, 0.8))
    x = simulate_par(coeffs.alphas, 10**6, seed=11)
    for k in range(2):
        assert np.var(x[:, k]) == pytest.approx(asymptotic_return_variance(coeffs, k), rel=1e-2)


def test_fisher_examples():
    assert fisher_information_diagonal(ParCoefficients((0.5,))) == pytest.approx([4 / 3])
    c = ParCoefficients((0.5, 0.8))
    v0, v1 = (asymptotic_return_variance(c, k) for k in range(2))
    # alpha_1 regresses on section 0, alpha_2 on section 1
    assert fisher_information_diagonal(c) == pytest.approx([v0, v1])
    assert fisher_information_diagonal(ParCoefficients((0.5, 0.8), 4.0), 3) == pytest.approx(
        [3 * v0, 3 * v1])


def test_fisher_against_monte_carlo_curvature():
    # -d^2/dalpha_k^2 of the Gaussian log-likelihood is x_{k-1}^2 / sigma^2 per cycle
    alphas, sigma = (0.5, 0.8), 0.3
    x = simulate_par(alphas, 2 * 10**5, sigma=sigma, seed=5)
    curvature = [np.mean(x[:, 0] ** 2) / sigma**2, np.mean(x[:, 1] ** 2) / sigma**2]
    info = fisher_information_diagonal(ParCoefficients(alphas, sigma**2))
    np.testing.assert_allclose(info, curvature, rtol=2e-2)


def test_unstable_coefficients_rejected():
    with pytest.raises(InstabilityError):
        asymptotic_return_variance(ParCoefficients((2.0, 0.6)), 0)
    with pytest.raises(InstabilityError):
        discrete_bound(ParCoefficients((1.0,)))
    with pytest.raises(InvalidParameterError):
        ParCoefficients(())
    with pytest.raises(InvalidParameterError):
        ParCoefficients((0.5,), 0.0)


# --- discrete bound ---------------------------------------------------------


@pytest.mark.parametrize("lam", [0.1, 0.5, -0.5, 0.9])
def test_discrete_single_section(lam):
    assert discrete_bound(ParCoefficients((lam,))).value == pytest.approx(1 - lam**2, rel=1e-15)


def test_discrete_two_equal_sections():
    assert discrete_bound(ParCoefficients((0.7, 0.7))).value == pytest.approx(0.4998, rel=1e-12)


def test_discrete_explicit_information_inversion():
    a1, a2 = 0.5, 0.8
    c = ParCoefficients((a1, a2))
    info = np.diag(fisher_information_diagonal(c, 7))
    jac = np.array([a2, a1])  # d(a1 a2)/d(a1, a2)
    assert jac @ np.linalg.solve(info, jac) == pytest.approx(discrete_bound(c, 7).value, rel=1e-12)


@pytest.mark.parametrize("lam", [0.1, 0.5, 0.9])
@pytest.mark.parametrize("p", [1, 3, 50, 1250])
def test_discrete_equal_coefficients_closed_form(lam, p):
    c = ParCoefficients((lam ** (1.0 / p),) * p)
    expected = lam**2 * p * (lam ** (-2.0 / p) - 1)
    assert discrete_bound(c).value == pytest.approx(expected, rel=1e-9)


def test_discrete_equal_coefficients_limit():
    lam = 0.5
    limit = 2 * lam**2 * math.log(1 / lam)
    errs = [abs(discrete_bound(ParCoefficients((lam ** (1 / p),) * p)).value / limit - 1)
            for p in (10, 50, 250, 1250)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-2


def test_discrete_zero_alpha():
    with pytest.raises(DegenerateCoefficientError):
        discrete_bound(ParCoefficients((0.5, 0.0)))


def test_discrete_tiny_gains_do_not_underflow():
    # product ~1e-300 per cycle would underflow a naive evaluation of the inner sums
    c = ParCoefficients((1e-10,) * 30 + (1e290,))
    assert math.isfinite(discrete_bound(c).value)


stable_alphas = st.lists(st.floats(-1.5, 1.5).filter(lambda a: abs(a) > 0.05),
                         min_size=1, max_size=12)


@given(stable_alphas, st.integers(0, 11))
def test_discrete_cyclic_shift_invariance(alphas, shift):
    assume(abs(math.prod(alphas)) < 0.98)
    shift %= len(alphas)
    a = discrete_bound(ParCoefficients(alphas)).value
    b = discrete_bound(ParCoefficients(alphas[shift:] + alphas[:shift])).value
    assert b == pytest.approx(a, rel=1e-12)


@given(stable_alphas, st.integers(0, 11), st.integers(0, 11))
def test_discrete_sign_pair_invariance(alphas, i, j):
    assume(abs(math.prod(alphas)) < 0.98 and len(alphas) >= 2)
    i, j = i % len(alphas), j % len(alphas)
    assume(i != j)
    flipped = list(alphas)
    flipped[i], flipped[j] = -flipped[i], -flipped[j]
    a = discrete_bound(ParCoefficients(alphas)).value
    assert discrete_bound(ParCoefficients(flipped)).value == pytest.approx(a, rel=1e-13)


@given(stable_alphas, st.integers(1, 1000))
def test_discrete_equals_delta_method_with_diagonal_information(alphas, n):
    assume(abs(math.prod(alphas)) < 0.98)
    c = ParCoefficients(alphas)
    lam = c.lam
    info = fisher_information_diagonal(c, n)
    delta = sum((lam / a) ** 2 / i for a, i in zip(alphas, info))
    assert discrete_bound(c, n).value == pytest.approx(delta, rel=1e-9)


@given(stable_alphas)
def test_discrete_inverse_n_scaling(alphas):
    assume(abs(math.prod(alphas)) < 0.98)
    c = ParCoefficients(alphas)
    base = discrete_bound(c, 1).value
    for n in (10, 100):
        assert discrete_bound(c, n).value * n == pytest.approx(base, rel=1e-15)


# --- continuum bound --------------------------------------------------------


@pytest.mark.parametrize("lam", [0.1, 0.5, 0.9])
def test_continuum_uniform_contraction(lam):
    expected = 2 * lam**2 * math.log(1 / lam)
    assert continuum_bound(uniform_mode(lam)).value == pytest.approx(expected, rel=1e-8)
    assert continuum_bound(uniform_mode(lam), 4).value == pytest.approx(expected / 4, rel=1e-8)


def test_continuum_uniform_example_value():
    assert continuum_bound(uniform_mode(0.5)).value == pytest.approx(0.34657359, abs=1e-8)


def test_continuum_negative_lambda_uses_magnitude():
    assert continuum_bound(uniform_mode(-0.5)).value == pytest.approx(
        continuum_bound(uniform_mode(0.5)).value, rel=1e-12)


def test_continuum_independent_of_tau():
    a = continuum_bound(uniform_mode(0.3, tau=1.0)).value
    b = continuum_bound(uniform_mode(0.3, tau=7.5)).value
    assert b == pytest.approx(a, rel=1e-12)


def test_continuum_range_checks():
    with pytest.raises(NumericRangeError):
        continuum_bound(uniform_mode(1e-7))
    with pytest.raises(NumericRangeError):
        continuum_bound(uniform_mode(1.0 - 1e-12))
    with pytest.raises(InvalidParameterError):
        continuum_bound(uniform_mode(0.5), 0)
    with pytest.raises(InvalidParameterError):
        continuum_bound(uniform_mode(0.5), noise="cauchy")


def test_continuum_laplace_halves_bound(vdp_mode):
    g = continuum_bound(vdp_mode, 100).value
    assert continuum_bound(vdp_mode, 100, noise="laplace").value == pytest.approx(g / 2, rel=1e-15)


def test_continuum_exact_inverse_n(vdp_mode):
    vals = [continuum_bound(vdp_mode, n).value for n in (1, 10, 100)]
    assert vals[0] / vals[1] == pytest.approx(10, rel=1e-14)
    assert vals[0] / vals[2] == pytest.approx(100, rel=1e-14)


def test_continuum_mode_negation(vdp_mode, lorenz_modes):
    for mode in (vdp_mode, *lorenz_modes):
        assert continuum_bound(mode.negated()).value == continuum_bound(mode).value


def test_continuum_benchmark_values(vdp_mode, lorenz_modes):
    assert continuum_bound(vdp_mode, 100).sqrt == pytest.approx(0.0532, rel=0.02)
    assert continuum_bound(lorenz_modes[0], 100).sqrt == pytest.approx(0.0606, rel=0.05)
    assert continuum_bound(lorenz_modes[1], 100).sqrt == pytest.approx(0.0009, rel=0.05)


def test_continuum_grid_refinement_synthetic():
    # a non-uniform phi: log|phi| = t log(lam) + 0.4 sin(2 pi t)
    def mode(n):
        m = uniform_mode(0.4, n)
        return FloquetMode(m.lam, m.eigvec, m.tau, m.t, m.log_abs + 0.4 * np.sin(2 * np.pi * m.t),
                           m.sign, m.direction)

    a, b = continuum_bound(mode(2049)).value, continuum_bound(mode(4097)).value
    assert abs(a / b - 1) < 1e-6


def test_discrete_converges_to_continuum(vdp_mode):
    cont = continuum_bound(vdp_mode).value
    errs = [abs(discrete_bound(coefficients_from_mode(vdp_mode, p)).value / cont - 1)
            for p in (10, 50, 250, 1250)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-2


@pytest.mark.parametrize("p", [1, 7, 45, 50])
def test_coefficients_from_mode_product(vdp_mode, lorenz_modes, p):
    for mode in (vdp_mode, *lorenz_modes):
        assert coefficients_from_mode(mode, p).lam == pytest.approx(mode.lam, rel=1e-9)


def test_coefficients_uniform_mode():
    c = coefficients_from_mode(uniform_mode(0.25), 8)
    np.testing.assert_allclose(c.alphas, 0.25 ** (1 / 8), rtol=1e-12)
