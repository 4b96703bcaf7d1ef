"""Cramer-Rao bounds on Floquet multiplier estimates from noisy limit cycles.

Pipeline: locate a stable periodic orbit (``orbit``), evaluate the bound on
its nontrivial multipliers (``crlb``), simulate noisy paths and record their
section crossings (``stochsim``), fit periodic autoregressive models to the
crossings (``estimate``), and compare the spread of the estimates with the
bound over many realizations (``experiment``).
"""

from .crlb import (
    BoundResult,
    ParCoefficients,
    asymptotic_return_variance,
    coefficients_from_mode,
    continuum_bound,
    discrete_bound,
    fisher_information_diagonal,
)
from .dynsys import SystemSpec, custom_system, make_lorenz, make_system, make_van_der_pol
from .errors import *  # noqa: F401,F403
from .estimate import MultiplierEstimate, ParFit, fit_par, multiplier_estimate
from .experiment import ExperimentConfig, ExperimentResult, reproduce_table1, run_monte_carlo
from .integrate import Trajectory, integrate, integrate_variational
from .orbit import (
    FloquetMode,
    PeriodicOrbit,
    find_periodic_orbit,
    floquet_multipliers,
    mode_restriction,
    read_orbit_record,
    write_orbit_record,
)
from .stochsim import (
    CrossingSeries,
    SectionSet,
    detect_crossings,
    place_sections,
    simulate_crossings,
    simulate_sde,
)

__version__ = "0.1.0"
