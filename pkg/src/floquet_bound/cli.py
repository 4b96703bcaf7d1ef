"""Command-line front end.

Stages communicate through files: ``orbit`` writes an orbit record that
``bound`` and ``simulate`` read; ``simulate`` writes a crossing series that
``estimate`` reads.  Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import experiment
from .crlb import coefficients_from_mode, continuum_bound, discrete_bound
from .dynsys import make_system, system_names
from .errors import FloquetBoundError
from .estimate import fit_par, multiplier_estimate
from .orbit import (
    DEFAULT_N_GRID,
    find_periodic_orbit,
    floquet_multipliers,
    mode_restriction,
    read_orbit_record,
    write_orbit_record,
)
from .stochsim import NOISE_KINDS, default_dt, place_sections, read_crossings, simulate_crossings, \
    simulate_sde, write_crossings, write_path

EXIT_DOMAIN = 1
EXIT_USAGE = 2

DEFAULT_GUESS = {"vdp": ((1.0, 0.0), 2.0), "lorenz": ((-10.0, -10.0, 200.0), 0.5)}


class UsageError(Exception):
    pass


def _g6(x):
    return f"{x:.6g}"


def _parse_params(text):
    params = {}
    for item in filter(None, (s.strip() for s in (text or "").split(","))):
        name, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"bad parameter {item!r}; expected name=value")
        try:
            params[name.strip()] = float(val)
        except ValueError:
            raise UsageError(f"bad value in {item!r}") from None
    return params


def _parse_vector(text):
    try:
        return tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise UsageError(f"bad vector {text!r}") from None


def _read_record(path):
    try:
        return read_orbit_record(path)
    except FileNotFoundError:
        raise UsageError(f"no such orbit record: {path}") from None


def cmd_orbit(args):
    if args.system not in system_names():
        raise UsageError(f"unknown system {args.system!r}; known: {', '.join(system_names())}")
    system = make_system(args.system, **_parse_params(args.params))
    guess, period = DEFAULT_GUESS.get(args.system, (None, None))
    if args.guess is not None:
        guess = _parse_vector(args.guess)
    if args.guess_period is not None:
        period = args.guess_period
    if guess is None or period is None:
        raise UsageError("--guess and --guess-period are required for this system")
    if len(guess) != system.dim:
        raise UsageError(f"guess must have {system.dim} components")
    orbit = find_periodic_orbit(system, guess, period, tol=args.tol)
    mult = floquet_multipliers(orbit)
    modes = [mode_restriction(orbit, lam, args.n_grid) for lam in mult.nontrivial]
    if args.out:
        write_orbit_record(args.out, orbit, modes)
    print(f"period {_g6(orbit.tau)}")
    print("anchor " + " ".join(_g6(a) for a in orbit.anchor))
    print(f"trivial multiplier {_g6(mult.trivial)}")
    for i, lam in enumerate(mult.nontrivial):
        print(f"lambda_{i + 1} {_g6(lam)}")
    return 0


def cmd_bound(args):
    rec = _read_record(args.orbit_file)
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    print(f"{'mode':>4} {'lambda':>12} {'UP':>12} {'sqrt(UP)':>12}")
    for i, mode in enumerate(rec.modes):
        res = continuum_bound(mode, args.n, args.noise)
        print(f"{i + 1:>4} {_g6(mode.lam):>12} {_g6(res.value):>12} {_g6(res.sqrt):>12}")
        if args.p:
            disc = discrete_bound(coefficients_from_mode(mode, args.p), args.n)
            rel = disc.value / res.value - 1.0
            print(f"{'':>4} discrete p={args.p}: {_g6(disc.value)} (sqrt {_g6(disc.sqrt)}, "
                  f"rel. diff {_g6(rel)})")
    return 0


def cmd_simulate(args):
    rec = _read_record(args.orbit_file)
    orbit = rec.orbit()
    sections = place_sections(orbit, rec.modes[0], args.p)
    dt = args.dt if args.dt else default_dt(orbit.tau)
    series = simulate_crossings(orbit, sections, args.g, args.n_cycles, args.seed, dt=dt,
                                noise=args.noise)
    write_crossings(args.out, series)
    if args.path_out:
        t_end = series.time[-1] + dt
        write_path(args.path_out, simulate_sde(orbit.system, orbit.anchor, args.g, dt, t_end,
                                               args.seed, args.noise), x0=orbit.anchor)
    print(f"{len(series)} crossings ({series.n_cycles} cycles of {series.p} sections); "
          f"discarded {series.discarded_gate} out-of-gate, {series.discarded_order} out-of-order")
    return 0


def cmd_estimate(args):
    try:
        series = read_crossings(args.crossings)
    except FileNotFoundError:
        raise UsageError(f"no such crossing file: {args.crossings}") from None
    fit = fit_par(series, scalar=args.scalar)
    est = multiplier_estimate(fit)
    lams = est.lambda_hat if isinstance(est.lambda_hat, tuple) else (est.lambda_hat,)
    for i, lam in enumerate(lams):
        print(f"lambda_hat_{i + 1} {_g6(lam)}")
    print(f"sigma2_hat {_g6(fit.sigma2_hat)}  cycles {fit.n_cycles}"
          + ("  (complex pair, real part shown)" if est.complex_flag else ""))
    if args.out:
        with open(args.out, "w") as fh:
            for i, lam in enumerate(lams):
                fh.write(f"lambda_hat_{i + 1}\t{lam!r}\n")
            fh.write(f"sigma2_hat\t{fit.sigma2_hat!r}\n")
            if fit.is_scalar:
                for k, a in enumerate(fit.alphas):
                    fh.write(f"alpha_{k + 1}\t{float(a)!r}\n")
    return 0


def cmd_table1(args):
    # pass/fail against the reference values is part of the report, not the exit code
    experiment.reproduce_table1(args.out_dir, seed=args.seed, R=args.R, n_cycles=args.n_cycles,
                                workers=args.workers)
    with open(f"{args.out_dir}/table1.txt") as fh:
        print(fh.read().rstrip())
    return 0


def cmd_run(args):
    try:
        config = experiment.load_config(args.config)
    except FileNotFoundError:
        raise UsageError(f"no such config file: {args.config}") from None
    result = experiment.run_monte_carlo(config)
    print(experiment.summary_text(result))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="floquet-bound",
                                     description="Cramer-Rao bounds for Floquet multiplier estimates")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("orbit", help="locate the periodic orbit and write an orbit record")
    p.add_argument("--system", required=True)
    p.add_argument("--params", default="", help="comma-separated name=value pairs")
    p.add_argument("--guess", help="initial state, comma-separated")
    p.add_argument("--guess-period", type=float)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--n-grid", type=int, default=DEFAULT_N_GRID)
    p.add_argument("--out")
    p.set_defaults(func=cmd_orbit)

    p = sub.add_parser("bound", help="evaluate the bound from an orbit record")
    p.add_argument("--orbit-file", required=True)
    p.add_argument("--n", type=int, default=100, help="number of cycles")
    p.add_argument("--p", type=int, help="also evaluate the discrete bound with p sections")
    p.add_argument("--noise", choices=NOISE_KINDS, default="gaussian")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("simulate", help="simulate a noisy path and write its crossings")
    p.add_argument("--orbit-file", required=True)
    p.add_argument("--g", type=float, required=True)
    p.add_argument("--n-cycles", type=int, default=100)
    p.add_argument("--p", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dt", type=float, help="step size (default tau/20000)")
    p.add_argument("--noise", choices=NOISE_KINDS, default="gaussian")
    p.add_argument("--out", required=True)
    p.add_argument("--path-out", help="also dump the sample path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="fit the PAR model to a crossing file")
    p.add_argument("--crossings", required=True)
    p.add_argument("--scalar", action="store_true", help="scalar fit on the first coordinate")
    p.add_argument("--out")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("table1", help="run both benchmark experiments")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=experiment.TABLE1_SEED)
    p.add_argument("--R", type=int, default=100)
    p.add_argument("--n-cycles", type=int, default=100)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("run", help="run a Monte Carlo experiment from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.set_printoptions(precision=6)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FloquetBoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
