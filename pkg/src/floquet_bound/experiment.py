"""Monte Carlo validation of the multiplier bound.

A run locates the orbit once, evaluates the continuum bound for every
nontrivial multiplier, and then repeats simulate -> detect crossings -> fit ->
estimate for ``R`` realizations with seeds ``base_seed + r``.  Realizations
whose path escapes or slips a section are excluded and counted.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .crlb import continuum_bound
from .dynsys import make_system
from .errors import (
    CrossingSequenceError,
    ExperimentIntegrityError,
    InvalidParameterError,
    TrajectoryEscapeError,
)
from .estimate import fit_par, multiplier_estimate
from .orbit import (
    DEFAULT_N_GRID,
    find_periodic_orbit,
    floquet_multipliers,
    mode_restriction,
    orbit_from_anchor,
)
from .stochsim import NOISE_KINDS, CrossingSeries, default_dt, place_sections, simulate_crossings

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "run_monte_carlo",
    "load_config",
    "dump_config",
    "write_result",
    "summary_text",
    "vdp_config",
    "lorenz_config",
    "reproduce_table1",
    "Table1Report",
    "TABLE1_SEED",
    "REFERENCE_TABLE1",
]

log = logging.getLogger(__name__)

MAX_EXCLUDED_FRACTION = 0.10
TABLE1_SEED = 20240501


@dataclass(frozen=True)
class ExperimentConfig:
    system: str = "vdp"
    params: dict = field(default_factory=dict)
    guess: tuple = (1.0, 0.0)
    guess_period: float = 2.0
    p: int = 50
    n_cycles: int = 100
    g: float = 5e-5
    dt: float | None = None
    R: int = 100
    base_seed: int = 0
    noise: str = "gaussian"
    output: str | None = None
    burn_in: int = 0
    scalar: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.R < 1:
            raise InvalidParameterError("R must be >= 1")
        if self.p < 1 or self.n_cycles < 2:
            raise InvalidParameterError("need p >= 1 and n_cycles >= 2")
        if self.g < 0:
            raise InvalidParameterError("g must be non-negative")
        if self.noise not in NOISE_KINDS:
            raise InvalidParameterError(f"noise must be one of {NOISE_KINDS}")
        object.__setattr__(self, "params", dict(self.params))
        object.__setattr__(self, "guess", tuple(float(v) for v in self.guess))


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    tau: float
    multipliers: tuple
    sqrt_up: tuple
    realizations: np.ndarray
    estimates: np.ndarray
    excluded: int
    flagged: int
    wall_clock: float = 0.0

    @property
    def n_used(self) -> int:
        return len(self.realizations)

    @property
    def mean(self) -> np.ndarray:
        return self.estimates.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        """Sample standard deviation (divisor ``R - 1``); NaN when undefined."""
        if self.n_used < 2:
            return np.full(self.estimates.shape[1], np.nan)
        return self.estimates.std(axis=0, ddof=1)

    @property
    def std_defined(self) -> bool:
        return self.n_used >= 2


# --- config files ------------------------------------------------------------

_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _parse_value(key, text):
    text = text.strip()
    if key == "params":
        out = {}
        for item in filter(None, (s.strip() for s in text.split(","))):
            name, _, val = item.partition("=")
            out[name.strip()] = float(val)
        return out
    if key == "guess":
        return tuple(float(v) for v in text.replace(",", " ").split())
    if key in ("system", "noise"):
        return text
    if key == "output":
        return None if text in ("", "none") else text
    if key == "dt":
        return None if text in ("", "none", "auto") else float(text)
    if key == "scalar":
        if text.lower() not in ("true", "false", "1", "0"):
            raise InvalidParameterError(f"scalar must be true/false, got {text!r}")
        return text.lower() in ("true", "1")
    if key in ("p", "n_cycles", "R", "base_seed", "burn_in", "workers"):
        return int(text)
    return float(text)


def load_config(path) -> ExperimentConfig:
    """Read ``key = value`` lines; ``#`` starts a comment; unknown keys are rejected."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep:
            raise InvalidParameterError(f"{path}:{lineno}: expected key = value")
        if key not in _FIELDS:
            raise InvalidParameterError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, val)
    return ExperimentConfig(**values)


def _format_value(key, value):
    if key == "params":
        return ",".join(f"{k}={v!r}" for k, v in value.items())
    if key == "guess":
        return ",".join(repr(v) for v in value)
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def dump_config(config: ExperimentConfig) -> str:
    return "".join(f"{k} = {_format_value(k, getattr(config, k))}\n" for k in _FIELDS)


# --- running -----------------------------------------------------------------


def _prepare(config):
    system = make_system(config.system, **config.params)
    orbit = find_periodic_orbit(system, config.guess, config.guess_period)
    mult = floquet_multipliers(orbit)
    modes = [mode_restriction(orbit, lam, DEFAULT_N_GRID) for lam in mult.nontrivial]
    sections = place_sections(orbit, modes[0], config.p)
    return orbit, mult, modes, sections


def _one_realization(orbit, sections, config, dt, r):
    seed = config.base_seed + r
    try:
        series = simulate_crossings(orbit, sections, config.g, config.n_cycles + config.burn_in,
                                    seed, dt=dt, noise=config.noise)
    except (TrajectoryEscapeError, CrossingSequenceError) as exc:
        log.info("realization %d excluded: %s", r, exc)
        return r, None, False
    if config.burn_in:
        cut = config.burn_in * sections.p
        series = CrossingSeries(series.p, series.section[cut:], series.time[cut:],
                                series.coords[cut:])
    est = multiplier_estimate(fit_par(series, scalar=config.scalar))
    lam = est.lambda_hat if isinstance(est.lambda_hat, tuple) else (est.lambda_hat,)
    return r, lam, est.complex_flag


_worker_state = {}


def _worker_init(config, anchor, tau, mode):
    # SystemSpec holds closures, so workers rebuild the orbit from its anchor
    system = make_system(config.system, **config.params)
    orbit = orbit_from_anchor(system, anchor, tau)
    _worker_state["args"] = (orbit, place_sections(orbit, mode, config.p), config)


def _worker_run(job):
    orbit, sections, config = _worker_state["args"]
    dt, r = job
    return _one_realization(orbit, sections, config, dt, r)


def run_monte_carlo(config: ExperimentConfig) -> ExperimentResult:
    """Run ``config.R`` realizations and aggregate the multiplier estimates.

    Raises
    ------
    ExperimentIntegrityError
        If more than 10% of the realizations had to be excluded.
    """
    start = time.perf_counter()
    orbit, mult, modes, sections = _prepare(config)
    sqrt_up = tuple(continuum_bound(m, config.n_cycles, config.noise).sqrt for m in modes)
    dt = default_dt(orbit.tau) if config.dt is None else config.dt
    n_est = 1 if orbit.dim == 2 or config.scalar else orbit.dim - 1
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers, initializer=_worker_init,
                                 initargs=(config, orbit.anchor, orbit.tau, modes[0])) as pool:
            outcomes = list(pool.map(_worker_run, [(dt, r) for r in range(config.R)]))
    else:
        outcomes = [_one_realization(orbit, sections, config, dt, r) for r in range(config.R)]
    outcomes.sort(key=lambda o: o[0])
    kept = [o for o in outcomes if o[1] is not None]
    excluded = config.R - len(kept)
    if excluded > MAX_EXCLUDED_FRACTION * config.R:
        raise ExperimentIntegrityError(f"{excluded} of {config.R} realizations excluded")
    estimates = np.array([o[1][:n_est] for o in kept], dtype=float).reshape(len(kept), n_est)
    result = ExperimentResult(
        config=config,
        tau=orbit.tau,
        multipliers=tuple(mult.nontrivial),
        sqrt_up=sqrt_up,
        realizations=np.array([o[0] for o in kept], dtype=int),
        estimates=estimates,
        excluded=excluded,
        flagged=sum(bool(o[2]) for o in kept),
        wall_clock=time.perf_counter() - start,
    )
    if config.output:
        write_result(config.output, result)
    return result


# --- output ------------------------------------------------------------------


def write_result(path, result: ExperimentResult) -> None:
    """Per-realization estimates as tab-separated text, followed by a summary block.

    Wall-clock time is deliberately left out so identical runs give
    identical files.
    """
    cfg = result.config
    k = result.estimates.shape[1]
    lines = ["# floquet-bound experiment v1"]
    lines += [f"# config {line}" for line in dump_config(cfg).splitlines()]
    lines.append("\t".join(["realization", "seed"] + [f"lambda_hat_{i + 1}" for i in range(k)]))
    for r, est in zip(result.realizations, result.estimates):
        lines.append("\t".join([str(r), str(cfg.base_seed + r)] + [repr(float(v)) for v in est]))
    lines.append(f"# summary tau {result.tau!r}")
    for i in range(k):
        lines.append(
            f"# summary mode {i + 1} lambda {result.multipliers[i]!r} sqrt_up {result.sqrt_up[i]!r}"
            f" mean {float(result.mean[i])!r} std {float(result.std[i])!r}")
    lines.append(f"# summary used {result.n_used} excluded {result.excluded} flagged {result.flagged}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n")


def _g6(x):
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6g}"


def summary_text(result: ExperimentResult) -> str:
    cfg = result.config
    out = [f"system {cfg.system}  p={cfg.p}  n={cfg.n_cycles}  g={cfg.g:g}  R={cfg.R}  "
           f"tau={_g6(result.tau)}"]
    out.append(f"{'mode':>4} {'lambda':>10} {'sqrt(UP)':>10} {'mean':>10} {'std':>10}")
    for i in range(result.estimates.shape[1]):
        std = float(result.std[i])
        out.append(f"{i + 1:>4} {_g6(result.multipliers[i]):>10} {_g6(result.sqrt_up[i]):>10} "
                   f"{_g6(float(result.mean[i])):>10} {(_g6(std) if result.std_defined else 'undef'):>10}")
    out.append(f"used {result.n_used}, excluded {result.excluded}, complex-flagged {result.flagged}, "
               f"{result.wall_clock:.1f} s")
    return "\n".join(out)


# --- benchmark table -------------------------------------------------------

# reference values and acceptance intervals per benchmark row
REFERENCE_TABLE1 = {
    "vdp": [dict(lam=0.3854, sqrt_up=0.0532, mean=0.3953, std=0.0541,
                 lam_tol=0.001, up_rtol=0.02, mean_range=(0.37, 0.42), std_range=(0.043, 0.068))],
    "lorenz": [
        dict(lam=-0.6162, sqrt_up=0.0606, mean=-0.6157, std=0.0749,
             lam_tol=0.001, up_rtol=0.05, mean_range=(-0.67, -0.56), std_range=(0.055, 0.095)),
        dict(lam=-0.0026, sqrt_up=0.0009, mean=-0.0031, std=0.0014,
             lam_tol=0.0002, up_rtol=0.05, mean_range=None, std_range=(0.0007, 0.0021)),
    ],
}


def vdp_config(**overrides) -> ExperimentConfig:
    base = dict(system="vdp", params={"eps": 0.1, "a": 0.99}, guess=(1.0, 0.0), guess_period=2.0,
                p=50, n_cycles=100, g=5e-5, R=100, base_seed=TABLE1_SEED)
    base.update(overrides)
    return ExperimentConfig(**base)


def lorenz_config(**overrides) -> ExperimentConfig:
    base = dict(system="lorenz", params={"sigma": 10.0, "r": 240.0, "b": 8.0 / 3.0},
                guess=(-10.0, -10.0, 200.0), guess_period=0.5, p=50, n_cycles=100, g=3e-2, R=100,
                base_seed=TABLE1_SEED)
    base.update(overrides)
    return ExperimentConfig(**base)


@dataclass
class Table1Report:
    results: dict
    checks: list

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)


def _checks(name, result):
    checks = []
    for i, ref in enumerate(REFERENCE_TABLE1[name]):
        tag = f"{name} mode {i + 1}"
        lam, up = result.multipliers[i], result.sqrt_up[i]
        mean, std = float(result.mean[i]), float(result.std[i])
        checks.append((f"{tag} lambda", abs(lam - ref["lam"]) <= ref["lam_tol"],
                       f"{lam:.6g} vs {ref['lam']} +- {ref['lam_tol']}"))
        checks.append((f"{tag} sqrt(UP)", abs(up / ref["sqrt_up"] - 1) <= ref["up_rtol"],
                       f"{up:.6g} vs {ref['sqrt_up']} within {ref['up_rtol']:.0%}"))
        if ref["mean_range"] is not None:
            lo, hi = ref["mean_range"]
            checks.append((f"{tag} mean", lo <= mean <= hi, f"{mean:.6g} in [{lo}, {hi}]"))
        lo, hi = ref["std_range"]
        checks.append((f"{tag} std", lo <= std <= hi, f"{std:.6g} in [{lo}, {hi}]"))
        checks.append((f"{tag} std >= 0.8 sqrt(UP)", std >= 0.8 * up, f"{std:.6g} >= {0.8 * up:.6g}"))
    return checks


def reproduce_table1(out_dir, seed: int = TABLE1_SEED, R: int = 100, n_cycles: int = 100,
                     workers: int = 1) -> Table1Report:
    """Run both benchmark experiments and write the comparison table.

    Files written to ``out_dir``: ``vdp.tsv`` and ``lorenz.tsv`` (per
    realization), ``table1.tsv`` (one row per multiplier) and ``table1.txt``
    (human-readable, with pass/fail lines).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    configs = {
        "vdp": vdp_config(base_seed=seed, R=R, n_cycles=n_cycles, workers=workers,
                          output=str(out / "vdp.tsv")),
        "lorenz": lorenz_config(base_seed=seed, R=R, n_cycles=n_cycles, workers=workers,
                                output=str(out / "lorenz.tsv")),
    }
    results = {name: run_monte_carlo(cfg) for name, cfg in configs.items()}
    checks = []
    for name, res in results.items():
        checks += _checks(name, res)
    rows = ["system\tmode\tlambda\tsqrt_up\tmean_lambda_hat\tstd_lambda_hat\tref_lambda\t"
            "ref_sqrt_up\tref_mean\tref_std"]
    text = [f"Floquet multiplier estimates vs bound (R={R}, n={n_cycles}, seed={seed})", ""]
    text.append(f"{'system':<8}{'mode':>5}{'lambda':>11}{'sqrt(UP)':>11}{'mean':>11}{'std':>11}"
                f"   | ref:   {'lambda':>8}{'sqrt(UP)':>10}{'mean':>9}{'std':>9}")
    for name, res in results.items():
        for i, ref in enumerate(REFERENCE_TABLE1[name]):
            vals = (res.multipliers[i], res.sqrt_up[i], float(res.mean[i]), float(res.std[i]))
            rows.append("\t".join([name, str(i + 1)] + [repr(float(v)) for v in vals] +
                                  [repr(ref[k]) for k in ("lam", "sqrt_up", "mean", "std")]))
            text.append(f"{name:<8}{i + 1:>5}" + "".join(f"{_g6(v):>11}" for v in vals) +
                        f"   |        {ref['lam']:>8}{ref['sqrt_up']:>10}{ref['mean']:>9}{ref['std']:>9}")
    text.append("")
    for label, ok, detail in checks:
        text.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
    (out / "table1.tsv").write_text("\n".join(rows) + "\n")
    (out / "table1.txt").write_text("\n".join(text) + "\n")
    return Table1Report(results, checks)

