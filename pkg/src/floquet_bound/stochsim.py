"""Noisy sample paths and their crossings with transverse sections.

Paths of ``dx = f(x) dt + g dw`` are produced by Euler-Maruyama in chunks so
that arbitrarily long paths can be consumed without being stored.  Sections
are placed at equal-time stations along the unperturbed orbit; each records
the signed transverse displacement of a crossing from its base point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numba
import numpy as np

from .errors import (
    CrossingSequenceError,
    InvalidParameterError,
    SectionPlacementError,
    TrajectoryEscapeError,
)

__all__ = [
    "NOISE_KINDS",
    "SectionSet",
    "PathChunk",
    "CrossingSeries",
    "place_sections",
    "simulate_sde",
    "detect_crossings",
    "simulate_crossings",
    "default_dt",
    "gate_radius",
    "write_crossings",
    "read_crossings",
    "write_path",
]

NOISE_KINDS = ("gaussian", "laplace")
CHUNK_STEPS = 1 << 16
STEPS_PER_PERIOD = 20000
TRANSVERSALITY = 0.1
GATE_FLOOR = 0.05


def default_dt(tau: float) -> float:
    return tau / STEPS_PER_PERIOD


# --- sections ----------------------------------------------------------------


@dataclass(frozen=True)
class SectionSet:
    """``p`` hyperplane sections through ``gamma(k tau / p)``, normal to the flow.

    ``coord_maps[k]`` (shape ``(m, d)``) turns a displacement from the base
    point into the ``m = d - 1`` transverse coordinates of section ``k``.
    """

    tau: float
    times: np.ndarray
    base: np.ndarray
    normals: np.ndarray
    coord_maps: np.ndarray
    diameter: float

    @property
    def p(self) -> int:
        return len(self.times)

    @property
    def n_coords(self) -> int:
        return self.coord_maps.shape[1]

    def coordinates(self, k: int, x) -> np.ndarray:
        return self.coord_maps[k] @ (np.asarray(x, dtype=float) - self.base[k])


def _mode_direction(orbit, mode, t):
    xi = orbit.variational.phi_at(t) @ mode.eigvec if t > 0 else np.asarray(mode.eigvec, float)
    return xi / np.linalg.norm(xi)


def place_sections(orbit, mode, p: int) -> SectionSet:
    """Place ``p`` equal-time sections along ``orbit``.

    Section ``k`` is the hyperplane through ``gamma(t_k)``, ``t_k = k tau / p``,
    normal to ``f(gamma(t_k))``.  In 2D the coordinate of a displacement
    ``a f + b u`` (``u`` the unit mode direction at ``t_k``) is ``b``, so the
    section-to-section maps of the linearized flow are ratios of ``phi``.  In
    3D the coordinates are an orthonormal frame of the plane whose first
    vector is ``mode``'s direction projected into it.

    Raises
    ------
    SectionPlacementError
        If a section is within ``0.1 |f|`` of tangency or the mode direction
        is parallel to the flow.
    """
    if p < 1:
        raise InvalidParameterError("p must be >= 1")
    system = orbit.system
    d = system.dim
    if d not in (2, 3):
        raise InvalidParameterError("sections are implemented for 2D and 3D orbits")
    times = np.arange(p) * (orbit.tau / p)
    base = np.array([orbit.trajectory(t) for t in times])
    base[0] = orbit.anchor
    normals = np.empty((p, d))
    maps = np.empty((p, d - 1, d))
    for k, t in enumerate(times):
        fk = system.f(base[k])
        speed = np.linalg.norm(fk)
        n = fk / speed
        u = _mode_direction(orbit, mode, t)
        if d == 2:
            # dual vector: w.f = 0, w.u = 1
            w = np.array([-n[1], n[0]])
            wu = w @ u
            if abs(wu) < 1e-8:
                raise SectionPlacementError(f"mode direction parallel to the flow at t = {t:.6g}")
            maps[k, 0] = w / wu
        else:
            e1 = u - (u @ n) * n
            nrm = np.linalg.norm(e1)
            if nrm < 1e-8:
                raise SectionPlacementError(f"mode direction parallel to the flow at t = {t:.6g}")
            e1 /= nrm
            maps[k, 0] = e1
            maps[k, 1] = np.cross(n, e1)
        if abs(n @ fk) < TRANSVERSALITY * speed:
            raise SectionPlacementError(f"section {k} at t = {t:.6g} is nearly tangent to the flow")
        normals[k] = n
    samples = orbit.trajectory.sample(2001)[1]
    diameter = float(np.linalg.norm(samples.max(axis=0) - samples.min(axis=0)))
    return SectionSet(orbit.tau, times, base, normals, maps, diameter)


def gate_radius(sections: SectionSet, g: float) -> float:
    return max(1e3 * g * math.sqrt(sections.tau), GATE_FLOOR * sections.diameter)


# --- Euler-Maruyama ----------------------------------------------------------


@dataclass(frozen=True)
class PathChunk:
    """States ``x[start + 1] .. x[start + len(states)]`` of a path with step ``dt``."""

    start: int
    dt: float
    states: np.ndarray


@numba.njit
def _em_chunk(kernel, theta, x, dt, incr, out, escape2):
    n, d = incr.shape
    for j in range(n):
        dx = kernel(x, theta)
        r2 = 0.0
        for i in range(d):
            x[i] = x[i] + dx[i] * dt + incr[j, i]
            out[j, i] = x[i]
            r2 += x[i] * x[i]
        if not r2 <= escape2:
            return j
    return n


def _em_chunk_py(field, x, dt, incr, out, escape2):
    for j in range(incr.shape[0]):
        # same rounding order as the compiled kernel
        x += field(x) * dt
        x += incr[j]
        out[j] = x
        if not x @ x <= escape2:
            return j
    return incr.shape[0]


def _increments(rng, noise, n, d, scale):
    if noise == "gaussian":
        return scale * rng.standard_normal((n, d))
    # unit-variance Laplace has scale 1/sqrt(2)
    return scale * rng.laplace(0.0, 1.0 / math.sqrt(2.0), (n, d))


def simulate_sde(system, x0, g: float, dt: float, t_end: float | None, seed: int,
                 noise: str = "gaussian", escape_radius: float | None = None,
                 chunk_steps: int = CHUNK_STEPS) -> Iterator[PathChunk]:
    """Stream an Euler-Maruyama path of ``dx = f(x) dt + g dw``.

    ``x[j+1] = x[j] + f(x[j]) dt + g sqrt(dt) eta[j]`` with isotropic
    unit-variance increments ``eta`` (Gaussian or Laplace) drawn from
    ``numpy.random.default_rng(seed)``.  ``t_end=None`` streams until the
    consumer stops.

    Raises
    ------
    TrajectoryEscapeError
        When ``|x|`` exceeds ``escape_radius`` (default ``1e3 (1 + |x0|)``).
    """
    if g < 0:
        raise InvalidParameterError("g must be non-negative")
    if not dt > 0:
        raise InvalidParameterError("dt must be positive")
    if noise not in NOISE_KINDS:
        raise InvalidParameterError(f"noise must be one of {NOISE_KINDS}")
    x = np.array(x0, dtype=float)
    d = x.size
    if escape_radius is None:
        escape_radius = 1e3 * (1.0 + float(np.linalg.norm(x)))
    escape2 = escape_radius**2
    rng = np.random.default_rng(seed)
    scale = g * math.sqrt(dt)
    n_total = None if t_end is None else int(round(t_end / dt))
    theta = np.array(system.theta, dtype=float)
    start = 0
    while n_total is None or start < n_total:
        n = chunk_steps if n_total is None else min(chunk_steps, n_total - start)
        incr = _increments(rng, noise, n, d, scale)
        out = np.empty((n, d))
        if system.kernel is not None:
            done = _em_chunk(system.kernel, theta, x, dt, incr, out, escape2)
        else:
            done = _em_chunk_py(system.field, x, dt, incr, out, escape2)
        if done < n:
            raise TrajectoryEscapeError(
                f"path left radius {escape_radius:.3g} at t = {(start + done + 1) * dt:.6g}",
                (start + done + 1) * dt)
        yield PathChunk(start, dt, out)
        start += n


# --- crossings ---------------------------------------------------------------


@dataclass
class CrossingSeries:
    """Time-ordered section crossings.

    Record ``i`` lies on section ``i mod p``; ``coords[i]`` is its transverse
    displacement from the section base point.
    """

    p: int
    section: np.ndarray
    time: np.ndarray
    coords: np.ndarray
    discarded_gate: int = 0
    discarded_order: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.time)

    @property
    def index(self) -> np.ndarray:
        return np.arange(len(self.time))

    @property
    def n_cycles(self) -> int:
        return len(self) // self.p


@numba.njit
def _scan(states, prev, j0, dt, base, normals, maps, gate2, min_gap, t_last, state, out_t,
          out_c, room):
    """Scan steps for crossings; returns the number of states consumed.

    ``state`` holds [expected section, records so far, gate discards,
    order discards, slip flag] and ``t_last[0]`` the time of the last record;
    both are updated in place.
    """
    p = base.shape[0]
    d = base.shape[1]
    m = maps.shape[1]
    n = states.shape[0]
    e = state[0]
    written = 0
    for j in range(n):
        x1 = states[j]
        x0 = prev if j == 0 else states[j - 1]
        for which in range(3):
            # 0: section just recorded, 1: expected, 2: the one after
            if which != 1 and (p == 1 or (p == 2 and which == 2)):
                continue
            k = (e - 1 + which) % p
            s0 = 0.0
            s1 = 0.0
            for i in range(d):
                s0 += normals[k, i] * (x0[i] - base[k, i])
                s1 += normals[k, i] * (x1[i] - base[k, i])
            if not (s0 < 0.0 and s1 >= 0.0):
                continue
            th = s0 / (s0 - s1)
            r2 = 0.0
            for i in range(d):
                r2 += (x0[i] + th * (x1[i] - x0[i]) - base[k, i]) ** 2
            if r2 > gate2:
                if which == 1:
                    state[2] += 1
                continue
            if which == 0:
                state[3] += 1
                continue
            if which == 2:
                state[4] = 1
                state[0] = e
                return j + 1
            tc = (j0 + j + th) * dt
            if tc - t_last[0] < min_gap:
                # with p = 1 the expected section is also the one just recorded
                state[3] += 1
                continue
            t_last[0] = tc
            out_t[written] = tc
            for c in range(m):
                acc = 0.0
                for i in range(d):
                    acc += maps[k, c, i] * (x0[i] + th * (x1[i] - x0[i]) - base[k, i])
                out_c[written, c] = acc
            written += 1
            state[1] += 1
            e = (e + 1) % p
            state[0] = e
            if written >= room:
                return j + 1
            break
    state[0] = e
    return n


def detect_crossings(path, sections: SectionSet, orbit=None, g: float = 0.0,
                     max_crossings: int | None = None, initial_state=None,
                     gate: float | None = None) -> CrossingSeries:
    """Extract the crossing series of a streamed path.

    The path's initial state is recorded as the crossing of section 0 at
    ``t = 0``; afterwards crossings are accepted only in cyclic order, only in
    the direction of the flow, and only within ``gate`` of the base point.
    Re-crossings of the last recorded section and crossings outside the gate
    are counted and dropped.

    Parameters
    ----------
    path : iterable of PathChunk
        As produced by :func:`simulate_sde`.
    sections : SectionSet
    orbit : PeriodicOrbit, optional
        Supplies the initial state (its anchor) when ``initial_state`` is
        not given.
    g : float
        Noise amplitude, used for the default gate radius.
    max_crossings : int, optional
        Stop after this many records; the stream is not consumed further.

    Raises
    ------
    CrossingSequenceError
        If the path crosses section ``k + 1`` before section ``k``.
    """
    if initial_state is None:
        if orbit is None:
            raise InvalidParameterError("need orbit or initial_state")
        initial_state = orbit.anchor
    prev = np.array(initial_state, dtype=float)
    gate = gate_radius(sections, g) if gate is None else gate
    p = sections.p
    m = sections.n_coords
    cap = (1 << 62) if max_crossings is None else int(max_crossings)
    times = [np.zeros(1)]
    coords = [sections.coordinates(0, prev)[None, :]]
    state = np.array([1 % p, 1, 0, 0, 0], dtype=np.int64)
    t_last = np.zeros(1)
    min_gap = 0.5 * sections.tau / p
    for chunk in path:
        states = np.ascontiguousarray(chunk.states)
        pos = 0
        while pos < len(states) and state[1] < cap:
            room = int(min(4096, cap - state[1]))
            out_t = np.empty(room)
            out_c = np.empty((room, m))
            r0 = state[1]
            used = _scan(states[pos:], prev, chunk.start + pos, chunk.dt, sections.base,
                         sections.normals, sections.coord_maps, gate * gate, min_gap, t_last,
                         state, out_t, out_c, room)
            got = int(state[1] - r0)
            times.append(out_t[:got])
            coords.append(out_c[:got])
            if state[4]:
                raise CrossingSequenceError(
                    f"section {int(state[0])} skipped", int(state[1] // p))
            prev = states[pos + used - 1].copy()
            pos += used
        if state[1] >= cap:
            break
    time = np.concatenate(times)
    n = len(time)
    return CrossingSeries(p, np.arange(n) % p, time, np.concatenate(coords),
                          int(state[2]), int(state[3]))


def simulate_crossings(orbit, sections: SectionSet, g: float, n_cycles: int, seed: int,
                       dt: float | None = None, noise: str = "gaussian",
                       x0=None) -> CrossingSeries:
    """Simulate from the anchor until ``n_cycles * p`` crossings are recorded."""
    dt = default_dt(orbit.tau) if dt is None else dt
    x0 = orbit.anchor if x0 is None else np.asarray(x0, dtype=float)
    # generous time limit; running out of path means sections were missed
    t_limit = 3.0 * (n_cycles + 2) * orbit.tau
    path = simulate_sde(orbit.system, x0, g, dt, t_limit, seed, noise)
    want = n_cycles * sections.p
    series = detect_crossings(path, sections, g=g, max_crossings=want, initial_state=x0)
    if len(series) < want:
        raise CrossingSequenceError(
            f"only {len(series)} of {want} crossings within t = {t_limit:.4g}", series.n_cycles)
    series.meta.update(g=g, dt=dt, seed=seed, noise=noise)
    return series


# --- text formats ------------------------------------------------------------

_CROSS_HEADER = "# floquet-bound crossings v1"


def write_crossings(path, series: CrossingSeries) -> None:
    """Delimited text: ``index section time coord...`` at full precision."""
    with open(path, "w") as fh:
        fh.write(_CROSS_HEADER + "\n")
        fh.write(f"# p {series.p}\n")
        fh.write(f"# discarded_gate {series.discarded_gate}\n")
        fh.write(f"# discarded_order {series.discarded_order}\n")
        for k, v in series.meta.items():
            fh.write(f"# meta {k} {v}\n")
        cols = ["index", "section", "time"] + [f"coord{c}" for c in range(series.coords.shape[1])]
        fh.write("\t".join(cols) + "\n")
        for i in range(len(series)):
            row = [str(i), str(int(series.section[i])), repr(float(series.time[i]))]
            row += [repr(float(c)) for c in series.coords[i]]
            fh.write("\t".join(row) + "\n")


def _meta_value(text):
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass
    return text


def read_crossings(path) -> CrossingSeries:
    p = None
    counts = {"discarded_gate": 0, "discarded_order": 0}
    meta = {}
    rows = []
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        if first != _CROSS_HEADER:
            raise ValueError(f"{path}: not a crossing series file")
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "#":
                if parts[1] == "p":
                    p = int(parts[2])
                elif parts[1] in counts:
                    counts[parts[1]] = int(parts[2])
                elif parts[1] == "meta":
                    meta[parts[2]] = _meta_value(" ".join(parts[3:]))
                continue
            if parts[0] == "index":
                continue
            rows.append([float(x) for x in parts])
    if p is None:
        raise ValueError(f"{path}: missing section count")
    table = np.array(rows)
    section = table[:, 1].astype(int)
    if np.any(section != np.arange(len(table)) % p):
        raise ValueError(f"{path}: section indices are not cyclic")
    return CrossingSeries(p, section, table[:, 2], table[:, 3:], counts["discarded_gate"],
                          counts["discarded_order"], meta)


def write_path(path, chunks, x0=None) -> None:
    """Dump ``t state...`` rows of a streamed path (debugging aid)."""
    with open(path, "w") as fh:
        if x0 is not None:
            fh.write("\t".join(["0.0"] + [repr(float(v)) for v in x0]) + "\n")
        for chunk in chunks:
            ts = (chunk.start + 1 + np.arange(len(chunk.states))) * chunk.dt
            np.savetxt(fh, np.column_stack([ts, chunk.states]), fmt="%.17g", delimiter="\t")
