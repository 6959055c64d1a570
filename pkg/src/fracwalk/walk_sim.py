"""Monte Carlo engines for the jump processes and random walks.

Single-path functions return a :class:`WalkPath` and are meant for small
studies and tests. The ``*_endpoints`` functions advance whole blocks of
independent replicas in lock step and are what the experiment drivers use;
they plug straight into :func:`fracwalk.rng.map_blocks`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, InsufficientHorizonError
from .jump_kernels import DoubleJumpKernel, JumpKernel
from .rng import BLOCK_SIZE, map_blocks

__all__ = [
    "WalkPath",
    "EmpiricalDensity",
    "EmpiricalDensity2D",
    "run_ctrw_exponential",
    "run_ctrw_discrete",
    "run_double_walk",
    "hitting_time_of_path",
    "run_subordinated_ctrw",
    "exponential_endpoints",
    "discrete_endpoints",
    "double_walk_endpoints",
    "subordinated_endpoints",
    "SubordinatedSample",
    "monte_carlo_expectation",
    "estimate_density",
    "estimate_density_2d",
    "step_count",
    "STEP_CAP",
]

STEP_CAP = 2**20


def step_count(t: float, tau: float) -> int:
    """floor(t / tau), robust to representation error (t = 1, tau = 1e-3 gives 1000)."""
    q = t / tau
    n = math.floor(q)
    if q - n > 1 - 1e-9:
        n += 1
    return int(n)


@dataclass
class WalkPath:
    """Right-continuous piecewise-constant trajectory.

    ``states[i]`` holds on ``[times[i], times[i+1])``. Double walks carry the
    temporal component in ``clock``.
    """

    times: np.ndarray
    states: np.ndarray
    clock: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.times.ndim != 1 or len(self.times) == 0:
            raise DomainError("a path needs at least one event time")
        if len(self.states) != len(self.times):
            raise DomainError("states and times must have the same length")
        if np.any(np.diff(self.times) <= 0):
            raise DomainError("event times must be strictly increasing")
        if self.clock is not None:
            self.clock = np.asarray(self.clock, dtype=float)
            if len(self.clock) != len(self.times):
                raise DomainError("clock and times must have the same length")
            if np.any(np.diff(self.clock) < 0):
                raise DomainError("the clock component must be non-decreasing")

    def __len__(self):
        return len(self.times)

    def index_at(self, u):
        """Index of the state in force at time(s) ``u``."""
        return np.searchsorted(self.times, u, side="right") - 1

    def state_at(self, u):
        i = self.index_at(u)
        if np.any(i < 0):
            raise DomainError("time before the start of the path")
        return self.states[i]

    def clock_at(self, u):
        if self.clock is None:
            raise DomainError("path has no clock component")
        i = self.index_at(u)
        if np.any(i < 0):
            raise DomainError("time before the start of the path")
        return self.clock[i]


def _as_state(x0, dim):
    x0 = np.asarray(x0, dtype=float)
    return x0.reshape(()) if dim == 1 else x0.reshape(2)


def run_ctrw_exponential(k: JumpKernel, x0, h: float, t_end: float, rng) -> WalkPath:
    """Jump process with exponential waits of rate h^-alpha and jumps h*Y."""
    if not 0 < h <= 1:
        raise DomainError("h must lie in (0, 1]")
    if t_end < 0:
        raise DomainError("t_end must be non-negative")
    rate = h ** (-k.alpha)
    x = _as_state(x0, k.dim)
    times, states = [0.0], [x.copy()]
    t = 0.0
    while True:
        t += rng.exponential(1.0 / rate)
        if t > t_end:
            break
        x = x + h * k.sample(x[None] if k.dim == 2 else np.array([x]), rng, 1)[0]
        times.append(t)
        states.append(x.copy())
    return WalkPath(np.array(times), np.array(states))


def run_ctrw_discrete(k: JumpKernel, x0, h: float, t_end: float, rng) -> WalkPath:
    """Random walk S(j) = S(j-1) + h Y_j observed at times j*tau, tau = h^alpha."""
    if not 0 < h <= 1:
        raise DomainError("h must lie in (0, 1]")
    tau = h ** k.alpha
    n = step_count(t_end, tau)
    x = _as_state(x0, k.dim)
    states = np.empty((n + 1,) + x.shape)
    states[0] = x
    for j in range(1, n + 1):
        x = x + h * k.sample(x[None] if k.dim == 2 else np.array([x]), rng, 1)[0]
        states[j] = x
    return WalkPath(tau * np.arange(n + 1), states)


def run_double_walk(dk: DoubleJumpKernel, x0, u0: float, tau: float, t_end: float, rng) -> WalkPath:
    """(Y, V)(j) = (Y, V)(j-1) + (tau^(1/alpha) Y_j, tau^(1/beta) V_j) for j*tau <= t_end.

    The returned path has ``states`` = Y and ``clock`` = V.
    """
    if not 0 < tau <= 1:
        raise DomainError("tau must lie in (0, 1]")
    sy, sv = tau ** (1.0 / dk.alpha), tau ** (1.0 / dk.beta)
    n = step_count(t_end, tau)
    x = _as_state(x0, dk.dim)
    v = float(u0)
    ys = np.empty((n + 1,) + x.shape)
    vs = np.empty(n + 1)
    ys[0], vs[0] = x, v
    for j in range(1, n + 1):
        y1, v1 = dk.sample(x[None] if dk.dim == 2 else np.array([x]), v, rng, 1)
        x = x + sy * y1[0]
        v = v + sv * v1[0]
        ys[j], vs[j] = x, v
    return WalkPath(tau * np.arange(n + 1), ys, vs)


def hitting_time_of_path(path: WalkPath, t: float) -> float:
    """First time the clock exceeds ``t``: Z = inf{u : V(u) > t}.

    For a right-continuous staircase this equals sup{u : V(u) <= t}, and
    ``Z <= u`` holds exactly when ``V(u) > t``.
    """
    if path.clock is None:
        raise DomainError("path has no clock component")
    above = np.flatnonzero(path.clock > t)
    if above.size == 0:
        raise InsufficientHorizonError(
            f"clock reached {path.clock[-1]!r} <= t={t!r} by u={path.times[-1]!r}; extend the path"
        )
    return float(path.times[above[0]])


def run_subordinated_ctrw(
    dk: DoubleJumpKernel, x0, tau: float, t: float, rng, cap: int = STEP_CAP, chunk: int = 1024
):
    """Y at the last step before the clock exceeds ``t``, started from (x0, 0).

    The horizon starts at ``chunk`` steps and doubles until the clock passes
    ``t``; beyond ``cap`` steps an InsufficientHorizonError is raised.
    """
    if not 0 < tau <= 1:
        raise DomainError("tau must lie in (0, 1]")
    sy, sv = tau ** (1.0 / dk.alpha), tau ** (1.0 / dk.beta)
    x = _as_state(x0, dk.dim)
    v = 0.0
    done = 0
    horizon = chunk
    while True:
        while done < horizon:
            y1, v1 = dk.sample(x[None] if dk.dim == 2 else np.array([x]), v, rng, 1)
            v_new = v + sv * v1[0]
            done += 1
            if v_new > t:
                return x
            x = x + sy * y1[0]
            v = v_new
        if horizon >= cap:
            raise InsufficientHorizonError(f"clock still <= t after {cap} steps")
        horizon = min(2 * horizon, cap)


# ---------------------------------------------------------------- block engines


def _start(x0, dim, n):
    x0 = np.asarray(x0, dtype=float)
    if dim == 1:
        return np.full(n, float(x0))
    return np.tile(x0.reshape(1, 2), (n, 1))


def exponential_endpoints(k: JumpKernel, x0, h: float, t: float, n: int, rng) -> np.ndarray:
    """Z^h(t) for ``n`` independent replicas.

    The jump rate h^-alpha does not depend on the state, so the jump count is
    Poisson(t h^-alpha) and only the jump sizes are simulated.
    """
    counts = rng.poisson(t * h ** (-k.alpha), n)
    x = _start(x0, k.dim, n)
    for j in range(int(counts.max(initial=0))):
        live = np.flatnonzero(counts > j)
        x[live] = x[live] + h * k.sample(x[live], rng, live.size)
    return x


def discrete_endpoints(k: JumpKernel, x0, h: float, t: float, n: int, rng) -> np.ndarray:
    """S^h(floor(t / tau)) for ``n`` independent replicas, tau = h^alpha."""
    steps = step_count(t, h ** k.alpha)
    x = _start(x0, k.dim, n)
    if k.is_constant:
        for _ in range(steps):
            x += h * k.sample(x, rng, n)
        return x
    for _ in range(steps):
        x = x + h * k.sample(x, rng, n)
    return x


def double_walk_endpoints(dk: DoubleJumpKernel, x0, u0: float, tau: float, u_end: float, n: int, rng):
    """(Y, V) after floor(u_end / tau) steps of the double walk."""
    sy, sv = tau ** (1.0 / dk.alpha), tau ** (1.0 / dk.beta)
    x = _start(x0, dk.dim, n)
    v = np.full(n, float(u0))
    for _ in range(step_count(u_end, tau)):
        y1, v1 = dk.sample(x, v, rng, n)
        x = x + sy * y1
        v = v + sv * v1
    return x, v


@dataclass
class SubordinatedSample:
    """Replica block of the subordinated walk.

    ``y``: Y at the last step with V <= t; ``z``: hitting time (step k * tau
    where V first exceeds t); ``capped``: replicas that never exceeded t
    within the step cap (their ``y`` and ``z`` are NaN); ``y_grid``: optional
    Y(s) at the recorded grid of s values (one column per s).
    """

    y: np.ndarray
    z: np.ndarray
    capped: np.ndarray
    y_grid: np.ndarray | None = None
    s_grid: np.ndarray | None = None

    @staticmethod
    def concat(parts: list["SubordinatedSample"]) -> "SubordinatedSample":
        yg = None if parts[0].y_grid is None else np.concatenate([p.y_grid for p in parts])
        return SubordinatedSample(
            np.concatenate([p.y for p in parts]),
            np.concatenate([p.z for p in parts]),
            np.concatenate([p.capped for p in parts]),
            yg,
            parts[0].s_grid,
        )


def subordinated_endpoints(
    dk: DoubleJumpKernel,
    x0,
    tau: float,
    t: float,
    n: int,
    rng,
    cap: int = STEP_CAP,
    s_grid=None,
) -> SubordinatedSample:
    """Vectorised subordinated walk from (x0, 0) for ``n`` replicas.

    Replicas leave the active set once their clock exceeds ``t`` and, when
    ``s_grid`` is given, once Y has been recorded at every s in it.
    """
    if dk.dim != 1:
        raise DomainError("the block engine supports d=1 only")
    sy, sv = tau ** (1.0 / dk.alpha), tau ** (1.0 / dk.beta)
    x = np.full(n, float(x0))
    v = np.zeros(n)
    y_out = np.full(n, np.nan)
    z_out = np.full(n, np.nan)
    hit = np.zeros(n, dtype=bool)
    rec_steps = None
    y_grid = None
    need = 0
    if s_grid is not None:
        s_grid = np.asarray(s_grid, dtype=float)
        rec_steps = np.array([step_count(s, tau) for s in s_grid])
        y_grid = np.full((n, len(s_grid)), np.nan)
        need = int(rec_steps.max(initial=0))
        y_grid[:, rec_steps == 0] = x[:, None]
    live = np.arange(n)
    step = 0
    while live.size and step < cap:
        step += 1
        y1, v1 = dk.sample(x[live], v[live], rng, live.size)
        v_new = v[live] + sv * v1
        first = (~hit[live]) & (v_new > t)
        if first.any():
            idx = live[first]
            y_out[idx] = x[idx]
            z_out[idx] = step * tau
            hit[idx] = True
        x[live] = x[live] + sy * y1
        v[live] = v_new
        if rec_steps is not None:
            cols = np.flatnonzero(rec_steps == step)
            if cols.size:
                y_grid[np.ix_(live, cols)] = x[live][:, None]
        keep = ~hit[live] | (step < need)
        live = live[keep]
    capped = ~hit
    return SubordinatedSample(y_out, z_out, capped, y_grid, s_grid)


# ---------------------------------------------------------------- estimators


def monte_carlo_expectation(
    runner: Callable,
    f: Callable,
    N: int,
    master_seed: int,
    key=(),
    block_size: int = BLOCK_SIZE,
    threads: int | None = None,
) -> tuple[float, float]:
    """Mean and standard error of f over N replicas.

    ``runner(size, rng)`` draws a block of replicas and ``f`` maps them to an
    array of observable values. Blocks use fixed streams and sums are
    compensated, so the result does not depend on ``threads``.
    """
    if N < 2:
        raise DomainError("need at least two replicas")
    parts = map_blocks(lambda b, size, rng: np.asarray(f(runner(size, rng)), dtype=float),
                       N, master_seed, key, block_size, threads)
    vals = np.concatenate(parts)
    mean = math.fsum(vals) / N
    var = math.fsum((vals - mean) ** 2) / (N - 1)
    return mean, math.sqrt(var / N)


def _check_edges(edges):
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or len(edges) < 2:
        raise DomainError("need at least two bin edges")
    w = np.diff(edges)
    if np.any(w <= 0) or not np.allclose(w, w[0], rtol=1e-9, atol=0):
        raise DomainError("bins must be uniform and increasing")
    return edges


@dataclass
class EmpiricalDensity:
    edges: np.ndarray
    counts: np.ndarray
    total: int
    below: int = 0
    above: int = 0

    @property
    def width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.total * self.width)

    @property
    def stderr(self) -> np.ndarray:
        p = self.counts / self.total
        return np.sqrt(p * (1 - p) / self.total) / self.width

    @property
    def in_range_mass(self) -> float:
        return float(self.counts.sum() / self.total)

    @property
    def out_of_range_mass(self) -> float:
        return float((self.below + self.above) / self.total)


def estimate_density(samples, bins) -> EmpiricalDensity:
    """Histogram density count / (N * width); NaN samples count as out of range."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("empty sample")
    edges = _check_edges(bins)
    counts, _ = np.histogram(x[np.isfinite(x)], edges)
    below = int(np.sum(x < edges[0]))
    above = int(np.sum(x > edges[-1]))
    return EmpiricalDensity(edges, counts, x.size, below, above + int(np.sum(~np.isfinite(x))))


@dataclass
class EmpiricalDensity2D:
    x_edges: np.ndarray
    u_edges: np.ndarray
    counts: np.ndarray
    total: int

    @property
    def cell_area(self) -> float:
        return float((self.x_edges[1] - self.x_edges[0]) * (self.u_edges[1] - self.u_edges[0]))

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.total * self.cell_area)

    @property
    def stderr(self) -> np.ndarray:
        p = self.counts / self.total
        return np.sqrt(p * (1 - p) / self.total) / self.cell_area


def estimate_density_2d(xs, us, x_edges, u_edges) -> EmpiricalDensity2D:
    xs = np.asarray(xs, dtype=float).ravel()
    us = np.asarray(us, dtype=float).ravel()
    if xs.size == 0:
        raise DomainError("empty sample")
    xe, ue = _check_edges(x_edges), _check_edges(u_edges)
    counts, _, _ = np.histogram2d(xs, us, [xe, ue])
    return EmpiricalDensity2D(xe, ue, counts, xs.size)
