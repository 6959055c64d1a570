"""Grid discretisations of the stable-like generators and their semigroups.

Spatial term, for symmetric S and a node x:

    Lf(x) = S(x) int_0^inf D(r) r^(-1-alpha) dr,   D(r) = f(x+r) + f(x-r) - 2 f(x)

D(r) / r^2 is smooth, so it is interpolated linearly on the radial nodes r_j = j dx
(E is even, so E(0) is taken as E(r_1)) and integrated exactly against
r^(1-alpha). Functions are extended by zero off the grid; past the last radial
node both x +- r are off the grid, D = -2 f(x) and the tail is added in closed
form. The result is a symmetric Toeplitz stencil, second order in dx for every
alpha in (0, 2).

Temporal term of the double generator, one-sided:

    int_0^inf (f(u+v) - f(u)) v^(-1-beta) w dv

handled the same way with (f(u+v) - f(u)) / v interpolated against v^(-beta);
that quotient is not even, so the first cell is order 2 - beta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DomainError
from .jump_kernels import JumpKernel
from .stable_core import SpectralDensity, check_alpha, check_beta

__all__ = [
    "Grid",
    "GridFunction",
    "spatial_stencil",
    "temporal_stencil",
    "generator_matrix",
    "apply_generator",
    "apply_generator_all",
    "apply_double_generator",
    "apply_double_generator_all",
    "temporal_term_all",
    "stable_dt",
    "evolve_pde",
    "markov_weights",
    "markov_step",
    "evolve_markov_scheme",
    "ConvergenceRow",
    "convergence_table",
    "trend_ok",
]

MIN_NODES = 16


@dataclass(frozen=True)
class Grid:
    """Uniform grid. ``dim=1``: x only; ``dim=2``: (x, u) with u starting at 0."""

    lower: tuple
    upper: tuple
    spacing: tuple

    def __post_init__(self):
        if not (len(self.lower) == len(self.upper) == len(self.spacing)) or len(self.lower) not in (1, 2):
            raise DomainError("grid bounds must all have length 1 or 2")
        for lo, hi, dx in zip(self.lower, self.upper, self.spacing):
            if not dx > 0:
                raise DomainError("grid spacing must be positive")
            if not hi > lo:
                raise DomainError("grid upper bound must exceed the lower bound")
        for n in self.shape:
            if n < MIN_NODES:
                raise DomainError(f"need at least {MIN_NODES} nodes per axis, got {n}")
        if self.dim == 2 and self.lower[1] != 0.0:
            raise DomainError("the u-axis of a product grid must start at 0")

    @classmethod
    def line(cls, lower: float, upper: float, spacing: float) -> "Grid":
        return cls((float(lower),), (float(upper),), (float(spacing),))

    @classmethod
    def product(cls, x_lower, x_upper, dx, u_upper, du) -> "Grid":
        return cls((float(x_lower), 0.0), (float(x_upper), float(u_upper)), (float(dx), float(du)))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def shape(self) -> tuple:
        return tuple(int(round((hi - lo) / dx)) + 1 for lo, hi, dx in zip(self.lower, self.upper, self.spacing))

    def axis(self, i: int = 0) -> np.ndarray:
        return self.lower[i] + self.spacing[i] * np.arange(self.shape[i])

    @property
    def x(self) -> np.ndarray:
        return self.axis(0)

    @property
    def u(self) -> np.ndarray:
        if self.dim != 2:
            raise DomainError("a line grid has no u-axis")
        return self.axis(1)

    def node_index(self, value: float, axis: int = 0) -> int:
        lo, dx, n = self.lower[axis], self.spacing[axis], self.shape[axis]
        q = (value - lo) / dx
        i = int(round(q))
        if i < 0 or i >= n or abs(q - i) > 1e-6:
            raise DomainError(f"{value!r} is not a node of axis {axis}")
        return i


@dataclass
class GridFunction:
    grid: Grid
    values: np.ndarray
    boundary: str = "zero"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise DomainError(f"values have shape {self.values.shape}, grid has {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            bad = np.argwhere(~np.isfinite(self.values))[0]
            raise DomainError(f"non-finite value at node {tuple(int(b) for b in bad)}")
        if self.boundary != "zero":
            raise DomainError("only zero extension is supported")

    @classmethod
    def from_callable(cls, grid: Grid, fn: Callable) -> "GridFunction":
        if grid.dim == 1:
            return cls(grid, fn(grid.x))
        X, U = np.meshgrid(grid.x, grid.u, indexing="ij")
        return cls(grid, fn(X, U))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def mass(self) -> float:
        return float(np.sum(self.values) * np.prod(self.grid.spacing))


# ---------------------------------------------------------------- stencils


def _cell_moments(a, b, p):
    """int_a^b r^p dr for p > -1."""
    return (b ** (p + 1) - a ** (p + 1)) / (p + 1)


def _hat_weights(n_nodes: int, dx: float, power: float) -> np.ndarray:
    """c_j = int phi_j(r) r^power dr, j = 0..n_nodes-1, for hat functions on r_j = j dx."""
    r = dx * np.arange(n_nodes)
    a, b = r[:-1], r[1:]
    k0 = _cell_moments(a, b, power)
    k1 = _cell_moments(a, b, power + 1)
    left = (b * k0 - k1) / dx
    right = (k1 - a * k0) / dx
    c = np.zeros(n_nodes)
    c[:-1] += left
    c[1:] += right
    return c


def spatial_stencil(alpha: float, dx: float, n: int):
    """Coefficients (a_1..a_J, kappa) with

        int_0^inf D(r) r^(-1-alpha) dr ~= sum_j a_j (f(x+r_j) + f(x-r_j)) - kappa f(x)

    for a grid of ``n`` nodes (J = n, so r_J lies off the grid on both sides).
    """
    check_alpha(alpha)
    J = n
    c = _hat_weights(J + 1, dx, 1.0 - alpha)
    r = dx * np.arange(J + 1)
    a = np.zeros(J + 1)
    a[1:] = c[1:] / r[1:] ** 2
    # E is even in r, so E(0) = E(r_1) is second order and keeps every a_j > 0
    a[1] += c[0] / r[1] ** 2
    tail = r[J] ** (-alpha) / alpha
    kappa = 2.0 * (a[1:].sum() + tail)
    return a[1:], kappa


def temporal_stencil(beta: float, du: float, n: int):
    """Coefficients for the one-sided term on a u-axis of ``n`` nodes.

    Returns (b_1..b_n, diag) where for node i (0-based)

        int_0^inf (f(u_i+v) - f(u_i)) v^(-1-beta) dv
            ~= sum_{j=1}^{n-1-i} b_j f(u_{i+j}) - diag[i] f(u_i)

    Node i reaches m = n - i radial nodes; v_m is the first one off the grid,
    where the closed-form tail -f(u_i) v_m^(-beta) / beta takes over.
    """
    check_beta(beta)
    v = du * np.arange(n + 1)
    c = _hat_weights(n + 1, du, -beta)
    lo, hi = v[:-1], v[1:]
    k0 = _cell_moments(lo, hi, -beta)
    k1 = _cell_moments(lo, hi, 1 - beta)
    right = (k1 - lo * k0) / du  # share of cell [v_{m-1}, v_m] carried by node m
    b = np.zeros(n + 1)
    b[1:] = c[1:] / v[1:]
    # G(0) = G(v_1) for G = F / v: local order 2 - beta, but every b_j stays positive
    ext = c[0] / v[1]
    b[1] += ext
    m = n - np.arange(n)
    interior = np.concatenate([[0.0], np.cumsum(c[1:] / v[1:])])
    diag = interior[m - 1] + right[m - 1] / v[m] + ext + v[m] ** (-beta) / beta
    return b[1:], diag


def _s_weight(S, x, u=None):
    """S(x, +1) on nodes (S must be symmetric); S may also be a callable S(x, u)."""
    if isinstance(S, SpectralDensity):
        if S.dim != 1:
            raise DomainError("grid generators are one-dimensional in space")
        return np.broadcast_to(np.asarray(S(x, 1.0), dtype=float), np.shape(x)).astype(float)
    if u is None:
        return np.broadcast_to(np.asarray(S(x), dtype=float), np.shape(x)).astype(float)
    return np.broadcast_to(np.asarray(S(x, u), dtype=float), np.broadcast(x, u).shape).astype(float)


def _sym_kernel(a):
    return np.concatenate([a[::-1], [0.0], a])


def _toeplitz_apply(a, f):
    """sum_j a_j (f_{i+j} + f_{i-j}) with zero extension, along axis 0."""
    k = _sym_kernel(a)
    n = f.shape[0]
    if f.ndim == 1:
        return np.convolve(f, k)[len(a): len(a) + n]
    return np.stack([np.convolve(f[:, m], k)[len(a): len(a) + n] for m in range(f.shape[1])], axis=1)


def generator_matrix(S, alpha: float, grid: Grid) -> np.ndarray:
    """Dense matrix of the discretised L on a line grid."""
    if grid.dim != 1:
        raise DomainError("generator_matrix needs a line grid")
    n = grid.shape[0]
    a, kappa = spatial_stencil(alpha, grid.spacing[0], n)
    idx = np.arange(n)
    off = np.abs(idx[:, None] - idx[None, :])
    T = np.where(off > 0, np.concatenate([[0.0], a])[np.minimum(off, n)], 0.0)
    s = _s_weight(S, grid.x)
    return s[:, None] * (T - kappa * np.eye(n))


def apply_generator_all(S, alpha: float, f: GridFunction, dual: bool = False) -> np.ndarray:
    """L f on every node (or its transpose L* f with ``dual``)."""
    g = f.grid
    n = g.shape[0]
    a, kappa = spatial_stencil(alpha, g.spacing[0], n)
    if g.dim == 1:
        s = _s_weight(S, g.x)
    else:
        X, U = np.meshgrid(g.x, g.u, indexing="ij")
        s = _s_weight(S, X, U) if not isinstance(S, SpectralDensity) else _s_weight(S, X)
    v = f.values
    if dual:
        sv = s * v
        return _toeplitz_apply(a, sv) - kappa * sv
    return s * (_toeplitz_apply(a, v) - kappa * v)


def apply_generator(S, alpha: float, f: GridFunction, x: float) -> float:
    """L f at the grid node ``x``."""
    if f.grid.dim != 1:
        raise DomainError("apply_generator needs a line grid; use apply_double_generator")
    lo, hi = f.grid.lower[0], f.grid.upper[0]
    if not lo <= x <= hi:
        raise DomainError(f"x={x!r} lies outside the grid [{lo}, {hi}]")
    i = f.grid.node_index(x)
    n = f.grid.shape[0]
    a, kappa = spatial_stencil(alpha, f.grid.spacing[0], n)
    v = f.values
    j = np.arange(1, n + 1)
    plus = np.where(i + j < n, v[np.minimum(i + j, n - 1)], 0.0)
    minus = np.where(i - j >= 0, v[np.maximum(i - j, 0)], 0.0)
    s = float(_s_weight(S, np.array([x]))[0])
    return s * (float(np.dot(a, plus + minus)) - kappa * v[i])


def _w_values(w, X, U, beta):
    if w is None:
        return np.full(np.shape(X), float(beta))
    if callable(w):
        return np.broadcast_to(np.asarray(w(X, U), dtype=float), np.shape(X))
    return np.full(np.shape(X), float(w))


def temporal_term_all(w, beta: float, f: GridFunction) -> np.ndarray:
    g = f.grid
    nu = g.shape[1]
    b, diag = temporal_stencil(beta, g.spacing[1], nu)
    v = f.values
    out = -diag[None, :] * v
    # forward sums sum_j b_j f(u_{i+j}) by correlation along u
    for i in range(nu - 1):
        m = nu - 1 - i
        out[:, i] += v[:, i + 1:] @ b[:m]
    X, U = np.meshgrid(g.x, g.u, indexing="ij")
    return _w_values(w, X, U, beta) * out


def apply_double_generator_all(S, w, alpha: float, beta: float, f: GridFunction) -> np.ndarray:
    """Spatial term plus one-sided temporal term on every node of a product grid.

    ``w`` is a constant, a callable w(x, u), or None for the built-in w = beta.
    """
    if f.grid.dim != 2:
        raise DomainError("the double generator needs an (x, u) product grid")
    return apply_generator_all(S, alpha, f) + temporal_term_all(w, beta, f)


def apply_double_generator(S, w, alpha: float, beta: float, f: GridFunction, node) -> float:
    x, u = node
    if u < 0:
        raise DomainError("u must be non-negative")
    g = f.grid
    if not (g.lower[0] <= x <= g.upper[0] and u <= g.upper[1]):
        raise DomainError(f"node {node!r} lies outside the grid")
    i, k = g.node_index(x, 0), g.node_index(u, 1)
    return float(apply_double_generator_all(S, w, alpha, beta, f)[i, k])


# ---------------------------------------------------------------- time stepping


def stable_dt(S, alpha: float, grid: Grid) -> float:
    """Largest dt with dt * max_x sum_k |weights_k(x)| <= 0.9."""
    n = grid.shape[0]
    a, kappa = spatial_stencil(alpha, grid.spacing[0], n)
    s = _s_weight(S, grid.x)
    row = np.max(s) * (2 * a.sum() + kappa)
    return 0.9 / row


def evolve_pde(S, alpha: float, f0: GridFunction, t_end: float, dt: float, dual: bool = False) -> GridFunction:
    """Forward Euler for df/dt = L f (``dual``: the density equation dp/dt = L* p).

    The step count is ceil(t_end / dt) with the step shrunk to land on t_end.
    """
    if f0.grid.dim != 1:
        raise DomainError("evolve_pde works on line grids")
    limit = stable_dt(S, alpha, f0.grid)
    if dt > limit * (1 + 1e-12):
        raise ConfigError(f"dt={dt!r} violates the explicit stability bound dt <= {limit!r}")
    if t_end < 0:
        raise DomainError("t_end must be non-negative")
    steps = int(math.ceil(t_end / dt - 1e-12)) if t_end > 0 else 0
    h = t_end / steps if steps else 0.0
    f = GridFunction(f0.grid, f0.values.copy())
    for _ in range(steps):
        f.values = f.values + h * apply_generator_all(S, alpha, f, dual=dual)
    return f


# ---------------------------------------------------------------- Markov scheme


def markov_weights(k: JumpKernel, h: float, dx: float, n: int, x: float = 0.0) -> np.ndarray:
    """W_j = int phi_j(h R) dF(R) for hat functions on z_j = j dx, j = 0..n.

    Built from the radial CDF and partial first moment, so W_j >= 0 and
    sum_j W_j <= 1 hold exactly up to a final clip and renormalisation.
    """
    z = dx * np.arange(n + 1)
    F, M = k.radial_partial_moments(z / h, x)
    M = h * M
    dF, dM = np.diff(F), np.diff(M)
    a, b = z[:-1], z[1:]
    W = np.zeros(n + 1)
    W[:-1] += (b * dF - dM) / dx
    W[1:] += (dM - a * dF) / dx
    W = np.maximum(W, 0.0)
    s = W.sum()
    if s > 1.0:
        W /= s
    return W


def markov_step(k: JumpKernel, h: float, f: GridFunction) -> GridFunction:
    """R_h f(x) = int f(x + h y) p(x; dy) with f linear between nodes and zero off the grid."""
    g = f.grid
    if g.dim != 1 or k.dim != 1:
        raise DomainError("the Markov scheme runs on line grids")
    n = g.shape[0]
    dx = g.spacing[0]
    v = f.values
    if k.is_constant:
        W = markov_weights(k, h, dx, n)
        # symmetric S: each sign carries half the mass
        kern = 0.5 * np.concatenate([W[:0:-1], [2 * W[0]], W[1:]])
        out = np.convolve(v, kern)[n: 2 * n]
        return GridFunction(g, out)
    out = np.empty(n)
    pad = np.concatenate([np.zeros(n), v, np.zeros(n)])
    for i, xi in enumerate(g.x):
        W = markov_weights(k, h, dx, n, np.array([xi]))
        ps = float(k.spectral(xi, 1.0) / k.spectral.mass(np.array([xi]))[0])
        fwd = pad[n + i: 2 * n + i + 1]
        bwd = pad[n + i - n: n + i + 1][::-1]
        out[i] = ps * np.dot(W, fwd) + (1 - ps) * np.dot(W, bwd)
    return GridFunction(g, out)


def evolve_markov_scheme(k: JumpKernel, h: float, f0: GridFunction, steps: int, check: bool = True) -> GridFunction:
    """f_k = R_h^k f0; with ``check`` each step is verified to be a sup-norm contraction."""
    f = f0
    for _ in range(int(steps)):
        nf = markov_step(k, h, f)
        if check and nf.sup() > f.sup():
            raise AssertionError("R_h increased the sup norm")
        f = nf
    return f


# ---------------------------------------------------------------- convergence studies


@dataclass
class ConvergenceRow:
    h: float
    error: float
    stderr: float
    nodes: int


def trend_ok(rows: Sequence[ConvergenceRow]) -> bool:
    """Errors decrease along the h-list, up to two combined standard errors."""
    for r0, r1 in zip(rows, rows[1:]):
        slack = 2 * math.hypot(r0.stderr, r1.stderr)
        if not r1.error < r0.error + slack:
            return False
    return True


def convergence_table(scheme: Callable, oracle: Callable, h_list: Sequence[float], probes) -> list[ConvergenceRow]:
    """One row per h: sup over ``probes`` of |scheme - oracle|.

    ``scheme(h)`` returns ``(values, stderr, nodes)`` at the probe points and
    ``oracle(probes)`` the reference values.
    """
    h_list = [float(h) for h in h_list]
    if any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise DomainError("h-list must be strictly decreasing")
    ref = np.asarray(oracle(probes), dtype=float)
    rows = []
    for h in h_list:
        vals, se, nodes = scheme(h)
        err = np.abs(np.asarray(vals, dtype=float) - ref)
        i = int(np.argmax(err))
        se_i = float(np.broadcast_to(np.asarray(se, dtype=float), err.shape)[i])
        rows.append(ConvergenceRow(h, float(err[i]), se_i, int(nodes)))
    return rows
