"""Hitting times of subordinators, the subordination integral and fractional residuals.

For an increasing clock X(u) with X(0) = 0 the hitting time of level t is
Z(t) = inf{u : X(u) > t}. Its law follows from the marginals G(u, .) of X:

    P(Z(t) <= u) = P(X(u) > t),   Q(t, u) = -d/du int_0^t G(u, y) dy.

A process Y run on the clock Z has the density

    g(t, x, y) = int_0^inf T(u, x, y) Q(t, u) du

when Y and X are independent. Conventions: the stable clock with index beta
and scale c has E exp(-s X(u)) = exp(-u c s^beta); for c = 1 and beta = 1/2
the hitting density is exp(-u^2 / (4t)) / sqrt(pi t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .errors import DivergenceError, DomainError, NumericError
from .stable_core import (
    c_alpha,
    check_alpha,
    check_beta,
    one_sided_stable_cdf,
    one_sided_stable_pdf,
    sample_one_sided_stable,
    subordinator_density,
)
from .walk_sim import (
    EmpiricalDensity,
    EmpiricalDensity2D,
    SubordinatedSample,
    WalkPath,
    estimate_density,
    estimate_density_2d,
)

__all__ = [
    "SubordinatorSpec",
    "sample_subordinator_path",
    "hitting_times",
    "clock_values",
    "GGrid",
    "g_grid",
    "default_y_axis",
    "QProfile",
    "HittingDensityGrid",
    "hitting_density_from_G",
    "hitting_density_grid",
    "stable_hitting_grid",
    "inverse_stable_density",
    "HittingLaw",
    "QuadResult",
    "subordinate_density",
    "subordinate_expectation",
    "subordinate_density_grid",
    "stable_transition",
    "gl_weights",
    "fractional_derivative_rl",
    "fractional_derivative_rl_all",
    "ResidualGrid",
    "residual_eqonQ4",
    "residual_fracforward",
    "empirical_joint_density",
    "diagonal_density",
    "direct_density",
    "MIN_JOINT_PATHS",
]

# neglected second moment of the small jumps per unit time
SMALL_JUMP_VARIANCE = 1e-6
NEGATIVE_MASS_TOL = 1e-3
MIN_JOINT_PATHS = 1000


def _stable_levy_constant(beta: float, scale: float) -> float:
    """c with nu(y) = c y^(-1-beta) for the Laplace exponent scale * s^beta."""
    return scale * beta / math.gamma(1.0 - beta)


# ---------------------------------------------------------------- subordinator specs


@dataclass(frozen=True)
class SubordinatorSpec:
    """An increasing Levy or Levy-type clock.

    ``mode``:

    * ``"stable"``: Laplace exponent ``scale * s^beta``; sampled exactly.
    * ``"levy"``: drift ``drift`` plus Levy density ``nu(y)``. Jumps are drawn
      by thinning the dominating stable envelope ``env_c * y^(-1-env_beta)``,
      so ``nu <= envelope`` is required. ``nu=None`` is the pure drift.
    * ``"position"``: ``nu(x, y) = scale * b/Gamma(1-b) * y^(-1-b)`` with
      ``b = beta_fn(x)`` kept inside ``beta_window``, drift ``drift_fn(x)``.
    """

    mode: str
    beta: float | None = None
    scale: float = 1.0
    drift: float = 0.0
    nu: Callable | None = None
    env_c: float | None = None
    env_beta: float | None = None
    beta_fn: Callable | None = None
    drift_fn: Callable | None = None
    beta_window: tuple | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("stable", "levy", "position"):
            raise DomainError(f"unknown subordinator mode {self.mode!r}")
        if not self.scale > 0:
            raise DomainError("scale must be positive")
        if self.drift < 0:
            raise DomainError("drift must be non-negative")
        if self.mode == "stable":
            check_beta(self.beta)
        elif self.mode == "levy":
            if self.nu is None and not self.drift > 0:
                raise DomainError("a clock without jumps needs a positive drift")
            if self.nu is not None:
                if self.env_c is None or self.env_beta is None:
                    raise DomainError("a Levy density needs a dominating envelope (env_c, env_beta)")
                check_beta(self.env_beta)
                self._check_levy_density()
        else:
            if self.beta_fn is None or self.beta_window is None:
                raise DomainError("position mode needs beta_fn and beta_window")
            b1, b2 = self.beta_window
            check_beta(b1)
            check_beta(b2)
            if not b1 <= b2:
                raise DomainError("beta_window must be ordered")

    # -- constructors

    @classmethod
    def stable(cls, beta: float, scale: float = 1.0) -> "SubordinatorSpec":
        return cls("stable", beta=beta, scale=scale, name="stable", params={"beta": beta, "scale": scale})

    @classmethod
    def pure_drift(cls, a: float) -> "SubordinatorSpec":
        return cls("levy", drift=a, name="drift", params={"a": a})

    @classmethod
    def tempered(cls, beta: float, lam: float, scale: float = 1.0, drift: float = 0.0) -> "SubordinatorSpec":
        """nu(y) = scale * beta/Gamma(1-beta) * y^(-1-beta) * exp(-lam y)."""
        check_beta(beta)
        if not lam > 0:
            raise DomainError("tempering rate must be positive")
        c = _stable_levy_constant(beta, scale)
        return cls(
            "levy",
            drift=drift,
            nu=lambda y: c * np.asarray(y, dtype=float) ** (-1 - beta) * np.exp(-lam * np.asarray(y, dtype=float)),
            env_c=c,
            env_beta=beta,
            name="tempered",
            params={"beta": beta, "lam": lam, "scale": scale, "drift": drift},
        )

    @classmethod
    def position_dependent(cls, beta_fn: Callable, beta_window, drift_fn: Callable | None = None, scale: float = 1.0):
        return cls(
            "position",
            scale=scale,
            beta_fn=beta_fn,
            drift_fn=drift_fn,
            beta_window=tuple(beta_window),
            name="position",
            params={"beta_window": list(beta_window), "scale": scale},
        )

    # -- checks

    def _check_levy_density(self):
        ys = np.geomspace(1e-8, 1e4, 97)
        vals = np.asarray(self.nu(ys), dtype=float)
        env = self.env_c * ys ** (-1 - self.env_beta)
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise DomainError("Levy density must be finite and non-negative")
        if np.any(vals > env * (1 + 1e-12)):
            raise DomainError("Levy density exceeds its envelope")
        if not math.isfinite(self.small_jump_integral()):
            raise DomainError("int min(1, y) nu(y) dy diverges")

    def small_jump_integral(self) -> float:
        """int_0^inf min(1, y) nu(y) dy (numerically)."""
        if self.mode == "stable":
            c = _stable_levy_constant(self.beta, self.scale)
            return c / (1 - self.beta) + c / self.beta
        if self.nu is None:
            return 0.0
        a, _ = integrate.quad(lambda y: y * float(self.nu(y)), 0.0, 1.0, limit=200)
        b, _ = integrate.quad(lambda y: float(self.nu(y)), 1.0, np.inf, limit=200)
        return a + b

    def small_jump_lower_bound(self, beta: float, eps: float = 1e-2) -> float:
        """Estimated c in nu(y) >= c y^(-1-beta) on (0, eps); 0 means the bound fails."""
        ys = np.geomspace(eps * 1e-6, eps, 61)
        if self.mode == "stable":
            vals = _stable_levy_constant(self.beta, self.scale) * ys ** (-1 - self.beta)
        elif self.nu is None:
            return 0.0
        else:
            vals = np.asarray(self.nu(ys), dtype=float)
        return float(np.min(vals * ys ** (1 + beta)))

    @property
    def is_stable(self) -> bool:
        return self.mode == "stable"

    def laplace_exponent(self, s):
        """phi(s) with E exp(-s X(u)) = exp(-u phi(s)); position-independent modes only."""
        s = np.asarray(s, dtype=float)
        if self.mode == "stable":
            return self.scale * s ** self.beta
        if self.mode == "position":
            raise DomainError("a position-dependent clock has no Laplace exponent")
        out = self.drift * s
        if self.nu is None:
            return out

        def one(sv):
            a, _ = integrate.quad(lambda y: -math.expm1(-sv * y) * float(self.nu(y)), 0.0, 1.0, limit=200)
            b, _ = integrate.quad(lambda y: -math.expm1(-sv * y) * float(self.nu(y)), 1.0, np.inf, limit=200)
            return a + b

        return out + np.vectorize(one)(s)


def _cutoff(c: float, beta: float) -> float:
    """delta with int_0^delta y^2 c y^(-1-beta) dy = SMALL_JUMP_VARIANCE."""
    return ((2 - beta) * SMALL_JUMP_VARIANCE / c) ** (1.0 / (2 - beta))


def _levy_parts(spec: SubordinatorSpec):
    """(delta, rate of envelope jumps above delta, small-jump compensation)."""
    if spec.nu is None:
        return None, 0.0, 0.0
    c, b = spec.env_c, spec.env_beta
    delta = _cutoff(c, b)
    rate = c * delta ** (-b) / b
    comp, _ = integrate.quad(lambda y: y * float(spec.nu(y)), 0.0, delta, limit=200)
    return delta, rate, comp


def _levy_jumps(spec, delta, rate, span, rng):
    """Jumps above delta over a u-interval of length ``span`` (thinned envelope)."""
    k = rng.poisson(rate * span)
    y = delta * (1.0 - rng.random(k)) ** (-1.0 / spec.env_beta)
    keep = rng.random(k) * spec.env_c * y ** (-1 - spec.env_beta) <= np.asarray(spec.nu(y), dtype=float)
    return y, keep


def _position_params(spec: SubordinatorSpec, x):
    b = np.asarray(spec.beta_fn(x), dtype=float)
    b1, b2 = spec.beta_window
    if np.any((b < b1 - 1e-12) | (b > b2 + 1e-12)):
        raise DomainError("beta_fn left its window")
    c = spec.scale * b / special.gamma(1 - b)
    delta = ((2 - b) * SMALL_JUMP_VARIANCE / c) ** (1.0 / (2 - b))
    rate = c * delta ** (-b) / b
    comp = c * delta ** (1 - b) / (1 - b)
    a = np.zeros_like(b) if spec.drift_fn is None else np.asarray(spec.drift_fn(x), dtype=float)
    if np.any(a < 0):
        raise DomainError("drift must be non-negative")
    return b, delta, rate, comp, a


def _increments(spec: SubordinatorSpec, x, du: float, rng, prep=None):
    """One mesh step of the clock for a vector of current values ``x``."""
    n = x.shape[0]
    if spec.mode == "stable":
        return (du * spec.scale) ** (1.0 / spec.beta) * sample_one_sided_stable(spec.beta, rng, n)
    if spec.mode == "levy":
        delta, rate, comp = prep
        inc = np.full(n, (spec.drift + comp) * du)
        if spec.nu is None:
            return inc
        k = rng.poisson(rate * du, n)
        tot = int(k.sum())
        if tot:
            y = delta * (1.0 - rng.random(tot)) ** (-1.0 / spec.env_beta)
            keep = rng.random(tot) * spec.env_c * y ** (-1 - spec.env_beta) <= np.asarray(spec.nu(y), dtype=float)
            owner = np.repeat(np.arange(n), k)
            inc += np.bincount(owner, weights=np.where(keep, y, 0.0), minlength=n)
        return inc
    b, delta, rate, comp, a = _position_params(spec, x)
    inc = (a + comp) * du
    k = rng.poisson(rate * du)
    tot = int(k.sum())
    if tot:
        owner = np.repeat(np.arange(n), k)
        y = delta[owner] * (1.0 - rng.random(tot)) ** (-1.0 / b[owner])
        inc = inc + np.bincount(owner, weights=y, minlength=n)
    return inc


def sample_subordinator_path(spec: SubordinatorSpec, u_max: float, rng, du: float | None = None) -> WalkPath:
    """Clock values on the mesh u_k = k du (default du = u_max / 1000).

    Stable mode is exact at the mesh points. Levy mode is exact at the mesh
    points up to the compensated small jumps below delta. Position mode freezes
    the jump law at the start of each mesh step.
    """
    if not u_max > 0:
        raise DomainError("u_max must be positive")
    du = u_max / 1000 if du is None else float(du)
    n = int(math.ceil(u_max / du - 1e-9))
    times = du * np.arange(n + 1)
    x = np.zeros(n + 1)
    prep = _levy_parts(spec) if spec.mode == "levy" else None
    if spec.mode == "levy":
        x[1:] = np.cumsum(_levy_path_increments(spec, n, du, rng, prep))
    elif spec.mode == "stable":
        x[1:] = np.cumsum(_increments(spec, np.zeros(n), du, rng))
    else:
        for k in range(n):
            x[k + 1] = x[k] + _increments(spec, x[k:k + 1], du, rng)[0]
    return WalkPath(times, x)


def _levy_path_increments(spec, n, du, rng, prep):
    delta, rate, comp = prep
    inc = np.full(n, (spec.drift + comp) * du)
    if spec.nu is None:
        return inc
    span = n * du
    y, keep = _levy_jumps(spec, delta, rate, span, rng)
    when = rng.random(y.size) * span
    cell = np.minimum((when / du).astype(int), n - 1)
    inc += np.bincount(cell, weights=np.where(keep, y, 0.0), minlength=n)
    return inc


def clock_values(spec: SubordinatorSpec, u: float, n: int, rng, du: float | None = None) -> np.ndarray:
    """X(u) for ``n`` independent clocks, stepped on the mesh of size ``du`` (default u / 100)."""
    if not u > 0:
        raise DomainError("u must be positive")
    du = u / 100 if du is None else float(du)
    steps = int(math.ceil(u / du - 1e-9))
    h = u / steps
    x = np.zeros(n)
    prep = _levy_parts(spec) if spec.mode == "levy" else None
    for _ in range(steps):
        x += _increments(spec, x, h, rng, prep)
    return x


def hitting_times(spec: SubordinatorSpec, t: float, n: int, rng, du: float, max_steps: int = 10**6) -> np.ndarray:
    """First mesh time u_k with X(u_k) > t for ``n`` independent clocks."""
    if not t > 0:
        raise DomainError("t must be positive")
    x = np.zeros(n)
    z = np.full(n, np.nan)
    live = np.arange(n)
    prep = _levy_parts(spec) if spec.mode == "levy" else None
    step = 0
    while live.size and step < max_steps:
        step += 1
        x[live] += _increments(spec, x[live], du, rng, prep)
        done = x[live] > t
        z[live[done]] = step * du
        live = live[~done]
    if live.size:
        raise NumericError(f"{live.size} clocks did not exceed t={t} within {max_steps} steps")
    return z


# ---------------------------------------------------------------- Q from G


@dataclass
class GGrid:
    """G(u, y) on a uniform u-axis starting at 0 and a positive increasing y-axis.

    The row u = 0 is the point mass of X(0) at the origin and is stored as zeros.
    """

    u: np.ndarray
    y: np.ndarray
    values: np.ndarray
    beta: float | None = None
    scale: float = 1.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.u.size, self.y.size):
            raise DomainError("G values must have shape (len(u), len(y))")
        if self.u[0] != 0.0 or np.any(np.diff(self.u) <= 0):
            raise DomainError("u-axis must start at 0 and increase")
        du = np.diff(self.u)
        if not np.allclose(du, du[0], rtol=1e-9, atol=0):
            raise DomainError("u-axis must be uniform")
        if self.y[0] <= 0 or np.any(np.diff(self.y) <= 0):
            raise DomainError("y-axis must be positive and increasing")

    @property
    def du(self) -> float:
        return float(self.u[1] - self.u[0])


def default_y_axis(beta: float, u_min: float, y_max: float, scale: float = 1.0, per_decade: int = 40) -> np.ndarray:
    """Log-spaced y-axis whose lower end carries negligible mass of X(u_min)."""
    check_beta(beta)
    c = (u_min * scale) ** (1.0 / beta)
    lo = c
    while one_sided_stable_cdf(np.array([lo / c]), beta)[0] > 1e-13 and lo > 1e-300:
        lo *= 0.1
    lo = min(lo, y_max * 1e-3)
    n = int(math.ceil(per_decade * math.log10(y_max / lo))) + 1
    return np.geomspace(lo, y_max, n)


def g_grid(beta: float, u: np.ndarray, y: np.ndarray, scale: float = 1.0) -> GGrid:
    """Marginal densities of the stable clock on a (u, y) grid."""
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    vals = np.zeros((u.size, y.size))
    vals[1:] = subordinator_density(u[1:, None], y[None, :], beta, scale)
    return GGrid(u, y, vals, beta, scale)


def _mass_below(G: GGrid, t: float) -> np.ndarray:
    """P(X(u) <= t) per u-node: trapezoid in ln y of y G(u, y), partial panel at t."""
    if not G.y[0] < t <= G.y[-1]:
        raise DomainError(f"t={t!r} must lie in the y-range ({G.y[0]}, {G.y[-1]}]")
    keep = G.y < t
    s = np.log(G.y[keep])
    F = G.values[1:, keep] * G.y[keep]
    # G at y = t itself, by linear interpolation in ln y of y G
    j = int(np.searchsorted(G.y, t))
    if G.y[j] == t:
        Ft = G.values[1:, j] * t
    else:
        w = (math.log(t) - math.log(G.y[j - 1])) / (math.log(G.y[j]) - math.log(G.y[j - 1]))
        Ft = (1 - w) * G.values[1:, j - 1] * G.y[j - 1] + w * G.values[1:, j] * G.y[j]
    ss = np.concatenate([s, [math.log(t)]])
    FF = np.concatenate([F, Ft[:, None]], axis=1)
    out = np.empty(G.u.size)
    out[0] = 1.0
    out[1:] = np.trapezoid(FF, ss, axis=1)
    return out


@dataclass
class QProfile:
    u: np.ndarray
    values: np.ndarray
    clipped_mass: float

    def mass(self) -> float:
        return float(np.trapezoid(self.values, self.u))


def hitting_density_from_G(G: GGrid, t: float, strict: bool = False) -> QProfile:
    """Q(t, .) on the u-axis of ``G``: mass below t per node, then -d/du.

    Central differences inside, second-order one-sided at both ends. Negative
    values are clipped to 0; their mass (trapezoid) is returned, and in strict
    mode a clipped mass above 1e-3 raises :class:`NumericError`.
    """
    P = _mass_below(G, t)
    du = G.du
    Q = np.empty_like(P)
    Q[1:-1] = -(P[2:] - P[:-2]) / (2 * du)
    Q[0] = -(-3 * P[0] + 4 * P[1] - P[2]) / (2 * du)
    Q[-1] = -(P[-3] - 4 * P[-2] + 3 * P[-1]) / (2 * du)
    neg = np.minimum(Q, 0.0)
    clipped = max(0.0, float(-np.trapezoid(neg, G.u)))
    if strict and clipped > NEGATIVE_MASS_TOL:
        raise NumericError(f"clipped negative mass {clipped:.3g} exceeds {NEGATIVE_MASS_TOL}")
    return QProfile(G.u.copy(), np.maximum(Q, 0.0), clipped)


@dataclass
class HittingDensityGrid:
    t: np.ndarray
    u: np.ndarray
    values: np.ndarray
    clipped_mass: np.ndarray | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.t.size, self.u.size):
            raise DomainError("Q values must have shape (len(t), len(u))")
        if np.any(self.values < 0):
            raise DomainError("Q must be non-negative")

    def masses(self) -> np.ndarray:
        return np.trapezoid(self.values, self.u, axis=1)

    def row(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.t - t)))
        if abs(self.t[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise DomainError(f"t={t!r} is not on the grid")
        return self.values[i]


def hitting_density_grid(G: GGrid, t_axis, strict: bool = False) -> HittingDensityGrid:
    rows = [hitting_density_from_G(G, float(t), strict) for t in t_axis]
    return HittingDensityGrid(
        np.asarray(t_axis, dtype=float), G.u, np.array([r.values for r in rows]), np.array([r.clipped_mass for r in rows])
    )


def stable_hitting_grid(
    beta: float,
    t_axis,
    u_max: float = 10.0,
    du: float = 0.01,
    scale: float = 1.0,
    per_decade: int = 40,
    strict: bool = False,
) -> HittingDensityGrid:
    """Q(t, u) of the stable clock through the G pipeline, for every t in ``t_axis``."""
    t_axis = np.asarray(t_axis, dtype=float)
    n = int(round(u_max / du))
    u = du * np.arange(n + 1)
    y = default_y_axis(beta, du, float(t_axis.max()), scale, per_decade)
    return hitting_density_grid(g_grid(beta, u, y, scale), t_axis, strict)


def _M(w, beta):
    """Q(1, w) for the unit stable clock.

    w <= 1: the Wright power series (1 / (pi beta)) sum_k c_k w^(k-1) obtained
    from the large-argument series of the one-sided density; w > 1: the density
    itself at w^(-1/beta).
    """
    from .stable_core import _series_terms

    w = np.asarray(w, dtype=float)
    out = np.empty(w.shape)
    small = w <= 1.0
    if np.any(small):
        k, coef = _series_terms(beta)
        ws = w[small][:, None]
        with np.errstate(under="ignore"):
            out[small] = (coef * ws ** (k - 1)).sum(axis=1) / (np.pi * beta)
    wl = w[~small]
    out[~small] = wl ** (-1 - 1 / beta) * one_sided_stable_pdf(wl ** (-1 / beta), beta) / beta
    return out


def inverse_stable_density(t, u, beta: float, scale: float = 1.0):
    """Q(t, u) = scale * t^-beta * M(scale * u * t^-beta), M = Q(1, .) of the unit clock.

    M follows from P(Z(1) <= w) = P(S > w^(-1/beta)) for the unit one-sided
    stable S; beta = 1/2 uses exp(-w^2/4) / sqrt(pi).
    """
    check_beta(beta)
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(t <= 0):
        raise DomainError("t must be positive")
    if np.any(u < 0):
        raise DomainError("u must be non-negative")
    tb = t ** (-beta)
    w = scale * u * tb
    if beta == 0.5:
        m = np.exp(-w * w / 4) / math.sqrt(math.pi)
    else:
        m = _M(w, beta)
    out = scale * tb * m
    return out if out.ndim else float(out)


# ---------------------------------------------------------------- subordination integral


@dataclass(frozen=True)
class HittingLaw:
    """Law of Z(t) as used by the subordination integral.

    ``density(t, u)``: vectorised density (None for a pure point mass);
    ``atom(t)``: location of a point mass, or None; ``u_scale(t)``: typical size
    of Z(t), used to place quadrature breakpoints; ``segments(t)``: optional
    explicit list of (a, b) intervals on which the density is smooth.
    """

    density: Callable | None
    atom: Callable | None = None
    u_scale: Callable = lambda t: 1.0
    segments: Callable | None = None
    name: str = "custom"

    @classmethod
    def stable(cls, beta: float, scale: float = 1.0) -> "HittingLaw":
        check_beta(beta)
        return cls(
            lambda t, u: inverse_stable_density(t, u, beta, scale),
            u_scale=lambda t: t ** beta / scale,
            name="stable",
        )

    @classmethod
    def drift(cls, a: float) -> "HittingLaw":
        if not a > 0:
            raise DomainError("drift must be positive")
        return cls(None, atom=lambda t: t / a, u_scale=lambda t: t / a, name="drift")

    @classmethod
    def from_spec(cls, spec: SubordinatorSpec) -> "HittingLaw":
        if spec.mode == "stable":
            return cls.stable(spec.beta, spec.scale)
        if spec.mode == "levy" and spec.nu is None:
            return cls.drift(spec.drift)
        raise DomainError("no closed-form hitting law for this clock; use HittingLaw.from_empirical")

    @classmethod
    def from_grid(cls, grid: HittingDensityGrid) -> "HittingLaw":
        """Piecewise-linear interpolation of a Q grid (zero past the last node)."""
        u = grid.u

        def dens(t, uu):
            return np.interp(uu, u, grid.row(float(t)), right=0.0)

        return cls(
            dens,
            u_scale=lambda t: 1.0,
            segments=lambda t: list(zip(u[:-1], u[1:])),
            name="grid",
        )

    @classmethod
    def from_empirical(cls, hist: EmpiricalDensity) -> "HittingLaw":
        """Histogram of sampled hitting times (valid for the t it was built at)."""
        e = hist.edges
        d = hist.density

        def dens(t, uu):
            uu = np.asarray(uu, dtype=float)
            i = np.clip(np.searchsorted(e, uu, side="right") - 1, 0, len(d) - 1)
            return np.where((uu >= e[0]) & (uu <= e[-1]), d[i], 0.0)

        return cls(dens, segments=lambda t: list(zip(e[:-1], e[1:])), name="empirical")


@dataclass
class QuadResult:
    value: float
    error: float


def _as_law(Q_provider) -> HittingLaw:
    if isinstance(Q_provider, HittingLaw):
        return Q_provider
    if callable(Q_provider):
        return HittingLaw(Q_provider)
    raise DomainError("Q_provider must be a HittingLaw or a callable Q(t, u)")


def _quad(fn, a, b):
    val, err = integrate.quad(fn, a, b, limit=200, epsabs=1e-13, epsrel=1e-10, full_output=1)[:2]
    return float(val), float(err)


def _refine_at_zero(fn, b, tol, max_decades=60):
    """int_0^b fn by decade pieces [b 10^-(k+1), b 10^-k], stopping on a geometric tail.

    Raises :class:`DivergenceError` when the pieces stop shrinking.
    """
    pieces = []
    total, err = 0.0, 0.0
    hi = b
    for k in range(max_decades):
        lo = hi * 0.1
        v, e = _quad(fn, lo, hi)
        pieces.append(v)
        total += v
        err += e
        hi = lo
        if k >= 3:
            r = max(abs(pieces[-1]) / max(abs(pieces[-2]), 1e-300), abs(pieces[-2]) / max(abs(pieces[-3]), 1e-300))
            if abs(pieces[-1]) <= 1e-300:
                return total, err
            if r < 0.8:
                tail = abs(pieces[-1]) * r / (1 - r)
                if tail <= max(tol, tol * abs(total)):
                    return total, err + tail
            elif k >= 8 and min(abs(p) for p in pieces[-5:]) > tol * max(1.0, abs(total)) * 1e-3:
                break
    raise DivergenceError(
        "integral does not converge at u -> 0",
        {"decade_pieces": pieces, "partial_sums": list(np.cumsum(pieces))},
    )


def _integrate_against_law(fn_u: Callable, law: HittingLaw, t: float, tol: float) -> QuadResult:
    if not t > 0:
        raise DomainError("t must be positive")
    if law.density is None:
        u0 = float(law.atom(t))
        return QuadResult(float(fn_u(u0)), 0.0)

    def integrand(u):
        return float(fn_u(u)) * float(law.density(t, u))

    if law.segments is not None:
        segs = law.segments(t)
        a0, b0 = segs[0]
        if a0 != 0.0:
            raise DomainError("the first segment of a hitting law must start at 0")
        total, err = _refine_at_zero(integrand, b0, tol)
        for a, b in segs[1:]:
            v, e = _quad(integrand, a, b)
            total += v
            err += e
        return QuadResult(total, err)
    s = float(law.u_scale(t))
    total, err = _refine_at_zero(integrand, s, tol)
    for a, b in ((s, 4 * s), (4 * s, 16 * s), (16 * s, np.inf)):
        v, e = _quad(integrand, a, b)
        total += v
        err += e
    if law.atom is not None:
        total += float(fn_u(float(law.atom(t))))
    return QuadResult(total, err)


def subordinate_density(T_provider: Callable, Q_provider, t: float, x: float, y: float, tol: float = 1e-9) -> QuadResult:
    """g(t, x, y) = int_0^inf T(u, x, y) Q(t, u) du with an error estimate.

    ``T_provider(u, x, y)`` is the transition density of the outer process.
    When T(u, x, y) blows up too fast as u -> 0 (y = x with alpha <= 1) the
    integral diverges and :class:`DivergenceError` carries the partial sums.
    """
    law = _as_law(Q_provider)
    return _integrate_against_law(lambda u: T_provider(u, x, y), law, t, tol)


def subordinate_expectation(semigroup_eval: Callable, Q_provider, t: float, x: float, tol: float = 1e-9) -> QuadResult:
    """E_x f(Y(Z(t))) = int_0^inf T_u f(x) Q(t, u) du, with ``semigroup_eval(u, x) = T_u f(x)``."""
    law = _as_law(Q_provider)
    return _integrate_against_law(lambda u: semigroup_eval(u, x), law, t, tol)


def stable_transition(alpha: float, sigma: float = 1.0) -> Callable:
    """T(u, x, y) of the symmetric stable process with symbol -sigma |p|^alpha (d=1).

    Closed form for alpha = 1; otherwise the quadrature density of stable_core.
    """
    check_alpha(alpha)
    if alpha == 1.0:

        def cauchy(u, x, y):
            u = np.asarray(u, dtype=float)
            s = sigma * u
            d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
            return s / (math.pi * (s * s + d * d))

        return cauchy
    from .stable_core import symmetric_stable_density_1d

    def general(u, x, y):
        uu = np.asarray(u, dtype=float)
        d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        if uu.ndim == 0:
            if uu <= 0:
                return np.zeros(np.shape(d)) if np.ndim(d) else 0.0
            return symmetric_stable_density_1d(float(uu), d, sigma, alpha)
        ub, db = np.broadcast_arrays(uu, d)
        out = np.zeros(ub.shape)
        for idx in np.ndindex(ub.shape):
            if ub[idx] > 0:
                out[idx] = symmetric_stable_density_1d(float(ub[idx]), float(db[idx]), sigma, alpha)
        return out

    return general


def _graded_nodes(w_max: float, w_min: float = 1e-12, ratio: float = 2.0, order: int = 16):
    """Gauss-Legendre nodes on [0, w_min] and geometric panels up to w_max."""
    x, wts = np.polynomial.legendre.leggauss(order)
    edges = [0.0, w_min]
    while edges[-1] < w_max:
        edges.append(min(edges[-1] * ratio, w_max))
    edges = np.array(edges)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (b - a) * x + 0.5 * (a + b)).ravel()
    weights = (0.5 * (b - a) * wts).ravel()
    return nodes, weights


def subordinate_density_grid(T_provider: Callable, law: HittingLaw, t_axis, y_axis, x: float = 0.0) -> np.ndarray:
    """g(t, x, y) on a (t, y) grid by one graded Gauss-Legendre rule in u / u_scale(t).

    Needs a vectorised ``T_provider`` and a law with a smooth density decaying
    beyond about 40 u_scale(t) (the stable laws). Rows with t <= 0 are left 0.
    """
    t_axis = np.asarray(t_axis, dtype=float)
    y_axis = np.asarray(y_axis, dtype=float)
    out = np.zeros((t_axis.size, y_axis.size))
    for i, t in enumerate(t_axis):
        if t <= 0:
            continue
        if law.density is None:
            out[i] = T_provider(float(law.atom(t)), x, y_axis)
            continue
        s = float(law.u_scale(t))
        w, wt = _graded_nodes(40.0)
        u = s * w
        q = np.asarray(law.density(t, u), dtype=float) * s * wt
        live = q > 0
        out[i] = q[live] @ T_provider(u[live, None], x, y_axis[None, :])
    return out


# ---------------------------------------------------------------- fractional calculus


def gl_weights(beta: float, n: int) -> np.ndarray:
    """w_0..w_n with w_k = (-1)^k binom(beta, k)."""
    w = np.empty(n + 1)
    w[0] = 1.0
    for k in range(1, n + 1):
        w[k] = w[k - 1] * (1.0 - (beta + 1.0) / k)
    return w


def fractional_derivative_rl(fgrid, beta: float, index: int, dt: float) -> float:
    """Grunwald-Letnikov value of the Riemann-Liouville derivative at t_index.

    ``fgrid[0]`` is f(0); the whole history back to 0 is used.
    """
    check_beta(beta, allow_one=True)
    f = np.asarray(fgrid, dtype=float)
    if not 1 <= index < f.size:
        raise DomainError("index must be at least 1 and inside the grid")
    if not math.isfinite(f[0]):
        raise DomainError("f(0) must be finite")
    w = gl_weights(beta, index)
    return float(np.dot(w, f[index::-1]) * dt ** (-beta))


def fractional_derivative_rl_all(values, beta: float, dt: float, axis: int = 0) -> np.ndarray:
    """The same derivative at every node along ``axis`` (row 0 of the result is f(0) dt^-beta)."""
    check_beta(beta, allow_one=True)
    v = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    n = v.shape[0]
    w = gl_weights(beta, n - 1)
    i = np.arange(n)
    lag = i[:, None] - i[None, :]
    W = np.where(lag >= 0, w[np.clip(lag, 0, n - 1)], 0.0)
    out = np.tensordot(W, v, axes=(1, 0)) * dt ** (-beta)
    return np.moveaxis(out, 0, axis)


@dataclass
class ResidualGrid:
    t: np.ndarray
    x: np.ndarray
    values: np.ndarray

    def window_max(self, t_range, x_range, absolute_x: bool = False) -> float:
        xx = np.abs(self.x) if absolute_x else self.x
        ti = (self.t >= t_range[0] - 1e-12) & (self.t <= t_range[1] + 1e-12)
        xi = (xx >= x_range[0] - 1e-12) & (xx <= x_range[1] + 1e-12)
        if not ti.any() or not xi.any():
            raise DomainError("empty residual window")
        return float(np.max(np.abs(self.values[np.ix_(ti, xi)])))


def _uniform_from_zero(axis, what):
    axis = np.asarray(axis, dtype=float)
    d = np.diff(axis)
    if axis[0] != 0.0 or not np.allclose(d, d[0], rtol=1e-9, atol=0):
        raise DomainError(f"the {what}-axis must be uniform and start at 0")
    return axis, float(d[0])


def residual_eqonQ4(qgrid: HittingDensityGrid, beta: float) -> ResidualGrid:
    """d^beta Q / dt^beta + dQ/du at t > 0 and interior u > 0.

    The t-axis must start at 0, where Q(0, u) = 0 for u > 0; the u-axis must be
    uniform. Away from u = 0 the source term vanishes, so this is the residual.
    """
    check_beta(beta)
    t, dt = _uniform_from_zero(qgrid.t, "t")
    u = qgrid.u
    du = np.diff(u)
    if not np.allclose(du, du[0], rtol=1e-9, atol=0):
        raise DomainError("the u-axis must be uniform")
    Q = qgrid.values
    D = fractional_derivative_rl_all(Q, beta, dt, axis=0)
    dQdu = (Q[:, 2:] - Q[:, :-2]) / (2 * du[0])
    res = D[1:, 1:-1] + dQdu[1:]
    keep = u[1:-1] > 0
    return ResidualGrid(t[1:], u[1:-1][keep], res[:, keep])


def residual_fracforward(ggrid, t_axis, y_axis, alpha: float, beta: float) -> ResidualGrid:
    """d^beta g / dt^beta minus the symmetric fractional derivative in y.

    ``ggrid[i, j] = g(t_i, y_j - x)`` on a uniform t-axis from 0 (g(0, .) = 0
    off the source) and a uniform y-axis that should avoid the source point.
    The spatial operator uses the grid generator with S = 1/(2 c_alpha), whose
    symbol is exactly -|p|^alpha.
    """
    from .semigroup_fd import Grid, GridFunction, apply_generator_all
    from .stable_core import constant_density

    check_alpha(alpha)
    check_beta(beta)
    t, dt = _uniform_from_zero(t_axis, "t")
    y = np.asarray(y_axis, dtype=float)
    g = np.asarray(ggrid, dtype=float)
    dy = float(y[1] - y[0])
    grid = Grid.line(float(y[0]), float(y[-1]), dy)
    if grid.shape[0] != y.size:
        raise DomainError("the y-axis must be uniform")
    S = constant_density(1.0 / (2.0 * c_alpha(alpha)), 1, alpha)
    D = fractional_derivative_rl_all(g, beta, dt, axis=0)
    spatial = np.array([apply_generator_all(S, alpha, GridFunction(grid, row)) for row in g[1:]])
    return ResidualGrid(t[1:], y, D[1:] - spatial)


# ---------------------------------------------------------------- joint law of (Y(s), Z(t))


def _usable(sample: SubordinatedSample):
    ok = ~sample.capped
    if int(ok.sum()) < MIN_JOINT_PATHS:
        raise DomainError(f"need at least {MIN_JOINT_PATHS} completed paths, got {int(ok.sum())}")
    return ok


def empirical_joint_density(sample: SubordinatedSample, s: float, y_edges, u_edges) -> EmpiricalDensity2D:
    """Histogram of (Y(s), Z(t)); ``s`` must be one of the recorded s-grid values."""
    ok = _usable(sample)
    if sample.y_grid is None:
        raise DomainError("the sample carries no Y(s) records")
    j = int(np.argmin(np.abs(sample.s_grid - s)))
    if abs(sample.s_grid[j] - s) > 1e-9 * max(1.0, abs(s)):
        raise DomainError(f"s={s!r} was not recorded")
    return estimate_density_2d(sample.y_grid[ok, j], sample.z[ok], y_edges, u_edges)


def direct_density(sample: SubordinatedSample, y_edges) -> EmpiricalDensity:
    """Histogram of Y(Z(t)) as returned by the walk (capped paths count as out of range)."""
    _usable(sample)
    return estimate_density(sample.y, y_edges)


def diagonal_density(sample: SubordinatedSample, y_edges) -> EmpiricalDensity:
    """Density of Y(Z(t)) through the joint law of (Y(s), Z(t)) on the s-grid.

    Summing the joint histogram over the diagonal cells (s_j, s_j + ds] x bin
    with weight ds is the same as binning Y(s_j) for the last s_j strictly
    below Z. Paths whose Z lies beyond the recorded s-grid count as out of range.
    """
    _usable(sample)
    if sample.y_grid is None or sample.s_grid is None:
        raise DomainError("the sample carries no Y(s) records")
    s = np.asarray(sample.s_grid, dtype=float)
    if s[0] != 0.0 or np.any(np.diff(s) <= 0):
        raise DomainError("the s-grid must start at 0 and increase")
    ds = float(s[1] - s[0])
    z = sample.z
    # z = k * tau and s_j = m * ds are both rounded; s_j == z nominally must not count as below
    j = np.searchsorted(s, z * (1.0 - 1e-9), side="left") - 1
    inside = np.isfinite(z) & (j >= 0) & (z <= s[-1] + ds)
    vals = np.full(z.shape, np.nan)
    rows = np.flatnonzero(inside)
    vals[rows] = sample.y_grid[rows, j[rows]]
    return estimate_density(vals, y_edges)
