"""Jump laws p(x; dy) and p(x, u; dy dv) in the normal domain of attraction.

Radial laws are normalised so that the tail matches the spectral density:

    P(|Y| > n, Y/|Y| in Omega) ~ (1 / (alpha n^alpha)) int_Omega S(x, s) dS(s)

With ``m(x) = int S(x, s) dS(s)`` and ``r0(x) = (m(x) / alpha)^(1/alpha)``:

* ``pareto``: P(R > r) = (r / r0)^-alpha for r >= r0 (exact power tail);
* ``lomax``:  P(R > r) = (1 + r / r0)^-alpha for r >= 0 (bounded density
  near zero, tail ratio 1 + O(1/n)).

The direction is drawn with density S(x, .) / m(x) on the sphere.

The temporal component of a double kernel has P(V > v) = (w / beta) v^-beta
for v >= (w / beta)^(1/beta), so that n^beta P(V > n) -> w / beta.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError
from .stable_core import SpectralDensity, canonical_density, check_alpha, check_beta

__all__ = [
    "JumpKernel",
    "DoubleJumpKernel",
    "AngularCap",
    "sample_jump",
    "tail_ratio",
    "sample_joint_jump",
    "validate_tail_limit_w",
    "pareto_kernel",
]

RADIAL_FAMILIES = ("pareto", "lomax")


def _open_uniform(rng, size):
    """Uniform draws on (0, 1]."""
    return 1.0 - rng.random(size)


@dataclass(frozen=True)
class JumpKernel:
    spectral: SpectralDensity
    alpha: float
    radial: str = "pareto"

    def __post_init__(self):
        check_alpha(self.alpha)
        if self.radial not in RADIAL_FAMILIES:
            raise DomainError(f"radial family must be one of {RADIAL_FAMILIES}, got {self.radial!r}")

    @property
    def dim(self) -> int:
        return self.spectral.dim

    @property
    def is_constant(self) -> bool:
        return self.spectral.constant

    def scale(self, x):
        """r0(x) = (int S(x,.) / alpha)^(1/alpha)."""
        return (np.asarray(self.spectral.mass(x), dtype=float) / self.alpha) ** (1.0 / self.alpha)

    def r_min(self, x):
        """Lower end of the radial support (0 for lomax)."""
        if self.radial == "pareto":
            return self.scale(x)
        return np.zeros(np.shape(self.scale(x)))

    def radial_sf(self, r, x):
        r = np.asarray(r, dtype=float)
        r0 = self.scale(x)
        if self.radial == "pareto":
            return np.where(r < r0, 1.0, (np.maximum(r, r0) / r0) ** (-self.alpha))
        return (1.0 + np.maximum(r, 0.0) / r0) ** (-self.alpha)

    def radial_from_uniform(self, v, x):
        """Inverse survival function: R with P(R > r) evaluated at uniform v."""
        r0 = self.scale(x)
        if self.radial == "pareto":
            return r0 * v ** (-1.0 / self.alpha)
        return r0 * (v ** (-1.0 / self.alpha) - 1.0)

    def radial_partial_moments(self, r, x):
        """(F(r), int_0^r q dF(q)) of the radial law, vectorised in r."""
        a = self.alpha
        r = np.maximum(np.asarray(r, dtype=float), 0.0)
        r0 = self.scale(x)
        if self.radial == "pareto":
            rr = np.maximum(r, r0)
            cdf = 1.0 - (rr / r0) ** (-a)
            if a == 1.0:
                m1 = r0 * np.log(rr / r0)
            else:
                m1 = a * r0 ** a * (rr ** (1 - a) - r0 ** (1 - a)) / (1 - a)
            return cdf, m1
        w = r / r0
        cdf = 1.0 - (1.0 + w) ** (-a)
        if a == 1.0:
            m1 = r0 * (np.log1p(w) - w / (1.0 + w))
        else:
            m1 = r0 * (-w * (1.0 + w) ** (-a) + ((1.0 + w) ** (1 - a) - 1.0) / (1 - a))
        return cdf, m1

    def sample_directions(self, x, rng, size):
        if self.dim == 1:
            return np.where(rng.random(size) < 0.5, -1.0, 1.0)
        x = np.broadcast_to(np.asarray(x, dtype=float), (size, 2))
        if self.is_constant:
            return rng.uniform(0.0, 2 * np.pi, size)
        # rejection against the uniform angle with envelope s_max
        theta = np.empty(size)
        todo = np.arange(size)
        while todo.size:
            th = rng.uniform(0.0, 2 * np.pi, todo.size)
            acc = rng.random(todo.size) * self.spectral.s_max <= self.spectral(x[todo], th)
            theta[todo[acc]] = th[acc]
            todo = todo[~acc]
        return theta

    def sample(self, x, rng, size=None, radial_uniforms=None):
        """Jumps y ~ p(x; dy) for a vector of positions ``x``.

        d=1: returns shape (n,); d=2: returns shape (n, 2).
        """
        x = np.asarray(x, dtype=float)
        if size is None:
            size = x.shape[0] if (x.ndim >= 1 and (self.dim == 1 or x.ndim == 2)) else 1
        if self.dim == 1:
            x = np.broadcast_to(x, (size,))
        else:
            x = np.broadcast_to(x, (size, 2))
        v = _open_uniform(rng, size) if radial_uniforms is None else radial_uniforms
        r = self.radial_from_uniform(v, x)
        d = self.sample_directions(x, rng, size)
        if self.dim == 1:
            return r * d
        return np.stack([r * np.cos(d), r * np.sin(d)], axis=-1)


def pareto_kernel(alpha: float, dim: int = 1) -> JumpKernel:
    """Canonical constant kernel: S = alpha/2 in d=1, P(|Y| > n) = n^-alpha."""
    return JumpKernel(canonical_density(alpha, dim), alpha, "pareto")


def sample_jump(k: JumpKernel, x, rng, size=None):
    return k.sample(x, rng, size)


@dataclass(frozen=True)
class AngularCap:
    """A set Omega on the sphere: signs in d=1, an arc [center - half, center + half] (and its antipode if ``symmetric``) in d=2."""

    signs: tuple = (1.0, -1.0)
    center: float = 0.0
    half_width: float = np.pi
    symmetric: bool = False

    def contains(self, dirs, dim):
        dirs = np.asarray(dirs)
        if dim == 1:
            return np.isin(dirs, self.signs)
        d = np.angle(np.exp(1j * (dirs - self.center)))
        inside = np.abs(d) <= self.half_width
        if self.symmetric:
            d2 = np.angle(np.exp(1j * (dirs - self.center - np.pi)))
            inside |= np.abs(d2) <= self.half_width
        return inside

    def s_mass(self, S: SpectralDensity, x) -> float:
        if S.dim == 1:
            x1 = float(np.ravel(x)[0])
            return float(sum(S(x1, s) for s in self.signs))
        from scipy import integrate

        if self.half_width >= np.pi:
            segs = [(0.0, 2 * np.pi)]
        else:
            segs = [(self.center - self.half_width, self.center + self.half_width)]
            if self.symmetric:
                segs.append((self.center + np.pi - self.half_width, self.center + np.pi + self.half_width))
        xx = np.asarray(x, dtype=float)
        return float(sum(integrate.quad(lambda th: float(S(xx, th)), a, b, limit=200)[0] for a, b in segs))


def _direction_of(y, dim):
    if dim == 1:
        return np.sign(y)
    return np.arctan2(y[..., 1], y[..., 0])


def tail_ratio(k: JumpKernel, x, n: float, cap: AngularCap, N: int, rng) -> float:
    """MC estimate of P(|Y| > n, Y/|Y| in Omega) / ((1/(alpha n^alpha)) int_Omega S).

    Tends to one as n grows for kernels in the normal domain of attraction.
    """
    if n < float(np.max(k.r_min(np.asarray(x, dtype=float)))):
        raise DomainError("n must be at least r_min")
    denom = cap.s_mass(k.spectral, x) / (k.alpha * n ** k.alpha)
    if denom <= 0:
        raise DomainError("the angular cap carries zero S-mass")
    y = k.sample(x, rng, N)
    norm = np.abs(y) if k.dim == 1 else np.hypot(y[:, 0], y[:, 1])
    hit = (norm > n) & cap.contains(_direction_of(y, k.dim), k.dim)
    return float(hit.mean() / denom)


@dataclass(frozen=True)
class DoubleJumpKernel:
    """Joint law of (Y, V) with a one-parameter radius copula.

    With probability ``rho`` the spatial and temporal radii share one uniform
    variate (comonotone); otherwise they are independent. ``w(x, u)`` scales
    the temporal tail; the default ``w = beta`` gives P(V > v) = v^-beta for
    v >= 1. ``temporal="deterministic"`` replaces V by the constant ``v_step``
    and consumes no random numbers for it.
    """

    spatial: JumpKernel
    beta: float
    rho: float = 0.0
    w: Callable | None = None
    temporal: str = "pareto"
    v_step: float = 1.0

    def __post_init__(self):
        check_beta(self.beta)
        if not 0.0 <= self.rho <= 1.0:
            raise DomainError("rho must lie in [0,1]")
        if self.temporal not in ("pareto", "deterministic"):
            raise DomainError("temporal law must be 'pareto' or 'deterministic'")
        if self.temporal == "deterministic" and not self.v_step > 0:
            raise DomainError("deterministic V steps must be positive")

    @property
    def alpha(self) -> float:
        return self.spatial.alpha

    @property
    def is_constant(self) -> bool:
        return self.spatial.is_constant and self.w is None

    def w_value(self, x, u):
        if self.w is None:
            return np.full(np.broadcast(np.asarray(x, dtype=float), np.asarray(u, dtype=float)).shape, self.beta)
        return np.asarray(self.w(x, u), dtype=float)

    def v_min(self, x, u):
        return (self.w_value(x, u) / self.beta) ** (1.0 / self.beta)

    def tail_limit_w(self, x, u, A):
        """Limit w(x, u, A) of beta n^beta P(V > n, |Y| > A) for this copula.

        Independent part: w(x,u) P(|Y| > A); comonotone part keeps w(x,u) for
        every A, so the limit at A -> inf is rho * w(x,u).
        """
        w = self.w_value(x, u)
        return w * ((1.0 - self.rho) * self.spatial.radial_sf(A, x) + self.rho)

    def sample(self, x, u, rng, size=None):
        """Draw (Y, V) at positions (x, u); returns (y, v)."""
        x = np.asarray(x, dtype=float)
        if size is None:
            size = x.shape[0] if x.ndim >= 1 else 1
        xs = np.broadcast_to(x, (size,) if self.dim == 1 else (size, 2))
        uy = _open_uniform(rng, size)
        y = self.spatial.sample(xs, rng, size, radial_uniforms=uy)
        if self.temporal == "deterministic":
            return y, np.full(size, self.v_step)
        uv = _open_uniform(rng, size)
        if self.rho > 0:
            shared = rng.random(size) < self.rho
            uv = np.where(shared, uy, uv)
        v = self.v_min(xs if self.dim == 1 else xs[:, 0], u) * uv ** (-1.0 / self.beta)
        return y, v

    @property
    def dim(self) -> int:
        return self.spatial.dim


def sample_joint_jump(dk: DoubleJumpKernel, x, u, rng, size=None):
    return dk.sample(x, u, rng, size)


def validate_tail_limit_w(dk: DoubleJumpKernel, x, u, A: float, n: float, N: int, rng) -> float:
    """MC estimate of beta n^beta P(V > n, |Y| > A)."""
    y, v = dk.sample(x, u, rng, N)
    norm = np.abs(y) if dk.dim == 1 else np.hypot(y[:, 0], y[:, 1])
    p = np.mean((v > n) & (norm > A))
    return float(dk.beta * n ** dk.beta * p)
