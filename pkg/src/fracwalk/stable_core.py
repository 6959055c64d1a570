"""Symmetric alpha-stable laws, one-sided beta-stable subordinators, Mittag-Leffler.

Conventions used throughout the package:

* the symmetric stable law with scale ``sigma`` has characteristic function
  ``exp(-sigma * |p|**alpha)``;
* a spectral density ``S(x, s)`` on the unit sphere defines the exponent
  ``ln phi_x(p) = -c_alpha(alpha) * int |(p, s)|**alpha S(x, s) dS(s)``,
  which is the Fourier symbol of the generator
  ``Lf(x) = int int (f(x + y) - f(x)) d|y| / |y|**(1 + alpha) S(x, y/|y|) dS``;
* in one dimension the sphere is {-1, +1} with counting measure;
* the one-sided stable subordinator has ``E exp(-s X(u)) = exp(-u * scale * s**beta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import DomainError, NumericError

__all__ = [
    "StableIndices",
    "SpectralDensity",
    "constant_density",
    "sinusoidal_density",
    "anisotropic_density",
    "sphere_integral",
    "c_alpha",
    "char_exponent",
    "symmetric_stable_density_1d",
    "symmetric_stable_cdf_1d",
    "sample_symmetric_stable",
    "sample_one_sided_stable",
    "one_sided_stable_pdf",
    "one_sided_stable_cdf",
    "subordinator_density",
    "subordinator_cdf",
    "subordinator_density_fourier",
    "mittag_leffler",
    "ks_distance",
]

# quadrature cut where the damping factor exp(-t sigma p^alpha) drops below 1e-12
_DAMP_CUT = -math.log(1e-12)


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 2.0:
        raise DomainError(f"alpha must satisfy alpha ∈ (0,2), got {alpha}")
    return alpha


def check_beta(beta: float, allow_one: bool = False) -> float:
    beta = float(beta)
    ok = 0.0 < beta <= 1.0 if allow_one else 0.0 < beta < 1.0
    if not ok:
        rng = "(0,1]" if allow_one else "(0,1)"
        raise DomainError(f"beta must satisfy beta ∈ {rng}, got {beta}")
    return beta


@dataclass(frozen=True)
class StableIndices:
    alpha: float
    beta: float

    def __post_init__(self):
        check_alpha(self.alpha)
        check_beta(self.beta)


@dataclass(frozen=True)
class SpectralDensity:
    """Angular weight ``S(x, s)`` of a stable-like generator.

    ``s_eval(x, s)`` must broadcast: in d=1 ``x`` and ``s`` are arrays of
    positions and signs (+1/-1); in d=2 ``x`` has a trailing axis of length 2
    and ``s`` is an angle in radians (the unit vector (cos s, sin s)).

    ``mass(x)`` returns ``int S(x, s) dS(s)``; ``s_max`` bounds S from above
    and is what the angular rejection sampler uses in d=2.
    """

    dim: int
    s_eval: Callable
    c1: float
    c2: float
    mass: Callable
    s_max: float = math.inf
    constant: bool = False
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise DomainError(f"only d=1 and d=2 are supported, got d={self.dim}")
        if not (0 < self.c1 <= self.c2):
            raise DomainError("spectral bounds need 0 < c1 <= c2")

    def __call__(self, x, s):
        return self.s_eval(x, s)

    def check_symmetry(self, xs, rng, n_dirs=64, rtol=1e-12) -> bool:
        """Probe S(x, s) = S(x, -s) at random directions."""
        for x in np.atleast_1d(xs) if self.dim == 1 else np.atleast_2d(xs):
            if self.dim == 1:
                a, b = self.s_eval(x, 1.0), self.s_eval(x, -1.0)
            else:
                th = rng.uniform(0, 2 * np.pi, n_dirs)
                a, b = self.s_eval(x, th), self.s_eval(x, th + np.pi)
            if not np.allclose(a, b, rtol=rtol, atol=0):
                return False
        return True

    def check_bounds(self, alpha, xs, n_dirs=32) -> bool:
        """Probe ``c1 <= int |(p,s)|^alpha S(x,s) dS <= c2`` over unit p."""
        for x in np.atleast_1d(xs) if self.dim == 1 else np.atleast_2d(xs):
            pbars = [1.0, -1.0] if self.dim == 1 else [
                np.array([math.cos(a), math.sin(a)]) for a in np.linspace(0, np.pi, n_dirs)
            ]
            for pbar in pbars:
                val = -char_exponent(pbar, x, self, alpha) / c_alpha(alpha)
                if not (self.c1 * (1 - 1e-9) <= val <= self.c2 * (1 + 1e-9)):
                    return False
        return True


def constant_density(value: float, dim: int = 1, alpha: float | None = None) -> SpectralDensity:
    """S(x, s) == value.  In d=2 the moment bounds need ``alpha``."""
    value = float(value)
    if value <= 0:
        raise DomainError("constant spectral density must be positive")
    if dim == 1:
        total = 2.0 * value
        s_eval = lambda x, s: value * np.ones(np.broadcast(np.asarray(x, dtype=float), np.asarray(s, dtype=float)).shape)
        mass = lambda x: np.full(np.shape(x), total)
        bounds = (total, total)  # |(pbar, ±1)| = 1
    else:
        total = 2.0 * np.pi * value
        s_eval = lambda x, th: value * np.ones(np.broadcast(np.asarray(x, dtype=float)[..., 0], np.asarray(th, dtype=float)).shape)
        mass = lambda x: np.full(np.shape(x)[:-1], total)
        if alpha is None:
            raise DomainError("a d=2 constant density needs alpha for its moment bounds")
        m = value * _cos_moment(check_alpha(alpha))
        bounds = (m, m)
    return SpectralDensity(
        dim=dim, s_eval=s_eval, c1=bounds[0], c2=bounds[1], mass=mass,
        s_max=value, constant=True, name="constant", params={"value": value},
    )


def _cos_moment(alpha: float) -> float:
    """int_0^{2pi} |cos theta|^alpha d theta."""
    return 2.0 * math.sqrt(math.pi) * math.gamma((alpha + 1) / 2) / math.gamma(alpha / 2 + 1)


def sinusoidal_density(alpha: float, eps: float = 0.5) -> SpectralDensity:
    """d=1 family S(x, ±1) = alpha/2 * (1 + eps sin x)."""
    alpha = check_alpha(alpha)
    if not 0 <= eps < 1:
        raise DomainError("eps must lie in [0,1)")
    half = alpha / 2.0
    return SpectralDensity(
        dim=1,
        s_eval=lambda x, s: half * (1.0 + eps * np.sin(np.asarray(x, dtype=float))) * np.ones_like(np.asarray(s, dtype=float)),
        c1=alpha * (1 - eps),
        c2=alpha * (1 + eps),
        mass=lambda x: alpha * (1.0 + eps * np.sin(np.asarray(x, dtype=float))),
        s_max=half * (1 + eps),
        constant=eps == 0,
        name="sinusoidal",
        params={"alpha": alpha, "eps": eps},
    )


def anisotropic_density(alpha: float, eps: float = 0.5) -> SpectralDensity:
    """d=2 family S(x, theta) = alpha/(2 pi) * (1 + eps sin(x_1) cos(2 theta)).

    cos(2 theta) is invariant under theta -> theta + pi, so S is symmetric.
    The total mass is alpha at every x.
    """
    alpha = check_alpha(alpha)
    if not 0 <= eps < 1:
        raise DomainError("eps must lie in [0,1)")
    base = alpha / (2.0 * np.pi)
    mom = _cos_moment(alpha)

    def s_eval(x, theta):
        x = np.asarray(x, dtype=float)
        return base * (1.0 + eps * np.sin(x[..., 0]) * np.cos(2.0 * np.asarray(theta)))

    return SpectralDensity(
        dim=2,
        s_eval=s_eval,
        c1=base * (1 - eps) * mom,
        c2=base * (1 + eps) * mom,
        mass=lambda x: np.full(np.shape(x)[:-1], alpha),
        s_max=base * (1 + eps),
        constant=eps == 0,
        name="anisotropic",
        params={"alpha": alpha, "eps": eps},
    )


def canonical_density(alpha: float, dim: int = 1) -> SpectralDensity:
    """Constant density with total mass alpha (tail P(|Y|>n) = n^-alpha)."""
    alpha = check_alpha(alpha)
    if dim == 1:
        return constant_density(alpha / 2.0, 1)
    return anisotropic_density(alpha, 0.0)


def sphere_integral(fn, S: SpectralDensity, x) -> float:
    """int_{S^{d-1}} fn(s) S(x, s) dS(s).

    In d=2, ``fn`` receives the angle theta.
    """
    if S.dim == 1:
        return float(fn(1.0) * S(x, 1.0) + fn(-1.0) * S(x, -1.0))
    val, _ = integrate.quad(lambda th: fn(th) * float(S(x, th)), 0.0, 2 * np.pi, limit=400)
    return val


def c_alpha(alpha: float, upper: float | None = None) -> float:
    """C_alpha = int_0^inf (1 - cos r) r^(-1-alpha) dr, optionally truncated at ``upper``.

    Near zero the integrand is handled with the algebraic weight r^(1-alpha);
    the oscillatory tail uses a cosine-weighted rule.
    """
    alpha = check_alpha(alpha)
    # (1 - cos r)/r^2 is smooth; the algebraic weight carries r^(1-alpha)
    head, _ = integrate.quad(
        lambda r: 2.0 * np.sinc(r / (2.0 * np.pi)) ** 2 / 4.0,
        0.0, 1.0, weight="alg", wvar=(1.0 - alpha, 0.0),
    )
    if upper is None:
        osc, _ = integrate.quad(lambda r: r ** (-1.0 - alpha), 1.0, np.inf, weight="cos", wvar=1.0)
        return head + 1.0 / alpha - osc
    upper = float(upper)
    if upper <= 1.0:
        val, _ = integrate.quad(lambda r: (1 - math.cos(r)) * r ** (-1.0 - alpha), 0.0, upper, limit=200)
        return val
    osc, _ = integrate.quad(
        lambda r: r ** (-1.0 - alpha), 1.0, upper, weight="cos", wvar=1.0, limit=2000
    )
    return head + (1.0 - upper ** (-alpha)) / alpha - osc


def char_exponent(p, x, S: SpectralDensity, alpha: float) -> float:
    """ln phi_x(p) = -c_alpha * int |(p, s)|^alpha S(x, s) dS(s)  (always <= 0)."""
    alpha = check_alpha(alpha)
    p = np.asarray(p, dtype=float)
    if S.dim == 1:
        pv = float(p.reshape(-1)[0]) if p.size else 0.0
        if pv == 0.0:
            return 0.0
        return -c_alpha(alpha) * abs(pv) ** alpha * float(S(x, 1.0) + S(x, -1.0))
    if not np.any(p):
        return 0.0
    pn = float(np.hypot(p[0], p[1]))
    phi = math.atan2(p[1], p[0])
    # kinks of |cos(theta - phi)|^alpha
    kinks = sorted(((phi + np.pi / 2) % np.pi, (phi + np.pi / 2) % np.pi + np.pi))
    xx = np.asarray(x, dtype=float)
    val, _ = integrate.quad(
        lambda th: abs(math.cos(th - phi)) ** alpha * float(S(xx, th)),
        0.0, 2 * np.pi, points=kinks, limit=400, epsabs=0, epsrel=1e-13,
    )
    return -c_alpha(alpha) * pn ** alpha * val


def _quad_checked(fn, a, b, what, tol=1e-6, **kw):
    """scipy quad that tolerates QUADPACK warnings only when the error estimate is small."""
    val, err, info, *rest = integrate.quad(fn, a, b, full_output=1, **kw)
    if rest and err > tol * max(1.0, abs(val)):
        raise NumericError(f"quadrature for {what} did not converge: value={val!r}, est. error={err!r}, {rest[0]}")
    return val


# large-|x| expansion: convergent for alpha < 1, asymptotic for alpha > 1
_TAIL_TERMS = 80


def _tail_series(lam, ax, alpha, density):
    """Large-|x| expansion of the density (or of P(X > x)) of the symmetric law.

    Summed up to its smallest term. Returns None when that term is not
    negligible or the partial sums cancel heavily, in which case the caller
    falls back to Fourier quadrature.
    """
    z = lam * ax ** (-alpha)
    k = np.arange(1, _TAIL_TERMS + 1)
    sgn = np.where(k % 2 == 1, 1.0, -1.0)
    sn = np.sin(np.pi * alpha * k / 2)
    if density:
        c = special.gammaln(alpha * k + 1) - special.gammaln(k + 1)
    else:
        c = special.gammaln(alpha * k) - special.gammaln(k + 1)
    with np.errstate(over="ignore", under="ignore"):
        mag = np.exp(c + k * math.log(z))
    kmin = int(np.argmin(mag))
    terms = (sgn * sn * mag)[: kmin + 1]
    total = math.fsum(terms)
    if total <= 0 or mag[kmin] > 1e-14 * total or np.max(np.abs(terms)) > 1e3 * total:
        return None
    return total / (math.pi * ax) if density else total / math.pi


def symmetric_stable_density_1d(t: float, x, sigma: float = 1.0, alpha: float = 1.0):
    """(1/pi) int_0^inf cos(p x) exp(-t sigma p^alpha) dp.

    Transition density at displacement ``x`` of the process with symbol
    ``-sigma |p|^alpha``. Accepts scalar or array ``x``.
    """
    alpha = check_alpha(alpha)
    if t <= 0 or sigma <= 0:
        raise DomainError("t and sigma must be positive")
    lam = t * sigma
    pmax = (_DAMP_CUT / lam) ** (1.0 / alpha)

    def one(xv):
        xv = abs(float(xv))
        if xv > 0:
            series = _tail_series(lam, xv, alpha, density=True)
            if series is not None:
                return series
        damp = lambda p: math.exp(-lam * p ** alpha)
        if xv == 0.0:
            return _quad_checked(damp, 0.0, pmax, "stable density", limit=200) / math.pi
        return _quad_checked(damp, 0.0, pmax, "stable density", weight="cos", wvar=xv, limit=2000) / math.pi

    if np.ndim(x) == 0:
        return one(x)
    return np.array([one(v) for v in np.ravel(x)]).reshape(np.shape(x))


def symmetric_stable_cdf_1d(t: float, x, sigma: float = 1.0, alpha: float = 1.0):
    """CDF of the same law: 1/2 + (1/pi) int_0^inf sin(p x)/p exp(-t sigma p^alpha) dp."""
    alpha = check_alpha(alpha)
    lam = t * sigma
    pmax = (_DAMP_CUT / lam) ** (1.0 / alpha)

    def one(xv):
        xv = float(xv)
        if xv == 0.0:
            return 0.5
        ax = abs(xv)
        sf = _tail_series(lam, ax, alpha, density=False)
        if sf is not None:
            return 1.0 - sf if xv > 0 else sf
        a = min(pmax, 1.0 / ax)
        head = _quad_checked(
            lambda p: math.sin(p * ax) / p * math.exp(-lam * p ** alpha) if p > 0 else ax,
            0.0, a, "stable cdf", limit=200,
        )
        tail = 0.0
        if a < pmax:
            tail = _quad_checked(
                lambda p: math.exp(-lam * p ** alpha) / p, a, pmax, "stable cdf",
                weight="sin", wvar=ax, limit=2000,
            )
        half = (head + tail) / math.pi
        return 0.5 + half if xv > 0 else 0.5 - half

    if np.ndim(x) == 0:
        return one(x)
    return np.array([one(v) for v in np.ravel(x)]).reshape(np.shape(x))


def sample_symmetric_stable(alpha: float, sigma: float, rng: np.random.Generator, size=None):
    """Chambers-Mallows-Stuck draw(s) with characteristic function exp(-sigma |p|^alpha)."""
    alpha = check_alpha(alpha)
    phi = rng.uniform(-np.pi / 2, np.pi / 2, size)
    w = rng.standard_exponential(size)
    c = sigma ** (1.0 / alpha)
    if alpha == 1.0:
        return c * np.tan(phi)
    x = (np.sin(alpha * phi) / np.cos(phi) ** (1.0 / alpha)
         * (np.cos((1.0 - alpha) * phi) / w) ** ((1.0 - alpha) / alpha))
    return c * x


def _kanter_a(theta, beta):
    """Kanter's function A(theta), increasing from beta^(beta/(1-beta)) (1-beta) to inf on (0, pi)."""
    b1 = 1.0 - beta
    with np.errstate(divide="ignore", over="ignore"):
        return (np.sin(beta * theta) ** (beta / b1) * np.sin(b1 * theta)
                / np.sin(theta) ** (1.0 / b1))


def sample_one_sided_stable(beta: float, rng: np.random.Generator, size=None):
    """Positive draw(s) with Laplace transform exp(-s^beta) (Kanter's representation)."""
    beta = check_beta(beta)
    # open interval (0, pi): the endpoints map to 0 or inf
    u = np.pi * (1.0 - rng.random(size))
    w = rng.standard_exponential(size)
    return (_kanter_a(u, beta) / w) ** ((1.0 - beta) / beta)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(256)
_THETA = 0.5 * np.pi * (_GL_NODES + 1.0)
_THETA_W = 0.5 * np.pi * _GL_WEIGHTS
_SERIES_SWITCH = 1.0


def _series_terms(beta, nterms=400):
    k = np.arange(1, nterms + 1, dtype=float)
    sign = np.where(k % 2 == 1, 1.0, -1.0)
    logmag = special.gammaln(beta * k + 1.0) - special.gammaln(k + 1.0)
    sn = np.sin(np.pi * beta * k)
    return k, sign * sn * np.exp(logmag)


def one_sided_stable_pdf(z, beta: float):
    """Density of the unit one-sided stable law (Laplace transform exp(-s^beta)).

    Zolotarev's integral over Kanter's function for z < 1, the convergent
    power series in z^-beta for z >= 1.
    """
    beta = check_beta(beta)
    z = np.asarray(z, dtype=float)
    out = np.zeros(z.shape)
    pos = z > 0
    small = pos & (z < _SERIES_SWITCH)
    large = pos & ~small
    if np.any(small):
        zs = z[small]
        a = _kanter_a(_THETA, beta)
        expo = beta / (1.0 - beta)
        res = np.empty(zs.shape)
        chunk = 4096
        for i in range(0, zs.size, chunk):
            zz = zs[i:i + chunk, None]
            lam = zz ** (-expo)
            with np.errstate(over="ignore", under="ignore"):
                integrand = a * np.exp(-lam * a)
            res[i:i + chunk] = (integrand @ _THETA_W) * expo * zz[:, 0] ** (-1.0 / (1.0 - beta))
        out[small] = res / np.pi
    if np.any(large):
        k, coef = _series_terms(beta)
        zl = z[large]
        res = np.empty(zl.shape)
        chunk = 4096
        for i in range(0, zl.size, chunk):
            zz = zl[i:i + chunk, None]
            res[i:i + chunk] = (coef * zz ** (-beta * k - 1.0)).sum(axis=1)
        out[large] = res / np.pi
    return out


def one_sided_stable_cdf(z, beta: float):
    """CDF of the unit one-sided stable law, same two branches as the density."""
    beta = check_beta(beta)
    z = np.asarray(z, dtype=float)
    out = np.zeros(z.shape)
    pos = z > 0
    small = pos & (z < _SERIES_SWITCH)
    large = pos & ~small
    if np.any(small):
        a = _kanter_a(_THETA, beta)
        lam = z[small][:, None] ** (-beta / (1.0 - beta))
        with np.errstate(over="ignore", under="ignore"):
            out[small] = (np.exp(-lam * a) @ _THETA_W) / np.pi
    if np.any(large):
        k, coef = _series_terms(beta)
        # int_z^inf y^(-beta k - 1) dy = z^(-beta k) / (beta k)
        zl = z[large][:, None]
        out[large] = 1.0 - (coef / (beta * k) * zl ** (-beta * k)).sum(axis=1) / np.pi
    return out


def subordinator_density(u, y, beta: float, scale: float = 1.0):
    """G(u, y): density of X(u) for E exp(-s X(u)) = exp(-u scale s^beta); zero for y <= 0.

    Uses G(u, y) = v^(-1/beta) g(y v^(-1/beta)) with v = u * scale.
    """
    beta = check_beta(beta)
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(u <= 0):
        raise DomainError("u must be positive")
    c = (u * scale) ** (-1.0 / beta)
    out = c * one_sided_stable_pdf(y * c, beta)
    return out if out.ndim else float(out)


def subordinator_cdf(u, y, beta: float, scale: float = 1.0):
    """P(X(u) <= y) for the same subordinator."""
    beta = check_beta(beta)
    u = np.asarray(u, dtype=float)
    c = (u * scale) ** (-1.0 / beta)
    out = one_sided_stable_cdf(np.asarray(y, dtype=float) * c, beta)
    return out if out.ndim else float(out)


def subordinator_density_fourier(u: float, y: float, beta: float, scale: float = 1.0) -> float:
    """G(u, y) by direct Fourier inversion of exp(-u scale (-ip)^beta).

    Independent of the scaling identity used by :func:`subordinator_density`;
    slow, intended for cross-checks.
    """
    beta = check_beta(beta)
    if y <= 0:
        return 0.0
    v = u * scale
    cb, sb = math.cos(np.pi * beta / 2), math.sin(np.pi * beta / 2)
    pmax = (40.0 / (v * cb)) ** (1.0 / beta)

    def f(p):
        pb = p ** beta
        return math.exp(-v * pb * cb) * math.cos(p * y - v * pb * sb)

    period = 2 * np.pi / y
    edges = np.arange(0.0, pmax + period, 8 * period)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(f, a, b, limit=400, epsabs=1e-14, epsrel=1e-12)
        total += val
    return total / math.pi


def _ml_series(beta, z):
    total, k = 0.0, 0
    while True:
        term = math.exp(k * math.log(abs(z)) - math.lgamma(1.0 + beta * k)) if z != 0 else (1.0 if k == 0 else 0.0)
        term = term if (z > 0 or k % 2 == 0) else -term
        total += term
        if k > 5 and abs(term) < 1e-17 * max(1.0, abs(total)):
            return total
        k += 1
        if k > 2000:
            raise NumericError("Mittag-Leffler series did not converge")


def _ml_integral(beta, x):
    # E_beta(-x) = sin(beta pi)/(beta pi) int_0^inf exp(-(x s)^(1/beta)) / (s^2 + 2 s cos(beta pi) + 1) ds
    cb = math.cos(beta * math.pi)
    f = lambda s: math.exp(-(x * s) ** (1.0 / beta)) / (s * s + 2.0 * s * cb + 1.0)
    split = 1.0 / x
    a, _ = integrate.quad(f, 0.0, split, limit=200, epsabs=1e-15, epsrel=1e-13)
    b, _ = integrate.quad(f, split, np.inf, limit=200, epsabs=1e-15, epsrel=1e-13)
    return math.sin(beta * math.pi) / (beta * math.pi) * (a + b)


def mittag_leffler(beta: float, z: float, method: str = "auto") -> float:
    """E_beta(z) = sum_k z^k / Gamma(1 + beta k) on the negative half-line."""
    beta = check_beta(beta, allow_one=True)
    z = float(z)
    if z > 0:
        raise DomainError("only z <= 0 is supported")
    if beta == 1.0:
        return math.exp(z)
    if z == 0.0:
        return 1.0
    if method == "auto":
        method = "series" if z >= -1.0 else "integral"
    if method == "series":
        return _ml_series(beta, z)
    if method == "integral":
        return _ml_integral(beta, -z)
    raise ValueError(f"unknown method {method!r}")


def ks_distance(samples, cdf, n_check: int | None = None) -> float:
    """Kolmogorov-Smirnov distance between ``samples`` and a CDF.

    With ``n_check`` the CDF is only evaluated at that many sample quantiles
    (for expensive quadrature CDFs) and the return value is a rigorous upper
    bound on the distance from monotonicity of both functions.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n_check is None or n_check >= n:
        f = np.asarray(cdf(x), dtype=float)
        i = np.arange(1, n + 1)
        return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))
    idx = np.unique(np.linspace(0, n - 1, n_check).astype(int))
    c = x[idx]
    f = np.asarray(cdf(c), dtype=float)
    # ECDF just below and at each checkpoint
    e_at = np.searchsorted(x, c, side="right") / n
    e_below = np.searchsorted(x, c, side="left") / n
    d = max(np.max(np.abs(e_at - f)), np.max(np.abs(e_below - f)))
    # between consecutive checkpoints
    d = max(d, np.max(e_below[1:] - f[:-1]), np.max(f[1:] - e_at[:-1]))
    # outside the checkpoint range
    d = max(d, f[0], 1.0 - f[-1])
    return float(d)
