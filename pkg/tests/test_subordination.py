import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.special import erfc, hyperu

from fracwalk.errors import DivergenceError, DomainError, NumericError
from fracwalk.jump_kernels import DoubleJumpKernel, pareto_kernel
from fracwalk.stable_core import ks_distance, mittag_leffler, subordinator_cdf
from fracwalk.subordination import (
    GGrid,
    HittingDensityGrid,
    HittingLaw,
    SubordinatorSpec,
    clock_values,
    diagonal_density,
    direct_density,
    empirical_joint_density,
    fractional_derivative_rl,
    fractional_derivative_rl_all,
    g_grid,
    gl_weights,
    hitting_density_from_G,
    hitting_times,
    inverse_stable_density,
    residual_eqonQ4,
    residual_fracforward,
    sample_subordinator_path,
    stable_hitting_grid,
    stable_transition,
    subordinate_density,
    subordinate_density_grid,
    subordinate_expectation,
)
from fracwalk.walk_sim import SubordinatedSample, estimate_density, subordinated_endpoints


def half_stable_q(t, u):
    return np.exp(-(u ** 2) / (4 * t)) / np.sqrt(np.pi * t)


def cauchy_subordinated(t, d):
    """int_0^inf Cauchy(u, d) Q(t, u) du for the beta = 1/2 clock, via the exponential integral."""
    a = d * d / (4 * t)
    # hyperu(1, 1, a) = exp(a) E1(a) without overflow
    return hyperu(1.0, 1.0, a) / (2 * np.pi * np.sqrt(np.pi * t))


@pytest.fixture(scope="module")
def half_grid():
    return stable_hitting_grid(0.5, [0.5, 0.75, 1.0, 1.5, 2.0])


# ---------------------------------------------------------------- specs and sampling


def test_drift_clock_is_a_line():
    p = sample_subordinator_path(SubordinatorSpec.pure_drift(2.0), 3.0, np.random.default_rng(0))
    assert np.allclose(p.states, 2.0 * p.times, rtol=1e-12, atol=1e-12)


def test_stable_clock_marginal_ks():
    x = clock_values(SubordinatorSpec.stable(0.5), 1.0, 100_000, np.random.default_rng(11))
    assert ks_distance(x, lambda y: subordinator_cdf(1.0, y, 0.5)) < 0.01


@pytest.mark.parametrize(
    "spec",
    [
        SubordinatorSpec.stable(0.7),
        SubordinatorSpec.tempered(0.5, 1.0, drift=0.2),
        SubordinatorSpec.position_dependent(lambda x: 0.4 + 0.2 * np.tanh(x), (0.2, 0.6), lambda x: 0.1 + 0 * x),
    ],
)
def test_paths_are_non_decreasing(spec):
    rng = np.random.default_rng(5)
    for _ in range(5):
        p = sample_subordinator_path(spec, 2.0, rng)
        assert p.states[0] == 0.0 and np.all(np.diff(p.states) >= 0)


def test_tempered_laplace_exponent_closed_form():
    sp = SubordinatorSpec.tempered(0.5, 2.0, scale=1.0, drift=0.1)
    for s in (0.5, 1.0, 3.0):
        exact = (s + 2.0) ** 0.5 - 2.0 ** 0.5 + 0.1 * s
        assert sp.laplace_exponent(s) == pytest.approx(exact, rel=1e-7)


def test_tempered_clock_moments():
    sp = SubordinatorSpec.tempered(0.5, 2.0, drift=0.1)
    x = clock_values(sp, 1.0, 100_000, np.random.default_rng(2), du=0.05)
    mean = 0.5 * 2.0 ** -0.5 + 0.1
    assert abs(x.mean() - mean) < 4 * x.std() / math.sqrt(x.size)
    lap = math.exp(-sp.laplace_exponent(1.0))
    assert abs(np.mean(np.exp(-x)) - lap) < 4 * np.std(np.exp(-x)) / math.sqrt(x.size)


def test_levy_density_must_sit_under_envelope():
    with pytest.raises(DomainError):
        SubordinatorSpec("levy", nu=lambda y: 2 * np.asarray(y) ** -1.5, env_c=1.0, env_beta=0.5)
    with pytest.raises(DomainError):
        SubordinatorSpec("levy", nu=lambda y: np.asarray(y) ** -1.5)


def test_small_jump_conditions():
    sp = SubordinatorSpec.stable(0.5)
    assert math.isfinite(sp.small_jump_integral())
    assert sp.small_jump_lower_bound(0.5) == pytest.approx(0.5 / math.gamma(0.5))
    assert SubordinatorSpec.pure_drift(1.0).small_jump_lower_bound(0.5) == 0.0


def test_position_mode_window_enforced():
    sp = SubordinatorSpec.position_dependent(lambda x: 0.5 + x, (0.3, 0.6))
    with pytest.raises(DomainError):
        hitting_times(sp, 5.0, 10, np.random.default_rng(0), 0.01)


def test_position_mode_empirical_q_is_a_density():
    sp = SubordinatorSpec.position_dependent(lambda x: 0.4 + 0.2 * np.tanh(x), (0.2, 0.6))
    z = hitting_times(sp, 1.0, 5000, np.random.default_rng(8), 0.01)
    assert np.all(z > 0)
    edges = np.linspace(0, z.max() + 0.01, 60)
    h = estimate_density(z, edges)
    assert h.out_of_range_mass == 0
    assert np.sum(h.density) * h.width == pytest.approx(1.0, abs=1e-12)
    r = subordinate_expectation(lambda u, x: 1.0, HittingLaw.from_empirical(h), 1.0, 0.0)
    assert r.value == pytest.approx(1.0, abs=1e-3)


def test_drift_hitting_times():
    z = hitting_times(SubordinatorSpec.pure_drift(0.5), 1.0, 10, np.random.default_rng(0), 0.01)
    # exact value 2; the mesh reports a time within one step of it
    assert np.all(np.abs(z - 2.0) <= 0.01 + 1e-12)


# ---------------------------------------------------------------- Q from G


def test_q_matches_closed_form(half_grid):
    inner = half_grid.u <= 3
    for t in half_grid.t:
        err = np.max(np.abs(half_grid.row(t)[inner] - half_stable_q(t, half_grid.u[inner])))
        assert err < 1e-3


def test_q_at_origin(half_grid):
    assert half_grid.row(1.0)[0] == pytest.approx(1 / math.sqrt(math.pi), abs=1e-3)
    assert 1 / math.sqrt(math.pi) == pytest.approx(0.564190, abs=1e-6)


def test_q_normalisation_and_nonnegativity(half_grid):
    assert np.all(half_grid.values >= 0)
    assert np.allclose(half_grid.masses(), 1.0, atol=1e-3)
    assert np.all(half_grid.clipped_mass <= 1e-3)


def test_q_self_similarity(half_grid):
    q1, q2 = half_grid.row(1.0), half_grid.row(2.0)
    rescaled = 2 ** -0.5 * np.interp(half_grid.u * 2 ** -0.5, half_grid.u, q1)
    assert np.max(np.abs(q2 - rescaled)) < 1e-3


def test_q_is_stochastically_increasing_in_t(half_grid):
    for U in (0.5, 1.0, 2.0):
        m = half_grid.u <= U
        below = [np.trapezoid(row[m], half_grid.u[m]) for row in half_grid.values]
        assert np.all(np.diff(below) <= 1e-12)


@pytest.mark.parametrize("beta", [0.3, 0.7])
def test_other_indices_normalise_and_scale(beta):
    H = stable_hitting_grid(beta, [1.0, 2.0])
    assert np.allclose(H.masses(), 1.0, atol=1e-3)
    rescaled = 2 ** -beta * np.interp(H.u * 2 ** -beta, H.u, H.row(1.0))
    assert np.max(np.abs(H.row(2.0) - rescaled)) < 1e-3
    assert np.max(np.abs(H.row(1.0) - inverse_stable_density(1.0, H.u, beta))) < 1e-3


@pytest.mark.parametrize("beta", [0.3, 0.5, 0.7])
def test_laplace_identity_on_grid(beta):
    H = stable_hitting_grid(beta, [0.5, 1.0, 2.0])
    for s in (0.5, 1.0, 2.0):
        for t in (0.5, 1.0, 2.0):
            v = np.trapezoid(np.exp(-s * H.u) * H.row(t), H.u)
            assert abs(v - mittag_leffler(beta, -s * t ** beta)) < 2e-3


def test_strict_mode_rejects_negative_mass():
    u = 0.01 * np.arange(101)
    y = np.geomspace(1e-6, 2.0, 200)
    G = g_grid(0.5, u, y)
    # a G whose mass below t rises with u gives a negative Q
    bad = GGrid(u, y, G.values[::-1].copy())
    bad.values[-1] = 0.0
    prof = hitting_density_from_G(bad, 1.0)
    assert prof.clipped_mass > 1e-3 and np.all(prof.values >= 0)
    with pytest.raises(NumericError):
        hitting_density_from_G(bad, 1.0, strict=True)


def test_g_grid_validation():
    with pytest.raises(DomainError):
        GGrid(np.array([0.1, 0.2]), np.array([1.0]), np.zeros((2, 1)))
    with pytest.raises(DomainError):
        hitting_density_from_G(g_grid(0.5, 0.1 * np.arange(20), np.geomspace(1e-3, 1, 30)), 5.0)


# ---------------------------------------------------------------- direct evaluator


def test_inverse_stable_density_values():
    assert inverse_stable_density(1.0, 0.0, 0.5) == pytest.approx(0.564190, abs=1e-6)
    for beta in (0.3, 0.7):
        assert inverse_stable_density(1.0, 0.0, beta) == pytest.approx(1 / math.gamma(1 - beta), rel=1e-12)
        assert inverse_stable_density(1.0, 1e-9, beta) == pytest.approx(1 / math.gamma(1 - beta), rel=1e-6)


@pytest.mark.parametrize("beta", [0.3, 0.5, 0.7])
def test_inverse_stable_laplace(beta):
    for s, t in ((1.0, 1.0), (0.5, 2.0), (2.0, 0.5)):
        v, _ = integrate.quad(lambda u: math.exp(-s * u) * inverse_stable_density(t, u, beta), 0, np.inf, limit=200)
        assert abs(v - mittag_leffler(beta, -s * t ** beta)) < 1e-3


def test_inverse_stable_decays_past_mode():
    u = np.linspace(0, 12, 400)
    for beta in (0.3, 0.5, 0.7):
        q = inverse_stable_density(1.0, u, beta)
        k = int(np.argmax(q))
        assert np.all(np.diff(q[k:]) <= 0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 0.8), st.floats(0.1, 5.0), st.floats(0.0, 5.0), st.floats(0.2, 4.0))
def test_inverse_stable_scale_rule(beta, t, u, c):
    lhs = inverse_stable_density(t, u, beta, scale=c)
    rhs = c * inverse_stable_density(t, c * u, beta)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-300)


def test_inverse_stable_domain():
    with pytest.raises(DomainError):
        inverse_stable_density(0.0, 1.0, 0.5)
    with pytest.raises(DomainError):
        inverse_stable_density(1.0, -1.0, 0.5)


# ---------------------------------------------------------------- subordination integral


def test_subordinated_cauchy_regression():
    r = subordinate_density(stable_transition(1.0), HittingLaw.stable(0.5), 1.0, 0.0, 1.0)
    assert r.value == pytest.approx(0.12040287906839689, abs=1e-8)
    assert r.value == pytest.approx(cauchy_subordinated(1.0, 1.0), rel=1e-8)
    assert r.error < 1e-7


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_subordinated_density_symmetry(x, y):
    if abs(x - y) < 0.05:
        return
    T, law = stable_transition(1.0), HittingLaw.stable(0.5)
    a = subordinate_density(T, law, 1.0, x, y).value
    b = subordinate_density(T, law, 1.0, y, x).value
    assert a == pytest.approx(b, rel=1e-8)


def test_identity_time_change():
    T = stable_transition(1.0)
    r = subordinate_density(T, HittingLaw.drift(1.0), 1.3, 0.0, 0.7)
    assert r.value == pytest.approx(float(T(1.3, 0.0, 0.7)), rel=1e-14)
    e = subordinate_expectation(lambda u, x: math.exp(-u * (1 + x * x)), HittingLaw.from_spec(SubordinatorSpec.pure_drift(2.0)), 1.0, 0.5)
    assert e.value == pytest.approx(math.exp(-0.5 * 1.25), rel=1e-14)


def test_divergence_is_reported_not_masked():
    with pytest.raises(DivergenceError) as ei:
        subordinate_density(stable_transition(1.0), HittingLaw.stable(0.5), 1.0, 0.0, 0.0)
    assert len(ei.value.report["decade_pieces"]) >= 5
    # alpha > 1 keeps T(u, x, x) integrable
    r = subordinate_density(stable_transition(1.5), HittingLaw.stable(0.5), 1.0, 0.0, 0.0)
    assert math.isfinite(r.value) and r.value > 0


@pytest.mark.parametrize(
    "law",
    [HittingLaw.stable(0.3), HittingLaw.stable(0.5), HittingLaw.stable(0.7, scale=2.0), HittingLaw.drift(1.5)],
    ids=["stable-0.3", "stable-0.5", "stable-0.7", "drift"],
)
def test_expectation_of_one(law):
    assert subordinate_expectation(lambda u, x: 1.0, law, 1.0, 0.0).value == pytest.approx(1.0, abs=1e-3)


def test_expectation_of_one_on_grid_law(half_grid):
    law = HittingLaw.from_grid(half_grid)
    assert subordinate_expectation(lambda u, x: 1.0, law, 1.0, 0.0).value == pytest.approx(1.0, abs=1e-3)


def test_fourier_mode_gives_mittag_leffler():
    # T_u e^{ipx} at x = 0 for the Cauchy process with symbol -|p|
    e = subordinate_expectation(lambda u, x: math.exp(-u), HittingLaw.stable(0.5), 1.0, 0.0)
    ref = math.e * erfc(1.0)
    assert ref == pytest.approx(0.427584, abs=1e-6)
    assert abs(e.value - ref) < 1e-6


def test_density_grid_matches_closed_form():
    y = np.array([0.01, 0.3, 1.0, 4.0, 20.0])
    g = subordinate_density_grid(stable_transition(1.0), HittingLaw.stable(0.5), [0.0, 0.5, 2.0], y)
    assert np.all(g[0] == 0)
    for i, t in enumerate([0.5, 2.0], start=1):
        assert np.allclose(g[i], cauchy_subordinated(t, y), rtol=1e-10)


def test_density_grid_agrees_with_adaptive():
    T, law = stable_transition(1.0), HittingLaw.stable(0.5)
    g = subordinate_density_grid(T, law, [1.0], [0.7])
    assert g[0, 0] == pytest.approx(subordinate_density(T, law, 1.0, 0.0, 0.7).value, rel=1e-8)


# ---------------------------------------------------------------- fractional derivatives


def test_gl_weights():
    w = gl_weights(0.5, 4)
    assert np.allclose(w, [1, -0.5, -0.125, -0.0625, -0.0390625])


@pytest.mark.parametrize("dt", [0.01, 0.005])
def test_rl_power_rule(dt):
    t = dt * np.arange(int(round(1 / dt)) + 1)
    n = t.size - 1
    assert abs(fractional_derivative_rl(t, 0.5, n, dt) - 1 / math.gamma(1.5)) < 2 * dt
    assert abs(fractional_derivative_rl(np.ones_like(t), 0.5, n, dt) - 1 / math.sqrt(math.pi)) < 2 * dt
    assert 1 / math.gamma(1.5) == pytest.approx(1.128379, abs=1e-6)


def test_rl_near_one_is_a_difference_quotient():
    dt = 0.01
    t = dt * np.arange(101)
    f = np.sin(t)
    gl = fractional_derivative_rl(f, 0.999, 100, dt)
    assert gl == pytest.approx((f[100] - f[99]) / dt, rel=0.01)


def test_rl_all_matches_pointwise():
    dt = 0.05
    f = np.exp(-np.arange(30) * dt)
    allv = fractional_derivative_rl_all(f, 0.4, dt)
    for n in (1, 7, 29):
        assert allv[n] == pytest.approx(fractional_derivative_rl(f, 0.4, n, dt), rel=1e-13)
    with pytest.raises(DomainError):
        fractional_derivative_rl(f, 0.4, 0, dt)


# ---------------------------------------------------------------- residuals


def q_grid(h, fn):
    t = np.arange(0, 2 + h / 2, h)
    u = np.arange(0, 4 + h / 2, h)
    T, U = np.meshgrid(t, u, indexing="ij")
    V = np.zeros_like(T)
    V[1:] = fn(T[1:], U[1:])
    return HittingDensityGrid(t, u, V)


def wrong_q(t, u):
    return np.exp(-(u ** 2) / (2 * t)) * np.sqrt(2 / (np.pi * t))


def test_eqonq4_residual_first_order():
    r = [residual_eqonQ4(q_grid(h, half_stable_q), 0.5).window_max((0.5, 2), (0.2, 2)) for h in (0.01, 0.005)]
    assert r[0] < 5 * 0.01 and r[1] < 5 * 0.005
    assert 1.5 <= r[0] / r[1] <= 3.0
    neg = residual_eqonQ4(q_grid(0.01, wrong_q), 0.5).window_max((0.5, 2), (0.2, 2))
    assert neg >= 10 * r[0]


def test_eqonq4_requires_t_from_zero():
    g = q_grid(0.05, half_stable_q)
    shifted = HittingDensityGrid(g.t[1:], g.u, g.values[1:])
    with pytest.raises(DomainError):
        residual_eqonQ4(shifted, 0.5)


def g_on_grid(h, Y=20.0, negative=False):
    t = np.arange(0, 2 + h / 2, h)
    n = int(round(Y / h))
    y = (np.arange(-n, n) + 0.5) * h
    T = stable_transition(1.0)
    g = np.zeros((t.size, y.size))
    if negative:
        g[1:] = T(t[1:, None], 0.0, y[None, :])
    else:
        g[1:] = cauchy_subordinated(t[1:, None], y[None, :])
    return g, t, y


def test_fracforward_residual_and_controls():
    g, t, y = g_on_grid(0.04)
    r = residual_fracforward(g, t, y, 1.0, 0.5).window_max((0.5, 2), (0.5, 3), absolute_x=True)
    gn, _, _ = g_on_grid(0.04, negative=True)
    neg = residual_fracforward(gn, t, y, 1.0, 0.5).window_max((0.5, 2), (0.5, 3), absolute_x=True)
    assert r < 0.5 * 0.04
    assert neg >= 10 * r


def test_fracforward_insensitive_to_constant_shift():
    g, t, y = g_on_grid(0.04)
    a = residual_fracforward(g, t, y, 1.0, 0.5).values
    b = residual_fracforward(g + 0.3, t, y, 1.0, 0.5).values
    # the shift moves both operators by amounts that do not depend on y inside
    # the window; only the zero extension far away leaves a small trace
    inner = np.abs(y) <= 3
    spread = np.ptp((b - a)[:, inner], axis=1)
    assert np.all(spread <= 0.01 * 0.3)


# ---------------------------------------------------------------- joint law of (Y(s), Z(t))


def _joint_sample(rho, n=4000, tau=0.01, seed=0, v_det=False):
    k = pareto_kernel(1.0)
    if v_det:
        dk = DoubleJumpKernel(k, 0.5, temporal="deterministic", v_step=tau ** (1 - 1 / 0.5))
    else:
        dk = DoubleJumpKernel(k, 0.5, rho=rho)
    s = tau * np.arange(0, 601)
    return subordinated_endpoints(dk, 0.0, tau, 1.0, n, np.random.default_rng(seed), s_grid=s)


def test_joint_density_needs_enough_paths():
    samp = _joint_sample(0.0, n=500)
    with pytest.raises(DomainError):
        direct_density(samp, np.linspace(-5, 5, 11))


def test_drift_clock_collapses_joint_law():
    samp = _joint_sample(0.0, n=1500, v_det=True)
    # V(u) = u up to rounding in the summed steps, so Z(1) is one step from 1
    assert np.all(samp.z == samp.z[0]) and abs(samp.z[0] - 1.0) <= 0.01 + 1e-12
    J = empirical_joint_density(samp, 0.5, np.linspace(-1e4, 1e4, 21), np.linspace(0.9, 1.1, 21))
    col = np.searchsorted(J.u_edges, samp.z[0], side="right") - 1
    assert J.counts[:, col].sum() == J.total


def test_independent_joint_factorises():
    samp = _joint_sample(0.0, n=20000, seed=3)
    ye = np.linspace(-3, 3, 5)
    ue = np.linspace(0.0, 1.6, 5)
    J = empirical_joint_density(samp, 0.2, ye, ue)
    N = J.total
    ys = samp.y_grid[:, np.argmin(np.abs(samp.s_grid - 0.2))]
    py = np.histogram(ys, ye)[0] / N
    pu = np.histogram(samp.z, ue)[0] / N
    expected = N * np.outer(py, pu)
    sd = np.sqrt(np.maximum(expected, 1.0))
    assert np.all(np.abs(J.counts - expected) <= 3 * sd + 1)


def test_diagonal_estimator_agrees_for_dependent_kernel():
    samp = _joint_sample(1.0, n=20000, seed=4)
    edges = np.linspace(-6, 6, 13)
    a = direct_density(samp, edges)
    b = diagonal_density(samp, edges)
    tol = 2 * np.hypot(a.stderr, b.stderr)
    assert np.all(np.abs(a.density - b.density) <= tol + 1e-12)


def test_diagonal_equals_direct_on_step_grid():
    samp = _joint_sample(1.0, n=3000, seed=9)
    edges = np.linspace(-6, 6, 13)
    assert np.array_equal(direct_density(samp, edges).counts, diagonal_density(samp, edges).counts)


def test_unrecorded_s_rejected():
    samp = _joint_sample(0.0, n=1200)
    with pytest.raises(DomainError):
        empirical_joint_density(samp, 0.12345, np.linspace(-1, 1, 3), np.linspace(0, 1, 3))
