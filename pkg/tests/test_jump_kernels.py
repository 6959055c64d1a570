import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from fracwalk.errors import DomainError
from fracwalk.jump_kernels import (
    AngularCap,
    DoubleJumpKernel,
    JumpKernel,
    pareto_kernel,
    sample_joint_jump,
    sample_jump,
    tail_ratio,
    validate_tail_limit_w,
)
from fracwalk.stable_core import anisotropic_density, canonical_density, constant_density, sinusoidal_density


def binom_se(p, n):
    return math.sqrt(p * (1 - p) / n)


class TestJumpKernel:
    def test_pareto_tail_exact(self):
        rng = np.random.default_rng(0)
        y = sample_jump(pareto_kernel(1.0), 0.0, rng, 1_000_000)
        assert np.mean(np.abs(y) > 10) == pytest.approx(0.1, abs=0.001)

    def test_sign_symmetry(self):
        rng = np.random.default_rng(1)
        y = sample_jump(pareto_kernel(1.5), 0.0, rng, 100_000)
        assert abs(np.mean(np.sign(y))) < 0.01

    @pytest.mark.parametrize("a", [0.5, 1.0, 1.7])
    def test_no_zero_jumps(self, a):
        k = pareto_kernel(a)
        y = sample_jump(k, 0.0, np.random.default_rng(2), 100_000)
        assert np.min(np.abs(y)) >= float(k.r_min(0.0))
        assert float(k.r_min(0.0)) == pytest.approx(1.0)

    def test_r_min_tracks_mass(self):
        # S = alpha/2 (1 + eps sin x): r_min = (1 + eps sin x)^(1/alpha)
        k = JumpKernel(sinusoidal_density(0.8, 0.5), 0.8)
        x = np.array([0.0, np.pi / 2, -np.pi / 2])
        assert np.allclose(k.r_min(x), (1 + 0.5 * np.sin(x)) ** (1 / 0.8))

    def test_lomax_no_atom(self):
        k = JumpKernel(canonical_density(1.0), 1.0, "lomax")
        y = sample_jump(k, 0.0, np.random.default_rng(3), 100_000)
        assert np.all(y != 0)

    def test_rejects_bad_family(self):
        with pytest.raises(DomainError):
            JumpKernel(canonical_density(1.0), 1.0, "gauss")

    def test_two_dim_shape(self):
        k = pareto_kernel(1.2, dim=2)
        y = k.sample(np.zeros(2), np.random.default_rng(4), 1000)
        assert y.shape == (1000, 2)
        assert np.min(np.hypot(y[:, 0], y[:, 1])) >= float(k.r_min(np.zeros(2))) * (1 - 1e-12)


class TestTailRatio:
    @pytest.mark.parametrize("n", [1.0, 3.0, 30.0])
    def test_pareto_full_sphere(self, n):
        N = 400_000
        r = tail_ratio(pareto_kernel(1.0), 0.0, n, AngularCap(), N, np.random.default_rng(5))
        p = n ** -1.0
        assert abs(r - 1.0) <= 3 * binom_se(p, N) / p

    def test_at_r_min_is_one(self):
        r = tail_ratio(pareto_kernel(0.7), 0.0, 1.0, AngularCap(), 10_000, np.random.default_rng(6))
        assert r == 1.0

    def test_half_caps_agree(self):
        N = 400_000
        k = pareto_kernel(1.3)
        rp = tail_ratio(k, 0.0, 5.0, AngularCap(signs=(1.0,)), N, np.random.default_rng(7))
        rm = tail_ratio(k, 0.0, 5.0, AngularCap(signs=(-1.0,)), N, np.random.default_rng(8))
        p = 0.5 * 5.0 ** -1.3
        assert abs(rp - rm) <= 2 * math.sqrt(2) * binom_se(p, N) / p

    def test_zero_mass_cap(self):
        with pytest.raises(DomainError):
            tail_ratio(pareto_kernel(1.0), 0.0, 2.0, AngularCap(signs=()), 100, np.random.default_rng(0))

    def test_below_r_min(self):
        with pytest.raises(DomainError):
            tail_ratio(pareto_kernel(1.0), 0.0, 0.5, AngularCap(), 100, np.random.default_rng(0))

    def test_lomax_rate(self):
        # exact ratio is (n / (n + 1))^alpha, so |ratio - 1| <= alpha / n
        a = 1.0
        k = JumpKernel(canonical_density(a), a, "lomax")
        for n in [10.0, 100.0, 1000.0]:
            exact = float(k.radial_sf(n, 0.0)) * a * n**a / a
            assert abs(exact - 1.0) <= a / n
        N = 2_000_000
        for n in [10.0, 100.0]:
            r = tail_ratio(k, 0.0, n, AngularCap(), N, np.random.default_rng(int(n)))
            p = (1 + n) ** -a
            assert abs(r - 1.0) <= a / n + 3 * binom_se(p, N) / n**-a

    def test_position_dependent(self):
        N = 400_000
        k = JumpKernel(sinusoidal_density(1.0, 0.5), 1.0)
        for x in [0.3, 2.0]:
            r = tail_ratio(k, np.array([x]), 10.0, AngularCap(), N, np.random.default_rng(9))
            p = (1 + 0.5 * math.sin(x)) / 10.0
            assert abs(r - 1.0) <= 3 * binom_se(p, N) / p

    def test_two_dim_cap(self):
        N = 400_000
        k = JumpKernel(anisotropic_density(1.0, 0.5), 1.0)
        x = np.array([1.0, 0.0])
        cap = AngularCap(center=0.3, half_width=0.5, symmetric=True)
        r = tail_ratio(k, x, 10.0, cap, N, np.random.default_rng(10))
        p = cap.s_mass(k.spectral, x) / 10.0
        assert abs(r - 1.0) <= 3 * binom_se(p, N) / p


class TestPositionContinuity:
    def test_angular_frequencies_nearby_points(self):
        k = JumpKernel(anisotropic_density(1.0, 0.5), 1.0)
        cap = AngularCap(center=0.0, half_width=np.pi / 4, symmetric=True)
        N = 1_000_000
        freqs = []
        for x1 in [1.0, 1.01]:
            th = k.sample_directions(np.array([x1, 0.0]), np.random.default_rng(11), N)
            freqs.append(np.mean(cap.contains(th, 2)))
        # the exact cap probability moves by about 0.16 |dx|
        se = binom_se(freqs[0], N)
        assert abs(freqs[0] - freqs[1]) <= 0.2 * 0.01 + 4 * se

    def test_direction_law_matches_s(self):
        k = JumpKernel(anisotropic_density(1.0, 0.5), 1.0)
        x = np.array([1.2, 0.0])
        cap = AngularCap(center=0.0, half_width=np.pi / 4, symmetric=True)
        N = 400_000
        th = k.sample_directions(x, np.random.default_rng(12), N)
        p = cap.s_mass(k.spectral, x) / float(k.spectral.mass(x))
        assert np.mean(cap.contains(th, 2)) == pytest.approx(p, abs=4 * binom_se(p, N))


class TestDoubleJumpKernel:
    def test_independent_logs_uncorrelated(self):
        dk = DoubleJumpKernel(pareto_kernel(1.0), 0.5, rho=0.0)
        y, v = sample_joint_jump(dk, 0.0, 0.0, np.random.default_rng(13), 100_000)
        assert abs(np.corrcoef(np.log(np.abs(y)), np.log(v))[0, 1]) < 0.01

    def test_comonotone_rank_correlation(self):
        dk = DoubleJumpKernel(pareto_kernel(0.5), 0.5, rho=1.0)
        y, v = sample_joint_jump(dk, 0.0, 0.0, np.random.default_rng(14), 100_000)
        assert stats.spearmanr(np.abs(y), v)[0] == pytest.approx(1.0, abs=1e-12)

    def test_temporal_tail(self):
        dk = DoubleJumpKernel(pareto_kernel(1.0), 0.5)
        _, v = sample_joint_jump(dk, 0.0, 0.0, np.random.default_rng(15), 1_000_000)
        assert np.mean(v > 10) == pytest.approx(10**-0.5, abs=0.0015)

    def test_draws_nonzero(self):
        dk = DoubleJumpKernel(JumpKernel(canonical_density(1.0), 1.0, "lomax"), 0.7, rho=0.5)
        y, v = sample_joint_jump(dk, 0.0, 0.0, np.random.default_rng(16), 100_000)
        assert np.all(v > 0) and np.all(y != 0)

    def test_reflection_symmetry(self):
        dk = DoubleJumpKernel(pareto_kernel(1.0), 0.5, rho=0.3)
        N = 200_000
        y, v = sample_joint_jump(dk, 0.0, 0.0, np.random.default_rng(17), N)
        # P(Y > 2, V > 3) = P(Y < -2, V > 3)
        a = np.mean((y > 2) & (v > 3))
        b = np.mean((y < -2) & (v > 3))
        assert abs(a - b) <= 3 * math.sqrt(2) * binom_se(a, N)

    def test_deterministic_temporal(self):
        dk = DoubleJumpKernel(pareto_kernel(1.0), 0.5, temporal="deterministic", v_step=1.0)
        y1, v = dk.sample(0.0, 0.0, np.random.default_rng(18), 50)
        assert np.all(v == 1.0)
        y2 = pareto_kernel(1.0).sample(0.0, np.random.default_rng(18), 50)
        assert np.array_equal(y1, y2)

    @pytest.mark.parametrize("rho", [-0.1, 1.5])
    def test_bad_rho(self, rho):
        with pytest.raises(DomainError):
            DoubleJumpKernel(pareto_kernel(1.0), 0.5, rho=rho)

    def test_custom_w_scales_tail(self):
        dk = DoubleJumpKernel(pareto_kernel(1.0), 0.5, w=lambda x, u: 1.0 + 0.0 * np.asarray(x))
        _, v = dk.sample(0.0, 0.0, np.random.default_rng(19), 400_000)
        # P(V > n) = (w / beta) n^-beta
        assert np.mean(v > 100) == pytest.approx(2 * 100**-0.5, abs=4 * binom_se(0.2, 400_000))


class TestTailLimitW:
    N = 1_000_000

    def test_a_zero(self):
        dk = DoubleJumpKernel(pareto_kernel(1.0), 0.5)
        est = validate_tail_limit_w(dk, 0.0, 0.0, 0.0, 100.0, self.N, np.random.default_rng(20))
        p = 0.1
        assert est == pytest.approx(dk.beta, abs=3 * 0.5 * 10 * binom_se(p, self.N))

    def test_large_a_vanishes(self):
        dk = DoubleJumpKernel(pareto_kernel(1.0), 0.5, rho=0.0)
        est = validate_tail_limit_w(dk, 0.0, 0.0, 1000.0, 100.0, self.N, np.random.default_rng(21))
        assert est < 0.005
        assert float(dk.tail_limit_w(0.0, 0.0, 1000.0)) == pytest.approx(0.5e-3)

    def test_monotone_in_a(self):
        dk = DoubleJumpKernel(pareto_kernel(1.0), 0.5, rho=0.0)
        ests = [validate_tail_limit_w(dk, 0.0, 0.0, A, 100.0, self.N, np.random.default_rng(22)) for A in [1.0, 2.0, 4.0]]
        err = 3 * 0.5 * 10 * binom_se(0.1, self.N)
        assert ests[1] <= ests[0] + err and ests[2] <= ests[1] + err
        assert ests[1] == pytest.approx(0.25, abs=err)

    def test_comonotone_limit_is_rho_w(self):
        # radius pairing keeps a fraction rho of the joint tail at every A
        dk = DoubleJumpKernel(pareto_kernel(1.0), 0.5, rho=0.4)
        assert float(dk.tail_limit_w(0.0, 0.0, 1e12)) == pytest.approx(0.4 * 0.5, rel=1e-9)
        est = validate_tail_limit_w(dk, 0.0, 0.0, 50.0, 1e4, self.N, np.random.default_rng(23))
        exact = 0.5 * (0.6 / 50.0 + 0.4)
        assert est == pytest.approx(exact, abs=3 * 0.5 * 100 * binom_se(0.01 * exact / 0.5, self.N))

    @settings(max_examples=20, deadline=None)
    @given(A=st.floats(0, 1e3), rho=st.floats(0, 1))
    def test_limit_bounds(self, A, rho):
        dk = DoubleJumpKernel(pareto_kernel(1.0), 0.5, rho=rho)
        w = float(dk.tail_limit_w(0.0, 0.0, A))
        assert rho * 0.5 - 1e-15 <= w <= 0.5 + 1e-15
        assert float(dk.tail_limit_w(0.0, 0.0, 0.0)) == pytest.approx(0.5)
