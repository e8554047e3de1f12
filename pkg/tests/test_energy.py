import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize, special

from lmradial.energy import (DiscreteEnergy, SingularSlope, criticality_residual, discretize,
                             energy, frozen_nonlinearity, grad_smooth, prox_psi, prox_residual,
                             psi, weak_residual)
from lmradial.mesh import SlopeField, build_mesh, h_norm_sq
from lmradial.problem import PowerGradientTerm, ProblemSpec, PurePower
from lmradial.verify import certify

from conftest import desk_problem


def beta(a, b):
    return math.exp(special.gammaln(a) + special.gammaln(b) - special.gammaln(a + b))


class TestPsi:
    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 60))
    def test_sandwich(self, seed, M):
        m = build_mesh(3, 1.0, M, "graded")
        v = np.random.default_rng(seed).uniform(-1, 1, M)
        s = SlopeField(m, v)
        n2 = h_norm_sq(s)
        assert 0.5 * n2 <= psi(s) * (1 + 1e-15) and psi(s) <= n2 * (1 + 1e-15)

    @pytest.mark.parametrize("sign", [-1.0, 1.0])
    def test_light_cone_value(self, sign):
        m = build_mesh(4, 1.5, 30)
        assert np.isclose(psi(SlopeField(m, sign * np.ones(30))), 1.5**4 / 4, rtol=1e-14)

    def test_small_slopes_no_cancellation(self):
        m = build_mesh(3, 1.0, 10)
        v = np.full(10, 1e-9)
        assert np.isclose(psi(SlopeField(m, v)), 0.5 * h_norm_sq(SlopeField(m, v)), rtol=1e-12)


class TestProx:
    @pytest.mark.parametrize("z,tau", [(0.3, 1.0), (-2.0, 0.5), (5.0, 1e-3), (-0.01, 10.0),
                                       (40.0, 1.0)])
    def test_matches_scalar_minimization(self, z, tau):
        obj = lambda v: (1 - math.sqrt(1 - v * v)) + (v - z) ** 2 / (2 * tau)
        ref = optimize.minimize_scalar(obj, bounds=(-1, 1), method="bounded",
                                       options={"xatol": 1e-13}).x
        got = float(prox_psi(z, tau))
        assert abs(got - ref) < 1e-6
        assert obj(got) <= obj(ref) + 1e-13

    def test_bisection_oracle(self):
        ref = optimize.bisect(lambda v: v / math.sqrt(1 - v * v) + v - 0.5, 0.0, 0.99,
                              xtol=1e-15, rtol=1e-15)
        got = float(prox_psi(0.5, 1.0))
        assert abs(got - ref) < 1e-13
        assert abs(prox_residual(got, 0.5, 1.0)) <= 1e-12

    def test_zero_and_oddness(self):
        z = np.linspace(-3, 3, 41)
        assert prox_psi(0.0, 1.0) == 0.0
        assert np.array_equal(prox_psi(-z, 0.7), -prox_psi(z, 0.7))

    def test_inside_cone(self):
        assert np.all(np.abs(prox_psi(np.array([1e3, -1e6, 1e12]), 1e-6)) < 1)

    def test_rejects_nonpositive_step(self):
        with pytest.raises(ValueError):
            prox_psi(1.0, 0.0)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-50, 50), st.floats(-50, 50), st.floats(1e-4, 1e3))
    def test_nonexpansive(self, a, b, tau):
        pa, pb = prox_psi(a, tau), prox_psi(b, tau)
        assert abs(pa - pb) <= abs(a - b) * (1 + 1e-12) + 1e-15

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-20, 20), st.floats(1e-3, 1e2))
    def test_optimality_residual(self, z, tau):
        v = prox_psi(z, tau)
        assert abs(prox_residual(v, z, tau)) <= 1e-12 * max(1.0, abs(z))


class TestEnergy:
    def test_extremal_profile_matches_beta_integrals(self):
        # I(1 - r) = 1/3 - (lam/q) B(3, q + 1) - (a/theta) B(3, theta + 1) for N = 3, R = 1
        lam, q, a, th = 0.47, 1.5, 1120.0, 5.0
        exact = 1 / 3 - lam / q * beta(3, q + 1) - a / th * beta(3, th + 1)
        m = build_mesh(3, 1.0, 800)
        e = energy(SlopeField(m, -np.ones(800)), desk_problem(lam))
        assert abs(e.total - exact) < 1e-4
        assert np.isclose(exact, -1.0 - lam / q * beta(3, 2.5))

    def test_branch_ignores_other_sign(self):
        m = build_mesh(3, 1.0, 50)
        p = desk_problem()
        v = np.ones(50) * 0.3
        assert energy(SlopeField(m, v), p).q_term == 0.0
        assert energy(SlopeField(m, v), p).f_term == 0.0
        assert energy(SlopeField(m, v), p.with_branch("negative")).f_term > 0

    def test_gradient_matches_central_differences(self, rng):
        m = build_mesh(3, 1.0, 60, "graded")
        p = desk_problem(branch="full")
        de = discretize(p, m)
        for _ in range(10):
            v = rng.uniform(-0.05, 0.05, 60)
            g = de.euclid_grad(v)
            d = rng.normal(size=60)
            t = 1e-6
            fd = (de.smooth_value(v + t * d) - de.smooth_value(v - t * d)) / (2 * t)
            assert abs(fd - g @ d) <= 1e-6 * max(1.0, abs(fd))

    def test_h_gradient_convention(self, rng):
        m = build_mesh(3, 1.0, 20)
        de = discretize(desk_problem(), m)
        v = rng.uniform(-0.1, 0, 20)
        assert np.allclose(de.grad(v) * m.cell_weights, de.euclid_grad(v))
        assert np.allclose(grad_smooth(SlopeField(m, v), desk_problem()), de.grad(v))

    def test_batched_evaluation(self, rng):
        m = build_mesh(3, 1.0, 25)
        de = discretize(desk_problem(), m)
        V = rng.uniform(-0.2, 0.0, (4, 25))
        assert np.allclose(de.value(V), [de.value(v) for v in V])
        assert np.allclose(de.grad(V), np.array([de.grad(v) for v in V]))

    def test_mesh_mismatch(self):
        with pytest.raises(ValueError):
            DiscreteEnergy(desk_problem(), build_mesh(4, 1.0, 10))


class TestResiduals:
    def test_zero_is_a_fixed_point_but_not_certified(self):
        m = build_mesh(3, 1.0, 40)
        p = desk_problem()
        z = SlopeField(m, np.zeros(40))
        assert criticality_residual(z, p) == 0.0
        cert = certify(z, p, "global-min")
        assert not cert.accepted
        assert not cert.checks["nontrivial"]["ok"]

    def test_nonzero_residual_off_critical(self):
        m = build_mesh(3, 1.0, 40)
        assert criticality_residual(SlopeField(m, -0.5 * np.ones(40)), desk_problem()) > 1e-3

    def test_weak_residual_singular(self):
        m = build_mesh(3, 1.0, 10)
        with pytest.raises(SingularSlope):
            weak_residual(SlopeField(m, -np.ones(10)), desk_problem())

    def test_certified_minimum_has_small_weak_residual(self, desk_solutions):
        u = desk_solutions["u+"]
        assert weak_residual(u.slopes, desk_problem()) < 1e-6


class TestFrozen:
    def test_zero_slopes_freeze_to_xi_zero(self):
        m = build_mesh(3, 1.0, 30)
        gt = PowerGradientTerm.build(2.0, 4.0, 0.7, 1.0)
        p = ProblemSpec(3, 1.0, 0.1, 1.5, PurePower(2.0, 4.0), gradient_term=gt)
        nl = frozen_nonlinearity(p, m, np.zeros(30))
        s = np.linspace(-1, 1, 31)
        assert np.allclose(nl.f(m.nodes, s), gt.g(m.nodes, s, 0.0))

    def test_xi_independent_term_is_unchanged(self, rng):
        m = build_mesh(3, 1.0, 30)
        gt = PowerGradientTerm.build(2.0, 4.0, 0.0, 1.0)
        p = ProblemSpec(3, 1.0, 0.1, 1.5, PurePower(2.0, 4.0), gradient_term=gt)
        v = rng.uniform(-1, 0, 30)
        frozen = DiscreteEnergy(p, m, nonlinearity=frozen_nonlinearity(p, m, v))
        plain = DiscreteEnergy(p, m)
        w = rng.uniform(-0.3, 0, 30)
        assert np.isclose(frozen.value(w), plain.value(w), rtol=1e-13)

    def test_half_cells_use_their_own_slope(self):
        m = build_mesh(3, 1.0, 4)
        gt = PowerGradientTerm.build(1.0, 3.0, 1.0, 1.0)
        p = ProblemSpec(3, 1.0, 0.1, 1.5, PurePower(1.0, 3.0), gradient_term=gt)
        v = np.array([-0.8, -0.2, -0.2, -0.2])
        nl = frozen_nonlinearity(p, m, v)
        left, right = m.half_weights()
        s = 0.5
        expect = (left[1] * (1 + 0.8) + right[1] * (1 + 0.2)) / m.node_weights[1] * s**2
        assert np.isclose(nl.f(m.nodes, np.full(5, s))[1], expect)
