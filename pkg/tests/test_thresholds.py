import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lmradial.mesh import build_mesh
from lmradial.problem import ProblemSpec, PurePower
from lmradial.thresholds import (c_epsilon, check_gradient_conditions, check_superlinearity,
                                 compute_lambda_star, compute_thresholds, critical_exponent,
                                 default_alpha, estimate_embedding_constant, gamma_ratio,
                                 hardy_ratio, lambda_star2)

from conftest import desk_problem


class TestEmbedding:
    def test_c2_approaches_continuous_value(self, mesh400):
        # for N = 3, R = 1 the best constant is 1/pi^2 (first Dirichlet eigenvalue of the ball)
        C2 = estimate_embedding_constant(mesh400, 2.0)
        assert abs(C2 - 1 / math.pi**2) < 1e-5

    def test_refinement_is_monotone_in_practice(self):
        vals = [estimate_embedding_constant(build_mesh(3, 1.0, M), 2.0) for M in (25, 50, 100)]
        assert all(abs(v - 1 / math.pi**2) < 3e-3 for v in vals)

    @pytest.mark.parametrize("R", [0.5, 2.0])
    def test_scaling_in_radius(self, R):
        # u(r) -> u(r/R) gives C2(R) = R^2 C2(1)
        base = estimate_embedding_constant(build_mesh(3, 1.0, 60), 2.0)
        scaled = estimate_embedding_constant(build_mesh(3, R, 60), 2.0)
        assert np.isclose(scaled, R**2 * base, rtol=1e-8)

    def test_reports_a_positive_constant_for_subquadratic_exponents(self):
        m = build_mesh(3, 1.0, 50)
        assert estimate_embedding_constant(m, 1.5) > 0


class TestHardy:
    @pytest.mark.parametrize("N", [3, 4, 5])
    def test_below_sharp_constant(self, N):
        assert hardy_ratio(build_mesh(N, 1.0, 200, "graded")) <= 4 / (N - 2) ** 2 + 1e-3


class TestSuperlinearity:
    def test_gamma_ratio(self):
        assert np.isclose(gamma_ratio(3, 5), 1 / 168, rtol=1e-12, atol=0)

    def test_equality_case(self):
        chk = check_superlinearity(3, 5.0, 224.0, 0.0, 1.0)
        assert abs(chk.lhs + 1.0) <= 1e-12
        assert chk.ok

    @pytest.mark.parametrize("a1,ok", [(223.0, False), (225.0, True), (1120.0, True)])
    def test_n3_reduction(self, a1, ok):
        # for N = 3, theta = 5, a2 = 0 the test reads a1 R^5 / 168 >= 4/3
        assert check_superlinearity(3, 5.0, a1, 0.0, 1.0).ok is ok
        assert (a1 / 168 >= 4 / 3) is ok

    @pytest.mark.parametrize("kw", [dict(theta=2.0), dict(a1=-1.0)])
    def test_validation(self, kw):
        args = dict(N=3, theta=5.0, a1=1.0, a2=0.0, R=1.0)
        args.update(kw)
        with pytest.raises(ValueError):
            check_superlinearity(**args)


class TestRadii:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(3, 8), st.floats(0.2, 5.0), st.floats(1.05, 1.95), st.floats(0.05, 0.95),
           st.floats(0.01, 10.0), st.floats(0.01, 10.0), st.floats(0.01, 10.0))
    def test_threshold_identity(self, N, R, q, frac, dq, ce, da):
        crit = critical_exponent(N)
        alpha = 2 + frac * (crit - 2)
        base = compute_lambda_star(N, q, alpha, dq * R, ce, da)
        at = compute_lambda_star(N, q, alpha, dq * R, ce, da, base["lambda_star"])
        assert np.isclose(at["rho_minus"], base["rho_plus"], rtol=1e-10, atol=0)

    def test_rho_minus_grows_with_lambda(self):
        lo = compute_lambda_star(3, 1.5, 4.0, 0.1, 1.0, 0.1, 0.1)["rho_minus"]
        hi = compute_lambda_star(3, 1.5, 4.0, 0.1, 1.0, 0.1, 0.2)["rho_minus"]
        assert hi > lo

    def test_lambda_star2_capped_or_admissible(self):
        lam2, capped = lambda_star2(3, 1.0, 1.5, 4.0, 0.1, 1.0, 0.1, 100.0)
        assert lam2 <= 100.0
        if not capped:
            rho = compute_lambda_star(3, 1.5, 4.0, 0.1, 1.0, 0.1, lam2)["rho_minus"]
            assert -lam2 * 0.1 * rho**1.5 - 0.1 * rho**4 >= -1.0 - 1e-12

    def test_c_epsilon_bounds_primitive(self):
        nl = PurePower(3.0, 3.0)
        alpha, eps = 5.0, 0.7
        c = c_epsilon(nl, 1.0, alpha, eps)
        s = np.linspace(-1, 1, 2001)
        assert np.all(np.abs(nl.F(0.0, s)) <= eps * s**2 / 2 + c * np.abs(s) ** alpha + 1e-14)

    @pytest.mark.parametrize("alpha", [1.5, 6.0])
    def test_alpha_range(self, alpha):
        with pytest.raises(ValueError):
            compute_lambda_star(3, 1.5, alpha, 1.0, 1.0, 1.0)


class TestReport:
    def test_desk_values(self, desk_thresholds):
        t = desk_thresholds
        assert t["alpha"] == default_alpha(3) == 4.0
        assert t["superlinearity_ok"]
        assert t["rho_minus"] < t["rho_plus"]
        assert t["lambda_star2"] <= t["lambda_star"]
        assert 0 < t["lam"] < t["lambda_star2"]
        assert t["constants_are_discrete_estimates"]

    def test_precomputed_constants_are_used(self, mesh400, desk_thresholds):
        t = desk_thresholds
        again = compute_thresholds(desk_problem(), mesh400,
                                   constants={k: t[k] for k in ("C2", "Cq", "Calpha")})
        assert again.lambda_star == t["lambda_star"]


class TestGradientConditions:
    def test_predicted_factor(self):
        gc = check_gradient_conditions(1.0, 0.5, 0.1, 1.5, 1.0, 1.0, lam=0.2)
        den = 1 - (0.2 * 2**-0.5 * 1.5 + 1.0) * 0.1
        assert np.isclose(gc.k, 0.5 * math.sqrt(0.1) / den)
        assert gc.ok

    def test_violation(self):
        gc = check_gradient_conditions(10.0, 0.5, 0.1, 1.5, 1.0, 1.0)
        assert not gc.l1_ok and not gc.ok

    def test_nonpositive_denominator(self):
        assert check_gradient_conditions(20.0, 0.5, 0.1, 1.5, 1.0, 1.0).k == math.inf

    def test_lambda_bar(self):
        gc = check_gradient_conditions(0.0, 0.0, 0.1, 1.5, 2.0, 1.0)
        assert np.isclose(gc.lambda_bar, 1 / (4 * 2**-0.5 * 1.5 * 2.0 * 0.1))

    def test_report_includes_conditions(self, mesh400, desk_thresholds):
        from lmradial.problem import PowerGradientTerm
        gt = PowerGradientTerm.build(1.0, 2.5, 0.5, 1.0)
        p = ProblemSpec(3, 1.0, 1.0, 1.5, PurePower(1.0, 2.5), gradient_term=gt)
        t = compute_thresholds(p, mesh400,
                               constants={k: desk_thresholds[k] for k in ("C2", "Cq", "Calpha")})
        assert t.lip_ok["ok"]
        assert t.k_predicted < 1
