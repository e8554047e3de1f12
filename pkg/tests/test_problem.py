import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lmradial.problem import (AffineWeight, AsymmetricPower, CallableWeight, ConstantWeight,
                              Custom, GradientTermSpec, PowerGradientTerm, ProblemSpec, PurePower,
                              truncate_branch, truncate_primitive)

FAMILIES = [
    PurePower(3.0, 4.5),
    AsymmetricPower(2.0, 5.0, 5.0),
    Custom(lambda r, s: (1 + r) * np.abs(s) ** 2 * s, theta=4.0, a1_value=0.25),
]


class TestWeights:
    def test_constant(self):
        b = ConstantWeight(2.0)
        assert b.bounds == (2.0, 2.0)
        assert np.all(b(np.linspace(0, 1, 5)) == 2.0)

    def test_affine_bounds(self):
        b = AffineWeight(1.0, -0.5, 1.0)
        assert b.bounds == (0.5, 1.0)
        assert np.isclose(b(0.5), 0.75)

    def test_callable(self):
        b = CallableWeight(lambda r: 1 + r**2, 1.0, 2.0)
        p = ProblemSpec(3, 1.0, 0.1, 1.5, PurePower(1.0, 3.0), weight_b=b)
        assert p.check_weight(np.linspace(0, 1, 11))


class TestPrimitives:
    @pytest.mark.parametrize("nl", FAMILIES)
    def test_derivative_of_primitive(self, nl):
        r = np.linspace(0, 1, 5)[:, None]
        s = np.linspace(-0.9, 0.9, 13)[None, :]
        d = 1e-6
        fd = (nl.F(r, s + d) - nl.F(r, s - d)) / (2 * d)
        assert np.allclose(fd, nl.f(r, s), rtol=1e-6, atol=1e-8)

    @pytest.mark.parametrize("nl", FAMILIES)
    def test_primitive_vanishes_at_zero(self, nl):
        assert np.all(nl.F(np.linspace(0, 1, 4), np.zeros(4)) == 0.0)

    def test_custom_matches_closed_form(self):
        c = Custom(lambda r, s: 3 * np.abs(s) ** 2.5 * s, theta=4.5, a1_value=3 / 4.5)
        s = np.linspace(-1, 1, 21)
        assert np.allclose(c.F(0.0, s), PurePower(3.0, 4.5).F(0.0, s), rtol=1e-10, atol=1e-14)

    def test_asymmetry(self):
        nl = AsymmetricPower(2.0, 5.0, 5.0)
        s = np.array([0.3, 0.7])
        assert np.allclose(nl.asymmetry(s), np.abs(nl.F(0, -s) - nl.F(0, s)))
        assert not nl.odd and PurePower(1.0, 3.0).odd

    @pytest.mark.parametrize("bad", [dict(a=1.0, theta=2.0), dict(a=-1.0, theta=3.0)])
    def test_power_validation(self, bad):
        with pytest.raises(ValueError):
            PurePower(**bad)


class TestTruncation:
    R = 1.0

    @pytest.mark.parametrize("branch", ["positive", "negative", "full"])
    def test_continuity_at_ramp_ends(self, branch):
        nl = PurePower(5.0, 4.0)
        f = truncate_branch(nl, branch, self.R)
        for x in (self.R, self.R + 1, -self.R, -self.R - 1):
            a, b = f(0.0, x - 1e-12), f(0.0, x + 1e-12)
            assert abs(a - b) < 1e-9

    def test_branch_masks(self):
        nl = PurePower(5.0, 4.0)
        s = np.array([-2.5, -0.5, 0.5, 2.5])
        assert np.all(truncate_branch(nl, "positive", 1.0)(0.0, s)[:2] == 0)
        assert np.all(truncate_branch(nl, "negative", 1.0)(0.0, s)[2:] == 0)
        full = truncate_branch(nl, "full", 1.0)(0.0, s)
        assert full[0] == 0 and full[3] == 0

    @settings(max_examples=80, deadline=None)
    @given(st.floats(-2.9, 2.9), st.sampled_from(["positive", "negative", "full"]))
    def test_primitive_derivative(self, s, branch):
        nl = AsymmetricPower(2.0, 3.0, 4.0)
        F = truncate_primitive(nl, branch, self.R)
        f = truncate_branch(nl, branch, self.R)
        d = 1e-6
        # skip points where f has a kink
        if min(abs(abs(s) - self.R), abs(abs(s) - self.R - 1), abs(s)) < 1e-4:
            return
        fd = (F(0.0, s + d) - F(0.0, s - d)) / (2 * d)
        assert abs(fd - f(0.0, s)) < 1e-5 * max(1.0, abs(f(0.0, s)))

    def test_unknown_branch(self):
        with pytest.raises(ValueError):
            truncate_branch(PurePower(1.0, 3.0), "upper", 1.0)


class TestGradientTerm:
    def test_declared_constants_bound_difference_quotients(self):
        a, th, eta, R = 2.0, 4.0, 0.3, 1.0
        gt = PowerGradientTerm.build(a, th, eta, R)
        s = np.linspace(-R, R, 401)
        xi = np.linspace(0, 1, 41)
        S, X = np.meshgrid(s, xi)
        gs = np.abs(np.diff(gt.g(0, S, X), axis=1)) / np.diff(S, axis=1)
        gx = np.abs(np.diff(gt.g(0, S, X), axis=0)) / np.diff(X, axis=0)
        assert gs.max() <= gt.L1 * (1 + 1e-12)
        assert gx.max() <= gt.L2 * (1 + 1e-12)

    def test_primitive(self):
        gt = PowerGradientTerm.build(2.0, 4.0, 0.3, 1.0)
        quad = GradientTermSpec(gt.func, gt.L1, gt.L2, gt.theta, gt.a1)
        s = np.linspace(-1, 1, 9)
        assert np.allclose(gt.G(0, s, 0.5), 2.0 / 4 * np.abs(s) ** 4 * 1.15)
        assert np.allclose(quad.G(0.0, s, 0.5), gt.G(0.0, s, 0.5), rtol=1e-12, atol=1e-15)

    def test_sign_condition(self):
        gt = PowerGradientTerm.build(2.0, 4.0, -0.5, 1.0)
        s = np.linspace(-1, 1, 11)
        s = s[s != 0]
        assert np.all(s * gt.g(0, s, 1.0) > 0)
        with pytest.raises(ValueError):
            PowerGradientTerm.build(2.0, 4.0, -1.0, 1.0)


class TestProblemSpec:
    @pytest.mark.parametrize("kw", [dict(N=2), dict(R=-1.0), dict(q=2.0), dict(q=1.0),
                                    dict(lam=-0.1), dict(branch="up")])
    def test_validation(self, kw):
        base = dict(N=3, R=1.0, lam=0.1, q=1.5, nonlinearity=PurePower(1.0, 3.0))
        base.update(kw)
        with pytest.raises(ValueError):
            ProblemSpec(**base)

    def test_nonlinearity_checks(self):
        p = ProblemSpec(3, 1.0, 0.1, 1.5, PurePower(10.0, 4.0))
        chk = p.check_nonlinearity()
        assert chk["sign_ok"] and chk["origin_ok"]

    def test_seventh_requires_theta_above_four_when_asymmetric(self):
        p = ProblemSpec(3, 1.0, 0.1, 1.5, AsymmetricPower(1.0, 2.0, 3.5), branch="full")
        with pytest.raises(ValueError):
            p.validate_seventh()
        ProblemSpec(3, 1.0, 0.1, 1.5, AsymmetricPower(1.0, 2.0, 4.5)).validate_seventh()

    def test_with_helpers(self):
        p = ProblemSpec(3, 1.0, 0.1, 1.5, PurePower(1.0, 3.0))
        assert p.with_lambda(0.2).lam == 0.2
        assert p.with_branch("negative").branch == "negative"
        assert p.to_dict()["nonlinearity"]["family"] == "pure_power"
