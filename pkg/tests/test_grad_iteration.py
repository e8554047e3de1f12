import numpy as np
import pytest

from lmradial.grad_iteration import (ConditionsNotMet, IterOptions, default_omega0,
                                     frozen_problem, iterate, solve_frozen)
from lmradial.mesh import build_mesh
from lmradial.problem import PowerGradientTerm, ProblemSpec, PurePower
from lmradial.thresholds import compute_thresholds

M = 120


def small_problem(eta=0.5, lam=1.0, branch="positive"):
    gt = PowerGradientTerm.build(1.0, 2.5, eta, 1.0)
    return ProblemSpec(3, 1.0, lam, 1.5, PurePower(1.0, 2.5), gradient_term=gt, branch=branch)


@pytest.fixture(scope="module")
def mesh():
    return build_mesh(3, 1.0, M)


@pytest.fixture(scope="module")
def thr(mesh):
    return compute_thresholds(small_problem(), mesh).to_dict()


@pytest.fixture(scope="module")
def trace_pos(mesh, thr):
    return iterate(small_problem(), mesh, "global-min", thresholds=thr)


class TestFrozen:
    def test_frozen_problem_drops_gradient_term(self, mesh):
        fp = frozen_problem(small_problem(), mesh, default_omega0(mesh))
        assert fp.gradient_term is None

    def test_solve_frozen_requires_gradient_term(self, mesh):
        p = ProblemSpec(3, 1.0, 1.0, 1.5, PurePower(1.0, 2.5))
        with pytest.raises(ValueError):
            solve_frozen(p, mesh, default_omega0(mesh))

    def test_unknown_mode(self, mesh):
        with pytest.raises(ValueError):
            solve_frozen(small_problem(), mesh, default_omega0(mesh), mode="saddle")

    def test_default_start(self, mesh):
        assert np.all(default_omega0(mesh).v == -0.5)
        assert np.all(default_omega0(mesh, "negative").v == 0.5)


class TestIterate:
    def test_conditions_hold(self, thr):
        assert thr["lip_ok"]["ok"]
        assert thr["k_predicted"] < 1

    def test_contraction(self, trace_pos, thr):
        t = trace_pos
        assert t.converged
        assert t.k_hat <= thr["k_predicted"] + 0.05
        assert t.final_weak_residual <= 1e-3
        assert t.final.nontrivial
        assert t.floor_ok

    def test_increments_shrink(self, trace_pos):
        inc = trace_pos.increments
        assert inc[-1] < inc[0]

    def test_mirror(self, mesh, thr, trace_pos):
        neg = iterate(small_problem(branch="negative"), mesh, "global-min", thresholds=thr)
        assert np.isclose(neg.final.total, trace_pos.final.total, rtol=1e-6)
        assert np.allclose(neg.final.u, -trace_pos.final.u, atol=1e-6)

    def test_gradient_free_term_converges_at_once(self, mesh):
        p = small_problem(eta=0.0)
        t = compute_thresholds(p, mesh).to_dict()
        tr = iterate(p, mesh, "global-min", thresholds=t)
        # the frozen problem does not depend on omega: the second solve repeats the first
        assert tr.converged and len(tr.norms) == 2
        assert tr.increments[0] <= 1e-8

    def test_conditions_are_enforced(self, mesh, thr):
        with pytest.raises(ConditionsNotMet):
            iterate(small_problem(), mesh, thresholds=None)
        bad = dict(thr, lip_ok=dict(thr["lip_ok"], ok=False))
        with pytest.raises(ConditionsNotMet):
            iterate(small_problem(), mesh, thresholds=bad)

    def test_trace_serializes(self, trace_pos):
        d = trace_pos.to_dict()
        assert d["mode"] == "global-min" and d["steps"] == len(trace_pos.norms)
        assert d["final"]["accepted"] in (True, False)

    def test_max_n_stops(self, mesh, thr):
        tr = iterate(small_problem(), mesh, thresholds=thr, opts=IterOptions(max_n=2))
        assert len(tr.norms) == 2 and not tr.converged
