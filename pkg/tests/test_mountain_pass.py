import numpy as np
import pytest

from lmradial.energy import discretize
from lmradial.mesh import build_mesh
from lmradial.mountain_pass import (MPOptions, PathState, PositiveMax, build_low_energy_path,
                                    mountain_pass, reparametrize, straight_path, string_relax)
from lmradial.verify import distinct

from conftest import desk_problem


class TestPathTools:
    def test_straight_path_endpoints(self):
        a, b = np.zeros(5), np.ones(5)
        P = straight_path(a, b, 11)
        assert np.array_equal(P[0], a) and np.array_equal(P[-1], b)
        assert np.allclose(P[5], 0.5)

    def test_reparametrize_equalizes_arclength(self):
        m = build_mesh(3, 1.0, 20)
        de = discretize(desk_problem(), m)
        t = np.linspace(0, 1, 15) ** 3
        P = -t[:, None] * np.ones(20)
        Q = reparametrize(de, P)
        d = de.norm(np.diff(Q, axis=0))
        assert np.allclose(d, d.mean(), rtol=1e-12)
        assert np.array_equal(Q[0], P[0]) and np.array_equal(Q[-1], P[-1])

    def test_path_csv(self):
        m = build_mesh(3, 1.0, 4)
        st = PathState(np.zeros((3, 4)), np.zeros(3))
        lines = st.to_csv(m).splitlines()
        assert lines[0] == "k,arclength,energy,h_norm" and len(lines) == 4

    def test_string_maximum_never_increases(self, desk_solutions, mesh400):
        de = discretize(desk_problem(), mesh400)
        P = straight_path(np.zeros(400), desk_solutions["u+"].slopes.v, 17)
        _, hist = string_relax(de, P, MPOptions(nodes=17, max_sweeps=200))
        assert np.all(np.diff(hist) <= 1e-12 * np.abs(np.asarray(hist[:-1])))


class TestDeskMountainPass:
    @pytest.mark.parametrize("sg", ["+", "-"])
    def test_certificate(self, desk_solutions, desk_thresholds, sg):
        w = desk_solutions["w" + sg]
        assert w.accepted
        assert w.criticality_residual <= 1e-8
        assert w.total >= desk_thresholds["mp_floor"]
        assert w.extra["max_nonincreasing"]

    def test_energy_ordering(self, desk_solutions):
        s = desk_solutions
        for sg in "+-":
            assert s["w" + sg].total > 0 > s["v" + sg].total >= -1.0 > s["u" + sg].total

    def test_distinct_from_minima(self, desk_solutions):
        w = desk_solutions["w+"]
        assert distinct(w, desk_solutions["u+"]) and distinct(w, desk_solutions["v+"])

    def test_rejects_positive_endpoint(self, mesh400):
        with pytest.raises(ValueError):
            mountain_pass(desk_problem(), mesh400, endpoint_b=-0.3 * np.ones(400))


class TestSeventh:
    def test_low_energy_path_is_negative(self, desk_solutions, desk_thresholds, mesh400):
        de = discretize(desk_problem(branch="full"), mesh400)
        path = build_low_energy_path(de, desk_solutions["v+"].slopes, desk_solutions["v-"].slopes,
                                     desk_thresholds["rho_minus"])
        assert path.max_energy < 0
        assert np.allclose(path.nodes[0], desk_solutions["v+"].slopes.v)
        assert np.allclose(path.nodes[-1], desk_solutions["v-"].slopes.v)

    def test_fixed_radius_too_large_reports_positive_max(self, desk_solutions, mesh400):
        de = discretize(desk_problem(branch="full"), mesh400)
        with pytest.raises(PositiveMax):
            build_low_energy_path(de, desk_solutions["v+"].slopes, desk_solutions["v-"].slopes,
                                  0.1, eps2=0.1)
        with pytest.raises(ValueError):
            build_low_energy_path(de, desk_solutions["v+"].slopes, desk_solutions["v-"].slopes,
                                  0.1, eps2=0.3)

    def test_certificate(self, desk_solutions):
        c = desk_solutions["seventh"]
        assert c.accepted
        assert c.total < 0
        assert c.criticality_residual <= 1e-8
        assert all(c.extra["distinct_from"].values())
        # a sign-changing profile
        u = c.u[:-1]
        assert u.max() > 0 > u.min()

    def test_seventh_differs_from_all_one_signed(self, desk_solutions):
        c = desk_solutions["seventh"]
        for k in ("u+", "v+", "w+", "u-", "v-", "w-"):
            assert np.max(np.abs(c.u - desk_solutions[k].u)) > 1e-4
