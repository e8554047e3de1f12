import numpy as np
import pytest

from lmradial.mesh import build_mesh
from lmradial.minimizers import minimize, minimize_in_ball
from lmradial.mountain_pass import MPOptions, find_seventh, mountain_pass
from lmradial.problem import ProblemSpec, PurePower
from lmradial.thresholds import compute_thresholds

DESK_LAMBDA = 0.47


def desk_problem(lam=DESK_LAMBDA, branch="positive"):
    return ProblemSpec(3, 1.0, lam, 1.5, PurePower(1120.0, 5.0), branch=branch)


@pytest.fixture(scope="session")
def mesh400():
    return build_mesh(3, 1.0, 400)


@pytest.fixture(scope="session")
def desk():
    return desk_problem()


@pytest.fixture(scope="session")
def desk_thresholds(desk, mesh400):
    return compute_thresholds(desk, mesh400).to_dict()


@pytest.fixture(scope="session")
def desk_solutions(desk, mesh400, desk_thresholds):
    """All seven certificates of the desk instance, computed once."""
    thr = desk_thresholds
    out = {}
    for br, sg in (("positive", "+"), ("negative", "-")):
        out["u" + sg] = minimize(desk, mesh400, br, thresholds=thr)
        out["v" + sg] = minimize_in_ball(desk, mesh400, thr["rho_plus"], br, thresholds=thr)
        out["w" + sg] = mountain_pass(desk, mesh400, br, endpoint_b=out["u" + sg].slopes,
                                      thresholds=thr)
    out["seventh"] = find_seventh(desk, mesh400, out["v+"].slopes, out["v-"].slopes,
                                  thr["rho_plus"], thr["rho_minus"], thr,
                                  MPOptions(string_tau=1e-2))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
