"""Mountain-pass searches.

A path of slope fields with fixed endpoints is relaxed by a string method:
every interior node takes a proximal-gradient step (with its own
backtracked step size), then the nodes are redistributed to equal H-arc
length.  A redistributed node is kept only where its energy does not exceed
the previous path maximum, so the maximum never increases.  Once the highest node is close to
a critical point it is refined on its own by a climbing iteration that
reflects the gradient component along the lowest-curvature direction.  The
fixed points of that iteration are exactly the critical points.
"""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .energy import SUP_CLIP, DiscreteEnergy, discretize
from .mesh import RadialMesh, SlopeField, reconstruct_values
from .minimizers import minimize_in_ball, project_ball
from .problem import ProblemSpec
from .verify import CriticalPointCertificate, Tolerances, certify, distinct

__all__ = [
    "MPOptions",
    "PathState",
    "PathCollapse",
    "PositiveMax",
    "DegenerateToEndpoint",
    "straight_path",
    "reparametrize",
    "string_relax",
    "climb",
    "mountain_pass",
    "build_low_energy_path",
    "find_seventh",
    "SeventhSweep",
    "sweep_seventh",
    "bisect_lambda_star3",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MPOptions:
    """Controls for the string phase and the climbing refinement."""

    nodes: int = 33
    string_tau: float = 1e-3
    string_tau_max: float = 1e-2
    max_sweeps: int = 3000
    switch_residual: float = 1e-3
    stall_sweeps: int = 200
    climb_tau: Optional[float] = None
    climb_max_iter: int = 400000
    tangent_iters: int = 2
    tangent_warmup: int = 300
    check_every: int = 200
    tol: float = 1e-8

    def to_dict(self):
        return dict(self.__dict__)


class PathCollapse(RuntimeError):
    """The path maximum fell to the endpoint level without a critical point."""


class PositiveMax(RuntimeError):
    """The low-energy path has a point with nonnegative energy."""

    def __init__(self, message, t=None, value=None):
        super().__init__(message)
        self.t = t
        self.value = value


class DegenerateToEndpoint(RuntimeError):
    """The located critical point coincides with an endpoint or with 0."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


@dataclass
class PathState:
    """Discrete path ``gamma(t_k)``; endpoints never move."""

    nodes: np.ndarray
    energies: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def max_index(self) -> int:
        return int(np.argmax(self.energies))

    @property
    def max_energy(self) -> float:
        return float(np.max(self.energies))

    def to_csv(self, mesh: RadialMesh) -> str:
        w = mesh.cell_weights
        d = np.sqrt(np.sum(w * np.diff(self.nodes, axis=0) ** 2, axis=1))
        s = np.concatenate([[0.0], np.cumsum(d)])
        nrm = np.sqrt(np.sum(w * self.nodes**2, axis=1))
        buf = io.StringIO()
        buf.write("k,arclength,energy,h_norm\n")
        for k in range(len(self.nodes)):
            buf.write(f"{k},{s[k]:.17g},{self.energies[k]:.17g},{nrm[k]:.17g}\n")
        return buf.getvalue()


def straight_path(a, b, n: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n)[:, None]
    return (1 - t) * a + t * b


def reparametrize(de: DiscreteEnergy, P: np.ndarray) -> np.ndarray:
    """Redistribute nodes to equal H-arc length by linear interpolation."""
    d = de.norm(np.diff(P, axis=0))
    s = np.concatenate([[0.0], np.cumsum(d)])
    if s[-1] <= 0:
        return P.copy()
    s /= s[-1]
    t = np.linspace(0.0, 1.0, len(P))
    idx = np.clip(np.searchsorted(s, t, side="right") - 1, 0, len(P) - 2)
    lam = ((t - s[idx]) / np.maximum(s[idx + 1] - s[idx], 1e-300))[:, None]
    out = P[idx] * (1 - lam) + P[idx + 1] * lam
    out[0], out[-1] = P[0], P[-1]
    return out


def string_relax(de: DiscreteEnergy, P: np.ndarray, opts: MPOptions = MPOptions(),
                 ball: Optional[float] = None) -> tuple[PathState, list]:
    """String phase; returns the relaxed path and the history of path maxima."""
    P = np.array(P, dtype=float)
    E = de.value(P)
    n = len(P)
    tau = np.full(n, opts.string_tau)
    hist = [float(E.max())]
    best = hist[0]
    since = 0
    slack = 8 * np.finfo(float).eps
    for sweep in range(opts.max_sweeps):
        G = de.grad(P)
        inner = np.arange(1, n - 1)
        new = P.copy()
        newE = E.copy()
        todo = inner
        for _ in range(40):
            cand = project_ball(de, de.prox(P[todo] - tau[todo, None] * G[todo], tau[todo, None]), ball)
            ce = de.value(cand)
            ok = ce <= E[todo] + slack * np.abs(E[todo])
            new[todo[ok]] = cand[ok]
            newE[todo[ok]] = ce[ok]
            tau[todo[~ok]] *= 0.5
            todo = todo[~ok]
            if todo.size == 0:
                break
        tau[inner] = np.minimum(tau[inner] * 1.25, opts.string_tau_max)
        # redistributed nodes are kept only where they stay below the previous
        # maximum, which keeps the path maximum non-increasing
        cap = hist[-1]
        rp = project_ball(de, reparametrize(de, new), ball)
        rE = de.value(rp)
        keep = rE <= cap
        keep[0] = keep[-1] = False
        P = np.where(keep[:, None], rp, new)
        E = np.where(keep, rE, newE)
        hist.append(float(E.max()))
        if hist[-1] < best - 1e-12 * abs(best):
            best = hist[-1]
            since = 0
        else:
            since += 1
        if sweep % 20 == 0 or since > opts.stall_sweeps:
            k = int(np.argmax(E[1:-1])) + 1
            if float(de.residual(P[k])) <= opts.switch_residual or since > opts.stall_sweeps:
                break
    return PathState(P, E, {"sweeps": len(hist) - 1}), hist


def _hessian_products(de: DiscreteEnergy):
    def hv(x, d, full=True):
        s = 1e-6 * max(float(de.norm(x)), 1e-8)
        f = de.full_grad if full else de.grad
        return (f(x + s * d) - f(x - s * d)) / (2 * s)
    return hv


def _spectral_bound(de, hv, x, full, iters=30):
    d = np.ones_like(x)
    d /= de.norm(d)
    L = 1.0
    for _ in range(iters):
        y = hv(x, d, full)
        ny = float(de.norm(y))
        if ny == 0 or not np.isfinite(ny):
            break
        L = ny
        d = y / ny
    return L


def climb(de: DiscreteEnergy, x0: np.ndarray, t0: np.ndarray, opts: MPOptions = MPOptions(),
          ball: Optional[float] = None) -> tuple[np.ndarray, float, int, dict]:
    """Single-point saddle refinement.

    Iterates ``x <- prox(x - tau (grad F - 2 <G, t>_H t), tau)`` where ``G`` is
    the full gradient and ``t`` tracks the lowest-curvature direction by
    Rayleigh-quotient descent on finite-difference Hessian products.
    """
    hv = _hessian_products(de)
    x = np.array(x0, dtype=float)
    t = np.array(t0, dtype=float)
    t /= de.norm(t)
    L = _spectral_bound(de, hv, x, True)
    LF = _spectral_bound(de, hv, x, False)
    eta = 0.5 / L
    tau = opts.climb_tau or 1.0 / max(LF, 1e-12)

    def rotate(x, t, k):
        rq = 0.0
        for _ in range(k):
            Ht = hv(x, t)
            rq = float(de.inner(t, Ht))
            t = t - eta * (Ht - rq * t)
            t /= de.norm(t)
        return t, rq

    t, rq = rotate(x, t, opts.tangent_warmup)
    res = float(de.residual(x))
    best = (res, x.copy(), t.copy())
    it = 0
    restarts = 0
    for it in range(1, opts.climb_max_iter + 1):
        t, rq = rotate(x, t, opts.tangent_iters)
        g = de.full_grad(x)
        d = de.grad(x) - 2.0 * de.inner(g, t) * t
        x = project_ball(de, de.prox(x - tau * d, tau), ball)
        if it % opts.check_every == 0:
            res = float(de.residual(x))
            if not np.isfinite(res) or res > 1e3 * best[0]:
                res, x, t = best[0], best[1].copy(), best[2].copy()
                tau *= 0.5
                restarts += 1
                if restarts > 20:
                    break
                continue
            if res < best[0]:
                best = (res, x.copy(), t.copy())
            if res <= opts.tol:
                break
    res, x, t = best
    return x, res, it, {"tau": tau, "eta": eta, "curvature": rq, "restarts": restarts,
                        "tangent": t}


def _crossing_samples(de, P, radius, count=64):
    # energies where the initial straight path crosses the sphere ||v|| = radius
    a, b = P[0], P[-1]
    ts = np.linspace(0.0, 1.0, 4097)
    pts = (1 - ts)[:, None] * a + ts[:, None] * b
    nrm = de.norm(pts)
    out = []
    for k in np.flatnonzero(np.diff(np.sign(nrm - radius)) != 0)[:count]:
        lo, hi = ts[k], ts[k + 1]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            val = de.norm((1 - mid) * a + mid * b) - radius
            if np.sign(val) == np.sign(nrm[k] - radius):
                lo = mid
            else:
                hi = mid
        x = (1 - lo) * a + lo * b
        out.append(float(de.value(x)))
    return out


def _tangent(P, k):
    return P[min(k + 1, len(P) - 1)] - P[max(k - 1, 0)]


def mountain_pass(p: ProblemSpec, mesh: RadialMesh, branch: Optional[str] = None,
                  endpoint_a=None, endpoint_b=None, thresholds: Optional[dict] = None,
                  opts: MPOptions = MPOptions(), tol: Tolerances = Tolerances(),
                  de: Optional[DiscreteEnergy] = None) -> CriticalPointCertificate:
    """Mountain-pass point between ``endpoint_a`` (default 0) and ``endpoint_b``.

    ``endpoint_b`` defaults to the global minimizer of the branch.
    """
    branch = branch or p.branch
    p = p.with_branch(branch)
    de = de or discretize(p, mesh)
    M = mesh.M
    a = np.zeros(M) if endpoint_a is None else np.asarray(getattr(endpoint_a, "v", endpoint_a), float)
    if endpoint_b is None:
        from .minimizers import minimize
        endpoint_b = minimize(p, mesh, branch).slopes
    b = np.asarray(getattr(endpoint_b, "v", endpoint_b), float)
    Ea, Eb = float(de.value(a)), float(de.value(b))
    if Ea > 0 or Eb > 0:
        raise ValueError("mountain-pass endpoints must have nonpositive energy")
    info = {"endpoint_energies": [Ea, Eb]}
    if thresholds is not None:
        rp = thresholds["rho_plus"]
        if not float(de.norm(b)) > rp:
            raise ValueError("far endpoint must lie outside the rho_plus sphere")
        info["crossing_energies"] = _crossing_samples(de, np.array([a, b]), thresholds["rho_minus"])
        info["mp_floor"] = thresholds["mp_floor"]
    P0 = straight_path(a, b, opts.nodes)
    state, hist = string_relax(de, P0, opts)
    floor = max(Ea, Eb) + opts.tol
    if state.max_energy < floor:
        raise PathCollapse("path maximum dropped to the endpoint level")
    k = state.max_index
    x, res, its, cinfo = climb(de, state.nodes[k], _tangent(state.nodes, k), opts)
    name = f"w_{'+' if branch == 'positive' else '-' if branch == 'negative' else 'full'}"
    cert = certify(SlopeField(mesh, x), p, "mountain-pass", thresholds, tol, de=de, name=name)
    cert.iterations = state.extra["sweeps"] + its
    cert.converged = res <= opts.tol
    info.update({"sweeps": state.extra["sweeps"], "climb_iterations": its,
                 "path_max_history_head": hist[:5], "path_max_final": hist[-1],
                 "max_nonincreasing": bool(np.all(np.diff(hist) <= 1e-12 * np.abs(hist[:-1]) + 1e-300)),
                 "climb_tau": cinfo["tau"], "curvature": cinfo["curvature"]})
    cert.extra.update(info)
    return cert


# ------------------------------------------------------- seventh solution

def _fallback_direction(mesh: RadialMesh) -> np.ndarray:
    # sign-changing slope pattern: the profile has an interior zero
    return np.sin(1.5 * np.pi * mesh.midpoints / mesh.R)


def build_low_energy_path(de: DiscreteEnergy, v_plus, v_minus, rho_minus: float,
                          eps2: Optional[float] = None, n_ray: int = 8, n_arc: int = 17,
                          max_halvings: int = 40) -> PathState:
    """Path ``v_+ -> eps2 v_+/|v_+| -> arc -> eps2 v_-/|v_-| -> v_-`` with negative maximum.

    The arc lies in the plane spanned by ``v_+`` and ``v_-`` (any plane
    containing ``v_+`` when they are proportional).  ``eps2`` is halved
    from ``rho_minus / 2`` until the arc maximum is negative.
    """
    vp = np.asarray(getattr(v_plus, "v", v_plus), float)
    vm = np.asarray(getattr(v_minus, "v", v_minus), float)
    e1 = vp / de.norm(vp)
    hm = vm / de.norm(vm)
    c = float(de.inner(hm, e1))
    resid = hm - c * e1
    degenerate = float(de.norm(resid)) < 1e-6
    if degenerate:
        e2 = _fallback_direction(de.mesh)
        e2 = e2 - de.inner(e2, e1) * e1
    else:
        e2 = resid
    e2 = e2 / de.norm(e2)
    phi = math.pi if degenerate else math.atan2(float(de.inner(hm, e2)), c)
    angles = np.linspace(0.0, phi, n_arc)

    def arc(eps):
        return eps * (np.cos(angles)[:, None] * e1 + np.sin(angles)[:, None] * e2)

    chosen = rho_minus / 2 if eps2 is None else float(eps2)
    tries = 0
    while True:
        A = arc(chosen)
        if eps2 is not None or float(de.value(A).max()) < 0:
            break
        chosen *= 0.5
        tries += 1
        if tries > max_halvings:
            raise PositiveMax("no arc radius gives a negative maximum")
    A = arc(chosen)
    if degenerate:
        A[-1] = chosen * hm
    t = np.linspace(0.0, 1.0, n_ray)[:-1, None]
    seg1 = (1 - t) * vp + t * A[0]
    t3 = np.linspace(0.0, 1.0, n_ray)[1:, None]
    seg3 = (1 - t3) * A[-1] + t3 * vm
    nodes = np.concatenate([seg1, A, seg3])
    if np.max(np.abs(nodes)) > 1.0:
        raise ValueError("arc radius too large: the path leaves |v| <= 1")
    E = de.value(nodes)
    k = int(np.argmax(E))
    if E[k] >= 0:
        raise PositiveMax(f"path energy {E[k]:.3e} >= 0 at node {k}", t=k / (len(E) - 1),
                          value=float(E[k]))
    return PathState(nodes, E, {"eps2": chosen, "halvings": tries, "degenerate_plane": degenerate,
                                "angle": phi})


def find_seventh(p: ProblemSpec, mesh: RadialMesh, v_plus, v_minus, radius: float,
                 rho_minus: float, thresholds: Optional[dict] = None,
                 opts: MPOptions = MPOptions(string_tau=1e-2), tol: Tolerances = Tolerances(),
                 eps2: Optional[float] = None) -> CriticalPointCertificate:
    """Negative-level mountain pass between the two small local minima.

    The path is confined to the ball ``||v|| <= radius`` by rescaling.
    """
    p = p.with_branch("full")
    p.validate_seventh()
    de = discretize(p, mesh)
    vp = np.asarray(getattr(v_plus, "v", v_plus), float)
    vm = np.asarray(getattr(v_minus, "v", v_minus), float)
    end_res = [float(de.residual(vp)), float(de.residual(vm))]
    path = build_low_energy_path(de, vp, vm, rho_minus, eps2=eps2)
    P = project_ball(de, path.nodes, radius)
    state, hist = string_relax(de, P, opts, ball=radius)
    k = state.max_index
    x, res, its, cinfo = climb(de, state.nodes[k], _tangent(state.nodes, k), opts, ball=radius)
    cert = certify(SlopeField(mesh, x), p, "seventh", thresholds, tol, de=de, name="seventh")
    cert.iterations = state.extra["sweeps"] + its
    cert.converged = res <= opts.tol
    cert.extra.update({
        "eps2": path.extra["eps2"], "eps2_halvings": path.extra["halvings"],
        "degenerate_plane": path.extra["degenerate_plane"],
        "initial_path_max": path.max_energy, "path_max_final": hist[-1],
        "max_nonincreasing": bool(np.all(np.diff(hist) <= 1e-12 * np.abs(hist[:-1]) + 1e-300)),
        "sweeps": state.extra["sweeps"], "climb_iterations": its,
        "endpoint_full_residuals": end_res, "ball_radius": radius,
        "h_norm": float(de.norm(x)),
    })
    ends = []
    for arr, nm in ((vp, "v_+"), (vm, "v_-"), (np.zeros(mesh.M), "0")):
        other = certify(SlopeField(mesh, np.clip(arr, -1, 1)), p, "none", de=de, name=nm)
        ends.append((nm, distinct(cert, other, tol)))
    cert.extra["distinct_from"] = {nm: ok for nm, ok in ends}
    if not all(ok for _, ok in ends):
        raise DegenerateToEndpoint("located point coincides with an endpoint or 0", cert)
    return cert


@dataclass
class SeventhSweep:
    lambdas: list
    results: list
    lambda_star3: Optional[float]

    def to_dict(self):
        return {"lambdas": self.lambdas, "results": self.results,
                "lambda_star3_empirical": self.lambda_star3}


def _seventh_at(p, mesh, lam, thr_fn, opts, tol):
    q = p.with_lambda(lam)
    thr = thr_fn(q)
    try:
        vp = minimize_in_ball(q, mesh, thr["rho_plus"], "positive", thresholds=thr, tol=tol)
        vm = minimize_in_ball(q, mesh, thr["rho_plus"], "negative", thresholds=thr, tol=tol)
        cert = find_seventh(q, mesh, vp.slopes, vm.slopes, thr["rho_plus"], thr["rho_minus"],
                            thr, opts, tol)
        ok = cert.accepted and all(cert.extra["distinct_from"].values())
        return ok, cert, None
    except Exception as exc:  # failures are data here
        return False, getattr(exc, "certificate", None), f"{type(exc).__name__}: {exc}"


def sweep_seventh(p: ProblemSpec, mesh: RadialMesh, lambdas, thr_fn,
                  opts: MPOptions = MPOptions(string_tau=1e-2),
                  tol: Tolerances = Tolerances()) -> SeventhSweep:
    """Run the seventh-solution search on a list of lambdas.

    ``thr_fn(problem) -> dict`` supplies thresholds.  The empirical
    ``lambda_***`` is the largest lambda that certified.
    """
    results = []
    best = None
    for lam in lambdas:
        ok, cert, err = _seventh_at(p, mesh, lam, thr_fn, opts, tol)
        results.append({"lambda": float(lam), "ok": ok, "error": err,
                        "certificate": cert.summary() if cert is not None else None})
        if ok:
            best = lam if best is None else max(best, lam)
    return SeventhSweep([float(x) for x in lambdas], results, best)


def bisect_lambda_star3(p: ProblemSpec, mesh: RadialMesh, lo: float, hi: float, thr_fn,
                        iters: int = 4, opts: MPOptions = MPOptions(string_tau=1e-2),
                        tol: Tolerances = Tolerances()) -> SeventhSweep:
    """Bisect for the largest lambda in ``[lo, hi]`` where the search certifies."""
    lams, results = [], []
    ok, cert, err = _seventh_at(p, mesh, lo, thr_fn, opts, tol)
    lams.append(lo)
    results.append({"lambda": lo, "ok": ok, "error": err})
    if not ok:
        return SeventhSweep(lams, results, None)
    ok_hi, _, err_hi = _seventh_at(p, mesh, hi, thr_fn, opts, tol)
    lams.append(hi)
    results.append({"lambda": hi, "ok": ok_hi, "error": err_hi})
    if ok_hi:
        return SeventhSweep(lams, results, hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        ok, _, err = _seventh_at(p, mesh, mid, thr_fn, opts, tol)
        lams.append(mid)
        results.append({"lambda": mid, "ok": ok, "error": err})
        if ok:
            lo = mid
        else:
            hi = mid
    return SeventhSweep(lams, results, lo)
