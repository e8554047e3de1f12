"""Proximal-gradient descent for global and local minima, and sign repair."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .energy import SUP_CLIP, DiscreteEnergy, discretize
from .mesh import RadialMesh, SlopeField, reconstruct_values
from .problem import ProblemSpec
from .verify import CriticalPointCertificate, Tolerances, certify

__all__ = [
    "SolveOptions",
    "DescentResult",
    "NonConvergence",
    "BallViolation",
    "NotApplicable",
    "descend",
    "project_ball",
    "start_points",
    "minimize",
    "minimize_in_ball",
    "RepairResult",
    "repair_sign",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolveOptions:
    """Descent controls.

    ``step`` is "backtracking" (default) or "fixed"; with "fixed" the step
    ``tau0`` is used throughout and energy decrease is not enforced.
    """

    step: str = "backtracking"
    tau0: float = 1.0
    tau_max: float = 1e3
    tau_min: float = 1e-14
    grow: float = 1.25
    max_iter: int = 50000
    tol: float = 1e-8
    check_every: int = 10
    random_starts: int = 2
    ball_radius: Optional[float] = None
    seed: int = 0
    armijo: float = 1e-4

    def to_dict(self):
        return dict(self.__dict__)


class NonConvergence(RuntimeError):
    """Raised when the descent stops before reaching the tolerance."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class BallViolation(RuntimeError):
    """Raised when a ball-constrained minimizer sits on the sphere."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class NotApplicable(ValueError):
    """Sign repair met a profile outside its construction."""


@dataclass
class DescentResult:
    v: np.ndarray
    energy: float
    residual: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def project_ball(de: DiscreteEnergy, v, radius):
    """Radial rescaling onto ``{||v||_H <= radius}``; shrinking stays in K."""
    if radius is None:
        return v
    n = de.norm(v)
    if np.ndim(n) == 0:
        return v * (radius / n) if n > radius else v
    scale = np.where(n > radius, radius / np.maximum(n, 1e-300), 1.0)
    return v * scale[..., None]


def descend(de: DiscreteEnergy, v0, opts: SolveOptions = SolveOptions(),
            ball: Optional[float] = None, record: bool = False) -> DescentResult:
    """Proximal-gradient descent in the H metric.

    Each trial step ``prox(v - tau grad F, tau)`` (followed by the ball
    rescaling when requested) is accepted if the energy drops by at least
    ``armijo ||step||^2 / (2 tau)`` up to rounding; otherwise ``tau`` is
    halved.  Accepted steps enlarge ``tau`` by ``grow``.
    """
    v = project_ball(de, np.clip(np.asarray(v0, dtype=float), -SUP_CLIP, SUP_CLIP), ball)
    tau = opts.tau0
    f = float(de.value(v))
    g = de.grad(v)
    hist = []
    res = math.inf
    it = 0
    for it in range(1, opts.max_iter + 1):
        while True:
            vn = project_ball(de, de.prox(v - tau * g, tau), ball)
            fn = float(de.value(vn))
            if opts.step == "fixed":
                break
            d = vn - v
            dd = float(de.inner(d, d))
            slack = 4 * np.finfo(float).eps * max(abs(f), 1e-300)
            if fn <= f - opts.armijo * dd / (2 * tau) + slack:
                break
            tau *= 0.5
            if tau < opts.tau_min:
                break
        if tau < opts.tau_min:
            res = float(de.residual(v))
            break
        v, f = vn, fn
        g = de.grad(v)
        if record:
            hist.append(f)
        if it % opts.check_every == 0:
            res = float(de.residual(v))
            if res <= opts.tol:
                return DescentResult(v, f, res, it, True, hist)
        if opts.step != "fixed":
            tau = min(tau * opts.grow, opts.tau_max)
    res = float(de.residual(v))
    return DescentResult(v, f, res, it, res <= opts.tol, hist)


def start_points(mesh: RadialMesh, branch: str, opts: SolveOptions, small: bool = False):
    """Deterministic multi-start set.

    Small perturbations of 0, scaled copies of the extremal profile
    ``R - r`` (slopes -1) and random slope fields.
    """
    M = mesh.M
    rng = np.random.default_rng(opts.seed)
    signs = {"positive": [-1.0], "negative": [1.0], "full": [-1.0, 1.0]}[branch]
    pts = []
    for s in signs:
        pts.append(s * 1e-3 * np.ones(M))
        if not small:
            for t in (0.25, 0.5, 0.75, 1.0):
                pts.append(s * t * SUP_CLIP * np.ones(M))
    for _ in range(opts.random_starts):
        x = rng.uniform(0.0, 1.0, M)
        if branch == "positive":
            x = -x
        elif branch == "full":
            x = rng.uniform(-1.0, 1.0, M)
        if small:
            x *= 1e-2
        pts.append(x)
    return pts


def minimize(p: ProblemSpec, mesh: RadialMesh, branch: Optional[str] = None,
             opts: SolveOptions = SolveOptions(), thresholds: Optional[dict] = None,
             tol: Tolerances = Tolerances(), raise_on_failure: bool = True,
             de: Optional[DiscreteEnergy] = None) -> CriticalPointCertificate:
    """Global minimum of the branch functional by multi-start descent."""
    branch = branch or p.branch
    p = p.with_branch(branch)
    de = de or discretize(p, mesh)
    nl = p.nonlinearity
    if nl is not None and p.lam > 0:
        from .thresholds import check_superlinearity
        if not check_superlinearity(p.N, nl.theta, nl.a1, nl.a2, p.R).ok:
            log.warning("superlinearity condition fails; the minimum may stay above -R^N")
    best = None
    for x0 in start_points(mesh, branch, opts):
        r = descend(de, x0, opts, ball=opts.ball_radius)
        if best is None or r.energy < best.energy:
            best = r
    cert = certify(SlopeField(mesh, best.v), p, "global-min", thresholds, tol, de=de,
                   name=f"u_{'+' if branch == 'positive' else '-' if branch == 'negative' else 'full'}")
    cert.iterations, cert.converged = best.iterations, best.converged
    if not best.converged and raise_on_failure:
        raise NonConvergence(f"descent stopped at residual {best.residual:.3e}", cert)
    return cert


def minimize_in_ball(p: ProblemSpec, mesh: RadialMesh, radius: float,
                     branch: Optional[str] = None, opts: SolveOptions = SolveOptions(),
                     thresholds: Optional[dict] = None, tol: Tolerances = Tolerances(),
                     raise_on_failure: bool = True,
                     de: Optional[DiscreteEnergy] = None) -> CriticalPointCertificate:
    """Minimum over ``{||v||_H <= radius}`` (the local minimum near 0)."""
    branch = branch or p.branch
    p = p.with_branch(branch)
    de = de or discretize(p, mesh)
    best = None
    for x0 in start_points(mesh, branch, opts, small=True):
        r = descend(de, x0, opts, ball=radius)
        if best is None or r.energy < best.energy:
            best = r
    cert = certify(SlopeField(mesh, best.v), p, "local-min", thresholds, tol, de=de,
                   name=f"v_{'+' if branch == 'positive' else '-' if branch == 'negative' else 'full'}")
    cert.iterations, cert.converged = best.iterations, best.converged
    nrm = float(de.norm(best.v))
    cert.extra["ball_radius"] = radius
    cert.extra["h_norm"] = nrm
    if not best.converged and raise_on_failure:
        if nrm >= radius * (1 - 1e-9):
            raise BallViolation(f"minimizer lies on the sphere of radius {radius:.4g}", cert)
        raise NonConvergence(f"descent stopped at residual {best.residual:.3e}", cert)
    return cert


# -------------------------------------------------------------- sign repair

@dataclass
class RepairResult:
    slopes: SlopeField
    energy_before: float
    energy_after: float
    norm_before: float
    norm_after: float
    steps: list
    changed: bool

    @property
    def energy_delta(self) -> float:
        return self.energy_after - self.energy_before


def repair_sign(v: SlopeField, p: ProblemSpec, max_steps: int = 1000) -> RepairResult:
    """Flatten-and-reflect surgery that removes negative dips of a profile.

    For each dip ``(r2, r3)`` after the leading positive run, with minimum
    ``-w1`` at ``rbar``: the profile is set to ``w1`` between the last point
    above ``w1`` and ``rbar`` and reflected to ``-u`` on ``(rbar, r3)``.
    On the mesh this never increases any cell's slope magnitude, so both the
    H-norm and the area term cannot grow.  The energy change (full
    functional) is reported together with the lower bound
    ``0.5 * sum w (v_old^2 - v_new^2) - sum omega |F(-u) - F(u)|`` over the dip.
    """
    mesh = v.mesh
    de = discretize(p.with_branch("full"), mesh)
    u = reconstruct_values(v.v, mesh.h)
    if u[0] <= 0:
        raise NotApplicable("profile must be positive at the origin")
    e0 = float(de.value(v.v))
    n0 = float(de.norm(v.v))
    steps = []
    cur = u.copy()
    r = mesh.nodes
    nl = p.nonlinearity
    M = mesh.M
    for _ in range(max_steps):
        neg = np.flatnonzero(cur[:-1] < 0)
        if neg.size == 0:
            break
        i2 = int(neg[0])
        i3 = i2
        while i3 < M and cur[i3] < 0:
            i3 += 1
        dip = np.arange(i2, i3)
        ib = int(dip[np.argmin(cur[dip])])
        w1 = -float(cur[ib])
        above = np.flatnonzero(cur[:i2] > w1)
        if above.size == 0:
            raise NotApplicable("no point above the dip depth before the dip")
        it = int(above[-1])
        # differencing a reconstructed profile can overshoot |v| = 1 by rounding
        old_slopes = np.clip(np.diff(cur) / mesh.h, -1.0, 1.0)
        new = cur.copy()
        new[it + 1: ib + 1] = w1
        new[ib + 1: i3] = -cur[ib + 1: i3]
        new_slopes = np.clip(np.diff(new) / mesh.h, -1.0, 1.0)
        drop = 0.5 * float(np.sum(mesh.cell_weights * (old_slopes**2 - new_slopes**2)))
        asym = float(np.sum(mesh.node_weights[dip] * np.abs(nl.F(r[dip], -cur[dip]) - nl.F(r[dip], cur[dip]))))
        e_before = float(de.value(old_slopes))
        e_after = float(de.value(new_slopes))
        steps.append({"tau_index": it, "rbar_index": ib, "r2_index": i2, "r3_index": i3,
                      "depth": w1, "delta": e_after - e_before, "psi_drop_bound": drop,
                      "asymmetry": asym, "bound": drop - asym})
        cur = new
    else:
        raise NotApplicable("repair did not terminate")
    if not steps:
        return RepairResult(v, e0, e0, n0, n0, steps, False)
    out = np.clip(np.diff(cur) / mesh.h, -1.0, 1.0)
    e1 = float(de.value(out))
    return RepairResult(SlopeField(mesh, out), e0, e1, n0, float(de.norm(out)), steps, True)
