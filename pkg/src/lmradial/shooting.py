"""Shooting oracle for radial solutions.

The radial equation is integrated from the centre as a first-order system
in the profile ``u`` and the flux ``h = r^(N-1) u'/sqrt(1 - u'^2)``:

    u' = phi_inv(h / r^(N-1)),    h' = -r^(N-1) (lam b |u|^(q-2) u + f(r, u)),

with ``phi_inv(z) = z / sqrt(1 + z^2)``, so ``|u'| < 1`` holds without any
clamping.  Zeros of the terminal map ``T(s) = u(R; s)`` are radial solutions.
"""
from __future__ import annotations

import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .mesh import RadialMesh
from .problem import ProblemSpec, truncate_branch

__all__ = [
    "StepFailure",
    "ShootingRecord",
    "ShootingRoot",
    "ScanResult",
    "default_grid",
    "terminal_value",
    "shoot",
    "scan_and_count",
]

log = logging.getLogger(__name__)

RTOL = 1e-10
ATOL = 1e-12
START = 1e-6


class StepFailure(RuntimeError):
    """The integrator could not reach the boundary."""


@dataclass
class ShootingRecord:
    """One trajectory ``u(0) = s``, ``u'(0) = 0``."""

    s: float
    terminal: float
    r: np.ndarray
    u: np.ndarray
    h: np.ndarray
    reached_R: bool
    exceeded: bool
    touched_zero: bool
    nfev: int
    sol: object = field(default=None, repr=False)
    N: int = 3

    @property
    def du(self) -> np.ndarray:
        z = self.h / np.maximum(self.r, 1e-300) ** (self.N - 1)
        return z / np.sqrt(1.0 + z * z)

    def sample(self, r) -> np.ndarray:
        """Profile values at the radii ``r`` (dense output, series near 0)."""
        if self.sol is None:
            raise ValueError("record was computed without dense output")
        r = np.asarray(r, dtype=float)
        r0 = self.r[0]
        out = np.empty_like(r)
        near = r < r0
        # quadratic startup series below the first integration point
        out[near] = self.s - (self.s - self.u[0]) * (r[near] / r0) ** 2
        far = ~near
        if not far.any():
            return out
        rr = np.minimum(r[far], self.r[-1])
        vals = self.sol(rr)[0]
        if self.touched_zero:
            # continue linearly past the stopping radius
            slope = self.du[-1]
            vals = np.where(r[far] > self.r[-1], self.u[-1] + slope * (r[far] - self.r[-1]), vals)
        out[far] = vals
        return out

    def flux_bound(self, p: ProblemSpec) -> tuple[float, float]:
        """Return ``(max |h|/r^N, C/N)`` with ``C`` the largest right side seen."""
        g = _source(p, _branch_of(self.s, p))
        C = max(abs(g(r, u)) for r, u in zip(self.r, self.u))
        C = max(C, abs(g(0.0, self.s)))
        ratio = float(np.max(np.abs(self.h) / self.r ** p.N))
        return ratio, C / p.N


@dataclass
class ShootingRoot:
    s: float
    T: float
    u_mesh: np.ndarray
    R: float
    record: ShootingRecord = field(repr=False)

    def to_dict(self):
        return {"s": self.s, "T": self.T, "sup": float(np.max(np.abs(self.u_mesh)))}


@dataclass
class ScanResult:
    branch: str
    s: np.ndarray
    T: np.ndarray
    touched: np.ndarray
    failed: np.ndarray
    roots: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("s,T,touched_zero,step_failure\n")
        for s, t, a, b in zip(self.s, self.T, self.touched, self.failed):
            buf.write(f"{s:.17g},{t:.17g},{int(a)},{int(b)}\n")
        return buf.getvalue()

    def to_dict(self):
        return {"branch": self.branch, "grid_points": int(len(self.s)),
                "grid_min": float(np.min(np.abs(self.s))), "grid_max": float(np.max(np.abs(self.s))),
                "touched_zero": int(np.sum(self.touched)), "step_failures": int(np.sum(self.failed)),
                "exclusion_policy": "trajectories reaching u = 0 before R stop there and are "
                                    "extended linearly; they enter brackets only through a sign change",
                "roots": [r.to_dict() for r in self.roots]}


def _branch_of(s, p):
    if p.branch == "full":
        return "full"
    return "negative" if s < 0 else "positive"


def _source(p: ProblemSpec, branch: str):
    """Scalar right side ``lam b |u|^(q-2) u + f_branch(r, u)``."""
    if p.gradient_term is not None:
        raise ValueError("the shooting oracle needs a gradient-free problem")
    lam, q = p.lam, p.q
    b = p.weight_b
    nl = p.nonlinearity
    ftr = truncate_branch(nl, branch, p.R) if nl is not None else None

    def g(r, u):
        val = 0.0
        if (branch == "positive" and u > 0) or (branch == "negative" and u < 0) or \
                (branch == "full" and u != 0):
            val = lam * float(b(r)) * math.copysign(abs(u) ** (q - 1), u)
        if ftr is not None:
            val += float(ftr(r, u))
        return val

    return g


def shoot(p: ProblemSpec, s: float, dense: bool = False, rtol: float = RTOL,
          atol: float = ATOL) -> ShootingRecord:
    """Integrate the radial problem from ``u(0) = s`` to ``r = R``.

    The first point ``r0 = 1e-6 R`` is reached with the series
    ``u' ~ -g(0, s) r / N``.  A trajectory that reaches ``u = 0`` before
    ``R`` is stopped there; its terminal value is extended linearly with the
    last slope.
    """
    N, R = p.N, p.R
    s = float(s)
    branch = _branch_of(s, p)
    if branch == "positive" and not 0 <= s <= R:
        raise ValueError("positive-branch heights must lie in [0, R]")
    if s == 0.0:
        r = np.array([0.0, R])
        z = np.zeros(2)
        return ShootingRecord(0.0, 0.0, r, z, z.copy(), True, False, False, 0, None, N)
    g = _source(p, branch)
    g0 = g(0.0, s)
    r0 = START * R
    y0 = [s - g0 * r0**2 / (2 * N), -g0 * r0**N / N]

    def rhs(r, y):
        z = y[1] / r ** (N - 1)
        return [z / math.sqrt(1.0 + z * z), -r ** (N - 1) * g(r, y[0])]

    def hit_zero(r, y):
        return y[0]

    hit_zero.terminal = True
    hit_zero.direction = -1 if s > 0 else 1
    sol = solve_ivp(rhs, (r0, R), y0, method="DOP853", rtol=rtol, atol=atol,
                    dense_output=dense, events=hit_zero)
    if sol.status < 0:
        raise StepFailure(f"integration failed at s={s:.6g}: {sol.message}")
    r, u, h = sol.t, sol.y[0], sol.y[1]
    touched = sol.status == 1
    terminal = float(u[-1])
    if touched:
        z = h[-1] / r[-1] ** (N - 1)
        terminal = float(u[-1] + z / math.sqrt(1 + z * z) * (R - r[-1]))
    exceeded = bool(np.max(np.abs(u)) > R + 1)
    return ShootingRecord(s, terminal, r, u, h, not touched, exceeded, bool(touched),
                          int(sol.nfev), sol.sol if dense else None, N)


def terminal_value(p: ProblemSpec, s: float) -> float:
    return shoot(p, s).terminal


def default_grid(R: float, n: int = 512, s_min: float = 1e-5) -> np.ndarray:
    """Half logarithmic on ``[s_min R, R/10]``, half linear on ``[R/10, R]``."""
    k = n // 2
    g = np.concatenate([np.geomspace(s_min * R, 0.1 * R, k, endpoint=False),
                        np.linspace(0.1 * R, R, n - k)])
    return g


def _scan_one(args):
    p, s = args
    try:
        rec = shoot(p, s)
        return rec.terminal, rec.touched_zero, False
    except StepFailure:
        return math.nan, False, True


def scan_and_count(p: ProblemSpec, branch: Optional[str] = None, s_grid=None,
                   refine: bool = True, mesh: Optional[RadialMesh] = None,
                   tol: float = 1e-10, workers: int = 1) -> ScanResult:
    """Scan ``T(s)`` on a grid, refine each sign change and return the roots.

    ``branch`` "negative" mirrors the grid to ``[-R, 0)``.  Roots closer
    than ``1e-6 R`` are merged.  Each root profile is sampled at the mesh
    nodes when a mesh is given (at 401 uniform radii otherwise).
    """
    branch = branch or p.branch
    if branch == "full":
        raise ValueError("scan one branch at a time")
    p = p.with_branch(branch)
    R = p.R
    grid = default_grid(R) if s_grid is None else np.asarray(s_grid, dtype=float)
    grid = np.sort(np.abs(grid))
    if branch == "negative":
        grid = -grid
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            out = list(ex.map(_scan_one, [(p, s) for s in grid], chunksize=16))
    else:
        out = [_scan_one((p, s)) for s in grid]
    T = np.array([o[0] for o in out])
    touched = np.array([o[1] for o in out])
    failed = np.array([o[2] for o in out])
    nodes = mesh.nodes if mesh is not None else np.linspace(0.0, R, 401)
    roots: list[ShootingRoot] = []
    if refine:
        cands = []
        for i in range(len(grid)):
            if not failed[i] and T[i] == 0.0:
                cands.append(float(grid[i]))
        for i in range(len(grid) - 1):
            if failed[i] or failed[i + 1]:
                continue
            if T[i] * T[i + 1] < 0:
                a, b = sorted((grid[i], grid[i + 1]))
                cands.append(brentq(lambda x: terminal_value(p, x), a, b, xtol=1e-15,
                                    rtol=1e-15, maxiter=200))
        for sr in sorted(cands, key=abs):
            if roots and abs(sr - roots[-1].s) <= 1e-6 * R:
                continue
            rec = shoot(p, sr, dense=True)
            if abs(rec.terminal) > tol:
                log.warning("root at s=%.6g has |T|=%.3e above tolerance", sr, abs(rec.terminal))
            roots.append(ShootingRoot(float(sr), float(rec.terminal), rec.sample(nodes), R, rec))
    return ScanResult(branch, grid, T, touched, failed, roots)
