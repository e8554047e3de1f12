"""Gradient-dependent problems by freezing ``|u'|`` and iterating.

For a slope field ``omega`` the term ``g(r, s, |omega'|)`` is a plain
nonlinearity in ``s``, so the frozen problem is variational and the
minimizers and the mountain-pass search apply.  The outer loop sets
``omega_n = u_n`` and stops when successive iterates agree.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .energy import DiscreteEnergy, frozen_nonlinearity, weak_residual, criticality_residual
from .mesh import RadialMesh, SlopeField
from .minimizers import SolveOptions, minimize
from .mountain_pass import MPOptions, mountain_pass
from .problem import ProblemSpec
from .verify import CriticalPointCertificate, Tolerances

__all__ = [
    "IterOptions",
    "IterationTrace",
    "NonContraction",
    "ConditionsNotMet",
    "frozen_problem",
    "solve_frozen",
    "iterate",
    "default_omega0",
]

log = logging.getLogger(__name__)

MODES = ("global-min", "mountain-pass")


class NonContraction(RuntimeError):
    """Increment ratios stayed above 1 for several consecutive steps."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class ConditionsNotMet(ValueError):
    """The smallness conditions for the contraction argument fail."""


@dataclass(frozen=True)
class IterOptions:
    max_n: int = 40
    tol: float = 1e-8
    burn_in: int = 1
    slack: float = 0.05
    noncontraction_run: int = 5
    norm_floor: Optional[float] = None
    solve: SolveOptions = SolveOptions(tol=1e-9)
    mp: MPOptions = MPOptions(tol=1e-9)

    def to_dict(self):
        d = {k: v for k, v in self.__dict__.items() if k not in ("solve", "mp")}
        d["solve"] = self.solve.to_dict()
        d["mp"] = self.mp.to_dict()
        return d


@dataclass
class IterationTrace:
    """History of the outer iteration.

    ``increments[i]`` is ``||u_{i+2} - u_{i+1}||_H`` and ``ratios[i]`` the
    quotient of consecutive increments.
    """

    mode: str
    branch: str
    increments: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    norms: list = field(default_factory=list)
    certificates: list = field(default_factory=list)
    k_hat: Optional[float] = None
    k_predicted: Optional[float] = None
    converged: bool = False
    final: Optional[CriticalPointCertificate] = None
    final_weak_residual: Optional[float] = None
    final_residual: Optional[float] = None
    norm_floor: Optional[float] = None
    conditions: Optional[dict] = None

    @property
    def min_norm(self) -> float:
        return float(min(self.norms)) if self.norms else math.nan

    @property
    def floor_ok(self) -> Optional[bool]:
        if self.norm_floor is None:
            return None
        return self.min_norm >= self.norm_floor

    def tail_ratios(self, burn_in: int = 1) -> list:
        return self.ratios[burn_in:]

    def to_dict(self):
        return {
            "mode": self.mode, "branch": self.branch, "steps": len(self.norms),
            "increments": self.increments, "ratios": self.ratios,
            "energies": self.energies, "norms": self.norms,
            "k_hat": self.k_hat, "k_predicted": self.k_predicted,
            "converged": self.converged, "final_weak_residual": self.final_weak_residual,
            "final_residual": self.final_residual, "min_norm": self.min_norm,
            "norm_floor": self.norm_floor, "floor_ok": self.floor_ok,
            "conditions": self.conditions,
            "final": self.final.summary() if self.final is not None else None,
        }


def default_omega0(mesh: RadialMesh, branch: str = "positive") -> SlopeField:
    """Half of the extremal profile ``+-(R - r)``: slopes ``-+1/2``."""
    s = -0.5 if branch == "positive" else 0.5
    return SlopeField(mesh, np.full(mesh.M, s))


def frozen_problem(p: ProblemSpec, mesh: RadialMesh, omega) -> ProblemSpec:
    """Problem whose nonlinearity is ``g(r, s, |omega'|)`` on the mesh nodes."""
    nl = frozen_nonlinearity(p, mesh, omega)
    return dataclasses.replace(p, nonlinearity=nl, gradient_term=None)


def solve_frozen(p: ProblemSpec, mesh: RadialMesh, omega, branch: Optional[str] = None,
                 mode: str = "global-min", opts: IterOptions = IterOptions(),
                 tol: Tolerances = Tolerances()) -> CriticalPointCertificate:
    """Solve the problem with ``|u'|`` frozen at ``|omega'|``.

    ``mode`` "global-min" runs the multi-start minimizer, "mountain-pass"
    runs the path search between 0 and that minimizer.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if p.gradient_term is None:
        raise ValueError("problem has no gradient term")
    branch = branch or p.branch
    fp = frozen_problem(p, mesh, omega).with_branch(branch)
    de = DiscreteEnergy(fp, mesh)
    inner = dataclasses.replace(tol, criticality=opts.tol / 10)
    umin = minimize(fp, mesh, branch, opts.solve, None, inner, de=de)
    if mode == "global-min":
        return umin
    return mountain_pass(fp, mesh, branch, endpoint_b=umin.slopes, opts=opts.mp, tol=inner, de=de)


def iterate(p: ProblemSpec, mesh: RadialMesh, mode: str = "global-min", omega0=None,
            branch: Optional[str] = None, opts: IterOptions = IterOptions(),
            thresholds: Optional[dict] = None, tol: Tolerances = Tolerances(),
            require_conditions: bool = True) -> IterationTrace:
    """Freeze-and-solve iteration ``u_n = S(u_{n-1})``.

    Stops when ``||u_{n+1} - u_n||_H <= opts.tol`` or after ``opts.max_n``
    solves.  ``k_hat`` is the largest ratio after the burn-in.  With
    ``require_conditions`` the smallness conditions (from ``thresholds``)
    must hold before any work is done.
    """
    branch = branch or p.branch
    gt = p.gradient_term
    if gt is None:
        raise ValueError("problem has no gradient term")
    trace = IterationTrace(mode, branch)
    if thresholds is not None:
        trace.conditions = thresholds.get("lip_ok")
        trace.k_predicted = thresholds.get("k_predicted")
        if opts.norm_floor is None:
            trace.norm_floor = 1e-3 * thresholds["rho_minus"]
    if opts.norm_floor is not None:
        trace.norm_floor = opts.norm_floor
    if require_conditions:
        if thresholds is None:
            raise ConditionsNotMet("thresholds are required to check the conditions")
        lip = thresholds.get("lip_ok") or {}
        lam_cap = min(thresholds.get("lambda_bar") or math.inf, thresholds["lambda_star"])
        if not lip.get("ok") or not p.lam < lam_cap:
            raise ConditionsNotMet(
                f"conditions fail: L1 C2 = {lip.get('L1C2')}, L2 sqrt(C2) = {lip.get('L2sqrtC2')}, "
                f"lambda = {p.lam} vs {lam_cap}")
    omega = default_omega0(mesh, branch) if omega0 is None else omega0
    prev = None
    w = mesh.cell_weights
    above = 0
    for n in range(1, opts.max_n + 1):
        cert = solve_frozen(p, mesh, omega, branch, mode, opts, tol)
        v = cert.slopes.v
        trace.certificates.append(cert.summary())
        trace.energies.append(cert.total)
        trace.norms.append(cert.h_norm)
        trace.final = cert
        if prev is not None:
            inc = float(np.sqrt(np.sum(w * (v - prev) ** 2)))
            trace.increments.append(inc)
            if len(trace.increments) > 1:
                a, b = trace.increments[-2], trace.increments[-1]
                ratio = b / a if a > 0 else (0.0 if b == 0 else math.inf)
                trace.ratios.append(ratio)
                above = above + 1 if ratio > 1 else 0
            log.info("step %d: increment %.3e", n, inc)
            if inc <= opts.tol:
                trace.converged = True
                break
            if above >= opts.noncontraction_run:
                _finish(trace, p, opts)
                raise NonContraction(f"ratios above 1 for {above} consecutive steps", trace)
        prev = v
        omega = cert.slopes
    _finish(trace, p, opts)
    return trace


def _finish(trace: IterationTrace, p: ProblemSpec, opts: IterOptions):
    tail = trace.tail_ratios(opts.burn_in)
    trace.k_hat = float(max(tail)) if tail else (float(max(trace.ratios)) if trace.ratios else None)
    if trace.final is not None:
        fin = trace.final.slopes
        pb = p.with_branch(trace.branch)
        trace.final_weak_residual = float(weak_residual(fin, pb))
        trace.final_residual = float(criticality_residual(fin, pb))
