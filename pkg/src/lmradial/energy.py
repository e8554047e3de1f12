"""Nonsmooth energy ``I = Psi + F`` in slope coordinates.

``Psi(v) = sum_j w_j (1 - sqrt(1 - v_j^2))`` is convex and separable, so it
is handled through its proximal map.  ``F`` collects the concave q-term and
the superlinear term, both evaluated at nodes with the dual-cell weights.

Gradients of ``F`` are returned in the H metric ``<a, b>_H = sum_j w_j a_j b_j``
(Euclidean gradient divided by the cell weights).  With this convention the
proximal step of ``Psi`` decouples into unweighted scalar problems.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .mesh import RadialMesh, SlopeField, adjoint, reconstruct_values
from .problem import (BRANCHES, Nonlinearity, ProblemSpec, TabulatedNonlinearity,
                      truncate_branch, truncate_primitive)

__all__ = [
    "EnergyBreakdown",
    "DiscreteEnergy",
    "SingularSlope",
    "discretize",
    "truncate_branch",
    "psi",
    "energy",
    "grad_smooth",
    "prox_psi",
    "prox_residual",
    "criticality_residual",
    "weak_residual",
    "frozen_nonlinearity",
    "SUP_CLIP",
]

# largest slope magnitude returned by the prox
SUP_CLIP = 1.0 - 1e-15


class SingularSlope(ValueError):
    """Raised when a slope touches the light cone |v| = 1."""


@dataclass(frozen=True)
class EnergyBreakdown:
    psi: float
    q_term: float
    f_term: float

    @property
    def total(self) -> float:
        return self.psi - self.q_term - self.f_term

    def to_dict(self):
        return {"psi": self.psi, "q_term": self.q_term, "f_term": self.f_term,
                "total": self.total}


def _psi_cells(v):
    # 1 - sqrt(1 - v^2) written without cancellation
    root = np.sqrt((1.0 - np.abs(v)) * (1.0 + np.abs(v)))
    return v * v / (1.0 + root)


def dpsi(v):
    """Derivative ``v / sqrt(1 - v^2)`` of the per-cell area term."""
    return v / np.sqrt((1.0 - np.abs(v)) * (1.0 + np.abs(v)))


def prox_psi(z, tau):
    """Proximal map of the per-cell area term.

    Solves ``argmin_v (1 - sqrt(1 - v^2)) + (v - z)^2 / (2 tau)`` for every
    entry of ``z``.  In the variable ``p = v / sqrt(1 - v^2)`` the optimality
    condition reads ``tau p + p / sqrt(1 + p^2) = |z|``; the left side is
    increasing and concave for ``p >= 0``, so Newton started below the root
    increases monotonically to it.
    """
    z = np.asarray(z, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise ValueError("tau must be positive")
    az = np.abs(z)
    p = np.maximum(0.0, (az - 1.0) / tau)
    for _ in range(60):
        s = np.sqrt(1.0 + p * p)
        m = tau * p + p / s - az
        step = m / (tau + 1.0 / (s * s * s))
        p_new = p - step
        done = np.all(np.abs(p_new - p) <= 1e-14 * (1.0 + np.abs(p_new)))
        p = p_new
        if done:
            break
    v = np.sign(z) * p / np.sqrt(1.0 + p * p)
    return np.clip(v, -SUP_CLIP, SUP_CLIP)


def prox_residual(v, z, tau):
    """Optimality defect of a prox output, measured as a Newton step.

    With ``g(v) = v + tau v / sqrt(1 - v^2)`` the prox solves ``g(v) = z``.
    The raw defect ``g(v) - z`` is useless near the light cone, where
    ``g'(v)`` grows like ``(1 - v^2)^(-3/2)`` and one rounding of ``v``
    already moves ``g`` by far more than the tolerance.  Dividing by
    ``g'(v)`` gives the distance to the exact solution to first order,
    which is well conditioned for every ``z``.
    """
    v = np.asarray(v, dtype=float)
    av = np.abs(v)
    c = (1.0 - av) * (1.0 + av)
    return (v + tau * dpsi(v) - z) / (1.0 + tau / (c * np.sqrt(c)))


class DiscreteEnergy:
    """Energy, gradient and prox for a problem on a fixed mesh.

    All array methods accept a batch of slope fields on the leading axes.
    """

    def __init__(self, problem: ProblemSpec, mesh: RadialMesh,
                 branch: str | None = None, nonlinearity: Nonlinearity | None = None):
        if mesh.N != problem.N or abs(mesh.R - problem.R) > 1e-14 * problem.R:
            raise ValueError("mesh and problem disagree on N or R")
        self.problem = problem
        self.mesh = mesh
        self.branch = branch or problem.branch
        if self.branch not in BRANCHES:
            raise ValueError(f"unknown branch {self.branch!r}")
        self.nl = nonlinearity or problem.nonlinearity
        self.r = mesh.nodes
        self.h = mesh.h
        self.w = mesh.cell_weights
        self.om = mesh.node_weights
        self.lam = problem.lam
        self.q = problem.q
        self.R = problem.R
        self.b = problem.weight_b(self.r)
        self._f = truncate_branch(self.nl, self.branch, self.R)
        self._F = truncate_primitive(self.nl, self.branch, self.R)

    # -- nodal pieces
    def profile(self, V):
        return reconstruct_values(V, self.h)

    def _mask(self, U):
        if self.branch == "positive":
            return U > 0
        if self.branch == "negative":
            return U < 0
        return U != 0

    def _fvals(self, U):
        if np.max(np.abs(U), initial=0.0) <= self.R:
            vals = self.nl.f(self.r, U)
            if self.branch != "full":
                vals = np.where(self._mask(U), vals, 0.0)
            return vals
        return self._f(self.r, U)

    def _Fvals(self, U):
        if np.max(np.abs(U), initial=0.0) <= self.R:
            vals = self.nl.F(self.r, U)
            if self.branch != "full":
                vals = np.where(self._mask(U), vals, 0.0)
            return vals
        return self._F(self.r, U)

    def _concave(self, U):
        A = np.where(self._mask(U), np.abs(U), 0.0)
        return A

    def rhs(self, U):
        """Nodal right-hand side ``lam b |u|^(q-2) u + f`` on the branch."""
        A = self._concave(U)
        return self.lam * self.b * np.sign(U) * A ** (self.q - 1) + self._fvals(U)

    # -- energy
    def parts(self, V):
        V = np.asarray(V, dtype=float)
        U = self.profile(V)
        ps = np.sum(self.w * _psi_cells(V), axis=-1)
        qt = (self.lam / self.q) * np.sum(self.om * self.b * self._concave(U) ** self.q, axis=-1)
        ft = np.sum(self.om * self._Fvals(U), axis=-1)
        return ps, qt, ft

    def value(self, V):
        ps, qt, ft = self.parts(V)
        return ps - qt - ft

    def smooth_value(self, V):
        _, qt, ft = self.parts(V)
        return -qt - ft

    def breakdown(self, v) -> EnergyBreakdown:
        ps, qt, ft = self.parts(v)
        return EnergyBreakdown(float(ps), float(qt), float(ft))

    # -- gradients
    def euclid_grad(self, V):
        U = self.profile(V)
        return adjoint(-self.rhs(U) * self.om, self.h)

    def grad(self, V):
        """H-metric gradient of the smooth part."""
        return self.euclid_grad(V) / self.w

    def full_grad(self, V):
        """H-gradient of the whole energy (valid for |v| < 1)."""
        return dpsi(V) + self.grad(V)

    # -- inner products
    def inner(self, a, b):
        return np.sum(self.w * a * b, axis=-1)

    def norm(self, a):
        return np.sqrt(self.inner(a, a))

    # -- prox and criticality
    def prox(self, Z, tau):
        return prox_psi(Z, tau)

    def residual(self, v, tau: float = 1.0):
        v = np.asarray(v, dtype=float)
        step = self.prox(v - tau * self.grad(v), tau)
        return self.norm(v - step) / tau

    def weak_residual(self, v):
        v = np.asarray(v, dtype=float)
        if np.max(np.abs(v), initial=0.0) >= 1.0 - 1e-10:
            raise SingularSlope("slope reaches the light cone; weak form is singular")
        if self.mesh.M < 2:
            return 0.0
        flux = self.w * dpsi(v)
        U = self.profile(v)
        lhs = flux[:-1] / self.h[:-1] - flux[1:] / self.h[1:]
        rhs = self.om[1:-1] * self.rhs(U)[1:-1]
        phi = np.sqrt(self.w[:-1] / self.h[:-1] ** 2 + self.w[1:] / self.h[1:] ** 2)
        return float(np.max(np.abs(lhs - rhs) / phi))


@functools.lru_cache(maxsize=64)
def discretize(problem: ProblemSpec, mesh: RadialMesh, branch: str | None = None) -> DiscreteEnergy:
    """Cached :class:`DiscreteEnergy` for a problem/mesh pair."""
    if problem.gradient_term is not None and problem.nonlinearity is None:
        raise ValueError("freeze the gradient term before building the energy")
    return DiscreteEnergy(problem, mesh, branch)


def frozen_nonlinearity(problem: ProblemSpec, mesh: RadialMesh, omega) -> TabulatedNonlinearity:
    """Freeze ``xi = |omega'|`` in the gradient term.

    Each node's dual cell is split at the node into a left and a right half;
    each half sees the slope of its own cell, so no smoothing of ``|omega'|``
    takes place.
    """
    gt = problem.gradient_term
    if gt is None:
        raise ValueError("problem has no gradient term")
    om = np.asarray(omega.v if isinstance(omega, SlopeField) else omega, dtype=float)
    xi = np.abs(om)
    left, right = mesh.half_weights()
    tot = mesh.node_weights
    aL = left / tot
    aR = right / tot
    xiL = np.concatenate([[0.0], xi])
    xiR = np.concatenate([xi, [0.0]])
    r = mesh.nodes

    def fn(s):
        return aL * gt.g(r, s, xiL) + aR * gt.g(r, s, xiR)

    def Fn(s):
        return aL * gt.G(r, s, xiL) + aR * gt.G(r, s, xiR)

    return TabulatedNonlinearity(fn, Fn, gt.theta, gt.a1, gt.a2, gt.odd)


def _problem_energy(v, p: ProblemSpec) -> tuple[DiscreteEnergy, np.ndarray]:
    if not isinstance(v, SlopeField):
        raise TypeError("expected a SlopeField")
    if p.gradient_term is not None:
        nl = frozen_nonlinearity(p, v.mesh, v)
        return DiscreteEnergy(p, v.mesh, nonlinearity=nl), v.v
    return discretize(p, v.mesh), v.v


def psi(v: SlopeField) -> float:
    """Area term ``sum_j w_j (1 - sqrt(1 - v_j^2))``."""
    return float(np.sum(v.mesh.cell_weights * _psi_cells(v.v)))


def energy(v: SlopeField, p: ProblemSpec) -> EnergyBreakdown:
    """Energy breakdown on the branch stored in ``p``."""
    de, arr = _problem_energy(v, p)
    return de.breakdown(arr)


def grad_smooth(v: SlopeField, p: ProblemSpec) -> np.ndarray:
    """H-metric gradient of the smooth part ``F``."""
    de, arr = _problem_energy(v, p)
    return de.grad(arr)


def criticality_residual(v: SlopeField, p: ProblemSpec, tau: float = 1.0) -> float:
    """Prox fixed-point gap ``||v - prox(v - tau grad F(v), tau)||_H / tau``."""
    de, arr = _problem_energy(v, p)
    return float(de.residual(arr, tau))


def weak_residual(v: SlopeField, p: ProblemSpec) -> float:
    """Largest weak-form defect over interior hat functions, H-normalized.

    A gradient term, if present, is evaluated at ``|v|`` itself.
    """
    de, arr = _problem_energy(v, p)
    return de.weak_residual(arr)
