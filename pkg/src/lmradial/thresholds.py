"""Explicit constants and smallness conditions.

Embedding constants are discrete suprema on a given mesh.  Everything else
is closed-form arithmetic on top of them: the Gamma-ratio superlinearity
test, the annulus radii and the lambda thresholds for the concave-convex
problem, and the Lipschitz conditions for the gradient-dependent problem.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg, special

from .mesh import RadialMesh, reconstruct_values
from .problem import AsymmetricPower, GradientTermSpec, Nonlinearity, ProblemSpec, PurePower

__all__ = [
    "reconstruction_matrix",
    "estimate_embedding_constant",
    "hardy_ratio",
    "gamma_ratio",
    "SuperlinearityCheck",
    "check_superlinearity",
    "c_epsilon",
    "ThresholdReport",
    "compute_lambda_star",
    "compute_thresholds",
    "lambda_star2",
    "GradientConditions",
    "check_gradient_conditions",
    "critical_exponent",
    "default_alpha",
]


def critical_exponent(N: int) -> float:
    return 2.0 * N / (N - 2)


def default_alpha(N: int) -> float:
    """Midpoint of ``(2, 2N/(N-2))``."""
    return 0.5 * (2.0 + critical_exponent(N))


def reconstruction_matrix(mesh: RadialMesh) -> np.ndarray:
    """Dense ``(M+1, M)`` matrix of the slope-to-profile map."""
    return reconstruct_values(np.eye(mesh.M), mesh.h).T


# ------------------------------------------------------ embedding constants

def _ratio(mesh, A, v, p):
    u = A @ v
    num = np.sum(mesh.node_weights * np.abs(u) ** p)
    den = np.sum(mesh.cell_weights * v * v) ** (p / 2)
    return num / den


def _power_ascent(mesh, A, v0, p, maxiter, tol):
    # maximize J(v) = sum omega |Av|^p on the H-sphere; for convex J the
    # normalized W^{-1} grad J step never decreases J
    w = mesh.cell_weights
    v = v0 / math.sqrt(np.sum(w * v0 * v0))
    val = _ratio(mesh, A, v, p)
    for _ in range(maxiter):
        u = A @ v
        g = A.T @ (mesh.node_weights * np.abs(u) ** (p - 1) * np.sign(u)) / w
        nrm = math.sqrt(np.sum(w * g * g))
        if nrm == 0.0:
            break
        v = g / nrm
        new = _ratio(mesh, A, v, p)
        if abs(new - val) <= tol * abs(new):
            val = max(val, new)
            break
        val = new
    return val, v


def estimate_embedding_constant(mesh: RadialMesh, p: float, method: str = "auto",
                                starts: int = 6, seed: int = 0, maxiter: int = 5000,
                                tol: float = 1e-14) -> float:
    """Discrete constant ``C`` in ``||u||_{N-1,p}^p <= C ||u||^p``.

    Parameters
    ----------
    mesh : RadialMesh
    p : float
        Exponent in ``[1, 2N/(N-2))``.
    method : {"auto", "eigh", "power", "ascent"}
        ``eigh`` solves the generalized eigenproblem (p = 2 only), ``power``
        runs plain power iteration (p = 2 only), ``ascent`` runs the
        normalized gradient ascent with multi-start.  ``auto`` picks
        ``eigh`` for p = 2 and ``ascent`` otherwise.
    """
    N = mesh.N
    if not 1 <= p < critical_exponent(N):
        raise ValueError(f"p must lie in [1, {critical_exponent(N)}), got {p}")
    A = reconstruction_matrix(mesh)
    w = mesh.cell_weights
    if method == "auto":
        method = "eigh" if p == 2 else "ascent"
    if method in ("eigh", "power") and p != 2:
        raise ValueError(f"method {method!r} needs p = 2")
    if method == "eigh":
        K = A.T @ (mesh.node_weights[:, None] * A)
        top = linalg.eigh(K, np.diag(w), eigvals_only=True,
                          subset_by_index=[mesh.M - 1, mesh.M - 1])
        return float(top[0])
    if method == "power":
        val, _ = _power_ascent(mesh, A, np.ones(mesh.M), 2.0, maxiter, tol)
        return float(val)
    if method != "ascent":
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng(seed)
    K = A.T @ (mesh.node_weights[:, None] * A)
    _, vec = linalg.eigh(K, np.diag(w), subset_by_index=[mesh.M - 1, mesh.M - 1])
    guesses = [vec[:, 0], -np.ones(mesh.M)]
    guesses += [rng.uniform(-1, 1, mesh.M) for _ in range(max(0, starts - 2))]
    best = 0.0
    for g in guesses:
        val, _ = _power_ascent(mesh, A, g, p, maxiter, tol)
        best = max(best, val)
    return float(best)


def hardy_ratio(mesh: RadialMesh) -> float:
    """Discrete sup of ``int r^(N-3) u^2 / ||u||^2``.

    The weight ``r^(N-3)`` is integrated exactly over each dual cell, which
    avoids evaluating ``r^(-2)`` at the origin.
    """
    A = reconstruction_matrix(mesh)
    wt = mesh.dual_weights(mesh.N - 2)
    K = A.T @ (wt[:, None] * A)
    top = linalg.eigh(K, np.diag(mesh.cell_weights), eigvals_only=True,
                      subset_by_index=[mesh.M - 1, mesh.M - 1])
    return float(top[0])


# ------------------------------------------------------ superlinearity test

def gamma_ratio(N: float, theta: float) -> float:
    """``Gamma(N) Gamma(theta+1) / Gamma(N+theta+1)`` through log-Gamma."""
    return math.exp(special.gammaln(N) + special.gammaln(theta + 1)
                    - special.gammaln(N + theta + 1))


@dataclass(frozen=True)
class SuperlinearityCheck:
    ok: bool
    lhs: float
    gamma_ratio: float

    @property
    def margin(self) -> float:
        return -1.0 - self.lhs


def check_superlinearity(N: int, theta: float, a1: float, a2: float, R: float,
                         tol: float = 1e-12) -> SuperlinearityCheck:
    """Evaluate ``(1 + a2)/N - a1 R^theta Gamma-ratio <= -1``.

    ``tol`` absorbs rounding so that exact equality cases register as true.
    """
    if not theta > 2:
        raise ValueError("theta must exceed 2")
    if a1 < 0 or a2 < 0:
        raise ValueError("a1 and a2 must be nonnegative")
    g = gamma_ratio(N, theta)
    lhs = (1.0 + a2) / N - a1 * R**theta * g
    return SuperlinearityCheck(bool(lhs <= -1.0 + tol), float(lhs), g)


# ---------------------------------------------------------- annulus radii

def c_epsilon(nl: Nonlinearity, R: float, alpha: float, eps: float,
              samples: int = 4001) -> float:
    """A constant with ``|F(r, s)| <= eps s^2 / 2 + c |s|^alpha`` on ``|s| <= R``.

    Power families use closed forms: ``k R^(theta-alpha)`` when
    ``theta >= alpha`` (the quadratic term is not needed) and a weighted
    Young inequality otherwise.  Other families are sampled.
    """
    if isinstance(nl, (PurePower, AsymmetricPower)):
        k = nl.growth()
        theta = nl.theta
        if k == 0:
            return 0.0
        if theta >= alpha:
            return k * R ** (theta - alpha)
        t = (alpha - theta) / (alpha - 2.0)
        E = 0.5 * eps / t
        D = (k / E**t) ** (1.0 / (1.0 - t))
        return (1.0 - t) * D
    s = np.geomspace(1e-6 * R, R, samples)
    r = np.linspace(0.0, R, 21)[:, None]
    best = 0.0
    for sgn in (1.0, -1.0):
        F = np.abs(nl.F(r, sgn * s[None, :]))
        c = np.max((F - 0.5 * eps * s**2) / s**alpha)
        best = max(best, float(c))
    return best


@dataclass
class ThresholdReport:
    """All explicit constants for one problem on one mesh.

    Embedding constants are discrete suprema, so they bound the continuous
    constants from below; the report carries that flag.
    """

    N: int
    R: float
    lam: float
    q: float
    alpha: float
    C2: float
    Cq: float
    Calpha: float
    eps: float
    c_eps: float
    d2: float
    dq: float
    dalpha: float
    beta: float
    t_lambda: float
    lambda_star: float
    rho_plus: float
    rho_minus: float
    mp_floor: float
    lambda_star2: float
    lambda_star2_capped: bool
    superlinearity_ok: bool
    superlinearity_lhs: float
    lip_ok: Optional[dict] = None
    lambda_bar: Optional[float] = None
    k_predicted: Optional[float] = None
    constants_are_discrete_estimates: bool = True
    mesh: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _check_alpha(N, q, alpha):
    if not 1 < q < 2:
        raise ValueError("q must lie in (1, 2)")
    if not 2 < alpha < critical_exponent(N):
        raise ValueError(f"alpha must lie in (2, {critical_exponent(N)})")


def _beta(q, alpha):
    return (alpha - q) ** ((alpha - q) / (alpha - 2)) / (
        (2 - q) ** ((2 - q) / (alpha - 2)) * (alpha - 2))


def compute_lambda_star(N: int, q: float, alpha: float, dq: float, c_eps: float,
                        dalpha: float, lam: float = 0.0) -> dict:
    """Closed-form ``lambda_*``, ``rho_+``, ``t_lambda`` and ``beta``.

    Returns a dict with keys ``beta``, ``lambda_star``, ``rho_plus``,
    ``t_lambda`` (``= rho_minus``) and ``mp_floor``.
    """
    _check_alpha(N, q, alpha)
    if min(dq, c_eps, dalpha) <= 0:
        raise ValueError("constants must be positive")
    beta = _beta(q, alpha)
    cd = c_eps * dalpha
    lam_star = 0.25 ** ((alpha - q) / (alpha - 2)) / (beta * dq * cd ** ((2 - q) / (alpha - 2)))
    rho_plus = ((2 - q) / (4 * cd * (alpha - q))) ** (1 / (alpha - 2))
    t_lam = (lam * (2 - q) * dq / ((alpha - 2) * cd)) ** (1 / (alpha - q))
    return {"beta": beta, "lambda_star": lam_star, "rho_plus": rho_plus,
            "t_lambda": t_lam, "rho_minus": t_lam, "mp_floor": t_lam**2 / 8}


def lambda_star2(N: int, R: float, q: float, alpha: float, dq: float, c_eps: float,
                 dalpha: float, lambda_star: float) -> tuple[float, bool]:
    """Largest ``lambda <= lambda_*`` with ``-lam dq rho^q - c dalpha rho^alpha >= -R^N``.

    ``rho = rho_minus(lambda)``.  The left side decreases in lambda, so the
    admissible set is an interval found by bisection.  Returns the value and
    whether it was capped at ``lambda_*``.
    """
    def ok(lam):
        rho = compute_lambda_star(N, q, alpha, dq, c_eps, dalpha, lam)["t_lambda"]
        return -lam * dq * rho**q - c_eps * dalpha * rho**alpha >= -R**N

    if ok(lambda_star):
        return lambda_star, True
    lo, hi = 0.0, lambda_star
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return lo, False


@dataclass(frozen=True)
class GradientConditions:
    l1_ok: bool
    l2_ok: bool
    L1C2: float
    L2sqrtC2: float
    lambda_bar: float
    k: float

    @property
    def ok(self):
        return self.l1_ok and self.l2_ok

    def to_dict(self):
        d = asdict(self)
        d["ok"] = self.ok
        return d


def check_gradient_conditions(L1: float, L2: float, C2: float, q: float, b1: float,
                              R: float, lam: float = 0.0) -> GradientConditions:
    """Lipschitz smallness conditions and the predicted contraction factor.

    ``k = L2 sqrt(C2) / (1 - (lam b1 (2R)^(q-2) q + L1) C2)``; ``inf`` when
    the denominator is not positive.
    """
    if isinstance(L1, GradientTermSpec):
        raise TypeError("pass L1 and L2 as numbers")
    lam_bar = 1.0 / (4.0 * (2 * R) ** (q - 2) * q * b1 * C2)
    den = 1.0 - (lam * b1 * (2 * R) ** (q - 2) * q + L1) * C2
    k = L2 * math.sqrt(C2) / den if den > 0 else math.inf
    return GradientConditions(bool(L1 * C2 < 0.25), bool(L2 * math.sqrt(C2) < 0.5),
                              L1 * C2, L2 * math.sqrt(C2), lam_bar, k)


def compute_thresholds(problem: ProblemSpec, mesh: RadialMesh, alpha: float | None = None,
                       constants: dict | None = None, seed: int = 0) -> ThresholdReport:
    """Assemble a :class:`ThresholdReport`.

    ``constants`` may carry precomputed ``C2``, ``Cq``, ``Calpha`` to skip
    the estimates.  ``eps = 1/(4 d2)`` so that ``(1 - eps d2)/2 = 3/8``.
    """
    N, R, q = problem.N, problem.R, problem.q
    alpha = default_alpha(N) if alpha is None else float(alpha)
    _check_alpha(N, q, alpha)
    constants = dict(constants or {})
    C2 = constants.get("C2") or estimate_embedding_constant(mesh, 2.0)
    Cq = constants.get("Cq") or estimate_embedding_constant(mesh, q, seed=seed)
    Ca = constants.get("Calpha") or estimate_embedding_constant(mesh, alpha, seed=seed)
    b0, b1 = problem.weight_b.bounds
    d2 = C2
    dq = b1 * Cq / q
    da = Ca
    eps = 1.0 / (4.0 * d2)
    nl = problem.nonlinearity
    ce = c_epsilon(nl, R, alpha, eps)
    core = compute_lambda_star(N, q, alpha, dq, ce, da, problem.lam)
    lam2, capped = lambda_star2(N, R, q, alpha, dq, ce, da, core["lambda_star"])
    sup = check_superlinearity(N, nl.theta, nl.a1, nl.a2, R)
    lip = lam_bar = k = None
    gt = problem.gradient_term
    if gt is not None:
        gc = check_gradient_conditions(gt.L1, gt.L2, C2, q, b1, R, problem.lam)
        lip = gc.to_dict()
        lam_bar, k = gc.lambda_bar, gc.k
        sup = check_superlinearity(N, gt.theta, gt.a1, gt.a2, R)
    return ThresholdReport(
        N=N, R=R, lam=problem.lam, q=q, alpha=alpha, C2=C2, Cq=Cq, Calpha=Ca,
        eps=eps, c_eps=ce, d2=d2, dq=dq, dalpha=da, beta=core["beta"],
        t_lambda=core["t_lambda"], lambda_star=core["lambda_star"],
        rho_plus=core["rho_plus"], rho_minus=core["rho_minus"],
        mp_floor=core["mp_floor"], lambda_star2=lam2, lambda_star2_capped=capped,
        superlinearity_ok=sup.ok, superlinearity_lhs=sup.lhs, lip_ok=lip,
        lambda_bar=lam_bar, k_predicted=k, mesh=mesh.describe())
