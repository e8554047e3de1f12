"""Problem data: dimension, radius, concave term, superlinear term.

The equation is

    -(r^(N-1) u' / sqrt(1 - u'^2))' = r^(N-1) (lam b(r) |u|^(q-2) u + f(r, u)),

with u'(0) = 0 and u(R) = 0.  Nonlinearities are vectorized callables
``f(r, s)`` together with a primitive ``F(r, s) = int_0^s f(r, t) dt``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "BRANCHES",
    "ConstantWeight",
    "AffineWeight",
    "CallableWeight",
    "Nonlinearity",
    "PurePower",
    "AsymmetricPower",
    "Custom",
    "TabulatedNonlinearity",
    "GradientTermSpec",
    "PowerGradientTerm",
    "ProblemSpec",
    "truncate_branch",
    "truncate_primitive",
]

BRANCHES = ("positive", "negative", "full")


# ---------------------------------------------------------------- weights

@dataclass(frozen=True)
class ConstantWeight:
    value: float = 1.0

    def __call__(self, r):
        return np.full(np.shape(r), float(self.value))

    @property
    def bounds(self):
        return float(self.value), float(self.value)

    def to_dict(self):
        return {"kind": "constant", "value": float(self.value)}


@dataclass(frozen=True)
class AffineWeight:
    """``b(r) = c0 + c1 r`` on [0, R]."""

    c0: float
    c1: float
    R: float

    def __call__(self, r):
        return self.c0 + self.c1 * np.asarray(r, dtype=float)

    @property
    def bounds(self):
        ends = (self.c0, self.c0 + self.c1 * self.R)
        return float(min(ends)), float(max(ends))

    def to_dict(self):
        return {"kind": "affine", "c0": self.c0, "c1": self.c1}


@dataclass(frozen=True)
class CallableWeight:
    func: Callable
    b0: float
    b1: float

    def __call__(self, r):
        return np.asarray(self.func(np.asarray(r, dtype=float)), dtype=float)

    @property
    def bounds(self):
        return float(self.b0), float(self.b1)

    def to_dict(self):
        return {"kind": "callable", "b0": self.b0, "b1": self.b1}


# --------------------------------------------------------- nonlinearities

class Nonlinearity:
    """Base class.  Subclasses provide ``f``, ``F`` and growth data.

    ``theta``, ``a1``, ``a2`` describe the lower bound
    ``F(r, s) >= a1 |s|^theta - a2``.
    """

    theta: float
    odd: bool = False

    def f(self, r, s):
        raise NotImplementedError

    def F(self, r, s):
        raise NotImplementedError

    @property
    def a1(self) -> float:
        raise NotImplementedError

    @property
    def a2(self) -> float:
        return 0.0

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class PurePower(Nonlinearity):
    """``f(r, s) = a |s|^(theta-2) s``."""

    a: float
    theta: float

    def __post_init__(self):
        if not self.theta > 2:
            raise ValueError("theta must exceed 2")
        if self.a < 0:
            raise ValueError("coefficient a must be nonnegative")

    @property
    def odd(self):
        return True

    def f(self, r, s):
        s = np.asarray(s, dtype=float)
        return self.a * np.abs(s) ** (self.theta - 1) * np.sign(s) + 0.0 * np.asarray(r)

    def F(self, r, s):
        s = np.asarray(s, dtype=float)
        return self.a / self.theta * np.abs(s) ** self.theta + 0.0 * np.asarray(r)

    @property
    def a1(self):
        return self.a / self.theta

    def growth(self):
        # |F(r, s)| <= k |s|^theta
        return self.a / self.theta

    def to_dict(self):
        return {"family": "pure_power", "a": self.a, "theta": self.theta}


@dataclass(frozen=True)
class AsymmetricPower(Nonlinearity):
    """``f = a_plus |s|^(theta-2) s^+ - a_minus |s|^(theta-2) s^-``."""

    a_plus: float
    a_minus: float
    theta: float

    def __post_init__(self):
        if not self.theta > 2:
            raise ValueError("theta must exceed 2")
        if self.a_plus < 0 or self.a_minus < 0:
            raise ValueError("coefficients must be nonnegative")

    @property
    def odd(self):
        return self.a_plus == self.a_minus

    def f(self, r, s):
        s = np.asarray(s, dtype=float)
        coef = np.where(s >= 0, self.a_plus, self.a_minus)
        return coef * np.abs(s) ** (self.theta - 1) * np.sign(s) + 0.0 * np.asarray(r)

    def F(self, r, s):
        s = np.asarray(s, dtype=float)
        coef = np.where(s >= 0, self.a_plus, self.a_minus)
        return coef / self.theta * np.abs(s) ** self.theta + 0.0 * np.asarray(r)

    @property
    def a1(self):
        return min(self.a_plus, self.a_minus) / self.theta

    def growth(self):
        return max(self.a_plus, self.a_minus) / self.theta

    def asymmetry(self, s):
        """``|F(-s) - F(s)| = |a_plus - a_minus| |s|^theta / theta``."""
        return abs(self.a_plus - self.a_minus) * np.abs(s) ** self.theta / self.theta

    def to_dict(self):
        return {"family": "asymmetric_power", "a_plus": self.a_plus,
                "a_minus": self.a_minus, "theta": self.theta}


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


@dataclass(frozen=True)
class Custom(Nonlinearity):
    """User callable ``f(r, s)`` with declared growth data.

    The primitive is computed with 24-point Gauss-Legendre on [0, s] unless
    one is supplied.
    """

    func: Callable
    theta: float
    a1_value: float
    a2_value: float = 0.0
    primitive: Optional[Callable] = None
    is_odd: bool = False

    @property
    def odd(self):
        return self.is_odd

    def f(self, r, s):
        return np.asarray(self.func(r, s), dtype=float)

    def F(self, r, s):
        if self.primitive is not None:
            return np.asarray(self.primitive(r, s), dtype=float)
        s, r = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(r, dtype=float))
        t = 0.5 * (_GL_X + 1.0)
        pts = s[..., None] * t
        vals = self.f(r[..., None], pts)
        return 0.5 * s * np.sum(_GL_W * vals, axis=-1)

    @property
    def a1(self):
        return self.a1_value

    @property
    def a2(self):
        return self.a2_value

    def to_dict(self):
        return {"family": "custom", "theta": self.theta, "a1": self.a1_value,
                "a2": self.a2_value}


@dataclass(frozen=True, eq=False)
class TabulatedNonlinearity(Nonlinearity):
    """A nonlinearity evaluated on fixed node positions.

    ``f(r, s)`` ignores ``r`` and uses the stored per-node callables through
    ``fn(s) -> array`` that must broadcast against the node axis.  Used for
    frozen gradient problems, where the r-dependence enters through the
    frozen slope.
    """

    fn: Callable
    Fn: Callable
    theta: float
    a1_value: float
    a2_value: float = 0.0
    is_odd: bool = False

    @property
    def odd(self):
        return self.is_odd

    def f(self, r, s):
        return self.fn(np.asarray(s, dtype=float))

    def F(self, r, s):
        return self.Fn(np.asarray(s, dtype=float))

    @property
    def a1(self):
        return self.a1_value

    @property
    def a2(self):
        return self.a2_value

    def to_dict(self):
        return {"family": "tabulated", "theta": self.theta}


# ------------------------------------------------------------- truncation

def truncate_branch(nl: Nonlinearity, branch: str, R: float) -> Callable:
    """Return the branch-truncated ``f^+``, ``f^-`` or ``f_hat`` as ``(r, s) -> array``.

    Inside the admissible range the original ``f`` is used; outside it a
    linear ramp brings the value to zero over a unit interval.
    """
    if branch not in BRANCHES:
        raise ValueError(f"unknown branch {branch!r}")

    def trunc(r, s):
        s = np.asarray(s, dtype=float)
        r = np.asarray(r, dtype=float)
        fR = nl.f(r, np.full_like(s, R))
        fmR = nl.f(r, np.full_like(s, -R))
        core = nl.f(r, np.clip(s, -R, R))
        up = np.where(s <= R, core, np.where(s < R + 1, -fR * (s - R - 1), 0.0))
        down = np.where(s >= -R, core, np.where(s > -R - 1, fmR * (s + R + 1), 0.0))
        out = np.where(s >= 0, up, down)
        if branch == "positive":
            out = np.where(s < 0, 0.0, out)
        elif branch == "negative":
            out = np.where(s > 0, 0.0, out)
        return out

    return trunc


def truncate_primitive(nl: Nonlinearity, branch: str, R: float) -> Callable:
    """Primitive in s of :func:`truncate_branch`, vanishing at s = 0."""
    if branch not in BRANCHES:
        raise ValueError(f"unknown branch {branch!r}")

    def prim(r, s):
        s = np.asarray(s, dtype=float)
        r = np.asarray(r, dtype=float)
        FR = nl.F(r, np.full_like(s, R))
        FmR = nl.F(r, np.full_like(s, -R))
        fR = nl.f(r, np.full_like(s, R))
        fmR = nl.f(r, np.full_like(s, -R))
        core = nl.F(r, np.clip(s, -R, R))
        dp = np.clip(s - R, 0.0, 1.0)
        dm = np.clip(-R - s, 0.0, 1.0)
        up = np.where(s <= R, core, FR + fR * (dp - 0.5 * dp**2))
        down = np.where(s >= -R, core, FmR - fmR * (dm - 0.5 * dm**2))
        out = np.where(s >= 0, up, down)
        if branch == "positive":
            out = np.where(s < 0, 0.0, out)
        elif branch == "negative":
            out = np.where(s > 0, 0.0, out)
        return out

    return prim


# ----------------------------------------------------------- gradient term

@dataclass(frozen=True)
class GradientTermSpec:
    """A nonlinearity ``g(r, s, xi)`` that also depends on ``xi = |u'|``.

    ``L1`` and ``L2`` are the declared Lipschitz constants in ``s`` (on
    ``|s| <= R``) and in ``xi``; ``theta``, ``a1``, ``a2`` give the lower
    bound ``G(r, s, xi) >= a1 |s|^theta - a2``.
    """

    func: Callable
    L1: float
    L2: float
    theta: float
    a1: float
    a2: float = 0.0
    primitive: Optional[Callable] = None
    odd: bool = False

    def g(self, r, s, xi):
        return np.asarray(self.func(r, s, xi), dtype=float)

    def G(self, r, s, xi):
        if self.primitive is not None:
            return np.asarray(self.primitive(r, s, xi), dtype=float)
        s = np.asarray(s, dtype=float)
        shape = np.broadcast_shapes(np.shape(r), s.shape, np.shape(xi))
        s = np.broadcast_to(s, shape)
        r = np.broadcast_to(np.asarray(r, dtype=float), shape)
        xi = np.broadcast_to(np.asarray(xi, dtype=float), shape)
        t = 0.5 * (_GL_X + 1.0)
        vals = self.g(r[..., None], s[..., None] * t, xi[..., None])
        return 0.5 * s * np.sum(_GL_W * vals, axis=-1)

    def to_dict(self):
        return {"family": "custom", "L1": self.L1, "L2": self.L2,
                "theta": self.theta, "a1": self.a1, "a2": self.a2}


@dataclass(frozen=True)
class PowerGradientTerm(GradientTermSpec):
    """``g(r, s, xi) = a |s|^(theta-2) s (1 + eta xi)`` with exact constants."""

    a: float = 0.0
    eta: float = 0.0
    R: float = 1.0

    @classmethod
    def build(cls, a: float, theta: float, eta: float, R: float) -> "PowerGradientTerm":
        if eta <= -1:
            raise ValueError("eta must exceed -1 so that s g > 0")
        hi = max(1.0, 1.0 + eta)
        lo = min(1.0, 1.0 + eta)
        L1 = a * (theta - 1) * R ** (theta - 2) * hi
        L2 = a * R ** (theta - 1) * abs(eta)

        def g(r, s, xi):
            s = np.asarray(s, dtype=float)
            return a * np.abs(s) ** (theta - 1) * np.sign(s) * (1 + eta * np.asarray(xi))

        def G(r, s, xi):
            s = np.asarray(s, dtype=float)
            return a / theta * np.abs(s) ** theta * (1 + eta * np.asarray(xi))

        return cls(func=g, L1=L1, L2=L2, theta=theta, a1=a * lo / theta, a2=0.0,
                   primitive=G, odd=True, a=a, eta=eta, R=R)

    def to_dict(self):
        return {"family": "power", "a": self.a, "theta": self.theta,
                "eta": self.eta, "L1": self.L1, "L2": self.L2}


# ----------------------------------------------------------------- problem

@dataclass(frozen=True)
class ProblemSpec:
    """Full problem description.

    Parameters
    ----------
    N, R : dimension and radius.
    lam : coefficient of the concave term.
    q : concave exponent in (1, 2).
    weight_b : weight object with ``bounds`` ``(b0, b1)``.
    nonlinearity : superlinear term.
    branch : "positive", "negative" or "full".
    gradient_term : optional gradient-dependent term; when present the
        variational solvers act on a frozen version of it.
    """

    N: int
    R: float
    lam: float
    q: float
    nonlinearity: Nonlinearity
    weight_b: object = field(default_factory=ConstantWeight)
    branch: str = "positive"
    gradient_term: Optional[GradientTermSpec] = None

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 3:
            raise ValueError("N must be an integer >= 3")
        if not self.R > 0:
            raise ValueError("R must be positive")
        if not 1 < self.q < 2:
            raise ValueError(f"q must lie in (1, 2), got {self.q}")
        if not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")
        if self.branch not in BRANCHES:
            raise ValueError(f"branch must be one of {BRANCHES}")
        b0, b1 = self.weight_b.bounds
        if not 0 < b0 <= b1:
            raise ValueError("weight bounds must satisfy 0 < b0 <= b1")

    def with_branch(self, branch: str) -> "ProblemSpec":
        return dataclasses.replace(self, branch=branch)

    def with_lambda(self, lam: float) -> "ProblemSpec":
        return dataclasses.replace(self, lam=float(lam))

    def with_nonlinearity(self, nl: Nonlinearity) -> "ProblemSpec":
        return dataclasses.replace(self, nonlinearity=nl)

    def check_weight(self, r) -> bool:
        b0, b1 = self.weight_b.bounds
        vals = self.weight_b(r)
        tol = 1e-12 * max(1.0, abs(b1))
        return bool(np.all(vals >= b0 - tol) and np.all(vals <= b1 + tol))

    def check_nonlinearity(self, samples: int = 201) -> dict:
        """Sampled sign condition ``s f(r, s) > 0`` and ``f(r, s)/s -> 0``."""
        r = np.linspace(0.0, self.R, 11)[:, None]
        s = np.concatenate([-np.geomspace(self.R, 1e-6 * self.R, samples // 2),
                            np.geomspace(1e-6 * self.R, self.R, samples // 2)])
        vals = self.nonlinearity.f(r, s[None, :])
        sign_ok = bool(np.all(s * vals > 0))
        small = np.abs(self.nonlinearity.f(r, np.array([1e-8, -1e-8]) * self.R) / (1e-8 * self.R))
        return {"sign_ok": sign_ok, "origin_ratio": float(np.max(small)),
                "origin_ok": bool(np.max(small) < 1e-3)}

    def validate_seventh(self):
        """Symbolic checks needed before a seventh-solution search."""
        nl = self.nonlinearity
        if isinstance(nl, AsymmetricPower) and nl.a_plus != nl.a_minus and not nl.theta > 4:
            raise ValueError("asymmetric power needs theta > 4 for the seventh-solution search")

    def to_dict(self) -> dict:
        d = {"N": self.N, "R": self.R, "lambda": self.lam, "q": self.q,
             "weight_b": self.weight_b.to_dict(),
             "nonlinearity": self.nonlinearity.to_dict(), "branch": self.branch}
        if self.gradient_term is not None:
            d["gradient_term"] = self.gradient_term.to_dict()
        return d
