"""Certificates, oracle cross-validation and run reports."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .energy import DiscreteEnergy, EnergyBreakdown, SingularSlope, discretize
from .mesh import RadialMesh, SlopeField, reconstruct_values
from .problem import ProblemSpec

__all__ = [
    "SCHEMA_VERSION",
    "Tolerances",
    "CriticalPointCertificate",
    "certify",
    "distinct",
    "duplicate",
    "distinct_solutions",
    "dedupe",
    "cross_validate",
    "MatchTable",
    "RunReport",
    "profile_csv",
    "write_profile_csv",
    "to_jsonable",
]

SCHEMA_VERSION = "1.0"

CLASSIFICATIONS = ("global-min", "local-min", "mountain-pass", "seventh", "frozen", "none")


@dataclass(frozen=True)
class Tolerances:
    """All tolerances used by certificates and suites."""

    criticality: float = 1e-8
    sign: float = 1e-10
    monotone: float = 1e-8
    distinct_linf: float = 1e-4   # times R
    distinct_energy: float = 1e-8
    match_linf: float = 1e-2      # times R
    energy_margin: float = 1e-6
    ball: float = 1e-6
    singular: float = 1e-10

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class CriticalPointCertificate:
    """Everything known about one candidate solution."""

    classification: str
    branch: str
    slopes: SlopeField
    energy: EnergyBreakdown
    criticality_residual: float
    weak_residual: Optional[float]
    sup_slope: float
    eps_margin: float
    sign_ok: bool
    monotone_ok: bool
    nontrivial: bool
    checks: dict = field(default_factory=dict)
    accepted: bool = False
    thresholds: Optional[dict] = None
    iterations: int = 0
    converged: bool = True
    name: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def mesh(self) -> RadialMesh:
        return self.slopes.mesh

    @property
    def u(self) -> np.ndarray:
        return reconstruct_values(self.slopes.v, self.mesh.h)

    @property
    def total(self) -> float:
        return self.energy.total

    @property
    def h_norm(self) -> float:
        return float(math.sqrt(np.sum(self.mesh.cell_weights * self.slopes.v ** 2)))

    def summary(self) -> dict:
        u = self.u
        return {
            "name": self.name,
            "classification": self.classification,
            "branch": self.branch,
            "accepted": self.accepted,
            "energy": self.energy.to_dict(),
            "criticality_residual": self.criticality_residual,
            "weak_residual": self.weak_residual,
            "sup_slope": self.sup_slope,
            "eps_margin": self.eps_margin,
            "sign_ok": self.sign_ok,
            "monotone_ok": self.monotone_ok,
            "nontrivial": self.nontrivial,
            "h_norm": self.h_norm,
            "u0": float(u[0]),
            "sup_u": float(np.max(np.abs(u))),
            "sign_changes": int(np.count_nonzero(np.diff(np.sign(u[:-1])) != 0)),
            "iterations": self.iterations,
            "converged": self.converged,
            "checks": self.checks,
            "extra": self.extra,
        }


def _reference_energy(de: DiscreteEnergy, branch: str) -> float:
    M = de.mesh.M
    if branch == "positive":
        return float(de.value(-np.ones(M)))
    if branch == "negative":
        return float(de.value(np.ones(M)))
    return float(min(de.value(-np.ones(M)), de.value(np.ones(M))))


def certify(v: SlopeField, p: ProblemSpec, classification: str,
            thresholds: Optional[dict] = None, tol: Tolerances = Tolerances(),
            de: Optional[DiscreteEnergy] = None, name: str = "") -> CriticalPointCertificate:
    """Evaluate every check for a candidate; failures are recorded, not raised.

    Parameters
    ----------
    v : SlopeField
    p : ProblemSpec
        The branch stored in ``p`` selects the functional.
    classification : str
        One of "global-min", "local-min", "mountain-pass", "seventh",
        "frozen" or "none".
    thresholds : dict, optional
        A ``ThresholdReport.to_dict()``; enables the radius and floor checks.
    de : DiscreteEnergy, optional
        Energy to use instead of the one derived from ``p`` (frozen problems).
    """
    if classification not in CLASSIFICATIONS:
        raise ValueError(f"unknown classification {classification!r}")
    mesh = v.mesh
    de = de or discretize(p, mesh)
    branch = de.branch
    arr = v.v
    br = de.breakdown(arr)
    res = float(de.residual(arr))
    try:
        weak = float(de.weak_residual(arr))
    except SingularSlope:
        weak = None
    sup = v.sup
    u = de.profile(arr)
    R = p.R
    if branch == "positive":
        sign_ok = bool(np.min(u) >= -tol.sign)
        mono = bool(np.max(arr) <= tol.monotone)
    elif branch == "negative":
        sign_ok = bool(np.max(u) <= tol.sign)
        mono = bool(np.min(arr) >= -tol.monotone)
    else:
        sign_ok = True
        mono = bool(np.max(arr) <= tol.monotone or np.min(arr) >= -tol.monotone)
    nontrivial = bool(np.max(np.abs(u)) > tol.distinct_linf * R)
    checks = {
        "critical": {"ok": res <= tol.criticality, "value": res, "tol": tol.criticality},
        "nontrivial": {"ok": nontrivial, "value": float(np.max(np.abs(u)))},
        "inside_cone": {"ok": sup < 1.0, "value": sup, "eps": 1.0 - sup},
    }
    E = br.total
    RN = R ** p.N
    if classification == "global-min":
        ref = _reference_energy(de, branch)
        checks["below_reference"] = {"ok": E <= ref + 1e-12 * max(1.0, abs(ref)),
                                     "value": E, "reference": ref}
        checks["below_minus_RN"] = {"ok": E <= -RN, "value": E, "bound": -RN}
    elif classification == "local-min":
        checks["energy_window"] = {"ok": -RN < E < 0, "value": E}
        if thresholds is not None:
            rm = thresholds["rho_minus"]
            nrm = float(math.sqrt(np.sum(mesh.cell_weights * arr**2)))
            checks["inside_rho_minus"] = {"ok": nrm <= rm + tol.ball, "value": nrm, "bound": rm}
    elif classification == "mountain-pass":
        if thresholds is not None:
            fl = thresholds["mp_floor"]
            checks["above_floor"] = {"ok": E >= fl - tol.criticality, "value": E, "floor": fl}
        else:
            checks["positive_level"] = {"ok": E > 0, "value": E}
    elif classification == "seventh":
        checks["negative_level"] = {"ok": E < 0, "value": E}
    if branch != "full" and classification in ("global-min", "local-min", "mountain-pass"):
        checks["sign"] = {"ok": sign_ok}
        checks["monotone"] = {"ok": mono}
    accepted = classification != "none" and all(c["ok"] for c in checks.values())
    return CriticalPointCertificate(
        classification=classification, branch=branch, slopes=v, energy=br,
        criticality_residual=res, weak_residual=weak, sup_slope=sup,
        eps_margin=1.0 - sup, sign_ok=sign_ok, monotone_ok=mono,
        nontrivial=nontrivial, checks=checks, accepted=bool(accepted),
        thresholds=thresholds, name=name)


def distinct(a: CriticalPointCertificate, b: CriticalPointCertificate,
             tol: Tolerances = Tolerances()) -> bool:
    """Two certificates are distinct when both profile and energy differ."""
    R = a.mesh.R
    du = float(np.max(np.abs(a.u - b.u)))
    dE = abs(a.total - b.total)
    return du > tol.distinct_linf * R and dE > tol.distinct_energy


def distinct_solutions(a: CriticalPointCertificate, b: CriticalPointCertificate,
                       tol: Tolerances = Tolerances()) -> bool:
    """Distinctness for counting solutions across branches.

    A positive and a negative certificate differ by sign alone, so only the
    profile gap is tested; their energies may coincide (mirror images).
    Certificates on the same branch use :func:`distinct`.
    """
    if {a.branch, b.branch} == {"positive", "negative"}:
        return float(np.max(np.abs(a.u - b.u))) > tol.distinct_linf * a.mesh.R
    return distinct(a, b, tol)


def duplicate(a: CriticalPointCertificate, b: CriticalPointCertificate,
              tol: Tolerances = Tolerances()) -> bool:
    """Both the profile gap and the energy gap are below the thresholds.

    Mirror images share their energy but are not duplicates.
    """
    R = a.mesh.R
    du = float(np.max(np.abs(a.u - b.u)))
    dE = abs(a.total - b.total)
    return du <= tol.distinct_linf * R and dE <= tol.distinct_energy


def dedupe(certs, tol: Tolerances = Tolerances()):
    out = []
    for c in certs:
        if not any(duplicate(c, d, tol) for d in out):
            out.append(c)
    return out


@dataclass
class MatchTable:
    matches: list
    unmatched_certificates: list
    unmatched_roots: list

    def to_dict(self):
        return {"matches": self.matches,
                "unmatched_certificates": self.unmatched_certificates,
                "unmatched_roots": self.unmatched_roots}


def cross_validate(certs, roots, tol_linf: float | None = None,
                   tol: Tolerances = Tolerances()) -> MatchTable:
    """Greedy minimal-distance matching of certificates to oracle roots.

    ``roots`` is a list of objects with attributes ``s`` and ``u_mesh``
    (profile sampled at the certificate mesh nodes).  Certificates closer
    than the distinctness thresholds are collapsed first.
    """
    certs = dedupe(list(certs), tol)
    roots = list(roots)
    if certs:
        R = certs[0].mesh.R
    elif roots:
        R = float(roots[0].R)
    else:
        R = 1.0
    tol_linf = tol.match_linf * R if tol_linf is None else tol_linf
    pairs = []
    for i, c in enumerate(certs):
        for j, rt in enumerate(roots):
            d = float(np.max(np.abs(c.u - rt.u_mesh)))
            pairs.append((d, i, j))
    pairs.sort()
    used_c, used_r, matches = set(), set(), []
    for d, i, j in pairs:
        if i in used_c or j in used_r or d > tol_linf:
            continue
        used_c.add(i)
        used_r.add(j)
        matches.append({"certificate": certs[i].name or i, "root": float(roots[j].s),
                        "linf": d})
    unc = [certs[i].name or i for i in range(len(certs)) if i not in used_c]
    unr = [float(roots[j].s) for j in range(len(roots)) if j not in used_r]
    return MatchTable(matches, unc, unr)


def node_derivative(mesh: RadialMesh, v) -> np.ndarray:
    """Nodal derivative: mean of the adjacent cell slopes (one-sided at ends)."""
    v = np.asarray(v, dtype=float)
    du = np.empty(mesh.M + 1)
    du[0] = v[0]
    du[-1] = v[-1]
    du[1:-1] = 0.5 * (v[:-1] + v[1:])
    return du


def profile_csv(mesh: RadialMesh, u, du) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["r", "u", "du"])
    for a, b, c in zip(mesh.nodes, u, du):
        wr.writerow([f"{a:.17g}", f"{b:.17g}", f"{c:.17g}"])
    return buf.getvalue()


def write_profile_csv(path, cert: CriticalPointCertificate):
    with open(path, "w") as fh:
        fh.write(profile_csv(cert.mesh, cert.u, node_derivative(cert.mesh, cert.slopes.v)))


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


@dataclass
class RunReport:
    """Self-contained record of one run."""

    problem: dict
    config: dict
    thresholds: Optional[dict] = None
    certificates: list = field(default_factory=list)
    oracle: Optional[dict] = None
    matching: Optional[dict] = None
    suites: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    mesh: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def add_suite(self, name: str, ok: bool, **details):
        self.suites[name] = {"ok": bool(ok), **details}

    @property
    def ok(self) -> bool:
        return all(s["ok"] for s in self.suites.values())

    def to_dict(self, deterministic: bool = False) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "problem": self.problem,
            "config": self.config,
            "mesh": self.mesh,
            "seeds": self.seeds,
            "tolerances": self.tolerances,
            "thresholds": self.thresholds,
            "certificates": self.certificates,
            "oracle": self.oracle,
            "matching": self.matching,
            "suites": self.suites,
            "ok": self.ok,
            "notes": self.notes,
        }
        if not deterministic:
            d["timings"] = self.timings
        return to_jsonable(d)

    def dumps(self, deterministic: bool = False) -> str:
        return json.dumps(self.to_dict(deterministic), indent=2, sort_keys=True)
