"""Command-line front end.

Every subcommand reads a configuration, runs its part of the pipeline and
writes ``<out>/report.json`` together with profile CSVs.  Exit codes: 0 when
every suite passes, 1 when some suite fails, 2 on configuration errors.
"""
from __future__ import annotations

import argparse
import dataclasses
import itertools
import json
import logging
import sys
import time
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .grad_iteration import IterOptions, iterate
from .mesh import SlopeField
from .minimizers import SolveOptions, minimize, minimize_in_ball
from .mountain_pass import (MPOptions, bisect_lambda_star3, find_seventh, mountain_pass,
                            sweep_seventh)
from .problem import PowerGradientTerm, PurePower
from .shooting import default_grid, scan_and_count
from .thresholds import compute_thresholds, estimate_embedding_constant, default_alpha
from .verify import (RunReport, certify, cross_validate, distinct, distinct_solutions,
                     write_profile_csv)

__all__ = ["main", "build_parser", "Run", "COMMANDS"]

log = logging.getLogger(__name__)

SIGN = {"positive": "+", "negative": "-"}


def _fname(name: str) -> str:
    return name.replace("+", "plus").replace("-", "minus")


class Run:
    """State shared by the pipeline stages of one invocation."""

    def __init__(self, cfg: RunConfig, out: Path, deterministic: bool = False):
        self.cfg = cfg
        self.out = Path(out)
        self.deterministic = deterministic
        self.p = cfg.problem()
        self.mesh = cfg.mesh()
        self.tol = cfg.tolerances
        s = cfg.data["solver"]
        self.seed = int(s["seed"])
        self.solve_opts = SolveOptions(max_iter=int(s["max_iter"]), random_starts=int(s["random_starts"]),
                                       seed=self.seed, tol=self.tol.criticality)
        self.mp_opts = MPOptions(nodes=int(s["mp_nodes"]), tol=self.tol.criticality)
        self.seventh_opts = MPOptions(nodes=int(s["mp_nodes"]), string_tau=1e-2,
                                      tol=self.tol.criticality)
        self.report = RunReport(problem=self.p.to_dict(), config=cfg.to_dict(),
                                mesh=self.mesh.describe(), seeds={"seed": self.seed},
                                tolerances=self.tol.to_dict())
        self.certs = {}
        self._constants = None
        self.thr = None

    # -- helpers
    def timed(self, key: str, fn: Callable, *args, **kw):
        t = time.perf_counter()
        try:
            return fn(*args, **kw)
        finally:
            self.report.timings[key] = time.perf_counter() - t

    def guard(self, key: str, fn: Callable, *args, **kw):
        """Run a stage; an exception becomes a failed suite, not a crash."""
        try:
            return self.timed(key, fn, *args, **kw)
        except (ConfigError, KeyboardInterrupt):
            raise
        except Exception as exc:
            log.error("%s failed: %s", key, exc)
            witness = getattr(exc, "certificate", None) or getattr(exc, "best", None)
            detail = {"error": f"{type(exc).__name__}: {exc}"}
            if witness is not None and hasattr(witness, "summary"):
                detail["witness"] = witness.summary()
            self.report.add_suite(f"stage:{key}", False, **detail)
            return None

    def constants(self):
        if self._constants is None:
            alpha = self.cfg.data["solver"]["alpha"]
            alpha = default_alpha(self.p.N) if alpha is None else float(alpha)
            m = self.mesh
            self._constants = {
                "C2": estimate_embedding_constant(m, 2.0),
                "Cq": estimate_embedding_constant(m, self.p.q, seed=self.seed),
                "Calpha": estimate_embedding_constant(m, alpha, seed=self.seed),
            }
        return self._constants

    def thresholds_for(self, p):
        alpha = self.cfg.data["solver"]["alpha"]
        return compute_thresholds(p, self.mesh, alpha=alpha, constants=self.constants(),
                                  seed=self.seed).to_dict()

    def add_cert(self, cert):
        if cert is None:
            return None
        self.certs[cert.name] = cert
        self.report.certificates.append(cert.summary())
        d = self.out / "profiles"
        d.mkdir(parents=True, exist_ok=True)
        write_profile_csv(d / f"{_fname(cert.name)}.csv", cert)
        return cert

    def finish(self) -> int:
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "report.json").write_text(self.report.dumps(self.deterministic) + "\n")
        return 0 if self.report.ok else 1

    # -- stages
    def stage_thresholds(self):
        self.thr = self.timed("thresholds", self.thresholds_for, self.p)
        self.report.thresholds = self.thr
        lam = self.p.lam
        self.report.add_suite("superlinearity", bool(self.thr["superlinearity_ok"]),
                              lhs=self.thr["superlinearity_lhs"])
        self.report.add_suite("lambda_range", bool(0 < lam < self.thr["lambda_star2"]),
                              value=lam, bound=self.thr["lambda_star2"])
        return self.thr

    def stage_minimize(self):
        for br in ("positive", "negative"):
            c = self.guard(f"u_{SIGN[br]}", minimize, self.p, self.mesh, br, self.solve_opts,
                           self.thr, self.tol)
            self.add_cert(c)

    def stage_local(self):
        for br in ("positive", "negative"):
            c = self.guard(f"v_{SIGN[br]}", minimize_in_ball, self.p, self.mesh,
                           self.thr["rho_plus"], br, self.solve_opts, self.thr, self.tol)
            self.add_cert(c)

    def stage_mountain_pass(self):
        for br in ("positive", "negative"):
            u = self.certs.get(f"u_{SIGN[br]}")
            if u is None:
                u = self.add_cert(self.guard(f"u_{SIGN[br]}", minimize, self.p, self.mesh, br,
                                             self.solve_opts, self.thr, self.tol))
            if u is None:
                continue
            c = self.guard(f"w_{SIGN[br]}", mountain_pass, self.p, self.mesh, br,
                           endpoint_b=u.slopes, thresholds=self.thr, opts=self.mp_opts,
                           tol=self.tol)
            self.add_cert(c)

    def stage_seventh(self):
        vp, vm = self.certs.get("v_+"), self.certs.get("v_-")
        if vp is None or vm is None:
            self.stage_local()
            vp, vm = self.certs.get("v_+"), self.certs.get("v_-")
        if vp is None or vm is None:
            self.report.add_suite("seventh", False, error="local minima unavailable")
            return
        c = self.guard("seventh", find_seventh, self.p, self.mesh, vp.slopes, vm.slopes,
                       self.thr["rho_plus"], self.thr["rho_minus"], self.thr, self.seventh_opts,
                       self.tol)
        self.add_cert(c)
        if c is not None:
            self.report.add_suite("seventh", bool(c.accepted and all(c.extra["distinct_from"].values())),
                                  energy=c.total, residual=c.criticality_residual,
                                  distinct_from=c.extra["distinct_from"],
                                  path_max=c.extra["initial_path_max"])

    def stage_oracle(self):
        s = self.cfg.data["solver"]
        grid = default_grid(self.p.R, int(s["scan_points"]))
        scans = {}
        for br in ("positive", "negative"):
            sc = self.guard(f"scan_{br}", scan_and_count, self.p, br, grid, True, self.mesh,
                            1e-10, int(s["scan_workers"]))
            if sc is not None:
                scans[br] = sc
        self.out.mkdir(parents=True, exist_ok=True)
        with open(self.out / "scan.csv", "w") as fh:
            fh.write("branch,s,T,touched_zero,step_failure\n")
            for br, sc in scans.items():
                for line in sc.to_csv().splitlines()[1:]:
                    fh.write(f"{br},{line}\n")
        self.report.oracle = {br: sc.to_dict() for br, sc in scans.items()}
        for br, sc in scans.items():
            self.report.add_suite(f"oracle_{br}", len(sc.roots) >= 3, roots=len(sc.roots))
        return scans

    def stage_cross_validate(self, scans):
        one_signed = [c for c in self.certs.values() if c.branch in ("positive", "negative")]
        roots = [r for sc in scans.values() for r in sc.roots]
        table = cross_validate(one_signed, roots, tol=self.tol)
        self.report.matching = table.to_dict()
        self.report.add_suite("cross_validation", not table.unmatched_certificates,
                              matched=len(table.matches),
                              unmatched_certificates=table.unmatched_certificates,
                              unmatched_roots=table.unmatched_roots)

    def suites_solutions(self):
        tol = self.tol
        RN = self.p.R ** self.p.N
        for br in ("positive", "negative"):
            sg = SIGN[br]
            names = [f"{k}_{sg}" for k in ("u", "v", "w")]
            cs = [self.certs.get(n) for n in names]
            if any(c is None for c in cs):
                self.report.add_suite(f"energy_ordering_{br}", False,
                                      missing=[n for n, c in zip(names, cs) if c is None])
                continue
            u, v, w = cs
            m = {"w_above_0": w.total - 0.0, "0_above_v": 0.0 - v.total,
                 "v_above_minus_RN": v.total + RN, "minus_RN_above_u": -RN - u.total}
            self.report.add_suite(f"energy_ordering_{br}",
                                  all(x >= tol.energy_margin for x in m.values()), margins=m,
                                  required=tol.energy_margin)
            pairs = {f"{a.name}/{b.name}": distinct(a, b, tol) for a, b in itertools.combinations(cs, 2)}
            self.report.add_suite(f"distinct_{br}", all(pairs.values()), pairs=pairs)
        one = [c for c in self.certs.values() if c.branch in ("positive", "negative")]
        self.report.add_suite("certificates_accepted", all(c.accepted for c in self.certs.values()),
                              failed=[c.name for c in self.certs.values() if not c.accepted])
        self.report.add_suite(
            "sign_and_monotone", all(c.sign_ok and c.monotone_ok and c.eps_margin > 0 for c in one),
            eps={c.name: c.eps_margin for c in one},
            failed=[c.name for c in one if not (c.sign_ok and c.monotone_ok and c.eps_margin > 0)])


# ------------------------------------------------------------------ commands

def cmd_thresholds(run: Run, args):
    run.stage_thresholds()


def cmd_minimize(run: Run, args):
    run.stage_thresholds()
    run.stage_minimize()
    run.stage_local()
    for c in run.certs.values():
        run.report.add_suite(f"accepted:{c.name}", c.accepted)


def cmd_mountain_pass(run: Run, args):
    run.stage_thresholds()
    run.stage_mountain_pass()
    for c in run.certs.values():
        run.report.add_suite(f"accepted:{c.name}", c.accepted)


def cmd_seventh(run: Run, args):
    run.stage_thresholds()
    run.stage_local()
    run.stage_seventh()


def cmd_shoot(run: Run, args):
    run.stage_oracle()


def cmd_solve_all(run: Run, args):
    run.stage_thresholds()
    run.stage_minimize()
    run.stage_local()
    run.stage_mountain_pass()
    run.stage_seventh()
    scans = run.stage_oracle()
    run.stage_cross_validate(scans)
    run.suites_solutions()


def _gradient_problem(run: Run):
    p = run.p
    if p.gradient_term is not None:
        return p
    eta = run.cfg.data["solver"]["iteration"]["eta"]
    if eta is None or not isinstance(p.nonlinearity, PurePower):
        raise ConfigError("missing required key problem.gradient_term", "problem.gradient_term")
    nl = p.nonlinearity
    gt = PowerGradientTerm.build(nl.a, nl.theta, float(eta), p.R)
    return dataclasses.replace(p, gradient_term=gt)


def cmd_grad_iter(run: Run, args):
    p = _gradient_problem(run)
    run.report.problem = p.to_dict()
    thr = run.timed("thresholds", run.thresholds_for, p)
    run.report.thresholds = thr
    lip = thr["lip_ok"]
    cap = min(thr["lambda_bar"], thr["lambda_star"])
    run.report.add_suite("gradient_conditions", bool(lip["ok"] and p.lam < cap),
                         conditions=lip, lam=p.lam, lambda_cap=cap)
    it = run.cfg.data["solver"]["iteration"]
    opts = IterOptions(max_n=int(it["max_n"]), tol=float(it["tol"]),
                       solve=SolveOptions(tol=float(it["tol"]) / 10, seed=run.seed,
                                          random_starts=run.solve_opts.random_starts),
                       mp=MPOptions(nodes=run.mp_opts.nodes, tol=float(it["tol"]) / 10))
    traces = {}
    finals = []
    for mode in it["modes"]:
        for br in ("positive", "negative"):
            key = f"{mode}:{br}"
            tr = run.guard(key, iterate, p, run.mesh, mode, None, br, opts, thr, run.tol, False)
            if tr is None:
                continue
            traces[key] = tr.to_dict()
            k = thr["k_predicted"]
            tail = tr.tail_ratios(opts.burn_in)
            ok_ratio = bool(k is not None and all(r <= k + opts.slack for r in tail))
            run.report.add_suite(f"contraction:{key}", ok_ratio and tr.converged,
                                 k_hat=tr.k_hat, k_predicted=k, converged=tr.converged)
            run.report.add_suite(f"weak_residual:{key}", tr.final_weak_residual is not None
                                 and tr.final_weak_residual <= 1e-3, value=tr.final_weak_residual)
            if tr.final is not None:
                tr.final.name = f"{'u' if mode == 'global-min' else 'v'}_grad_{SIGN[br]}"
                run.add_cert(tr.final)
                finals.append(tr.final)
    run.report.oracle = {"iteration": traces}
    pairs = {f"{a.name}/{b.name}": distinct_solutions(a, b, run.tol)
             for a, b in itertools.combinations(finals, 2)}
    run.report.add_suite("four_distinct", len(finals) == 4 and all(pairs.values())
                         and all(c.nontrivial for c in finals), count=len(finals), pairs=pairs)


def cmd_sweep_lambda(run: Run, args):
    run.stage_thresholds()
    s = run.cfg.data["solver"]
    top = run.thr["lambda_star2"]
    lams = [float(f) * top for f in s["sweep_factors"]]
    sw = run.timed("sweep", sweep_seventh, run.p, run.mesh, lams, run.thresholds_for,
                   run.seventh_opts, run.tol)
    best = sw.lambda_star3
    fails = [l for l, r in zip(sw.lambdas, sw.results) if not r["ok"] and (best is None or l > best)]
    out = sw.to_dict()
    if best is not None and fails and int(s["sweep_bisect_iters"]) > 0:
        bis = run.timed("bisect", bisect_lambda_star3, run.p, run.mesh, best, min(fails),
                        run.thresholds_for, int(s["sweep_bisect_iters"]), run.seventh_opts, run.tol)
        out["bisection"] = bis.to_dict()
        best = bis.lambda_star3
    out["lambda_star3_empirical"] = best
    run.report.oracle = {"seventh_sweep": out}
    run.report.add_suite("seventh_found", best is not None, lambda_star3=best)


def cmd_verify(run: Run, args):
    """Re-certify the profiles written by an earlier run in ``--out``."""
    rep = run.out / "report.json"
    if not rep.exists():
        raise ConfigError(f"no report.json in {run.out}", "out")
    old = json.loads(rep.read_text())
    run.stage_thresholds()
    results = {}
    for c in old.get("certificates", []):
        name, cls, br = c["name"], c["classification"], c["branch"]
        path = run.out / "profiles" / f"{_fname(name)}.csv"
        if not path.exists():
            results[name] = {"ok": False, "error": "profile missing"}
            continue
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        u = data[:, 1]
        if len(u) != run.mesh.M + 1:
            results[name] = {"ok": False, "error": "mesh mismatch"}
            continue
        v = np.clip(np.diff(u) / run.mesh.h, -1.0, 1.0)
        q = run.p.with_branch(br)
        cert = certify(SlopeField(run.mesh, v), q, cls if q.gradient_term is None else "frozen",
                       run.thr, run.tol, name=name)
        results[name] = {"ok": cert.accepted, "residual": cert.criticality_residual,
                         "energy": cert.total}
        run.report.add_suite(f"reverify:{name}", cert.accepted,
                             residual=cert.criticality_residual)
    run.report.oracle = {"reverified": results}
    # verify writes its own report next to the original
    run.out = run.out / "verify"


COMMANDS = {
    "thresholds": cmd_thresholds,
    "minimize": cmd_minimize,
    "mountain-pass": cmd_mountain_pass,
    "seventh": cmd_seventh,
    "shoot": cmd_shoot,
    "solve-all": cmd_solve_all,
    "grad-iter": cmd_grad_iter,
    "verify": cmd_verify,
    "sweep-lambda": cmd_sweep_lambda,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lmradial",
                                 description="Radial solutions of the Lorentz-Minkowski mean curvature problem")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="YAML or JSON configuration")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--mesh-cells", type=int, default=None, help="override mesh.M")
    ap.add_argument("--seed", type=int, default=None, help="override solver.seed")
    ap.add_argument("--lambda", dest="lam", type=float, default=None, help="override problem.lambda")
    ap.add_argument("--deterministic", action="store_true",
                    help="omit timings so identical inputs give identical reports")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: Optional[list] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", "seed")
        cfg = cfg.with_overrides(args.mesh_cells, args.seed, args.lam)
        run = Run(cfg, Path(args.out), args.deterministic)
        COMMANDS[args.command](run, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    return run.finish()


if __name__ == "__main__":
    sys.exit(main())
