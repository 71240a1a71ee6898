"""``semigroup-lab`` command line front end.

Exit codes: 0 when no hard failure occurred, 1 on a hard failure (or on a
warning under ``--strict``), 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import coefficient_models as cm
from . import constants_lab as cl
from . import form_quadrature as fq
from . import semigroup_sim as ss
from ._parallel import thread_cap
from .config import TASKS, ConfigError, build_field, build_plan, build_weights, load, rationalize

SUBCOMMANDS = {
    "check-hypotheses": ("hypotheses",),
    "intervals": ("intervals",),
    "identity": ("identity",),
    "dissipativity": ("dissipativity",),
    "analyticity": ("analyticity",),
    "weighted": ("weighted",),
    "appendix-b": ("appendixB",),
    "evolve": ("evolve",),
    "all": None,
}

REPORT_VERSION = 1
# stand-in for a vanishing taming constant in the weighted estimate
SCRIPTC_FLOOR = 1e-6


def _clean(obj):
    """Make a structure JSON-safe with stable float text (nonfinite values become strings)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, complex):
        return [_clean(obj.real), _clean(obj.imag)]
    return obj


def _summary(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return {"count": 0}
    return {"count": int(v.size), "min": float(v.min()), "median": float(np.median(v)),
            "max": float(v.max())}


class Run:
    """State shared by the tasks of one invocation."""

    def __init__(self, cfg, seed, strict):
        self.cfg = cfg
        self.seed = seed
        self.strict = strict
        self.field = build_field(cfg, seed)
        self.plan = build_plan(cfg, self.field.d, seed)
        self.weights = build_weights(cfg)
        self.report = {"report_version": REPORT_VERSION, "seed": seed, "field": {
            "family": self.field.name, "d": self.field.d, "m": self.field.m,
            "metadata": {k: v for k, v in self.field.metadata.items() if v is not None}}}
        self.tasks = {}
        self.constants = {}
        self.margin_rows = []
        self.hard_failures = []
        self.warnings = []
        self.timing = {}
        self.quad = cfg.get("quadrature", {})

    # -- shared helpers -------------------------------------------------
    def scriptC(self):
        over = self.cfg.get("constants", {})
        if "scriptC" in over:
            return float(over["scriptC"])
        if "claimed_scriptC" in self.field.metadata:
            return float(self.field.metadata["claimed_scriptC"])
        return cm.empirical_scriptC(self.field, self.plan)

    def c0(self):
        over = self.cfg.get("constants", {})
        if "c0" in over:
            return float(over["c0"])
        if "claimed_c0" in self.field.metadata:
            return float(self.field.metadata["claimed_c0"])
        Q = self.field.eval_q(self.plan.points())
        from .matrix_forms import c0_batch
        return float(np.max(c0_batch(Q)))

    def scriptC_weighted(self):
        """Constant used by the weighted estimate; 0 is replaced by a tiny admissible value."""
        C = self.scriptC()
        return SCRIPTC_FLOOR if C == 0 else C

    def exponents(self, which="Jtilde"):
        exps = self.cfg.get("exponents", "auto")
        if exps != "auto":
            return [float(p) for p in exps]
        if which == "domain":
            iv = cl.domain_window(self.scriptC_weighted())
        else:
            rep = cl.dissipativity_intervals(self.scriptC())
            iv = rep.Jtilde if which == "Jtilde" else rep.cond_p_window
        if iv.empty:
            return []
        lo = max(float(iv.lo), 1.05)
        hi = min(float(iv.hi), 6.0)
        pts = {round(lo + f * (hi - lo), 12) for f in (0.1, 0.5, 0.9)} | {2.0}
        return sorted(p for p in pts if p in iv)

    def test_functions(self, n, complex_values, offset):
        rng = np.random.default_rng(self.seed + offset)
        widths = tuple(self.quad.get("widths", [0.2, 0.35]))
        return [fq.random_mixture(rng, self.field.d, self.field.m, n_terms=2,
                                  center_box=float(self.quad.get("center_box", 0.5)), widths=widths,
                                  kind=self.quad.get("kind", "gaussian"), complex_values=complex_values)
                for _ in range(n)]

    def grid_for(self, u, h=None):
        h = float(self.quad.get("h", 1 / 16)) if h is None else h
        return fq.QuadratureGrid.covering(u, h, rule=self.quad.get("rule", "midpoint"))

    def warn(self, msg):
        self.warnings.append(msg)

    # -- tasks ----------------------------------------------------------
    def task_hypotheses(self):
        rep = cm.certify_hypotheses(self.field, self.plan)
        out = rep.to_dict()
        try:
            cv = cm.estimate_cV(self.field, self.plan)
            out["c_V"] = {"value": cv.value, "unbounded": cv.unbounded, "witness": cv.witness}
            self.constants["c_V"] = cv.value
        except cm.PreconditionError as exc:
            out["c_V"] = {"error": str(exc)}
            self.hard_failures.append(f"hypotheses: {exc}")
        try:
            K = cm.estimate_K_logweight(self.field, cm.default_log_weight(), self.plan)
            out["K_logweight"] = K
            self.constants["K"] = K
        except cm.PreconditionError as exc:
            out["K_logweight"] = {"error": str(exc)}
            self.warn(f"log-weight rejected: {exc}")
        if self.weights is not None:
            try:
                pw = cm.certify_potential_weight(self.field, self.weights, self.plan)
                out["potential_weight"] = pw.to_dict()
                self.constants["v0_empirical"] = pw.constants["v0_empirical"]
                if not pw.passed:
                    self.hard_failures.append("potential weight conditions failed")
            except cm.PreconditionError as exc:
                out["potential_weight"] = {"error": str(exc)}
                self.hard_failures.append(f"potential weight: {exc}")
        if not rep.passed:
            bad = [k for k, s in rep.status.items() if s == "fail"]
            self.hard_failures.append(f"hypotheses failed: {', '.join(bad)}")
        for key in ("c0", "scriptC", "claimed_c0", "claimed_scriptC", "claimed_scriptC_alt"):
            if key in rep.constants:
                self.constants[key if key.startswith("claimed") else key + "_empirical"] = rep.constants[key]
        return out

    def task_intervals(self):
        C = rationalize(self.scriptC())
        rep = cl.dissipativity_intervals(C)
        out = rep.to_dict()
        self.constants["scriptC_used"] = float(C)
        ps = self.exponents("Jtilde")
        out["max_delta"] = {repr(p): dict(cl.max_delta_for(p, float(C))._asdict()) for p in ps}
        Cw = self.scriptC_weighted()
        if 0 < Cw < 0.5:
            c0 = self.c0()
            w = self.weights
            if w is not None:
                lam = {}
                for p in self.exponents("domain"):
                    try:
                        tl = cl.theta_lambda(cl.LambdaInputs(p, Cw, c0, w.gamma, w.C_gamma, w.v0))
                        lam[repr(p)] = dict(tl._asdict())
                    except ValueError as exc:
                        lam[repr(p)] = {"error": str(exc)}
                out["theta_lambda"] = lam
        return out

    def task_identity(self):
        n = int(self.quad.get("n_functions", 10))
        tol = float(self.quad.get("identity_tol", 1e-6))
        rows = []
        for i, u in enumerate(self.test_functions(n, True, 101)):
            for p in self.exponents("Jtilde"):
                g = self.grid_for(u)
                eps = fq.default_eps(u, g, p)
                r1 = fq.dissipation_identity_residual(self.field, u, p, eps, g)
                r2 = fq.dissipation_identity_residual(self.field, u, p, eps, self.grid_for(u, g.h / 2))
                rows.append({"function": i, "p": p, "residual": r1.residual, "residual_half_h": r2.residual,
                             "relative": r1.relative})
                self.margin_rows.append(("identity", i, p, r1.residual))
        res = [r["residual"] for r in rows]
        rel = [r["relative"] for r in rows]
        if rel and max(rel) > tol:
            self.hard_failures.append(f"identity residual blowup (relative {max(rel):.3g} > {tol:g})")
        return {"residual": _summary(res), "relative": _summary(rel), "cases": rows}

    def task_dissipativity(self):
        n = int(self.quad.get("n_functions", 10))
        tol = float(self.quad.get("margin_tol", 1e-6))
        C = self.scriptC()
        margins, rows = [], []
        for i, u in enumerate(self.test_functions(n, True, 202)):
            for p in self.exponents("Jtilde"):
                delta = cl.max_delta_for(p, C).delta
                delta = min(delta, 1.0)
                g = self.grid_for(u)
                eps = fq.default_eps(u, g, p)
                r = fq.dissipativity_margin(self.field, u, p, eps, delta, g, scriptC=C)
                margins.append(r.margin)
                rows.append({"function": i, "p": p, "delta": delta, "margin": r.margin,
                             "outside_theory": r.outside_theory})
                self.margin_rows.append(("dissipativity", i, p, r.margin))
        if margins and min(margins) < -tol:
            self.warn(f"dissipativity margin {min(margins):.3g} below -{tol:g}")
        return {"margin": _summary(margins), "cases": rows}

    def task_analyticity(self):
        n = int(self.quad.get("n_functions", 10))
        c0, C = self.c0(), self.scriptC()
        cv = self.constants.get("c_V")
        if cv is None:
            est = cm.estimate_cV(self.field, self.plan)
            cv = est.value
        ratios, rows = [], []
        for i, u in enumerate(self.test_functions(n, True, 303)):
            for p in self.exponents("cond"):
                g = self.grid_for(u)
                eps = fq.default_eps(u, g, p)
                r = fq.analyticity_ratio(self.field, u, p, eps, g, c0=c0, scriptC=C,
                                         c_V=None if not math.isfinite(cv) else cv)
                ratios.append(r.ratio)
                rows.append({"function": i, "p": p, "num": r.num, "den": r.den, "ratio": r.ratio,
                             "budget": r.budget})
                self.margin_rows.append(("analyticity", i, p, r.ratio))
                if r.budget.get("within") is False:
                    self.warn(f"sector budget exceeded for function {i}, p={p}")
        return {"ratio": _summary(ratios), "sup_ratio": max(ratios) if ratios else None, "cases": rows}

    def task_weighted(self):
        w = self.weights
        C, c0 = self.scriptC_weighted(), self.c0()
        if not 0 < C < 0.5:
            self.hard_failures.append(f"weighted estimate needs 0 < C < 1/2, got {C}")
            return {"error": "scriptC outside (0, 1/2)"}
        n = int(self.quad.get("n_functions", 10))
        tol = float(self.quad.get("margin_tol", 1e-6))
        rows, margins, ratios = [], [], []
        for p in self.exponents("domain"):
            try:
                tl = cl.theta_lambda(cl.LambdaInputs(p, C, c0, w.gamma, w.C_gamma, w.v0))
            except ValueError as exc:
                rows.append({"p": p, "error": str(exc)})
                continue
            if tl.Lambda <= 0:
                rows.append({"p": p, "Lambda": tl.Lambda, "skipped": "Lambda_p <= 0"})
                continue
            for i, u in enumerate(self.test_functions(n, False, 404)):
                g = self.grid_for(u)
                eps = fq.default_eps(u, g, p)
                a = fq.weighted_estimate_audit(self.field, w, u, p, eps, g, c0=c0, scriptC=C)
                margins.append(a.margin)
                if a.ratio is not None:
                    ratios.append(a.ratio)
                rows.append({"function": i, "p": p, "Lambda": tl.Lambda, "Theta": tl.Theta, **a.to_dict()})
                self.margin_rows.append(("weighted", i, p, a.margin))
        if margins and min(margins) < -tol:
            self.warn(f"weighted margin {min(margins):.3g} below -{tol:g}")
        return {"margin": _summary(margins), "vu_over_Au": _summary(ratios), "cases": rows}

    def task_appendixB(self):
        n = int(self.cfg.get("appendix_b", {}).get("instances", 20))
        rng = np.random.default_rng(self.seed + 505)
        rows = []
        for i in range(n):
            x = rng.uniform(0.05, 1.0, 4)
            y = rng.uniform(0.05, 1.0, 4)
            e1 = float(rng.uniform(1.0, 4.0))
            prob = cl.AppendixBProblem(x[0], y[0], x[1], y[1], x[2], y[2], x[3], y[3], e1)
            sol = cl.appendixB_solve(prob)
            num = cl.appendixB_numeric(prob, seed=self.seed + i)
            rel = abs(sol.sup - num) / max(1.0, abs(sol.sup))
            rows.append({"instance": i, "closed_form": sol.sup, "numeric": num, "relative_gap": rel})
            self.margin_rows.append(("appendixB", i, float("nan"), rel))
        gaps = [r["relative_gap"] for r in rows]
        if gaps and max(gaps) > 1e-4:
            self.warn(f"closed form and optimizer differ by {max(gaps):.3g}")
        out = {"relative_gap": _summary(gaps), "cases": rows}
        if self.weights is not None:
            C, c0, w = self.scriptC_weighted(), self.c0(), self.weights
            ps = self.exponents("domain") if 0 < C < 0.5 else []
            own = {}
            for p in ps:
                prob = cl.AppendixBProblem.from_constants(p, c0, C, w.gamma, w.C_gamma, w.v0)
                if prob.e1 <= 0:
                    continue
                sol = cl.appendixB_solve(prob, allow_degenerate=True)
                own[repr(p)] = {"sup": sol.sup, "eps": sol.eps.tolist(), "slack": sol.slack}
            out["configured"] = own
        return out

    def task_evolve(self):
        ev = self.cfg.get("evolve", {})
        d, m = self.field.d, self.field.m
        N = int(ev.get("N", 64 if d == 1 else 32))
        lo, hi = float(ev.get("lo", -3.0)), float(ev.get("hi", 3.0))
        grid = ss.SimGrid([lo] * d, [hi] * d, (N,) * d)
        op = ss.assemble(self.field, grid)
        rng = np.random.default_rng(self.seed + 606)
        width = float(ev.get("width", 0.4))
        amp = rng.standard_normal(m)
        u0_fn = fq.gaussian(np.zeros(d), width, amp)
        support = 9 * width
        if support * 1.3 > min(abs(lo), abs(hi)):
            self.warn("initial data support is within 30% of the truncation boundary")
        u0 = ss.sample_initial(u0_fn, grid)
        pl = ev.get("p_list", "auto")
        C = self.scriptC()
        window = cl.cond_p_window(C)
        if pl == "auto":
            ps = sorted({2.0} | {p for p in (1.8, 2.2) if p in window})
        else:
            ps = [float(p) for p in pl]
        conf = ss.EvolutionConfig(dt=float(ev.get("dt", 1e-3)), steps=int(ev.get("steps", 200)),
                                  scheme=ev.get("scheme", "implicit-euler"),
                                  audit_tol=float(ev.get("audit_tol", 1e-8)), p_list=tuple(ps))
        rep = ss.evolve_and_audit(op, u0, conf, window=window)
        self._trajectory = rep
        self._operator = op if ev.get("export_matrix", False) else None
        if rep.violations:
            self.warn(f"{len(rep.violations)} discrete contraction violations")
        out = rep.to_dict()
        out.update(grid=grid.to_dict(), scheme=conf.scheme, dt=conf.dt,
                   symmetry_residual=op.symmetry_residual(), assembly=op.flags)
        return out

    # -- driver ---------------------------------------------------------
    def execute(self, tasks):
        order = [t for t in TASKS if t in tasks]
        needs_constants = {"intervals", "dissipativity", "analyticity", "weighted", "evolve"}
        if "hypotheses" not in order and needs_constants & set(order):
            order.insert(0, "hypotheses")
        for t in order:
            start = time.perf_counter()
            try:
                out = getattr(self, f"task_{t}")()
                status = "ok"
            except (cm.PreconditionError, ValueError, ArithmeticError, ss.SolverError) as exc:
                out = {"error": f"{type(exc).__name__}: {exc}"}
                status = "failed"
                self.hard_failures.append(f"{t}: {exc}")
            self.tasks[t] = {"status": status, "result": out}
            self.timing[t] = time.perf_counter() - start
        self.report["tasks"] = self.tasks
        self.report["constants"] = self.constants
        self.report["hard_failures"] = self.hard_failures
        self.report["warnings"] = self.warnings

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.json", "w") as fh:
            json.dump(_clean(self.report), fh, indent=2, sort_keys=True, allow_nan=False)
            fh.write("\n")
        with open(out / "constants.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["name", "value"])
            for k in sorted(self.constants):
                w.writerow([k, repr(float(self.constants[k]))])
        with open(out / "margins.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["task", "case", "p", "value"])
            for row in self.margin_rows:
                w.writerow([row[0], row[1], repr(float(row[2])), repr(float(row[3]))])
        traj = getattr(self, "_trajectory", None)
        if traj is not None:
            ss.write_norm_table(traj, out / "norms.csv")
        op = getattr(self, "_operator", None)
        if op is not None:
            ss.write_matrix_market(op, out / "operator.mtx")
        with open(out / "timing.json", "w") as fh:
            json.dump({k: round(v, 6) for k, v in sorted(self.timing.items())}, fh, indent=2, sort_keys=True)
            fh.write("\n")


def build_parser():
    ap = argparse.ArgumentParser(prog="semigroup-lab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(SUBCOMMANDS))
    ap.add_argument("--config", required=True, help="YAML experiment file")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--strict", action="store_true", help="treat warnings as failures")
    ap.add_argument("--out", default=None, help="output directory (overrides config)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        thread_cap()
        cfg = load(args.config)
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        run = Run(cfg, seed, args.strict)
    except (ConfigError, ValueError) as exc:
        print(f"semigroup-lab: config error: {exc}", file=sys.stderr)
        return 2
    tasks = SUBCOMMANDS[args.command] or tuple(cfg.get("tasks", TASKS))
    run.execute(tasks)
    out_dir = args.out or cfg.get("output", "semigroup-lab-out")
    run.write(out_dir)
    for msg in run.warnings:
        print(f"warning: {msg}", file=sys.stderr)
    for msg in run.hard_failures:
        print(f"failure: {msg}", file=sys.stderr)
    failed = bool(run.hard_failures) or (args.strict and bool(run.warnings))
    print(f"semigroup-lab {args.command}: {'FAILED' if failed else 'ok'} "
          f"({len(run.hard_failures)} failures, {len(run.warnings)} warnings) -> {os.fspath(out_dir)}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
