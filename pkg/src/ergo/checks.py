"""Acceptance checks: one callable per criterion, shared by the CLI
``paper-checks`` command and the test suite.

Each check runs at the default rig (domain [-8, 8], 1601 nodes, CFL-auto
time step) with the tolerances pinned below, and returns a
:class:`CheckResult`; expensive intermediates (the per-entry value tables
on the three benchmark models) are computed once per
:class:`AcceptanceContext` and reused across checks.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from . import expr, longtime, mc, measures, pde
from .gfunc import GFunction, g_eval
from .model import GDiffusionModel, make_builtin

UNCERTAIN = GFunction(0.25, 1.0)
CLASSICAL = GFunction(1.0, 1.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    details: str


class Check(NamedTuple):
    name: str
    summary: str
    run: Callable[["AcceptanceContext"], CheckResult]


class _Failures:
    """Collects labelled failures and formats a verdict."""

    def __init__(self):
        self.items: List[str] = []

    def expect(self, ok: bool, label: str):
        if not ok:
            self.items.append(label)

    def close(self, value, target, tol, label) -> float:
        err = abs(value - target)
        self.expect(err <= tol, f"{label}: |{value:.5g} - {target:.5g}| = "
                                f"{err:.2e} > {tol:g}")
        return err

    def result(self, name: str, ok_details: str) -> CheckResult:
        if self.items:
            return CheckResult(name, False, "; ".join(self.items))
        return CheckResult(name, True, ok_details)


@dataclass
class AcceptanceContext:
    """Lazily computed shared state for the acceptance run."""

    grid: pde.Grid1D = pde.DEFAULT_GRID
    mc_paths: int = 100_000
    mc_dt: float = 1e-3
    seed: int = 20240

    @cached_property
    def dictionary(self):
        return measures.default_dictionary()

    @cached_property
    def gou(self) -> GDiffusionModel:
        return make_builtin("g_ou", [0.5], g=UNCERTAIN)

    @cached_property
    def gou_classical(self) -> GDiffusionModel:
        return make_builtin("g_ou", [0.5], g=CLASSICAL)

    @cached_property
    def dirac(self) -> GDiffusionModel:
        return make_builtin("dirac", g=UNCERTAIN)

    def _tables(self, model, methods) -> Dict[str, Tuple[longtime.InvariantResult,
                                                         longtime.ErgodicResult]]:
        out = {}
        for entry in self.dictionary:
            inv = longtime.invariant_value(model, entry.f, grid=self.grid,
                                           check_dissipativity=False)
            erg = longtime.ergodic_value(model, entry.f, grid=self.grid,
                                         methods=methods)
            out[entry.label] = (inv, erg)
        return out

    @cached_property
    def uncertain_table(self):
        return self._tables(self.gou, ("time_avg", "discount"))

    @cached_property
    def classical_table(self):
        return self._tables(self.gou_classical, ("time_avg",))

    @cached_property
    def dirac_table(self):
        return self._tables(self.dirac, ("time_avg",))

    @cached_property
    def solutions_t1(self) -> Dict[str, pde.PdeSolution]:
        """Horizon-1 solves on the benchmark model for the MC checks."""
        return {e.label: pde.solve(self.gou, e.f, 1.0, grid=self.grid)
                for e in self.dictionary}


def _check_gnormal(ctx: AcceptanceContext) -> CheckResult:
    fails = _Failures()
    t0 = time.perf_counter()
    up = pde.g_normal_expectation(UNCERTAIN, expr.parse("x^2"), 1.0,
                                  grid=ctx.grid)
    dn = pde.g_normal_expectation(UNCERTAIN, expr.parse("-x^2"), 1.0,
                                  grid=ctx.grid)
    elapsed = time.perf_counter() - t0
    e1 = fails.close(up, 1.0, 1e-3, "E[x^2] at unit variance")
    e2 = fails.close(dn, -0.25, 1e-3, "E[-x^2] at unit variance")
    fails.expect(elapsed < 10.0, f"runtime {elapsed:.1f}s >= 10s")
    return fails.result("gnormal-moments",
                        f"errors {e1:.1e}/{e2:.1e}, {elapsed:.1f}s")


def _check_marginal_law(ctx: AcceptanceContext) -> CheckResult:
    fails = _Failures()
    alpha = 0.5
    worst = 0.0
    for label in ("x^2", "-x^2", "x^4 - 3*x^2"):
        f = expr.parse(label)
        sol = pde.solve(ctx.gou, f, 2.0, grid=ctx.grid,
                        store_times=[0.5, 1.0, 2.0])
        for t in (0.5, 1.0, 2.0):
            var = (1.0 - math.exp(-2 * alpha * t)) / (2 * alpha)
            ref = pde.g_normal_expectation(UNCERTAIN, f, var, grid=ctx.grid)
            err = fails.close(sol.evaluate(t, 0.0), ref, 1e-2,
                              f"marginal law f={label} t={t}")
            worst = max(worst, err)
    return fails.result("gou-marginal-law", f"worst error {worst:.1e}")


def _check_invariant_values(ctx: AcceptanceContext) -> CheckResult:
    fails = _Failures()
    inv_up, _ = ctx.uncertain_table["x^2"]
    inv_dn, _ = ctx.uncertain_table["-x^2"]
    fails.close(inv_up.lambda_bar, 1.0, 1e-2, "invariant value of x^2")
    fails.close(inv_dn.lambda_bar, -0.25, 1e-2, "invariant value of -x^2")
    for label, inv in (("x^2", inv_up), ("-x^2", inv_dn)):
        fails.expect(inv.x_dependence_defect <= 2e-2,
                     f"x-dependence defect {inv.x_dependence_defect:.2e} "
                     f"> 2e-2 for {label}")
    return fails.result(
        "invariant-values",
        f"lambda_bar = {inv_up.lambda_bar:.4f}/{inv_dn.lambda_bar:.4f}, "
        f"defect <= {max(inv_up.x_dependence_defect, inv_dn.x_dependence_defect):.1e}")


def _check_convergence_rate(ctx: AcceptanceContext) -> CheckResult:
    fails = _Failures()
    rates = []
    for alpha in (0.5, 1.0):
        model = make_builtin("g_ou", [alpha], g=UNCERTAIN)
        inv = longtime.invariant_value(model, expr.parse("x^2"),
                                       grid=ctx.grid,
                                       check_dissipativity=False)
        rates.append(inv.rate_estimate)
        fails.expect(inv.rate_estimate >= 0.9 * alpha,
                     f"fitted rate {inv.rate_estimate:.3f} < 0.9*{alpha}")
    return fails.result("convergence-rate",
                        "rates " + "/".join(f"{r:.3f}" for r in rates))


def _check_ergodic_zero(ctx: AcceptanceContext) -> CheckResult:
    fails = _Failures()
    _, erg = ctx.uncertain_table["x^4 - 3*x^2"]
    fails.close(erg.lambda_, 0.0, 2e-2, "ergodic value of x^4 - 3x^2")
    fails.expect(erg.method_disagreement <= 3e-2,
                 f"method disagreement {erg.method_disagreement:.2e} > 3e-2")
    return fails.result("ergodic-zero",
                        f"lambda = {erg.lambda_:.2e}, methods differ by "
                        f"{erg.method_disagreement:.1e}")


def _check_strict_gap(ctx: AcceptanceContext) -> CheckResult:
    fails = _Failures()
    bound = measures.gap_lower_bound(UNCERTAIN.sigma_lo_sq)
    inv, _ = ctx.uncertain_table["x^4 - 3*x^2"]
    lam_bar = inv.lambda_bar
    fails.expect(bound.floor_value > 0, "floor not strictly positive")
    fails.expect(bound.bound_value >= bound.floor_value,
                 f"bound {bound.bound_value:.4f} below its floor "
                 f"{bound.floor_value:.4f}")
    fails.expect(lam_bar >= bound.bound_value - 2e-2,
                 f"lambda_bar {lam_bar:.4f} < bound "
                 f"{bound.bound_value:.4f} - 2e-2")
    fails.expect(lam_bar >= bound.floor_value,
                 f"lambda_bar {lam_bar:.4f} < floor {bound.floor_value:.4f}")
    return fails.result("strict-gap",
                        f"lambda_bar {lam_bar:.4f} >= bound "
                        f"{bound.bound_value:.4f} >= floor "
                        f"{bound.floor_value:.4f} > 0")


def _check_stationary_residuals(ctx: AcceptanceContext) -> CheckResult:
    fails = _Failures()
    r_quartic = longtime.ergodic_residual(ctx.gou, "0.5 * x^4", grid=ctx.grid)
    r_square = longtime.ergodic_residual(ctx.gou, "x^2", grid=ctx.grid)
    fails.close(r_quartic, 0.0, 2e-2, "residual for v = x^4/2")
    fails.close(r_square, 0.0, 2e-2, "residual for v = x^2")

    lo = UNCERTAIN.sigma_lo_sq
    quad = measures.classical_normal_expectation(
        lambda y: -g_eval(UNCERTAIN, 2.0 - 2.0 * y * y), 1.0)
    closed = (lo - 1.0) * measures.classical_normal_expectation(
        lambda y: max(1.0 - y * y, 0.0), 1.0)
    fails.close(quad, closed, 1e-6, "classical-normal quadrature identity")
    fails.expect(quad < 0.0, f"quadrature value {quad:.4f} not negative")
    return fails.result(
        "stationary-residuals",
        f"residuals {r_quartic:.1e}/{r_square:.1e}, classical value "
        f"{quad:.5f} < 0")


def _check_ordering_collapse(ctx: AcceptanceContext) -> CheckResult:
    fails = _Failures()
    for label, (inv, erg) in ctx.uncertain_table.items():
        fails.expect(erg.lambda_ <= inv.lambda_bar + 1e-2,
                     f"lambda > lambda_bar + 1e-2 for {label}")
    worst_gap = 0.0
    for label, (inv, erg) in ctx.classical_table.items():
        gap = inv.lambda_bar - erg.lambda_
        worst_gap = max(worst_gap, abs(gap))
        fails.expect(abs(gap) <= 2e-2,
                     f"classical gap {gap:.2e} for {label}")
    m4 = longtime.invariant_value(ctx.gou_classical, expr.parse("x^4"),
                                  grid=ctx.grid,
                                  check_dissipativity=False).lambda_bar
    m2 = ctx.classical_table["x^2"][0].lambda_bar
    fails.close(m4, 3.0, 2e-2, "classical stationary fourth moment")
    fails.close(m2, 1.0, 2e-2, "classical stationary second moment")
    return fails.result("ordering-and-collapse",
                        f"ordering holds; classical |gap| <= {worst_gap:.1e}, "
                        f"moments {m2:.3f}/{m4:.3f}")


def _check_invariance_identity(ctx: AcceptanceContext) -> CheckResult:
    fails = _Failures()
    worst = 0.0
    for entry in ctx.dictionary:
        lam = ctx.uncertain_table[entry.label][0].lambda_bar
        for t in (0.5, 1.0, 2.0):
            defect = measures.invariance_defect(ctx.gou, entry.f, t,
                                                grid=ctx.grid,
                                                lambda_bar_f=lam)
            worst = max(worst, defect)
            fails.expect(defect <= 2e-2,
                         f"invariance defect {defect:.2e} for "
                         f"{entry.label} at t={t}")
    return fails.result("invariance-identity", f"worst defect {worst:.1e}")


def _check_dirac(ctx: AcceptanceContext) -> CheckResult:
    fails = _Failures()
    worst = 0.0
    for entry in ctx.dictionary:
        target = float(entry.f.eval(0.0))
        inv, erg = ctx.dirac_table[entry.label]
        worst = max(worst,
                    fails.close(inv.lambda_bar, target, 1e-2,
                                f"point-mass invariant value of {entry.label}"),
                    fails.close(erg.lambda_, target, 1e-2,
                                f"point-mass ergodic value of {entry.label}"))
    return fails.result("dirac-point-mass", f"worst error {worst:.1e}")


def _check_mc_validation(ctx: AcceptanceContext) -> CheckResult:
    fails = _Failures()
    gf = UNCERTAIN
    policies = [mc.ConstantPolicy(gf.sigma_lo_sq),
                mc.ConstantPolicy(gf.sigma_hi_sq)]
    worst_excess = -math.inf
    for entry in ctx.dictionary:
        ref = ctx.solutions_t1[entry.label].evaluate(1.0, 0.0)
        best = None
        for pol in policies:
            est = mc.simulate(ctx.gou, pol, 0.0, entry.f, 1.0, ctx.mc_dt,
                              ctx.mc_paths, ctx.seed)
            if best is None or est.mean > best.mean:
                best = est
        excess = best.mean - (ref + 3 * best.std_error + 0.05)
        worst_excess = max(worst_excess, excess)
        fails.expect(excess <= 0,
                     f"scenario bound exceeds solver value for {entry.label} "
                     f"by {excess:.3g}")

    worst_bb = 0.0
    for label in ("x^2", "-x^2", "x^4 - 3*x^2"):
        sol = ctx.solutions_t1[label]
        pol = mc.bang_bang_policy(ctx.gou, sol)
        est = mc.simulate(ctx.gou, pol, 0.0, expr.parse(label), 1.0,
                          ctx.mc_dt, ctx.mc_paths, ctx.seed)
        ref = sol.evaluate(1.0, 0.0)
        err = abs(est.mean - ref)
        tol = 2e-2 + 3 * est.std_error
        worst_bb = max(worst_bb, err)
        fails.expect(err <= tol,
                     f"bang-bang misses solver value for {label}: "
                     f"{err:.3g} > {tol:.3g}")

    rate = mc.contraction_check(ctx.gou, 2.0, -1.0, t_end=2.0, dt=1e-3,
                                n_paths=64, seed=ctx.seed)
    fails.close(rate, 0.5, 1e-6, "coupled contraction rate")
    return fails.result(
        "mc-validation",
        f"bound margin {-worst_excess:.3f}, bang-bang <= {worst_bb:.1e}, "
        f"rate {rate:.8f}")


def _dyadic(rng: np.random.Generator, n: int) -> np.ndarray:
    # dyadic rationals make every float operation below exact
    return rng.integers(-(1 << 20), 1 << 20, size=n) / 256.0


def _check_property_suites(ctx: AcceptanceContext) -> CheckResult:
    fails = _Failures()
    rng = np.random.default_rng(ctx.seed)

    # generator axioms, exact arithmetic on a dyadic lattice
    gf = UNCERTAIN
    a, b = _dyadic(rng, 1000), _dyadic(rng, 1000)
    ga, gb = g_eval(gf, a), g_eval(gf, b)
    up = a >= b
    fails.expect(bool(np.all(ga[up] >= gb[up]) and np.all(gb[~up] >= ga[~up])),
                 "generator monotonicity")
    fails.expect(bool(np.all(g_eval(gf, a + b) <= ga + gb)),
                 "generator sub-additivity")
    for lam in (0.0, 0.25, 0.5, 2.0, 4.0):
        fails.expect(bool(np.all(g_eval(gf, lam * a) == lam * ga)),
                     f"generator homogeneity at {lam}")
    fails.expect(bool(np.all(np.abs(ga) <= 0.5 * gf.sigma_hi_sq * np.abs(a))),
                 "generator growth bound")
    hi_lo = np.where(a >= b, a, b), np.where(a >= b, b, a)
    fails.expect(bool(np.all(g_eval(gf, hi_lo[0]) - g_eval(gf, hi_lo[1])
                             >= 0.5 * gf.sigma_lo_sq * (hi_lo[0] - hi_lo[1]))),
                 "generator lower slope (non-degeneracy)")

    # symbolic derivatives against central finite differences
    probes = np.linspace(-5.0, 5.0, 50)
    h = 1e-5
    for src in ("x^4 - 3*x^2", "0.5 * x^4", "exp(-x) * x^2", "exp(-x)",
                "log(1 + x^2)", "sqrt(1 + x^2)", "x^2 / (1 + x^2)"):
        f = expr.parse(src)
        d1, d2 = expr.deriv(f, 1), expr.deriv(f, 2)
        fd1 = (f.eval(probes + h) - f.eval(probes - h)) / (2 * h)
        fd2 = (d1.eval(probes + h) - d1.eval(probes - h)) / (2 * h)
        r1 = np.max(np.abs(d1.eval(probes) - fd1)
                    / np.maximum(1.0, np.abs(d1.eval(probes))))
        r2 = np.max(np.abs(d2.eval(probes) - fd2)
                    / np.maximum(1.0, np.abs(d2.eval(probes))))
        fails.expect(r1 <= 1e-6, f"first derivative of {src}: {r1:.1e}")
        fails.expect(r2 <= 1e-6, f"second derivative of {src}: {r2:.1e}")

    # solver structure on a small rig
    small = pde.Grid1D(nx=201)
    model = ctx.gou
    for k in range(20):
        c0, c1, c2, c3 = (float(v) for v in rng.uniform(-2, 2, size=4))
        f_src = (f"{c0!r} + {c1!r} * x + {c2!r} * x^2 "
                 f"+ {c3!r} * x^3 + 0.1 * x^4")
        a0 = float(rng.uniform(0.1, 2))
        m0 = float(rng.uniform(-2, 2))
        w0 = float(rng.uniform(0.5, 2))
        bump = f"{a0!r} * max(0, 1 - ((x - {m0!r}) / {w0!r})^2)"
        uf = pde.solve(model, expr.parse(f_src), 0.5, grid=small)
        ug = pde.solve(model, expr.parse(f"{f_src} + {bump}"), 0.5, grid=small)
        viol = float(np.max(uf.values - ug.values))
        fails.expect(viol <= 1e-12, f"monotonicity violated by {viol:.2e} "
                                    f"(pair {k})")

    const = pde.solve(model, expr.parse("3"), 1.0, grid=small)
    fails.expect(float(np.max(np.abs(const.values - 3.0))) <= 1e-12,
                 "constants not preserved")

    f = expr.parse("x^4 - 3*x^2")
    base = pde.solve(model, f, 0.5, grid=small)
    for lam in (0.5, 2.0):
        scaled = pde.solve(model, expr.BinOp("*", expr.Const(lam), f), 0.5,
                           grid=small)
        err = float(np.max(np.abs(scaled.values - lam * base.values)))
        fails.expect(err <= 1e-9 * max(1.0, lam) * float(np.max(np.abs(base.values))),
                     f"positive homogeneity at {lam}: {err:.2e}")

    entries = ctx.dictionary
    vals = {e.label: pde.solve(model, e.f, 0.5, grid=small).evaluate(0.5, 0.0)
            for e in entries}
    for i, ei in enumerate(entries):
        for ej in entries[i + 1:]:
            u_sum = pde.solve(model, expr.BinOp("+", ei.f, ej.f), 0.5,
                              grid=small).evaluate(0.5, 0.0)
            fails.expect(u_sum <= vals[ei.label] + vals[ej.label] + 5e-3,
                         f"sub-additivity fails for {ei.label} + {ej.label}")

    # domain doubling at fixed spacing
    wide = pde.Grid1D(x_min=-16.0, x_max=16.0, nx=2 * ctx.grid.nx - 1)
    worst_rd = 0.0
    for src in ("x^2", "x^4 - 3*x^2"):
        f = expr.parse(src)
        u8 = pde.solve(model, f, 1.0, grid=ctx.grid).evaluate(1.0, 0.0)
        u16 = pde.solve(model, f, 1.0, grid=wide).evaluate(1.0, 0.0)
        worst_rd = max(worst_rd, abs(u8 - u16))
        fails.expect(abs(u8 - u16) <= 1e-3,
                     f"domain doubling moves value by {abs(u8 - u16):.2e} "
                     f"for {src}")

    # error contraction under grid halving; node counts keep the dictionary
    # kinks (x = 0, +-1) on grid nodes at every refinement level
    for entry in entries:
        u_by_nx = [pde.solve(model, entry.f, 1.0,
                             grid=pde.Grid1D(nx=nx)).evaluate(1.0, 0.0)
                   for nx in (161, 321, 641)]
        d1_, d2_ = abs(u_by_nx[1] - u_by_nx[0]), abs(u_by_nx[2] - u_by_nx[1])
        fails.expect(d2_ <= 0.5 * d1_ + 1e-9,
                     f"grid halving ratio {d2_ / max(d1_, 1e-300):.2f} "
                     f"for {entry.label}")

    return fails.result("property-suites",
                        f"all structural properties hold "
                        f"(domain doubling <= {worst_rd:.1e})")


def _check_bracket_drift(ctx: AcceptanceContext) -> CheckResult:
    fails = _Failures()
    m = 2.0
    model = make_builtin("gou_bracket", [m], g=UNCERTAIN)
    worst = 0.0
    for src in ("x", "x^2"):
        f = expr.parse(src)
        lam = longtime.invariant_value(model, f, grid=ctx.grid,
                                       check_dissipativity=False).lambda_bar
        ref = measures.bracket_shift_reference(f, m, UNCERTAIN, grid=ctx.grid)
        worst = max(worst, fails.close(lam, ref, 2e-2,
                                       f"bracket-drift limit for {src}"))
    return fails.result("bracket-drift-law", f"worst error {worst:.1e}")


CHECKS: List[Check] = [
    Check("gnormal-moments",
          "sublinear-normal second moments at the interval endpoints",
          _check_gnormal),
    Check("gou-marginal-law",
          "time-t law of the mean-reverting model matches the rescaled "
          "normal", _check_marginal_law),
    Check("invariant-values",
          "stationary values and x-independence for the mean-reverting "
          "model", _check_invariant_values),
    Check("convergence-rate", "fitted decay rate dominates the drift rate",
          _check_convergence_rate),
    Check("ergodic-zero", "time-average value of the quartic witness "
          "vanishes", _check_ergodic_zero),
    Check("strict-gap", "invariant value strictly exceeds the vanishing "
          "ergodic value", _check_strict_gap),
    Check("stationary-residuals", "plugging smooth profiles into the "
          "stationary equation yields zero", _check_stationary_residuals),
    Check("ordering-and-collapse", "ergodic <= invariant; equal intervals "
          "collapse the gap", _check_ordering_collapse),
    Check("invariance-identity", "time-shifted data reproduce the same "
          "limit", _check_invariance_identity),
    Check("dirac-point-mass", "vanishing coefficients pin both values at "
          "the origin", _check_dirac),
    Check("mc-validation", "scenario bounds, bang-bang near-optimality, "
          "coupled contraction", _check_mc_validation),
    Check("property-suites", "generator axioms, derivatives, solver "
          "structure, grid robustness", _check_property_suites),
    Check("bracket-drift-law", "stationary law of the bracket-driven "
          "model", _check_bracket_drift),
]


def run_checks(ctx: Optional[AcceptanceContext] = None,
               names: Optional[List[str]] = None,
               printer: Optional[Callable[[str], None]] = print) -> List[CheckResult]:
    """Run the acceptance checks (all, or the named subset), in order."""
    ctx = ctx or AcceptanceContext()
    selected = [c for c in CHECKS if names is None or c.name in names]
    if names:
        missing = set(names) - {c.name for c in selected}
        if missing:
            raise ValueError(f"unknown check name(s): {sorted(missing)}")
    results = []
    for i, check in enumerate(selected, 1):
        t0 = time.perf_counter()
        res = check.run(ctx)
        dt = time.perf_counter() - t0
        if printer:
            status = "PASS" if res.passed else "FAIL"
            printer(f"[{i:2d}/{len(selected)}] {status} {check.name:24s} "
                    f"{res.details} ({dt:.1f}s)")
        results.append(res)
    return results
