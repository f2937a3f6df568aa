"""The invariant and ergodic values packaged as sublinear functionals on a
test-function dictionary, plus the closed-form witness that the two can
differ.

The dictionary spans convex, concave, non-smooth and quartic test
functions; for each entry the pair (lambda_bar, lambda) and their gap is
tabulated, and the sublinear-expectation axioms (monotonicity, constant
preservation, sub-additivity, positive homogeneity) are checked pairwise
with violations collected rather than raised.

``gap_lower_bound`` evaluates the explicit chain that bounds the gap for
the mean-reverting model at unit upper variance from below: with
s2 = 1 - sigma_lo_sq and the two mid-time profiles

    q1(x) = x^4 - 3/4,
    q2(x) = x^4 + 3(sigma_lo_sq - 1) x^2 + (3/4) sigma_lo_sq^2
            - (3/2) sigma_lo_sq,

the quantity E[max(q1, q2)(Y)] with Y ~ N(0, 1/2) is a lower bound for
the invariant value of x^4 - 3x^2 (whose ergodic value vanishes), and is
itself bounded below by (9/16) s2^2 P(|Y| <= sqrt(s2)/4) > 0.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from . import expr, longtime, pde
from .expr import Node
from .gfunc import GFunction
from .model import GDiffusionModel


class DictEntry(NamedTuple):
    label: str
    f: Node
    p: int


def default_dictionary() -> List[DictEntry]:
    """Convex, concave, non-smooth and quartic test functions."""
    specs = [
        ("3", "3", 1),
        ("x", "x", 1),
        ("x^2", "x^2", 1),
        ("-x^2", "-x^2", 1),
        ("abs(x)", "abs(x)", 1),
        ("x^4 - 3*x^2", "x^4 - 3*x^2", 2),
        ("max(0, 1 - x^2)", "max(0, 1 - x^2)", 1),
        ("exp(-x) * x^2", "exp(-x) * x^2", 2),
    ]
    return [DictEntry(lbl, expr.parse(src), p) for lbl, src, p in specs]


class Comparison(NamedTuple):
    lambda_bar: float
    lambda_: float
    gap: float


def compare(model: GDiffusionModel, f, *, grid: pde.Grid1D = pde.DEFAULT_GRID,
            **kwargs) -> Comparison:
    """Invariant and ergodic value of ``f`` with their gap."""
    f = expr.as_expr(f) if isinstance(f, (str, Node)) else f
    bar = longtime.invariant_value(model, f, grid=grid,
                                   check_dissipativity=False).lambda_bar
    erg = longtime.ergodic_value(model, f, grid=grid, **kwargs).lambda_
    return Comparison(lambda_bar=bar, lambda_=erg, gap=bar - erg)


def invariance_defect(model: GDiffusionModel, f, t: float, *,
                      grid: pde.Grid1D = pde.DEFAULT_GRID,
                      lambda_bar_f: Optional[float] = None) -> float:
    """Defect of the time-shift identity of the invariant value.

    Propagating ``f`` for time ``t`` and taking the long-time limit of
    the propagated (grid-sampled) data must reproduce the long-time
    limit of ``f`` itself; their absolute difference is returned.
    ``lambda_bar_f`` short-circuits the second limit when already known.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    f = expr.as_expr(f) if isinstance(f, (str, Node)) else f
    shifted = pde.solve(model, f, t, grid=grid, store_times=[t]).values[-1]
    lam_shifted = longtime.invariant_value(
        model, shifted, grid=grid, check_dissipativity=False).lambda_bar
    if lambda_bar_f is None:
        lambda_bar_f = longtime.invariant_value(
            model, f, grid=grid, check_dissipativity=False).lambda_bar
    return abs(lam_shifted - lambda_bar_f)


@dataclass(frozen=True)
class ReportEntry:
    label: str
    lambda_bar: float
    lambda_: float

    @property
    def gap(self) -> float:
        return self.lambda_bar - self.lambda_


@dataclass
class FunctionalReport:
    entries: List[ReportEntry]
    sublinearity_violations: List[str] = field(default_factory=list)
    ordering_violations: List[str] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.sublinearity_violations and not self.ordering_violations

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["entry", "lambda_bar", "lambda", "gap"])
            for e in self.entries:
                writer.writerow([e.label, repr(e.lambda_bar), repr(e.lambda_),
                                 repr(e.gap)])

    def summary(self) -> str:
        lines = [f"{'entry':>18s} {'lambda_bar':>12s} {'lambda':>12s} {'gap':>12s}"]
        for e in self.entries:
            lines.append(f"{e.label:>18s} {e.lambda_bar:>12.5f} "
                         f"{e.lambda_:>12.5f} {e.gap:>12.5f}")
        ok = "no violations" if self.clean else (
            f"{len(self.sublinearity_violations)} sublinearity / "
            f"{len(self.ordering_violations)} ordering violations")
        lines.append(ok)
        return "\n".join(lines)


def sublinearity_report(model: GDiffusionModel,
                        dictionary: Optional[Sequence[DictEntry]] = None, *,
                        grid: pde.Grid1D = pde.DEFAULT_GRID,
                        tol: float = 2e-2,
                        scales: Tuple[float, ...] = (0.5, 2.0),
                        ergodic_methods: Tuple[str, ...] = ("time_avg",),
                        ordering_tol: float = 1e-2) -> FunctionalReport:
    """Tabulate both functionals over the dictionary and check the axioms.

    Monotonicity is checked for pairs ordered nodewise on the solver
    domain; sub-additivity and positive homogeneity within ``tol``;
    constant preservation for constant entries; the invariant value must
    dominate the ergodic one within ``ordering_tol``.  Violations are
    collected, never raised.
    """
    if dictionary is None:
        dictionary = default_dictionary()
    xs = grid.nodes()

    def lam_bar(f):
        return longtime.invariant_value(model, f, grid=grid,
                                        check_dissipativity=False).lambda_bar

    def lam_erg(f):
        return longtime.ergodic_value(model, f, grid=grid,
                                      methods=ergodic_methods).lambda_

    bar = {e.label: lam_bar(e.f) for e in dictionary}
    erg = {e.label: lam_erg(e.f) for e in dictionary}
    entries = [ReportEntry(e.label, bar[e.label], erg[e.label])
               for e in dictionary]

    sub_viol: List[str] = []
    ord_viol: List[str] = []
    for name, table, value_of in (("invariant", bar, lam_bar),
                                  ("ergodic", erg, lam_erg)):
        for e in dictionary:
            if isinstance(e.f, expr.Const):
                if abs(table[e.label] - e.f.value) > tol:
                    sub_viol.append(f"{name}: constant {e.label} maps to "
                                    f"{table[e.label]:.4f}")
            for lam in scales:
                scaled = value_of(expr.BinOp("*", expr.Const(lam), e.f))
                if abs(scaled - lam * table[e.label]) > tol:
                    sub_viol.append(
                        f"{name}: homogeneity fails for {lam} * {e.label}")
        for i, ei in enumerate(dictionary):
            fi = np.asarray(ei.f.eval(xs))
            for ej in dictionary[i + 1:]:
                fj = np.asarray(ej.f.eval(xs))
                if np.all(fi <= fj) and table[ei.label] > table[ej.label] + tol:
                    sub_viol.append(f"{name}: monotonicity fails for "
                                    f"{ei.label} <= {ej.label}")
                if np.all(fj <= fi) and table[ej.label] > table[ei.label] + tol:
                    sub_viol.append(f"{name}: monotonicity fails for "
                                    f"{ej.label} <= {ei.label}")
                both = value_of(expr.BinOp("+", ei.f, ej.f))
                if both > table[ei.label] + table[ej.label] + tol:
                    sub_viol.append(f"{name}: sub-additivity fails for "
                                    f"{ei.label} + {ej.label}")
    for e in entries:
        if e.gap < -ordering_tol:
            ord_viol.append(f"lambda > lambda_bar for {e.label} "
                            f"(gap {e.gap:.4f})")
    return FunctionalReport(entries=entries, sublinearity_violations=sub_viol,
                            ordering_violations=ord_viol)


@dataclass(frozen=True)
class GapBound:
    sigma_lo_sq: float
    bound_value: float
    floor_value: float


def gap_lower_bound(sigma_lo_sq: float) -> GapBound:
    """Closed-form lower bound for the invariant-vs-ergodic gap witness.

    ``bound_value`` integrates max(q1, q2) against the N(0, 1/2) density
    by adaptive quadrature; ``floor_value`` is the explicit floor
    (9/16) (1 - sigma_lo_sq)^2 P(|Y| <= sqrt(1 - sigma_lo_sq)/4).
    """
    if not 0.0 < sigma_lo_sq <= 1.0:
        raise ValueError("sigma_lo_sq must lie in (0, 1]")
    s2 = 1.0 - sigma_lo_sq

    def q1(y):
        return y ** 4 - 0.75

    def q2(y):
        return (y ** 4 + 3.0 * (sigma_lo_sq - 1.0) * y ** 2
                + 0.75 * sigma_lo_sq ** 2 - 1.5 * sigma_lo_sq)

    sd = math.sqrt(0.5)

    def integrand(y):
        dens = math.exp(-y * y / (2 * sd * sd)) / (sd * math.sqrt(2 * math.pi))
        return max(q1(y), q2(y)) * dens

    cut = 0.5 * math.sqrt(s2)
    points = [-cut, cut] if cut > 0 else None
    value, err = integrate.quad(integrand, -10 * sd, 10 * sd, points=points,
                                limit=200, epsabs=1e-11, epsrel=1e-11)
    if err > 1e-7:
        raise RuntimeError(f"gap-bound quadrature did not converge "
                           f"(error estimate {err:g})")
    # P(|Y| <= a) for Y ~ N(0, 1/2) is erf(a)
    floor = (9.0 / 16.0) * s2 ** 2 * math.erf(math.sqrt(s2) / 4.0)
    return GapBound(sigma_lo_sq=sigma_lo_sq, bound_value=float(value),
                    floor_value=float(floor))


def classical_normal_expectation(fn, variance: float) -> float:
    """Adaptive quadrature of ``fn`` against the N(0, variance) density."""
    sd = math.sqrt(variance)

    def integrand(y):
        dens = math.exp(-y * y / (2 * variance)) / (sd * math.sqrt(2 * math.pi))
        return fn(y) * dens

    value, _ = integrate.quad(integrand, -12 * sd, 12 * sd, limit=200)
    return float(value)


def bracket_shift_reference(f, m: float, g: GFunction, *,
                            grid: pde.Grid1D = pde.DEFAULT_GRID) -> float:
    """Stationary value of the mean-reverting model with bracket drift.

    The long-time limit of that model equals the time-1 expectation of
    ``f`` shifted by ``m`` under the auxiliary zero-drift model with unit
    bracket coefficient and diffusion coefficient sqrt(1/2); this helper
    computes the auxiliary side.
    """
    f = expr.as_expr(f)
    aux = GDiffusionModel(b=expr.parse("0"), h=expr.parse("1"),
                          sigma=expr.parse("sqrt(0.5)"), g=g,
                          name="bracket_aux")
    shifted = f.eval(grid.nodes() + m)
    sol = pde.solve(aux, np.asarray(shifted), 1.0, grid=grid,
                    store_times=[1.0])
    return sol.evaluate(1.0, 0.0)
