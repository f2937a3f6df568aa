"""1-D diffusion specifications driven by dt, the quadratic variation and
the driving noise, plus numerical diagnosis of the standing assumptions.

A model is the coefficient triple ``(b, h, sigma)`` of

    dX = b(X) dt + h(X) d<B> + sigma(X) dB,

together with a :class:`~ergo.gfunc.GFunction` and the polynomial growth
order ``p`` of admissible test functions.

The global Lipschitz bound and the dissipativity margin ``eta`` cannot be
verified symbolically for arbitrary user expressions, so they are
estimated on a deterministic probe grid and reported; downstream solvers
warn (but proceed) when the margin estimate is non-positive.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from . import expr
from .expr import Node
from .gfunc import GFunction, g_eval

DEFAULT_GFUNCTION = GFunction(0.25, 1.0)


@dataclass(frozen=True)
class GDiffusionModel:
    b: Node
    h: Node
    sigma: Node
    g: GFunction = DEFAULT_GFUNCTION
    p: int = 2
    name: str = "custom"

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("growth order p must be >= 1")

    def coefficients_on(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Coefficient arrays (b, h, sigma) sampled at the nodes ``x``."""
        return (
            np.asarray(self.b.eval(x), dtype=float),
            np.asarray(self.h.eval(x), dtype=float),
            np.asarray(self.sigma.eval(x), dtype=float),
        )


@dataclass(frozen=True)
class AssumptionReport:
    """Empirical Lipschitz constant and dissipativity margin on a probe set."""

    lipschitz_estimate: float
    eta_estimate: float
    sample_count: int
    domain: Tuple[float, float]

    @property
    def dissipative(self) -> bool:
        return self.eta_estimate > 0.0


# Builtin models.  The diffusion coefficient of ``dirac`` is scaled by 0.5
# so the dissipativity margin stays positive for growth orders up to p = 2
# when sigma_hi_sq = 1.
_BUILTINS = {
    "g_ou": (1, lambda a: (f"-{a!r} * x", "0", "1")),
    "gou_bracket": (1, lambda m: (f"{m!r} - x", "1", "1")),
    "dirac": (0, lambda: ("-x", "0", "0.5 * x * exp(-x^2)")),
}


def make_builtin(name: str, params=(), g: GFunction = DEFAULT_GFUNCTION,
                 p: int = 2) -> GDiffusionModel:
    """Construct a named builtin model.

    ``g_ou(alpha)``       : b = -alpha*x, h = 0, sigma = 1
    ``gou_bracket(m)``    : b = m - x,    h = 1, sigma = 1
    ``dirac``             : b = -x, h = 0, sigma = 0.5*x*exp(-x^2)
                            (all coefficients vanish at the origin)
    """
    if name not in _BUILTINS:
        raise ValueError(f"unknown builtin model {name!r}; "
                         f"choose from {sorted(_BUILTINS)}")
    arity, build = _BUILTINS[name]
    params = tuple(float(v) for v in params)
    if len(params) != arity:
        raise ValueError(f"{name} takes {arity} parameter(s), got {len(params)}")
    b_src, h_src, s_src = build(*params)
    label = name if not params else f"{name}({', '.join(repr(v) for v in params)})"
    return GDiffusionModel(
        b=expr.parse(b_src), h=expr.parse(h_src), sigma=expr.parse(s_src),
        g=g, p=p, name=label,
    )


def estimate_h2_eta(model: GDiffusionModel, domain: Tuple[float, float] = (-4.0, 4.0),
                    n_samples: int = 41) -> AssumptionReport:
    """Probe the dissipativity condition on a tensor grid over ``domain``.

    For every ordered pair x != x' the probed quantity is

        g((2p-1)(sigma(x)-sigma(x'))^2 + 2(x-x')(h(x)-h(x')))
            + (x-x')(b(x)-b(x'))  <=  -eta |x-x'|^2,

    and ``eta_estimate`` is the infimum of ``-LHS / |x-x'|^2`` over the
    probe pairs.  ``lipschitz_estimate`` is the supremum of the summed
    difference quotients of b, h and sigma.  The report never rejects;
    a non-positive margin only triggers warnings downstream.
    """
    lo, hi = float(domain[0]), float(domain[1])
    if not hi > lo:
        raise ValueError("domain must be a non-degenerate interval")
    if n_samples < 2:
        raise ValueError("need at least two probe points")
    xs = np.linspace(lo, hi, n_samples)
    b, h, s = model.coefficients_on(xs)

    dx = xs[:, None] - xs[None, :]
    db = b[:, None] - b[None, :]
    dh = h[:, None] - h[None, :]
    ds = s[:, None] - s[None, :]
    mask = dx != 0.0

    arg = (2 * model.p - 1) * ds ** 2 + 2.0 * dx * dh
    lhs = g_eval(model.g, arg) + dx * db
    eta = np.min(-lhs[mask] / dx[mask] ** 2)
    lip = np.max((np.abs(db[mask]) + np.abs(dh[mask]) + np.abs(ds[mask]))
                 / np.abs(dx[mask]))
    return AssumptionReport(
        lipschitz_estimate=float(lip),
        eta_estimate=float(eta),
        sample_count=n_samples,
        domain=(lo, hi),
    )


def warn_if_not_dissipative(model: GDiffusionModel,
                            domain: Tuple[float, float]) -> AssumptionReport:
    report = estimate_h2_eta(model, domain=domain)
    if not report.dissipative:
        warnings.warn(
            f"model {model.name!r} shows no dissipativity margin on "
            f"{domain} (eta estimate {report.eta_estimate:.3g}); long-time "
            f"limits may not exist", stacklevel=3,
        )
    return report
