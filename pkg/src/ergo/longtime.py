"""Long-time limits of the solver: the invariant value of terminal
functionals and the ergodic value of running ones.

The invariant value ``lambda_bar`` is the limit of the terminal
expectation u(T, x) as T grows; dissipativity makes the limit
x-independent and exponentially fast, so the horizon doubles until two
successive horizons agree.  The fitted decay rate and the residual
x-dependence over a probe set are reported alongside the value.

The ergodic value ``lambda`` of a running cost f is extracted by two
independent routes:

* time-average (primary): march w(t, x) with source f and no initial
  data; w grows like ``lambda * t + profile(x) + o(1)``, so the two-point
  slope (w(2T) - w(T)) / T converges exponentially and is iterated over
  doubling horizons,
* vanishing discount (cross-check): march the damped equation with
  discount rho to its steady state v_rho, accelerate the slow
  ``exp(-rho t)`` tail by geometric extrapolation, and Richardson-
  extrapolate ``rho * v_rho(x_ref)`` over two discounts to rho -> 0.

Both routes report; the disagreement is part of the result.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .gfunc import check_nondegenerate, g_eval
from .model import GDiffusionModel, warn_if_not_dissipative
from .pde import DEFAULT_GRID, Grid1D, InitialData, Stepper, sample_on_grid
from . import expr


class ConvergenceError(RuntimeError):
    """A long-time limit did not settle within the allowed horizon."""


@dataclass(frozen=True)
class InvariantResult:
    lambda_bar: float
    rate_estimate: float
    x_dependence_defect: float
    horizon: float
    trace_times: np.ndarray = field(repr=False)
    trace_values: np.ndarray = field(repr=False)

    def cesaro_average(self) -> float:
        """Trapezoid time average of the trace up to the horizon."""
        trapezoid = getattr(np, "trapezoid", None) or np.trapz
        return float(trapezoid(self.trace_values, self.trace_times)
                     / self.trace_times[-1])

    def trace_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "value", "defect"])
            for t, v in zip(self.trace_times, self.trace_values):
                writer.writerow([repr(float(t)), repr(float(v)),
                                 repr(abs(float(v) - self.lambda_bar))])


@dataclass(frozen=True)
class ErgodicResult:
    lambda_: float
    lambda_time_avg: float
    lambda_discount: float
    method_disagreement: float
    horizon: float


def _sample_times(t_lo: float, t_hi: float, per_octave: int = 8) -> np.ndarray:
    """Geometric sampling grid hitting every power-of-two horizon exactly."""
    k_lo = int(math.floor(per_octave * math.log2(t_lo)))
    k_hi = int(math.ceil(per_octave * math.log2(t_hi)))
    ts = 2.0 ** (np.arange(k_lo, k_hi + 1) / per_octave)
    return ts[(ts > 0) & (ts <= t_hi * (1 + 1e-12))]


def invariant_value(model: GDiffusionModel, f: InitialData, *,
                    grid: Grid1D = DEFAULT_GRID, x_ref: float = 0.0,
                    tol: float = 1e-3, t_start: float = 4.0,
                    t_max: float = 256.0,
                    probes: Sequence[float] = (-2.0, -1.0, 0.0, 1.0, 2.0),
                    fixed_horizon: Optional[float] = None,
                    check_dissipativity: bool = True) -> InvariantResult:
    """Long-time limit of the terminal expectation of ``f``.

    The horizon doubles from ``t_start`` until ``|u(T) - u(T/2)| <= tol``
    at ``x_ref`` (or ``fixed_horizon`` is reached, when given); the value
    at the final horizon is the invariant value.  The decay rate is a
    least-squares fit of ``log|u(t) - lambda_bar|`` on the trace,
    restricted to the last decade of the samples that sit clearly (10x
    ``tol``) above the convergence floor.
    """
    if check_dissipativity:
        warn_if_not_dissipative(model, (grid.x_min / 2, grid.x_max / 2))
    stepper = Stepper(model, f, grid)
    horizon_cap = fixed_horizon if fixed_horizon is not None else t_max
    n_oct = max(0, int(math.ceil(math.log2(horizon_cap / t_start))))
    horizon_list = [t_start * 2.0 ** j for j in range(-1, n_oct + 1)
                    if t_start * 2.0 ** j <= horizon_cap * (1 + 1e-12)]
    horizon_set = set(horizon_list)
    times = np.unique(np.concatenate([
        [0.0], _sample_times(min(t_start, 1.0) / 64, horizon_cap),
        horizon_list, [horizon_cap]]))
    values = []
    by_horizon = {}
    stop_at = None
    last_defect = math.inf
    for t in times:
        stepper.advance_to(t)
        values.append(stepper.value_at(x_ref))
        if float(t) in horizon_set:
            by_horizon[float(t)] = values[-1]
            half = float(t) / 2.0
            if (fixed_horizon is None and t >= t_start
                    and half in by_horizon):
                last_defect = abs(by_horizon[float(t)] - by_horizon[half])
                if last_defect <= tol:
                    stop_at = float(t)
                    break
    else:
        if fixed_horizon is None:
            raise ConvergenceError(
                f"no convergence by T = {horizon_cap:g}; "
                f"last horizon defect {last_defect:.3g}")
        stop_at = float(times[-1])

    ts = times[: len(values)]
    vals = np.asarray(values)
    lam = vals[-1]
    defect = max(abs(stepper.value_at(p) - lam) for p in probes)
    rate = _fit_rate(ts, vals, lam, floor=10 * tol)
    return InvariantResult(lambda_bar=float(lam), rate_estimate=rate,
                           x_dependence_defect=float(defect),
                           horizon=float(stop_at), trace_times=ts,
                           trace_values=vals)


def _fit_rate(ts: np.ndarray, vals: np.ndarray, lam: float,
              floor: float) -> float:
    resid = np.abs(vals - lam)
    mask = (resid > floor) & (ts > 0)
    if mask.sum() < 3:
        return math.nan
    t_sel = ts[mask]
    mask &= ts >= t_sel.max() / 10.0
    if mask.sum() < 3:
        return math.nan
    slope = np.polyfit(ts[mask], np.log(resid[mask]), 1)[0]
    return float(-slope)


def ergodic_value(model: GDiffusionModel, f: InitialData, *,
                  grid: Grid1D = DEFAULT_GRID, x_ref: float = 0.0,
                  tol: float = 1e-3, t_start: float = 4.0,
                  t_max: float = 128.0,
                  rhos: Tuple[float, ...] = (0.05, 0.025),
                  methods: Tuple[str, ...] = ("time_avg", "discount"),
                  check_dissipativity: bool = False) -> ErgodicResult:
    """Ergodic (time-average) value of the running cost ``f``.

    Requires a non-degenerate generator (``sigma_lo_sq > 0``).  The
    time-average slope is the primary value; the vanishing-discount
    estimate is a cross-check reported through ``method_disagreement``.
    """
    if not check_nondegenerate(model.g):
        raise ValueError("ergodic values require sigma_lo_sq > 0")
    if check_dissipativity:
        warn_if_not_dissipative(model, (grid.x_min / 2, grid.x_max / 2))

    lam_ta = math.nan
    horizon = math.nan
    if "time_avg" in methods:
        lam_ta, horizon = _time_average_slope(model, f, grid, x_ref, tol,
                                              t_start, t_max)
    lam_disc = math.nan
    if "discount" in methods:
        per_rho = [_discount_estimate(model, f, grid, x_ref, rho, tol)
                   for rho in rhos]
        if len(rhos) >= 2:
            # Richardson in rho: rho*v_rho = lambda + c*rho + O(rho^2)
            r0, r1 = rhos[0], rhos[1]
            lam_disc = (r0 * per_rho[1] - r1 * per_rho[0]) / (r0 - r1)
        else:
            lam_disc = per_rho[0]

    primary = lam_ta if "time_avg" in methods else lam_disc
    gap = abs(lam_ta - lam_disc) if ("time_avg" in methods
                                     and "discount" in methods) else math.nan
    return ErgodicResult(lambda_=float(primary), lambda_time_avg=float(lam_ta),
                         lambda_discount=float(lam_disc),
                         method_disagreement=float(gap),
                         horizon=float(horizon))


def _time_average_slope(model, f, grid, x_ref, tol, t_start, t_max):
    zero = np.zeros(grid.nx)
    stepper = Stepper(model, zero, grid, source=f)
    t = t_start / 2
    stepper.advance_to(t)
    w = {t: stepper.value_at(x_ref)}
    slope_prev = None
    while t < 2 * t_max * (1 + 1e-9):
        t *= 2
        stepper.advance_to(t)
        w[t] = stepper.value_at(x_ref)
        slope = (w[t] - w[t / 2]) / (t / 2)
        if slope_prev is not None and abs(slope - slope_prev) <= tol:
            return slope, t
        slope_prev = slope
    raise ConvergenceError(
        f"time-average slope not settled by T = {t_max:g} "
        f"(last change {abs(slope - slope_prev):.3g})")


def _discount_estimate(model, f, grid, x_ref, rho, tol):
    """rho * v_rho(x_ref) from the damped march, tail-extrapolated.

    The slow mode of the damped march decays like exp(-rho t); three
    equally spaced samples give its geometric limit, which converges well
    before the march itself has.
    """
    zero = np.zeros(grid.nx)
    stepper = Stepper(model, zero, grid, source=f, discount=rho)
    delta = 1.0
    samples = []
    estimate_prev = None
    t = 0.0
    t_cap = 10.0 / rho
    while t < t_cap:
        t += delta
        stepper.advance_to(t)
        samples.append(stepper.value_at(x_ref))
        if len(samples) >= 3:
            v1, v2, v3 = samples[-3:]
            denom = v2 - v1
            estimate = v3
            if denom != 0.0:
                r = (v3 - v2) / denom
                if 0.0 < r < 1.0:
                    estimate = v3 + (v3 - v2) * r / (1.0 - r)
            if (estimate_prev is not None and t >= 2.0 / rho
                    and abs(rho * (estimate - estimate_prev)) <= tol):
                return rho * estimate
            estimate_prev = estimate
    warnings.warn(f"discount march at rho = {rho:g} stopped at its time cap; "
                  f"estimate may be rough", stacklevel=2)
    return rho * estimate_prev


def ergodic_residual(model: GDiffusionModel, v, *,
                     grid: Grid1D = DEFAULT_GRID, **kwargs) -> float:
    """Ergodic value of the running cost generated by a smooth profile.

    For a smooth ``v`` the cost ``f = -g(sigma^2 v'' + 2 h v') - b v'``
    has ergodic value zero (plug ``v`` into the stationary equation), so
    the returned number is a residual that should vanish.
    """
    v = expr.as_expr(v)
    v1 = expr.deriv(v, 1)
    v2 = expr.deriv(v, 2)
    x = grid.nodes()
    b, h, sig = model.coefficients_on(x)
    arg = sig ** 2 * np.asarray(v2.eval(x)) + 2.0 * h * np.asarray(v1.eval(x))
    f_vals = -g_eval(model.g, arg) - b * np.asarray(v1.eval(x))
    return ergodic_value(model, f_vals, grid=grid, **kwargs).lambda_
