"""Scenario Monte Carlo for the diffusion models.

Each volatility control policy selects one dominated scenario: under a
policy value ``c`` in ``[sigma_lo_sq, sigma_hi_sq]`` the quadratic
variation grows as ``d<B> = c dt`` and the driving increment has variance
``c dt``, so one Euler-Maruyama step reads

    X' = X + b(X) dt + h(X) c dt + sigma(X) sqrt(c dt) Z.

The expectation under any single scenario is a lower bound for the
sublinear expectation (which the PDE solver computes), so the estimator
validates the solver from below; a bang-bang feedback policy read off
the solver's own slices should come close to the PDE value.

Randomness is counter-based: paths are processed in fixed blocks of 4096
and block ``j`` draws from a Philox stream keyed by ``(seed, j)``, so the
noise of any path is a pure function of the seed and the path index and
results do not depend on how blocks are scheduled.  Estimates are
reduced in block order, which makes every estimate bitwise reproducible.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .expr import Node
from .model import GDiffusionModel
from .pde import PdeSolution, sample_on_grid

_BLOCK = 4096


class PolicyRangeError(ValueError):
    """A policy produced a variance outside the model's interval."""


@dataclass(frozen=True)
class ConstantPolicy:
    """Fixed-variance scenario ``d<B> = c dt``."""

    c: float

    def variances(self, t, time_to_go, x):
        return np.full_like(x, self.c)


@dataclass(frozen=True)
class TablePolicy:
    """Feedback scenario from a callable ``(t, x) -> c`` (vectorized)."""

    table: Callable[[float, np.ndarray], np.ndarray]

    def variances(self, t, time_to_go, x):
        return np.broadcast_to(np.asarray(self.table(t, x), dtype=float),
                               x.shape)


class BangBangPolicy:
    """Extreme-point feedback read off a stored PDE solution.

    At elapsed time ``t`` the policy looks up the slice nearest in
    time-to-go and returns the upper variance where the local operator
    argument ``sigma(x)^2 D2u + 2 h(x) Du`` is non-negative at the
    nearest grid node, the lower variance elsewhere.
    """

    def __init__(self, model: GDiffusionModel, sol: PdeSolution):
        if sol.model is not model:
            # allow equal-by-construction models, reject different grids
            if sol.model.g != model.g:
                raise ValueError("policy solution was produced for a "
                                 "different generator")
        grid = sol.grid
        x = grid.nodes()
        _, h, sig = model.coefficients_on(x)
        sig2 = sig ** 2
        dx = grid.dx
        lo, hi = model.g.sigma_lo_sq, model.g.sigma_hi_sq

        u = sol.values
        d2 = np.zeros_like(u)
        d2[:, 1:-1] = (u[:, 2:] - 2.0 * u[:, 1:-1] + u[:, :-2]) / dx ** 2
        d1 = np.gradient(u, dx, axis=1)
        arg = sig2[None, :] * d2 + 2.0 * h[None, :] * d1
        self._choice = np.where(arg >= 0.0, hi, lo)
        self._times = sol.times
        self._x_min = grid.x_min
        self._dx = dx
        self._nx = grid.nx

    def slice_variances(self, time_to_go: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self._times - time_to_go)))
        return self._choice[k]

    def variances(self, t, time_to_go, x):
        row = self.slice_variances(time_to_go)
        idx = np.clip(np.rint((x - self._x_min) / self._dx).astype(np.intp),
                      0, self._nx - 1)
        return row[idx]


ControlPolicy = Union[ConstantPolicy, TablePolicy, BangBangPolicy]


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_paths: int
    dt: float
    seed: int
    functional: str  # "terminal" or "running"


def bang_bang_policy(model: GDiffusionModel, sol: PdeSolution) -> BangBangPolicy:
    """Feedback policy taking the optimizing endpoint of the solver's sup."""
    return BangBangPolicy(model, sol)


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(key=np.array([seed, block], dtype=np.uint64)))


def _check_range(c: np.ndarray, lo: float, hi: float):
    if c.min() < lo - 1e-12 or c.max() > hi + 1e-12:
        raise PolicyRangeError(
            f"policy variance outside [{lo}, {hi}]: "
            f"saw [{c.min():g}, {c.max():g}]")


def simulate(model: GDiffusionModel, policy: ControlPolicy, x0: float,
             f: Union[Node, Callable], t_end: float, dt: float,
             n_paths: int, seed: int, functional: str = "terminal",
             path_dump: Optional[int] = None):
    """Estimate the scenario expectation of a path functional.

    ``functional='terminal'`` averages ``f(X_T)``; ``'running'`` averages
    the time average ``(1/T) * sum f(X_k) dt`` over the path (left
    endpoints).  Returns an :class:`McEstimate`; with ``path_dump=k`` a
    second return value holds the first ``k`` trajectories as an array of
    shape ``(n_steps + 1, k)``.
    """
    if dt <= 0 or t_end <= 0:
        raise ValueError("need positive dt and t_end")
    if n_paths < 1:
        raise ValueError("need at least one path")
    if functional not in ("terminal", "running"):
        raise ValueError(f"unknown functional {functional!r}")
    n_steps = max(1, int(round(t_end / dt)))
    dt_eff = t_end / n_steps
    sq = math.sqrt(dt_eff)
    lo, hi = model.g.sigma_lo_sq, model.g.sigma_hi_sq
    b_ast, h_ast, s_ast = model.b, model.h, model.sigma

    values = np.empty(n_paths)
    dump = None
    if path_dump:
        dump = np.empty((n_steps + 1, min(path_dump, n_paths, _BLOCK)))

    n_blocks = (n_paths + _BLOCK - 1) // _BLOCK
    for blk in range(n_blocks):
        rng = _block_rng(seed, blk)
        keep = min(_BLOCK, n_paths - blk * _BLOCK)
        x = np.full(_BLOCK, float(x0))
        running = np.zeros(_BLOCK) if functional == "running" else None
        if dump is not None and blk == 0:
            dump[0] = x[: dump.shape[1]]
        for k in range(n_steps):
            t = k * dt_eff
            if running is not None:
                running += np.asarray(f.eval(x) if isinstance(f, Node) else f(x))
            c = np.asarray(policy.variances(t, t_end - t, x), dtype=float)
            _check_range(c, lo, hi)
            z = rng.standard_normal(_BLOCK)
            x = (x + b_ast.eval(x) * dt_eff + h_ast.eval(x) * (c * dt_eff)
                 + s_ast.eval(x) * (np.sqrt(c) * sq * z))
            if dump is not None and blk == 0:
                dump[k + 1] = x[: dump.shape[1]]
        if not np.isfinite(x[:keep]).all():
            bad = int(np.argmin(np.isfinite(x[:keep])))
            raise FloatingPointError(
                f"non-finite path value (path {blk * _BLOCK + bad})")
        if functional == "terminal":
            out = np.asarray(f.eval(x) if isinstance(f, Node) else f(x))
        else:
            out = running * (dt_eff / t_end)
        values[blk * _BLOCK: blk * _BLOCK + keep] = out[:keep]

    est = McEstimate(
        mean=float(values.mean()),
        std_error=float(values.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0,
        n_paths=n_paths, dt=dt, seed=seed, functional=functional,
    )
    if dump is not None:
        return est, dump
    return est


def lower_bound(model: GDiffusionModel, f, x0: float, t_end: float,
                policies: Sequence[ControlPolicy], dt: float, n_paths: int,
                seed: int, functional: str = "terminal") -> float:
    """Best scenario mean over finitely many policies.

    Each policy induces one dominated measure, so the maximum is a lower
    bound (up to sampling and discretization error) for the sublinear
    expectation computed by the PDE solver.
    """
    if not policies:
        raise ValueError("need at least one policy")
    return max(simulate(model, p, x0, f, t_end, dt, n_paths, seed,
                        functional).mean for p in policies)


def contraction_check(model: GDiffusionModel, x: float, x_prime: float,
                      t_end: float, dt: float = 1e-3, n_paths: int = 64,
                      seed: int = 0,
                      policy: Optional[ControlPolicy] = None) -> float:
    """Empirical mean-square contraction rate of two coupled starts.

    Both paths share the noise and the scenario (the policy is read off
    the first path).  The per-step root-mean-square contraction factor
    ``m = (mean|X - X'|^2 / |x - x'|^2)^(1/2N)`` is converted to the rate
    ``(1 - m) / dt``, which is exact for affine drift (where the coupled
    difference contracts by precisely ``1 - L dt`` each step) and equals
    ``-log(m)/dt`` as ``dt -> 0``.
    """
    if x == x_prime:
        raise ValueError("starting points must differ")
    if policy is None:
        policy = ConstantPolicy(model.g.sigma_hi_sq)
    n_steps = max(1, int(round(t_end / dt)))
    dt_eff = t_end / n_steps
    sq = math.sqrt(dt_eff)
    lo, hi = model.g.sigma_lo_sq, model.g.sigma_hi_sq
    n = min(n_paths, _BLOCK)

    rng = _block_rng(seed, 0)
    a = np.full(n, float(x))
    b = np.full(n, float(x_prime))
    for k in range(n_steps):
        t = k * dt_eff
        c = np.asarray(policy.variances(t, t_end - t, a), dtype=float)
        _check_range(c, lo, hi)
        z = rng.standard_normal(n)
        noise = np.sqrt(c) * sq * z
        a = a + model.b.eval(a) * dt_eff + model.h.eval(a) * (c * dt_eff) \
            + model.sigma.eval(a) * noise
        b = b + model.b.eval(b) * dt_eff + model.h.eval(b) * (c * dt_eff) \
            + model.sigma.eval(b) * noise
    ratio = float(np.mean((a - b) ** 2)) / (x - x_prime) ** 2
    m = ratio ** (1.0 / (2 * n_steps))
    return (1.0 - m) / dt_eff


def dump_paths_csv(path, times: np.ndarray, trajectories: np.ndarray):
    """Write trajectories from :func:`simulate` as rows of t, path_id, x."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "path_id", "x"])
        for i, t in enumerate(times):
            for j in range(trajectories.shape[1]):
                writer.writerow([repr(float(t)), j,
                                 repr(float(trajectories[i, j]))])
