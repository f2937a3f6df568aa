"""Command-line front end.

Subcommands: ``gnormal``, ``solve``, ``invariant``, ``ergodic``,
``compare``, ``mc`` and ``paper-checks``.  Every run prints a one-line
machine-parseable ``key=value`` result (``paper-checks`` prints its
PASS/FAIL table instead) and optionally writes CSV artifacts under
``--out``.  All values can come from a JSON config file with blocks
``model``/``grid``/``run``/``output``; flags win over the file.

Exit codes: 0 success, 1 numeric or check failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

import numpy as np

from . import checks, expr, longtime, mc, measures, pde
from .gfunc import GFunction
from .model import GDiffusionModel, make_builtin

_MODEL_KEYS = {"name", "params", "b", "h", "sigma", "sigma_lo_sq",
               "sigma_hi_sq", "p"}
_GRID_KEYS = {"x_min", "x_max", "nx", "dt"}
_RUN_KEYS = {"f", "t_end", "variance", "x", "x0", "x_ref", "tolerance",
             "seed", "n_paths", "dt", "functional", "policies", "source",
             "discount"}
_OUTPUT_KEYS = {"dir"}


class ConfigError(ValueError):
    pass


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be an object")
    allowed = {"model": _MODEL_KEYS, "grid": _GRID_KEYS, "run": _RUN_KEYS,
               "output": _OUTPUT_KEYS}
    for block, keys in cfg.items():
        if block not in allowed:
            raise ConfigError(f"unknown config block {block!r}")
        if not isinstance(keys, dict):
            raise ConfigError(f"config block {block!r} must be an object")
        unknown = set(keys) - allowed[block]
        if unknown:
            raise ConfigError(f"unknown key(s) in {block!r}: {sorted(unknown)}")
    return cfg


def _merge(cfg_block: dict, **flags) -> dict:
    merged = dict(cfg_block)
    for key, val in flags.items():
        if val is not None:
            merged[key] = val
    return merged


def _parse_expr(src, what: str):
    try:
        return expr.parse(str(src))
    except expr.ParseError as exc:
        raise ConfigError(f"bad {what} expression {src!r}: {exc}") from exc


def _build_gfunction(block: dict) -> GFunction:
    lo = block.get("sigma_lo_sq", 0.25)
    hi = block.get("sigma_hi_sq", 1.0)
    try:
        return GFunction(float(lo), float(hi))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _build_model(args, cfg: dict) -> GDiffusionModel:
    block = dict(cfg.get("model", {}))
    if getattr(args, "model", None):
        spec = args.model
        name, _, rest = spec.partition(":")
        block["name"] = name
        if rest:
            block["params"] = [float(v) for v in rest.split(",")]
        elif ":" not in spec:
            block.setdefault("params", [])
    for key in ("b", "h"):
        flag = getattr(args, key, None)
        if flag is not None:
            block[key] = flag
    if getattr(args, "sigma_coef", None) is not None:
        block["sigma"] = args.sigma_coef
    if getattr(args, "sigma", None) is not None:
        try:
            lo, hi = (float(v) for v in args.sigma.split(","))
        except ValueError as exc:
            raise ConfigError("--sigma expects 'LO,HI'") from exc
        block["sigma_lo_sq"], block["sigma_hi_sq"] = lo, hi
    if getattr(args, "p", None) is not None:
        block["p"] = args.p

    g = _build_gfunction(block)
    p = int(block.get("p", 2))
    name = block.get("name")
    if name and name != "custom":
        try:
            return make_builtin(name, block.get("params", []), g=g, p=p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if not {"b", "h", "sigma"} <= set(block):
        raise ConfigError("custom models need b, h and sigma expressions "
                          "(or pick --model g_ou:ALPHA / gou_bracket:M / dirac)")
    try:
        return GDiffusionModel(
            b=_parse_expr(block["b"], "drift"),
            h=_parse_expr(block["h"], "bracket-drift"),
            sigma=_parse_expr(block["sigma"], "diffusion"), g=g, p=p)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _build_grid(args, cfg: dict) -> pde.Grid1D:
    block = _merge(cfg.get("grid", {}), x_min=getattr(args, "x_min", None),
                   x_max=getattr(args, "x_max", None),
                   nx=getattr(args, "nx", None),
                   dt=getattr(args, "grid_dt", None))
    try:
        return pde.Grid1D(x_min=float(block.get("x_min", -8.0)),
                          x_max=float(block.get("x_max", 8.0)),
                          nx=int(block.get("nx", 1601)),
                          dt=block.get("dt"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _run_block(args, cfg: dict, **extra) -> dict:
    return _merge(cfg.get("run", {}), **extra)


def _out_dir(args, cfg: dict) -> Optional[str]:
    out = getattr(args, "out", None) or cfg.get("output", {}).get("dir")
    if out:
        os.makedirs(out, exist_ok=True)
    return out


def _require(block: dict, key: str, what: str):
    if key not in block or block[key] is None:
        raise ConfigError(f"{what} required (flag --{key.replace('_', '-')} "
                          f"or run.{key} in the config)")
    return block[key]


def _emit(**kv):
    print(" ".join(f"{k}={_fmt(v)}" for k, v in kv.items()))


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def _threads_cap():
    raw = os.environ.get("ERGO_THREADS")
    if raw is None:
        return None
    try:
        cap = int(raw)
        if cap < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"ERGO_THREADS must be a positive integer, "
                          f"got {raw!r}")
    return cap


def _policy_from_spec(spec, gf: GFunction, bang_solution=None):
    if isinstance(spec, (int, float)):
        return mc.ConstantPolicy(float(spec))
    text = str(spec)
    if text == "lo":
        return mc.ConstantPolicy(gf.sigma_lo_sq)
    if text == "hi":
        return mc.ConstantPolicy(gf.sigma_hi_sq)
    if text == "bang":
        if bang_solution is None:
            raise ConfigError("the 'bang' policy needs a solver reference; "
                              "it is built internally from --f and --t-end")
        return bang_solution
    if text.startswith("const:"):
        try:
            return mc.ConstantPolicy(float(text.split(":", 1)[1]))
        except ValueError as exc:
            raise ConfigError(f"bad policy {text!r}") from exc
    raise ConfigError(f"unknown policy {spec!r} (use lo, hi, const:VALUE "
                      f"or bang)")


def _cmd_gnormal(args, cfg) -> int:
    grid = _build_grid(args, cfg)
    block = _run_block(args, cfg, f=args.f, variance=args.variance)
    gf = _build_gfunction(_merge(cfg.get("model", {}),
                                 **_sigma_overrides(args)))
    f = _parse_expr(_require(block, "f", "a test function"), "test function")
    variance = float(_require(block, "variance", "a variance"))
    value = pde.g_normal_expectation(gf, f, variance, grid=grid)
    _emit(value=value, variance=variance)
    return 0


def _sigma_overrides(args) -> dict:
    out = {}
    if getattr(args, "sigma", None) is not None:
        try:
            lo, hi = (float(v) for v in args.sigma.split(","))
        except ValueError as exc:
            raise ConfigError("--sigma expects 'LO,HI'") from exc
        out["sigma_lo_sq"], out["sigma_hi_sq"] = lo, hi
    return out


def _cmd_solve(args, cfg) -> int:
    model = _build_model(args, cfg)
    grid = _build_grid(args, cfg)
    block = _run_block(args, cfg, f=args.f, t_end=args.t_end,
                       source=args.source, discount=args.discount,
                       x=args.x)
    f = _parse_expr(_require(block, "f", "initial data"), "initial data")
    t_end = float(_require(block, "t_end", "a horizon"))
    source = block.get("source")
    source_ast = _parse_expr(source, "source") if source else None
    sol = pde.solve(model, f, t_end, grid=grid, source=source_ast,
                    discount=float(block.get("discount", 0.0) or 0.0))
    x = float(block.get("x", 0.0))
    out = _out_dir(args, cfg)
    if out:
        sol.to_csv(os.path.join(out, "slices.csv"))
    _emit(u=sol.evaluate(t_end, x), t=t_end, x=x, dt=sol.grid.dt or 0.0)
    return 0


def _cmd_invariant(args, cfg) -> int:
    model = _build_model(args, cfg)
    grid = _build_grid(args, cfg)
    block = _run_block(args, cfg, f=args.f, tolerance=args.tolerance,
                       x_ref=args.x_ref)
    f = _parse_expr(_require(block, "f", "a test function"), "test function")
    res = longtime.invariant_value(
        model, f, grid=grid, tol=float(block.get("tolerance", 1e-3)),
        x_ref=float(block.get("x_ref", 0.0)))
    out = _out_dir(args, cfg)
    if out:
        res.trace_csv(os.path.join(out, "trace.csv"))
    _emit(lambda_bar=res.lambda_bar, rate=res.rate_estimate,
          defect=res.x_dependence_defect, horizon=res.horizon)
    return 0


def _cmd_ergodic(args, cfg) -> int:
    model = _build_model(args, cfg)
    grid = _build_grid(args, cfg)
    block = _run_block(args, cfg, f=args.f, tolerance=args.tolerance)
    f = _parse_expr(_require(block, "f", "a running cost"), "running cost")
    res = longtime.ergodic_value(model, f, grid=grid,
                                 tol=float(block.get("tolerance", 1e-3)))
    _emit(**{"lambda": res.lambda_,
             "lambda_time_avg": res.lambda_time_avg,
             "lambda_discount": res.lambda_discount,
             "method_disagreement": res.method_disagreement})
    return 0


def _cmd_compare(args, cfg) -> int:
    model = _build_model(args, cfg)
    grid = _build_grid(args, cfg)
    labels = args.f or _run_block(args, cfg).get("f")
    if isinstance(labels, str):
        labels = [labels]
    if labels:
        dictionary = [measures.DictEntry(src, _parse_expr(src, "entry"), 2)
                      for src in labels]
    else:
        dictionary = measures.default_dictionary()
    report = measures.sublinearity_report(model, dictionary, grid=grid)
    out = _out_dir(args, cfg)
    if out:
        report.to_csv(os.path.join(out, "report.csv"))
    print(report.summary(), file=sys.stderr)
    worst = max((abs(e.gap) for e in report.entries), default=0.0)
    _emit(entries=len(report.entries),
          sublinearity_violations=len(report.sublinearity_violations),
          ordering_violations=len(report.ordering_violations),
          max_abs_gap=worst)
    return 0 if report.clean else 1


def _cmd_mc(args, cfg) -> int:
    model = _build_model(args, cfg)
    block = _run_block(args, cfg, f=args.f, t_end=args.t_end, dt=args.dt,
                       n_paths=args.n_paths, seed=args.seed,
                       functional=args.functional, x0=args.x0,
                       policies=args.policy or None)
    f = _parse_expr(_require(block, "f", "a test function"), "test function")
    t_end = float(_require(block, "t_end", "a horizon"))
    dt = float(block.get("dt", 1e-3))
    n_paths = int(block.get("n_paths", 10000))
    seed = int(block.get("seed", 0))
    x0 = float(block.get("x0", 0.0))
    functional = str(block.get("functional", "terminal"))
    specs = block.get("policies") or ["hi"]

    bang = None
    if "bang" in specs:
        grid = _build_grid(args, cfg)
        sol = pde.solve(model, f, t_end, grid=grid)
        bang = mc.bang_bang_policy(model, sol)
    policies = [_policy_from_spec(s, model.g, bang) for s in specs]

    dump_k = args.dump_paths
    estimates = []
    dump = None
    for pol in policies:
        if dump_k and dump is None:
            est, dump = mc.simulate(model, pol, x0, f, t_end, dt, n_paths,
                                    seed, functional, path_dump=dump_k)
        else:
            est = mc.simulate(model, pol, x0, f, t_end, dt, n_paths, seed,
                              functional)
        estimates.append(est)
    best = max(estimates, key=lambda e: e.mean)
    out = _out_dir(args, cfg)
    if out and dump is not None:
        times = np.linspace(0.0, t_end, dump.shape[0])
        mc.dump_paths_csv(os.path.join(out, "paths.csv"), times, dump)
    _emit(mean=best.mean, std_error=best.std_error, n_paths=best.n_paths,
          policies=len(policies), seed=seed)
    return 0


def _cmd_paper_checks(args, cfg) -> int:
    if args.list:
        for c in checks.CHECKS:
            print(f"{c.name:24s} {c.summary}")
        return 0
    names = args.only.split(",") if args.only else None
    try:
        results = checks.run_checks(names=names)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    failed = [r for r in results if not r.passed]
    print(f"RESULT {len(results) - len(failed)}/{len(results)} passed")
    return 1 if failed else 0


def _add_model_flags(sub):
    sub.add_argument("--model", help="builtin model NAME[:PARAM[,PARAM]] "
                                     "(g_ou:ALPHA, gou_bracket:M, dirac)")
    sub.add_argument("--b", help="drift expression for a custom model")
    sub.add_argument("--h", help="bracket-drift expression for a custom model")
    sub.add_argument("--sigma-coef", help="diffusion expression for a "
                                          "custom model")
    sub.add_argument("--sigma", help="variance interval 'LO,HI'")
    sub.add_argument("--p", type=int, help="growth order of test functions")


def _add_grid_flags(sub):
    sub.add_argument("--x-min", type=float)
    sub.add_argument("--x-max", type=float)
    sub.add_argument("--nx", type=int)
    sub.add_argument("--grid-dt", type=float, help="override the CFL-auto "
                                                   "time step")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ergo",
        description="invariant and ergodic sublinear expectations of 1-D "
                    "diffusions under volatility uncertainty")
    parser.add_argument("--config", help="JSON config file; flags win")
    parser.add_argument("--out", help="directory for CSV artifacts")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gnormal", help="sublinear-normal expectation of f")
    p.add_argument("--f")
    p.add_argument("--variance", type=float)
    p.add_argument("--sigma")
    _add_grid_flags(p)
    p.set_defaults(func=_cmd_gnormal)

    p = sub.add_parser("solve", help="march initial data to a horizon")
    _add_model_flags(p)
    _add_grid_flags(p)
    p.add_argument("--f")
    p.add_argument("--t-end", type=float, dest="t_end")
    p.add_argument("--source", help="running-cost expression")
    p.add_argument("--discount", type=float)
    p.add_argument("--x", type=float, help="evaluation point (default 0)")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("invariant", help="long-time terminal value")
    _add_model_flags(p)
    _add_grid_flags(p)
    p.add_argument("--f")
    p.add_argument("--tolerance", type=float)
    p.add_argument("--x-ref", type=float, dest="x_ref")
    p.set_defaults(func=_cmd_invariant)

    p = sub.add_parser("ergodic", help="time-average value of a running cost")
    _add_model_flags(p)
    _add_grid_flags(p)
    p.add_argument("--f")
    p.add_argument("--tolerance", type=float)
    p.set_defaults(func=_cmd_ergodic)

    p = sub.add_parser("compare", help="invariant vs ergodic values over "
                                       "test functions")
    _add_model_flags(p)
    _add_grid_flags(p)
    p.add_argument("--f", action="append", help="repeatable; defaults to "
                                                "the builtin dictionary")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("mc", help="scenario Monte Carlo lower bounds")
    _add_model_flags(p)
    _add_grid_flags(p)
    p.add_argument("--f")
    p.add_argument("--t-end", type=float, dest="t_end")
    p.add_argument("--dt", type=float)
    p.add_argument("--n-paths", type=int, dest="n_paths")
    p.add_argument("--seed", type=int)
    p.add_argument("--x0", type=float)
    p.add_argument("--functional", choices=["terminal", "running"])
    p.add_argument("--policy", action="append",
                   help="repeatable: lo, hi, const:VALUE or bang")
    p.add_argument("--dump-paths", type=int, dest="dump_paths",
                   help="write the first K trajectories to paths.csv")
    p.set_defaults(func=_cmd_mc)

    p = sub.add_parser("paper-checks", help="run the acceptance suite")
    p.add_argument("--only", help="comma-separated subset of check names")
    p.add_argument("--list", action="store_true", help="list check names")
    p.set_defaults(func=_cmd_paper_checks)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _threads_cap()  # validated; kernels are single-threaded by design
        cfg = _load_config(args.config)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (expr.ExprError, pde.CflError, pde.NonFiniteError,
            pde.OutOfRangeError, longtime.ConvergenceError,
            mc.PolicyRangeError, FloatingPointError, ValueError,
            RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
