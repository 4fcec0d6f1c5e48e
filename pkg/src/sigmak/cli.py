"""Command-line front end.

Exit codes: 0 success, 1 suite violations or a failed solve (the report is
still written), 2 configuration errors.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dirichlet, sphere
from .errors import (
    ConditionViolatedError,
    ConfigError,
    DiscretizationError,
    DomainError,
    NoSubsolutionError,
    PreconditionError,
    RootNotFoundError,
    SolverStalled,
)
from .expr import Expression, parse
from .newton import SolveReport, SolverConfig, _jsonable
from .operator import CoefficientSet, OperatorSpec, cubic_reduce
from .verify import DEFAULT_PAIRS, STRATEGIES, SUITES, run_suite

log = logging.getLogger("sigmak")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
SOLVER_KEYS = {f for f in SolverConfig.__dataclass_fields__}


# ---------------------------------------------------------------------------
# config helpers


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def _get(cfg, key, kind=None, default=..., where=""):
    name = f"{where}{key}"
    if key not in cfg:
        if default is ...:
            raise ConfigError(f"missing field {name!r}")
        return default
    val = cfg[key]
    if kind is not None:
        try:
            if kind is int and (isinstance(val, bool) or float(val) != int(val)):
                raise ValueError
            val = kind(val)
        except (TypeError, ValueError):
            raise ConfigError(f"field {name!r}: expected {kind.__name__}, got {val!r}") from None
    return val


def _solver_config(cfg: dict) -> SolverConfig:
    opts = cfg.get("solver", {}) or {}
    if not isinstance(opts, dict):
        raise ConfigError("field 'solver' must be an object")
    unknown = set(opts) - SOLVER_KEYS
    if unknown:
        raise ConfigError(f"field 'solver': unknown keys {sorted(unknown)}")
    out = {}
    for key, val in opts.items():
        kind = type(getattr(SolverConfig, key))
        out[key] = _get(opts, key, kind, where="solver.")
    return SolverConfig(**out)


def _coefficients(cfg: dict, k: int, variables) -> CoefficientSet:
    c = cfg.get("coefficients", {})
    if not isinstance(c, dict):
        raise ConfigError("field 'coefficients' must be an object")
    alpha = parse(c.get("alpha", 0.0), variables, "coefficients.alpha")
    lower = c.get("alpha_l", [])
    if not isinstance(lower, list):
        raise ConfigError("field 'coefficients.alpha_l' must be a list")
    alpha_l = [parse(e, variables, f"coefficients.alpha_l[{i}]") for i, e in enumerate(lower)]
    factors = c.get("factors")
    if factors is not None:
        if not isinstance(factors, list):
            raise ConfigError("field 'coefficients.factors' must be a list")
        facs = []
        for i, f in enumerate(factors):
            if f is None:
                facs.append(None)
                continue
            where = f"coefficients.factors[{i}]."
            g = parse(_get(f, "g", where=where), variables, where + "g")
            facs.append((g, _get(f, "p", float, where=where)))
        factors = facs
    if len(alpha_l) > k - 1 or (factors is not None and len(factors) > k - 1):
        raise ConfigError(f"at most k-1 = {k - 1} lower coefficients allowed")
    return CoefficientSet(alpha=alpha, alpha_l=alpha_l, factors=factors)


def _nk(cfg):
    n = _get(cfg, "n", int)
    k = _get(cfg, "k", int)
    if not 2 <= k <= n:
        raise ConfigError(f"fields 'n', 'k': need 2 <= k <= n, got n={n}, k={k}")
    return n, k


def _apply_overrides(cfg: dict, args) -> dict:
    cfg = dict(cfg)
    cfg["output"] = dict(cfg.get("output", {}) or {})
    cfg["solver"] = dict(cfg.get("solver", {}) or {})
    if getattr(args, "report", None):
        cfg["output"]["report"] = args.report
    if getattr(args, "csv", None):
        cfg["output"]["csv"] = args.csv
    if getattr(args, "tol", None) is not None:
        cfg["solver"]["tol"] = args.tol
    if getattr(args, "h", None) is not None:
        cfg["h"] = args.h
    if getattr(args, "nodes", None) is not None:
        cfg["nodes"] = args.nodes
    return cfg


def _write_report(path, payload: dict, timestamp: bool):
    if not path:
        return
    payload = dict(payload)
    if timestamp:
        payload["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True, allow_nan=True)
    Path(path).write_text(text + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_verify(args) -> int:
    suites = list(SUITES) if args.suite == ["all"] or "all" in args.suite else args.suite
    pairs = args.nk or [list(p) for p in DEFAULT_PAIRS]
    reports = []
    for suite in suites:
        rep = run_suite(suite, pairs=pairs, count=args.count, seed=args.seed, tol=args.tol,
                        strategy=args.strategy)
        reports.append(rep)
        status = "pass" if rep.passed else f"FAIL ({rep.violations} violations)"
        print(f"{suite}: {status}")
    payload = {"command": "verify", "seed": args.seed, "passed": all(r.passed for r in reports),
               "suites": [r.to_dict() for r in reports]}
    _write_report(args.report, payload, not args.no_timestamp)
    return EXIT_OK if payload["passed"] else EXIT_FAIL


def _grid(cfg):
    dom = cfg.get("domain", {"type": "rectangle", "box": [-1, 1, -1, 1]})
    h = _get(cfg, "h", float)
    kind = dom.get("type", "rectangle")
    if kind == "rectangle":
        box = dom.get("box", [-1, 1, -1, 1])
        if not (isinstance(box, list) and len(box) == 4):
            raise ConfigError("field 'domain.box' must be [x0, x1, y0, y1]")
        return dirichlet.Grid2D.rectangle(*map(float, box), h)
    if kind == "disk":
        center = dom.get("center", [0.0, 0.0])
        return dirichlet.Grid2D.disk(tuple(map(float, center)), _get(dom, "radius", float, where="domain."), h)
    raise ConfigError(f"field 'domain.type': unknown domain {kind!r}")


def cmd_solve_dirichlet(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    n, k = _nk(cfg)
    if n != 2:
        raise ConfigError("field 'n': planar grids need n = 2")
    spec = OperatorSpec(n, k, _coefficients(cfg, k, ("x", "y")))
    solver = _solver_config(cfg)
    try:
        grid = _grid(cfg)
    except (DomainError, DiscretizationError) as exc:
        raise ConfigError(f"field 'domain'/'h': {exc}") from None
    bnd = Expression(_get(cfg, "boundary"), ("x", "y"), "boundary")
    exact = cfg.get("exact")
    exact = Expression(exact, ("x", "y"), "exact") if exact is not None else None
    out = cfg["output"]
    payload = {"command": "solve-dirichlet", "config": cfg}
    phi = dirichlet.ScalarField.from_function(grid, bnd)
    code = EXIT_OK
    try:
        u0, amp = dirichlet.find_subsolution(phi, grid, spec, margin_rel=solver.margin_rel)
        payload["subsolution_amplitude"] = amp
        u, rep = dirichlet.newton_solve(u0, spec, solver)
    except (SolverStalled, NoSubsolutionError, PreconditionError) as exc:
        rep = getattr(exc, "report", None) or SolveReport(message=str(exc))
        rep.message = str(exc)
        u = getattr(exc, "field", None)
        payload["report"] = rep.to_dict()
        _write_report(out.get("report"), payload, not args.no_timestamp)
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    payload["report"] = rep.to_dict()
    if exact is not None:
        ex = dirichlet.ScalarField.from_function(grid, exact)
        payload["max_node_error"] = float(np.nanmax(np.abs(u.values - ex.values)))
    _write_report(out.get("report"), payload, not args.no_timestamp)
    if out.get("csv"):
        dirichlet.write_fields_csv(out["csv"], u, spec)
    print(f"converged={rep.converged} iterations={rep.iterations} "
          f"residual={rep.residual_history[-1]:.3e} min_sigma={rep.sigma_min}")
    return code if rep.converged else EXIT_FAIL


def cmd_solve_sphere(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    n, k = _nk(cfg)
    spec = OperatorSpec(n, k, _coefficients(cfg, k, ("theta",)))
    solver = _solver_config(cfg)
    count = _get(cfg, "nodes", int, default=65)
    try:
        init = Expression(cfg.get("initial", 1.0), ("theta",), "initial")
        u0 = sphere.AxisymField.from_function(init, count, n)
    except DiscretizationError as exc:
        raise ConfigError(f"field 'nodes': {exc}") from None
    out = cfg["output"]
    payload = {"command": "solve-sphere", "config": cfg}
    try:
        u, rep = sphere.solve_axisym(spec, u0, solver)
    except (SolverStalled, PreconditionError) as exc:
        rep = getattr(exc, "report", None) or SolveReport()
        rep.message = str(exc)
        payload["report"] = rep.to_dict()
        _write_report(out.get("report"), payload, not args.no_timestamp)
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    payload["report"] = rep.to_dict()
    try:
        payload["constant_root"] = sphere.constant_solution_root(spec)
        payload["max_deviation_from_constant"] = float(np.max(np.abs(u.values - payload["constant_root"])))
    except (DomainError, RootNotFoundError):
        pass
    _write_report(out.get("report"), payload, not args.no_timestamp)
    if out.get("csv"):
        sphere.write_fields_csv(out["csv"], u, spec, rep.extra["multiplier"])
    print(f"converged={rep.converged} iterations={rep.iterations} H={rep.h_diagnostic:.6g} "
          f"multiplier={rep.extra['multiplier']:.3e}")
    return EXIT_OK if rep.converged else EXIT_FAIL


def cmd_sweep(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    n, k = _nk(cfg)
    fam = Expression(_get(cfg, "family"), ("theta", "eps"), "family")
    alpha = parse(cfg.get("alpha", 0.0), ("theta",), "alpha")
    p = cfg.get("p", k - 1)
    eps = _get(cfg, "eps")
    if not isinstance(eps, list) or not eps:
        raise ConfigError("field 'eps' must be a non-empty list")
    eps = [float(e) for e in eps]
    count = _get(cfg, "nodes", int, default=65)
    out = cfg["output"]
    template = OperatorSpec(n, k, CoefficientSet(alpha=alpha))
    rows = sphere.degenerate_sweep(fam, p, template, eps, count, _solver_config(cfg))
    ok = all(r["converged"] for r in rows)
    hs = [r["sup_H"] for r in rows if r["converged"]]
    payload = {"command": "sweep-degenerate", "config": cfg, "rows": rows,
               "sup_H_ratio": (max(hs) / min(hs)) if hs else None}
    _write_report(out.get("report"), payload, not args.no_timestamp)
    for r in rows:
        if r["converged"]:
            print(f"eps={r['eps']:.1e} sup_H={r['sup_H']:.6g} min_sigma_k-1={r['min_sigma_km1']:.3e} "
                  f"iterations={r['iterations']} multiplier={r['multiplier']:.3e}")
        else:
            print(f"eps={r['eps']:.1e} FAILED: {r.get('message', '')}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_reduce_cubic(args) -> int:
    try:
        red = cubic_reduce(args.a, args.b, args.c, args.n)
    except (ConditionViolatedError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"s = {red.s:.17g}")
    print(f"alpha_new = {red.alpha_new:.17g}")
    print(f"gamma = {red.gamma:.17g}")
    print(f"flipped = {str(red.flipped).lower()}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def _pair(text):
    try:
        n, k = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected n,k, got {text!r}") from None
    return [n, k]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sigmak", description="Curvature-operator toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--report", help="JSON report path")
        p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp from the report")

    v = sub.add_parser("verify", help="run verification suites")
    v.add_argument("--suite", nargs="+", default=["all"], choices=["all", *SUITES])
    v.add_argument("--nk", nargs="+", type=_pair, help="(n,k) pairs such as 2,2 3,3")
    v.add_argument("--count", type=int)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--tol", type=float)
    v.add_argument("--strategy", default="interior", choices=STRATEGIES)
    common(v)
    v.set_defaults(func=cmd_verify)

    for name, func, extra in (
        ("solve-dirichlet", cmd_solve_dirichlet, "h"),
        ("solve-sphere", cmd_solve_sphere, "nodes"),
        ("sweep-degenerate", cmd_sweep, "nodes"),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--csv")
        p.add_argument("--tol", type=float)
        if extra == "h":
            p.add_argument("--h", type=float)
        else:
            p.add_argument("--nodes", type=int)
        common(p)
        p.set_defaults(func=func)

    c = sub.add_parser("reduce-cubic")
    c.add_argument("--a", type=float, required=True)
    c.add_argument("--b", type=float, required=True)
    c.add_argument("--c", type=float, required=True)
    c.add_argument("--n", type=int, required=True)
    c.set_defaults(func=cmd_reduce_cubic)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
