"""Command-line front end.

Subcommands: dist, dual, bounds, sweep, convolve, doubling, experiment,
verify.  All numeric output uses 17-significant-digit decimal formatting and
randomized commands echo their seed, so identical invocations are
byte-identical.  LEVY_OT_THREADS caps internal parallelism.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Optional

import numpy as np

from . import bounds, families, suites, transport, viscosity
from .measures import (
    DiscreteMeasure,
    SchemaError,
    load_measure,
    restrict_outside,
)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_SOLVER = 3


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _dump(obj, indent: int = 0) -> str:
    """JSON text with every float rendered at 17 significant digits."""
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f'{pad}  {json.dumps(str(k))}: {_dump(v, indent + 1)}' for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in seq):
            return "[" + ", ".join(_fmt(v) if isinstance(v, float) else str(v) for v in seq) + "]"
        items = [f"{pad}  {_dump(v, indent + 1)}" for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, float):
        return _fmt(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
            if not text.endswith("\n"):
                fh.write("\n")
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _load_two(args) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    return load_measure(args.mu), load_measure(args.nu)


# -- subcommands -------------------------------------------------------------

def cmd_dist(args) -> int:
    try:
        mu, nu = _load_two(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        rep = transport.solve(mu, nu, transport.CostSpec(args.p))
    except (RuntimeError, ValueError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    _emit(_dump(rep.to_dict()), args.out)
    return EXIT_OK


def cmd_dual(args) -> int:
    try:
        mu, nu = _load_two(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        rep = transport.solve(mu, nu, transport.CostSpec(args.p))
    except (RuntimeError, ValueError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    doc = rep.duals.to_dict()
    doc["dual_value"] = transport.dual_value(rep.duals, mu, nu)
    doc["primal_value"] = rep.value
    doc["gap"] = rep.gap
    _emit(_dump(doc), args.out)
    return EXIT_OK


def cmd_bounds(args) -> int:
    try:
        mu, nu = _load_two(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    p = args.p
    slack_tol = 1e-8
    rows: list[dict] = []

    def row(name: str, lhs: float, rhs: float) -> None:
        slack = rhs - lhs
        rows.append(
            {
                "bound_name": name,
                "lhs": lhs,
                "rhs": rhs,
                "slack": slack,
                "pass": bool(slack >= -slack_tol),
            }
        )

    in_ball = (mu.n_atoms == 0 or mu.max_radius() < 1.0) and (
        nu.n_atoms == 0 or nu.max_radius() < 1.0
    )
    dist = transport.distance(mu, nu, p)
    if in_ball:
        row("tv_power", dist, bounds.tv_power_bound(mu, nu, p))
        psi = bounds.RadialTestFunction.hat(0.2, 0.8)
        lhs, rhs = bounds.restricted_integral_bound(mu, nu, psi, p)
        row("restricted_integral", lhs, rhs)
    try:
        ppb = bounds.positive_part_dual_bound(mu, nu, p)
        row("positive_part_dual", dist**p, ppb)
    except ValueError:
        pass  # difference is signed; bound does not apply
    r = args.r
    row(
        "restriction",
        transport.distance(mu, restrict_outside(mu, r), p) ** p,
        bounds.restriction_bound(mu, r, p),
    )
    if args.json:
        _emit(_dump({"p": p, "rows": rows}), args.out)
    else:
        lines = ["bound_name,lhs,rhs,slack,pass"]
        for rw in rows:
            lines.append(
                f"{rw['bound_name']},{_fmt(rw['lhs'])},{_fmt(rw['rhs'])},"
                f"{_fmt(rw['slack'])},{str(rw['pass']).lower()}"
            )
        _emit("\n".join(lines), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            config = json.load(fh)
        runtime = families.build_family(config)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    pairs = families.sweep_pairs(args.pairs, runtime.dim, args.seed)
    report = None
    if pairs:
        report = families.regularity_sweep(
            runtime.make_measure,
            pairs,
            p=args.p,
            s=args.s,
            truncation_cost=lambda x: runtime.truncation_cost(x, args.p),
        )
        print(f"max_ratio={_fmt(report.max_ratio)}", file=sys.stderr)
    if args.json:
        doc = {
            "seed": args.seed,
            "p": args.p,
            "s": args.s,
            "max_ratio": report.max_ratio if report else 0.0,
            "rows": [
                {
                    "x": [float(c) for c in rw.x],
                    "y": [float(c) for c in rw.y],
                    "separation": rw.separation,
                    "distance": rw.distance,
                    "ratio": rw.ratio,
                    "truncation_cost": rw.truncation_cost,
                }
                for rw in (report.rows if report else [])
            ],
        }
        _emit(_dump(doc), args.out)
        return EXIT_OK
    lines = [f"# seed={args.seed} p={_fmt(args.p)} s={_fmt(args.s)}"]
    lines.append("x,y,separation,distance,ratio,truncation_cost")
    for rw in (report.rows if report else []):
        xs = ";".join(_fmt(c) for c in rw.x)
        ys = ";".join(_fmt(c) for c in rw.y)
        lines.append(
            f"{xs},{ys},{_fmt(rw.separation)},{_fmt(rw.distance)},"
            f"{_fmt(rw.ratio)},{_fmt(rw.truncation_cost)}"
        )
    _emit("\n".join(lines), args.out)
    return EXIT_OK


def _load_grid(path: str) -> viscosity.GridFunction:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(
                f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            ) from exc
    try:
        return viscosity.GridFunction(
            np.asarray(doc["lo"], dtype=float),
            np.asarray(doc["hi"], dtype=float),
            np.asarray(doc["values"], dtype=float),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: invalid grid function document: {exc}") from exc


def cmd_convolve(args) -> int:
    try:
        grid = _load_grid(args.grid)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    op = viscosity.sup_convolution if args.mode == "sup" else viscosity.inf_convolution
    result = op(grid, args.delta)
    doc = {
        "lo": [float(v) for v in result.lo],
        "hi": [float(v) for v in result.hi],
        "values": result.values.tolist(),
        "mode": args.mode,
        "delta": args.delta,
    }
    _emit(_dump(doc), args.out)
    return EXIT_OK


def cmd_doubling(args) -> int:
    try:
        u = _load_grid(args.u)
        v = _load_grid(args.v)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    spec = viscosity.PenalizationSpec(epsilon=args.epsilon, kappa=args.kappa, p=args.p)
    res = viscosity.doubling_maximize(u, v, spec)
    doc = {
        "x_star": [float(c) for c in res.x_star],
        "y_star": [float(c) for c in res.y_star],
        "value": res.value,
        "epsilon": args.epsilon,
        "kappa": args.kappa,
        "p": args.p,
    }
    _emit(_dump(doc), args.out)
    return EXIT_OK


def cmd_experiment(args) -> int:
    shift = args.shift
    center = args.center

    def measures(x: float) -> DiscreteMeasure:
        return DiscreteMeasure(1, [[center + shift * math.sin(x)]], [1.0])

    eq = viscosity.EquationSpec(
        lam=args.lam,
        lam1=args.lam,
        c=lambda x: args.lam,
        f=lambda x: math.sin(x) + 0.3 * math.cos(2.0 * x),
        measures=measures,
        lipschitz_C=shift,
    )
    epsilons = [float(tok) for tok in args.epsilons.split(",")]
    report = viscosity.basic_idea_experiment(eq, n_nodes=args.nodes, epsilons=epsilons)
    doc = {
        "nodes": args.nodes,
        "lipschitz_C": shift,
        "u_leq_v": report.u_leq_v,
        "penalty_decreasing": report.penalty_decreasing,
        "rows": [
            {
                "epsilon": r.epsilon,
                "kappa": r.kappa,
                "x_star": r.x_star,
                "y_star": r.y_star,
                "gap": r.gap,
                "penalty_term": r.penalty_term,
                "distance_term": r.distance_term,
            }
            for r in report.rows
        ],
    }
    if args.csv:
        lines = ["epsilon,kappa,x_star,y_star,gap,penalty_term,distance_term"]
        for r in report.rows:
            lines.append(
                ",".join(
                    _fmt(v)
                    for v in (
                        r.epsilon, r.kappa, r.x_star, r.y_star,
                        r.gap, r.penalty_term, r.distance_term,
                    )
                )
            )
        _emit("\n".join(lines), args.out)
    else:
        _emit(_dump(doc), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.replay:
        try:
            with open(args.replay, "r", encoding="utf-8") as fh:
                bundle = json.load(fh)
            result = suites.replay(bundle)
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            print(f"error: cannot replay bundle: {exc}", file=sys.stderr)
            return EXIT_USAGE
        status = "ok" if result.passed else "FAIL"
        print(f"[{status}] {bundle['suite']} i={result.index}: {result.detail}")
        return EXIT_OK if result.passed else EXIT_FAIL

    tols = {}
    if args.tol:
        for tok in args.tol:
            key, _, val = tok.partition("=")
            tols[key] = float(val)
    try:
        report = suites.run_suite(args.suite, args.n, args.seed, tols)
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_USAGE
    print(f"# suite={report.suite} n={args.n} seed={report.seed}")
    fails = report.failures
    for row in report.rows:
        status = "ok" if row.passed else "FAIL"
        print(f"[{status}] i={row.index}: {row.detail}")
    print(f"# passed {len(report.rows) - len(fails)}/{len(report.rows)}")
    if fails:
        bundle = {
            "suite": report.suite,
            "seed": report.seed,
            "index": fails[0].index,
            "detail": fails[0].detail,
            "tols": tols,
        }
        path = args.reproducer or f"levyot-failure-{report.suite}-{fails[0].index}.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(bundle, fh, indent=2)
        print(f"# reproducer written to {path}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="levyot",
        description="Reservoir optimal transport between discretized Levy measures.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_out(p):
        p.add_argument("--out", default=None, help="write output to a file instead of stdout")

    p = sub.add_parser("dist", help="solve the transport problem between two measure files")
    p.add_argument("mu")
    p.add_argument("nu")
    p.add_argument("--p", type=float, default=2.0)
    add_out(p)
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("dual", help="report the optimal dual potentials")
    p.add_argument("mu")
    p.add_argument("nu")
    p.add_argument("--p", type=float, default=2.0)
    add_out(p)
    p.set_defaults(func=cmd_dual)

    p = sub.add_parser("bounds", help="closed-form bounds against the exact distance (CSV)")
    p.add_argument("mu")
    p.add_argument("nu")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--r", type=float, default=0.5, help="radius for the restriction bound")
    p.add_argument("--json", action="store_true", help="emit JSON instead of CSV")
    add_out(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("sweep", help="regularity sweep of a family config (CSV)")
    p.add_argument("--config", required=True)
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--s", type=float, default=1.0)
    p.add_argument("--pairs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true", help="emit JSON instead of CSV")
    add_out(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("convolve", help="sup/inf-convolution of a grid function")
    p.add_argument("grid")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--mode", choices=["sup", "inf"], default="sup")
    add_out(p)
    p.set_defaults(func=cmd_convolve)

    p = sub.add_parser("doubling", help="penalized two-point maximization of u(x) - v(y)")
    p.add_argument("u")
    p.add_argument("v")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--kappa", type=float, default=0.5)
    p.add_argument("--p", type=float, default=2.0)
    add_out(p)
    p.set_defaults(func=cmd_doubling)

    p = sub.add_parser("experiment", help="linear-equation doubling experiment on a periodic line")
    p.add_argument("--nodes", type=int, default=512)
    p.add_argument("--epsilons", default="1e-1,1e-2,1e-3,1e-4")
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--shift", type=float, default=0.1, help="translation amplitude of the family")
    p.add_argument("--center", type=float, default=0.5, help="base position of the single atom")
    p.add_argument("--csv", action="store_true", help="emit per-epsilon CSV instead of JSON")
    add_out(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("verify", help="run a randomized invariant suite")
    p.add_argument("--suite", required=False, default=None)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", action="append", default=None, help="override as name=value")
    p.add_argument("--replay", default=None, help="replay a failure bundle")
    p.add_argument("--reproducer", default=None, help="path for the failure bundle")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "verify" and not args.replay and not args.suite:
        print("error: verify needs --suite or --replay", file=sys.stderr)
        return EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
