"""Command-line entry point: ``wupgraph {build,resistance,eval,verify,minimize,run}``."""
from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import report as rpt
from .errors import CapacityError, ConfigValidationError, DegenerateInputError, WupError
from .functionals import (ProductVariant, energy, lp_norm, moment_nash_functional, nash_functional,
                          poincare_quotient, modified_poincare_quotient, uncertainty_product, variance)
from .optimizer import OptimizerOptions, minimize_product
from .resistance import resistance_matrix, to_binary, write_resistance_csv
from .space import ball, load_space, save_space
from .verifier import verify_space


def _value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _params(pairs):
    out = {}
    for pair in pairs or ():
        key, sep, val = pair.partition("=")
        if not sep:
            raise ConfigValidationError([f"--param {pair!r}: expected KEY=VALUE"])
        out[key] = _value(val)
    return out


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _read_function(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and r[0].strip()]
    try:
        return np.array([float(r[0]) for r in rows])
    except ValueError:  # header line
        return np.array([float(r[0]) for r in rows[1:]])


def cmd_build(args):
    spec = {"builder": args.builder, "params": _params(args.param)}
    if args.builder == "pcf":
        with open(args.ifs) as fh:
            spec["params"]["ifs"] = json.load(fh)
    space = rpt.build_space(spec, args.metric)
    if args.boundary is not None:
        space = space.with_boundary(json.loads(args.boundary))
    save_space(space, args.out)
    return 0


def cmd_resistance(args):
    rm = resistance_matrix(load_space(args.space))
    if args.format == "binary":
        with open(args.out, "wb") as fh:
            fh.write(to_binary(rm))
    elif args.out in (None, "-"):
        write_resistance_csv(rm, sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            write_resistance_csv(rm, fh)
    return 0


def _safe(fn, *a):
    try:
        return fn(*a)
    except DegenerateInputError:
        return None


def cmd_eval(args):
    space = load_space(args.space)
    u = _read_function(args.function)
    norm = lp_norm(space, u, 2)
    unit = u / norm if norm > 0 else u
    record = {
        "energy": energy(space, u),
        "variance": variance(space, u, args.gamma),
        "norms": {"l1": lp_norm(space, u, 1), "l2": norm},
        "product": {v.value: (uncertainty_product(space, unit, args.gamma, v) if norm > 0 else None)
                    for v in ProductVariant},
        "quotients": {
            "nash": _safe(nash_functional, space, u, args.theta),
            "local_nash": _safe(nash_functional, space, u, args.theta, True),
            "moment_nash": _safe(moment_nash_functional, space, u, args.theta),
        },
    }
    if args.center is not None and args.radius is not None:
        record["quotients"]["poincare"] = _safe(poincare_quotient, space, u, ball(space, args.center, args.radius))
        record["quotients"]["modified_poincare"] = _safe(modified_poincare_quotient, space, u,
                                                         args.radius, args.center)
    _write(args.out, rpt.dumps(record))
    return 0


def cmd_verify(args):
    space = load_space(args.space)
    rep = verify_space(space, gamma=args.gamma, k=args.k, theta=args.theta, C0=args.C0,
                       restarts=args.restarts, seed=args.seed)
    _write(args.out, rpt.dumps(rep.to_dict()))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            rpt.write_residuals_csv(rep.residuals, fh)
    return 0


def cmd_minimize(args):
    space = load_space(args.space)
    opts = OptimizerOptions(starts=args.starts, seed=args.seed, max_iters=args.max_iters)
    res = minimize_product(space, args.gamma, args.variant, opts)
    _write(args.out, rpt.dumps(res.to_dict()))
    return rpt.EXIT_DEGENERATE if res.degenerate else 0


def cmd_run(args):
    with open(args.config) as fh:
        config = json.load(fh)
    for key in ("seed", "gamma", "theta", "C0"):
        val = getattr(args, key)
        if val is not None:
            config[key] = val
    if args.starts is not None:
        config.setdefault("optimizer", {})["starts"] = args.starts
    _, code, paths = rpt.run_experiment(config, out_dir=args.out_dir)
    print(paths["report"])
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wupgraph", description="Weak uncertainty principle on weighted graphs.")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="build a space and write it as JSON")
    b.add_argument("builder", choices=sorted(rpt.BUILDERS) + ["pcf"])
    b.add_argument("-p", "--param", action="append", help="builder argument KEY=VALUE (repeatable)")
    b.add_argument("--ifs", help="IFS JSON file for the pcf builder")
    b.add_argument("--metric", choices=rpt.METRIC_SOURCES)
    b.add_argument("--boundary", help="JSON list of boundary vertices")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build)

    r = sub.add_parser("resistance", help="all-pairs effective resistance")
    r.add_argument("--space", required=True)
    r.add_argument("--format", choices=["csv", "binary"], default="csv")
    r.add_argument("--out")
    r.set_defaults(func=cmd_resistance)

    e = sub.add_parser("eval", help="evaluate functionals of one function")
    e.add_argument("--space", required=True)
    e.add_argument("--function", required=True, help="one-column CSV of vertex values")
    e.add_argument("--gamma", type=float, default=2.0)
    e.add_argument("--theta", type=float, default=1.0)
    e.add_argument("--center", type=int)
    e.add_argument("--radius", type=float)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify", help="estimate hypothesis constants")
    v.add_argument("--space", required=True)
    v.add_argument("--gamma", type=float)
    v.add_argument("--theta", type=float)
    v.add_argument("--C0", type=float)
    v.add_argument("--k", type=float, default=2.0)
    v.add_argument("--restarts", type=int, default=16)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--csv", help="write the residual table here")
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    m = sub.add_parser("minimize", help="minimize the uncertainty product")
    m.add_argument("--space", required=True)
    m.add_argument("--gamma", type=float, required=True)
    m.add_argument("--variant", required=True, choices=["unbounded", "bounded-energy", "bounded-variance"])
    m.add_argument("--starts", type=int, default=32)
    m.add_argument("--max-iters", type=int, default=5000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out")
    m.set_defaults(func=cmd_minimize)

    x = sub.add_parser("run", help="full pipeline from a config file")
    x.add_argument("--config", required=True)
    x.add_argument("--out-dir")
    x.add_argument("--seed", type=int)
    x.add_argument("--starts", type=int)
    x.add_argument("--gamma", type=_value)
    x.add_argument("--theta", type=float)
    x.add_argument("--C0", type=_value)
    x.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigValidationError as exc:
        for problem in exc.problems:
            print(f"error: {problem}", file=sys.stderr)
        return rpt.EXIT_VALIDATION
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return rpt.EXIT_CAPACITY
    except DegenerateInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return rpt.EXIT_DEGENERATE
    except (WupError, OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return rpt.EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
