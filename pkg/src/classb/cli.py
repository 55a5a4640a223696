"""``classb`` command-line interface.

JSON on stdout by default (``--format csv`` for tables), diagnostics on
stderr.  Exit status: 0 success, 1 computation error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from fractions import Fraction

import numpy as np

from . import __version__, acceptance, closedforms, families as F, inference, moments as M, oracle, tails
from . import transforms as T
from .errors import ClassBError
from .rng import default_seed

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument parsing helpers
# ---------------------------------------------------------------------------


def _split_top(text, sep=","):
    """Split on ``sep`` outside brackets."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch in "[(":
            depth += 1
        elif ch in "])":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if cur or parts:
        parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def _value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        raise UsageError(f"cannot read value {text!r}; use numbers or [..] lists") from None


def parse_pairs(text):
    """``'n=6,p=[0.2,0.3]'`` -> ``{'n': 6, 'p': [0.2, 0.3]}``."""
    out = {}
    if not text:
        return out
    for item in _split_top(text):
        name, eq, val = item.partition("=")
        if not eq or not name.strip():
            raise UsageError(f"expected name=value, got {item!r}")
        out[name.strip()] = _value(val.strip())
    return out


def _point(f, text):
    """Mean point from ``x=1.2`` / ``x1=1,x2=2`` / ``1,2``; None means the family default."""
    if text is None:
        return None
    if "=" not in text:
        vals = [_value(v) for v in _split_top(text)]
        if len(vals) != f.dim:
            raise UsageError(f"expected {f.dim} coordinates, got {len(vals)}")
        return [float(v) for v in vals]
    pairs = parse_pairs(text)
    missing = [v for v in f.mean_vars if v not in pairs]
    if missing:
        raise UsageError(f"--at is missing {', '.join(missing)}")
    return [float(pairs[v]) for v in f.mean_vars]


def _matrix(text, m):
    arr = np.asarray(_value(text), dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim == 1 and arr.size == m * m:
        arr = arr.reshape(m, m)
    return arr


def _family(args):
    if getattr(args, "vfile", None):
        return F.load_family_file(args.vfile)
    if not getattr(args, "family", None):
        raise UsageError("give --family NAME (with --params) or --vfile FILE")
    return F.builtin(args.family, parse_pairs(args.params))


def _apply_transforms(f, args):
    for op, val in getattr(args, "ops", None) or []:
        if op == "affine":
            A_text, sep, b_text = val.partition(";")
            if not sep:
                raise UsageError("--affine takes 'A;b', for example '[[2]];[1]'")
            A = _matrix(A_text, f.dim)
            b = np.atleast_1d(np.asarray(_value(b_text), dtype=float))
            f = T.affine(f, A, b)
        elif op == "convolve":
            f = T.convolve_iid(f, int(val))
        else:
            f = T.sample_mean(f, int(val))
    return f


class _Ops(argparse.Action):
    """Keeps --affine/--convolve/--mean in command-line order."""

    def __call__(self, parser, namespace, values, option_string=None):
        ops = list(getattr(namespace, "ops", None) or [])
        ops.append((self.dest, values))
        namespace.ops = ops


def _add_family(p, transforms=True):
    p.add_argument("--family", help="built-in family name (see `classb families`)")
    p.add_argument("--params", default="", help="name=value pairs, e.g. 'n=6,p=[0.2,0.3]'")
    p.add_argument("--vfile", help="JSON file {name, dim, mean_vars, V, domain[, constants]}")
    if transforms:
        p.add_argument("--affine", dest="affine", action=_Ops, metavar="A;b",
                       help="apply y = A x + b, e.g. '[[2,0],[1,1]];[0,1]'")
        p.add_argument("--convolve", dest="convolve", action=_Ops, metavar="N", help="sum of N iid copies")
        p.add_argument("--mean", dest="mean", action=_Ops, metavar="N", help="mean of N iid copies")


def _add_format(p):
    p.add_argument("--format", choices=("json", "csv"), default="json")


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, Fraction)):
        return float(obj)
    return obj


def _emit(doc, out):
    out.write(json.dumps(_plain(doc), indent=2, allow_nan=False))
    out.write("\n")


def _csv(rows, header, out):
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_families(args, out):
    if args.describe:
        fams = []
        for name in F.BUILTIN_NAMES:
            fams.append({"name": name, "parameters": F.PARAMETER_TABLE[name]})
        doc = {"families": fams}
        if args.family:
            doc["detail"] = _family(args).describe()
    else:
        doc = {"families": [{"name": n, "parameters": F.PARAMETER_TABLE[n]} for n in F.BUILTIN_NAMES]}
    if args.format == "csv":
        _csv([(f["name"], k, v) for f in doc["families"] for k, v in f["parameters"].items()],
             ["family", "parameter", "meaning"], out)
    else:
        _emit(doc, out)


def cmd_moments(args, out):
    kind = args.kind
    f = _apply_transforms(_family(args), args)
    table = M.moment_table(f, kind, args.order)
    x = _point(f, args.at)
    bindings = None if x is None else dict(zip(f.mean_vars, x))
    numeric = x is not None or f.x0 is not None
    if args.format == "csv":
        if not numeric:
            raise UsageError("csv output needs a point: pass --at")
        out.write(M.table_to_csv(table, bindings))
        return
    doc = M.table_to_json(table, bindings, symbolic=args.symbolic or not numeric, numeric=numeric)
    if numeric:
        env = f.bindings(x)
        doc["at"] = {v: env[v] for v in f.mean_vars}
    _emit(doc, out)


def cmd_verify(args, out):
    f = _apply_transforms(_family(args), args)
    try:
        grid = json.loads(args.grid) if args.grid else None
    except json.JSONDecodeError as e:
        raise UsageError(f"--grid is not valid JSON: {e}") from None
    rep = F.verify_eq1(f, grid, tol=args.tol)
    doc = rep.to_dict()
    doc["family"] = f.name
    if args.format == "csv":
        rows = [(" ".join(map(repr, z)), " ".join(map(repr, x)), " ".join(map(repr, r)))
                for (z, x), r in zip(rep.grid, rep.residuals)]
        _csv(rows, ["z", "x", "residual"], out)
    else:
        _emit(doc, out)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_transform(args, out):
    f = _apply_transforms(_family(args), args)
    doc = {"family": f.describe()}
    if args.order:
        table = M.moment_table(f, args.kind, args.order)
        doc["table"] = M.table_to_json(table, None, symbolic=True, numeric=f.x0 is not None)
    if args.format == "csv":
        rows = [(f"V[{i + 1}][{j + 1}]", str(v)) for i, row in enumerate(f.V) for j, v in enumerate(row)]
        _csv(rows, ["entry", "expr"], out)
    else:
        _emit(doc, out)


def cmd_fisher(args, out):
    f = _apply_transforms(_family(args), args)
    x = _point(f, args.at)
    info = inference.fisher_info(f, x)
    env = f.bindings(x)
    doc = {"family": f.name, "x": [env[v] for v in f.mean_vars], "fisher": info.tolist()}
    if args.symbolic:
        doc["symbolic"] = [[str(e) for e in row] for row in inference.fisher_info_symbolic(f)]
    if args.format == "csv":
        _csv(info.tolist(), [f"col{j + 1}" for j in range(f.dim)], out)
    else:
        _emit(doc, out)


def _grid_points(text, f, x):
    lo, hi, count = (_value(v) for v in text.split(":"))
    ts = np.linspace(float(lo), float(hi), int(count))
    if f.dim == 1:
        return [[t] for t in ts]
    raise UsageError("--grid is univariate; give multivariate points with repeated --y")


def cmd_tailbound(args, out):
    f = _apply_transforms(_family(args), args)
    x = _point(f, args.x)
    if x is None:
        x = [float(v) for v in f.x0]
    if args.grid:
        ys = _grid_points(args.grid, f, x)
    elif args.y:
        ys = [[float(v) for v in _split_top(y)] for y in args.y]
    else:
        raise UsageError("give --y or --grid")
    reports = tails.tail_grid(f, x, ys, workers=args.workers)
    if args.format == "csv":
        rows = [(" ".join(map(repr, r.y)), r.exponent_A, r.bound, r.quadrature_error, r.dual_exponent,
                 r.oracle_tail, r.applicable) for r in reports]
        _csv(rows, ["y", "exponent_A", "bound", "quadrature_error", "dual_exponent", "oracle_tail", "applicable"],
             out)
    elif len(reports) == 1 and not args.grid:
        _emit(reports[0].to_dict(), out)
    else:
        _emit({"family": f.name, "reports": [r.to_dict() for r in reports]}, out)


def cmd_closedform(args, out):
    rows = []
    if args.which == "quadratic":
        if args.family:
            a, b, x = closedforms.quadratic_coefficients(args.family, parse_pairs(args.params))
        else:
            if args.a is None or args.b is None or args.x is None:
                raise UsageError("quadratic needs --a, --b and --x, or --family with --params")
            a, b, x = args.a, args.b, args.x
        for k in range(1, args.order):
            rows.append({"order": k + 1, "value": float(closedforms.cumulant_quadratic(a, b, x, k))})
        doc = {"formula": "quadratic", "a": float(a), "b": float(b), "x": float(x), "cumulants": rows}
    elif args.which == "randomwalk":
        if args.n is None or args.p is None:
            raise UsageError("randomwalk needs --n and --p")
        for k in range(0, args.order - 1):
            rows.append({"order": k + 2, "value": float(closedforms.randomwalk_cumulant(args.n, args.p, k))})
        doc = {"formula": "randomwalk", "n": args.n, "p": args.p, "cumulants": rows}
    else:
        kmax = args.order
        doc = {"formula": "stirling",
               "rows": [[closedforms.stirling2(k, m) for m in range(k + 1)] for k in range(kmax + 1)]}
        if args.format == "csv":
            _csv([(k, m, v) for k, row in enumerate(doc["rows"]) for m, v in enumerate(row)], ["k", "m", "S"], out)
            return
        _emit(doc, out)
        return
    if args.format == "csv":
        _csv([(r["order"], repr(r["value"])) for r in rows], ["order", "cumulant"], out)
    else:
        _emit(doc, out)


def cmd_oracle(args, out):
    params = parse_pairs(args.params)
    name = args.family
    if not name:
        raise UsageError("oracle needs --family")
    if args.which == "enumerate":
        vals = oracle.oracle_moments(name, params, args.order)
        if args.format == "csv":
            _csv([(" ".join(map(str, k)), repr(v)) for k, v in vals.items()], ["k", "value"], out)
        else:
            _emit({"family": name, "kind": "raw", "order": args.order,
                   "entries": [{"k": list(k), "value": v} for k, v in vals.items()]}, out)
    elif args.which == "tail":
        if args.y is None:
            raise UsageError("oracle tail needs --y")
        p = oracle.exact_tail(name, params, args.y)
        if args.format == "csv":
            _csv([(args.y, repr(p))], ["y", "tail"], out)
        else:
            _emit({"family": name, "y": args.y, "tail": p}, out)
    else:
        seed = default_seed() if args.seed is None else args.seed
        s = oracle.mc_sample(name, params, args.count, seed)
        if args.format == "json":
            _emit({"family": name, "seed": seed, "samples": s.tolist()}, out)
        else:
            out.write(oracle.samples_to_csv(s))


def cmd_selftest(args, out):
    if args.format == "json":
        outcomes = acceptance.run_all(stream=io.StringIO())
        _emit({"criteria": [{"number": o.number, "name": o.name, "passed": o.passed,
                             "detail": o.detail, "seconds": o.seconds} for o in outcomes],
               "passed": all(o.passed for o in outcomes)}, out)
    else:
        outcomes = acceptance.run_all(stream=out)
    return EXIT_OK if all(o.passed for o in outcomes) else EXIT_FAIL


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="classb", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"classb {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("families", help="list built-in families and their parameters")
    q.add_argument("--describe", action="store_true", help="include the parameter table / a family's details")
    _add_family(q, transforms=False)
    _add_format(q)
    q.set_defaults(run=cmd_families)

    for name, kind in (("moments", None), ("raw", "raw"), ("central", "central"), ("cumulants", "cumulant")):
        q = sub.add_parser(name, help="moment table" if kind is None else f"{kind} table (alias of moments)")
        if kind is None:
            q.add_argument("kind", choices=M.KINDS)
        else:
            q.set_defaults(kind=kind)
        _add_family(q)
        q.add_argument("--order", type=int, default=4)
        q.add_argument("--symbolic", action="store_true", help="include the expressions")
        q.add_argument("--at", help="mean point, e.g. 'x=1.5' or 'x1=1,x2=2' (default: the family's mean)")
        _add_format(q)
        q.set_defaults(run=cmd_moments)

    q = sub.add_parser("verify", help="residuals of the Laplace-transform equation on a grid")
    _add_family(q)
    q.add_argument("--tol", type=float, default=1e-8)
    q.add_argument("--grid", help='JSON grid spec, e.g. \'{"z":[-0.5,0.5],"x":{"x":[1,3]},"points":5}\'')
    _add_format(q)
    q.set_defaults(run=cmd_verify)

    q = sub.add_parser("transform", help="affine image, iid sum or sample mean of a family")
    _add_family(q)
    q.add_argument("--kind", choices=M.KINDS, default="cumulant")
    q.add_argument("--order", type=int, default=0, help="also print a moment table of this order")
    _add_format(q)
    q.set_defaults(run=cmd_transform)

    q = sub.add_parser("fisher", help="Fisher information V(x)^{-1}")
    _add_family(q)
    q.add_argument("--at")
    q.add_argument("--symbolic", action="store_true")
    _add_format(q)
    q.set_defaults(run=cmd_fisher)

    q = sub.add_parser("tailbound", help="exponential tail bound P(xi >= y) <= exp(-A(y))")
    _add_family(q)
    q.add_argument("--x", help="mean point (default: the family's mean)")
    q.add_argument("--y", action="append", help="threshold; repeat for several, '1,2' for vectors")
    q.add_argument("--grid", help="lo:hi:count thresholds (univariate)")
    q.add_argument("--workers", type=int, default=1)
    _add_format(q)
    q.set_defaults(run=cmd_tailbound)

    q = sub.add_parser("closedform", help="combinatorial closed forms")
    q.add_argument("which", choices=("quadratic", "randomwalk", "stirling"))
    q.add_argument("--order", type=int, default=6, help="highest cumulant order (stirling: highest k)")
    q.add_argument("--a", type=float)
    q.add_argument("--b", type=float)
    q.add_argument("--x", type=float)
    q.add_argument("--n", type=int)
    q.add_argument("--p", type=float)
    q.add_argument("--family", choices=("binomial", "negative_binomial", "poisson", "gamma"))
    q.add_argument("--params", default="")
    _add_format(q)
    q.set_defaults(run=cmd_closedform)

    q = sub.add_parser("oracle", help="ground truth from the pmf/pdf")
    q.add_argument("which", choices=("enumerate", "sample", "tail"))
    q.add_argument("--family", required=True)
    q.add_argument("--params", default="")
    q.add_argument("--order", type=int, default=4)
    q.add_argument("--y", type=float)
    q.add_argument("--count", type=int, default=1000)
    q.add_argument("--seed", type=lambda s: int(s, 0), help="default: $CLASSB_SEED or a fixed seed")
    q.add_argument("--format", choices=("json", "csv"), default=None)
    q.set_defaults(run=cmd_oracle)

    q = sub.add_parser("selftest", help="run the acceptance suite")
    q.add_argument("--format", choices=("text", "json"), default="text")
    q.set_defaults(run=cmd_selftest)
    return p


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    if args.command == "oracle" and args.format is None:
        args.format = "csv" if args.which == "sample" else "json"
    try:
        code = args.run(args, out)
    except UsageError as e:
        print(f"classb: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ClassBError, ValueError, ZeroDivisionError, OverflowError) as e:
        print(f"classb: error: {e}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
