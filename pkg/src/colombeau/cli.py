"""Command line interface.

Every subcommand except ``gallery list`` builds a one-task scenario and
hands it to :func:`colombeau.scenario.run`, so the CLI and scenario files
share one code path and one report format.

Axis and plane indices on the command line are 1-based (``--axis 1`` is
x1).  Boxes are given as ``--box=-1:1,-1:1`` or as JSON
``--box '[[-1,1],[-1,1]]'``; the default is ``[-1, 1]^n``.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import reports
from .embeddings import gallery
from .errors import ColombeauError, ScenarioError
from .net_core import NetVectorField
from .scenario import METHODS, load_scenario, parse_scenario, run


def parse_box(text):
    """``"-1:1,-1:1"`` or ``"[[-1,1],[-1,1]]"`` -> list of [lo, hi]."""
    text = text.strip()
    try:
        if text.startswith("["):
            box = json.loads(text)
        else:
            box = [[float(v) for v in part.split(":")] for part in text.split(",")]
        if not box or any(len(iv) != 2 for iv in box):
            raise ValueError
        return [[float(lo), float(hi)] for lo, hi in box]
    except (ValueError, TypeError):
        raise argparse.ArgumentTypeError(f"cannot parse box {text!r}; use lo:hi,lo:hi") from None


def _common(p):
    p.add_argument("--grid-base", type=float, default=0.5, help="grid ratio in (0, 1)")
    p.add_argument("--grid-k-min", type=int, default=4, help="first grid exponent")
    p.add_argument("--grid-k-max", type=int, default=24, help="last grid exponent")
    p.add_argument("--m-max", type=int, default=None, help="negligibility slope target")
    p.add_argument("--out", default=None, help="report directory")
    p.add_argument("--box", type=parse_box, default=None, help="compact box, e.g. -1:1,-1:1")


def _item_args(p, what="item"):
    p.add_argument(what, nargs="?", help="gallery name")
    p.add_argument("--expr", help="inline closed form over x1..xn and eps")
    p.add_argument("--dim", type=int, default=None, help="dimension of the inline expression")


def build_parser():
    ap = argparse.ArgumentParser(prog="colombeau",
                                 description="Numerical experiments with nets of smooth functions.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="classify the eps-growth of a net")
    _item_args(p)
    _common(p)
    p.add_argument("--order", type=int, default=0, help="classify all partials up to this order")
    p.add_argument("--expect", default=None, help="expected class label, e.g. 'Moderate(2)'")

    p = sub.add_parser("flow", help="generalized flow of a vector field")
    p.add_argument("field", nargs="?", help="gallery field name")
    p.add_argument("--field-exprs", nargs="+", help="inline field components")
    _common(p)
    p.add_argument("--t-span", nargs=2, type=float, default=[-1.0, 1.0], metavar=("T0", "T1"))
    p.add_argument("--h0", type=float, default=1e-3)
    p.add_argument("--override", action="store_true", help="run despite a failed completeness check")
    p.add_argument("--x0", nargs="+", help="initial point for a trajectory CSV")
    p.add_argument("--group-law", nargs=2, type=float, metavar=("T", "S"))

    p = sub.add_parser("invariance", help="invariance tests")
    _item_args(p)
    _common(p)
    p.add_argument("--method", action="append", choices=METHODS, dest="methods")
    p.add_argument("--field", help="gallery field for infinitesimal / flow_sampled")
    p.add_argument("--axis", type=int, default=1, help="translation axis (1-based)")

    p = sub.add_parser("reduce", help="radial reduction u(x) = v(|x|)")
    _item_args(p)
    _common(p)

    p = sub.add_parser("gallery", help="gallery utilities")
    p.add_argument("action", choices=["list"])

    p = sub.add_parser("run", help="run a scenario file")
    p.add_argument("scenario")
    p.add_argument("--out", default=None, help="report directory (overrides the scenario)")
    return ap


def _scenario_from_args(args):
    items = []
    params = {}
    name = getattr(args, "item", None) or getattr(args, "field", None)
    if args.command == "flow":
        if args.field_exprs:
            items.append({"name": "field", "field": args.field_exprs})
            name = "field"
        elif args.field:
            items.append(args.field)
    else:
        if args.expr:
            inline = {"name": "u", "expr": args.expr}
            if args.dim:
                inline["dim"] = args.dim
            items.append(inline)
            name = "u"
        elif args.item:
            items.append(args.item)
            name = args.item
    if not items:
        raise ScenarioError("give a gallery name or an inline expression")
    params["item"] = name
    if args.box is not None:
        params["box"] = args.box
    if args.command == "classify":
        params["order"] = args.order
        if args.expect:
            params["expect"] = args.expect
    elif args.command == "flow":
        params.update(t_span=list(args.t_span), h0=args.h0, override=args.override)
        if args.x0:
            params["x0"] = args.x0
        if args.group_law:
            params["group_law"] = {"t": args.group_law[0], "s": args.group_law[1]}
    elif args.command == "invariance":
        params["methods"] = args.methods or ["standard_rotations"]
        params["axis"] = args.axis
        if args.field:
            items.append(args.field)
            params["field"] = args.field
    doc = {"grid": {"base": args.grid_base, "k": [args.grid_k_min, args.grid_k_max]},
           "items": items, "tasks": [{args.command: params}]}
    if args.m_max is not None:
        doc["thresholds"] = {"m_max": args.m_max}
    return parse_scenario(json.dumps(doc))


def _print_summary(res):
    for o in res.outcomes:
        status = "PASS" if o.passed else "FAIL"
        print(f"[{status}] task {o.index} {o.kind} {o.item}: {o.outcome}")
    if res.error:
        print(f"error: {res.error}", file=sys.stderr)
    if res.out_dir is not None and res.outcomes:
        print(f"reports in {res.out_dir}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gallery":
            for name, obj in sorted(gallery().items()):
                kind = "field" if isinstance(obj, NetVectorField) else "function"
                print(f"{name}\t{kind}\tR^{obj.dimension}")
            return 0
        if args.command == "run":
            sc = load_scenario(args.scenario)
        else:
            sc = _scenario_from_args(args)
        res = run(sc, args.out)
    except (ScenarioError, ColombeauError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _print_summary(res)
    return res.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
