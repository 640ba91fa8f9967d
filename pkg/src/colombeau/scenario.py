"""Scenario files: parsing, validation and the task runner.

A scenario is a JSON object::

    {
      "schema_version": 1,
      "grid": {"base": 0.5, "k": [4, 24]},
      "thresholds": {"m_max": 3},
      "items": ["delta_radial_2d",
                {"name": "u", "expr": "x1^2 + x2^2", "dim": 2},
                {"name": "rot", "field": ["-x2", "x1"]}],
      "tasks": [{"classify": {"item": "u", "box": [[-1, 1], [-1, 1]]}}],
      "output": "reports"
    }

Items are gallery names or inline closed forms.  Tasks are
``classify``, ``flow``, ``invariance`` and ``reduce``; each may carry an
``expect`` value (a class label for ``classify``, a boolean otherwise),
in which case the task passes when the outcome matches it.  Axis and
plane indices in scenario files are 1-based (``axis: 1`` is x1).

Exit status of :func:`run`: 0 if every task passed, 1 if any failed,
2 on an execution error.
"""

from __future__ import annotations

import json
import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import reports
from .asymptotics import (DEFAULT_THRESHOLDS, Thresholds, classify, growth_profile,
                          multi_indices, severity)
from .embeddings import gallery, gallery_names
from .errors import (BlowUpError, ColombeauError, ConfigurationError, ExpressionError,
                     ScenarioError, TaskExecutionError)
from .flow_engine import (check_completeness, flow, solve_ivp, verify_group_law)
from .invariance import (flow_invariance_test, generalized_rotation_test, infinitesimal_test,
                         standard_rotation_test, translation_tests, DEFAULT_ANGLES)
from .invariant_reduction import radial_profile, verify_reduction
from .net_core import (CompactBox, Concentration, GeneralizedPoint, NetFunction,
                       NetVectorField, make_epsilon_grid, sample_box)
from .parse import parse_expression

TASKS = ("classify", "flow", "invariance", "reduce")
METHODS = ("infinitesimal", "flow_sampled", "standard_rotations", "generalized_rotations",
           "translation")
TOP_KEYS = {"schema_version", "grid", "thresholds", "items", "tasks", "output"}
DEFAULT_OUTPUT = "colombeau-reports"
DEFAULT_FLOW_SPAN = (-4.0, 4.0)


@dataclass(frozen=True)
class ItemDef:
    name: str
    kind: str  # "function" or "field"
    dimension: int
    gallery: bool = False
    exprs: tuple = ()
    max_order: int = 2
    concentration: Optional[Concentration] = None


@dataclass(frozen=True)
class TaskDef:
    index: int
    kind: str
    params: dict


@dataclass
class Scenario:
    grid_base: float = 0.5
    k_min: int = 4
    k_max: int = 24
    thresholds: Thresholds = DEFAULT_THRESHOLDS
    items: tuple = ()
    tasks: tuple = ()
    output: Optional[str] = None

    def grid(self):
        return make_epsilon_grid(self.k_min, self.k_max, self.grid_base)

    def item(self, name) -> ItemDef:
        for it in self.items:
            if it.name == name:
                return it
        raise KeyError(name)

    def build(self, grid=None) -> dict:
        """Instantiate every item on the scenario grid."""
        grid = self.grid() if grid is None else grid
        out = {}
        gal = None
        for it in self.items:
            if it.gallery:
                gal = gallery(grid) if gal is None else gal
                out[it.name] = gal[it.name]
            elif it.kind == "field":
                out[it.name] = NetVectorField.from_exprs(grid, list(it.exprs), it.max_order, name=it.name)
            else:
                out[it.name] = NetFunction(grid, it.dimension, it.exprs[0], max_order=it.max_order,
                                           concentration=it.concentration, name=it.name)
        return out


# ---------------------------------------------------------------- parsing

def _locate(text, needle):
    """1-based (line, column) of the first JSON occurrence of ``needle``."""
    pos = text.find(json.dumps(needle))
    if pos < 0 and isinstance(needle, str):
        pos = text.find(needle)
    if pos < 0:
        return None, None
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


class _Ctx:
    def __init__(self, text):
        self.text = text

    def fail(self, message, needle=None):
        line, col = _locate(self.text, needle) if needle is not None else (None, None)
        raise ScenarioError(message, line, col)


def _infer_dim(e):
    return max(e.free) + 1 if e.free else 1


def _parse_item(ctx, raw, known_gallery):
    if isinstance(raw, str):
        if raw not in known_gallery:
            ctx.fail(f"unknown gallery name {raw!r}", raw)
        return raw
    if not isinstance(raw, dict) or "name" not in raw:
        ctx.fail("inline items need a name")
    name = raw["name"]
    if not isinstance(name, str) or not re.match(r"^[A-Za-z_][A-Za-z0-9_.-]*$", name):
        ctx.fail(f"invalid item name {name!r}", name)
    extra = set(raw) - {"name", "expr", "field", "dim", "max_order", "concentration"}
    if extra:
        ctx.fail(f"unknown keys {sorted(extra)} in item {name!r}", name)
    if ("expr" in raw) == ("field" in raw):
        ctx.fail(f"item {name!r} needs exactly one of 'expr' or 'field'", name)
    max_order = raw.get("max_order", 2)
    if not isinstance(max_order, int) or not 0 <= max_order <= 4:
        ctx.fail(f"max_order of {name!r} must be an integer in [0, 4]", name)

    def expr_of(src, dim):
        if not isinstance(src, str):
            ctx.fail(f"expression of {name!r} must be a string", name)
        try:
            return parse_expression(src, dim)
        except ExpressionError as exc:
            line, col = _locate(ctx.text, src)
            if line is not None and exc.position is not None:
                col += exc.position  # skip the opening quote
            raise ScenarioError(f"item {name!r}: {exc}", line, col) from None

    conc = None
    if "concentration" in raw:
        c = raw["concentration"]
        try:
            conc = Concentration(float(c["radius"]), tuple(tuple(p) for p in c.get("centers", ())))
        except (TypeError, KeyError, ValueError):
            ctx.fail(f"bad concentration for {name!r}", name)
    if "field" in raw:
        comps = raw["field"]
        if not isinstance(comps, list) or not comps:
            ctx.fail(f"field {name!r} needs a list of component expressions", name)
        exprs = tuple(expr_of(s, len(comps)) for s in comps)
        return ItemDef(name, "field", len(comps), False, exprs, max_order, conc)
    dim = raw.get("dim")
    if dim is not None and (not isinstance(dim, int) or not 1 <= dim <= 4):
        ctx.fail(f"dim of {name!r} must be an integer in [1, 4]", name)
    e = expr_of(raw["expr"], dim)
    return ItemDef(name, "function", dim or _infer_dim(e), False, (e,), max_order, conc)


def _gallery_defs(names):
    if not names:
        return {}
    g = gallery()
    out = {}
    for nm in names:
        obj = g[nm]
        kind = "field" if isinstance(obj, NetVectorField) else "function"
        out[nm] = ItemDef(nm, kind, obj.dimension, True)
    return out


def _box(ctx, raw, where):
    try:
        return CompactBox(tuple((float(lo), float(hi)) for lo, hi in raw))
    except (TypeError, ValueError) as exc:
        ctx.fail(f"{where}: invalid box {raw!r} ({exc})", "box")


def _check_task(ctx, kind, params, items):
    if not isinstance(params, dict):
        ctx.fail(f"parameters of {kind} must be an object", kind)
    allowed = {
        "classify": {"item", "box", "order", "expect"},
        "flow": {"item", "box", "t_span", "h0", "override", "x0", "group_law", "global_box",
                 "safety_box", "x0_bound", "expect"},
        "invariance": {"item", "box", "methods", "field", "axis", "angles", "planes", "t_span",
                       "expect"},
        "reduce": {"item", "box", "expect"},
    }[kind]
    extra = set(params) - allowed
    if extra:
        ctx.fail(f"unknown parameters {sorted(extra)} for task {kind}", kind)
    want = "field" if kind == "flow" else "function"
    if "item" in params:
        nm = params["item"]
        if nm not in items:
            ctx.fail(f"task {kind} refers to undeclared item {nm!r}", nm)
        if items[nm].kind != want:
            ctx.fail(f"task {kind} needs a {want} item, {nm!r} is a {items[nm].kind}", nm)
    for key in ("box", "global_box"):
        if key in params:
            _box(ctx, params[key], kind)
    if kind == "classify" and "order" in params:
        if not isinstance(params["order"], int) or not 0 <= params["order"] <= 2:
            ctx.fail("classify order must be 0, 1 or 2", "order")
    if kind == "invariance":
        methods = params.get("methods", ["infinitesimal", "standard_rotations"])
        if isinstance(methods, str):
            methods = [methods]
        for m in methods:
            if m not in METHODS:
                ctx.fail(f"unknown invariance method {m!r}", m)
        if any(m in ("infinitesimal", "flow_sampled") for m in methods):
            fld = params.get("field")
            if fld is None:
                ctx.fail("infinitesimal and flow_sampled methods need a 'field'", kind)
            if fld not in items or items[fld].kind != "field":
                ctx.fail(f"invariance field {fld!r} is not a declared field item", fld)
    if kind == "flow" and "t_span" in params:
        span = params["t_span"]
        if not (isinstance(span, list) and len(span) == 2 and span[0] <= 0 <= span[1]):
            ctx.fail("flow t_span must be [t0, t1] with t0 <= 0 <= t1", "t_span")


def parse_scenario(text: str) -> Scenario:
    """Parse and validate scenario JSON text."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from None
    ctx = _Ctx(text)
    if not isinstance(raw, dict):
        raise ScenarioError("a scenario must be a JSON object", 1, 1)
    extra = set(raw) - TOP_KEYS
    if extra:
        key = sorted(extra)[0]
        ctx.fail(f"unknown top-level key {key!r}", key)
    if raw.get("schema_version", reports.SCHEMA_VERSION) != reports.SCHEMA_VERSION:
        ctx.fail(f"unsupported schema_version {raw['schema_version']!r}", "schema_version")

    sc = Scenario()
    grid = raw.get("grid", {})
    if not isinstance(grid, dict):
        ctx.fail("grid must be an object", "grid")
    try:
        sc.grid_base = float(grid.get("base", 0.5))
        if "k" in grid:
            sc.k_min, sc.k_max = (int(v) for v in grid["k"])
        sc.k_min = int(grid.get("k_min", sc.k_min))
        sc.k_max = int(grid.get("k_max", sc.k_max))
        sc.grid()
    except (TypeError, ValueError) as exc:
        ctx.fail(f"invalid grid: {exc}", "grid")
    try:
        sc.thresholds = Thresholds(**raw.get("thresholds", {}))
    except (TypeError, ValueError) as exc:
        ctx.fail(f"invalid thresholds: {exc}", "thresholds")

    items_raw = raw.get("items", [])
    if not isinstance(items_raw, list):
        ctx.fail("items must be a list", "items")
    known = set(gallery_names())
    parsed = [_parse_item(ctx, it, known) for it in items_raw]
    gal = _gallery_defs([p for p in parsed if isinstance(p, str)])
    items = {}
    for p in parsed:
        d = gal[p] if isinstance(p, str) else p
        if d.name in items:
            ctx.fail(f"duplicate item name {d.name!r}", d.name)
        items[d.name] = d
    sc.items = tuple(items.values())

    tasks_raw = raw.get("tasks", [])
    if not isinstance(tasks_raw, list):
        ctx.fail("tasks must be a list", "tasks")
    tasks = []
    for idx, t in enumerate(tasks_raw):
        if not isinstance(t, dict) or len(t) != 1:
            ctx.fail(f"task {idx + 1} must be an object with a single task name")
        (kind, params), = t.items()
        if kind not in TASKS:
            ctx.fail(f"unknown task {kind!r}", kind)
        _check_task(ctx, kind, params, items)
        tasks.append(TaskDef(idx + 1, kind, dict(params)))
    sc.tasks = tuple(tasks)
    out = raw.get("output")
    if out is not None and not isinstance(out, str):
        ctx.fail("output must be a string path", "output")
    sc.output = out
    return sc


def load_scenario(path) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ScenarioError(f"scenario is not UTF-8: {exc}") from None
    return parse_scenario(text)


# ---------------------------------------------------------------- running

@dataclass
class TaskOutcome:
    index: int
    kind: str
    item: str
    passed: bool
    outcome: object
    files: list = field(default_factory=list)

    def to_json(self):
        return {"index": self.index, "task": self.kind, "item": self.item,
                "passed": self.passed, "outcome": self.outcome, "files": self.files}


@dataclass
class RunResult:
    exit_code: int
    outcomes: list
    error: Optional[str] = None
    out_dir: Optional[Path] = None


def _targets(sc, params, want, dims=None):
    if "item" in params:
        return [params["item"]]
    return [it.name for it in sc.items if it.kind == want and (dims is None or it.dimension in dims)]


def _task_box(params, dim, key="box"):
    if key in params:
        return CompactBox(tuple((float(lo), float(hi)) for lo, hi in params[key]))
    return CompactBox.cube(1.0, dim)


class _Writer:
    def __init__(self, out_dir: Path):
        self.out = out_dir
        self.files = []

    def json(self, name, payload):
        reports.write_json(self.out / name, payload)
        self.files.append(name)

    def csv(self, name, rows):
        reports.write_csv(self.out / name, rows)
        self.files.append(name)


def _expect(params, outcome):
    if "expect" in params:
        return outcome == params["expect"]
    return True if isinstance(outcome, str) else bool(outcome)


def _run_classify(sc, nets, params, name, stem, w):
    u = nets[name]
    K = _task_box(params, u.dimension)
    results = []
    for alpha in multi_indices(u.dimension, params.get("order", 0)):
        prof = growth_profile(u, K, alpha)
        cls = classify(prof, sc.thresholds)
        results.append((alpha, prof, cls))
        suffix = "".join(str(a) for a in alpha)
        w.csv(f"{stem}_d{suffix}.csv", prof.csv_rows())
    _, wprof, wcls = max(results, key=lambda r: severity(r[2], r[1]))
    label = wcls.label
    w.json(f"{stem}.json", {
        "task": "classify", "item": name, "box": K, "label": label,
        "thresholds": sc.thresholds,
        "classes": [{"alpha": list(a), "class": c, "profile": p} for a, p, c in results],
    })
    return label, _expect(params, label)


def _run_flow(sc, nets, params, name, stem, w):
    xi = nets[name]
    K = _task_box(params, xi.dimension)
    gbox = _task_box(params, xi.dimension, "global_box") if "global_box" in params else None
    span = tuple(float(t) for t in params.get("t_span", (-1.0, 1.0)))
    h0 = float(params.get("h0", 1e-3))
    override = bool(params.get("override", False))
    safety = params.get("safety_box")
    report = check_completeness(xi, K, gbox, sc.thresholds)
    payload = {"task": "flow", "item": name, "box": K, "t_span": list(span), "h0": h0,
               "override": override, "completeness": report, "thresholds": sc.thresholds}
    if not report.passed and not override:
        payload["passed"] = False
        w.json(f"{stem}.json", payload)
        return False, _expect(params, False)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fl = flow(xi, span, K, h0, global_box=gbox, safety_box=safety, override=override)
    payload["warnings"] = [str(c.message) for c in caught]
    payload["flow"] = fl
    gl_params = params.get("group_law", {})
    t = float(gl_params.get("t", span[1] / 2))
    s = float(gl_params.get("s", span[1] / 2))
    gl = verify_group_law(fl, t, s, sample_box(CompactBox(K.intervals, 9)))
    payload["group_law"] = gl
    w.csv(f"{stem}_group_law.csv", gl.profile.csv_rows())
    if "x0" in params:
        x0 = GeneralizedPoint(fl.grid, tuple(_coord(c) for c in params["x0"]),
                              bound=float(params.get("x0_bound", K.radius() + 1.0)))
        traj = solve_ivp(xi, x0, 0.0, span[1], h0, K=K, global_box=gbox, safety_box=safety,
                         override=True)
        w.csv(f"{stem}_trajectory.csv", traj.csv_rows())
    passed = bool(report.passed and fl.c_bounded and gl.passed)
    payload["passed"] = passed
    w.json(f"{stem}.json", payload)
    return passed, _expect(params, passed)


def _coord(c):
    return parse_expression(c) if isinstance(c, str) else c


def _run_invariance(sc, nets, params, name, stem, w):
    u = nets[name]
    K = _task_box(params, u.dimension)
    methods = params.get("methods", ["infinitesimal", "standard_rotations"])
    methods = [methods] if isinstance(methods, str) else list(methods)
    verdicts = []
    for m in methods:
        if m == "infinitesimal":
            verdicts.append(infinitesimal_test(nets[params["field"]], u, K, sc.thresholds))
        elif m == "flow_sampled":
            span = tuple(float(t) for t in params.get("t_span", DEFAULT_FLOW_SPAN))
            fl = flow(nets[params["field"]], span, K)
            verdicts.append(flow_invariance_test(fl, u, thresholds=sc.thresholds))
        elif m == "standard_rotations":
            planes = params.get("planes")
            planes = None if planes is None else [(i - 1, j - 1) for i, j in planes]
            verdicts.append(standard_rotation_test(u, K, params.get("angles", DEFAULT_ANGLES), planes,
                                                   thresholds=sc.thresholds))
        elif m == "generalized_rotations":
            verdicts.append(generalized_rotation_test(u, K, thresholds=sc.thresholds))
        elif m == "translation":
            axis = int(params.get("axis", 1)) - 1
            verdicts.extend(translation_tests(u, axis, K, thresholds=sc.thresholds))
    for v in verdicts:
        w.csv(f"{stem}_{v.method}.csv", v.residual_csv_rows())
    passed = all(v.passed for v in verdicts)
    w.json(f"{stem}.json", {"task": "invariance", "item": name, "box": K, "passed": passed,
                            "thresholds": sc.thresholds,
                            "verdicts": [_verdict_json(v) for v in verdicts]})
    return passed, _expect(params, passed)


def _verdict_json(v):
    d = v.to_json()
    rep = d["details"].get("representative")
    if rep is not None:
        d["details"]["representative"] = rep.to_json()
    return d


def _run_reduce(sc, nets, params, name, stem, w):
    u = nets[name]
    K = _task_box(params, u.dimension)
    res = verify_reduction(u, radial_profile(u), K, sc.thresholds)
    w.csv(f"{stem}_residual.csv", res.residual.csv_rows())
    w.csv(f"{stem}_v.csv", res.v_csv_rows())
    w.json(f"{stem}.json", {"task": "reduce", "item": name, "passed": res.certified,
                            "thresholds": sc.thresholds, "reduction": res,
                            "radius_interval": list(res.radius_interval())})
    return res.certified, _expect(params, res.certified)


_RUNNERS = {
    "classify": (_run_classify, "function", None),
    "flow": (_run_flow, "field", None),
    "invariance": (_run_invariance, "function", None),
    "reduce": (_run_reduce, "function", {2, 3, 4}),
}


def run(scenario: Scenario, out_dir=None) -> RunResult:
    """Execute the tasks in order, writing one JSON report per task item plus CSV profiles."""
    out = Path(out_dir or scenario.output or DEFAULT_OUTPUT)
    outcomes = []
    if not scenario.tasks:
        return RunResult(0, outcomes, out_dir=out)
    out.mkdir(parents=True, exist_ok=True)
    nets = scenario.build()
    error = None
    for task in scenario.tasks:
        runner, want, dims = _RUNNERS[task.kind]
        for name in _targets(scenario, task.params, want, dims):
            stem = f"{task.index:02d}_{task.kind}_{name}"
            w = _Writer(out)
            try:
                outcome, ok = runner(scenario, nets, task.params, name, stem, w)
            except (ColombeauError, ValueError, ArithmeticError) as exc:
                eps = getattr(exc, "eps", None)
                err = TaskExecutionError(f"{task.index} ({task.kind} {name})", exc, eps)
                error = str(err)
                reports.write_json(out / f"{stem}_error.json",
                                   {"task": task.kind, "item": name, "error": error,
                                    "eps": eps, "type": type(exc).__name__})
                break
            outcomes.append(TaskOutcome(task.index, task.kind, name, ok, outcome, w.files))
        if error:
            break
    code = 2 if error else (0 if all(o.passed for o in outcomes) else 1)
    reports.write_json(out / "summary.json", {"exit_code": code, "error": error,
                                              "grid": {"base": scenario.grid_base,
                                                       "k": [scenario.k_min, scenario.k_max]},
                                              "thresholds": scenario.thresholds,
                                              "tasks": outcomes})
    return RunResult(code, outcomes, error, out)
