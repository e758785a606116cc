"""YAML run configuration: parsing with line diagnostics, normalized re-emission, hashing.

Schema (one flat file per run)::

    mu: 2            # ints and "p/q" strings stay exact
    nu: 1
    a: 0.1
    l: 2
    horizon: 2.0
    domain: {type: interval, left: 0, right: 1}     # or {type: ball, dim: 3, radius: 1}
    kernel: {type: constant, k0: 1}                 # or product / tabulated
    initial: {type: constant, value: 1.5}           # or sampled / gaussian / barenblatt_cap / linear / cosine
    solver: {n_cells: 100, m_schedule: [16, 32]}    # any SolverConfig field, optional
    compare: {low: {...}, high: {...}, tolerance: 1e-6}   # optional, for ``compare``
    barrier: {family: BlowupSub, params: {...}}           # optional, for ``certify``
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import yaml

from .errors import ConfigParseError
from .geometry import Ball, Interval
from .model import (ClosedForm, ConstantKernel, ConstantValue, ProblemSpec, Sampled, SpaceProductKernel,
                    TabulatedKernel, _CLOSED_FORMS)
from .solver import SolverConfig

_PHYSICS = ("mu", "nu", "a", "l", "horizon")
_SOLVER_FIELDS = {f.name for f in fields(SolverConfig)}


@dataclass(frozen=True)
class RunConfig:
    spec: ProblemSpec
    solver: SolverConfig
    compare: dict | None = None
    barrier: dict | None = None
    extra: dict = field(default_factory=dict)


class _Where:
    """Maps dotted field paths to 1-based source lines."""

    def __init__(self, source: str, text: str):
        self.source = source
        self.lines: dict[str, int] = {}
        try:
            node = yaml.compose(text)
        except yaml.YAMLError:
            node = None
        if node is not None:
            self._walk(node, "")

    def _walk(self, node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}{k.value}"
                self.lines[path] = k.start_mark.line + 1
                self._walk(v, path + ".")

    def line(self, path: str) -> int:
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path.rpartition(".")[0]
        return 1

    def fail(self, path: str, what: str):
        line = self.line(path)
        raise ConfigParseError(f"{self.source}:{line}: field '{path}': {what}", field=path, line=line)


def _number(v, path, where: _Where):
    if isinstance(v, bool) or v is None:
        where.fail(path, f"expected a number, got {v!r}")
    if isinstance(v, (int, float)):
        return v
    if isinstance(v, str):
        try:
            return Fraction(v) if "/" in v else float(v)
        except (ValueError, ZeroDivisionError):
            pass
    where.fail(path, f"expected a number, got {v!r}")


def _floats(v, path, where):
    if not isinstance(v, (list, tuple)) or not v:
        where.fail(path, "expected a nonempty list of numbers")
    return tuple(float(_number(x, f"{path}", where)) for x in v)


def _need(d: dict, key: str, prefix: str, where: _Where):
    if not isinstance(d, dict):
        where.fail(prefix.rstrip("."), "expected a mapping")
    if key not in d:
        where.fail(f"{prefix}{key}", "missing")
    return d[key]


def _domain(d, where):
    kind = _need(d, "type", "domain.", where)
    if kind == "interval":
        return Interval(float(_number(d.get("left", 0.0), "domain.left", where)),
                        float(_number(d.get("right", 1.0), "domain.right", where)))
    if kind == "ball":
        return Ball(int(_number(_need(d, "dim", "domain.", where), "domain.dim", where)),
                    float(_number(d.get("radius", 1.0), "domain.radius", where)))
    where.fail("domain.type", f"unknown domain type {kind!r} (interval, ball)")


def _kernel(d, where):
    kind = _need(d, "type", "kernel.", where)
    if kind == "constant":
        return ConstantKernel(float(_number(_need(d, "k0", "kernel.", where), "kernel.k0", where)))
    if kind == "product":
        return SpaceProductKernel(_floats(_need(d, "boundary", "kernel.", where), "kernel.boundary", where),
                                  _floats(d.get("interior", [1.0]), "kernel.interior", where))
    if kind == "tabulated":
        nodes = _floats(_need(d, "nodes", "kernel.", where), "kernel.nodes", where)
        rows = _need(d, "values", "kernel.", where)
        if not isinstance(rows, list) or not rows:
            where.fail("kernel.values", "expected a list of rows")
        return TabulatedKernel(nodes, tuple(_floats(r, "kernel.values", where) for r in rows))
    where.fail("kernel.type", f"unknown kernel type {kind!r} (constant, product, tabulated)")


def parse_initial(d, where: _Where, prefix: str = "initial"):
    kind = _need(d, "type", f"{prefix}.", where)
    if kind == "constant":
        return ConstantValue(float(_number(_need(d, "value", f"{prefix}.", where), f"{prefix}.value", where)))
    if kind == "sampled":
        return Sampled(_floats(_need(d, "nodes", f"{prefix}.", where), f"{prefix}.nodes", where),
                       _floats(_need(d, "values", f"{prefix}.", where), f"{prefix}.values", where))
    if kind in _CLOSED_FORMS:
        names = _CLOSED_FORMS[kind][0]
        params = tuple((n, float(_number(_need(d, n, f"{prefix}.", where), f"{prefix}.{n}", where)))
                       for n in names)
        return ClosedForm(kind, params)
    where.fail(f"{prefix}.type", f"unknown initial data type {kind!r}")


def _solver(d, where):
    if d is None:
        d = {}
    if not isinstance(d, dict):
        where.fail("solver", "expected a mapping")
    kw = {}
    for k, v in d.items():
        if k not in _SOLVER_FIELDS:
            where.fail(f"solver.{k}", f"unknown solver field (known: {sorted(_SOLVER_FIELDS)})")
        if k == "m_schedule":
            if not isinstance(v, list):
                where.fail("solver.m_schedule", "expected a list of integers")
            kw[k] = tuple(int(x) for x in v)
        elif k in ("n_cells", "j_max", "n_output", "max_steps"):
            kw[k] = int(_number(v, f"solver.{k}", where))
        elif v is not None:
            kw[k] = float(_number(v, f"solver.{k}", where))
    try:
        return SolverConfig(**kw)
    except ValueError as exc:
        where.fail("solver", str(exc))


def parse_config(data: dict, where: _Where) -> RunConfig:
    if not isinstance(data, dict):
        where.fail("", "top level must be a mapping")
    phys = {k: _number(_need(data, k, "", where), k, where) for k in _PHYSICS}
    spec = ProblemSpec(phys["mu"], phys["nu"], phys["a"], phys["l"],
                       _kernel(_need(data, "kernel", "", where), where),
                       _domain(_need(data, "domain", "", where), where),
                       parse_initial(_need(data, "initial", "", where), where),
                       float(phys["horizon"]))
    solver = _solver(data.get("solver"), where)
    known = set(_PHYSICS) | {"kernel", "domain", "initial", "solver", "compare", "barrier"}
    extra = {k: v for k, v in data.items() if k not in known}
    return RunConfig(spec, solver, data.get("compare"), data.get("barrier"), extra)


def load_text(text: str, source: str = "<config>") -> RunConfig:
    where = _Where(source, text)
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else 1
        raise ConfigParseError(f"{source}:{line}: {exc}", line=line) from None
    return parse_config(data, where)


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigParseError(f"{p}: {exc.strerror}") from None
    return load_text(text, str(p))


# --------------------------------------------------------------------------
# re-emission
# --------------------------------------------------------------------------

def _emit_number(v):
    if isinstance(v, Fraction):
        return v.numerator if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    return v


def emit_initial(init) -> dict:
    if isinstance(init, ConstantValue):
        return {"type": "constant", "value": init.c}
    if isinstance(init, Sampled):
        return {"type": "sampled", "nodes": list(init.nodes), "values": list(init.values)}
    return {"type": init.name, **dict(init.params)}


def emit_config(run: RunConfig) -> dict:
    """Normalized mapping that :func:`parse_config` reads back to the same run."""
    s = run.spec
    out = {k: _emit_number(getattr(s, k)) for k in _PHYSICS}
    d = s.domain
    out["domain"] = ({"type": "interval", "left": d.x_left, "right": d.x_right} if isinstance(d, Interval)
                     else {"type": "ball", "dim": d.space_dim, "radius": d.radius})
    k = s.kernel
    if isinstance(k, ConstantKernel):
        out["kernel"] = {"type": "constant", "k0": k.k0}
    elif isinstance(k, SpaceProductKernel):
        out["kernel"] = {"type": "product", "boundary": list(k.boundary), "interior": list(k.interior)}
    else:
        out["kernel"] = {"type": "tabulated", "nodes": list(k.nodes), "values": [list(r) for r in k.values]}
    out["initial"] = emit_initial(s.initial)
    solver = {}
    for f in fields(SolverConfig):
        v = getattr(run.solver, f.name)
        solver[f.name] = list(v) if isinstance(v, tuple) else v
    out["solver"] = solver
    if run.compare is not None:
        out["compare"] = run.compare
    if run.barrier is not None:
        out["barrier"] = run.barrier
    out.update(run.extra)
    return out


def dump_yaml(run: RunConfig) -> str:
    return yaml.safe_dump(emit_config(run), sort_keys=True)


def content_hash(payload) -> str:
    """SHA-256 of the canonical JSON form; key order never matters."""
    text = json.dumps(payload, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()
