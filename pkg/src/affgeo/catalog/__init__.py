"""Atlas of explicit surfaces with chart domains, constants and expected invariants.

Each surface lives in one ``data/<id>.surf`` file::

    id: thm44-iii
    kind: graph                      # graph | parametric | implicit
    geometry: calabi                 # calabi | centroaffine
    variables: x1, x2
    constants: c = 1 in (0, inf)     # name = default in <range>; separated by ';'
    derived: k = 9/(16*c^2)          # evaluated in order, not overridable
    domain: x1 in [1, 3]; x2 in [-1, 1]   # sample rectangle
    chart: x1 in [0, inf]; x2 in [-inf, inf]   # optional, bounds for geodesics
    figure: 2                        # optional
    description: one line

    begin graph                      # or parametric (one component per line),
    -k*ln(x1 - x2^2/2)               # implicit (over x1..x_{n+1}), or any
    end                              # auxiliary block, optionally with variables

    expect tchebychev-norm = c^2 tag=stated ref="..." tol=1e-9
    expect maximal-type-pde(a=-2/3) = 0 tag=stated ref="..."
    gauss x1,x1 : x_x1 = 2*x1 ; Y = 1 tag=stated ref="..."

Expected values are expressions over the chart variables, vectors
``[e1, e2]``, matrices ``[[a, b], [c, d]]`` or the words ``elliptic`` and
``hyperbolic``. Blank lines and lines starting with ``#`` are ignored.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Mapping, Optional

import numpy as np

from ..errors import InvalidConstant, ParseError, UnknownSurface
from ..program import Program, Var, constant_value, parse

KINDS = ("graph", "parametric", "implicit")
GEOMETRIES = ("calabi", "centroaffine")
TAGS = ("stated", "derived", "trivial")
DEFAULT_SHRINK = 0.1

# invariant name -> shape of the expected value
CALABI_INVARIANTS = {
    "metric": "matrix",
    "tchebychev": "vector",
    "tchebychev-norm": "scalar",
    "nabla-tchebychev-norm": "scalar",
    "gauss-curvature": "scalar",
    "riemann-norm": "scalar",
    "maximality-residual": "scalar",
    "maximal-type-pde": "scalar",
    "maximal-type-trace": "scalar",
}
CENTROAFFINE_INVARIANTS = {
    "type": "word",
    "metric": "matrix",
    "tchebychev": "vector",
    "tchebychev-norm": "scalar",
    "gauss-curvature": "scalar",
    "riemann-norm": "scalar",
    "difference-tensor-norm": "scalar",
    "difference-tensor-form": "scalar",
    "extremal-residual": "scalar",
    "extremal-residual-jet": "scalar",
    "graph-extremal-residual": "scalar",
    "implicit": "scalar",
    "isometry": "scalar",
}
INVARIANTS = {"calabi": CALABI_INVARIANTS, "centroaffine": CENTROAFFINE_INVARIANTS}
WORDS = ("elliptic", "hyperbolic")


@dataclass(frozen=True)
class ConstantRange:
    """Admissible interval of a constant; open ends are excluded."""

    lo: float
    hi: float
    lo_open: bool
    hi_open: bool

    def contains(self, value: float) -> bool:
        above = value > self.lo if self.lo_open else value >= self.lo
        below = value < self.hi if self.hi_open else value <= self.hi
        return above and below

    def __str__(self):
        return f"{'(' if self.lo_open else '['}{self.lo:g}, {self.hi:g}{')' if self.hi_open else ']'}"


@dataclass(frozen=True)
class Expectation:
    """One expected invariant: ``name(params) = value`` with provenance."""

    name: str
    params: Mapping[str, float]
    source: str
    shape: str
    value: object
    tag: str
    ref: str
    tol: Optional[float]


@dataclass(frozen=True)
class GaussLine:
    """``x_{u_i u_j} = sum_k tangent[k] x_{u_k} + position x + constant Y``."""

    i: int
    j: int
    tangent: tuple
    position: Optional[Program]
    constant: Optional[Program]
    source: str
    tag: str
    ref: str


@dataclass(frozen=True)
class SurfaceSpec:
    """A catalog entry with its constants resolved.

    ``components`` are the ambient coordinates as programs of the chart
    variables (for graphs ``(x_1, ..., x_n, f)``); ``graph`` and ``implicit``
    hold the defining function when the entry has one; ``blocks`` holds the
    auxiliary program blocks by name.
    """

    id: str
    kind: str
    geometry: str
    dimension: int
    variables: tuple
    constants: Mapping[str, float]
    ranges: Mapping[str, ConstantRange]
    derived: Mapping[str, float]
    domain: tuple
    chart: tuple
    components: tuple
    graph: Optional[Program]
    implicit: Optional[Program]
    blocks: Mapping[str, tuple]
    expectations: tuple
    gauss: tuple
    figure: Optional[int]
    description: str
    text: str = field(repr=False)

    @property
    def ambient(self) -> tuple:
        return tuple(f"x{i + 1}" for i in range(self.dimension + 1))

    @property
    def resolved_constants(self) -> dict:
        return {**self.constants, **self.derived}

    def default_counts(self) -> tuple:
        return (11,) * self.dimension if self.dimension <= 2 else (7,) * self.dimension

    def sample_grid(self, counts=None, shrink: float = DEFAULT_SHRINK) -> np.ndarray:
        """Tensor grid ``(*counts, n)`` over the chart, shrunk toward the center."""
        counts = self.default_counts() if counts is None else tuple(int(c) for c in counts)
        if len(counts) != self.dimension:
            raise ValueError(f"grid needs {self.dimension} counts, got {len(counts)}")
        axes = []
        for (lo, hi), m in zip(self.domain, counts):
            pad = 0.5 * shrink * (hi - lo)
            axes.append(np.linspace(lo + pad, hi - pad, m) if m > 1 else np.array([0.5 * (lo + hi)]))
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def program_samples(self, counts=None, shrink: float = DEFAULT_SHRINK) -> list:
        """``(label, program, points)`` for every program, sampled where it lives.

        Chart programs use the sample grid; programs over ambient coordinates
        (graph and implicit forms) use its image; the target-metric block uses
        the image of the isometry map.
        """
        from ..evaluate import eval_values

        pts = self.sample_grid(counts, shrink).reshape(-1, self.dimension)
        image = np.stack([eval_values(c, pts) for c in self.components], axis=-1)
        out = []
        for label, prog in self.programs():
            if prog.variables == self.variables:
                where = pts
            elif prog.variables == self.ambient[: prog.arity]:
                where = image[:, : prog.arity]
            elif label.startswith("target-metric") and "isometry-map" in self.blocks:
                where = np.stack([eval_values(q, pts) for q in self.blocks["isometry-map"]], axis=-1)
            else:
                raise ValueError(f"{self.id}: no sample points for program {label!r}")
            out.append((label, prog, where))
        return out

    def programs(self) -> list:
        """Every program of the entry as ``(label, program)`` pairs."""
        out = [(f"component-{k + 1}", p) for k, p in enumerate(self.components)]
        if self.graph is not None:
            out.append(("graph", self.graph))
        if self.implicit is not None:
            out.append(("implicit", self.implicit))
        for name, progs in sorted(self.blocks.items()):
            out.extend((f"{name}-{k + 1}", p) for k, p in enumerate(progs))
        for e in self.expectations:
            for k, p in enumerate(_flatten(e.value)):
                out.append((f"expect-{e.name}-{k + 1}", p))
        for g in self.gauss:
            coeffs = list(g.tangent) + [g.position, g.constant]
            out.extend((f"gauss-{g.i}{g.j}-{k + 1}", p) for k, p in enumerate(coeffs) if p is not None)
        return out


def _flatten(value) -> list:
    if isinstance(value, Program):
        return [value]
    if isinstance(value, tuple):
        return [p for v in value for p in _flatten(v)]
    return []


# -- text parsing --------------------------------------------------------------------

_EXPECT = re.compile(r'^expect\s+(?P<name>[\w-]+)(?:\((?P<params>[^)]*)\))?\s*=\s*(?P<rhs>.*?)'
                     r'\s+tag=(?P<tag>\w+)\s+ref="(?P<ref>[^"]*)"(?:\s+tol=(?P<tol>\S+))?\s*$')
_GAUSS = re.compile(r'^gauss\s+(?P<i>\w+)\s*,\s*(?P<j>\w+)\s*:\s*(?P<body>.*?)'
                    r'\s+tag=(?P<tag>\w+)\s+ref="(?P<ref>[^"]*)"\s*$')
_CONST = re.compile(r'^(?P<name>\w+)\s*=\s*(?P<value>.+?)\s+in\s+(?P<lo>[\[(])\s*(?P<a>[^,]+),'
                    r'\s*(?P<b>[^\])]+)(?P<hi>[\])])$')
_DOMAIN = re.compile(r'^(?P<name>\w+)\s+in\s+\[\s*(?P<a>[^,]+),\s*(?P<b>[^\]]+)\]$')


def split_top(text: str, sep: str = ",") -> list:
    """Split ``text`` at ``sep`` outside parentheses and brackets."""
    parts, depth, start = [], 0, 0
    for k, ch in enumerate(text):
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        elif ch == sep and depth == 0:
            parts.append(text[start:k].strip())
            start = k + 1
    parts.append(text[start:].strip())
    return parts


def _const_expr(text: str, constants: Mapping[str, float]) -> float:
    t = text.strip()
    if t in ("inf", "+inf"):
        return math.inf
    if t == "-inf":
        return -math.inf
    return float(constant_value(parse(t, (), constants).root))


@dataclass
class _Raw:
    header: dict
    blocks: dict
    expects: list
    gauss: list


def _read(text: str, origin: str) -> _Raw:
    header, blocks, expects, gauss = {}, {}, [], []
    block = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        where = f"{origin}:{lineno}"
        if block is not None:
            if line == "end":
                block = None
            else:
                blocks[block][1].append(line)
            continue
        if line.startswith("begin "):
            words = line[6:].split(None, 1)
            block = words[0]
            if block in blocks:
                raise ParseError(f"{where}: duplicate block {block!r}")
            names = tuple(v.strip() for v in words[1].split(",")) if len(words) > 1 else None
            blocks[block] = (names, [])
        elif line.startswith("expect "):
            m = _EXPECT.match(line)
            if not m:
                raise ParseError(f"{where}: malformed expect line")
            expects.append((m, where))
        elif line.startswith("gauss "):
            m = _GAUSS.match(line)
            if not m:
                raise ParseError(f"{where}: malformed gauss line")
            gauss.append((m, where))
        elif ":" in line:
            key, value = line.split(":", 1)
            header[key.strip()] = value.strip()
        else:
            raise ParseError(f"{where}: unrecognized line {line!r}")
    if block is not None:
        raise ParseError(f"{origin}: block {block!r} is not closed")
    return _Raw(header, blocks, expects, gauss)


def _resolve_constants(raw: _Raw, overrides: Mapping[str, float], origin: str):
    defaults, ranges = {}, {}
    spec = raw.header.get("constants", "")
    for item in filter(None, (s.strip() for s in spec.split(";"))):
        m = _CONST.match(item)
        if not m:
            raise ParseError(f"{origin}: malformed constant {item!r}")
        name = m["name"]
        defaults[name] = _const_expr(m["value"], {})
        ranges[name] = ConstantRange(_const_expr(m["a"], {}), _const_expr(m["b"], {}),
                                     m["lo"] == "(", m["hi"] == ")")
    constants = dict(defaults)
    for name, value in overrides.items():
        if name not in defaults:
            raise InvalidConstant(f"surface has no adjustable constant {name!r}; "
                                  f"known: {sorted(defaults)}")
        value = float(value)
        if not ranges[name].contains(value):
            raise InvalidConstant(f"constant {name}={value!r} outside admissible range {ranges[name]}")
        constants[name] = value
    derived = {}
    for item in filter(None, (s.strip() for s in raw.header.get("derived", "").split(";"))):
        name, expr = (s.strip() for s in item.split("=", 1))
        derived[name] = _const_expr(expr, {**constants, **derived})
    return constants, ranges, derived


def _value(rhs: str, shape: str, variables, consts, where: str):
    rhs = rhs.strip()
    if shape == "word":
        if rhs not in WORDS:
            raise ParseError(f"{where}: expected one of {WORDS}, got {rhs!r}")
        return rhs
    if shape == "scalar":
        return parse(rhs, variables, consts)
    if not (rhs.startswith("[") and rhs.endswith("]")):
        raise ParseError(f"{where}: expected a bracketed {shape}")
    items = split_top(rhs[1:-1])
    if shape == "vector":
        return tuple(parse(s, variables, consts) for s in items)
    rows = []
    for s in items:
        if not (s.startswith("[") and s.endswith("]")):
            raise ParseError(f"{where}: matrix rows must be bracketed")
        rows.append(tuple(parse(e, variables, consts) for e in split_top(s[1:-1])))
    return tuple(rows)


def _box(text: str, variables, consts, origin: str) -> tuple:
    box = []
    items = [s.strip() for s in text.split(";")]
    if len(items) != len(variables):
        raise ParseError(f"{origin}: need one interval per variable")
    for item, var in zip(items, variables):
        m = _DOMAIN.match(item)
        if not m or m["name"] != var:
            raise ParseError(f"{origin}: intervals must follow the variable order")
        lo, hi = _const_expr(m["a"], consts), _const_expr(m["b"], consts)
        if not lo < hi:
            raise ParseError(f"{origin}: empty interval for {var}")
        box.append((lo, hi))
    return tuple(box)


def _build(raw: _Raw, overrides: Mapping[str, float], origin: str, text: str) -> SurfaceSpec:
    h = raw.header
    for key in ("id", "kind", "geometry", "variables", "domain", "description"):
        if key not in h:
            raise ParseError(f"{origin}: missing header key {key!r}")
    kind, geometry = h["kind"], h["geometry"]
    if kind not in KINDS or geometry not in GEOMETRIES:
        raise ParseError(f"{origin}: unknown kind or geometry ({kind!r}, {geometry!r})")
    variables = tuple(v.strip() for v in h["variables"].split(","))
    n = len(variables)
    constants, ranges, derived = _resolve_constants(raw, overrides, origin)
    consts = {**constants, **derived}

    domain = _box(h["domain"], variables, consts, origin)
    chart = _box(h["chart"], variables, consts, origin) if "chart" in h else domain
    for (lo, hi), (clo, chi), var in zip(domain, chart, variables):
        if not (clo <= lo and hi <= chi):
            raise ParseError(f"{origin}: sample domain of {var} leaves the chart")

    ambient = tuple(f"x{i + 1}" for i in range(n + 1))
    blocks = {}
    for name, (names, lines) in raw.blocks.items():
        names = names or (ambient if name == "implicit" else ambient[:n] if name == "graph" else variables)
        if name == "target-metric":
            rows = tuple(tuple(parse(e, names, consts) for e in split_top(line)) for line in lines)
            blocks[name] = tuple(p for row in rows for p in row)
        else:
            blocks[name] = tuple(parse(line, names, consts) for line in lines)

    graph = blocks.pop("graph", (None,))[0]
    implicit = blocks.pop("implicit", (None,))[0]
    if "parametric" in blocks:
        components = blocks.pop("parametric")
    elif graph is not None and kind == "graph":
        if graph.variables != variables:
            raise ParseError(f"{origin}: graph block must use the chart variables")
        components = tuple(Program(Var(i), variables) for i in range(n)) + (graph,)
    else:
        raise ParseError(f"{origin}: entry needs a parametric or graph block")
    if len(components) != n + 1:
        raise ParseError(f"{origin}: expected {n + 1} components, got {len(components)}")

    table = INVARIANTS[geometry]
    expectations = []
    for m, where in raw.expects:
        name = m["name"]
        if name not in table:
            raise ParseError(f"{where}: invariant {name!r} is not computable for {geometry} surfaces")
        if m["tag"] not in TAGS:
            raise ParseError(f"{where}: unknown tag {m['tag']!r}")
        params = {}
        for item in filter(None, (s.strip() for s in (m["params"] or "").split(","))):
            key, expr = (s.strip() for s in item.split("=", 1))
            params[key] = _const_expr(expr, consts)
        expectations.append(Expectation(name, params, m["rhs"].strip(), table[name],
                                        _value(m["rhs"], table[name], variables, consts, where),
                                        m["tag"], m["ref"], float(m["tol"]) if m["tol"] else None))

    gauss = []
    for m, where in raw.gauss:
        try:
            i, j = variables.index(m["i"]), variables.index(m["j"])
        except ValueError:
            raise ParseError(f"{where}: unknown chart variable in gauss line") from None
        tangent, position, constant = [None] * n, None, None
        for term in filter(None, (s.strip() for s in m["body"].split(";"))):
            lhs, expr = (s.strip() for s in term.split("=", 1))
            prog = parse(expr, variables, consts)
            if lhs == "x":
                position = prog
            elif lhs == "Y":
                constant = prog
            elif lhs.startswith("x_") and lhs[2:] in variables:
                tangent[variables.index(lhs[2:])] = prog
            else:
                raise ParseError(f"{where}: unknown term {lhs!r}")
        gauss.append(GaussLine(i, j, tuple(tangent), position, constant, m["body"].strip(),
                               m["tag"], m["ref"]))

    figure = h.get("figure")
    return SurfaceSpec(
        id=h["id"], kind=kind, geometry=geometry, dimension=n, variables=variables,
        constants=constants, ranges=ranges, derived=derived, domain=tuple(domain),
        components=tuple(components), graph=graph, implicit=implicit, blocks=blocks,
        chart=chart, expectations=tuple(expectations), gauss=tuple(gauss),
        figure=int(figure) if figure and figure != "-" else None,
        description=h["description"], text=text)


def load_text(text: str, constants: Optional[Mapping[str, float]] = None, origin: str = "<text>") -> SurfaceSpec:
    """Build a :class:`SurfaceSpec` from catalog-file text."""
    return _build(_read(text, origin), dict(constants or {}), origin, text)


@lru_cache(maxsize=None)
def _files() -> dict:
    root = resources.files(__name__).joinpath("data")
    out = {}
    for entry in root.iterdir():
        if entry.name.endswith(".surf"):
            text = entry.read_text(encoding="utf-8")
            raw = _read(text, entry.name)
            out[raw.header.get("id", entry.name[:-5])] = (text, entry.name)
    return out


def catalog_get(surface_id: str, constants: Optional[Mapping[str, float]] = None, **overrides) -> SurfaceSpec:
    """Catalog entry ``surface_id`` with constants at their defaults unless overridden.

    Raises
    ------
    UnknownSurface
        If no entry has this id.
    InvalidConstant
        If an override names an unknown constant or leaves its range.
    """
    files = _files()
    if surface_id not in files:
        raise UnknownSurface(f"unknown surface {surface_id!r}; known: {', '.join(sorted(files))}")
    text, name = files[surface_id]
    return load_text(text, {**(constants or {}), **overrides}, name)


def catalog_list() -> list:
    """``(id, kind, description)`` for every entry, ordered by id."""
    out = []
    for sid in sorted(_files()):
        spec = catalog_get(sid)
        out.append((spec.id, spec.kind, spec.description))
    return out


__all__ = ["CALABI_INVARIANTS", "CENTROAFFINE_INVARIANTS", "ConstantRange", "Expectation", "GaussLine",
           "SurfaceSpec", "catalog_get", "catalog_list", "load_text", "split_top"]
