"""Closed-form expression programs and their textual grammar.

Grammar (EBNF)::

    expr     = term , { ( "+" | "-" ) , term } ;
    term     = factor , { ( "*" | "/" ) , factor } ;
    factor   = ( "-" | "+" ) , factor | power ;
    power    = atom , [ "^" , factor ] ;
    atom     = number | name | call | integral | "(" , expr , ")" ;
    call     = func , "(" , expr , ")" | "atan2" , "(" , expr , "," , expr , ")" ;
    integral = "int" , "(" , expr , "," , name , "," , expr , "," , expr , ")" ;
    func     = "exp" | "ln" | "log" | "sqrt" | "sin" | "cos"
             | "sinh" | "cosh" | "tanh" | "atan" ;
    number   = digit , { digit } , [ "." , { digit } ] , [ ( "e" | "E" ) , [ "+" | "-" ] , digit , { digit } ] ;

``int(g, t, a, b)`` is the definite integral of ``g`` over the dummy ``t``
from the constant ``a`` to ``b``; ``g`` may mention only ``t`` (and nested
integrals), ``b`` may mention the outer variables. Exponents after ``^`` must
be constant. Names that are neither variables nor functions are looked up in
the constants mapping supplied to :func:`parse`; ``pi`` is always defined.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import ParseError

FUNCTIONS = ("exp", "ln", "sqrt", "sin", "cos", "sinh", "cosh", "tanh", "atan")
_ALIASES = {"log": "ln"}


class Node:
    """Base class for immutable expression nodes."""

    __slots__ = ()


@dataclass(frozen=True, eq=True)
class Var(Node):
    index: int


@dataclass(frozen=True, eq=True)
class Const(Node):
    value: float


@dataclass(frozen=True, eq=True)
class Add(Node):
    left: Node
    right: Node


@dataclass(frozen=True, eq=True)
class Sub(Node):
    left: Node
    right: Node


@dataclass(frozen=True, eq=True)
class Mul(Node):
    left: Node
    right: Node


@dataclass(frozen=True, eq=True)
class Div(Node):
    left: Node
    right: Node


@dataclass(frozen=True, eq=True)
class Pow(Node):
    base: Node
    exponent: float


@dataclass(frozen=True, eq=True)
class Call(Node):
    fn: str
    arg: Node


@dataclass(frozen=True, eq=True)
class Atan2(Node):
    y: Node
    x: Node


@dataclass(frozen=True, eq=True)
class Integral(Node):
    """``int_lower^upper integrand(t) dt``; ``integrand`` is univariate in ``Var(0)``."""

    integrand: Node
    lower: float
    upper: Node
    dummy: str = "t"


_BINARY = {Add: "+", Sub: "-", Mul: "*", Div: "/"}


@dataclass(frozen=True)
class Program:
    """An expression over named chart variables."""

    root: Node
    variables: tuple

    def __post_init__(self):
        _validate(self.root, len(self.variables))

    @property
    def arity(self) -> int:
        return len(self.variables)

    def __str__(self):
        return serialize(self)


def _validate(node: Node, arity: int):
    if isinstance(node, Var):
        if not 0 <= node.index < arity:
            raise ParseError(f"variable index {node.index} out of range for arity {arity}")
    elif isinstance(node, Const):
        if not math.isfinite(node.value):
            raise ParseError("non-finite constant")
    elif isinstance(node, (Add, Sub, Mul, Div)):
        _validate(node.left, arity)
        _validate(node.right, arity)
    elif isinstance(node, Pow):
        _validate(node.base, arity)
    elif isinstance(node, Call):
        if node.fn not in FUNCTIONS:
            raise ParseError(f"unknown function {node.fn!r}")
        _validate(node.arg, arity)
    elif isinstance(node, Atan2):
        _validate(node.y, arity)
        _validate(node.x, arity)
    elif isinstance(node, Integral):
        _validate(node.integrand, 1)
        _validate(node.upper, arity)
    else:
        raise ParseError(f"unknown node {node!r}")


def constant_value(node: Node) -> float:
    """Numerically fold a variable-free subtree."""
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Add):
        return constant_value(node.left) + constant_value(node.right)
    if isinstance(node, Sub):
        return constant_value(node.left) - constant_value(node.right)
    if isinstance(node, Mul):
        return constant_value(node.left) * constant_value(node.right)
    if isinstance(node, Div):
        return constant_value(node.left) / constant_value(node.right)
    if isinstance(node, Pow):
        return constant_value(node.base) ** node.exponent
    if isinstance(node, Call):
        fn = {"ln": math.log}.get(node.fn) or getattr(math, node.fn)
        return fn(constant_value(node.arg))
    if isinstance(node, Atan2):
        return math.atan2(constant_value(node.y), constant_value(node.x))
    raise ParseError("expression is not constant")


# -- tokenizer / parser -----------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character at {pos}: {text[pos:pos + 10]!r}")
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
        pos = m.end()
    out.append(("end", ""))
    return out


class _Parser:
    def __init__(self, text, variables, constants):
        self.toks = _tokenize(text)
        self.i = 0
        self.scopes = [tuple(variables)]
        self.constants = {"pi": math.pi, **dict(constants or {})}

    def peek(self):
        return self.toks[self.i]

    def take(self, value=None):
        tok = self.toks[self.i]
        if value is not None and tok[1] != value:
            raise ParseError(f"expected {value!r}, found {tok[1]!r}")
        self.i += 1
        return tok

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            raise ParseError(f"trailing input at {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self):
        node = self.factor()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.factor()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def factor(self):
        if self.peek()[1] == "-":
            self.take()
            inner = self.factor()
            if isinstance(inner, Const):
                return Const(-inner.value)
            return Mul(Const(-1.0), inner)
        if self.peek()[1] == "+":
            self.take()
            return self.factor()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            exponent = self.factor()
            try:
                value = constant_value(exponent)
            except ParseError:
                raise ParseError("exponent must be a constant expression") from None
            return Pow(base, float(value))
        return base

    def atom(self):
        kind, text = self.take()
        if kind == "num":
            return Const(float(text))
        if text == "(":
            node = self.expr()
            self.take(")")
            return node
        if kind != "name":
            raise ParseError(f"unexpected token {text!r}")
        if text == "int":
            return self.integral()
        fn = _ALIASES.get(text, text)
        if fn in FUNCTIONS and self.peek()[1] == "(":
            self.take("(")
            arg = self.expr()
            self.take(")")
            return Call(fn, arg)
        if fn == "atan2" and self.peek()[1] == "(":
            self.take("(")
            y = self.expr()
            self.take(",")
            x = self.expr()
            self.take(")")
            return Atan2(y, x)
        scope = self.scopes[-1]
        if text in scope:
            return Var(scope.index(text))
        if text in self.constants:
            return Const(float(self.constants[text]))
        raise ParseError(f"unknown name {text!r}")

    def integral(self):
        self.take("(")
        # the integrand is parsed after the dummy name is known; remember where it starts
        start = self.i
        depth = 0
        while True:
            kind, text = self.toks[self.i]
            if kind == "end":
                raise ParseError("unterminated int(...)")
            if text == "(":
                depth += 1
            elif text == ")":
                depth -= 1
            elif text == "," and depth == 0:
                break
            self.i += 1
        self.take(",")
        kind, dummy = self.take()
        if kind != "name":
            raise ParseError("integral dummy must be a name")
        self.take(",")
        lower = self.expr()
        self.take(",")
        upper = self.expr()
        self.take(")")
        resume = self.i
        self.i = start
        self.scopes.append((dummy,))
        integrand = self.expr()
        self.scopes.pop()
        self.take(",")
        self.i = resume
        try:
            lo = constant_value(lower)
        except ParseError:
            raise ParseError("integral lower limit must be constant") from None
        return Integral(integrand, float(lo), upper, dummy)


def parse(text: str, variables: Sequence[str], constants: Mapping[str, float] | None = None) -> Program:
    """Parse ``text`` into a :class:`Program` over ``variables``."""
    root = _Parser(text, variables, constants).parse()
    return Program(root, tuple(variables))


# -- serializer -------------------------------------------------------------

def _fmt(value: float) -> str:
    s = repr(float(value))
    return f"({s})" if s.startswith("-") else s


def _ser(node: Node, names: tuple) -> str:
    if isinstance(node, Var):
        return names[node.index]
    if isinstance(node, Const):
        return _fmt(node.value)
    if type(node) in _BINARY:
        return f"({_ser(node.left, names)} {_BINARY[type(node)]} {_ser(node.right, names)})"
    if isinstance(node, Pow):
        return f"({_ser(node.base, names)} ^ {_fmt(node.exponent)})"
    if isinstance(node, Call):
        return f"{node.fn}({_ser(node.arg, names)})"
    if isinstance(node, Atan2):
        return f"atan2({_ser(node.y, names)}, {_ser(node.x, names)})"
    if isinstance(node, Integral):
        inner = _ser(node.integrand, (node.dummy,))
        return f"int({inner}, {node.dummy}, {_fmt(node.lower)}, {_ser(node.upper, names)})"
    raise TypeError(node)


def serialize(program: Program) -> str:
    """Canonical, fully parenthesized text that :func:`parse` maps back to ``program``."""
    return _ser(program.root, program.variables)


# -- rewriting ----------------------------------------------------------------

def substitute(node: Node, args: Sequence[Node]) -> Node:
    """Replace ``Var(i)`` by ``args[i]`` (integrands keep their own dummy)."""
    if isinstance(node, Var):
        return args[node.index]
    if isinstance(node, Const):
        return node
    if type(node) in _BINARY:
        return type(node)(substitute(node.left, args), substitute(node.right, args))
    if isinstance(node, Pow):
        return Pow(substitute(node.base, args), node.exponent)
    if isinstance(node, Call):
        return Call(node.fn, substitute(node.arg, args))
    if isinstance(node, Atan2):
        return Atan2(substitute(node.y, args), substitute(node.x, args))
    if isinstance(node, Integral):
        return Integral(node.integrand, node.lower, substitute(node.upper, args), node.dummy)
    raise TypeError(node)


def compose(program: Program, args: Sequence[Program]) -> Program:
    """``program(args[0], ..., args[k-1])`` as a program over the variables of ``args``."""
    if len(args) != program.arity:
        raise ValueError("argument count does not match arity")
    variables = args[0].variables
    if any(a.variables != variables for a in args):
        raise ValueError("arguments must share their variables")
    return Program(substitute(program.root, [a.root for a in args]), variables)
