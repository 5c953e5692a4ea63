"""Small arithmetic expression language for configuration files.

Grammar (``^`` binds tighter than unary minus, so ``-2^2`` is -4)::

    sum     := product (('+' | '-') product)*
    product := unary (('*' | '/') unary)*
    unary   := '-' unary | '+' unary | power
    power   := atom ('^' unary)?
    atom    := number | name | name '(' sum ')' | '(' sum ')'

Names are the variables x1, x2, y, v1, v2 and the constants pi, e.
Expressions evaluate vectorised over numpy arrays and can be
differentiated symbolically, so a configured field carries exact partials.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError, ParseError

VARIABLES = ("x1", "x2", "y", "v1", "v2")
CONSTANTS = {"pi": math.pi, "e": math.e}
FUNCTIONS = ("sin", "cos", "tan", "exp", "ln", "sqrt", "abs")

_TOKEN = re.compile(r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
                    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))")


@dataclass(frozen=True)
class Num:
    value: float
    offset: int = 0


@dataclass(frozen=True)
class Var:
    name: str
    offset: int = 0


@dataclass(frozen=True)
class Unary:
    op: str
    arg: object
    offset: int = 0


@dataclass(frozen=True)
class Binary:
    op: str
    left: object
    right: object
    offset: int = 0


@dataclass(frozen=True)
class Call:
    fn: str
    arg: object
    offset: int = 0


def _tokenize(src):
    pos, out = 0, []
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if not m or m.end() == pos:
            bad = pos + len(src[pos:]) - len(src[pos:].lstrip())
            raise ParseError(f"unexpected character {src[bad]!r}", bad, src)
        kind = m.lastgroup
        start = m.start(kind)
        out.append((kind, m.group(kind), start))
        pos = m.end()
    out.append(("end", "", len(src)))
    return out


class _Parser:
    def __init__(self, src):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, value):
        t = self.take()
        if t[1] != value:
            what = "end of input" if t[0] == "end" else repr(t[1])
            raise ParseError(f"expected {value!r}, found {what}", t[2], self.src)
        return t

    def parse(self):
        node = self.sum()
        t = self.peek()
        if t[0] != "end":
            raise ParseError(f"unexpected {t[1]!r}", t[2], self.src)
        return node

    def sum(self):
        node = self.product()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op, off = self.take()[1:]
            node = Binary(op, node, self.product(), off)
        return node

    def product(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op, off = self.take()[1:]
            node = Binary(op, node, self.unary(), off)
        return node

    def unary(self):
        t = self.peek()
        if t[0] == "op" and t[1] in ("-", "+"):
            self.take()
            arg = self.unary()
            return Unary("-", arg, t[2]) if t[1] == "-" else arg
        return self.power()

    def power(self):
        base = self.atom()
        t = self.peek()
        if t[0] == "op" and t[1] == "^":
            self.take()
            return Binary("^", base, self.unary(), t[2])
        return base

    def atom(self):
        kind, text, off = self.take()
        if kind == "num":
            return Num(float(text), off)
        if kind == "name":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.sum()
                self.expect(")")
                return Call(text, arg, off)
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                raise ParseError(f"unknown function {text!r}", off, self.src)
            if text in CONSTANTS:
                return Num(CONSTANTS[text], off)
            if text in VARIABLES:
                return Var(text, off)
            raise ParseError(f"unknown name {text!r}", off, self.src)
        if kind == "op" and text == "(":
            node = self.sum()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"expected a number, name or '(', found {what}", off, self.src)


class Expression:
    """A parsed expression; call with keyword variables."""

    def __init__(self, tree, source=""):
        self.tree = tree
        self.source = source

    def __repr__(self):
        return f"Expression({self.source!r})"

    def variables(self):
        out = set()

        def walk(n):
            if isinstance(n, Var):
                out.add(n.name)
            for child in ("arg", "left", "right"):
                if hasattr(n, child):
                    walk(getattr(n, child))
        walk(self.tree)
        return out

    def __call__(self, **env):
        with np.errstate(all="ignore"):
            return _eval(self.tree, env)

    def diff(self, var):
        return Expression(_simplify(_diff(self.tree, var)), f"d({self.source})/d{var}")

    def as_function(self, var="y"):
        """One-argument callable, for the free functions of a design."""
        extra = self.variables() - {var}
        if extra:
            raise EvaluationError(f"expression uses {sorted(extra)} besides {var}")
        return lambda t: np.asarray(self(**{var: t}), dtype=float) + 0.0 * np.asarray(t, float)


def parse_expression(src):
    if not isinstance(src, str):
        raise ParseError("expression must be a string")
    return Expression(_Parser(src).parse(), src)


def _eval(n, env):
    if isinstance(n, Num):
        return n.value
    if isinstance(n, Var):
        if n.name not in env:
            raise EvaluationError(f"variable {n.name!r} has no value", n.offset)
        return np.asarray(env[n.name], dtype=float) if np.ndim(env[n.name]) else float(env[n.name])
    if isinstance(n, Unary):
        return -_eval(n.arg, env)
    if isinstance(n, Binary):
        a, b = _eval(n.left, env), _eval(n.right, env)
        if n.op == "+":
            return a + b
        if n.op == "-":
            return a - b
        if n.op == "*":
            return a * b
        if n.op == "/":
            if np.any(np.asarray(b) == 0):
                raise EvaluationError("division by zero", n.offset)
            return a / b
        r = np.power(a, b) if (np.ndim(a) or np.ndim(b)) else _scalar_pow(a, b, n.offset)
        if np.any(np.isnan(r)) and not (np.any(np.isnan(a)) or np.any(np.isnan(b))):
            raise EvaluationError("power of a negative number to a fractional exponent", n.offset)
        return r
    a = _eval(n.arg, env)
    if n.fn == "ln":
        if np.any(np.asarray(a) <= 0):
            raise EvaluationError("ln of a nonpositive value", n.offset)
        return np.log(a)
    if n.fn == "sqrt":
        if np.any(np.asarray(a) < 0):
            raise EvaluationError("sqrt of a negative value", n.offset)
        return np.sqrt(a)
    return {"sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "abs": np.abs}[n.fn](a)


def _scalar_pow(a, b, offset):
    try:
        r = float(a) ** float(b)
    except ZeroDivisionError:
        raise EvaluationError("zero to a negative power", offset) from None
    except OverflowError:
        return math.inf
    if isinstance(r, complex):
        return math.nan
    return r


# --- symbolic derivative -------------------------------------------------------------

def _diff(n, v):
    if isinstance(n, Num):
        return Num(0.0)
    if isinstance(n, Var):
        return Num(1.0 if n.name == v else 0.0)
    if isinstance(n, Unary):
        return Unary("-", _diff(n.arg, v))
    if isinstance(n, Binary):
        a, b = n.left, n.right
        da, db = _diff(a, v), _diff(b, v)
        if n.op in "+-":
            return Binary(n.op, da, db)
        if n.op == "*":
            return Binary("+", Binary("*", da, b), Binary("*", a, db))
        if n.op == "/":
            return Binary("/", Binary("-", Binary("*", da, b), Binary("*", a, db)),
                          Binary("^", b, Num(2.0)))
        # a^b: constant exponent uses the power rule, otherwise d(exp(b ln a))
        if _is_const(b):
            return Binary("*", Binary("*", b, Binary("^", a, Binary("-", b, Num(1.0)))), da)
        return Binary("*", n, Binary("+", Binary("*", db, Call("ln", a)),
                                     Binary("/", Binary("*", b, da), a)))
    a, da = n.arg, _diff(n.arg, v)
    outer = {
        "sin": lambda: Call("cos", a),
        "cos": lambda: Unary("-", Call("sin", a)),
        "tan": lambda: Binary("/", Num(1.0), Binary("^", Call("cos", a), Num(2.0))),
        "exp": lambda: Call("exp", a),
        "ln": lambda: Binary("/", Num(1.0), a),
        "sqrt": lambda: Binary("/", Num(0.5), Call("sqrt", a)),
        "abs": lambda: Binary("/", a, Call("abs", a)),
    }[n.fn]()
    return Binary("*", outer, da)


def _is_const(n):
    return isinstance(n, Num) or (isinstance(n, Unary) and _is_const(n.arg))


def _simplify(n):
    if isinstance(n, Unary):
        a = _simplify(n.arg)
        if isinstance(a, Num):
            return Num(-a.value)
        return Unary("-", a)
    if isinstance(n, Call):
        return Call(n.fn, _simplify(n.arg))
    if not isinstance(n, Binary):
        return n
    a, b = _simplify(n.left), _simplify(n.right)
    av = a.value if isinstance(a, Num) else None
    bv = b.value if isinstance(b, Num) else None
    if av is not None and bv is not None and n.op != "/":
        return Num(_eval(Binary(n.op, a, b), {}))
    if n.op == "+":
        if av == 0.0:
            return b
        if bv == 0.0:
            return a
    if n.op == "-" and bv == 0.0:
        return a
    if n.op == "-" and av == 0.0:
        return Unary("-", b)
    if n.op == "*":
        if av == 0.0 or bv == 0.0:
            return Num(0.0)
        if av == 1.0:
            return b
        if bv == 1.0:
            return a
    if n.op == "/" and av == 0.0:
        return Num(0.0)
    if n.op == "^" and bv == 1.0:
        return a
    if n.op == "^" and bv == 0.0:
        return Num(1.0)
    return Binary(n.op, a, b)
