"""Arithmetic formula trees: parsing, printing, evaluation, compilation.

Problems are declared as formula strings over named variables (project
convention: t, x, v, lam, u, and x1..xn / v1..vn / u1..un above one
dimension).  The grammar is deliberately small: numbers, identifiers,
parentheses, + - * / ^ and a fixed list of unary functions that must be
applied with parentheses.  ``^`` binds tighter than unary minus and is
right-associative, so ``-x^2`` is ``-(x^2)`` and ``x^-2`` is ``x^(-2)``.

Domain violations during evaluation (log of a non-positive number,
division by zero, overflow) do not raise: they yield a non-finite float
that callers are expected to test with ``math.isfinite``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Union

FUNCTIONS = ("sin", "cos", "tan", "arctan", "exp", "log", "abs", "sign", "sqrt")
CONSTANTS = {"pi": math.pi}
_RESERVED = set(FUNCTIONS) | set(CONSTANTS)


class ExprError(ValueError):
    """Base class for formula errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class UnknownFunctionError(ExprSyntaxError):
    pass


class UnboundVariableError(ExprError):
    pass


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" or one of FUNCTIONS
    arg: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # add | sub | mul | div | pow
    left: "Expr"
    right: "Expr"


Expr = Union[Const, Var, Unary, Binary]


# --- tokenizer -------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class _Token:
    kind: str  # num | name | op | end
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            # skip over whitespace-only tail
            rest = text[pos:]
            if rest.strip() == "":
                break
            bad = pos + len(rest) - len(rest.lstrip())
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        start = m.end() - len(m.group(kind))
        tokens.append(_Token(kind, m.group(kind), start))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


# --- parser ----------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        if not text or text.strip() == "":
            raise ExprSyntaxError("empty formula", 0)
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        tok = self.peek()
        if tok.kind != "op" or tok.text != op:
            found = repr(tok.text) if tok.kind != "end" else "end of input"
            raise ExprSyntaxError(f"expected {op!r}, found {found}", tok.pos)
        return self.advance()

    def parse(self) -> Expr:
        e = self.sum()
        tok = self.peek()
        if tok.kind != "end":
            raise ExprSyntaxError(
                f"expected an operator or end of input, found {tok.text!r}", tok.pos
            )
        return e

    def sum(self) -> Expr:
        e = self.term()
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in "+-":
                self.advance()
                rhs = self.term()
                e = Binary("add" if tok.text == "+" else "sub", e, rhs)
            else:
                return e

    def term(self) -> Expr:
        e = self.unary()
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in "*/":
                self.advance()
                rhs = self.unary()
                e = Binary("mul" if tok.text == "*" else "div", e, rhs)
            else:
                return e

    def unary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        tok = self.peek()
        if tok.kind == "op" and tok.text == "^":
            self.advance()
            # exponent re-enters at unary level: right-associative, and
            # x^-2 is accepted while -x^2 still negates the whole power
            return Binary("pow", base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == "num":
            self.advance()
            return Const(float(tok.text))
        if tok.kind == "name":
            self.advance()
            nxt = self.peek()
            if nxt.kind == "op" and nxt.text == "(":
                if tok.text not in FUNCTIONS:
                    raise UnknownFunctionError(
                        f"unknown function {tok.text!r}", tok.pos
                    )
                self.advance()
                arg = self.sum()
                self.expect_op(")")
                return Unary(tok.text, arg)
            if tok.text in CONSTANTS:
                return Const(CONSTANTS[tok.text])
            if tok.text in FUNCTIONS:
                raise ExprSyntaxError(
                    f"function {tok.text!r} needs parenthesized arguments", tok.pos
                )
            return Var(tok.text)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            e = self.sum()
            self.expect_op(")")
            return e
        found = repr(tok.text) if tok.kind != "end" else "end of input"
        raise ExprSyntaxError(
            f"expected a number, a name, '(' or unary '-', found {found}", tok.pos
        )


def parse(text: str) -> Expr:
    """Parse a formula string into an expression tree."""
    return _Parser(text).parse()


# --- printing --------------------------------------------------------------

# precedence levels used by the printer: sum=1, product=2, neg=3, pow=4, atom=5
_BIN_LEVEL = {"add": 1, "sub": 1, "mul": 2, "div": 2, "pow": 4}


def _fmt(e: Expr, minlevel: int) -> str:
    if isinstance(e, Const):
        s = repr(e.value)
        return s
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            body = "-" + _fmt(e.arg, 3)
            return body if minlevel <= 3 else "(" + body + ")"
        return f"{e.op}({_fmt(e.arg, 1)})"
    level = _BIN_LEVEL[e.op]
    sym = {"add": " + ", "sub": " - ", "mul": "*", "div": "/", "pow": "^"}[e.op]
    if e.op == "pow":
        body = _fmt(e.left, 5) + sym + _fmt(e.right, 3)
    else:
        body = _fmt(e.left, level) + sym + _fmt(e.right, level + 1)
    return body if minlevel <= level else "(" + body + ")"


def to_formula(e: Expr) -> str:
    """Render a tree back to a formula string; parse(to_formula(e)) == e."""
    return _fmt(e, 1)


def free_vars(e: Expr) -> set[str]:
    if isinstance(e, Const):
        return set()
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Unary):
        return free_vars(e.arg)
    return free_vars(e.left) | free_vars(e.right)


# --- evaluation ------------------------------------------------------------

_NAN = float("nan")
_INF = float("inf")


def _div(a: float, b: float) -> float:
    try:
        return a / b
    except ZeroDivisionError:
        if a == 0.0 or a != a:
            return _NAN
        return math.copysign(_INF, a) * math.copysign(1.0, b)


def _pow(a: float, b: float) -> float:
    try:
        return math.pow(a, b)
    except ValueError:
        # IEEE-style: 0^negative diverges, negative^fractional has no real value
        return _INF if a == 0.0 else _NAN
    except OverflowError:
        return _INF


def _log(x: float) -> float:
    if x > 0.0:
        try:
            return math.log(x)
        except OverflowError:
            return _INF
    return -_INF if x == 0.0 else _NAN


def _sqrt(x: float) -> float:
    return math.sqrt(x) if x >= 0.0 else _NAN


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return _INF


def _sign(x: float) -> float:
    if x != x:
        return _NAN
    if x > 0.0:
        return 1.0
    return -1.0 if x < 0.0 else 0.0


_EVAL_NS = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "arctan": math.atan,
    "exp": _exp,
    "log": _log,
    "abs": math.fabs,
    "sign": _sign,
    "sqrt": _sqrt,
    "_div": _div,
    "_pow": _pow,
}


def evaluate(e: Expr, env: dict[str, float]) -> float:
    """Evaluate with variables bound by ``env``; non-finite on domain errors."""
    try:
        return _eval(e, env)
    except ExprError:
        raise
    except (ValueError, OverflowError):
        return _NAN


def _eval(e: Expr, env: dict[str, float]) -> float:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise UnboundVariableError(f"variable {e.name!r} is not bound") from None
    if isinstance(e, Unary):
        a = _eval(e.arg, env)
        if e.op == "neg":
            return -a
        return _EVAL_NS[e.op](a)
    a = _eval(e.left, env)
    b = _eval(e.right, env)
    if e.op == "add":
        return a + b
    if e.op == "sub":
        return a - b
    if e.op == "mul":
        return a * b
    if e.op == "div":
        return _div(a, b)
    return _pow(a, b)


# --- compilation -----------------------------------------------------------


def _emit(e: Expr, params: tuple[str, ...]) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        if e.name not in params:
            raise UnboundVariableError(
                f"variable {e.name!r} is not among parameters {params}"
            )
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{_emit(e.arg, params)})"
        return f"{e.op}({_emit(e.arg, params)})"
    a = _emit(e.left, params)
    b = _emit(e.right, params)
    if e.op == "add":
        return f"({a} + {b})"
    if e.op == "sub":
        return f"({a} - {b})"
    if e.op == "mul":
        return f"({a} * {b})"
    if e.op == "div":
        return f"_div({a}, {b})"
    return f"_pow({a}, {b})"


def compile_expr(e: Expr, params: tuple[str, ...]) -> Callable[..., float]:
    """Compile a tree to a positional-argument float function.

    All free variables must appear in ``params``.  The compiled function
    uses the same primitive operations as :func:`evaluate`, so both paths
    produce bit-identical results.
    """
    body = _emit(e, params)
    src = (
        f"def _compiled({', '.join(params)}):\n"
        f"    try:\n"
        f"        return {body}\n"
        f"    except (ValueError, OverflowError):\n"
        f"        return _NAN\n"
    )
    ns = dict(_EVAL_NS)
    ns["_NAN"] = _NAN
    exec(src, ns)  # noqa: S102 - generated from a validated tree
    return ns["_compiled"]
