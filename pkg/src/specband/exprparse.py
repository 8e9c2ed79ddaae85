"""Arithmetic expressions in one variable ``x``, used for coefficients and right-hand sides.

Grammar (whitespace is ignored)::

    expr    := term (("+" | "-") term)*
    term    := power (("*" | "/") power)*
    power   := unary ("^" power)?          right-associative
    unary   := "-" unary | primary
    primary := NUMBER | "x" | "pi" | "e" | FUNC "(" expr ")" | "(" expr ")"
    FUNC    := sin cos tan exp log sqrt sinh cosh tanh abs

Unary minus binds tighter than ``^``, so ``-x^2`` means ``(-x)^2``; write
``-(x^2)`` for the other reading. There is no implicit multiplication.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ExprSyntaxError

__all__ = [
    "Expr",
    "Num",
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "parse",
    "evaluate",
    "to_text",
    "FUNCTIONS",
    "CONSTANTS",
]

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "abs": np.abs,
}
CONSTANTS = {"pi": math.pi, "e": math.e}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Const, Var, Neg, BinOp, Call]

_TOKEN = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_]\w*)"
    r"|(?P<op>[-+*/^()])"
)

_PRIMARY_START = ("number", "x", "pi", "e", "function", "(")


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = self._lex(src)
        self.pos = 0

    def _byte(self, i: int) -> int:
        return len(self.src[:i].encode("utf-8"))

    def _lex(self, src):
        out = []
        i = 0
        while i < len(src):
            m = _TOKEN.match(src, i)
            if m is None:
                raise ExprSyntaxError(f"unexpected character {src[i]!r}", self._byte(i), _PRIMARY_START)
            kind = m.lastgroup
            if kind == "num":
                # "2e" or "1.5E+" would otherwise lex as number then name
                if m.end() < len(src) and src[m.end()] in "eE" and re.match(r"[eE][+-]?\d", src[m.end():]) is None:
                    raise ExprSyntaxError("malformed exponent (no implicit multiplication)",
                                          self._byte(m.end()), ("*", "/", "+", "-", "^", ")"))
                value = float(m.group())
                if not math.isfinite(value):
                    raise ExprSyntaxError("numeric literal out of range", self._byte(i))
                out.append(("num", value, i))
            elif kind != "ws":
                out.append((kind, m.group(), i))
            i = m.end()
        out.append(("end", None, len(src)))
        return out

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, expected, what=None):
        kind, text, i = self.peek()
        if what is None:
            what = "end of input" if kind == "end" else f"unexpected {text!r}"
        raise ExprSyntaxError(what, self._byte(i), expected)

    def accept(self, op):
        kind, text, _ = self.peek()
        if kind == "op" and text == op:
            self.pos += 1
            return True
        return False

    def parse(self) -> Expr:
        e = self.expr()
        if self.peek()[0] != "end":
            self.fail(("+", "-", "*", "/", "^", "end of input"))
        return e

    def expr(self):
        left = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.pos += 1
                left = BinOp(text, left, self.term())
            else:
                return left

    def term(self):
        left = self.power()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.pos += 1
                left = BinOp(text, left, self.power())
            else:
                return left

    def power(self):
        base = self.unary()
        if self.accept("^"):
            return BinOp("^", base, self.power())
        return base

    def unary(self):
        if self.accept("-"):
            return Neg(self.unary())
        return self.primary()

    def primary(self):
        kind, text, _ = self.peek()
        if kind == "num":
            self.pos += 1
            return Num(text)
        if kind == "name":
            if text == "x":
                self.pos += 1
                return Var()
            if text in CONSTANTS:
                self.pos += 1
                return Const(text)
            if text in FUNCTIONS:
                self.pos += 1
                if not self.accept("("):
                    self.fail(("(",))
                arg = self.expr()
                if not self.accept(")"):
                    self.fail((")", "+", "-", "*", "/", "^"))
                return Call(text, arg)
            self.fail(_PRIMARY_START, f"unknown name {text!r}")
        if self.accept("("):
            e = self.expr()
            if not self.accept(")"):
                self.fail((")", "+", "-", "*", "/", "^"))
            return e
        self.fail(_PRIMARY_START)


def parse(src) -> Expr:
    """Parse ``src`` (text, or UTF-8 bytes) into an expression tree.

    Raises
    ------
    ExprSyntaxError
        With ``offset`` (bytes into the UTF-8 encoding) and ``expected``.
    """
    if isinstance(src, (bytes, bytearray)):
        try:
            src = bytes(src).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ExprSyntaxError("input is not valid UTF-8", exc.start) from None
    if not src.strip():
        raise ExprSyntaxError("empty expression", len(src.encode("utf-8")), _PRIMARY_START)
    return _Parser(src).parse()


_BINARY = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.true_divide,
    "^": np.power,
}


def evaluate(e: Expr, x):
    """Evaluate ``e`` at ``x`` (scalar or array) in IEEE double arithmetic.

    Non-finite results are returned as-is; callers sampling coefficients
    reject them.
    """
    x = np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        out = _eval(e, x)
    out = np.broadcast_to(out, x.shape).astype(float)
    return float(out) if out.ndim == 0 else out


def _eval(e, x):
    if isinstance(e, Num):
        return np.float64(e.value)
    if isinstance(e, Var):
        return x
    if isinstance(e, Const):
        return np.float64(CONSTANTS[e.name])
    if isinstance(e, Neg):
        return -_eval(e.operand, x)
    if isinstance(e, BinOp):
        return _BINARY[e.op](_eval(e.left, x), _eval(e.right, x))
    if isinstance(e, Call):
        return FUNCTIONS[e.func](_eval(e.arg, x))
    raise TypeError(f"not an expression node: {e!r}")


# binding strength of each node when printed
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 3}
_UNARY, _ATOM = 4, 5


def _prec(e) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _UNARY
    return _ATOM


def _wrap(e, minimum: int) -> str:
    s = to_text(e)
    return s if _prec(e) >= minimum else f"({s})"


def to_text(e: Expr) -> str:
    """Canonical text: minimal parentheses, single spaces around ``+ - * /``."""
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, Var):
        return "x"
    if isinstance(e, Const):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({to_text(e.arg)})"
    if isinstance(e, Neg):
        return "-" + _wrap(e.operand, _UNARY)
    if e.op == "^":
        return f"{_wrap(e.left, _UNARY)}^{_wrap(e.right, 3)}"
    p = _PREC[e.op]
    return f"{_wrap(e.left, p)} {e.op} {_wrap(e.right, p + 1)}"
