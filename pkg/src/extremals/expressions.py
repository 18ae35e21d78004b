"""Tiny expression language for user-defined flow components.

Grammar (standard precedence, tightest last):
    sum     := product (('+' | '-') product)*
    product := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' exponent)?          # exponent: integer literal, right-assoc
    atom    := number | 'x1' | 'x2' | 'x3' | func '(' sum ')' | '(' sum ')'

Numbers are decimals with an optional exponent part.  Known functions:
exp, sin, cos, sqrt, tanh.  Binary +, -, *, / are left-associative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

from .errors import EvalError, FlowSyntaxError, UnknownIdentifierError

VARIABLES = {"x1": 0, "x2": 1, "x3": 2}
FUNCTIONS = {
    "exp": math.exp,
    "sin": math.sin,
    "cos": math.cos,
    "sqrt": math.sqrt,
    "tanh": math.tanh,
}


@dataclass(frozen=True, slots=True)
class Num:
    value: float


@dataclass(frozen=True, slots=True)
class Var:
    index: int  # 0, 1, 2 for x1, x2, x3


@dataclass(frozen=True, slots=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True, slots=True)
class BinOp:
    op: str  # one of + - * /
    left: "Node"
    right: "Node"


@dataclass(frozen=True, slots=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True, slots=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Neg, BinOp, Pow, Call]


# --- tokenizer ---------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class _Token:
    kind: str  # 'num', 'name', 'op', 'end'
    text: str
    pos: int


def _tokenize(src: str) -> list[_Token]:
    tokens: list[_Token] = []
    i, n = 0, len(src)
    while i < n:
        ch = src[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and src[i + 1].isdigit()):
            start = i
            while i < n and src[i].isdigit():
                i += 1
            if i < n and src[i] == ".":
                i += 1
                while i < n and src[i].isdigit():
                    i += 1
            if i < n and src[i] in "eE":
                j = i + 1
                if j < n and src[j] in "+-":
                    j += 1
                if j < n and src[j].isdigit():
                    i = j
                    while i < n and src[i].isdigit():
                        i += 1
            tokens.append(_Token("num", src[start:i], start))
            continue
        if ch.isalpha() or ch == "_":
            start = i
            while i < n and (src[i].isalnum() or src[i] == "_"):
                i += 1
            tokens.append(_Token("name", src[start:i], start))
            continue
        if ch in "+-*/^()":
            tokens.append(_Token("op", ch, i))
            i += 1
            continue
        raise FlowSyntaxError(i, f"unexpected character {ch!r}")
    tokens.append(_Token("end", "", n))
    return tokens


# --- parser ------------------------------------------------------------------

class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str) -> None:
        tok = self.peek()
        if tok.kind == "op" and tok.text == op:
            self.advance()
            return
        raise FlowSyntaxError(tok.pos, f"expected {op!r}")

    def parse(self) -> Node:
        node = self.sum()
        tok = self.peek()
        if tok.kind != "end":
            raise FlowSyntaxError(tok.pos, f"unexpected {tok.text!r}")
        return node

    def sum(self) -> Node:
        node = self.product()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.product())
        return node

    def product(self) -> Node:
        node = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.advance()
            return Pow(base, self.exponent())
        return base

    def exponent(self) -> int:
        tok = self.peek()
        if tok.kind != "num" or any(c in tok.text for c in ".eE"):
            raise FlowSyntaxError(tok.pos, "expected integer exponent")
        self.advance()
        value = int(tok.text)
        if self.peek().kind == "op" and self.peek().text == "^":
            self.advance()
            value = value ** self.exponent()
        return value

    def atom(self) -> Node:
        tok = self.advance()
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "name":
            if tok.text in VARIABLES:
                return Var(VARIABLES[tok.text])
            if tok.text in FUNCTIONS:
                self.expect_op("(")
                arg = self.sum()
                self.expect_op(")")
                return Call(tok.text, arg)
            raise UnknownIdentifierError(tok.pos, f"unknown identifier {tok.text!r}")
        if tok.kind == "op" and tok.text == "(":
            node = self.sum()
            self.expect_op(")")
            return node
        if tok.kind == "end":
            raise FlowSyntaxError(tok.pos, "unexpected end of input")
        raise FlowSyntaxError(tok.pos, f"unexpected {tok.text!r}")


def parse(src: str) -> Node:
    """Parse one expression into its tree form."""
    return _Parser(src).parse()


# --- evaluation --------------------------------------------------------------

def evaluate(node: Node, x1: float, x2: float, x3: float) -> float:
    """Evaluate the tree at a point; domain violations raise EvalError."""
    try:
        return _eval(node, (x1, x2, x3))
    except ZeroDivisionError as exc:
        raise EvalError(f"division by zero while evaluating at ({x1}, {x2}, {x3})") from exc
    except (ValueError, OverflowError) as exc:
        raise EvalError(f"domain error while evaluating at ({x1}, {x2}, {x3}): {exc}") from exc


def _eval(node: Node, x: tuple[float, float, float]) -> float:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return x[node.index]
    if isinstance(node, Neg):
        return -_eval(node.arg, x)
    if isinstance(node, BinOp):
        a = _eval(node.left, x)
        b = _eval(node.right, x)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return a / b
    if isinstance(node, Pow):
        return _eval(node.base, x) ** node.exponent
    return FUNCTIONS[node.func](_eval(node.arg, x))


# --- symbolic differentiation ------------------------------------------------

def _is_zero(node: Node) -> bool:
    return isinstance(node, Num) and node.value == 0.0


def _is_one(node: Node) -> bool:
    return isinstance(node, Num) and node.value == 1.0


def _add(a: Node, b: Node) -> Node:
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    return BinOp("+", a, b)


def _sub(a: Node, b: Node) -> Node:
    if _is_zero(b):
        return a
    if _is_zero(a):
        return Neg(b)
    return BinOp("-", a, b)


def _mul(a: Node, b: Node) -> Node:
    if _is_zero(a) or _is_zero(b):
        return Num(0.0)
    if _is_one(a):
        return b
    if _is_one(b):
        return a
    return BinOp("*", a, b)


def _div(a: Node, b: Node) -> Node:
    if _is_zero(a):
        return Num(0.0)
    if _is_one(b):
        return a
    return BinOp("/", a, b)


def differentiate(node: Node, index: int) -> Node:
    """Exact partial derivative with respect to x{index+1}, lightly simplified."""
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0) if node.index == index else Num(0.0)
    if isinstance(node, Neg):
        d = differentiate(node.arg, index)
        return Num(0.0) if _is_zero(d) else Neg(d)
    if isinstance(node, BinOp):
        da = differentiate(node.left, index)
        db = differentiate(node.right, index)
        if node.op == "+":
            return _add(da, db)
        if node.op == "-":
            return _sub(da, db)
        if node.op == "*":
            return _add(_mul(da, node.right), _mul(node.left, db))
        num = _sub(_mul(da, node.right), _mul(node.left, db))
        return _div(num, Pow(node.right, 2))
    if isinstance(node, Pow):
        d = differentiate(node.base, index)
        if node.exponent == 0 or _is_zero(d):
            return Num(0.0)
        if node.exponent == 1:
            return d
        inner = _mul(Num(float(node.exponent)), Pow(node.base, node.exponent - 1))
        return _mul(inner, d)
    d = differentiate(node.arg, index)
    if _is_zero(d):
        return Num(0.0)
    if node.func == "exp":
        outer: Node = Call("exp", node.arg)
    elif node.func == "sin":
        outer = Call("cos", node.arg)
    elif node.func == "cos":
        outer = Neg(Call("sin", node.arg))
    elif node.func == "sqrt":
        return _div(d, _mul(Num(2.0), Call("sqrt", node.arg)))
    else:  # tanh
        outer = _sub(Num(1.0), Pow(Call("tanh", node.arg), 2))
    return _mul(outer, d)


# --- printing ----------------------------------------------------------------

_PREC_SUM, _PREC_PROD, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return _PREC_SUM if node.op in "+-" else _PREC_PROD
    if isinstance(node, Neg):
        return _PREC_NEG
    if isinstance(node, Pow):
        return _PREC_POW
    return _PREC_ATOM


def to_string(node: Node) -> str:
    """Render in the source grammar; re-parsing yields a structurally equal tree."""
    return _render(node, power_op="^", call_fmt="{f}({a})")


def to_python_source(node: Node) -> str:
    """Render as a Python expression over x1, x2, x3 and math-function names."""
    return _render(node, power_op="**", call_fmt="{f}({a})")


def _render(node: Node, power_op: str, call_fmt: str) -> str:
    def wrap(child: Node, minimum: int) -> str:
        text = go(child)
        return f"({text})" if _prec(child) < minimum else text

    def go(n: Node) -> str:
        if isinstance(n, Num):
            return repr(n.value)
        if isinstance(n, Var):
            return f"x{n.index + 1}"
        if isinstance(n, Neg):
            inner = go(n.arg)
            if _prec(n.arg) < _PREC_NEG or isinstance(n.arg, Neg):
                inner = f"({inner})"
            return f"-{inner}"
        if isinstance(n, BinOp):
            level = _prec(n)
            left = wrap(n.left, level)
            # Parenthesize equal-precedence right children so left
            # associativity round-trips structurally.
            right = go(n.right)
            if _prec(n.right) <= level:
                right = f"({right})"
            return f"{left} {n.op} {right}"
        if isinstance(n, Pow):
            base = wrap(n.base, _PREC_ATOM)
            return f"{base}{power_op}{n.exponent}"
        return call_fmt.format(f=n.func, a=go(n.arg))

    return go(node)
