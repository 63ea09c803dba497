"""A small infix calculator language for coefficient functions of (x, t).

Grammar (highest binding first)::

    primary := NUMBER | x | t | FUNC '(' expr ')' | 'pow' '(' expr ',' expr ')'
             | '(' expr ')'
    unary   := ('-' | '+') unary | primary
    power   := unary [('^' | '**') power]          # right associative
    term    := power (('*' | '/') power)*
    expr    := term (('+' | '-') term)*

Unary minus binds tighter than exponentiation, so ``-x^2`` is ``(-x)^2``.
Write ``-(x^2)`` for the other reading.

Trees are immutable and every operation (``diff``, ``fold``, ``evaluate``)
returns new values; sharing trees between threads is safe.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DSLSyntaxError, EvalDomainError, UnknownIdentifier

VARIABLES = ("x", "t")
UNARY_FUNCS = ("sin", "cos", "tan", "sinh", "cosh", "tanh", "sech", "exp", "log", "sqrt")
FUNCS = UNARY_FUNCS + ("pow",)


class Node:
    __slots__ = ()

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True)
class Const(Node):
    value: float


@dataclass(frozen=True)
class Var(Node):
    name: str


@dataclass(frozen=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True)
class BinOp(Node):
    left: Node
    right: Node


class Add(BinOp):
    pass


class Sub(BinOp):
    pass


class Mul(BinOp):
    pass


class Div(BinOp):
    pass


class Pow(BinOp):
    pass


@dataclass(frozen=True)
class Call(Node):
    func: str
    args: tuple


ExprAst = Node
Number = Union[float, np.ndarray]

ZERO = Const(0.0)
ONE = Const(1.0)

# ---------------------------------------------------------------------------
# tokenizer / parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


def _tokenize(src):
    tokens = []
    pos = 0
    raw = src.encode("utf-8")
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            if src[pos:].strip() == "":
                break
            bad = pos + (len(src[pos:]) - len(src[pos:].lstrip()))
            raise DSLSyntaxError(f"unexpected character {src[bad]!r}", _byte_offset(src, bad))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), _byte_offset(src, start)))
        pos = m.end()
    tokens.append(("end", "", len(raw)))
    return tokens


def _byte_offset(src, char_index):
    return len(src[:char_index].encode("utf-8"))


class _Parser:
    def __init__(self, src):
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, off = self.take()
        if text != value or kind != "op":
            found = text if kind != "end" else "end of input"
            raise DSLSyntaxError(f"expected {value!r}, found {found!r}", off)

    def parse(self):
        node = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise DSLSyntaxError(f"unexpected token {text!r}", off)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self):
        node = self.power()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.power()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def power(self):
        base = self.unary()
        if self.peek()[0] == "op" and self.peek()[1] in ("^", "**"):
            self.take()
            return Pow(base, self.power())
        return base

    def unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and text == "+":
            self.take()
            return self.unary()
        return self.primary()

    def primary(self):
        kind, text, off = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "name":
            if text in VARIABLES:
                return Var(text)
            if text not in FUNCS:
                raise UnknownIdentifier(text, off)
            self.expect("(")
            args = [self.expr()]
            while self.peek()[0] == "op" and self.peek()[1] == ",":
                self.take()
                args.append(self.expr())
            self.expect(")")
            want = 2 if text == "pow" else 1
            if len(args) != want:
                raise DSLSyntaxError(f"{text} takes {want} argument(s), got {len(args)}", off)
            if text == "pow":
                return Pow(args[0], args[1])
            return Call(text, tuple(args))
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = text if kind != "end" else "end of input"
        raise DSLSyntaxError(f"unexpected {found!r}", off)


def parse_expr(src: str) -> Node:
    """Parse ``src`` into an expression tree.

    Raises
    ------
    DSLSyntaxError
        Malformed input; ``offset`` is a byte offset into the UTF-8 text.
    UnknownIdentifier
        A name other than ``x``, ``t`` or one of the supported functions.
    """
    if not isinstance(src, str) or not src.strip():
        raise DSLSyntaxError("empty expression", 0)
    return _Parser(src).parse()


# ---------------------------------------------------------------------------
# evaluation

def _first_bad(mask, x, t):
    mask = np.broadcast_to(mask, np.broadcast(x, t, mask).shape)
    idx = np.unravel_index(int(np.argmax(mask)), mask.shape) if mask.ndim else ()
    xb = np.broadcast_to(x, mask.shape)[idx]
    tb = np.broadcast_to(t, mask.shape)[idx]
    return (float(xb), float(tb))


def evaluate(node: Node, x: Number, t: Number):
    """Evaluate ``node`` in IEEE double precision; ``x`` and ``t`` broadcast."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    with np.errstate(all="ignore"):
        out = _ev(node, x, t)
    out = np.asarray(out, dtype=float)
    bad = ~np.isfinite(out)
    if np.any(bad):
        raise EvalDomainError(f"non-finite value of {to_text(node)}", _first_bad(bad, x, t))
    shape = np.broadcast(x, t).shape
    out = np.broadcast_to(out, shape)
    return float(out) if out.ndim == 0 else np.array(out)


def _ev(node, x, t):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return x if node.name == "x" else t
    if isinstance(node, Neg):
        return -_ev(node.arg, x, t)
    if isinstance(node, BinOp):
        a = _ev(node.left, x, t)
        b = _ev(node.right, x, t)
        if isinstance(node, Add):
            return a + b
        if isinstance(node, Sub):
            return a - b
        if isinstance(node, Mul):
            return a * b
        if isinstance(node, Div):
            if np.any(np.asarray(b) == 0.0):
                raise EvalDomainError("division by zero", _first_bad(np.asarray(b) == 0.0, x, t))
            return a / b
        if isinstance(node, Pow):
            a_arr, b_arr = np.asarray(a), np.asarray(b)
            bad = (a_arr < 0) & (np.floor(b_arr) != b_arr)
            bad |= (a_arr == 0) & (b_arr < 0)
            if np.any(bad):
                raise EvalDomainError("pow of a negative base", _first_bad(bad, x, t))
            return np.power(a, b)
    if isinstance(node, Call):
        v = _ev(node.args[0], x, t)
        f = node.func
        if f == "log":
            bad = np.asarray(v) <= 0
            if np.any(bad):
                raise EvalDomainError("log of a non-positive value", _first_bad(bad, x, t))
            return np.log(v)
        if f == "sqrt":
            bad = np.asarray(v) < 0
            if np.any(bad):
                raise EvalDomainError("sqrt of a negative value", _first_bad(bad, x, t))
            return np.sqrt(v)
        if f == "sech":
            return 1.0 / np.cosh(v)
        return getattr(np, f)(v)
    raise TypeError(f"not an expression node: {node!r}")


# ---------------------------------------------------------------------------
# constant folding

def _is_const(node, value=None):
    return isinstance(node, Const) and (value is None or node.value == value)


def fold(node: Node) -> Node:
    """Evaluate constant subtrees and drop additive/multiplicative identities."""
    if isinstance(node, (Const, Var)):
        return node
    if isinstance(node, Neg):
        a = fold(node.arg)
        if isinstance(a, Const):
            return Const(-a.value)
        if isinstance(a, Neg):
            return a.arg
        return Neg(a)
    if isinstance(node, Call):
        args = tuple(fold(a) for a in node.args)
        out = Call(node.func, args)
        if all(isinstance(a, Const) for a in args):
            return _try_const(out)
        return out
    left, right = fold(node.left), fold(node.right)
    out = type(node)(left, right)
    if isinstance(left, Const) and isinstance(right, Const):
        return _try_const(out)
    if isinstance(node, Add):
        if _is_const(left, 0.0):
            return right
        if _is_const(right, 0.0):
            return left
        if isinstance(right, Neg):
            return Sub(left, right.arg)
    elif isinstance(node, Sub):
        if _is_const(right, 0.0):
            return left
        if _is_const(left, 0.0):
            return fold(Neg(right))
        if isinstance(right, Neg):
            return Add(left, right.arg)
    elif isinstance(node, Mul):
        if _is_const(left, 0.0) or _is_const(right, 0.0):
            return ZERO
        if _is_const(left, 1.0):
            return right
        if _is_const(right, 1.0):
            return left
        if _is_const(left, -1.0):
            return fold(Neg(right))
        if _is_const(right, -1.0):
            return fold(Neg(left))
    elif isinstance(node, Div):
        if _is_const(left, 0.0):
            return ZERO
        if _is_const(right, 1.0):
            return left
    elif isinstance(node, Pow):
        if _is_const(right, 1.0):
            return left
        if _is_const(right, 0.0):
            return ONE
    return out


def _try_const(node):
    try:
        with np.errstate(all="ignore"):
            value = float(_ev(node, np.float64(0.0), np.float64(0.0)))
    except EvalDomainError:
        return node
    if not math.isfinite(value):
        return node
    return Const(value)


# ---------------------------------------------------------------------------
# symbolic differentiation

def diff(node: Node, var: str) -> Node:
    """Exact partial derivative of ``node`` with respect to ``var``, folded."""
    if var not in VARIABLES:
        raise ValueError(f"can only differentiate with respect to x or t, not {var!r}")
    return fold(_d(node, var))


def _d(node, v):
    if isinstance(node, Const):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.name == v else ZERO
    if isinstance(node, Neg):
        return Neg(_d(node.arg, v))
    if isinstance(node, Add):
        return Add(_d(node.left, v), _d(node.right, v))
    if isinstance(node, Sub):
        return Sub(_d(node.left, v), _d(node.right, v))
    if isinstance(node, Mul):
        f, g = node.left, node.right
        return Add(Mul(_d(f, v), g), Mul(f, _d(g, v)))
    if isinstance(node, Div):
        f, g = node.left, node.right
        return Div(Sub(Mul(_d(f, v), g), Mul(f, _d(g, v))), Pow(g, Const(2.0)))
    if isinstance(node, Pow):
        f, g = node.left, node.right
        dg = fold(_d(g, v))
        if _is_const(dg, 0.0):
            return Mul(Mul(g, Pow(f, Sub(g, ONE))), _d(f, v))
        # f^g * (g' log f + g f'/f)
        return Mul(node, Add(Mul(dg, Call("log", (f,))), Div(Mul(g, _d(f, v)), f)))
    if isinstance(node, Call):
        u = node.args[0]
        du = _d(u, v)
        fn = node.func
        if fn == "sin":
            outer = Call("cos", (u,))
        elif fn == "cos":
            outer = Neg(Call("sin", (u,)))
        elif fn == "tan":
            outer = Add(ONE, Pow(Call("tan", (u,)), Const(2.0)))
        elif fn == "sinh":
            outer = Call("cosh", (u,))
        elif fn == "cosh":
            outer = Call("sinh", (u,))
        elif fn == "tanh":
            outer = Pow(Call("sech", (u,)), Const(2.0))
        elif fn == "sech":
            outer = Neg(Mul(Call("sech", (u,)), Call("tanh", (u,))))
        elif fn == "exp":
            outer = node
        elif fn == "log":
            outer = Div(ONE, u)
        elif fn == "sqrt":
            outer = Div(ONE, Mul(Const(2.0), node))
        else:
            raise TypeError(f"no derivative rule for {fn}")
        return Mul(outer, du)
    raise TypeError(f"not an expression node: {node!r}")


# ---------------------------------------------------------------------------
# printing

def _prec(node):
    if isinstance(node, (Add, Sub)):
        return 1
    if isinstance(node, (Mul, Div)):
        return 2
    if isinstance(node, Pow):
        return 3
    if isinstance(node, Neg) or (isinstance(node, Const) and (node.value < 0 or math.copysign(1, node.value) < 0)):
        return 4
    return 5


_SYMBOL = {Add: "+", Sub: "-", Mul: "*", Div: "/", Pow: "^"}


def to_text(node: Node) -> str:
    """Render ``node`` in the DSL; ``parse_expr(to_text(n))`` evaluates like ``n``."""
    if isinstance(node, Const):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        inner = to_text(node.arg)
        if _prec(node.arg) < 4:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_text(a) for a in node.args)})"
    p = _prec(node)
    lhs, rhs = to_text(node.left), to_text(node.right)
    lp, rp = _prec(node.left), _prec(node.right)
    if isinstance(node, Pow):
        if lp <= p:
            lhs = f"({lhs})"
        if rp < p:
            rhs = f"({rhs})"
    else:
        if lp < p:
            lhs = f"({lhs})"
        if rp < p or (rp == p and isinstance(node, (Sub, Div))):
            rhs = f"({rhs})"
    return f"{lhs} {_SYMBOL[type(node)]} {rhs}"


def is_constant(node: Node) -> bool:
    """True when the tree mentions neither ``x`` nor ``t``."""
    if isinstance(node, Var):
        return False
    if isinstance(node, Const):
        return True
    if isinstance(node, Neg):
        return is_constant(node.arg)
    if isinstance(node, Call):
        return all(is_constant(a) for a in node.args)
    return is_constant(node.left) and is_constant(node.right)
