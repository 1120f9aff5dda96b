"""Prescribed data K (on the closed half-sphere) and H (on its boundary).

Fields are written as expressions in the ambient coordinates x1..x4.

Grammar (whitespace is ignored)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := ("+" | "-") unary | power
    power   := primary ("^" unary)?          # right associative
    primary := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")"
    NUMBER  := digits ["." digits] [("e"|"E") ["+"|"-"] digits]
    IDENT   := x1 | x2 | x3 | x4 | pi | exp | sin | cos | sqrt | atan | arctan | log

Parsed trees keep the literal text of numbers and explicit parentheses,
so printing a parsed tree gives back the input up to whitespace.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DomainError,
    EvaluationError,
    ExpressionNameError,
    ParseError,
    PositivityError,
    ResolutionError,
    UsageError,
)
from .geometry import as_points, build_quadrature, check_boundary_point

# ---------------------------------------------------------------------------
# AST

PREC_ADD, PREC_MUL, PREC_UNARY, PREC_POW, PREC_ATOM = 1, 2, 3, 4, 5

FUNCTIONS = ("exp", "sin", "cos", "sqrt", "atan", "arctan", "log")
VARIABLES = {"x1": 0, "x2": 1, "x3": 2, "x4": 3}


class Node:
    prec = PREC_ATOM

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True, eq=True)
class Num(Node):
    value: float
    text: Optional[str] = field(default=None, compare=False)

    @property
    def prec(self):
        return PREC_UNARY if self.value < 0 else PREC_ATOM


@dataclass(frozen=True)
class Var(Node):
    index: int


@dataclass(frozen=True)
class Const(Node):
    name: str


@dataclass(frozen=True)
class Unary(Node):
    op: str
    operand: Node
    prec = PREC_UNARY


@dataclass(frozen=True)
class Binary(Node):
    op: str
    left: Node
    right: Node

    @property
    def prec(self):
        return {"+": PREC_ADD, "-": PREC_ADD, "*": PREC_MUL, "/": PREC_MUL, "^": PREC_POW}[self.op]


@dataclass(frozen=True)
class Call(Node):
    func: str
    arg: Node


@dataclass(frozen=True)
class Group(Node):
    expr: Node


CONSTANTS = {"pi": np.pi}


# ---------------------------------------------------------------------------
# printing


def _num_text(n: Num) -> str:
    if n.text is not None:
        return n.text
    v = float(n.value)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _wrap(node: Node, min_prec: int) -> str:
    s = to_string(node)
    return f"({s})" if node.prec < min_prec else s


def to_string(node: Node) -> str:
    if isinstance(node, Num):
        return _num_text(node)
    if isinstance(node, Var):
        return f"x{node.index + 1}"
    if isinstance(node, Const):
        return node.name
    if isinstance(node, Group):
        return f"({to_string(node.expr)})"
    if isinstance(node, Call):
        return f"{node.func}({to_string(node.arg)})"
    if isinstance(node, Unary):
        return node.op + _wrap(node.operand, PREC_UNARY)
    if isinstance(node, Binary):
        if node.op == "^":
            return f"{_wrap(node.left, PREC_ATOM)}^{_wrap(node.right, PREC_UNARY)}"
        lp = node.prec
        rp = node.prec + 1
        return f"{_wrap(node.left, lp)} {node.op} {_wrap(node.right, rp)}"
    raise TypeError(node)


# ---------------------------------------------------------------------------
# tokenizer and parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<id>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    pos = 0
    toks = []
    n = len(text)
    while pos < n:
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            off = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {text[off]!r}", len(text[:off].encode()), text)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append((kind, m.group(kind), len(text[:start].encode())))
        pos = m.end()
    toks.append(("end", "", len(text.encode())))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, val):
        t = self.take()
        if t[1] != val:
            what = "end of input" if t[0] == "end" else repr(t[1])
            raise ParseError(f"expected {val!r}, found {what}", t[2], self.text)
        return t

    def parse(self) -> Node:
        node = self.expr()
        t = self.peek()
        if t[0] != "end":
            raise ParseError(f"unexpected token {t[1]!r}", t[2], self.text)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        t = self.peek()
        if t[0] == "op" and t[1] in ("+", "-"):
            self.take()
            return Unary(t[1], self.unary())
        return self.power()

    def power(self):
        base = self.primary()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            return Binary("^", base, self.unary())
        return base

    def primary(self):
        t = self.take()
        kind, val, off = t
        if kind == "num":
            return Num(float(val), val)
        if kind == "id":
            if val in VARIABLES:
                return Var(VARIABLES[val])
            if val in CONSTANTS:
                return Const(val)
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            raise ExpressionNameError(val, off)
        if val == "(":
            inner = self.expr()
            self.expect(")")
            return Group(inner)
        what = "end of input" if kind == "end" else repr(val)
        raise ParseError(f"unexpected {what}", off, self.text)


def parse_expression(text: str) -> Node:
    """Parse ``text`` into an AST.  Raises ParseError or ExpressionNameError."""
    if not isinstance(text, str) or text.strip() == "":
        raise ParseError("empty expression", 0, text)
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# evaluation


def evaluate(node: Node, X) -> np.ndarray:
    """Evaluate on an (m, 4) array of ambient points; returns shape (m,)."""
    X = as_points(X)
    return np.broadcast_to(np.asarray(_ev(node, X), dtype=float), (X.shape[0],)).copy()


def _ev(node, X):
    if isinstance(node, Num):
        return np.float64(node.value)
    if isinstance(node, Var):
        return X[:, node.index]
    if isinstance(node, Const):
        return np.float64(CONSTANTS[node.name])
    if isinstance(node, Group):
        return _ev(node.expr, X)
    if isinstance(node, Unary):
        v = _ev(node.operand, X)
        return -v if node.op == "-" else v
    if isinstance(node, Call):
        a = _ev(node.arg, X)
        f = node.func
        if f == "exp":
            return np.exp(a)
        if f == "sin":
            return np.sin(a)
        if f == "cos":
            return np.cos(a)
        if f in ("atan", "arctan"):
            return np.arctan(a)
        if f == "sqrt":
            if np.any(np.asarray(a) < 0):
                raise EvaluationError(f"sqrt of a negative number in {to_string(node)}")
            return np.sqrt(a)
        if f == "log":
            if np.any(np.asarray(a) <= 0):
                raise EvaluationError(f"log of a non-positive number in {to_string(node)}")
            return np.log(a)
        raise EvaluationError(f"unknown function {f}")
    if isinstance(node, Binary):
        a = _ev(node.left, X)
        b = _ev(node.right, X)
        op = node.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if np.any(np.asarray(b) == 0):
                raise EvaluationError(f"division by zero in {to_string(node)}")
            return a / b
        if op == "^":
            a_arr = np.asarray(a)
            b_arr = np.asarray(b)
            integral = np.all(b_arr == np.round(b_arr))
            if not integral and np.any(a_arr < 0):
                raise EvaluationError(f"negative base with fractional exponent in {to_string(node)}")
            if np.any((a_arr == 0) & (b_arr < 0)):
                raise EvaluationError(f"zero raised to a negative power in {to_string(node)}")
            return np.power(a_arr.astype(float), b_arr)
    raise TypeError(node)


# ---------------------------------------------------------------------------
# symbolic differentiation with light constant folding

ZERO = Num(0.0)
ONE = Num(1.0)


def _is_num(n, v=None):
    if isinstance(n, Group):
        return _is_num(n.expr, v)
    return isinstance(n, Num) and (v is None or n.value == v)


def _numval(n):
    return n.expr.value if isinstance(n, Group) else n.value


def s_add(a, b):
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(_numval(a) + _numval(b))
    return Binary("+", a, b)


def s_sub(a, b):
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return s_neg(b)
    if _is_num(a) and _is_num(b):
        return Num(_numval(a) - _numval(b))
    return Binary("-", a, b)


def s_neg(a):
    if _is_num(a):
        return Num(-_numval(a))
    if isinstance(a, Unary) and a.op == "-":
        return a.operand
    return Unary("-", a)


def s_mul(a, b):
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return ZERO
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(_numval(a) * _numval(b))
    return Binary("*", a, b)


def s_div(a, b):
    if _is_num(a, 0.0):
        return ZERO
    if _is_num(b, 1.0):
        return a
    return Binary("/", a, b)


def s_pow(a, b):
    if _is_num(b, 0.0):
        return ONE
    if _is_num(b, 1.0):
        return a
    return Binary("^", a, b)


def s_call(f, a):
    return Call(f, a)


BOUNDARY_VARS = (0, 1, 2)


def depends_on_variables(node: Node, indices=None) -> bool:
    """True if the expression mentions a variable (restricted to ``indices`` when given)."""
    if isinstance(node, Var):
        return indices is None or node.index in indices
    if isinstance(node, (Num, Const)):
        return False
    if isinstance(node, Group):
        return depends_on_variables(node.expr, indices)
    if isinstance(node, Unary):
        return depends_on_variables(node.operand, indices)
    if isinstance(node, Call):
        return depends_on_variables(node.arg, indices)
    return depends_on_variables(node.left, indices) or depends_on_variables(node.right, indices)


def differentiate(node: Node, i: int) -> Node:
    """d node / d x_{i+1} as a new AST."""
    if isinstance(node, (Num, Const)):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.index == i else ZERO
    if isinstance(node, Group):
        return differentiate(node.expr, i)
    if isinstance(node, Unary):
        d = differentiate(node.operand, i)
        return s_neg(d) if node.op == "-" else d
    if isinstance(node, Call):
        u = node.arg
        du = differentiate(u, i)
        if _is_num(du, 0.0):
            return ZERO
        f = node.func
        if f == "exp":
            outer = node
        elif f == "sin":
            outer = s_call("cos", u)
        elif f == "cos":
            outer = s_neg(s_call("sin", u))
        elif f == "sqrt":
            outer = s_div(ONE, s_mul(Num(2.0), node))
        elif f in ("atan", "arctan"):
            outer = s_div(ONE, s_add(ONE, s_pow(u, Num(2.0))))
        elif f == "log":
            outer = s_div(ONE, u)
        else:
            raise TypeError(f)
        return s_mul(outer, du)
    if isinstance(node, Binary):
        a, b = node.left, node.right
        da, db = differentiate(a, i), differentiate(b, i)
        op = node.op
        if op == "+":
            return s_add(da, db)
        if op == "-":
            return s_sub(da, db)
        if op == "*":
            return s_add(s_mul(da, b), s_mul(a, db))
        if op == "/":
            return s_div(s_sub(s_mul(da, b), s_mul(a, db)), s_pow(b, Num(2.0)))
        if op == "^":
            if not depends_on_variables(b):
                if _is_num(da, 0.0):
                    return ZERO
                if _is_num(b):
                    expo = Num(_numval(b) - 1.0)
                else:
                    expo = s_sub(b, ONE)
                return s_mul(s_mul(b, s_pow(a, expo)), da)
            # general case a^b (b(x) ln a)' ; requires a > 0
            t1 = s_mul(db, s_call("log", a))
            t2 = s_div(s_mul(b, da), a)
            return s_mul(node, s_add(t1, t2))
    raise TypeError(node)


# ---------------------------------------------------------------------------
# field specifications

DOMAINS = ("half-sphere", "boundary")


@dataclass
class ExpressionBackend:
    text: str
    ast: Node
    _grad: Optional[list] = field(default=None, repr=False)
    _hess: Optional[list] = field(default=None, repr=False)

    def grad_asts(self):
        if self._grad is None:
            self._grad = [differentiate(self.ast, i) for i in range(4)]
        return self._grad

    def hess_asts(self):
        if self._hess is None:
            g = self.grad_asts()
            self._hess = [[differentiate(g[i], j) for j in range(4)] for i in range(4)]
        return self._hess


class GridBackend:
    """Samples on a node set, read through local quadratic least squares.

    For a query point the ``k`` nearest nodes are expressed in an
    orthonormal tangent frame at the point and a full quadratic is fitted.
    """

    def __init__(self, nodes, values, domain: str, k: Optional[int] = None):
        self.nodes = as_points(nodes)
        self.values = np.asarray(values, dtype=float).ravel()
        if self.nodes.shape[0] != self.values.shape[0]:
            raise UsageError("grid nodes and values differ in length")
        self.domain = domain
        self.tdim = 3 if domain == "half-sphere" else 2
        ncoef = 1 + self.tdim + self.tdim * (self.tdim + 1) // 2
        self.k = k or 2 * ncoef
        self.tree = cKDTree(self.nodes)

    def _frame(self, x):
        if self.tdim == 2:
            q = check_boundary_point(np.r_[x[:3], 0.0] / np.linalg.norm(x[:3]))
            from .geometry import tangent_basis

            return tangent_basis(q)
        # tangent space of S^3 at x: complete x to an orthonormal basis
        M = np.linalg.qr(np.column_stack([x, np.eye(4)]))[0]
        B = M[:, 1:4].T
        return B

    def _fit(self, x):
        _, idx = self.tree.query(x, k=self.k)
        P = self.nodes[idx]
        B = self._frame(x)
        T = (P - x) @ B.T
        d = self.tdim
        cols = [np.ones(len(idx))]
        cols += [T[:, a] for a in range(d)]
        pairs = [(a, b) for a in range(d) for b in range(a, d)]
        cols += [T[:, a] * T[:, b] * (0.5 if a == b else 1.0) for a, b in pairs]
        A = np.column_stack(cols)
        coef, *_ = np.linalg.lstsq(A, self.values[idx], rcond=None)
        g = coef[1 : 1 + d]
        Hm = np.zeros((d, d))
        for c, (a, b) in zip(coef[1 + d :], pairs):
            Hm[a, b] = Hm[b, a] = c
        return coef[0], g, Hm, B, T

    def value(self, X):
        return np.array([self._fit(x)[0] for x in as_points(X)])

    def gradient(self, X):
        out = []
        for x in as_points(X):
            _, g, _, B, _ = self._fit(x)
            out.append(g @ B)
        return np.array(out)

    def hessian(self, X):
        out = []
        for x in as_points(X):
            _, _, Hm, B, _ = self._fit(x)
            out.append(B.T @ Hm @ B)
        return np.array(out)

    def normal_spread(self, x):
        _, idx = self.tree.query(x, k=self.k)
        return self.nodes[idx][:, 3]


class FieldSpec:
    """A scalar field on the half-sphere (K) or on its boundary (H).

    Boundary fields ignore any x4 dependence of their expression: they are
    evaluated with x4 = 0 and their gradient has no e4 component.
    """

    def __init__(self, domain: str, backend, positive: bool = False, name: str = ""):
        if domain not in DOMAINS:
            raise UsageError(f"domain must be one of {DOMAINS}")
        self.domain = domain
        self.backend = backend
        self.name = name
        self.exact_second_derivatives = isinstance(backend, ExpressionBackend)
        if positive:
            self.check_positive()

    # constructors -------------------------------------------------------
    @classmethod
    def from_expression(cls, text: str, domain: str = "half-sphere", positive: bool = False, name: str = ""):
        ast = parse_expression(text)
        return cls(domain, ExpressionBackend(text, ast), positive=positive, name=name)

    @classmethod
    def constant(cls, c: float, domain: str = "half-sphere", positive: bool = False):
        return cls.from_expression(repr(float(c)), domain, positive=positive)

    @classmethod
    def from_samples(cls, nodes, values, domain: str = "half-sphere", positive: bool = False, k=None):
        return cls(domain, GridBackend(nodes, values, domain, k), positive=positive)

    # properties ---------------------------------------------------------
    @property
    def text(self) -> Optional[str]:
        return self.backend.text if isinstance(self.backend, ExpressionBackend) else None

    @property
    def is_constant(self) -> bool:
        if isinstance(self.backend, ExpressionBackend):
            if not depends_on_variables(self.backend.ast):
                return True
            if self.domain == "boundary":
                return not depends_on_variables(self.backend.ast, BOUNDARY_VARS)
            return False
        v = self.backend.values
        return bool(np.ptp(v) == 0)

    def _prep(self, X):
        X = as_points(X)
        if self.domain == "boundary":
            X = X.copy()
            X[:, 3] = 0.0
        return X

    # evaluation ---------------------------------------------------------
    def value(self, X) -> np.ndarray:
        X = self._prep(X)
        if isinstance(self.backend, ExpressionBackend):
            return evaluate(self.backend.ast, X)
        return self.backend.value(X)

    __call__ = value

    def gradient(self, X) -> np.ndarray:
        """Ambient gradient in R^4 (not projected), shape (m, 4)."""
        X = self._prep(X)
        if isinstance(self.backend, ExpressionBackend):
            G = np.column_stack([evaluate(g, X) for g in self.backend.grad_asts()])
        else:
            G = self.backend.gradient(X)
        if self.domain == "boundary":
            G[:, 3] = 0.0
        return G

    def hessian(self, X) -> np.ndarray:
        """Ambient Hessian, shape (m, 4, 4)."""
        X = self._prep(X)
        if isinstance(self.backend, ExpressionBackend):
            Hs = self.backend.hess_asts()
            out = np.empty((X.shape[0], 4, 4))
            for i in range(4):
                for j in range(4):
                    out[:, i, j] = evaluate(Hs[i][j], X)
        else:
            out = self.backend.hessian(X)
        if self.domain == "boundary":
            out[:, 3, :] = 0.0
            out[:, :, 3] = 0.0
        return out

    def tangential_gradient(self, X) -> np.ndarray:
        """Gradient along S^3 (boundary fields: along the boundary 2-sphere)."""
        X = as_points(X)
        G = self.gradient(X)
        G = G - np.sum(G * X, axis=1, keepdims=True) * X
        if self.domain == "boundary":
            G[:, 3] = 0.0
        return G

    def check_positive(self, resolution: int = 12):
        """Reject fields that are not strictly positive on a dense sample."""
        if self.domain == "half-sphere":
            X = np.vstack(
                [build_quadrature("half-sphere", resolution).nodes, build_quadrature("boundary-sphere", 2 * resolution).nodes]
            )
        else:
            X = build_quadrature("boundary-sphere", 2 * resolution).nodes
        v = self.value(X)
        i = int(np.argmin(v))
        if v[i] <= 0:
            raise PositivityError(f"field is not positive: value {v[i]:.6g} at {X[i]}", witness=X[i], value=float(v[i]))
        return float(v[i])


def normal_derivative(K: FieldSpec, q) -> float:
    """dK/dnu at a boundary point, nu the outward normal (-e4)."""
    q = check_boundary_point(q)
    if isinstance(K.backend, GridBackend):
        x4 = K.backend.normal_spread(q)
        if np.sum(x4 > 1e-8) < K.backend.k // 2 or np.ptp(x4) < 1e-6:
            raise ResolutionError("not enough near-boundary samples for a one-sided normal derivative")
    return float(-K.gradient(q)[0, 3])


def boundary_gradient(f: FieldSpec, q) -> np.ndarray:
    """Gradient along the boundary 2-sphere at q, as an ambient 4-vector."""
    q = check_boundary_point(q)
    g = f.gradient(q)[0].copy()
    g[3] = 0.0
    g -= np.dot(g, q) * q
    return g


def as_field(f: Union[FieldSpec, str, float, int], domain: str) -> FieldSpec:
    """Coerce an expression string or a number to a FieldSpec."""
    if isinstance(f, FieldSpec):
        return f
    if isinstance(f, (int, float)):
        return FieldSpec.constant(float(f), domain)
    if isinstance(f, str):
        return FieldSpec.from_expression(f, domain)
    raise UsageError(f"cannot build a field from {type(f).__name__}")


def value_at(f: FieldSpec, q) -> float:
    return float(f.value(q)[0])


def require_positive_at(K: FieldSpec, q) -> float:
    k = value_at(K, q)
    if not k > 0:
        raise DomainError(f"K must be positive, got {k}")
    return k
