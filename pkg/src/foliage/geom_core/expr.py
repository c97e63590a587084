"""Analytic scalar expressions in the transverse coordinates y1..yq.

Expressions are immutable trees. The module-level constructors (`add`, `mul`,
...) fold constants and drop neutral elements, so derivatives and compositions
stay small enough to evaluate on grids.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence, Union

import numpy as np

from ..errors import DivisionByZero, DomainError, UnboundCoordinate

Number = Union[int, float]

FUNCTIONS = ("sin", "cos", "exp", "sqrt")


class Expression:
    """Base node. Subclasses are frozen dataclasses."""

    __slots__ = ()

    # arithmetic sugar, all routed through the simplifying constructors
    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n):
        if not isinstance(n, int):
            raise TypeError("only integer exponents are supported")
        return power(self, n)

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True, repr=False)
class Const(Expression):
    value: float

    def __repr__(self):
        return f"Const({self.value!r})"


@dataclass(frozen=True, repr=False)
class Var(Expression):
    index: int  # 0-based; printed as y{index+1}

    def __repr__(self):
        return f"Var({self.index})"


@dataclass(frozen=True, repr=False)
class Add(Expression):
    left: Expression
    right: Expression

    def __repr__(self):
        return f"Add({self.left!r}, {self.right!r})"


@dataclass(frozen=True, repr=False)
class Sub(Expression):
    left: Expression
    right: Expression

    def __repr__(self):
        return f"Sub({self.left!r}, {self.right!r})"


@dataclass(frozen=True, repr=False)
class Mul(Expression):
    left: Expression
    right: Expression

    def __repr__(self):
        return f"Mul({self.left!r}, {self.right!r})"


@dataclass(frozen=True, repr=False)
class Div(Expression):
    left: Expression
    right: Expression

    def __repr__(self):
        return f"Div({self.left!r}, {self.right!r})"


@dataclass(frozen=True, repr=False)
class Neg(Expression):
    arg: Expression

    def __repr__(self):
        return f"Neg({self.arg!r})"


@dataclass(frozen=True, repr=False)
class Pow(Expression):
    base: Expression
    exponent: int

    def __repr__(self):
        return f"Pow({self.base!r}, {self.exponent})"


@dataclass(frozen=True, repr=False)
class Func(Expression):
    name: str
    arg: Expression

    def __repr__(self):
        return f"Func({self.name!r}, {self.arg!r})"


ZERO = Const(0.0)
ONE = Const(1.0)


def as_expr(x) -> Expression:
    if isinstance(x, Expression):
        return x
    if isinstance(x, (int, float, np.floating, np.integer)):
        return Const(float(x))
    raise TypeError(f"cannot convert {type(x).__name__} to Expression")


def const(value: Number) -> Const:
    return Const(float(value))


def var(index: int) -> Var:
    if index < 0:
        raise ValueError("coordinate index must be non-negative")
    return Var(index)


def coords(q: int) -> tuple[Var, ...]:
    """The coordinate functions y1..yq."""
    return tuple(Var(k) for k in range(q))


def _is_const(e: Expression, value: float | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


# -- simplifying constructors -------------------------------------------------

def add(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if isinstance(a, Const):
        a, b = b, a
    if isinstance(b, Const) and isinstance(a, Add) and isinstance(a.right, Const):
        # (x + c1) + c2 -> x + (c1 + c2); keeps translation words flat
        return add(a.left, Const(a.right.value + b.value))
    if isinstance(b, Neg):
        return sub(a, b.arg)
    return Add(a, b)


def sub(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    if isinstance(b, Const):
        return add(a, Const(-b.value))
    if a == b:
        return ZERO
    if isinstance(b, Neg):
        return add(a, b.arg)
    return Sub(a, b)


def neg(a: Expression) -> Expression:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    if isinstance(a, Mul) and isinstance(a.left, Const):
        return mul(Const(-a.left.value), a.right)
    return Neg(a)


def mul(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a, -1.0):
        return neg(b)
    if _is_const(b, -1.0):
        return neg(a)
    if isinstance(b, Const):
        a, b = b, a
    if isinstance(a, Const) and isinstance(b, Mul) and isinstance(b.left, Const):
        return mul(Const(a.value * b.left.value), b.right)
    if isinstance(a, Neg) and isinstance(b, Neg):
        return mul(a.arg, b.arg)
    if isinstance(a, Neg):
        return neg(mul(a.arg, b))
    if isinstance(b, Neg):
        return neg(mul(a, b.arg))
    return Mul(a, b)


def div(a: Expression, b: Expression) -> Expression:
    if _is_const(b, 1.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return ZERO
    if _is_const(b, -1.0):
        return neg(a)
    return Div(a, b)


def power(base: Expression, n: int) -> Expression:
    n = int(n)
    if n == 0:
        return ONE
    if n == 1:
        return base
    if isinstance(base, Const):
        if base.value == 0.0 and n < 0:
            return Pow(base, n)
        return Const(base.value ** n)
    if isinstance(base, Pow):
        return power(base.base, base.exponent * n)
    return Pow(base, n)


_FOLD = {"sin": math.sin, "cos": math.cos, "exp": math.exp}


def func(name: str, arg: Expression) -> Expression:
    if name not in FUNCTIONS:
        raise ValueError(f"unknown function {name!r}")
    if isinstance(arg, Const):
        if name in _FOLD:
            return Const(_FOLD[name](arg.value))
        if name == "sqrt" and arg.value >= 0.0:
            return Const(math.sqrt(arg.value))
    return Func(name, arg)


def sin(e) -> Expression:
    return func("sin", as_expr(e))


def cos(e) -> Expression:
    return func("cos", as_expr(e))


def exp(e) -> Expression:
    return func("exp", as_expr(e))


def sqrt(e) -> Expression:
    return func("sqrt", as_expr(e))


# -- structural queries ------------------------------------------------------

def free_coords(e: Expression) -> frozenset[int]:
    if isinstance(e, Var):
        return frozenset({e.index})
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, (Neg, Func)):
        return free_coords(e.arg)
    if isinstance(e, Pow):
        return free_coords(e.base)
    return free_coords(e.left) | free_coords(e.right)


def is_constant(e: Expression) -> bool:
    return isinstance(e, Const)


# -- evaluation --------------------------------------------------------------

def eval_expr(e: Expression, y: Sequence[float]) -> float:
    """Evaluate `e` at the point `y` with exact float arithmetic.

    Raises DivisionByZero, DomainError (sqrt of a negative number) or
    UnboundCoordinate when `e` uses a coordinate beyond len(y).
    """
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        if e.index >= len(y):
            raise UnboundCoordinate(f"y{e.index + 1} is not bound in a {len(y)}-dimensional point")
        return float(y[e.index])
    if isinstance(e, Add):
        return eval_expr(e.left, y) + eval_expr(e.right, y)
    if isinstance(e, Sub):
        return eval_expr(e.left, y) - eval_expr(e.right, y)
    if isinstance(e, Mul):
        return eval_expr(e.left, y) * eval_expr(e.right, y)
    if isinstance(e, Div):
        den = eval_expr(e.right, y)
        if den == 0.0:
            raise DivisionByZero(f"division by zero in {to_string(e)}")
        return eval_expr(e.left, y) / den
    if isinstance(e, Neg):
        return -eval_expr(e.arg, y)
    if isinstance(e, Pow):
        b = eval_expr(e.base, y)
        if b == 0.0 and e.exponent < 0:
            raise DivisionByZero(f"zero to a negative power in {to_string(e)}")
        return b ** e.exponent
    if isinstance(e, Func):
        x = eval_expr(e.arg, y)
        if e.name == "sqrt":
            if x < 0.0:
                raise DomainError(f"sqrt of negative value {x!r}")
            return math.sqrt(x)
        return _FOLD[e.name](x)
    raise TypeError(f"not an expression: {e!r}")


_PY_FUNCS = {"sin": "_np.sin", "cos": "_np.cos", "exp": "_np.exp", "sqrt": "_np.sqrt"}


def _source(e: Expression) -> str:
    if isinstance(e, Const):
        return f"({e.value!r})"
    if isinstance(e, Var):
        return f"y[{e.index}]"
    if isinstance(e, Add):
        return f"({_source(e.left)} + {_source(e.right)})"
    if isinstance(e, Sub):
        return f"({_source(e.left)} - {_source(e.right)})"
    if isinstance(e, Mul):
        return f"({_source(e.left)} * {_source(e.right)})"
    if isinstance(e, Div):
        return f"({_source(e.left)} / {_source(e.right)})"
    if isinstance(e, Neg):
        return f"(-{_source(e.arg)})"
    if isinstance(e, Pow):
        if e.exponent < 0:
            return f"(1.0 / {_source(e.base)} ** {-e.exponent})"
        return f"({_source(e.base)} ** {e.exponent})"
    if isinstance(e, Func):
        return f"{_PY_FUNCS[e.name]}({_source(e.arg)})"
    raise TypeError(f"not an expression: {e!r}")


@lru_cache(maxsize=4096)
def compile_exprs(exprs: tuple[Expression, ...]) -> Callable:
    """Compile a tuple of expressions into one vectorised function.

    The returned function takes `y` indexable by coordinate (a point or a
    (q, N) array) and returns a list with one value/array per expression.
    No error checking: non-finite results propagate as inf/nan.
    """
    body = ", ".join(_source(e) for e in exprs)
    src = f"def _f(y):\n    return [{body}]\n"
    ns: dict = {"_np": np}
    exec(src, ns)
    return ns["_f"]


def evaluate_many(exprs: Sequence[Expression], points: np.ndarray) -> np.ndarray:
    """Evaluate expressions on a (q, N) array of points; returns (len(exprs), N)."""
    pts = np.asarray(points, dtype=float)
    f = compile_exprs(tuple(exprs))
    with np.errstate(all="ignore"):
        vals = f(pts)
    n = pts.shape[1] if pts.ndim == 2 else 1
    return np.array([np.broadcast_to(np.asarray(v, dtype=float), (n,)) for v in vals])


# -- differentiation ----------------------------------------------------------

@lru_cache(maxsize=65536)
def derivative(e: Expression, k: int) -> Expression:
    """d e / d y_{k+1}."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == k else ZERO
    if isinstance(e, Add):
        return add(derivative(e.left, k), derivative(e.right, k))
    if isinstance(e, Sub):
        return sub(derivative(e.left, k), derivative(e.right, k))
    if isinstance(e, Neg):
        return neg(derivative(e.arg, k))
    if isinstance(e, Mul):
        return add(mul(derivative(e.left, k), e.right), mul(e.left, derivative(e.right, k)))
    if isinstance(e, Div):
        du, dv = derivative(e.left, k), derivative(e.right, k)
        if _is_const(dv, 0.0):
            return div(du, e.right)
        return sub(div(du, e.right), div(mul(e.left, dv), power(e.right, 2)))
    if isinstance(e, Pow):
        db = derivative(e.base, k)
        return mul(mul(Const(float(e.exponent)), power(e.base, e.exponent - 1)), db)
    if isinstance(e, Func):
        da = derivative(e.arg, k)
        if _is_const(da, 0.0):
            return ZERO
        if e.name == "sin":
            return mul(func("cos", e.arg), da)
        if e.name == "cos":
            return neg(mul(func("sin", e.arg), da))
        if e.name == "exp":
            return mul(e, da)
        if e.name == "sqrt":
            return div(da, mul(Const(2.0), e))
    raise TypeError(f"not an expression: {e!r}")


def diff_expr(e: Expression, s: Sequence[int]) -> Expression:
    """Mixed partial derivative of multi-index `s` (one entry per coordinate)."""
    if any(int(k) < 0 for k in s):
        raise ValueError(f"multi-index entries must be >= 0, got {tuple(s)}")
    out = e
    for k, order in enumerate(s):
        for _ in range(int(order)):
            out = derivative(out, k)
    return out


def gradient(e: Expression, q: int) -> tuple[Expression, ...]:
    return tuple(derivative(e, k) for k in range(q))


# -- substitution / composition ------------------------------------------------

def substitute(e: Expression, images: Sequence[Expression]) -> Expression:
    """Replace every y_k in `e` by images[k] (composition e ∘ images)."""
    images = tuple(images)
    return _subst(e, images)


def _subst(e: Expression, images: tuple[Expression, ...]) -> Expression:
    if isinstance(e, Const):
        return e
    if isinstance(e, Var):
        if e.index >= len(images):
            raise UnboundCoordinate(f"y{e.index + 1} has no image in a {len(images)}-component substitution")
        return images[e.index]
    if isinstance(e, Add):
        return add(_subst(e.left, images), _subst(e.right, images))
    if isinstance(e, Sub):
        return sub(_subst(e.left, images), _subst(e.right, images))
    if isinstance(e, Mul):
        return mul(_subst(e.left, images), _subst(e.right, images))
    if isinstance(e, Div):
        return div(_subst(e.left, images), _subst(e.right, images))
    if isinstance(e, Neg):
        return neg(_subst(e.arg, images))
    if isinstance(e, Pow):
        return power(_subst(e.base, images), e.exponent)
    if isinstance(e, Func):
        return func(e.name, _subst(e.arg, images))
    raise TypeError(f"not an expression: {e!r}")


def affine(e: Expression, matrix, offset) -> Expression:
    """Compose `e` with the affine map y -> matrix @ y + offset."""
    A = np.asarray(matrix, dtype=float)
    c = np.asarray(offset, dtype=float)
    q_in = A.shape[1]
    ys = coords(q_in)
    images = []
    for row, shift in zip(A, c):
        term: Expression = Const(float(shift))
        for j in range(q_in):
            term = add(term, mul(Const(float(row[j])), ys[j]))
        images.append(term)
    return substitute(e, images)


def simplify(e: Expression) -> Expression:
    """Rebuild bottom-up through the simplifying constructors."""
    return _subst(e, tuple(Var(k) for k in range(max(free_coords(e), default=-1) + 1)))


# -- printing ----------------------------------------------------------------

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def _prec(e: Expression) -> int:
    if isinstance(e, Const) and e.value < 0:
        return 3
    return _PREC.get(type(e), 5)


def _fmt_const(v: float) -> str:
    if math.isinf(v) or math.isnan(v):
        raise ValueError(f"cannot print non-finite constant {v!r}")
    text = repr(float(v))
    return f"({text})" if v < 0 else text


def to_string(e: Expression) -> str:
    """Infix form accepted by `parse_expr`; constants print with full precision."""
    if isinstance(e, Const):
        return _fmt_const(e.value)
    if isinstance(e, Var):
        return f"y{e.index + 1}"
    if isinstance(e, Func):
        return f"{e.name}({to_string(e.arg)})"
    if isinstance(e, Neg):
        inner = to_string(e.arg)
        return f"-({inner})" if _prec(e.arg) <= 3 else f"-{inner}"
    if isinstance(e, Pow):
        base = to_string(e.base)
        if _prec(e.base) <= 4:
            base = f"({base})"
        exponent = str(e.exponent) if e.exponent >= 0 else f"({e.exponent})"
        return f"{base}^{exponent}"
    op = {Add: "+", Sub: "-", Mul: "*", Div: "/"}[type(e)]
    p = _PREC[type(e)]
    left = to_string(e.left)
    if _prec(e.left) < p:
        left = f"({left})"
    right = to_string(e.right)
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {op} {right}"
