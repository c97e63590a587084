"""Interval enclosures of expressions over boxes.

Used to certify that a candidate box is mapped into a target box. Rounding is
round-to-nearest (no directed rounding); containment checks elsewhere allow a
1e-12 slack at box faces.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import DomainError
from .expr import Add, Const, Div, Expression, Func, Mul, Neg, Pow, Sub, Var

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __add__(self, other: "Interval") -> "Interval":
        return Interval(self.lo + other.lo, self.hi + other.hi)

    def __sub__(self, other: "Interval") -> "Interval":
        return Interval(self.lo - other.hi, self.hi - other.lo)

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __mul__(self, other: "Interval") -> "Interval":
        p = [self.lo * other.lo, self.lo * other.hi, self.hi * other.lo, self.hi * other.hi]
        p = [0.0 if math.isnan(v) else v for v in p]  # 0 * inf
        return Interval(min(p), max(p))

    def reciprocal(self) -> "Interval":
        if self.lo <= 0.0 <= self.hi:
            return Interval(-math.inf, math.inf)
        return Interval(1.0 / self.hi, 1.0 / self.lo)

    def __truediv__(self, other: "Interval") -> "Interval":
        return self * other.reciprocal()

    def __pow__(self, n: int) -> "Interval":
        if n == 0:
            return Interval(1.0, 1.0)
        if n < 0:
            return (self ** (-n)).reciprocal()
        a, b = self.lo ** n, self.hi ** n
        if n % 2 == 1:
            return Interval(a, b)
        if self.lo >= 0.0:
            return Interval(a, b)
        if self.hi <= 0.0:
            return Interval(b, a)
        return Interval(0.0, max(a, b))

    @property
    def width(self) -> float:
        return self.hi - self.lo


def _sin(x: Interval) -> Interval:
    if x.width >= _TWO_PI or not math.isfinite(x.width):
        return Interval(-1.0, 1.0)
    lo, hi = math.sin(x.lo), math.sin(x.hi)
    out_lo, out_hi = min(lo, hi), max(lo, hi)
    # peaks at pi/2 + 2k pi, troughs at -pi/2 + 2k pi
    k = math.ceil((x.lo - math.pi / 2) / _TWO_PI)
    if math.pi / 2 + k * _TWO_PI <= x.hi:
        out_hi = 1.0
    k = math.ceil((x.lo + math.pi / 2) / _TWO_PI)
    if -math.pi / 2 + k * _TWO_PI <= x.hi:
        out_lo = -1.0
    return Interval(out_lo, out_hi)


def _cos(x: Interval) -> Interval:
    return _sin(Interval(x.lo + math.pi / 2, x.hi + math.pi / 2))


def interval_eval(e: Expression, box) -> Interval:
    """Enclosure of `e` over `box` (a Box or any sequence of (lo, hi) pairs).

    Raises DomainError when sqrt is applied to an interval reaching below 0.
    """
    box = getattr(box, "intervals", box)
    if isinstance(e, Const):
        return Interval(e.value, e.value)
    if isinstance(e, Var):
        lo, hi = box[e.index]
        return Interval(float(lo), float(hi))
    if isinstance(e, Add):
        return interval_eval(e.left, box) + interval_eval(e.right, box)
    if isinstance(e, Sub):
        return interval_eval(e.left, box) - interval_eval(e.right, box)
    if isinstance(e, Mul):
        if e.left == e.right:
            return interval_eval(e.left, box) ** 2
        return interval_eval(e.left, box) * interval_eval(e.right, box)
    if isinstance(e, Div):
        return interval_eval(e.left, box) / interval_eval(e.right, box)
    if isinstance(e, Neg):
        return -interval_eval(e.arg, box)
    if isinstance(e, Pow):
        return interval_eval(e.base, box) ** e.exponent
    if isinstance(e, Func):
        x = interval_eval(e.arg, box)
        if e.name == "sin":
            return _sin(x)
        if e.name == "cos":
            return _cos(x)
        if e.name == "exp":
            return Interval(math.exp(x.lo) if x.lo > -745 else 0.0,
                            math.exp(x.hi) if x.hi < 709 else math.inf)
        if e.name == "sqrt":
            if x.lo < 0.0:
                raise DomainError(f"sqrt over an interval reaching {x.lo!r}")
            return Interval(math.sqrt(x.lo), math.sqrt(x.hi))
    raise TypeError(f"not an expression: {e!r}")
