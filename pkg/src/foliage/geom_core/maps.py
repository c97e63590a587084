"""Open boxes and partial diffeomorphisms between them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from ..errors import ChartMismatch, DomainError, EmptyDomain
from .expr import Const, Expression, Var, add, const, mul, compile_exprs, coords, derivative, substitute, to_string
from .interval import interval_eval

# fixed numeric parameters of the geometry substrate
H_FD = 1e-4
TAU_FD = 1e-6
TAU_INV = 1e-9
FACE_TOL = 1e-12


@dataclass(frozen=True)
class Box:
    """Open axis-aligned box, one (lo, hi) pair per transverse coordinate."""

    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        ivs = tuple((float(lo), float(hi)) for lo, hi in self.intervals)
        if not ivs:
            raise ValueError("a box needs at least one interval")
        for lo, hi in ivs:
            if not lo < hi:
                raise ValueError(f"degenerate interval ({lo}, {hi})")
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def cube(cls, q: int, lo: float, hi: float) -> "Box":
        return cls(tuple((lo, hi) for _ in range(q)))

    @classmethod
    def from_bounds(cls, lo: Sequence[float], hi: Sequence[float]) -> "Box":
        return cls(tuple(zip(lo, hi)))

    @property
    def dim(self) -> int:
        return len(self.intervals)

    @property
    def lo(self) -> np.ndarray:
        return np.array([iv[0] for iv in self.intervals])

    @property
    def hi(self) -> np.ndarray:
        return np.array([iv[1] for iv in self.intervals])

    @property
    def center(self) -> np.ndarray:
        return (self.lo + self.hi) / 2.0

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, y: Sequence[float]) -> bool:
        y = np.asarray(y, dtype=float)
        return bool(np.all(self.lo < y) and np.all(y < self.hi))

    def contains_points(self, pts: np.ndarray) -> np.ndarray:
        """Boolean mask over the columns of a (q, N) array."""
        pts = np.asarray(pts, dtype=float)
        return np.all((self.lo[:, None] < pts) & (pts < self.hi[:, None]), axis=0)

    def contains_box(self, other: "Box", tol: float = FACE_TOL) -> bool:
        """Closed containment of `other` in this box, up to `tol` at the faces."""
        slack = tol * np.maximum(1.0, np.maximum(np.abs(self.lo), np.abs(self.hi)))
        return bool(np.all(other.lo >= self.lo - slack) and np.all(other.hi <= self.hi + slack))

    def closure_inside(self, outer: "Box") -> bool:
        """True iff the closure of this box lies in the open box `outer`."""
        return bool(np.all(outer.lo < self.lo) and np.all(self.hi < outer.hi))

    def intersect(self, other: "Box") -> "Box | None":
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        if np.any(lo >= hi):
            return None
        return Box.from_bounds(lo, hi)

    def hull(self, other: "Box") -> "Box":
        return Box.from_bounds(np.minimum(self.lo, other.lo), np.maximum(self.hi, other.hi))

    def shrink(self, margin: float) -> "Box":
        lo, hi = self.lo + margin, self.hi - margin
        if np.any(lo >= hi):
            raise EmptyDomain(f"shrinking {self} by {margin} leaves no interior")
        return Box.from_bounds(lo, hi)

    def scaled(self, t: float, about: Sequence[float] | None = None) -> "Box":
        c = self.center if about is None else np.asarray(about, dtype=float)
        return Box.from_bounds(c + t * (self.lo - c), c + t * (self.hi - c))

    def translated(self, shift: Sequence[float]) -> "Box":
        s = np.asarray(shift, dtype=float)
        return Box.from_bounds(self.lo + s, self.hi + s)

    def grid(self, n: int) -> np.ndarray:
        """Cell-centred n^q grid as a (q, n^q) array, lexicographic order."""
        axes = [lo + (np.arange(n) + 0.5) * (hi - lo) / n for lo, hi in self.intervals]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.array([m.ravel() for m in mesh])

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        u = rng.random((self.dim, n))
        return self.lo[:, None] + u * self.widths[:, None]

    def to_json(self) -> list[list[float]]:
        return [[lo, hi] for lo, hi in self.intervals]

    @classmethod
    def from_json(cls, data) -> "Box":
        return cls(tuple((float(lo), float(hi)) for lo, hi in data))

    def __str__(self):
        return " x ".join(f"({lo:g}, {hi:g})" for lo, hi in self.intervals)


def interval_hull(exprs: Sequence[Expression], box: Box) -> Box | None:
    """Box enclosing the image of `box` under `exprs`, or None if degenerate."""
    ivs = [interval_eval(e, box.intervals) for e in exprs]
    if any(not (math.isfinite(iv.lo) and math.isfinite(iv.hi)) or iv.lo >= iv.hi for iv in ivs):
        return None
    return Box(tuple((iv.lo, iv.hi) for iv in ivs))


def maps_into(exprs: Sequence[Expression], box: Box, target: Box, tol: float = FACE_TOL) -> bool:
    """Interval-arithmetic certificate that exprs(box) lies in the closure of target."""
    try:
        ivs = [interval_eval(e, box.intervals) for e in exprs]
    except (DomainError, ZeroDivisionError):
        return False
    for iv, (lo, hi) in zip(ivs, target.intervals):
        slack = tol * max(1.0, abs(lo), abs(hi))
        if not (iv.lo >= lo - slack and iv.hi <= hi + slack):
            return False
    return True


def certify_box(candidate: Box, exprs: Sequence[Expression], target: Box,
                iterations: int = 48) -> Box | None:
    """Largest homothetic shrink of `candidate` (about its centre) certified to map into `target`."""
    if maps_into(exprs, candidate, target):
        return candidate
    c = candidate.center
    lo_t, hi_t = 0.0, 1.0
    best = None
    for _ in range(iterations):
        t = 0.5 * (lo_t + hi_t)
        trial = candidate.scaled(t, c)
        if maps_into(exprs, trial, target):
            lo_t, best = t, trial
        else:
            hi_t = t
    return best


@dataclass(frozen=True)
class LocalMap:
    """Diffeomorphism dom -> codom given by analytic components and a declared inverse.

    Invariant (checked by `check_invariants`, not at construction): forward(dom)
    lies in codom, inverse∘forward is the identity on dom, and the Jacobian
    determinant does not vanish on dom.
    """

    dom: Box
    codom: Box
    forward: tuple[Expression, ...]
    inverse: tuple[Expression, ...]
    chart_src: str = "T"
    chart_dst: str = "T"
    label: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "forward", tuple(self.forward))
        object.__setattr__(self, "inverse", tuple(self.inverse))
        q = self.dom.dim
        if self.codom.dim != q or len(self.forward) != q or len(self.inverse) != q:
            raise ValueError(
                f"dimension mismatch: dom {q}, codom {self.codom.dim}, "
                f"{len(self.forward)} forward / {len(self.inverse)} inverse components")

    @property
    def q(self) -> int:
        return self.dom.dim

    # -- evaluation --
    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        with np.errstate(all="ignore"):
            out = compile_exprs(self.forward)(y)
        return np.array([np.broadcast_to(v, y.shape[1:]) for v in out], dtype=float)

    def apply_inverse(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        with np.errstate(all="ignore"):
            out = compile_exprs(self.inverse)(y)
        return np.array([np.broadcast_to(v, y.shape[1:]) for v in out], dtype=float)

    @cached_property
    def jacobian_exprs(self) -> tuple[tuple[Expression, ...], ...]:
        return tuple(tuple(derivative(c, l) for l in range(self.q)) for c in self.forward)

    @cached_property
    def _jac_flat(self):
        return compile_exprs(tuple(e for row in self.jacobian_exprs for e in row))

    def jacobian_at(self, pts: np.ndarray) -> np.ndarray:
        """Jacobians at the columns of a (q, N) array, shape (N, q, q); no domain check."""
        pts = np.asarray(pts, dtype=float)
        n = pts.shape[1]
        with np.errstate(all="ignore"):
            vals = self._jac_flat(pts)
        flat = np.array([np.broadcast_to(np.asarray(v, dtype=float), (n,)) for v in vals])
        return flat.T.reshape(n, self.q, self.q)

    def is_affine(self) -> bool:
        return all(isinstance(e, Const) for row in self.jacobian_exprs for e in row)

    # -- structure --
    @cached_property
    def inverse_map(self) -> "LocalMap":
        """The inverse as a LocalMap on a certified sub-box of the image."""
        image = None
        try:
            image = interval_hull(self.forward, self.dom)
        except (DomainError, ZeroDivisionError):
            pass
        candidate = self.codom if image is None else (self.codom.intersect(image) or self.codom)
        dom = certify_box(candidate, self.inverse, self.dom)
        if dom is None:
            raise EmptyDomain(f"cannot certify a domain for the inverse of {self.label or self}")
        return LocalMap(dom, self.dom, self.inverse, self.forward, self.chart_dst, self.chart_src,
                        label=_inverse_label(self.label))

    def restrict(self, sub: Box) -> "LocalMap":
        inner = self.dom.intersect(sub)
        if inner is None:
            raise EmptyDomain(f"{sub} does not meet dom {self.dom}")
        return LocalMap(inner, self.codom, self.forward, self.inverse,
                        self.chart_src, self.chart_dst, label=self.label)

    def check_invariants(self, rng: np.random.Generator, n: int = 100) -> dict:
        """Sampled residuals of the LocalMap contract."""
        pts = np.concatenate([self.dom.center[:, None], self.dom.sample(rng, n - 1)], axis=1)
        img = self(pts)
        back = self.apply_inverse(img)
        dets = np.linalg.det(self.jacobian_at(pts))
        return {
            "maps_into_codom": bool(np.all(self.codom.contains_points(img) |
                                           _on_closure(self.codom, img))),
            "inverse_error": float(np.max(np.abs(back - pts))),
            "min_abs_det": float(np.min(np.abs(dets))),
        }

    def to_json(self) -> dict:
        return {
            "src": self.chart_src,
            "dst": self.chart_dst,
            "forward": [to_string(e) for e in self.forward],
            "inverse": [to_string(e) for e in self.inverse],
            "dom": self.dom.to_json(),
            "codom": self.codom.to_json(),
            "label": self.label,
        }

    def __str__(self):
        comps = ", ".join(to_string(e) for e in self.forward)
        return f"{self.label or 'map'}[{self.chart_src}->{self.chart_dst}] on {self.dom}: y -> ({comps})"


def _on_closure(box: Box, pts: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    return np.all((box.lo[:, None] - tol <= pts) & (pts <= box.hi[:, None] + tol), axis=0)


def _inverse_label(label: str) -> str:
    if not label:
        return ""
    return label[:-3] if label.endswith("^-1") else label + "^-1"


# -- constructors -------------------------------------------------------------

def _affine_exprs(A: np.ndarray, c: np.ndarray) -> tuple[Expression, ...]:
    ys = coords(A.shape[1])
    out = []
    for row, shift in zip(A, c):
        term = None
        for j, a in enumerate(row):
            if a == 0.0:
                continue
            piece = mul(const(a), ys[j])
            term = piece if term is None else add(term, piece)
        term = const(0.0) if term is None else term
        out.append(add(term, const(shift)))
    return tuple(out)


def affine_map(dom: Box, matrix, offset=None, chart_src: str = "T", chart_dst: str | None = None,
               codom: Box | None = None, label: str = "") -> LocalMap:
    """y -> A y + c on `dom`; codom defaults to the interval hull of the image."""
    A = np.atleast_2d(np.asarray(matrix, dtype=float))
    c = np.zeros(A.shape[0]) if offset is None else np.asarray(offset, dtype=float)
    if abs(np.linalg.det(A)) < 1e-14:
        raise ValueError("affine map must be invertible")
    Ainv = np.linalg.inv(A)
    # exact inverses for signed permutation matrices avoid 1e-17 noise
    if np.all(np.isin(A, (-1.0, 0.0, 1.0))) and np.array_equal(A @ A.T, np.eye(A.shape[0])):
        Ainv = A.T.copy()
    fwd = _affine_exprs(A, c)
    inv = _affine_exprs(Ainv, -Ainv @ c)
    if codom is None:
        codom = interval_hull(fwd, dom)
    return LocalMap(dom, codom, fwd, inv, chart_src, chart_src if chart_dst is None else chart_dst,
                    label=label)


def identity_map(dom: Box, chart: str = "T") -> LocalMap:
    ys = coords(dom.dim)
    return LocalMap(dom, dom, ys, ys, chart, chart, label="id")


def translation(dom: Box, shift: Sequence[float], chart_src: str = "T", chart_dst: str | None = None,
                label: str = "") -> LocalMap:
    q = dom.dim
    return affine_map(dom, np.eye(q), shift, chart_src, chart_dst, codom=dom.translated(shift),
                      label=label)


# -- operations ---------------------------------------------------------------

def compose_maps(h2: LocalMap, h1: LocalMap) -> LocalMap:
    """h2 ∘ h1 on dom(h1) ∩ h1^-1(dom h2), certified conservatively as a box."""
    if h1.chart_dst != h2.chart_src:
        raise ChartMismatch(f"cannot compose: {h1.chart_dst!r} != {h2.chart_src!r}")
    if h1.q != h2.q:
        raise ChartMismatch("maps act on different dimensions")
    candidate = h1.dom
    target_in_codom = h2.dom.intersect(h1.codom)
    if target_in_codom is None:
        raise EmptyDomain(f"dom {h2.dom} does not meet codom {h1.codom}")
    try:
        pre = interval_hull(h1.inverse, target_in_codom)
    except (DomainError, ZeroDivisionError):
        pre = None
    if pre is not None:
        candidate = h1.dom.intersect(pre)
        if candidate is None:
            raise EmptyDomain("preimage of the second domain misses the first domain")
    dom = certify_box(candidate, h1.forward, h2.dom)
    if dom is None:
        raise EmptyDomain("no certified box maps into the second domain")
    fwd = tuple(substitute(e, h1.forward) for e in h2.forward)
    inv = tuple(substitute(e, h2.inverse) for e in h1.inverse)
    codom = h2.codom
    try:
        image = interval_hull(fwd, dom)
        if image is not None:
            codom = h2.codom.intersect(image) or h2.codom
    except (DomainError, ZeroDivisionError):
        pass
    label = f"{h2.label}∘{h1.label}" if (h1.label and h2.label) else ""
    return LocalMap(dom, codom, fwd, inv, h1.chart_src, h2.chart_dst, label=label)


def jacobian(h: LocalMap, y: Sequence[float]) -> np.ndarray:
    """q x q Jacobian of h at y; DomainError if y is not in dom(h)."""
    y = np.asarray(y, dtype=float)
    if not h.dom.contains(y):
        raise DomainError(f"{tuple(y)} is not in dom {h.dom}")
    return h.jacobian_at(y[:, None])[0]


def operator_norm(matrix: np.ndarray) -> float:
    return float(np.linalg.svd(np.atleast_2d(matrix), compute_uv=False)[0])


def is_identity_exprs(exprs: Iterable[Expression]) -> bool:
    return all(isinstance(e, Var) and e.index == k for k, e in enumerate(exprs))
