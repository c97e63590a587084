"""Bundled foliation scenarios: transversal charts, holonomy generators and operators."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidGenerator, ParameterOutOfRange
from .geom_core import Box, LocalMap, affine_map, coords, parse_expr, translation
from .geom_core.expr import add, const, div, mul, neg, power, sin, sqrt, sub
from .operators import BasicOperator, laplacian
from .pseudogroup import Chart, Generator, PseudogroupSpec, make_generator

DEFAULT_A = 0.1 * math.sqrt(2.0)
DEFAULT_B = 0.1 * math.sqrt(3.0)


# -- closed forms ----------------------------------------------------------------------

def torus_counterexample(n: int) -> tuple[np.ndarray, float, float]:
    """(A_n, ||A_n||, eig_n) for the shear holonomy [[1, n], [0, 1]].

    eig_n is the largest eigenvalue of A_n^T A_n, (n^2 + 2 + n sqrt(n^2 + 4)) / 2.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    A = np.array([[1.0, float(n)], [0.0, 1.0]])
    eig = 0.5 * (n * n + 2 + n * math.sqrt(n * n + 4))
    return A, math.sqrt(eig), eig


def rational_independence(a: float, b: float, max_den: int = 1000, tol: float = 1e-9) -> dict:
    """Heuristic: a/b is flagged rational if a continued-fraction convergent with
    denominator <= max_den reproduces it to `tol`."""
    ratio = a / b
    frac = Fraction(ratio).limit_denominator(max_den)
    err = abs(ratio - frac.numerator / frac.denominator)
    return {"independent": err > tol, "best_fraction": f"{frac.numerator}/{frac.denominator}",
            "error": err, "max_denominator": max_den}


# -- the cube model with small translations -------------------------------------------------

def _check_ab(a: float, b: float) -> None:
    for name, v in (("a", a), ("b", b)):
        if not 0.0 < v < 1.0 / 3.0:
            raise ParameterOutOfRange(f"{name} = {v} must lie in (0, 1/3)")


def make_translation_generators(q: int, a: float = DEFAULT_A, b: float = DEFAULT_B) -> PseudogroupSpec:
    """4q translations T^k_{+a}, T^k_{-a}, T^k_{+b}, T^k_{-b} on the cube (-1/3, 1/3)^q.

    Extensions live on (-2/3, 2/3)^q inside the ambient cube (-1, 1)^q.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    _check_ab(a, b)
    box = Box.cube(q, -1.0 / 3.0, 1.0 / 3.0)
    ext = Box.cube(q, -2.0 / 3.0, 2.0 / 3.0)
    gens = []
    for k in range(q):
        for name, step in (("+a", a), ("-a", -a), ("+b", b), ("-b", -b)):
            shift = np.zeros(q)
            shift[k] = step
            g = translation(box, shift, "O", "O", label=f"T{k + 1}{name}")
            gens.append(make_generator(g, ext, ext.translated(shift)))
    meta = {"a": a, "b": b, "rational_independence": rational_independence(a, b)}
    return PseudogroupSpec((Chart("O", box, Box.cube(q, -1.0, 1.0)),), tuple(gens), {}, meta)


# -- flat atlases on R^q / (period Z^q) ---------------------------------------------------

def _centred_box(centre: np.ndarray, half: float) -> Box:
    return Box.from_bounds(centre - half, centre + half)


def _preimage_box(L: np.ndarray, box: Box) -> Box:
    """{y : L y in box} for a signed permutation matrix L."""
    corners = np.stack([L.T @ box.lo, L.T @ box.hi])
    return Box.from_bounds(corners.min(axis=0), corners.max(axis=0))


def flat_charts(centres: Sequence[Sequence[float]], half: float, ambient_half: float, prefix: str) -> list[Chart]:
    out = []
    for c in centres:
        c = np.asarray(c, dtype=float)
        out.append(Chart(f"{prefix}{len(out)}", _centred_box(c, half), _centred_box(c, ambient_half)))
    return out


def affine_pieces(charts: Sequence[Chart], L, t, period: float, label: str,
                  upper_only: bool = False) -> list[Generator]:
    """Restrictions of y -> L y + t (mod period) to every chart pair where they land.

    Each piece runs from chart i to chart j as y -> L y + t + n for a lattice vector n.
    With `upper_only`, only pairs i < j are kept (used for chart transitions, whose
    reverse direction is the inverse letter).
    """
    L = np.atleast_2d(np.asarray(L, dtype=float))
    t = np.asarray(t, dtype=float)
    q = L.shape[0]
    gens = []
    for (i, ci), (j, cj) in itertools.product(enumerate(charts), repeat=2):
        if upper_only and i >= j:
            continue
        for n in itertools.product((-period, 0.0, period), repeat=q):
            off = t + np.asarray(n)
            dom = ci.box.intersect(_preimage_box(L, cj.box.translated(-off)))
            if dom is None or np.min(dom.widths) < 1e-9:
                continue
            ext = ci.ambient.intersect(_preimage_box(L, cj.ambient.translated(-off)))
            shift = "".join(f"{v:+g}" for v in n)
            g = affine_map(dom, L, off, ci.id, cj.id, label=f"{label}:{ci.id}->{cj.id}[{shift}]")
            gens.append(make_generator(g, ext))
    return gens


def chart_translations(charts: Sequence[Chart], a: float = DEFAULT_A, b: float = DEFAULT_B) -> list[Generator]:
    """Small translations inside every chart, scaled from the cube model to the chart width.

    Each translation is restricted to box ∩ (box - shift) so its image stays in the box.
    """
    gens = []
    for c in charts:
        q = c.box.dim
        scale = float(np.min(c.box.widths)) / (2.0 / 3.0)
        for k in range(q):
            for name, step in (("+a", a), ("-a", -a), ("+b", b), ("-b", -b)):
                shift = np.zeros(q)
                shift[k] = step * scale
                dom = c.box.intersect(c.box.translated(-shift))
                ext = c.ambient.intersect(c.ambient.translated(-shift))
                g = translation(dom, shift, c.id, c.id, label=f"S{k + 1}{name}@{c.id}")
                gens.append(make_generator(g, ext, ext.translated(shift)))
    return gens


# -- holonomy descriptions -------------------------------------------------------------------

@dataclass(frozen=True)
class FiniteRotations:
    k: int
    fiber: str = "torus"


@dataclass(frozen=True)
class IrrationalRotation:
    alpha: float
    fiber: str = "circle"


@dataclass(frozen=True)
class MatrixGroup:
    gens: tuple[tuple[tuple[float, ...], ...], ...]


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    H: PseudogroupSpec
    operators: Mapping[str, BasicOperator]
    base_point: tuple[str, tuple[float, ...]]
    holonomy_count: int
    base_inner_product: np.ndarray | None = None
    references: Mapping[str, object] = field(default_factory=dict)
    description: str = ""

    @property
    def q(self) -> int:
        return self.H.q

    @property
    def holonomy(self) -> tuple[Generator, ...]:
        return self.H.generators[:self.holonomy_count]

    def base(self) -> np.ndarray:
        return np.eye(self.q) if self.base_inner_product is None else np.asarray(self.base_inner_product, float)

    def operator_for(self, chart: str) -> BasicOperator:
        return self.operators[chart]

    def to_json(self) -> dict:
        data = {
            "name": self.name,
            "q": self.q,
            "description": self.description,
            "pseudogroup": self.H.to_json(),
            "holonomy_count": self.holonomy_count,
            "operators": {cid: P.to_json() for cid, P in sorted(self.operators.items())},
            "base_point": {"chart": self.base_point[0], "y": list(self.base_point[1])},
            "base_inner_product": self.base().tolist(),
        }
        if self.references:
            data["references"] = dict(self.references)
        return data

    @classmethod
    def from_json(cls, data: dict) -> "Scenario":
        H = PseudogroupSpec.from_json(data["pseudogroup"])
        ops = {cid: BasicOperator.from_json(P) for cid, P in data["operators"].items()}
        bp = data["base_point"]
        missing = [c.id for c in H.charts if c.id not in ops]
        if missing:
            raise ValueError(f"no operator for charts {missing}")
        return cls(data["name"], H, ops, (bp["chart"], tuple(float(v) for v in bp["y"])),
                   int(data.get("holonomy_count", len(H.generators))),
                   np.asarray(data["base_inner_product"], dtype=float) if "base_inner_product" in data else None,
                   dict(data.get("references", {})), data.get("description", ""))


# -- fibers -----------------------------------------------------------------------------------

_ROT = {1: np.eye(2), 2: -np.eye(2), 4: np.array([[0.0, -1.0], [1.0, 0.0]])}


def _torus_fiber() -> tuple[list[Chart], float]:
    centres = [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5)]
    return flat_charts(centres, 0.3, 0.4, "C"), 1.0


def _circle_fiber() -> tuple[list[Chart], float]:
    return flat_charts([(0.0,), (math.pi,)], 2.0, 2.5, "C"), 2.0 * math.pi


def _flat_scenario(name: str, charts, period, pieces, operator, base_point, description, refs,
                   base=None) -> Scenario:
    cocycles = affine_pieces(charts, np.eye(charts[0].box.dim), np.zeros(charts[0].box.dim), period,
                             "h", upper_only=True)
    hol = list(cocycles) + list(pieces)
    H = PseudogroupSpec(tuple(charts), tuple(hol) + tuple(chart_translations(charts)),
                        {}, {"period": period})
    return Scenario(name, H, {c.id: operator for c in charts}, base_point, len(hol),
                    base, refs, description)


def _stereo_operator() -> BasicOperator:
    y1, y2 = coords(2)
    r2 = add(mul(y1, y1), mul(y2, y2))
    conf = div(power(add(const(1.0), r2), 2), const(4.0))
    return BasicOperator.real(2, 2, {(2, 0): conf, (0, 2): conf})


def _rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _sphere_scenario(alpha: float) -> Scenario:
    """Round sphere in two stereographic charts N, S with the transition y -> y/|y|^2,
    rotated about the polar axis by alpha."""
    box, amb = Box.cube(2, -1.5, 1.5), Box.cube(2, -2.0, 2.0)
    charts = [Chart("N", box, amb), Chart("S", box, amb)]
    y1, y2 = coords(2)
    r2 = add(mul(y1, y1), mul(y2, y2))
    inv = (div(y1, r2), div(y2, r2))
    gens = []
    strips = [((0.7, 1.5), (-1.5, 1.5)), ((-1.5, -0.7), (-1.5, 1.5)),
              ((-1.5, 1.5), (0.7, 1.5)), ((-1.5, 1.5), (-1.5, -0.7))]
    ext_strips = [((0.6, 1.9), (-1.9, 1.9)), ((-1.9, -0.6), (-1.9, 1.9)),
                  ((-1.9, 1.9), (0.6, 1.9)), ((-1.9, 1.9), (-1.9, -0.6))]
    for s, e in zip(strips, ext_strips):
        dom = Box(s)
        g = LocalMap(dom, box, inv, inv, "N", "S", label=f"h:N->S{list(s)}")
        gens.append(Generator(g, LocalMap(Box(e), amb, inv, inv, "N", "S", label=g.label)))
    R = _rotation_matrix(alpha)
    for cid in ("N", "S"):
        g = affine_map(Box.cube(2, -1.06, 1.06), R, None, cid, cid, label=f"R@{cid}")
        gens.append(make_generator(g, Box.cube(2, -1.4, 1.4)))
    P = _stereo_operator()
    H = PseudogroupSpec(tuple(charts), tuple(gens), {}, {"alpha": alpha})
    return Scenario("sphere-rotation", H, {"N": P, "S": P}, ("N", (0.0, 0.0)), len(gens),
                    np.diag([1.0, 2.0]), {"closure": "torus"},
                    "round sphere rotated by an irrational angle; no chart translations commute with P")


def make_suspension(holonomy, fiber: str | None = None) -> Scenario:
    """Transverse model of a suspension foliation: the holonomy group acting on its fiber."""
    if isinstance(holonomy, FiniteRotations):
        fib = fiber or holonomy.fiber
        k = holonomy.k
        if k < 1:
            raise InvalidGenerator("rotation order must be >= 1")
        if fib == "torus":
            if k not in _ROT:
                raise InvalidGenerator(f"rotation of order {k} does not preserve the square lattice and boxes")
            charts, period = _torus_fiber()
            pieces = affine_pieces(charts, _ROT[k], np.zeros(2), period, f"R{k}")
            return _flat_scenario(f"c{k}-suspension", charts, period, pieces, laplacian(2),
                                  ("C0", (0.0, 0.0)), f"square torus rotated by 2pi/{k}",
                                  {"group_order": k}, np.diag([1.0, 2.0]))
        if fib == "circle":
            charts, period = _circle_fiber()
            pieces = affine_pieces(charts, np.eye(1), [2.0 * math.pi / k], period, f"R{k}")
            return _flat_scenario(f"circle-rotation-{k}", charts, period, pieces, laplacian(1),
                                  ("C0", (0.0,)), f"circle rotated by 2pi/{k}: every orbit is finite",
                                  {"orbit_size": k})
        raise InvalidGenerator(f"unknown fiber {fib!r}")
    if isinstance(holonomy, IrrationalRotation):
        fib = fiber or holonomy.fiber
        if fib == "circle":
            charts, period = _circle_fiber()
            pieces = affine_pieces(charts, np.eye(1), [holonomy.alpha], period, "R")
            return _flat_scenario("circle-rotation", charts, period, pieces, laplacian(1),
                                  ("C0", (0.0,)), f"circle rotated by {holonomy.alpha} rad",
                                  {"alpha": holonomy.alpha})
        if fib == "sphere":
            return _sphere_scenario(holonomy.alpha)
        raise InvalidGenerator(f"unknown fiber {fib!r}")
    if isinstance(holonomy, MatrixGroup):
        return _matrix_scenario(holonomy)
    raise InvalidGenerator(f"unsupported holonomy description {holonomy!r}")


def _matrix_scenario(holonomy: MatrixGroup) -> Scenario:
    """Linear germs at the origin of (-1, 1)^q; each generator restricted so its image stays inside."""
    mats = [np.asarray(A, dtype=float) for A in holonomy.gens]
    if not mats:
        raise InvalidGenerator("need at least one matrix")
    q = mats[0].shape[0]
    box, amb = Box.cube(q, -1.0, 1.0), Box.cube(q, -1.5, 1.5)
    gens = []
    for i, A in enumerate(mats, start=1):
        if A.shape != (q, q) or not np.all(np.isfinite(A)):
            raise InvalidGenerator(f"generator {i} is not a finite {q}x{q} matrix")
        if abs(np.linalg.det(A)) < 1e-12:
            raise InvalidGenerator(f"generator {i} is singular")
        inf_norm = float(np.max(np.sum(np.abs(A), axis=1)))
        g = affine_map(Box.cube(q, -0.99 / inf_norm, 0.99 / inf_norm), A, None, "L", "L", label=f"A{i}")
        gens.append(make_generator(g, Box.cube(q, -1.4 / inf_norm, 1.4 / inf_norm)))
    H = PseudogroupSpec((Chart("L", box, amb),), tuple(gens), {}, {})
    return Scenario("matrix-group", H, {"L": laplacian(q)}, ("L", (0.0,) * q), len(gens),
                    None, {}, "linear holonomy germs at a fixed point")


def shear_pseudogroup(linear: bool = False) -> PseudogroupSpec:
    """Loop holonomy of the sheared torus foliation near the fixed point (0, 0).

    Nonlinear: (y, z) -> (y, z + sin y), whose n-th power has Jacobian [[1, 0], [n, 1]]
    at the origin (the transpose of A_n, same norm). Linear: y -> A_1 y.
    """
    if linear:
        return _matrix_scenario(MatrixGroup((((1.0, 1.0), (0.0, 1.0)),))).H
    y1, y2 = coords(2)
    box, amb = Box.cube(2, -1.0, 1.0), Box.cube(2, -1.5, 1.5)
    dom, ext = Box.cube(2, -0.5, 0.5), Box.cube(2, -0.6, 0.6)
    fwd, inv = (y1, add(y2, sin(y1))), (y1, sub(y2, sin(y1)))
    g = LocalMap(dom, box, fwd, inv, "T", "T", label="psi")
    return PseudogroupSpec((Chart("T", box, amb),), (Generator(g, LocalMap(ext, amb, fwd, inv, "T", "T",
                                                                             label="psi")),), {}, {})


# -- a chart whose coordinates are a nonlinear reparametrisation of flat ones -----------------

_C2 = 0.2  # F(y) = y + 0.2 y^2


def _frame_exprs():
    (y,) = coords(1)
    fwd = add(y, mul(const(_C2), mul(y, y)))
    inv = div(add(const(-1.0), sqrt(add(const(1.0), mul(const(4.0 * _C2), y)))), const(2.0 * _C2))
    return fwd, inv


def _frame_value(y: float) -> float:
    return y + _C2 * y * y


def _frame_inverse_value(x: float) -> float:
    return (-1.0 + math.sqrt(1.0 + 4.0 * _C2 * x)) / (2.0 * _C2)


def conjugated_translations(a: float = DEFAULT_A, b: float = DEFAULT_B) -> Scenario:
    """q = 1 chart with coordinate y, flat coordinate x = F(y) = y + 0.2 y^2.

    Generators are F^-1 ∘ (x -> x + c) ∘ F; the operator is d^2/dx^2 written in y.
    """
    _check_ab(a, b)
    (y,) = coords(1)
    F, Finv = _frame_exprs()
    box, amb = Box.cube(1, -1.0 / 3.0, 1.0 / 3.0), Box.cube(1, -1.0, 1.0)
    ext_box = Box.cube(1, -2.0 / 3.0, 2.0 / 3.0)
    gens = []
    for name, c in (("+a", a), ("-a", -a), ("+b", b), ("-b", -b)):
        fwd = parse_expr(f"(-1 + sqrt(1 + {4 * _C2!r} * (y1 + {_C2!r} * y1^2 + ({c!r})))) / {2 * _C2!r}", 1)
        inv = parse_expr(f"(-1 + sqrt(1 + {4 * _C2!r} * (y1 + {_C2!r} * y1^2 - ({c!r})))) / {2 * _C2!r}", 1)

        def shifted(bx: Box) -> Box:
            lo, hi = _frame_value(bx.lo[0]), _frame_value(bx.hi[0])
            lo2, hi2 = max(lo, lo - c), min(hi, hi - c)
            return Box(((_frame_inverse_value(lo2), _frame_inverse_value(hi2)),))

        dom, ext = shifted(box), shifted(ext_box)
        img = lambda bx: Box(((_frame_inverse_value(_frame_value(bx.lo[0]) + c),
                               _frame_inverse_value(_frame_value(bx.hi[0]) + c)),))
        g = LocalMap(dom, img(dom), (fwd,), (inv,), "O", "O", label=f"T{name}")
        gens.append(Generator(g, LocalMap(ext, img(ext), (fwd,), (inv,), "O", "O", label=g.label)))
    hp = add(const(1.0), mul(const(2.0 * _C2), y))
    P = BasicOperator.real(1, 2, {(2,): div(const(1.0), power(hp, 2)),
                                  (1,): neg(div(const(2.0 * _C2), power(hp, 3)))})
    frame = LocalMap(amb, Box(((_frame_value(-1.0), _frame_value(1.0)),)), (F,), (Finv,), "O", "flat",
                     label="F")
    H = PseudogroupSpec((Chart("O", box, amb),), tuple(gens), {"O": frame}, {"a": a, "b": b})
    return Scenario("conjugated-translations", H, {"O": P}, ("O", (0.0,)), len(gens), None,
                    {}, "translations seen through the chart y -> y + 0.2 y^2")


# -- registry ---------------------------------------------------------------------------------

def translations_scenario(q: int = 2) -> Scenario:
    H = make_translation_generators(q)
    return Scenario("translations", H, {"O": laplacian(q)}, ("O", (0.0,) * q), len(H.generators),
                    None, {}, "small rationally independent translations of the cube")


def flat_torus_scenario() -> Scenario:
    charts, period = _torus_fiber()
    P = BasicOperator.real(2, 2, {(2, 0): 1.0, (1, 1): 1.0, (0, 2): 1.0})
    return _flat_scenario("flat-torus", charts, period, [], P, ("C0", (0.0, 0.0)),
                          "square torus, chart transitions only, constant non-diagonal operator", {})


def _kronecker_dense() -> Scenario:
    s = make_suspension(IrrationalRotation(1.0))
    return Scenario("kronecker-dense", s.H, s.operators, s.base_point, s.holonomy_count,
                    s.base_inner_product, s.references, s.description)


def _kronecker_compact() -> Scenario:
    s = make_suspension(FiniteRotations(5, fiber="circle"))
    return Scenario("kronecker-compact", s.H, s.operators, s.base_point, s.holonomy_count,
                    s.base_inner_product, s.references, s.description)


SCENARIOS = {
    "translations": translations_scenario,
    "flat-torus": flat_torus_scenario,
    "c4-suspension": lambda: make_suspension(FiniteRotations(4)),
    "kronecker-dense": _kronecker_dense,
    "kronecker-compact": _kronecker_compact,
    "sphere-rotation": lambda: make_suspension(IrrationalRotation(1.0, fiber="sphere")),
    "conjugated-translations": conjugated_translations,
}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]()
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
