"""Basic differential operators written in transverse coordinates.

An operator P = sum_s a_s(y) d^|s|/dy^s is stored as a table from multi-index
to coefficient expression (real part, optional imaginary part).
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import SingularJacobian, ZeroCovector
from .geom_core import (
    Box, Const, Expression, LocalMap, coords, diff_expr, evaluate_many, parse_expr, to_string,
)
from .geom_core.expr import ZERO, add, const, derivative, mul, power, sub, substitute
from .geom_core.maps import H_FD, _affine_exprs, interval_hull

TAU_ELL = 1e-8
TAU_TRI = 1e-10

MultiIndex = tuple[int, ...]


class Part(enum.Enum):
    FULL = "full"
    ORDER_GE_1 = "order_ge_1"
    ORDER_1 = "order_1"


@dataclass(frozen=True)
class BasicOperator:
    """Order-m operator on q transverse coordinates.

    `coeffs` maps a multi-index to a (re, im) pair; `im` may be None. Absent
    multi-indices are zero.
    """

    q: int
    m: int
    coeffs: Mapping[MultiIndex, tuple[Expression, Expression | None]]

    def __post_init__(self):
        if self.m < 2:
            raise ValueError(f"basic operators have order m >= 2, got {self.m}")
        clean = {}
        for s, pair in self.coeffs.items():
            s = tuple(int(k) for k in s)
            if len(s) != self.q or any(k < 0 for k in s):
                raise ValueError(f"bad multi-index {s} for q={self.q}")
            if sum(s) > self.m:
                raise ValueError(f"multi-index {s} exceeds order {self.m}")
            re, im = pair if isinstance(pair, tuple) else (pair, None)
            if im is not None and isinstance(im, Const) and im.value == 0.0:
                im = None
            if isinstance(re, Const) and re.value == 0.0 and im is None:
                continue
            clean[s] = (re, im)
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))
        if not any(sum(s) == self.m for s in self.coeffs):
            raise ValueError(f"no non-zero coefficient of top order {self.m}")

    @classmethod
    def real(cls, q: int, m: int, coeffs: Mapping[MultiIndex, Expression | float]) -> "BasicOperator":
        table = {}
        for s, c in coeffs.items():
            table[tuple(s)] = (c if isinstance(c, Expression) else const(c), None)
        return cls(q, m, table)

    @property
    def is_real(self) -> bool:
        return all(im is None for _, im in self.coeffs.values())

    def coefficient(self, s: MultiIndex) -> tuple[Expression, Expression]:
        re, im = self.coeffs.get(tuple(s), (ZERO, None))
        return re, (ZERO if im is None else im)

    def first_order_coeffs(self) -> tuple[Expression, ...]:
        """(a_1, ..., a_q): real parts of the coefficients of d/dy_k."""
        return tuple(self.coefficient(_unit(self.q, k))[0] for k in range(self.q))

    def zero_order_coeff(self) -> Expression:
        return self.coefficient((0,) * self.q)[0]

    def has_constant_coefficients(self) -> bool:
        return all(isinstance(re, Const) and (im is None or isinstance(im, Const))
                   for re, im in self.coeffs.values())

    def to_json(self) -> dict:
        out = []
        for s, (re, im) in self.coeffs.items():
            item = {"s": list(s), "re": to_string(re)}
            if im is not None:
                item["im"] = to_string(im)
            out.append(item)
        return {"q": self.q, "m": self.m, "coeffs": out}

    @classmethod
    def from_json(cls, data: dict) -> "BasicOperator":
        q, m = int(data["q"]), int(data["m"])
        table = {}
        for item in data["coeffs"]:
            s = tuple(int(k) for k in item["s"])
            re = parse_expr(item.get("re", "0"), q)
            im = parse_expr(item["im"], q) if item.get("im") not in (None, "") else None
            table[s] = (re, im)
        return cls(q, m, table)


def _unit(q: int, k: int) -> MultiIndex:
    return tuple(1 if j == k else 0 for j in range(q))


def laplacian(q: int, scale: float = 1.0) -> BasicOperator:
    return BasicOperator.real(q, 2, {tuple(2 if j == k else 0 for j in range(q)): scale for k in range(q)})


def constant_operator(q: int, m: int, coeffs: Mapping[MultiIndex, float]) -> BasicOperator:
    return BasicOperator.real(q, m, {s: float(c) for s, c in coeffs.items()})


def _selected(P: BasicOperator, part: Part):
    for s, pair in P.coeffs.items():
        order = sum(s)
        if part is Part.FULL or (part is Part.ORDER_GE_1 and order >= 1) or (part is Part.ORDER_1 and order == 1):
            yield s, pair


def apply_operator_parts(P: BasicOperator, f: Expression, part: Part = Part.FULL) -> tuple[Expression, Expression]:
    """(Re Pf, Im Pf) for a real test function f."""
    re_out: Expression = ZERO
    im_out: Expression = ZERO
    for s, (re, im) in _selected(P, Part(part)):
        d = diff_expr(f, s)
        re_out = add(re_out, mul(re, d))
        if im is not None:
            im_out = add(im_out, mul(im, d))
    return re_out, im_out


def apply_operator(P: BasicOperator, f: Expression, part: Part | str = Part.FULL) -> Expression:
    """Sum of a_s * d^s f over the selected multi-indices (real operators only)."""
    if not P.is_real:
        raise ValueError("operator has complex coefficients; use apply_operator_parts")
    return apply_operator_parts(P, f, Part(part))[0]


def _eval(e: Expression, z: Sequence[float]) -> float:
    return float(evaluate_many((e,), np.asarray(z, dtype=float)[:, None])[0, 0])


def principal_symbol(P: BasicOperator, z: Sequence[float], xi: Sequence[float]) -> complex:
    """sigma(P)_z(xi) = sum over |s| = m of a_s(z) xi^s."""
    xi = np.asarray(xi, dtype=float)
    total = 0j
    for s, (re, im) in P.coeffs.items():
        if sum(s) != P.m:
            continue
        mono = float(np.prod([xi[k] ** s[k] for k in range(P.q)]))
        if mono == 0.0:
            continue
        a = _eval(re, z) + 1j * (_eval(im, z) if im is not None else 0.0)
        total += a * mono
    return complex(total)


def principal_symbol_by_power(P: BasicOperator, z: Sequence[float], xi: Sequence[float]) -> complex:
    """Symbol via (1/m!) (P f^m)(z) with f(y) = xi . (y - z), so f(z) = 0 and df(z) = xi."""
    z = np.asarray(z, dtype=float)
    ys = coords(P.q)
    f: Expression = ZERO
    for k in range(P.q):
        f = add(f, mul(const(xi[k]), sub(ys[k], const(z[k]))))
    re, im = apply_operator_parts(P, power(f, P.m))
    return complex(_eval(re, z), _eval(im, z)) / math.factorial(P.m)


def sphere_points(q: int, n: int) -> np.ndarray:
    """n^(q-1) unit covectors from a hyperspherical angle grid, shape (q, N)."""
    if q == 1:
        return np.array([[1.0]])
    # polar angles in [0, pi) except the last azimuth in [0, 2 pi)
    polar = [np.arange(n) * math.pi / n for _ in range(q - 2)]
    azim = np.arange(n) * 2.0 * math.pi / n
    mesh = np.meshgrid(*polar, azim, indexing="ij")
    angles = [m.ravel() for m in mesh]
    pts = np.ones((q, angles[0].size))
    for i, ang in enumerate(angles[:-1]):
        pts[i] *= np.cos(ang)
        pts[i + 1:] *= np.sin(ang)
    pts[q - 2] *= np.cos(angles[-1])
    pts[q - 1] *= np.sin(angles[-1])
    return pts


@dataclass(frozen=True)
class EllipticityVerdict:
    elliptic: bool
    min_abs_symbol: float
    witness_point: tuple[float, ...] | None = None
    witness_covector: tuple[float, ...] | None = None


def _symbol_table(P: BasicOperator, pts: np.ndarray, xis: np.ndarray) -> np.ndarray:
    """|sigma| on all (point, covector) pairs; shape (N_points, N_covectors)."""
    total = np.zeros((pts.shape[1], xis.shape[1]), dtype=complex)
    for s, (re, im) in P.coeffs.items():
        if sum(s) != P.m:
            continue
        a = evaluate_many((re,), pts)[0]
        if im is not None:
            a = a + 1j * evaluate_many((im,), pts)[0]
        mono = np.prod([xis[k] ** s[k] for k in range(P.q)], axis=0)
        total += np.outer(a, mono)
    return np.abs(total)


def principal_symbol_many(P: BasicOperator, pts: np.ndarray, xis: np.ndarray) -> np.ndarray:
    """sigma at paired columns: point pts[:, i] with covector xis[:, i]."""
    total = np.zeros(pts.shape[1], dtype=complex)
    for s, (re, im) in P.coeffs.items():
        if sum(s) != P.m:
            continue
        a = evaluate_many((re,), pts)[0]
        if im is not None:
            a = a + 1j * evaluate_many((im,), pts)[0]
        total += a * np.prod([xis[k] ** s[k] for k in range(P.q)], axis=0)
    return total


def check_transverse_ellipticity(P: BasicOperator, region: Box, grid_n: int = 17, sphere_n: int = 16,
                                 tol: float = TAU_ELL) -> EllipticityVerdict:
    """Sampled certificate: |sigma| >= tol on a grid of points times a sphere of covectors.

    The first (lexicographic grid order) violating pair is returned as witness.
    """
    if grid_n < 2 or sphere_n < 2:
        raise ValueError("grid_n and sphere_n must be >= 2")
    pts = region.grid(grid_n)
    xis = sphere_points(P.q, sphere_n)
    table = _symbol_table(P, pts, xis)
    bad = np.argwhere(table < tol)
    if bad.size:
        i, j = bad[0]
        return EllipticityVerdict(False, float(table.min()), tuple(float(v) for v in pts[:, i]),
                                 tuple(float(v) for v in xis[:, j]))
    return EllipticityVerdict(True, float(table.min()))


def symbol_matrix(P: BasicOperator, z: Sequence[float]) -> np.ndarray:
    """Symmetric Q with sigma(P)_z(xi) = xi^T Q xi, for real order-2 operators."""
    if P.m != 2 or not P.is_real:
        raise ValueError("quadratic-form symbol needs a real operator of order 2")
    Q = np.zeros((P.q, P.q))
    for s, (re, _) in P.coeffs.items():
        if sum(s) != 2:
            continue
        idx = [k for k in range(P.q) for _ in range(s[k])]
        a = _eval(re, z)
        if idx[0] == idx[1]:
            Q[idx[0], idx[0]] += a
        else:
            Q[idx[0], idx[1]] += a / 2.0
            Q[idx[1], idx[0]] += a / 2.0
    return Q


def elliptic_by_eigenvalues(P: BasicOperator, z: Sequence[float], tol: float = TAU_ELL) -> bool:
    """Exact check for real order-2 operators: the symbol form is definite at z."""
    ev = np.linalg.eigvalsh(symbol_matrix(P, z))
    if P.q == 1:
        return abs(ev[0]) >= tol
    return bool(np.all(ev >= tol) or np.all(ev <= -tol))


class Triangularity(enum.Enum):
    LOWER = "lower"
    UPPER = "upper"
    DIAGONAL = "diagonal"
    NO = "no"

    @property
    def is_triangular(self) -> bool:
        return self is not Triangularity.NO


def one_part_matrix_exprs(P: BasicOperator) -> tuple[tuple[Expression, ...], ...]:
    a = P.first_order_coeffs()
    return tuple(tuple(derivative(a[k], l) for l in range(P.q)) for k in range(P.q))


def one_part_matrix(P: BasicOperator, z: Sequence[float]) -> np.ndarray:
    """Entry (k, l) = d a_k / d y_l at z."""
    flat = [e for row in one_part_matrix_exprs(P) for e in row]
    vals = evaluate_many(flat, np.asarray(z, dtype=float)[:, None])[:, 0]
    return vals.reshape(P.q, P.q)


def classify_triangular(matrices: np.ndarray, tol: float = TAU_TRI) -> Triangularity:
    """Verdict for a stack (N, q, q) of matrices, all of which must share the pattern."""
    M = np.abs(np.asarray(matrices))
    q = M.shape[-1]
    upper_part = M[..., np.triu_indices(q, 1)[0], np.triu_indices(q, 1)[1]]
    lower_part = M[..., np.tril_indices(q, -1)[0], np.tril_indices(q, -1)[1]]
    is_lower = bool(np.all(upper_part < tol))
    is_upper = bool(np.all(lower_part < tol))
    if is_lower and is_upper:
        return Triangularity.DIAGONAL
    if is_lower:
        return Triangularity.LOWER
    if is_upper:
        return Triangularity.UPPER
    return Triangularity.NO


def triangular_one_part(P: BasicOperator, region: Box, grid_n: int = 9, tol: float = TAU_TRI) -> Triangularity:
    pts = region.grid(grid_n)
    flat = [e for row in one_part_matrix_exprs(P) for e in row]
    vals = evaluate_many(flat, pts)  # (q*q, N)
    mats = vals.T.reshape(-1, P.q, P.q)
    return classify_triangular(mats, tol)


def char_matrix(P: BasicOperator, phi: LocalMap, w: Sequence[float], eta: Sequence[float]) -> np.ndarray:
    """Diagonal sigma(P)_w(eta), off-diagonal -a_kl(phi(w))."""
    eta = np.asarray(eta, dtype=float)
    if not np.any(eta != 0.0):
        raise ZeroCovector("the characteristic matrix needs a non-zero covector")
    w = np.asarray(w, dtype=float)
    sigma = principal_symbol(P, w, eta)
    A = one_part_matrix(P, phi(w[:, None])[:, 0])
    L = -A.astype(complex)
    np.fill_diagonal(L, sigma)
    return L


def char_matrix_det(P: BasicOperator, phi: LocalMap, w: Sequence[float], eta: Sequence[float]) -> complex:
    return complex(np.linalg.det(char_matrix(P, phi, w, eta)))


# -- coordinate changes of the first-order part (q = 2) -----------------------

def _hessians(forward: Sequence[Expression], z: np.ndarray) -> np.ndarray:
    """H[k, i, l] = d^2 phi^k / dy_i dy_l at z."""
    q = len(forward)
    exprs = [derivative(derivative(forward[k], i), l) for k in range(q) for i in range(q) for l in range(q)]
    return evaluate_many(exprs, z[:, None])[:, 0].reshape(q, q, q)


def _jac(forward: Sequence[Expression], z: np.ndarray) -> np.ndarray:
    q = len(forward)
    exprs = [derivative(forward[k], l) for k in range(q) for l in range(q)]
    return evaluate_many(exprs, z[:, None])[:, 0].reshape(q, q)


def transformed_one_part(a: Sequence[Expression], forward: Sequence[Expression], z: Sequence[float]) -> np.ndarray:
    """Jacobian of the pushed-forward first-order coefficients b at phi(z), by the closed formula

        B = J A J^-1 + Hterm J^-1,   Hterm[k, l] = sum_i d^2 phi^k/dy_i dy_l * a_i.
    """
    z = np.asarray(z, dtype=float)
    q = len(a)
    J = _jac(forward, z)
    if abs(np.linalg.det(J)) < 1e-14:
        raise SingularJacobian(f"J(phi) is singular at {tuple(z)}")
    A = evaluate_many([derivative(a[k], l) for k in range(q) for l in range(q)], z[:, None])[:, 0].reshape(q, q)
    a_val = evaluate_many(list(a), z[:, None])[:, 0]
    H = _hessians(forward, z)
    Hterm = np.einsum("kil,i->kl", H, a_val)
    Jinv = np.linalg.inv(J)
    return J @ A @ Jinv + Hterm @ Jinv


def _pushed_coeffs(a: Sequence[Expression], phi: LocalMap, yt: np.ndarray) -> np.ndarray:
    """b(yt) = J(phi)(phi^-1(yt)) a(phi^-1(yt)) at the columns of yt."""
    y = phi.apply_inverse(yt)
    J = phi.jacobian_at(y)
    a_val = evaluate_many(list(a), y)
    return np.einsum("nkl,ln->kn", J, a_val)


def pushed_one_part_fd(a: Sequence[Expression], phi: LocalMap, z: Sequence[float], h: float = H_FD) -> np.ndarray:
    """Jacobian of b at phi(z) by Richardson-extrapolated central differences in the new coordinates."""
    z = np.asarray(z, dtype=float)
    q = len(a)
    zt = phi(z[:, None])[:, 0]
    B = np.zeros((q, q))
    for l in range(q):
        e = np.zeros(q)
        e[l] = 1.0

        def central(step):
            pts = np.stack([zt + step * e, zt - step * e], axis=1)
            vals = _pushed_coeffs(a, phi, pts)
            return (vals[:, 0] - vals[:, 1]) / (2.0 * step)

        B[:, l] = (4.0 * central(h / 2.0) - central(h)) / 3.0
    return B


def verify_coordinate_change_rule(a: Sequence[Expression], phi: LocalMap, z: Sequence[float]) -> float:
    """Max-abs gap between the finite-difference push-forward and the closed formula (q = 2)."""
    if len(a) != 2 or phi.q != 2:
        raise ValueError("the coordinate-change identity is implemented for q = 2")
    z = np.asarray(z, dtype=float)
    rhs = transformed_one_part(a, phi.forward, z)
    lhs = pushed_one_part_fd(a, phi, z)
    return float(np.max(np.abs(lhs - rhs)))


def zero_order_cancellation(P_src: BasicOperator, P_dst: BasicOperator, psi: LocalMap, grid_n: int = 9) -> float:
    """max over a grid of dom(psi) of |b0(psi(y)) - a0(y)|."""
    pts = psi.dom.grid(grid_n)
    a0 = evaluate_many((P_src.zero_order_coeff(),), pts)[0]
    b0 = evaluate_many((P_dst.zero_order_coeff(),), psi(pts))[0]
    return float(np.max(np.abs(b0 - a0)))


def describe_operator(P: BasicOperator, region: Box, grid_n: int = 17, sphere_n: int = 16,
                      tol: float = TAU_ELL) -> dict:
    """Summary of every pointwise condition on P over `region`."""
    ell = check_transverse_ellipticity(P, region, grid_n, sphere_n, tol)
    tri = triangular_one_part(P, region, min(grid_n, 9))
    report = {
        "q": P.q,
        "m": P.m,
        "elliptic": ell.elliptic,
        "min_abs_symbol": ell.min_abs_symbol,
        "constant_coeffs": P.has_constant_coefficients(),
        "triangular_1part": tri.is_triangular,
        "triangularity": tri.value,
    }
    if ell.witness_point is not None:
        report["witness"] = {"z": list(ell.witness_point), "xi": list(ell.witness_covector)}
    if P.m == 2 and P.is_real:
        report["elliptic_by_eigenvalues"] = all(
            elliptic_by_eigenvalues(P, region.grid(3)[:, i], tol) for i in range(3 ** P.q))
    return report


def multi_indices(q: int, order: int):
    """All multi-indices of total order exactly `order`, lexicographic."""
    for s in itertools.product(range(order + 1), repeat=q):
        if sum(s) == order:
            yield s


def random_coordinate_change(rng: np.random.Generator, dom: Box | None = None,
                             min_det: float = 0.3) -> LocalMap:
    """phi = L o tau2 o tau1 with tau1 = (y + c z^2, z), tau2 = (y, z + d y^2), L linear.

    Both shears have unit Jacobian determinant, so |det J(phi)| = |det L| >= min_det
    everywhere, and every factor has a closed-form inverse.
    """
    dom = Box.cube(2, -0.5, 0.5) if dom is None else dom
    c, d = rng.uniform(-1.0, 1.0, 2)
    while True:
        L = rng.uniform(-1.5, 1.5, (2, 2))
        if abs(np.linalg.det(L)) >= min_det:
            break
    y1, y2 = coords(2)
    tau1 = (add(y1, mul(const(c), mul(y2, y2))), y2)
    tau1_inv = (sub(y1, mul(const(c), mul(y2, y2))), y2)
    tau2 = (y1, add(y2, mul(const(d), mul(y1, y1))))
    tau2_inv = (y1, sub(y2, mul(const(d), mul(y1, y1))))
    lin = _affine_exprs(L, np.zeros(2))
    lin_inv = _affine_exprs(np.linalg.inv(L), np.zeros(2))
    fwd = tuple(substitute(e, tuple(substitute(t, tau1) for t in tau2)) for e in lin)
    inv = tuple(substitute(e, tuple(substitute(t, lin_inv) for t in tau2_inv)) for e in tau1_inv)
    codom = interval_hull(fwd, dom)
    return LocalMap(dom, codom, fwd, inv, "T", "T", label="phi")


def random_quadratic_change(rng: np.random.Generator) -> tuple[Expression, Expression]:
    """Forward components of a random linear-plus-quadratic map of the plane."""
    y1, y2 = coords(2)
    monos = (y1, y2, mul(y1, y1), mul(y1, y2), mul(y2, y2))
    out = []
    for _ in range(2):
        cs = rng.uniform(-1.0, 1.0, len(monos))
        e: Expression = ZERO
        for cval, mono in zip(cs, monos):
            e = add(e, mul(const(cval), mono))
        out.append(e)
    return tuple(out)


@dataclass(frozen=True)
class TriangularSearch:
    candidates: int
    nonsingular: int
    triangular_found: int
    min_off_diagonal: float


def search_triangularizing_change(a: Sequence[Expression], rng: np.random.Generator, n: int = 1000,
                                  z: Sequence[float] = (0.0, 0.0), tol: float = TAU_TRI,
                                  min_det: float = 1e-6) -> TriangularSearch:
    """Sample linear-quadratic coordinate changes and count those making the
    transformed one-part matrix triangular at z with a nonsingular Jacobian there."""
    z = np.asarray(z, dtype=float)
    nonsingular = found = 0
    best = math.inf
    for _ in range(n):
        fwd = random_quadratic_change(rng)
        J = _jac(fwd, z)
        if abs(np.linalg.det(J)) <= min_det:
            continue
        nonsingular += 1
        B = transformed_one_part(a, fwd, z)
        off = min(abs(B[0, 1]), abs(B[1, 0]))
        best = min(best, off)
        if off < tol:
            found += 1
    return TriangularSearch(n, nonsingular, found, float(best))
