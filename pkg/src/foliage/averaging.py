"""Invariant metrics by averaging: germ Jacobians, closure, Haar mean, transport, gluing."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import schur

from .errors import (
    CoverageGap, FoliageError, OutOfReach, TransportUnavailable, UnknownClosure,
)
from .geom_core import Box, Expression, LocalMap, evaluate_many, parse_expr, to_string
from .geom_core.expr import ZERO, add, const, mul
from .pseudogroup import PseudogroupSpec, Word, apply_word, explore

N_MAX = 10 ** 4
N_QUAD = 64
TAU_GROUP = 1e-9
EPS_FIX = 1e-9


# -- germ group and its closure -------------------------------------------------------------

@dataclass(frozen=True)
class GermGroup:
    chart: str
    z: tuple[float, ...]
    matrices: tuple[np.ndarray, ...]
    words: tuple[Word, ...] = ()


def _mkey(M: np.ndarray, tau: float = TAU_GROUP) -> tuple:
    return tuple(np.round(np.asarray(M).ravel() / tau).astype(np.int64).tolist())


def germ_jacobian_group(H: PseudogroupSpec, z: Sequence[float], chart: str | None = None, max_len: int = 4,
                        eps_fix: float = EPS_FIX) -> GermGroup:
    """Jacobians at z of the words returning z to itself (within eps_fix), deduplicated at 1e-9."""
    z = np.asarray(z, dtype=float)
    chart = chart or H.chart_of(z)
    if chart is None:
        raise ValueError(f"{tuple(z)} lies in no chart box")
    cidx = H.chart_index[chart]
    mats, words, seen = [], [], set()
    for level in explore(H, [chart], z[:, None], max_len, track_jacobian=True, dedup_jacobian=True):
        d = np.linalg.norm(level.pts - z[:, None], axis=0)
        for i in np.nonzero((level.chart == cidx) & (d < eps_fix))[0]:
            k = _mkey(level.jac[i])
            if k not in seen:
                seen.add(k)
                mats.append(level.jac[i].copy())
                words.append(level.words[i])
    return GermGroup(chart, tuple(float(v) for v in z), tuple(mats), tuple(words))


@dataclass(frozen=True)
class ClosureClass:
    """kind is "finite", "torus" or "unknown".

    finite: `elements` lists the whole group. torus: `frame` is an orthogonal
    matrix whose consecutive column pairs `blocks` carry the rotations, and
    `angles[g][b]` is the angle of generator g on block b.
    """

    kind: str
    elements: tuple[np.ndarray, ...] = ()
    frame: np.ndarray | None = None
    blocks: tuple[tuple[int, int], ...] = ()
    angles: tuple[tuple[float, ...], ...] = ()
    reason: str = ""

    @property
    def order(self) -> int | None:
        return len(self.elements) if self.kind == "finite" else None

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "finite":
            out["order"] = len(self.elements)
        if self.kind == "torus":
            out["blocks"] = [list(b) for b in self.blocks]
            out["angles"] = [list(a) for a in self.angles]
            out["frame"] = self.frame.tolist()
        if self.reason:
            out["reason"] = self.reason
        return out


def _finite_closure(gens: Sequence[np.ndarray], n_max: int) -> list[np.ndarray] | None:
    q = gens[0].shape[0]
    ident = np.eye(q)
    table = {_mkey(ident): ident}
    frontier = [ident]
    while frontier:
        nxt = []
        for e in frontier:
            for g in gens:
                p = e @ g
                k = _mkey(p)
                if k not in table:
                    table[k] = p
                    nxt.append(p)
                    if len(table) > n_max:
                        return None
        frontier = nxt
    return list(table.values())


def _torus_frame(gens: Sequence[np.ndarray], rng: np.random.Generator):
    q = gens[0].shape[0]
    for g in gens:
        if np.max(np.abs(g.T @ g - np.eye(q))) > TAU_GROUP:
            return None, "a generator is not orthogonal"
    for g, h in itertools.combinations(gens, 2):
        if np.max(np.abs(g @ h - h @ g)) > TAU_GROUP:
            return None, "generators do not commute"
    S = sum(c * (g - g.T) / 2.0 for c, g in zip(rng.uniform(0.5, 1.5, len(gens)), gens))
    T, Z = schur(S, output="real")
    blocks, singles, i = [], [], 0
    while i < q:
        if i + 1 < q and abs(T[i + 1, i]) > 1e-12:
            blocks.append((i, i + 1))
            i += 2
        else:
            singles.append(i)
            i += 1
    angles = []
    for g in gens:
        G = Z.T @ g @ Z
        mask = np.ones((q, q), dtype=bool)
        for a, b in blocks:
            mask[a:b + 1, a:b + 1] = False
        for s in singles:
            mask[s, s] = False
        if np.any(np.abs(G[mask]) > TAU_GROUP):
            return None, "generators share no rotation frame"
        if any(abs(G[s, s] - 1.0) > TAU_GROUP for s in singles):
            return None, "a fixed direction is reversed"
        row = []
        for a, b in blocks:
            B = G[a:b + 1, a:b + 1]
            if abs(B[0, 0] - B[1, 1]) > TAU_GROUP or abs(B[0, 1] + B[1, 0]) > TAU_GROUP:
                return None, "a block is not a rotation"
            row.append(math.atan2(B[1, 0], B[0, 0]))
        angles.append(tuple(row))
    return (Z, tuple(blocks), tuple(angles)), ""


def classify_closure(G: GermGroup | Sequence[np.ndarray], n_max: int = N_MAX,
                     rng: np.random.Generator | None = None) -> ClosureClass:
    """Finite if multiplication closes within n_max elements, else a torus of commuting
    rotations in a common orthonormal frame, else unknown."""
    mats = list(G.matrices if isinstance(G, GermGroup) else G)
    if not mats:
        raise ValueError("empty generator list")
    gens = []
    for M in mats:
        M = np.asarray(M, dtype=float)
        gens += [M, np.linalg.inv(M)]
    elems = _finite_closure(gens, n_max)
    if elems is not None:
        elems.sort(key=_mkey)
        return ClosureClass("finite", tuple(elems))
    rng = np.random.default_rng(0) if rng is None else rng
    torus, why = _torus_frame([np.asarray(M, dtype=float) for M in mats], rng)
    if torus is not None:
        Z, blocks, angles = torus
        if blocks:
            return ClosureClass("torus", frame=Z, blocks=blocks, angles=angles)
        why = "no rotation block found"
    return ClosureClass("unknown", reason=f"closure exceeds {n_max} elements and {why}")


def _fsum_mean(mats: Sequence[np.ndarray]) -> np.ndarray:
    stack = np.asarray(mats)
    q = stack.shape[1]
    out = np.empty((q, q))
    for i in range(q):
        for j in range(q):
            out[i, j] = math.fsum(stack[:, i, j]) / len(stack)
    return out


def haar_average(C: ClosureClass, base: np.ndarray, n_quad: int = N_QUAD) -> np.ndarray:
    """Mean of gamma^T base gamma over the closure group."""
    base = np.asarray(base, dtype=float)
    if np.max(np.abs(base - base.T)) > 0 or np.min(np.linalg.eigvalsh(base)) <= 0:
        raise ValueError("base inner product must be symmetric positive definite")
    if C.kind == "finite":
        g = _fsum_mean([E.T @ base @ E for E in C.elements])
    elif C.kind == "torus":
        # the full block torus contains the closure; averaging over it is the Haar
        # mean of the closure whenever the angles are rationally independent
        Z = C.frame
        local = Z.T @ base @ Z
        thetas = 2.0 * math.pi * np.arange(n_quad) / n_quad
        terms = []
        q = base.shape[0]
        for combo in itertools.product(thetas, repeat=len(C.blocks)):
            R = np.eye(q)
            for (a, b), t in zip(C.blocks, combo):
                c, s = math.cos(t), math.sin(t)
                R[a, a], R[a, b], R[b, a], R[b, b] = c, -s, s, c
            terms.append(R.T @ local @ R)
        g = Z @ _fsum_mean(terms) @ Z.T
    else:
        raise UnknownClosure(C.reason or "closure of the germ group is not recognised")
    return 0.5 * (g + g.T)


# -- metric fields ------------------------------------------------------------------------

class MetricField:
    """Point -> SPD matrix on chart points. evaluate(chart, pts) returns (N, q, q)."""

    q: int

    def evaluate(self, chart: str, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def at(self, chart: str, y: Sequence[float]) -> np.ndarray:
        return self.evaluate(chart, np.asarray(y, dtype=float)[:, None])[0]


@dataclass
class ConstantMetric(MetricField):
    chart: str
    region: Box
    value: np.ndarray

    @property
    def q(self) -> int:
        return self.region.dim

    def evaluate(self, chart, pts):
        pts = np.atleast_2d(pts)
        return np.broadcast_to(self.value, (pts.shape[1],) + self.value.shape).copy()

    def to_json(self) -> dict:
        return {"chart": self.chart, "region": self.region.to_json(), "kind": "constant",
                "values": np.asarray(self.value).tolist()}


@dataclass
class FrameMetric(MetricField):
    """g(w) = J_F(w)^T M J_F(w): a constant form M read through a frame F to flat coordinates."""

    chart: str
    region: Box
    frame: LocalMap
    flat_value: np.ndarray

    @property
    def q(self) -> int:
        return self.region.dim

    def evaluate(self, chart, pts):
        J = self.frame.jacobian_at(np.atleast_2d(pts))
        return np.einsum("nki,kl,nlj->nij", J, self.flat_value, J)

    def entry_exprs(self):
        J = self.frame.jacobian_exprs
        q = self.q
        rows = []
        for i in range(q):
            row = []
            for j in range(q):
                e = ZERO
                for k in range(q):
                    for l in range(q):
                        if self.flat_value[k, l] != 0.0:
                            e = add(e, mul(mul(J[k][i], const(float(self.flat_value[k, l]))), J[l][j]))
                row.append(e)
            rows.append(row)
        return rows

    def to_json(self) -> dict:
        return {"chart": self.chart, "region": self.region.to_json(), "kind": "expr",
                "values": [[to_string(e) for e in row] for row in self.entry_exprs()]}


@dataclass
class ExprMetric(MetricField):
    """Entries given as expressions in the chart coordinates."""

    chart: str
    region: Box
    entries: tuple[tuple[Expression, ...], ...]

    @property
    def q(self) -> int:
        return self.region.dim

    def evaluate(self, chart, pts):
        pts = np.atleast_2d(pts)
        flat = [e for row in self.entries for e in row]
        vals = evaluate_many(flat, pts)
        return vals.T.reshape(pts.shape[1], self.q, self.q)

    def to_json(self) -> dict:
        return {"chart": self.chart, "region": self.region.to_json(), "kind": "expr",
                "values": [[to_string(e) for e in row] for row in self.entries]}


def metric_from_json(data: dict) -> MetricField:
    region = Box.from_json(data["region"])
    chart = data.get("chart", "T")
    if data["kind"] == "constant":
        return ConstantMetric(chart, region, np.asarray(data["values"], dtype=float))
    if data["kind"] == "expr":
        entries = tuple(tuple(parse_expr(s, region.dim) for s in row) for row in data["values"])
        return ExprMetric(chart, region, entries)
    raise ValueError(f"cannot rebuild a metric of kind {data['kind']!r}")


@dataclass
class GluedMetric(MetricField):
    """Pullbacks h* g_O of the transported field through words h landing in its region.

    The first covering word in `cover_words` order is used; points no word covers
    trigger a breadth-first search of length <= max_len whose result is appended.
    """

    local: MetricField
    region: Box
    chart: str
    H: PseudogroupSpec
    cover_words: list[Word] = field(default_factory=list)
    max_len: int = 8
    extend: bool = True

    @property
    def q(self) -> int:
        return self.region.dim

    def _pullback(self, word: Word, chart: str, pts: np.ndarray):
        """(mask of points carried into the region, pulled-back metric there)."""
        n = pts.shape[1]
        if not word:
            if chart != self.chart:
                return np.zeros(n, dtype=bool), None
            ok = self.region.contains_points(pts)
            g = np.zeros((n, self.q, self.q))
            if ok.any():
                g[ok] = self.local.evaluate(self.chart, pts[:, ok])
            return ok, g
        ok, end, img, J = apply_word(self.H, word, chart, pts, track_jacobian=True)
        if end != self.chart:
            return np.zeros(n, dtype=bool), None
        ok = ok & self.region.contains_points(img)
        g = np.zeros((n, self.q, self.q))
        if ok.any():
            g[ok] = np.einsum("nki,nkl,nlj->nij", J[ok], self.local.evaluate(self.chart, img[:, ok]), J[ok])
        return ok, g

    def covering(self, chart: str, pts: np.ndarray) -> list[tuple[Word, np.ndarray, np.ndarray]]:
        """(word, mask, pulled-back metric) for every cover word reaching the region."""
        out = []
        for w in self.cover_words:
            ok, g = self._pullback(w, chart, pts)
            if ok.any():
                out.append((w, ok, g))
        return out

    def _fill(self, words, chart, pts, result, todo):
        for w in words:
            if not todo.any():
                return
            idx = np.nonzero(todo)[0]
            ok, g = self._pullback(w, chart, pts[:, idx])
            if ok.any():
                result[idx[ok]] = g[ok]
                todo[idx[ok]] = False

    def evaluate(self, chart, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        n = pts.shape[1]
        result = np.full((n, self.q, self.q), np.nan)
        todo = np.ones(n, dtype=bool)
        self._fill(self.cover_words, chart, pts, result, todo)
        if todo.any() and self.extend:
            idx = np.nonzero(todo)[0]
            found = search_cover_words(self.H, [chart] * idx.size, pts[:, idx], self.chart,
                                       self.region, self.max_len, per_point=1)
            new = [w for w in found if w not in self.cover_words]
            self.cover_words.extend(new)
            self._fill(new, chart, pts, result, todo)
        if todo.any():
            raise CoverageGap([(chart, tuple(float(v) for v in pts[:, i])) for i in np.nonzero(todo)[0]])
        return result


def search_cover_words(H: PseudogroupSpec, charts: Sequence[str], pts: np.ndarray, target_chart: str,
                       region: Box, max_len: int, per_point: int = 2) -> list[Word]:
    """Words (deterministic discovery order) carrying each point into `region` of `target_chart`."""
    t = H.chart_index[target_chart]
    found: list[Word] = []
    counts = np.zeros(pts.shape[1], dtype=np.int64)
    for level in explore(H, charts, pts, max_len):
        hit = (level.chart == t) & region.contains_points(level.pts)
        for i in np.nonzero(hit)[0]:
            s = level.src[i]
            if counts[s] < per_point:
                counts[s] += 1
                if level.words[i] not in found:
                    found.append(level.words[i])
        level.keep = counts[level.src] < per_point
        if np.all(counts >= per_point):
            break
    return found


# -- transport, gluing, verification ---------------------------------------------------------

def _has_translations(H: PseudogroupSpec, chart: str) -> bool:
    for g in H.generators:
        h = g.map
        if h.chart_src == chart and h.chart_dst == chart and h.is_affine():
            J = h.jacobian_at(h.dom.center[:, None])[0]
            if np.array_equal(J, np.eye(h.q)):
                return True
    return False


def transport_reach(H: PseudogroupSpec, chart: str, eps: float) -> Box:
    return H.chart(chart).box.shrink(2.0 * eps)


def transport_metric(g_z: np.ndarray, H: PseudogroupSpec, chart: str, z: Sequence[float],
                     region: Box | None = None, eps: float = 0.01) -> MetricField:
    """Carry g_z from z to every w of `region` along the chart's translations.

    The translation taking w to z is exact in the chart's flat frame F (identity
    unless H declares one), so g|_w = J_F(w)^T J_{F^-1}(F(z))^T g_z J_{F^-1}(F(z)) J_F(w).
    """
    reach = transport_reach(H, chart, eps)
    region = reach if region is None else region
    if region.dim != reach.dim or not reach.contains_box(region, tol=0.0):
        raise OutOfReach(f"region {region} leaves the transport cube {reach}")
    g_z = np.asarray(g_z, dtype=float)
    frame = H.frames.get(chart)
    if frame is None:
        if not _has_translations(H, chart):
            raise TransportUnavailable(f"chart {chart!r} has no translation generators and no flat frame")
        return ConstantMetric(chart, region, g_z.copy())
    z = np.asarray(z, dtype=float)
    Jinv = np.linalg.inv(frame.jacobian_at(z[:, None])[0])
    return FrameMetric(chart, region, frame, Jinv.T @ g_z @ Jinv)


def glue_metric(g_O: MetricField, H: PseudogroupSpec, cover_words: Sequence[Word],
                probes: Sequence[tuple[str, Sequence[float]]], chart: str | None = None,
                region: Box | None = None) -> tuple[GluedMetric, float]:
    """Global field from the pullbacks of g_O and the largest pullback disagreement on probes."""
    chart = chart or g_O.chart
    region = region or g_O.region
    glued = GluedMetric(g_O, region, chart, H, list(cover_words), extend=False)
    uncovered, residual = [], 0.0
    by_chart: dict[str, list[int]] = {}
    for i, (c, _) in enumerate(probes):
        by_chart.setdefault(c, []).append(i)
    for c, idx in by_chart.items():
        pts = np.array([probes[i][1] for i in idx], dtype=float).T
        cover = glued.covering(c, pts)
        hit = np.zeros(pts.shape[1], dtype=bool)
        first = np.full((pts.shape[1], H.q, H.q), np.nan)
        for _, ok, g in cover:
            new = ok & ~hit
            first[new] = g[new]
            both = ok & hit
            if both.any():
                residual = max(residual, float(np.max(np.abs(g[both] - first[both]))))
            hit |= ok
        uncovered += [(c, tuple(float(v) for v in pts[:, j])) for j in np.nonzero(~hit)[0]]
    if uncovered:
        raise CoverageGap(uncovered)
    return glued, residual


def verify_invariance(g: MetricField, H: PseudogroupSpec, sample_n: int = 50,
                      rng: np.random.Generator | None = None, generators: Sequence[int] | None = None) -> float:
    """max over generators h and sampled z of |J(h)(z)^T g(h(z)) J(h)(z) - g(z)|."""
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    ids = range(len(H.generators)) if generators is None else generators
    for i in ids:
        h = H.generators[i].map
        pts = np.concatenate([h.dom.center[:, None], h.dom.sample(rng, sample_n - 1)], axis=1)
        img = h(pts)
        J = h.jacobian_at(pts)
        pulled = np.einsum("nki,nkl,nlj->nij", J, g.evaluate(h.chart_dst, img), J)
        worst = max(worst, float(np.max(np.abs(pulled - g.evaluate(h.chart_src, pts)))))
    return worst


# -- the whole pipeline -----------------------------------------------------------------------

def chart_probes(H: PseudogroupSpec, n: int) -> list[tuple[str, tuple[float, ...]]]:
    out = []
    for c in H.charts:
        for col in c.box.grid(n).T:
            out.append((c.id, tuple(float(v) for v in col)))
    return out


@dataclass
class MetricReport:
    scenario: str
    stage: str                      # last completed stage, or "done"
    error: str = ""
    germ_order: int = 0
    closure: ClosureClass | None = None
    g_z: np.ndarray | None = None
    local: MetricField | None = None
    metric: GluedMetric | None = None
    cover_words: list[Word] = field(default_factory=list)
    overlap_residual: float = math.nan
    invariance_residual: float = math.nan
    min_eigenvalue: float = math.nan

    @property
    def ok(self) -> bool:
        return self.stage == "done"

    def passed(self, overlap_tol: float = 1e-10, invariance_tol: float = 1e-8) -> bool:
        return (self.ok and self.overlap_residual < overlap_tol and self.invariance_residual < invariance_tol
                and self.min_eigenvalue > 0)

    def to_json(self, probe_n: int = 3) -> dict:
        out = {"scenario": self.scenario, "stage": self.stage, "ok": self.ok, "germ_group_size": self.germ_order}
        if self.error:
            out["error"] = self.error
        if self.closure is not None:
            out["closure"] = self.closure.to_json()
        if self.g_z is not None:
            out["g_z"] = self.g_z.tolist()
        if self.local is not None:
            out["local_metric"] = self.local.to_json()
        if self.metric is not None:
            H = self.metric.H
            grids = []
            for c in H.charts:
                pts = c.box.grid(probe_n)
                vals = self.metric.evaluate(c.id, pts)
                grids.append({"chart": c.id, "points": pts.T.tolist(), "values": vals.tolist()})
            out["metric"] = {"region": [c.box.to_json() for c in H.charts], "kind": "grid", "values": grids}
            out["cover_words"] = [list(w) for w in self.cover_words]
        for key in ("overlap_residual", "invariance_residual", "min_eigenvalue"):
            v = getattr(self, key)
            if not math.isnan(v):
                out[key] = v
        return out


def build_metric(scenario, base: np.ndarray | None = None, max_len: int = 4, eps: float = 0.01,
                 eps_fix: float = EPS_FIX, probe_n: int = 5, sample_n: int = 50, cover_len: int = 12,
                 rng: np.random.Generator | None = None) -> MetricReport:
    """Germ group -> closure -> Haar average -> transport -> cover -> glue -> verify.

    Stops at the first stage that cannot be carried out and records why.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    H = scenario.H
    chart, z = scenario.base_point
    base = scenario.base() if base is None else np.asarray(base, dtype=float)
    rep = MetricReport(scenario.name, "start")
    try:
        G = germ_jacobian_group(H, z, chart, max_len, eps_fix)
        rep.germ_order, rep.stage = len(G.matrices), "germ_group"
        rep.closure = classify_closure(G, rng=rng)
        rep.stage = "closure"
        rep.g_z = haar_average(rep.closure, base)
        rep.stage = "average"
        rep.local = transport_metric(rep.g_z, H, chart, z, eps=eps)
        rep.stage = "transport"
        probes = chart_probes(H, probe_n)
        words: list[Word] = [()]
        for c in H.charts:
            sel = [p for p in probes if p[0] == c.id]
            pts = np.array([p[1] for p in sel]).T
            for w in search_cover_words(H, [c.id] * pts.shape[1], pts, chart, rep.local.region, cover_len):
                if w not in words:
                    words.append(w)
        rep.cover_words = words
        rep.metric, rep.overlap_residual = glue_metric(rep.local, H, words, probes)
        rep.metric.extend, rep.metric.max_len = True, cover_len
        rep.stage = "glue"
        rep.invariance_residual = verify_invariance(rep.metric, H, sample_n, rng)
        eigs = [np.linalg.eigvalsh(rep.metric.evaluate(c, np.array([p]).T)[0]).min() for c, p in probes]
        rep.min_eigenvalue = float(min(eigs))
        rep.stage = "done"
    except FoliageError as exc:
        rep.error = f"{type(exc).__name__}: {exc}"
    return rep
