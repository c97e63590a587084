"""Finitely presented pseudogroups on a transversal and the checks run on them.

A word is a tuple of signed 1-based generator indices, applied left to right:
(2, -1) means "generator 2, then the inverse of generator 1". Breadth-first
enumerations visit letters in the order 1, -1, 2, -2, ... so the first word
found at each length is the lexicographically smallest one.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyDomain, OrbitOverflow, WordNotFound
from .geom_core import (
    Box, Expression, LocalMap, coords, compose_maps, evaluate_many, parse_expr, simplify, substitute, to_string,
)
from .geom_core.expr import Const, mul, const, sin
from .geom_core.expr import sub as expr_sub
from .geom_core.maps import interval_hull
from .operators import BasicOperator, Part, apply_operator_parts, principal_symbol_many

TAU_ORB = 1e-6
FRONTIER_CAP = 10 ** 6
TAU_EQ = 1e-9

Word = tuple[int, ...]


@dataclass(frozen=True)
class Chart:
    id: str
    box: Box
    ambient: Box


@dataclass(frozen=True)
class Generator:
    """A generator `map` together with an extension `ext` to a larger box."""

    map: LocalMap
    ext: LocalMap


@dataclass(frozen=True, eq=False)
class PseudogroupSpec:
    charts: tuple[Chart, ...]
    generators: tuple[Generator, ...]
    frames: Mapping[str, LocalMap] = field(default_factory=dict)
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "charts", tuple(self.charts))
        object.__setattr__(self, "generators", tuple(self.generators))
        ids = [c.id for c in self.charts]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate chart ids in {ids}")
        for g in self.generators:
            for label in (g.map.chart_src, g.map.chart_dst):
                if label not in ids:
                    raise ValueError(f"generator refers to unknown chart {label!r}")

    @property
    def q(self) -> int:
        return self.charts[0].box.dim

    def chart(self, cid: str) -> Chart:
        for c in self.charts:
            if c.id == cid:
                return c
        raise KeyError(cid)

    @cached_property
    def chart_index(self) -> dict[str, int]:
        return {c.id: i for i, c in enumerate(self.charts)}

    def chart_of(self, y: Sequence[float]) -> str | None:
        """First chart whose box contains y."""
        for c in self.charts:
            if c.box.contains(y):
                return c.id
        return None

    @cached_property
    def letters(self) -> tuple[int, ...]:
        out = []
        for i in range(1, len(self.generators) + 1):
            out += [i, -i]
        return tuple(out)

    def letter_map(self, letter: int) -> LocalMap:
        return self._letter_maps[letter]

    @cached_property
    def _letter_maps(self) -> dict[int, LocalMap]:
        out = {}
        for i, g in enumerate(self.generators, start=1):
            out[i] = g.map
            out[-i] = g.map.inverse_map
        return out

    def with_generators(self, extra: Sequence[Generator]) -> "PseudogroupSpec":
        return PseudogroupSpec(self.charts, self.generators + tuple(extra), dict(self.frames), dict(self.metadata))

    # -- JSON --
    def to_json(self) -> dict:
        data = {
            "q": self.q,
            "charts": [{"id": c.id, "box": c.box.to_json(), "ambient": c.ambient.to_json()} for c in self.charts],
            "generators": [],
        }
        for g in self.generators:
            item = {
                "src": g.map.chart_src,
                "dst": g.map.chart_dst,
                "forward": [to_string(e) for e in g.map.forward],
                "inverse": [to_string(e) for e in g.map.inverse],
                "dom": g.map.dom.to_json(),
                "dom_ext": g.ext.dom.to_json(),
                "codom": g.map.codom.to_json(),
                "codom_ext": g.ext.codom.to_json(),
            }
            if g.map.label:
                item["label"] = g.map.label
            data["generators"].append(item)
        if self.frames:
            data["frames"] = {cid: _map_json(f) for cid, f in sorted(self.frames.items())}
        if self.metadata:
            data["metadata"] = dict(self.metadata)
        return data

    @classmethod
    def from_json(cls, data: dict) -> "PseudogroupSpec":
        q = int(data["q"])
        charts = tuple(Chart(c["id"], Box.from_json(c["box"]), Box.from_json(c.get("ambient", c["box"])))
                       for c in data["charts"])
        gens = []
        for item in data["generators"]:
            fwd = tuple(parse_expr(s, q) for s in item["forward"])
            inv = tuple(parse_expr(s, q) for s in item["inverse"])
            dom = Box.from_json(item["dom"])
            dom_ext = Box.from_json(item.get("dom_ext", item["dom"]))
            codom = Box.from_json(item["codom"]) if "codom" in item else _default_codom(fwd, dom, charts, item["dst"])
            codom_ext = (Box.from_json(item["codom_ext"]) if "codom_ext" in item
                         else _default_codom(fwd, dom_ext, charts, item["dst"], ambient=True))
            label = item.get("label", "")
            g = LocalMap(dom, codom, fwd, inv, item["src"], item["dst"], label=label)
            ext = LocalMap(dom_ext, codom_ext, fwd, inv, item["src"], item["dst"], label=label)
            gens.append(Generator(g, ext))
        frames = {cid: _map_from_json(f, q) for cid, f in data.get("frames", {}).items()}
        return cls(charts, tuple(gens), frames, dict(data.get("metadata", {})))


def _map_json(h: LocalMap) -> dict:
    d = h.to_json()
    d.pop("label", None)
    return d


def _map_from_json(d: dict, q: int) -> LocalMap:
    return LocalMap(Box.from_json(d["dom"]), Box.from_json(d["codom"]),
                    tuple(parse_expr(s, q) for s in d["forward"]),
                    tuple(parse_expr(s, q) for s in d["inverse"]),
                    d.get("src", "T"), d.get("dst", "T"), label=d.get("label", ""))


def _default_codom(fwd, dom: Box, charts, dst: str, ambient: bool = False) -> Box:
    hull = None
    try:
        hull = interval_hull(fwd, dom)
    except (ArithmeticError, ValueError):
        pass
    if hull is not None:
        return hull
    chart = next(c for c in charts if c.id == dst)
    return chart.ambient if ambient else chart.box


def make_generator(g: LocalMap, dom_ext: Box, codom_ext: Box | None = None) -> Generator:
    """Pair g with the same analytic formula on the larger box dom_ext."""
    if codom_ext is None:
        codom_ext = interval_hull(g.forward, dom_ext) or g.codom
    return Generator(g, LocalMap(dom_ext, codom_ext, g.forward, g.inverse, g.chart_src, g.chart_dst, label=g.label))


# -- words ------------------------------------------------------------------------

def realize_word(H: PseudogroupSpec, word: Sequence[int]) -> LocalMap:
    """Left-to-right composition of the letters of `word`."""
    word = tuple(int(x) for x in word)
    if not word:
        raise ValueError("the empty word has no realization; use identity_map on a chart")
    for x in word:
        if x == 0 or abs(x) > len(H.generators):
            raise ValueError(f"letter {x} out of range for {len(H.generators)} generators")
    h = H.letter_map(word[0])
    for x in word[1:]:
        h = compose_maps(H.letter_map(x), h)
    return h


def inverse_word(word: Sequence[int]) -> Word:
    return tuple(-x for x in reversed(word))


def reduce_word(word: Sequence[int]) -> Word:
    out: list[int] = []
    for x in word:
        if out and out[-1] == -x:
            out.pop()
        else:
            out.append(x)
    return tuple(out)


def apply_word(H: PseudogroupSpec, word: Sequence[int], chart: str, pts: np.ndarray,
               track_jacobian: bool = False):
    """Pointwise application of `word` to the columns of `pts` (chart `chart`).

    Returns (valid mask, chart id or None, images, Jacobians or None). A point is
    valid when every intermediate image lies in the domain of the next letter.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    n = pts.shape[1]
    valid = np.ones(n, dtype=bool)
    cur = pts.copy()
    jac = np.broadcast_to(np.eye(H.q), (n, H.q, H.q)).copy() if track_jacobian else None
    for x in word:
        h = H.letter_map(x)
        if h.chart_src != chart:
            return np.zeros(n, dtype=bool), None, cur, jac
        valid &= h.dom.contains_points(cur)
        if not valid.any():
            return valid, None, cur, jac
        if track_jacobian:
            jac[valid] = h.jacobian_at(cur[:, valid]) @ jac[valid]
        img = cur.copy()
        img[:, valid] = h(cur[:, valid])
        cur = img
        chart = h.chart_dst
    return valid, chart, cur, jac


# -- breadth-first exploration ------------------------------------------------------

@dataclass
class Level:
    """All states first reached with words of one length.

    A consumer may set `keep` to a boolean mask before resuming the generator;
    states outside the mask are not expanded further.
    """

    length: int
    src: np.ndarray       # (N,) index of the starting point
    chart: np.ndarray     # (N,) chart index
    pts: np.ndarray       # (q, N)
    jac: np.ndarray | None  # (N, q, q)
    words: list[Word]
    keep: np.ndarray | None = None


def _pruned(level: Level) -> Level:
    if level.keep is None:
        return level
    m = np.asarray(level.keep, dtype=bool)
    return Level(level.length, level.src[m], level.chart[m], level.pts[:, m],
                 None if level.jac is None else level.jac[m],
                 [w for w, k in zip(level.words, m) if k])


def _keys(level_src, chart, pts, jac, tau, with_src, with_jac):
    cols = [chart[:, None]]
    if with_src:
        cols.insert(0, level_src[:, None])
    cols.append(np.round(pts.T / tau).astype(np.int64))
    if with_jac and jac is not None:
        cols.append(np.round(jac.reshape(len(chart), -1) / 1e-9).astype(np.int64))
    return np.concatenate(cols, axis=1)


def explore(H: PseudogroupSpec, charts: Sequence[str], pts: np.ndarray, max_len: int,
            track_jacobian: bool = False, dedup_jacobian: bool = False, per_source: bool = True,
            tau: float = TAU_ORB, cap: int = FRONTIER_CAP) -> Iterator[Level]:
    """Breadth-first enumeration of images of the start points under words.

    States are deduplicated at resolution `tau` (and on the Jacobian at 1e-9 when
    `dedup_jacobian`); the first, hence shortest and lexicographically smallest,
    word reaching a state is kept. Yields one Level per length, starting at 0.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    n = pts.shape[1]
    cidx = np.array([H.chart_index[c] for c in charts], dtype=np.int64)
    jac = np.broadcast_to(np.eye(H.q), (n, H.q, H.q)).copy() if track_jacobian else None
    level = Level(0, np.arange(n), cidx, pts.copy(), jac, [()] * n)
    seen = set(map(tuple, _keys(level.src, level.chart, level.pts, jac, tau, per_source, dedup_jacobian).tolist()))
    yield level
    letters = [(li, x, H.letter_map(x), H.chart_index[H.letter_map(x).chart_src],
                H.chart_index[H.letter_map(x).chart_dst]) for li, x in enumerate(H.letters)]
    nl = len(letters)
    for length in range(1, max_len + 1):
        if level.pts.shape[1] == 0:
            return
        order, parents, letter_ids, new_pts, new_chart, new_jac = [], [], [], [], [], []
        for li, x, h, src_c, dst_c in letters:
            mask = (level.chart == src_c) & h.dom.contains_points(level.pts)
            idx = np.nonzero(mask)[0]
            if idx.size == 0:
                continue
            sub = level.pts[:, idx]
            new_pts.append(h(sub))
            new_chart.append(np.full(idx.size, dst_c, dtype=np.int64))
            parents.append(idx)
            letter_ids.append(np.full(idx.size, li, dtype=np.int64))
            order.append(idx * nl + li)
            if track_jacobian:
                new_jac.append(h.jacobian_at(sub) @ level.jac[idx])
        if not parents:
            return
        order = np.concatenate(order)
        perm = np.argsort(order, kind="stable")
        parent = np.concatenate(parents)[perm]
        lid = np.concatenate(letter_ids)[perm]
        cand_pts = np.concatenate(new_pts, axis=1)[:, perm]
        cand_chart = np.concatenate(new_chart)[perm]
        cand_jac = np.concatenate(new_jac)[perm] if track_jacobian else None
        cand_src = level.src[parent]
        keys = _keys(cand_src, cand_chart, cand_pts, cand_jac, tau, per_source, dedup_jacobian).tolist()
        keep = []
        for i, k in enumerate(keys):
            k = tuple(k)
            if k not in seen:
                seen.add(k)
                keep.append(i)
        if len(keep) > cap:
            raise OrbitOverflow(f"frontier of {len(keep)} states at length {length} exceeds cap {cap}")
        keep = np.asarray(keep, dtype=np.int64)
        words = [level.words[parent[i]] + (H.letters[lid[i]],) for i in keep]
        level = Level(length, cand_src[keep], cand_chart[keep], cand_pts[:, keep],
                      cand_jac[keep] if track_jacobian else None, words)
        yield level
        level = _pruned(level)


# -- orbits ---------------------------------------------------------------------------

@dataclass
class Orbit:
    charts: list[str]
    points: np.ndarray   # (q, N)

    def in_chart(self, cid: str) -> np.ndarray:
        mask = np.array([c == cid for c in self.charts], dtype=bool)
        return self.points[:, mask]


def orbit(H: PseudogroupSpec, z: Sequence[float], max_len: int, chart: str | None = None,
          tau: float = TAU_ORB) -> Orbit:
    z = np.asarray(z, dtype=float)
    chart = chart or H.chart_of(z)
    if chart is None:
        raise ValueError(f"{tuple(z)} lies in no chart box")
    charts, pts = [], []
    for level in explore(H, [chart], z[:, None], max_len, tau=tau):
        charts += [H.charts[i].id for i in level.chart]
        pts.append(level.pts)
    return Orbit(charts, np.concatenate(pts, axis=1))


def coverage_gap(orb: Orbit, region: Box, chart: str | None = None, probe_n: int = 101) -> float:
    """Max over a probe grid of `region` of the distance to the nearest orbit point."""
    probes = region.grid(probe_n)
    pts = orb.points if chart is None else orb.in_chart(chart)
    if pts.shape[1] == 0:
        return math.inf
    dist, _ = cKDTree(pts.T).query(probes.T)
    return float(np.max(dist))


def find_word(H: PseudogroupSpec, z: Sequence[float], w: Sequence[float], eps: float, max_len: int,
              chart: str | None = None, target_chart: str | None = None) -> Word:
    """Shortest word (ties: lexicographic) moving z to within eps of w."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    chart = chart or H.chart_of(z)
    target_chart = target_chart or H.chart_of(w)
    if chart is None:
        raise ValueError(f"start point {tuple(z)} lies in no chart box")
    if target_chart is None:
        raise WordNotFound(f"{tuple(w)} lies in no chart box")
    t = H.chart_index[target_chart]
    for level in explore(H, [chart], z[:, None], max_len):
        d = np.linalg.norm(level.pts - w[:, None], axis=0)
        hit = np.nonzero((level.chart == t) & (d < eps))[0]
        if hit.size:
            return level.words[hit[0]]
    raise WordNotFound(f"no word of length <= {max_len} moves {tuple(z)} within {eps} of {tuple(w)}")


# -- residual checks -----------------------------------------------------------------

def default_test_functions(q: int) -> list[Expression]:
    ys = coords(q)
    fs: list[Expression] = list(ys)
    fs += [mul(y, y) for y in ys]
    fs += [mul(ys[k], ys[l]) for k in range(q) for l in range(k + 1, q)]
    fs += [sin(mul(const(math.pi), y)) for y in ys]
    return fs


def commuting_residual(P: BasicOperator, psi: LocalMap, fs: Sequence[Expression] | None = None,
                       grid_n: int = 9, P_dst: BasicOperator | None = None) -> float:
    """max |(P f)(psi(y)) - P(f o psi)(y)| over fs and a grid of dom(psi).

    `P_dst` is the operator's expression in the target chart (defaults to P).
    """
    P_dst = P if P_dst is None else P_dst
    fs = default_test_functions(P.q) if fs is None else list(fs)
    if not fs:
        raise ValueError("need at least one test function")
    pts = psi.dom.grid(grid_n)
    img = psi(pts)
    worst = 0.0
    for f in fs:
        lhs_re, lhs_im = apply_operator_parts(P_dst, f)
        rhs_re, rhs_im = apply_operator_parts(P, substitute(f, psi.forward))
        a = evaluate_many((lhs_re, lhs_im), img)
        b = evaluate_many((rhs_re, rhs_im), pts)
        worst = max(worst, float(np.max(np.hypot(a[0] - b[0], a[1] - b[1]))))
    return worst


def pde_residual(P: BasicOperator, phi: LocalMap, grid_n: int = 9) -> tuple[float, ...]:
    """Per component k: max |P_{>=1} phi^k - a_k o phi| over a grid of dom(phi)."""
    pts = phi.dom.grid(grid_n)
    img = phi(pts)
    a = P.first_order_coeffs()
    out = []
    for k, comp in enumerate(phi.forward):
        lhs_re, lhs_im = apply_operator_parts(P, comp, Part.ORDER_GE_1)
        lhs = evaluate_many((lhs_re, lhs_im), pts)
        ak = evaluate_many((a[k],), img)[0]
        out.append(float(np.max(np.hypot(lhs[0] - ak, lhs[1]))))
    return tuple(out)


def symbol_invariance_residual(P: BasicOperator, psi: LocalMap, pts_dst: np.ndarray, xis: np.ndarray) -> float:
    """max |sigma_{psi^-1(z)}(xi J) - sigma_z(xi)| with J the Jacobian of psi at psi^-1(z)."""
    y = psi.apply_inverse(pts_dst)
    J = psi.jacobian_at(y)
    pulled = np.einsum("kn,nkl->ln", xis, J)
    a = principal_symbol_many(P, y, pulled)
    b = principal_symbol_many(P, pts_dst, xis)
    return float(np.max(np.abs(a - b)))


# -- norms, equicontinuity -----------------------------------------------------------

@dataclass(frozen=True)
class JacobianBounds:
    lambda_lower: float
    mu_upper: float
    words_seen: int
    worst_word: Word
    by_length: tuple[tuple[int, float, float], ...] = ()   # (length, min norm, max norm)


def jacobian_bounds(H: PseudogroupSpec, max_len: int, grid_n: int = 3) -> JacobianBounds:
    """Empirical min/max of ||J(psi_w)(y)|| over realizable words |w| <= max_len from grid points.

    The empty word (the identity) is included, so lambda_lower <= 1 <= mu_upper.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    charts, pts = [], []
    for c in H.charts:
        g = c.box.grid(grid_n)
        charts += [c.id] * g.shape[1]
        pts.append(g)
    lo, hi, count, worst, table = math.inf, 0.0, 0, (), []
    for level in explore(H, charts, np.concatenate(pts, axis=1), max_len, track_jacobian=True,
                         dedup_jacobian=True, per_source=False):
        if level.pts.shape[1] == 0:
            continue
        norms = np.linalg.norm(level.jac, ord=2, axis=(1, 2))
        count += norms.size
        table.append((level.length, float(norms.min()), float(norms.max())))
        lo = min(lo, float(norms.min()))
        i = int(np.argmax(norms))
        if norms[i] > hi:
            hi, worst = float(norms[i]), level.words[i]
    if count == 0:
        raise EmptyDomain("no realizable word from the probe grid")
    return JacobianBounds(lo, hi, count, worst, tuple(table))


@dataclass(frozen=True)
class EquicontinuityVerdict:
    passed: bool
    worst_ratio: float
    worst_word: Word
    pairs_checked: int


def equicontinuity_check(H: PseudogroupSpec, mu: float, pairs_n: int = 20, max_len: int = 6,
                         rng: np.random.Generator | None = None, tau_eq: float = TAU_EQ,
                         word_cap: int = 2000) -> EquicontinuityVerdict:
    """Falsification test of d(psi(z), psi(w)) <= mu d(z, w) over sampled words and pairs.

    Words come from a breadth-first sweep started at each chart centre. Each word
    is tried on `pairs_n` random pairs in its start chart and on a short pair along
    the top singular direction of its Jacobian; a pair counts only if five points
    of the segment between its ends survive the whole word.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    rng = np.random.default_rng(0) if rng is None else rng
    worst, worst_word, checked = 0.0, (), 0
    samples = np.linspace(0.0, 1.0, 5)
    for c in H.charts:
        z0 = c.box.center
        zs = c.box.sample(rng, pairs_n)
        ws = c.box.sample(rng, pairs_n)
        delta = 0.01 * float(np.min(c.box.widths))
        seen_words = 0
        for level in explore(H, [c.id], z0[:, None], max_len, track_jacobian=True, dedup_jacobian=True):
            for i, word in enumerate(level.words):
                if not word or seen_words >= word_cap:
                    continue
                seen_words += 1
                _, _, vh = np.linalg.svd(level.jac[i])
                a = np.concatenate([zs, z0[:, None]], axis=1)
                b = np.concatenate([ws, (z0 + delta * vh[0])[:, None]], axis=1)
                seg = np.concatenate([a + t * (b - a) for t in samples], axis=1)
                ok, _, img, _ = apply_word(H, word, c.id, seg)
                m = a.shape[1]
                ok = ok.reshape(len(samples), m).all(axis=0)
                if not ok.any():
                    continue
                img_a, img_b = img[:, :m][:, ok], img[:, -m:][:, ok]
                dist0 = np.linalg.norm(b[:, ok] - a[:, ok], axis=0)
                good = dist0 > 0
                ratio = np.linalg.norm(img_b - img_a, axis=0)[good] / dist0[good]
                checked += int(good.sum())
                if ratio.size and ratio.max() > worst:
                    worst, worst_word = float(ratio.max()), word
    return EquicontinuityVerdict(worst <= mu * (1.0 + tau_eq), worst, worst_word, checked)


# -- structural checks -----------------------------------------------------------------

@dataclass(frozen=True)
class CompactGenerationVerdict:
    passed: bool
    failures: tuple[str, ...]


def check_compact_generation(H: PseudogroupSpec, rng: np.random.Generator | None = None,
                             samples: int = 32) -> CompactGenerationVerdict:
    """Every generator domain closure lies in its extension domain, the extension agrees
    with the generator on sampled points, and every chart box closure lies in its ambient box."""
    rng = np.random.default_rng(0) if rng is None else rng
    failures = []
    for c in H.charts:
        if not c.box.closure_inside(c.ambient):
            failures.append(f"chart {c.id}: closure of {c.box} not inside ambient {c.ambient}")
    for i, g in enumerate(H.generators, start=1):
        if not g.map.dom.closure_inside(g.ext.dom):
            failures.append(f"generator {i}: closure of dom {g.map.dom} not inside extension {g.ext.dom}")
            continue
        amb = H.chart(g.map.chart_src).ambient
        if not g.ext.dom.contains_box(amb) and not amb.contains_box(g.ext.dom):
            failures.append(f"generator {i}: extension dom {g.ext.dom} leaves ambient {amb}")
        pts = g.map.dom.sample(rng, samples)
        if np.max(np.abs(g.map(pts) - g.ext(pts))) > 1e-12:
            failures.append(f"generator {i}: extension disagrees with the generator")
    return CompactGenerationVerdict(not failures, tuple(failures))


class IdentityVerdict(enum.Enum):
    IDENTITY_EVERYWHERE = "identity_everywhere"
    NOT_IDENTITY_ON_SUB = "not_identity_on_sub"
    IDENTITY_ON_SUB_ONLY = "identity_on_sub_only"


def identity_probe(psi: LocalMap, sub: Box, samples_n: int = 11, tau: float = TAU_ORB) -> IdentityVerdict:
    """Is psi the identity on `sub`, and if so on all of dom(psi)?

    Analytic maps cannot be the identity on an open subset without being the
    identity on the connected domain, so IDENTITY_ON_SUB_ONLY signals a defect.
    """
    if not psi.dom.contains_box(sub):
        raise ValueError(f"{sub} is not inside dom {psi.dom}")
    ys = coords(psi.q)
    if all(isinstance(d, Const) and d.value == 0.0 for d in (simplify(expr_sub(f, y)) for f, y in zip(psi.forward, ys))):
        return IdentityVerdict.IDENTITY_EVERYWHERE
    pts = sub.grid(samples_n)
    if np.max(np.abs(psi(pts) - pts)) >= tau:
        return IdentityVerdict.NOT_IDENTITY_ON_SUB
    whole = psi.dom.grid(samples_n)
    if np.max(np.abs(psi(whole) - whole)) < tau:
        return IdentityVerdict.IDENTITY_EVERYWHERE
    return IdentityVerdict.IDENTITY_ON_SUB_ONLY
