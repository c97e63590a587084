"""Acceptance criteria, each at its stated tolerance and runtime budget.

Run alone with `pytest tests/test_acceptance.py -v`; the summary section at the
end lists one PASS/FAIL line per criterion.
"""
import math
import time

import numpy as np

from oracles import gap_1d, orbit_by_integer_steps, shear_norm
from foliage.averaging import build_metric, classify_closure, haar_average, verify_invariance
from foliage.examples import (
    DEFAULT_A, DEFAULT_B, SCENARIOS, get_scenario, make_translation_generators, shear_pseudogroup,
    torus_counterexample,
)
from foliage.geom_core import Box, affine_map, coords, identity_map, parse_expr, translation
from foliage.operators import (
    BasicOperator, laplacian, random_coordinate_change, search_triangularizing_change,
    verify_coordinate_change_rule,
)
from foliage.pseudogroup import (
    check_compact_generation, commuting_residual, coverage_gap, equicontinuity_check, orbit, pde_residual,
    symbol_invariance_residual,
)

SEED = 20240601


def rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def test_shear_norm_table(criterion):
    t0 = time.perf_counter()
    worst, prev, monotone = 0.0, -math.inf, True
    for n in range(101):
        A, norm, _ = torus_counterexample(n)
        svd = float(np.linalg.svd(A, compute_uv=False)[0])
        worst = max(worst, abs(norm - svd), abs(norm - shear_norm(n)))
        monotone &= norm > prev
        prev = norm
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-10 and monotone and elapsed < 1.0
    assert criterion("C1 shear norm table n=0..100", ok,
                     f"max |closed form - SVD| = {worst:.2e}, monotone={monotone}, {elapsed:.3f}s")


def test_symbol_invariance(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    n = 1000
    box = Box.cube(2, -2.0, 2.0)
    worst = 0.0
    # Laplacian under rotations: one random rotation per block of 100 samples
    for _ in range(10):
        psi = affine_map(box, rotation(rng.uniform(0, 2 * math.pi)))
        pts = rng.uniform(-1, 1, (2, n // 10))
        xis = rng.normal(size=(2, n // 10))
        worst = max(worst, symbol_invariance_residual(laplacian(2), psi, pts, xis))
    # random constant-coefficient elliptic operators under random translations
    for _ in range(10):
        L = rng.normal(size=(2, 2))
        M = L @ L.T + 0.1 * np.eye(2)
        P = BasicOperator.real(2, 2, {(2, 0): M[0, 0], (1, 1): 2 * M[0, 1], (0, 2): M[1, 1],
                                      (1, 0): rng.normal(), (0, 0): rng.normal()})
        psi = translation(box, rng.uniform(-0.5, 0.5, 2))
        pts = rng.uniform(-1, 1, (2, n // 10))
        xis = rng.normal(size=(2, n // 10))
        worst = max(worst, symbol_invariance_residual(P, psi, pts, xis))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-9 and elapsed < 5.0
    assert criterion("C2 symbol invariance (2 x 10^3 samples)", ok, f"max residual {worst:.2e}, {elapsed:.2f}s")


def test_commuting_residuals(criterion):
    worst, where = 0.0, ""
    for name in SCENARIOS:
        s = get_scenario(name)
        for g in s.H.generators:
            h = g.map
            r = commuting_residual(s.operator_for(h.chart_src), h, P_dst=s.operator_for(h.chart_dst))
            if r >= worst:
                worst, where = r, f"{name}/{h.label}"
    psi = affine_map(Box.cube(2, -0.4, 0.4), 2 * np.eye(2))
    probe = commuting_residual(laplacian(2), psi, [parse_expr("y1^2")])
    ok = worst < 1e-9 and probe >= 6.0 and abs(probe - 6.0) < 1e-12
    assert criterion("C3 commuting residuals", ok,
                     f"max over scenarios {worst:.2e} ({where}); scaling probe {probe!r}")


def test_pde_residual(criterion):
    P = BasicOperator.real(2, 2, {(2, 0): 1.0, (1, 1): 0.5, (0, 2): 2.0, (1, 0): 1.0, (0, 1): -3.0, (0, 0): 4.0})
    box = Box.cube(2, -0.4, 0.4)
    ident = max(pde_residual(P, identity_map(box)))
    shift = max(pde_residual(P, translation(box, [0.1, -0.2])))
    probe = pde_residual(BasicOperator.real(2, 2, {(2, 0): 1.0, (0, 2): 1.0, (1, 0): 1.0}),
                         affine_map(box, 2 * np.eye(2)))
    ok = ident < 1e-12 and shift < 1e-12 and abs(probe[0] - 1.0) < 1e-12 and probe[1] < 1e-12
    assert criterion("C4 first-order PDE residual", ok,
                     f"identity {ident:.1e}, translation {shift:.1e}, scaling probe {probe}")


def test_orbit_density(criterion):
    t0 = time.perf_counter()
    H = make_translation_generators(1, DEFAULT_A, DEFAULT_B)
    region = Box.cube(1, -1 / 3, 1 / 3)
    gaps, oracle_gaps, same_points = [], [], True
    for max_len in (5, 10, 20, 40):
        orb = orbit(H, [0.0], max_len)
        gaps.append(coverage_gap(orb, region))
        ref = orbit_by_integer_steps(0.0, DEFAULT_A, DEFAULT_B, max_len)
        oracle_gaps.append(gap_1d(ref, -1 / 3, 1 / 3))
        same_points &= len(ref) == orb.points.shape[1] and np.allclose(np.sort(orb.points[0]), ref, atol=1e-12)
    elapsed = time.perf_counter() - t0
    non_increasing = all(b <= a for a, b in zip(gaps, gaps[1:]))
    agree = max(abs(a - b) for a, b in zip(gaps, oracle_gaps)) < 1e-12
    ok = gaps[2] < 0.05 and non_increasing and agree and same_points and elapsed < 10.0
    assert criterion("C5 orbit density", ok,
                     f"gaps {[round(g, 5) for g in gaps]} at max_len 5/10/20/40, oracle agrees={agree and same_points}, "
                     f"{elapsed:.2f}s")


def test_haar_average(criterion):
    base = np.diag([1.0, 2.0])
    oracle = 0.5 * np.trace(base) * np.eye(2)  # any rotation-invariant form is a multiple of I
    c4 = classify_closure([rotation(math.pi / 2)])
    so2 = classify_closure([rotation(1.0)])
    err_c4 = float(np.max(np.abs(haar_average(c4, base) - oracle)))
    err_so2 = float(np.max(np.abs(haar_average(so2, base) - oracle)))
    idem = max(float(np.max(np.abs(haar_average(C, 1.5 * np.eye(2)) - 1.5 * np.eye(2)))) for C in (c4, so2))
    ok = c4.kind == "finite" and c4.order == 4 and so2.kind == "torus" and max(err_c4, err_so2) < 1e-10 and idem < 1e-12
    assert criterion("C6 Haar averaging", ok,
                     f"C4 error {err_c4:.1e}, SO(2) error {err_so2:.1e}, idempotence {idem:.1e}")


def test_end_to_end_metric(criterion):
    details, ok = [], True
    for name in ("c4-suspension", "translations"):
        t0 = time.perf_counter()
        rep = build_metric(get_scenario(name))
        elapsed = time.perf_counter() - t0
        good = (rep.ok and rep.min_eigenvalue > 0 and rep.overlap_residual < 1e-10
                and rep.invariance_residual < 1e-8 and elapsed < 30.0)
        if rep.ok:
            # independent re-check over every generator, holonomy included
            again = verify_invariance(rep.metric, rep.metric.H, 100, np.random.default_rng(SEED))
            good &= again < 1e-8
        ok &= good
        details.append(f"{name}: stage={rep.stage} overlap={rep.overlap_residual:.1e} "
                       f"invariance={rep.invariance_residual:.1e} min_eig={rep.min_eigenvalue:.3g} {elapsed:.1f}s")
    assert criterion("C7 end-to-end invariant metric", ok, "; ".join(details))


def test_coordinate_change_rule(criterion):
    rng = np.random.default_rng(SEED)
    y1, y2 = coords(2)
    a = (-y2, y1)
    worst = 0.0
    for _ in range(20):
        phi = random_coordinate_change(rng)
        worst = max(worst, verify_coordinate_change_rule(a, phi, rng.uniform(-0.3, 0.3, 2)))
    search = search_triangularizing_change(a, rng, 1000)
    ok = worst < 1e-5 and search.triangular_found == 0
    assert criterion("C8 coordinate-change rule", ok,
                     f"max rule residual {worst:.1e} over 20 maps; {search.triangular_found} of "
                     f"{search.nonsingular} nonsingular candidates triangularize "
                     f"(smallest off-diagonal {search.min_off_diagonal:.3g})")


def test_compact_generation_and_equicontinuity(criterion):
    cube = check_compact_generation(make_translation_generators(2))
    ratios = {}
    for name in ("translations", "c4-suspension", "kronecker-dense", "sphere-rotation"):
        ratios[name] = equicontinuity_check(get_scenario(name).H, 1.0).worst_ratio
    shear = equicontinuity_check(shear_pseudogroup(linear=True), 1.0, max_len=6)
    expected = shear_norm(len(shear.worst_word))
    ok = (cube.passed and all(r <= 1 + 1e-9 for r in ratios.values()) and not shear.passed
          and abs(shear.worst_ratio - expected) < 1e-9 * expected)
    shown = ", ".join(f"{k} {v - 1:+.1e}" for k, v in ratios.items())
    assert criterion("C9 compact generation and equicontinuity", ok,
                     f"cube model compactly generated={cube.passed}; ratio-1: {shown}; "
                     f"shear ratio {shear.worst_ratio:.6f} vs ||A_{len(shear.worst_word)}|| = {expected:.6f}")
