import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import shear_norm
from foliage.errors import InvalidGenerator, ParameterOutOfRange
from foliage.examples import (
    DEFAULT_A, DEFAULT_B, SCENARIOS, FiniteRotations, IrrationalRotation, MatrixGroup, Scenario,
    conjugated_translations, get_scenario, make_suspension, make_translation_generators, rational_independence,
    shear_pseudogroup, torus_counterexample,
)
from foliage.geom_core import jacobian
from foliage.operators import check_transverse_ellipticity
from foliage.pseudogroup import check_compact_generation, commuting_residual, realize_word


class TestCounterexample:
    @given(st.integers(0, 100))
    def test_norm_matches_svd_and_closed_form(self, n):
        A, norm, eig = torus_counterexample(n)
        assert norm == pytest.approx(np.linalg.norm(A, 2), abs=1e-10)
        assert norm == pytest.approx(shear_norm(n), abs=1e-12)
        assert eig == pytest.approx(norm ** 2)

    def test_golden_ratio(self):
        # n = 1 gives the golden ratio squared as top eigenvalue of A^T A
        assert torus_counterexample(1)[2] == pytest.approx((3 + math.sqrt(5)) / 2, abs=1e-15)

    def test_negative(self):
        with pytest.raises(ValueError):
            torus_counterexample(-1)

    def test_shear_jacobian_powers(self):
        H = shear_pseudogroup()
        J = jacobian(realize_word(H, (1, 1, 1)), [0.0, 0.0])
        assert np.allclose(J, [[1, 0], [3, 1]])


class TestTranslations:
    def test_generator_count(self):
        assert len(make_translation_generators(3).generators) == 12

    @pytest.mark.parametrize("a,b", [(0.0, 0.1), (0.1, 1 / 3), (-0.1, 0.1)])
    def test_out_of_range(self, a, b):
        with pytest.raises(ParameterOutOfRange):
            make_translation_generators(1, a, b)

    def test_independence_heuristic(self):
        assert rational_independence(DEFAULT_A, DEFAULT_B)["independent"]
        r = rational_independence(0.1, 0.15)
        assert not r["independent"] and r["best_fraction"] == "2/3"


class TestSuspensions:
    @pytest.mark.parametrize("k", [3, 5, 6])
    def test_crystallographic_restriction(self, k):
        with pytest.raises(InvalidGenerator):
            make_suspension(FiniteRotations(k))

    def test_unknown_fiber(self):
        with pytest.raises(InvalidGenerator):
            make_suspension(IrrationalRotation(1.0, fiber="klein"))

    def test_singular_matrix(self):
        with pytest.raises(InvalidGenerator):
            make_suspension(MatrixGroup((((1.0, 2.0), (2.0, 4.0)),)))

    def test_c4_holonomy_is_quarter_turn(self):
        s = make_suspension(FiniteRotations(4))
        jacs = {tuple(np.round(jacobian(g.map, g.map.dom.center), 12).ravel()) for g in s.holonomy}
        assert (0.0, -1.0, 1.0, 0.0) in jacs


@pytest.fixture(scope="module", params=sorted(SCENARIOS))
def scenario(request):
    return get_scenario(request.param)


class TestRegistry:
    def test_unknown(self):
        with pytest.raises(KeyError):
            get_scenario("nope")

    def test_operators_commute(self, scenario):
        for g in scenario.H.generators:
            h = g.map
            P, Q = scenario.operator_for(h.chart_src), scenario.operator_for(h.chart_dst)
            assert commuting_residual(P, h, grid_n=5, P_dst=Q) < 1e-9, h.label

    def test_operators_elliptic(self, scenario):
        for c in scenario.H.charts:
            assert check_transverse_ellipticity(scenario.operator_for(c.id), c.box, grid_n=5).elliptic

    def test_compactly_generated(self, scenario):
        assert check_compact_generation(scenario.H).passed

    def test_json_round_trip(self, scenario):
        back = Scenario.from_json(scenario.to_json())
        assert back.to_json() == scenario.to_json()

    def test_base_point_in_chart(self, scenario):
        chart, y = scenario.base_point
        assert scenario.H.chart(chart).box.contains(y)


def test_conjugated_generators_are_translations_in_the_flat_frame():
    s = conjugated_translations()
    F = s.H.frames["O"]
    g = s.H.generators[0].map
    y = np.linspace(g.dom.lo[0] + 1e-3, g.dom.hi[0] - 1e-3, 9)[None, :]
    assert np.allclose(F(g(y)) - F(y), DEFAULT_A, atol=1e-13)
