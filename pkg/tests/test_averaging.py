import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from foliage.averaging import (
    ConstantMetric, GluedMetric, build_metric, classify_closure, germ_jacobian_group, glue_metric,
    haar_average, metric_from_json, transport_metric, verify_invariance,
)
from foliage.errors import CoverageGap, OutOfReach, TransportUnavailable, UnknownClosure
from foliage.examples import (
    FiniteRotations, conjugated_translations, get_scenario, make_suspension, shear_pseudogroup,
    translations_scenario,
)
from foliage.geom_core import Box

DIAG12 = np.diag([1.0, 2.0])


def rot(t):
    return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


spd = st.tuples(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(-0.9, 0.9)).map(
    lambda t: np.array([[t[0], t[2] * math.sqrt(t[0] * t[1])], [t[2] * math.sqrt(t[0] * t[1]), t[1]]]))


class TestClosure:
    def test_quarter_turn_is_cyclic_of_order_four(self):
        C = classify_closure([rot(math.pi / 2)])
        assert C.kind == "finite" and C.order == 4

    def test_irrational_rotation_is_a_circle(self):
        C = classify_closure([rot(1.0)])
        assert C.kind == "torus" and len(C.blocks) == 1

    def test_shear_is_unknown(self):
        C = classify_closure([np.array([[1.0, 1.0], [0.0, 1.0]])])
        assert C.kind == "unknown"
        with pytest.raises(UnknownClosure):
            haar_average(C, np.eye(2))

    def test_non_commuting_rotations(self):
        a = np.eye(3)
        a[:2, :2] = rot(1.0)
        b = np.eye(3)
        b[1:, 1:] = rot(math.sqrt(2))
        assert classify_closure([a, b], n_max=200).kind == "unknown"

    def test_germ_group_of_c4(self):
        s = make_suspension(FiniteRotations(4))
        chart, z = s.base_point
        G = germ_jacobian_group(s.H, z, chart)
        assert len(G.matrices) == 4


class TestHaar:
    def test_c4_oracle(self):
        assert np.allclose(haar_average(classify_closure([rot(math.pi / 2)]), DIAG12), 1.5 * np.eye(2),
                           rtol=0, atol=1e-10)

    def test_circle_oracle(self):
        assert np.allclose(haar_average(classify_closure([rot(1.0)]), DIAG12), 1.5 * np.eye(2),
                           rtol=0, atol=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(spd, st.sampled_from([1.0, math.pi / 2, math.pi / 3]))
    def test_invariant_and_idempotent(self, base, angle):
        C = classify_closure([rot(angle)])
        g = haar_average(C, base)
        R = rot(angle)
        assert np.allclose(R.T @ g @ R, g, atol=1e-12)
        assert np.allclose(haar_average(C, g), g, atol=1e-12)
        # trace is preserved by orthogonal conjugation
        assert np.trace(g) == pytest.approx(np.trace(base), rel=1e-12)

    def test_rejects_non_spd(self):
        with pytest.raises(ValueError):
            haar_average(classify_closure([rot(math.pi / 2)]), np.diag([1.0, -1.0]))


class TestTransportAndGlue:
    def test_out_of_reach(self):
        s = translations_scenario()
        with pytest.raises(OutOfReach):
            transport_metric(np.eye(2), s.H, "O", (0.0, 0.0), region=Box.cube(2, -0.4, 0.4))

    def test_unavailable_without_translations(self):
        H = shear_pseudogroup()
        with pytest.raises(TransportUnavailable):
            transport_metric(np.eye(2), H, "T", (0.0, 0.0))

    def test_coverage_gap(self):
        s = translations_scenario()
        g = ConstantMetric("O", Box.cube(2, -0.1, 0.1), np.eye(2))
        with pytest.raises(CoverageGap) as err:
            glue_metric(g, s.H, [()], [("O", (0.3, 0.3))])
        assert err.value.uncovered == [("O", (0.3, 0.3))]

    def test_frame_metric_round_trip(self):
        s = conjugated_translations()
        g = transport_metric(np.eye(1), s.H, "O", (0.0,))
        back = metric_from_json(g.to_json())
        pts = np.linspace(-0.3, 0.3, 7)[None, :]
        assert np.allclose(back.evaluate("O", pts), g.evaluate("O", pts), atol=1e-14)

    def test_non_invariant_metric_detected(self):
        s = get_scenario("c4-suspension")
        g = ConstantMetric("C0", s.H.charts[0].box, DIAG12)
        assert verify_invariance(g, s.H) == pytest.approx(1.0)


@pytest.mark.parametrize("name", ["translations", "flat-torus", "c4-suspension", "kronecker-dense",
                                  "kronecker-compact", "conjugated-translations"])
def test_pipeline_finishes(name):
    rep = build_metric(get_scenario(name))
    assert rep.ok, rep.error
    assert rep.passed()
    assert isinstance(rep.metric, GluedMetric)


def test_sphere_stops_at_transport():
    rep = build_metric(get_scenario("sphere-rotation"))
    assert rep.stage == "average" and "TransportUnavailable" in rep.error
    assert np.allclose(rep.g_z, 1.5 * np.eye(2), atol=1e-10)


def test_pipeline_base_override():
    rep = build_metric(get_scenario("c4-suspension"), base=np.diag([2.0, 4.0]))
    assert np.allclose(rep.g_z, 3.0 * np.eye(2), atol=1e-12)
