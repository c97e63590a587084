import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from foliage.errors import ParseError, ZeroCovector
from foliage.geom_core import Box, affine_map, coords, eval_expr, identity_map, parse_expr
from foliage.operators import (
    BasicOperator, Part, Triangularity, apply_operator, char_matrix_det, check_transverse_ellipticity,
    classify_triangular, constant_operator, describe_operator, elliptic_by_eigenvalues, laplacian,
    multi_indices, one_part_matrix, principal_symbol, principal_symbol_by_power, principal_symbol_many,
    random_coordinate_change, search_triangularizing_change, sphere_points, transformed_one_part,
    verify_coordinate_change_rule, zero_order_cancellation,
)

Y1, Y2 = coords(2)
ROTATION_ONE_PART = (-Y2, Y1)


def wave():
    return constant_operator(2, 2, {(2, 0): 1.0, (0, 2): -1.0})


class TestConstruction:
    def test_order_below_two_rejected(self):
        with pytest.raises(ValueError):
            BasicOperator.real(1, 1, {(1,): 1.0})

    def test_needs_top_order_term(self):
        with pytest.raises(ValueError):
            BasicOperator.real(2, 2, {(1, 0): 1.0})

    def test_zero_entries_dropped(self):
        P = BasicOperator.real(2, 2, {(2, 0): 1.0, (0, 2): 1.0, (1, 0): 0.0})
        assert (1, 0) not in P.coeffs

    def test_json_round_trip(self):
        P = BasicOperator.from_json({"q": 2, "m": 2, "coeffs": [
            {"s": [2, 0], "re": "1+y2^2"}, {"s": [0, 2], "re": "1"}, {"s": [1, 0], "re": "y1", "im": "2"}]})
        back = BasicOperator.from_json(P.to_json())
        assert back.to_json() == P.to_json()
        assert not P.is_real

    def test_json_bad_expression(self):
        with pytest.raises(ParseError):
            BasicOperator.from_json({"q": 1, "m": 2, "coeffs": [{"s": [2], "re": "1+"}]})

    def test_multi_indices(self):
        assert list(multi_indices(2, 2)) == [(0, 2), (1, 1), (2, 0)]


class TestApplication:
    def test_laplacian_of_quadratic(self):
        f = parse_expr("y1^2 + 3*y1*y2 - y2^2")
        assert eval_expr(apply_operator(laplacian(2), f), [0.3, 0.1]) == pytest.approx(0.0, abs=1e-14)

    def test_parts(self):
        P = BasicOperator.real(1, 2, {(2,): 1.0, (1,): 2.0, (0,): 5.0})
        f = parse_expr("y1^2")
        y = [0.5]
        full = eval_expr(apply_operator(P, f), y)
        ge1 = eval_expr(apply_operator(P, f, Part.ORDER_GE_1), y)
        one = eval_expr(apply_operator(P, f, Part.ORDER_1), y)
        assert (full, ge1, one) == pytest.approx((2 + 2 + 1.25, 4.0, 2.0))


class TestSymbol:
    def test_hand_computed(self):
        P = constant_operator(2, 2, {(2, 0): 1.0, (1, 1): 4.0, (0, 2): 1.0})
        assert principal_symbol(P, [0, 0], [1, 1]).real == pytest.approx(6.0)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-2, 2), min_size=2, max_size=2), st.lists(st.floats(-2, 2), min_size=2, max_size=2))
    def test_power_formula_agrees(self, z, xi):
        P = BasicOperator.from_json({"q": 2, "m": 2, "coeffs": [
            {"s": [2, 0], "re": "1+y2^2"}, {"s": [1, 1], "re": "y1"}, {"s": [0, 2], "re": "2"},
            {"s": [1, 0], "re": "7"}]})
        a = principal_symbol(P, z, xi)
        b = principal_symbol_by_power(P, z, xi)
        assert abs(a - b) <= 1e-9 * max(1.0, abs(a))

    def test_vectorised(self):
        P = laplacian(2)
        pts = np.zeros((2, 3))
        xis = np.array([[1.0, 0.0, 3.0], [0.0, 2.0, 4.0]])
        assert np.allclose(principal_symbol_many(P, pts, xis), [1.0, 4.0, 25.0])

    def test_sphere_points_are_unit(self):
        pts = sphere_points(3, 8)
        assert np.allclose(np.linalg.norm(pts, axis=0), 1.0)


class TestEllipticity:
    def test_laplacian_elliptic(self):
        v = check_transverse_ellipticity(laplacian(2), Box.cube(2, -1, 1))
        assert v.elliptic and v.min_abs_symbol == pytest.approx(1.0)

    def test_wave_fails_on_light_cone(self):
        v = check_transverse_ellipticity(wave(), Box.cube(2, -1, 1))
        assert not v.elliptic
        xi = np.abs(np.asarray(v.witness_covector))
        assert np.allclose(xi, [1 / math.sqrt(2)] * 2, atol=1e-6)

    def test_variable_coefficient(self):
        P = BasicOperator.real(1, 2, {(2,): parse_expr("1+y1^2")})
        assert check_transverse_ellipticity(P, Box.cube(1, -2, 2)).elliptic

    def test_eigenvalue_cross_check(self):
        assert elliptic_by_eigenvalues(laplacian(2), [0.0, 0.0])
        assert not elliptic_by_eigenvalues(wave(), [0.0, 0.0])


class TestTriangularity:
    def test_rotation_field_not_triangular(self):
        P = BasicOperator.real(2, 2, {(2, 0): 1.0, (0, 2): 1.0, (1, 0): -Y2, (0, 1): Y1})
        assert np.allclose(one_part_matrix(P, [0.2, 0.3]), [[0, -1], [1, 0]])
        assert describe_operator(P, Box.cube(2, -1, 1))["triangularity"] == Triangularity.NO.value

    @pytest.mark.parametrize("mat,want", [
        ([[1, 0], [2, 3]], Triangularity.LOWER),
        ([[1, 2], [0, 3]], Triangularity.UPPER),
        ([[1, 0], [0, 3]], Triangularity.DIAGONAL),
        ([[1, 2], [3, 4]], Triangularity.NO),
    ])
    def test_classify(self, mat, want):
        assert classify_triangular(np.array([mat], dtype=float)) is want

    def test_describe_wave(self):
        rep = describe_operator(wave(), Box.cube(2, -1, 1))
        assert rep["constant_coeffs"] and not rep["elliptic"] and rep["triangular_1part"]


class TestCharacteristicMatrix:
    def test_identity_change(self):
        phi = identity_map(Box.cube(2, -1, 1))
        P = BasicOperator.real(2, 2, {(2, 0): 1.0, (0, 2): 1.0})
        # no first-order part: the determinant is the symbol squared
        assert char_matrix_det(P, phi, [0.0, 0.0], [1.0, 1.0]) == pytest.approx(4.0)

    def test_zero_covector(self):
        phi = identity_map(Box.cube(2, -1, 1))
        with pytest.raises(ZeroCovector):
            char_matrix_det(laplacian(2), phi, [0.0, 0.0], [0.0, 0.0])


class TestCoordinateChange:
    def test_linear_change_conjugates(self):
        A = np.array([[2.0, 1.0], [0.5, 1.0]])
        B = transformed_one_part(ROTATION_ONE_PART, affine_map(Box.cube(2, -1, 1), A).forward, [0.1, 0.2])
        R = np.array([[0.0, -1.0], [1.0, 0.0]])
        assert np.allclose(B, A @ R @ np.linalg.inv(A), atol=1e-12)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2 ** 31))
    def test_rule_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        phi = random_coordinate_change(rng)
        z = rng.uniform(-0.3, 0.3, 2)
        assert verify_coordinate_change_rule(ROTATION_ONE_PART, phi, z) < 1e-5

    def test_search_finds_nothing(self):
        res = search_triangularizing_change(ROTATION_ONE_PART, np.random.default_rng(0), 200)
        assert res.triangular_found == 0 and res.nonsingular > 150

    def test_zero_order_translation(self):
        P = BasicOperator.real(2, 2, {(2, 0): 1.0, (0, 2): 1.0, (0, 0): 3.0})
        psi = affine_map(Box.cube(2, -1, 1), np.eye(2), [0.1, 0.0])
        assert zero_order_cancellation(P, P, psi) == 0.0
