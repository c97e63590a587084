"""Expressions, boxes and local maps: the substrate every other module computes on."""
from .expr import (
    Expression, Const, Var, const, var, coords, sin, cos, exp, sqrt,
    eval_expr, diff_expr, derivative, substitute, affine, simplify, to_string,
    evaluate_many, free_coords,
)
from .parse import parse_expr
from .interval import Interval, interval_eval
from .maps import (
    Box, LocalMap, affine_map, identity_map, translation, compose_maps, jacobian,
    operator_norm, certify_box, interval_hull, H_FD, TAU_FD, TAU_INV,
)

__all__ = [
    "Expression", "Const", "Var", "const", "var", "coords", "sin", "cos", "exp", "sqrt",
    "eval_expr", "diff_expr", "derivative", "substitute", "affine", "simplify", "to_string",
    "evaluate_many", "free_coords", "parse_expr", "Interval", "interval_eval",
    "Box", "LocalMap", "affine_map", "identity_map", "translation", "compose_maps", "jacobian",
    "operator_norm", "certify_box", "interval_hull", "H_FD", "TAU_FD", "TAU_INV",
]
