"""Tiny arithmetic language for weights and directions in config files.

Numbers, ``x``, ``y``, ``z``, ``pi``, ``e``, the functions ``sin``, ``cos``,
``exp``, ``abs``, ``sqrt``, and ``+ - * / **``.  Parsed with :mod:`ast` and
evaluated on numpy arrays; anything else is rejected.
"""
from __future__ import annotations

import ast
import operator

import numpy as np

from .errors import ConfigError
from .grid import Field, Grid, Weight

__all__ = ["evaluate", "weight_from_expr", "field_from_expr"]

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs, "sqrt": np.sqrt}
_CONSTS = {"pi": np.pi, "e": np.e}
_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_COORDS = ("x", "y", "z")


def evaluate(text: str, coords) -> np.ndarray:
    """Evaluate ``text`` with ``coords`` bound to ``x, y, z`` in order."""
    try:
        tree = ast.parse(str(text).strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
    env = dict(_CONSTS)
    for name, c in zip(_COORDS, coords):
        env[name] = c

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in env:
                return env[node.id]
            raise ConfigError(f"unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](ev(node.operand))
        if (
            isinstance(node, ast.Call)
            and isinstance(node.func, ast.Name)
            and node.func.id in _FUNCS
            and len(node.args) == 1
            and not node.keywords
        ):
            return _FUNCS[node.func.id](ev(node.args[0]))
        raise ConfigError(f"unsupported syntax in {text!r}")

    with np.errstate(all="ignore"):
        out = ev(tree)
    shape = np.shape(coords[0]) if len(coords) else ()
    out = np.broadcast_to(np.asarray(out, dtype=float), shape).copy()
    if not np.all(np.isfinite(out)):
        raise ConfigError(f"expression {text!r} is not finite on the grid")
    return out


def weight_from_expr(grid: Grid, text: str) -> Weight:
    """Weight sampled at cell centres."""
    return Weight(grid, evaluate(text, grid.cell_centers()))


def field_from_expr(grid: Grid, text: str) -> Field:
    """Field sampled at nodes (boundary values are then set to zero)."""
    return Field(grid, evaluate(text, grid.node_coords()))
