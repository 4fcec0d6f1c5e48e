"""Arithmetic expressions for coefficient and boundary fields in configs.

Only numbers, the listed variables, + - * / ** and the functions sin, cos,
exp, pow and abs are accepted; anything else is a ConfigError.
"""
from __future__ import annotations

import ast
import math

import numpy as np

from .errors import ConfigError

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "pow": np.power, "abs": np.abs}
CONSTANTS = {"pi": math.pi}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
           ast.Div: np.divide, ast.Pow: np.power}
_UNARY = {ast.UAdd: np.positive, ast.USub: np.negative}


def _check(node, variables, where):
    if isinstance(node, ast.Expression):
        return _check(node.body, variables, where)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ConfigError(f"{where}: only numeric literals are allowed")
        return
    if isinstance(node, ast.Name):
        if node.id not in variables and node.id not in CONSTANTS:
            raise ConfigError(f"{where}: unknown name {node.id!r} (allowed: {', '.join(variables)})")
        return
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        _check(node.left, variables, where)
        _check(node.right, variables, where)
        return
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        _check(node.operand, variables, where)
        return
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in FUNCTIONS:
        if node.keywords:
            raise ConfigError(f"{where}: keyword arguments are not allowed")
        want = 2 if node.func.id == "pow" else 1
        if len(node.args) != want:
            raise ConfigError(f"{where}: {node.func.id} takes {want} argument(s)")
        for a in node.args:
            _check(a, variables, where)
        return
    raise ConfigError(f"{where}: unsupported syntax {type(node).__name__}")


def _eval(node, env):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return env[node.id] if node.id in env else CONSTANTS[node.id]
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        return _UNARY[type(node.op)](_eval(node.operand, env))
    return FUNCTIONS[node.func.id](*(_eval(a, env) for a in node.args))


class Expression:
    """Parsed expression; calling it with positional arrays binds ``variables`` in order."""

    def __init__(self, source, variables=("x", "y"), where="expression"):
        if isinstance(source, (int, float)) and not isinstance(source, bool):
            source = repr(float(source))
        if not isinstance(source, str):
            raise ConfigError(f"{where}: expected a number or an expression string")
        try:
            tree = ast.parse(source.strip(), mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"{where}: cannot parse {source!r}: {exc.msg}") from None
        self.variables = tuple(variables)
        _check(tree, self.variables, where)
        self.source = source
        self._tree = tree
        self.constant = not any(isinstance(n, ast.Name) and n.id in self.variables for n in ast.walk(tree))

    def __call__(self, *coords):
        env = dict(zip(self.variables, coords))
        with np.errstate(all="ignore"):
            val = _eval(self._tree, env)
        if coords:
            return np.broadcast_to(np.asarray(val, dtype=float), np.broadcast(*coords).shape)
        return np.asarray(val, dtype=float)

    def value(self) -> float:
        if not self.constant:
            raise ConfigError(f"{self.source!r} is not a constant")
        return float(self())

    def as_coef(self):
        """Float when constant (so constant-only code paths stay available), else self."""
        return self.value() if self.constant else self


def parse(source, variables=("x", "y"), where="expression"):
    return Expression(source, variables, where).as_coef()
