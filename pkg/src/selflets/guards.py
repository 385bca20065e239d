"""A tiny, closed expression language for transition guards and rule conditions.

Expressions use Python surface syntax but only a whitelisted subset is
accepted: literals, names (dotted names are single keys, ``kb.energy`` looks
up the key ``"kb.energy"``), comparisons, ``and``/``or``/``not`` and calls to
functions explicitly supplied by the caller.  ``true``/``false``/``null`` are
accepted as literal aliases.

Any reference to an undefined name makes the whole expression evaluate to
``False``.
"""

from __future__ import annotations

import ast
import operator
from functools import lru_cache
from typing import Any, Callable, Mapping

__all__ = ["GuardSyntaxError", "Undefined", "compile_guard", "evaluate", "names_in"]

_LITERALS = {"true": True, "false": False, "null": None, "True": True, "False": False, "None": None}

_COMPARE = {
    ast.Eq: operator.eq,
    ast.NotEq: operator.ne,
    ast.Lt: operator.lt,
    ast.LtE: operator.le,
    ast.Gt: operator.gt,
    ast.GtE: operator.ge,
}


class GuardSyntaxError(ValueError):
    pass


class Undefined(LookupError):
    """Raised internally when an expression touches an absent key."""


def _dotted(node: ast.AST) -> str | None:
    if isinstance(node, ast.Name):
        return node.id
    if isinstance(node, ast.Attribute):
        head = _dotted(node.value)
        return None if head is None else f"{head}.{node.attr}"
    return None


def _check(node: ast.AST) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body)
    elif isinstance(node, ast.BoolOp):
        for v in node.values:
            _check(v)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.Not, ast.USub)):
            raise GuardSyntaxError(f"unsupported operator {type(node.op).__name__}")
        _check(node.operand)
    elif isinstance(node, ast.Compare):
        for op in node.ops:
            if type(op) not in _COMPARE:
                raise GuardSyntaxError(f"unsupported comparison {type(op).__name__}")
        _check(node.left)
        for c in node.comparators:
            _check(c)
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (str, int, float, bool, type(None))):
            raise GuardSyntaxError(f"unsupported literal {node.value!r}")
    elif isinstance(node, (ast.Name, ast.Attribute)):
        if _dotted(node) is None:
            raise GuardSyntaxError("attribute access is only allowed on names")
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.keywords:
            raise GuardSyntaxError("only plain function calls with positional args are allowed")
        for a in node.args:
            _check(a)
    else:
        raise GuardSyntaxError(f"unsupported syntax {type(node).__name__}")


@lru_cache(maxsize=1024)
def compile_guard(expr: str) -> ast.Expression:
    """Parse and whitelist-check ``expr``; raises GuardSyntaxError."""
    if not isinstance(expr, str) or not expr.strip():
        raise GuardSyntaxError("empty expression")
    try:
        tree = ast.parse(expr.strip(), mode="eval")
    except SyntaxError as exc:
        raise GuardSyntaxError(f"cannot parse {expr!r}: {exc.msg}") from None
    _check(tree)
    return tree


def names_in(expr: str) -> set[str]:
    """Keys an expression may read (function names excluded)."""
    tree = compile_guard(expr)
    found: set[str] = set()

    def walk(node: ast.AST) -> None:
        if isinstance(node, ast.Call):
            for a in node.args:
                walk(a)
            return
        key = _dotted(node) if isinstance(node, (ast.Name, ast.Attribute)) else None
        if key is not None:
            if key not in _LITERALS:
                found.add(key)
            return
        for child in ast.iter_child_nodes(node):
            walk(child)

    walk(tree)
    return found


def _eval(node: ast.AST, lookup: Callable[[str], Any], functions: Mapping[str, Callable]) -> Any:
    if isinstance(node, ast.Constant):
        return node.value
    if isinstance(node, (ast.Name, ast.Attribute)):
        key = _dotted(node)
        if key in _LITERALS:
            return _LITERALS[key]
        try:
            return lookup(key)
        except KeyError:
            raise Undefined(key) from None
    if isinstance(node, ast.BoolOp):
        if isinstance(node.op, ast.And):
            return all(bool(_eval(v, lookup, functions)) for v in node.values)
        return any(bool(_eval(v, lookup, functions)) for v in node.values)
    if isinstance(node, ast.UnaryOp):
        value = _eval(node.operand, lookup, functions)
        return (not value) if isinstance(node.op, ast.Not) else -value
    if isinstance(node, ast.Compare):
        left = _eval(node.left, lookup, functions)
        for op, comp in zip(node.ops, node.comparators):
            right = _eval(comp, lookup, functions)
            if not _COMPARE[type(op)](left, right):
                return False
            left = right
        return True
    if isinstance(node, ast.Call):
        fn = functions.get(node.func.id)
        if fn is None:
            raise Undefined(node.func.id)
        return fn(*(_eval(a, lookup, functions) for a in node.args))
    raise GuardSyntaxError(f"unsupported syntax {type(node).__name__}")


def evaluate(
    expr: str,
    lookup: Callable[[str], Any] | Mapping[str, Any],
    functions: Mapping[str, Callable] | None = None,
    *,
    strict: bool = False,
) -> bool:
    """Evaluate ``expr`` to a bool.

    ``lookup`` is a mapping or a callable raising KeyError for absent keys.
    Undefined names yield ``False``, or re-raise :class:`Undefined` when
    ``strict`` is set.  Comparisons between incomparable types are false.
    """
    tree = compile_guard(expr)
    if not callable(lookup):
        mapping = lookup
        lookup = mapping.__getitem__
    try:
        return bool(_eval(tree.body, lookup, functions or {}))
    except Undefined:
        if strict:
            raise
        return False
    except TypeError:
        return False
