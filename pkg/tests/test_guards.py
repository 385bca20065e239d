from __future__ import annotations

import pytest

from selflets.guards import GuardSyntaxError, Undefined, compile_guard, evaluate, names_in


def test_literals():
    assert evaluate("true", {}) is True
    assert evaluate("false", {}) is False


def test_comparison_and_boolean_ops():
    env = {"x": 3, "name": "a"}
    assert evaluate("x > 2 and name == 'a'", env)
    assert not evaluate("x > 2 and not name == 'a'", env)
    assert evaluate("x == 1 or x == 3", env)


def test_undefined_key_is_false():
    assert evaluate("missing > 0", {}) is False
    assert evaluate("not missing", {}) is False


def test_strict_mode_raises():
    with pytest.raises(Undefined):
        evaluate("missing", {}, strict=True)


def test_dotted_name_is_single_key():
    assert evaluate("load.cpu < 0.5", {"load.cpu": 0.2})
    assert names_in("load.cpu < a") == {"load.cpu", "a"}


def test_callable_lookup():
    def lookup(key):
        if key == "ok":
            return True
        raise KeyError(key)

    assert evaluate("ok", lookup)
    assert not evaluate("other", lookup)


def test_functions():
    assert evaluate("is_remote(service)", {"service": "S"}, {"is_remote": lambda s: s == "S"})


def test_type_error_is_false():
    assert evaluate("x > 1", {"x": "a"}) is False


@pytest.mark.parametrize("expr", ["", "x +", "x.y()", "lambda: 1", "[1][0]"])
def test_rejected_syntax(expr):
    with pytest.raises(GuardSyntaxError):
        compile_guard(expr)


def test_unknown_function_is_false():
    assert evaluate("__import__('os')", {}) is False
