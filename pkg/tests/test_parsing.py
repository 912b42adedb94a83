import pytest

from difflat.expr import Par, Var, add, mul, num, pow_, var
from difflat.parsing import DimTable, ParseError, parse_expression

T = DimTable(5, 2, frozenset({"T_s", "eps"}))


def test_shift_suffixes():
    assert parse_expression("zeta1[-1]", T) == Var("zeta", 1, -1)
    assert parse_expression("ubar1[2]", T) == Var("ubar", 1, 2)
    assert parse_expression("u2[3]", T) == Var("u", 2, 3)
    assert parse_expression("y1[-4]", T) == Var("y", 1, -4)


def test_precedence_and_power():
    assert parse_expression("2*x1^2", T) == mul(num(2), pow_(var("x", 1), 2))
    assert parse_expression("-x1^2", T) == mul(num(-1), pow_(var("x", 1), 2))
    assert parse_expression("x1^-2", T) == pow_(var("x", 1), -2)
    assert parse_expression("x1^(-2)", T) == pow_(var("x", 1), -2)
    assert parse_expression("1 - 2 - 3", T) == num(-4)


def test_pi_is_builtin():
    assert parse_expression("pi/2", T) == mul(num(1) / 2, Par("pi"))


def test_component_out_of_range():
    with pytest.raises(ParseError) as ei:
        parse_expression("x6 + 1", T)
    assert "out of range" in str(ei.value)
    with pytest.raises(ParseError):
        parse_expression("u3", T)


def test_undeclared_identifier_with_position():
    with pytest.raises(ParseError) as ei:
        parse_expression("x1 + unknown_par", T)
    assert ei.value.col == 6
    assert "undeclared" in str(ei.value)


def test_syntax_error_positions():
    with pytest.raises(ParseError) as ei:
        parse_expression("x1 + ", T)
    assert ei.value.line == 1
    with pytest.raises(ParseError):
        parse_expression("x1 (x2", T)
    with pytest.raises(ParseError):
        parse_expression("sin(x1", T)


def test_non_integer_exponent_rejected():
    with pytest.raises(ParseError):
        parse_expression("x1 ^ x2", T)
    with pytest.raises(ParseError):
        parse_expression("x1 ^ 1.5", T)


def test_y_can_be_disallowed():
    T2 = DimTable(5, 2, frozenset(), allow_y=False)
    with pytest.raises(ParseError):
        parse_expression("y1", T2)


def test_comments_and_whitespace():
    assert parse_expression("x1 + # trailing\n x2", T) == add(var("x", 1), var("x", 2))
