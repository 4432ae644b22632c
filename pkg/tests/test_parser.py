import math

import numpy as np
import pytest

from affinelab.errors import (ArityError, DivisionByZeroValue, EvaluationError, ExpressionSyntaxError,
                              UnknownIdentifier)
from affinelab.jets import Jet1, Jet2
from affinelab.parser import (BinOp, Call, Num, Pow, Var, eval_jet, eval_jet1, evaluate_real, parse,
                              parse_vector, rename, to_source)


def test_precedence():
    assert evaluate_real(parse("2*u + v^2"), u=1.0, v=3.0) == pytest.approx(11.0)
    assert evaluate_real(parse("-u^2"), u=3.0, v=0.0) == pytest.approx(-9.0)
    assert evaluate_real(parse("u - v - 1"), u=5.0, v=2.0) == pytest.approx(2.0)
    assert evaluate_real(parse("u/v/2"), u=8.0, v=2.0) == pytest.approx(2.0)


def test_ast_shape():
    expr = parse("u^2 + sin(v)")
    assert expr == BinOp("+", Pow(Var("u"), 2.0), Call("sin", Var("v")))


def test_constants_and_negative_exponents():
    assert evaluate_real(parse("cos(pi)"), u=0.0, v=0.0) == pytest.approx(-1.0)
    assert evaluate_real(parse("u^-2"), u=2.0, v=0.0) == pytest.approx(0.25)
    assert evaluate_real(parse("1.5e1"), u=0.0, v=0.0) == pytest.approx(15.0)


def test_syntax_error_offset():
    with pytest.raises(ExpressionSyntaxError) as info:
        parse("u + * v")
    assert info.value.offset == 4
    with pytest.raises(ExpressionSyntaxError) as info:
        parse("u $ v")
    assert info.value.offset == 2


def test_exponent_must_be_constant():
    with pytest.raises(ExpressionSyntaxError):
        parse("2^u")


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifier) as info:
        parse("w + u")
    assert info.value.name == "w"
    assert info.value.offset == 0
    with pytest.raises(UnknownIdentifier) as info:
        parse("u + erf(v)")
    assert info.value.name == "erf"


def test_arity():
    with pytest.raises(ArityError):
        parse("sin(u, v)")
    with pytest.raises(ArityError):
        parse("exp()")


def test_custom_parameters():
    expr = parse("s^2 + t", ("s", "t"))
    assert evaluate_real(expr, s=2.0, t=1.0) == pytest.approx(5.0)
    with pytest.raises(UnknownIdentifier):
        parse("u", ("s", "t"))


def test_to_source_parses_back():
    expr = parse("-sin(u*v)^3 / (1 + u^-1) - pi")
    assert parse(to_source(expr)) == expr


def test_rename():
    expr = rename(parse("s^2 + sin(s)", ("s",)), {"s": "u"})
    assert expr == BinOp("+", Pow(Var("u"), 2.0), Call("sin", Var("u")))
    assert evaluate_real(expr, u=1.0) == pytest.approx(1.0 + math.sin(1.0))


def test_eval_jet_partials():
    """Jets of sin(u) exp(v) carry the exact mixed partials"""
    expr = parse("sin(u)*exp(v)")
    u, v = Jet2.variables(0.4, -0.3, 3)
    jet = eval_jet(expr, u, v)
    assert jet.partial(1, 2) == pytest.approx(math.cos(0.4) * math.exp(-0.3))
    assert jet.partial(3, 0) == pytest.approx(-math.cos(0.4) * math.exp(-0.3))


def test_eval_jet_constant_expression_broadcasts():
    U = np.linspace(0.0, 1.0, 7)
    u, v = Jet2.variables(U, 0.0, 2)
    jet = eval_jet(parse("2 + pi"), u, v)
    assert jet.batch_shape == (7,)
    np.testing.assert_allclose(jet.value, 2.0 + math.pi)
    assert np.all(jet.partial(1, 0) == 0.0)


def test_eval_jet1():
    t = Jet1.variable(0.5, 2)
    jet = eval_jet1(parse("t^3", ("t",)), t)
    assert jet.partial(1) == pytest.approx(0.75)
    assert jet.partial(2) == pytest.approx(3.0)


def test_division_by_zero():
    with pytest.raises(DivisionByZeroValue):
        evaluate_real(parse("1/u"), u=0.0, v=1.0)
    u, v = Jet2.variables(0.0, 1.0, 1)
    with pytest.raises(DivisionByZeroValue):
        eval_jet(parse("v/u"), u, v)


def test_parse_vector():
    vec = parse_vector("u", "v", "u*v")
    assert vec.params == ("u", "v")
    assert vec.components[2] == BinOp("*", Var("u"), Var("v"))
    assert Num(1.0) == parse("1")


ROUND_TRIP = [
    "u", "v", "pi", "1", "2.5", ".5", "1e-3", "1.5E+2", "-u", "--u",
    "u + v", "u - v - 1", "u - (v - 1)", "u*v/2", "u/(v*2)", "u^2", "u^-1.5", "(u + v)^3",
    "-u^2", "(-u)^2", "u^2^3", "sin(u)", "cos(u*v)", "tan(u/4)", "exp(-v)", "ln(1 + u^2)",
    "sqrt(u*u + v*v)", "sin(cos(tan(u)))", "2*pi*u - v/3", "exp(u)*sin(v) + cos(u)*ln(v + 2)",
    "-sin(u*v)^3 / (1 + u^-1) - pi", "(u^2 + v^2)^2/24", "0.5*(u^2 + v^2) + (u^3 - 3*u*v^2)/6",
    "1/(1 + u^2 + v^2)", "u*(v*(u*(v + 1)))",
]


@pytest.mark.parametrize("src", ROUND_TRIP)
def test_round_trip(src):
    expr = parse(src)
    back = parse(to_source(expr))
    assert back == expr
    assert evaluate_real(back, u=0.37, v=0.61) == pytest.approx(float(evaluate_real(expr, u=0.37, v=0.61)))


def test_unbound_parameter_names_its_node():
    expr = parse("u + v")
    with pytest.raises(EvaluationError) as info:
        evaluate_real(expr, u=1.0)
    assert info.value.span == expr.right.span
    assert "'v'" in str(info.value)
