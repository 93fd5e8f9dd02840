"""Expression trees: constructors, evaluation, derivatives, printing,
parsing, and compilation."""

import math
import random

import pytest

from lpvembed.expr import (
    Add, Call, Const, DomainError, EvalError, Mul, NonDifferentiableError,
    UnboundVariableError, Var,
    add, call, compile_scalar, cosm1c, div, dsinc, expm1c, mul, neg, pow_,
    simplify, sinc, substitute, to_string,
)
from lpvembed.parser import ParseError, parse_expr

X, Y = Var("x"), Var("y")


def p(text):
    return parse_expr(text, variables=("x", "y", "z"))


# ---------------------------------------------------------------- constructors

def test_constant_folding():
    assert add(Const(2.0), Const(3.0)) == Const(5.0)
    assert mul(Const(2.0), Const(3.0), Const(0.5)) == Const(3.0)
    assert pow_(Const(2.0), Const(10.0)) == Const(1024.0)
    assert div(Const(1.0), Const(3.0)) == Const(1.0 / 3.0)
    assert call("sin", Const(0.0)) == Const(0.0)


def test_mul_by_zero_annihilates():
    assert mul(Const(0.0), call("exp", X)) == Const(0.0)


def test_identity_elements():
    assert add(X, Const(0.0)) == X
    assert mul(X, Const(1.0)) == X
    assert pow_(X, Const(1.0)) == X
    assert pow_(X, Const(0.0)) == Const(1.0)


def test_add_flattens_and_orders_constant_last():
    e = add(X, add(Y, Const(1.0)), Const(2.0))
    assert to_string(e) == "x + y + 3"


def test_mul_puts_constant_first():
    assert to_string(mul(X, Const(2.0))) == "2*x"


def test_structural_equality_and_hash():
    a = p("sin(x) + 2*y")
    b = p("sin(x) + 2*y")
    assert a == b and hash(a) == hash(b)
    assert a != p("sin(x) + 2*z")


# ------------------------------------------------------------------ evaluation

EVAL_CASES = [
    ("2*x + 3", {"x": 1.5}, 6.0),
    ("sin(x)*cos(y)", {"x": 0.7, "y": -0.2}, math.sin(0.7) * math.cos(-0.2)),
    ("exp(-x^2)", {"x": 1.2}, math.exp(-1.44)),
    ("x/(1 + y^2)", {"x": 3.0, "y": 2.0}, 0.6),
    ("ln(x) + sqrt(y)", {"x": math.e, "y": 4.0}, 3.0),
    ("tanh(x)", {"x": 0.9}, math.tanh(0.9)),
    ("x^2.5", {"x": 4.0}, 32.0),
    ("-x^2", {"x": 3.0}, -9.0),          # unary minus binds looser than ^
    ("2^3^2", {}, 512.0),                # ^ is right-associative
    ("x - y - 1", {"x": 10.0, "y": 3.0}, 6.0),
    ("x/y/2", {"x": 12.0, "y": 3.0}, 2.0),
    ("pi", {}, math.pi),
]


@pytest.mark.parametrize("text,env,expected", EVAL_CASES)
def test_eval(text, env, expected):
    assert p(text).eval(env) == pytest.approx(expected, rel=1e-15, abs=1e-15)


def test_eval_unbound_variable():
    with pytest.raises(UnboundVariableError):
        p("x + y").eval({"x": 1.0})


def test_eval_domain_errors():
    with pytest.raises(DomainError):
        p("ln(x)").eval({"x": -1.0})
    with pytest.raises(DomainError):
        p("sqrt(x)").eval({"x": -4.0})
    with pytest.raises(EvalError):
        p("x/y").eval({"x": 1.0, "y": 0.0})


# ----------------------------------------------------- removable singularities

def test_singularity_helpers_at_zero():
    assert sinc(0.0) == 1.0
    assert cosm1c(0.0) == 0.0
    assert expm1c(0.0) == 1.0
    assert dsinc(0.0) == 0.0


def test_singularity_helpers_match_definitions():
    for a in (0.3, -1.7, 4.0, 12.0):
        assert sinc(a) == pytest.approx(math.sin(a) / a, rel=1e-15)
        assert cosm1c(a) == pytest.approx((math.cos(a) - 1.0) / a, rel=1e-12)
        assert expm1c(a) == pytest.approx(math.expm1(a) / a, rel=1e-15)
        assert dsinc(a) == pytest.approx(
            (a * math.cos(a) - math.sin(a)) / a ** 2, rel=1e-10)


def test_singularity_helpers_small_arguments():
    # Taylor references: naive formulas lose all digits here.
    a = 1e-5
    assert sinc(a) == pytest.approx(1.0 - a * a / 6.0, rel=1e-15)
    assert cosm1c(a) == pytest.approx(-a / 2.0, rel=1e-9)
    assert expm1c(a) == pytest.approx(1.0 + a / 2.0 + a * a / 6.0, rel=1e-11)
    assert dsinc(a) == pytest.approx(-a / 3.0 + a ** 3 / 30.0, rel=1e-9)


# ----------------------------------------------------------------- derivatives

DIFF_CASES = [
    ("sin(x)", (0.4, 2.0, -1.3)),
    ("cos(2*x)", (0.4, 1.1)),
    ("tan(x)", (0.3, -0.8)),
    ("tanh(3*x)", (0.2, -0.5)),
    ("exp(-x^2)", (0.0, 0.9)),
    ("ln(x)", (0.5, 3.0)),
    ("sqrt(x)", (0.25, 2.0)),
    ("x^2.5", (0.7, 2.0)),
    ("2^x", (0.0, 1.5)),
    ("x^x", (0.7, 1.7)),
    ("x*sin(x) + x^3/(1 + x^2)", (0.6, -1.4)),
    ("sinc(x)", (0.0, 0.8, 3.0)),
    ("cosm1c(x)", (0.5, 2.0, -1.3)),
    ("expm1c(x)", (0.4, -0.9)),
    ("dsinc(x)", (0.6, 2.5)),
]


@pytest.mark.parametrize("text,points", DIFF_CASES)
def test_derivative_matches_finite_difference(text, points):
    e = p(text)
    d = e.diff("x")
    h = 1e-6
    for x0 in points:
        fd = (e.eval({"x": x0 + h}) - e.eval({"x": x0 - h})) / (2.0 * h)
        got = d.eval({"x": x0})
        assert got == pytest.approx(fd, rel=5e-6, abs=5e-6), text


def test_derivative_of_other_variable_is_zero():
    assert p("sin(x)").diff("y") == Const(0.0)


def test_abs_has_no_derivative():
    with pytest.raises(NonDifferentiableError):
        p("abs(x)").diff("x")


# --------------------------------------------------------- printing / parsing

ROUNDTRIP_CASES = [
    "x + y + 3",
    "x - y",
    "-x",
    "-(x + y)",
    "2*x*y",
    "x/(y*z)",
    "x/y/z",
    "(x + 1)*(y - 2)",
    "x^2 + 2*x + 1",
    "x^(y + 1)",
    "2^3^x",
    "sin(x)*cos(y) - tanh(z)",
    "exp(-0.5*x^2)/sqrt(2*pi)",
    "x - (y - z)",
    "1/(1 + exp(-x))",
    "-3*x + 0.5",
]


@pytest.mark.parametrize("text", ROUNDTRIP_CASES)
def test_print_parse_roundtrip_is_identity(text):
    e = p(text)
    s = to_string(e)
    assert parse_expr(s, variables=("x", "y", "z")) == e


@pytest.mark.parametrize("text", ROUNDTRIP_CASES)
def test_roundtrip_preserves_value(text):
    e = p(text)
    e2 = parse_expr(to_string(e), variables=("x", "y", "z"))
    env = {"x": 0.37, "y": -1.21, "z": 2.05}
    assert e2.eval(env) == e.eval(env)


def test_precedence_rendering():
    assert to_string(p("2*(x + y)")) == "2*(x + y)"
    assert to_string(p("-x^2")) == "-x^2"
    assert to_string(p("(-x)^2")) == "(-x)^2"
    assert to_string(p("x - (y + 1)")) == "x - (y + 1)"


# ---------------------------------------------------------------- parse errors

@pytest.mark.parametrize("bad", [
    "x ++ y", "sin(", "2 3", "foo(x)", "x ^", "", "(x", "x + ", "1..2",
])
def test_parse_errors(bad):
    with pytest.raises(ParseError):
        p(bad)


def test_parse_error_carries_position():
    with pytest.raises(ParseError) as ei:
        p("x + * y")
    assert ei.value.position == 4


def test_unknown_variable_rejected_when_vocabulary_given():
    with pytest.raises(ParseError):
        parse_expr("x + q", variables=("x",))


def test_custom_constants():
    e = parse_expr("2*g", variables=(), constants={"g": 9.81})
    assert e.eval({}) == pytest.approx(19.62)


# ----------------------------------------------------------- tree manipulation

def test_substitute():
    e = substitute(p("sin(x) + x*y"), {"x": p("y + 1")})
    env = {"y": 0.4}
    assert e.eval(env) == pytest.approx(math.sin(1.4) + 1.4 * 0.4)


def test_simplify_is_idempotent():
    rng = random.Random(7)
    for text in ROUNDTRIP_CASES:
        e = p(text)
        s1 = simplify(e)
        assert simplify(s1) == s1
        env = {"x": rng.uniform(0.1, 2), "y": rng.uniform(0.1, 2),
               "z": rng.uniform(0.1, 2)}
        assert s1.eval(env) == pytest.approx(e.eval(env), rel=1e-12)


def test_free_vars():
    assert p("sin(x)*y + 2").free_vars() == {"x", "y"}
    assert p("3.5").free_vars() == set()


# ----------------------------------------------------------------- compilation

def test_compiled_matches_tree_eval_bitwise():
    rng = random.Random(42)
    for text in ROUNDTRIP_CASES + ["sinc(x)", "cosm1c(x*y)", "expm1c(-x)"]:
        e = p(text)
        fn = compile_scalar(e, ("x", "y", "z"))
        for _ in range(5):
            env = {"x": rng.uniform(0.05, 2.0), "y": rng.uniform(0.05, 2.0),
                   "z": rng.uniform(0.05, 2.0)}
            assert fn(env["x"], env["y"], env["z"]) == e.eval(env), text


def test_compiled_domain_error():
    fn = compile_scalar(p("ln(x)"), ("x",))
    with pytest.raises(ValueError):
        fn(-1.0)
