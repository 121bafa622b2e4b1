import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exprgen import VARIABLES, corpus, fd_gap, points
from jetlab.exprcalc import (
    Add, Const, EvalError, ExprSyntaxError, Mul, Neg, Pow, Sin, UnknownVariable, Var,
    derivative, evaluate, evaluate_array, parse, substitute, to_string, variables,
)


def ev(src, env, names=None):
    return evaluate(parse(src, names or list(env)), env)


class TestParse:
    def test_sum_of_power_and_call(self):
        assert parse("x1^2 + sin(t1)", ["t1", "x1"]) == Add(Pow(Var("x1"), Const(2.0)), Sin(Var("t1")))

    def test_unary_minus_binds_tighter_than_product(self):
        assert parse("-x2*x1", ["x1", "x2"]) == Mul(Neg(Var("x2")), Var("x1"))

    def test_minus_applies_to_the_whole_power(self):
        assert parse("-x1^2", ["x1"]) == Neg(Pow(Var("x1"), Const(2.0)))
        assert ev("-x1^2", {"x1": 3.0}) == -9.0

    def test_power_is_right_associative(self):
        assert ev("2^3^2", {}, []) == 512.0

    def test_exponent_may_be_negated(self):
        assert ev("2^-1", {}, []) == 0.5

    def test_left_associative_subtraction_and_division(self):
        assert ev("8 - 3 - 2", {}, []) == 3.0
        assert ev("8 / 4 / 2", {}, []) == 1.0

    def test_scientific_literals(self):
        assert ev("1.5e2 + .5 + 2.", {}, []) == 152.5

    def test_unknown_variable(self):
        with pytest.raises(UnknownVariable) as err:
            parse("x1 + y", ["x1"])
        assert err.value.name == "y"

    def test_duplicate_declared_names(self):
        with pytest.raises(ValueError):
            parse("x1", ["x1", "x1"])


@pytest.mark.parametrize(
    "src, offset",
    [
        ("1/(1+x1", 8),
        ("x1 +", 5),
        ("", 1),
        ("2*)", 3),
        ("x1 $ 2", 4),
        ("x1 x2", 4),
        ("(x1", 4),
        ("sin x1", 5),
        ("x1 + é", 6),
        ("é + x1", 1),
        ("x1 + 2 é", 8),
    ],
)
def test_syntax_errors_are_positioned(src, offset):
    with pytest.raises(ExprSyntaxError) as err:
        parse(src, ["x1", "x2", "sin"] if src.startswith("sin ") else ["x1", "x2"])
    assert err.value.offset == offset
    assert f"offset {offset}" in str(err.value)


def test_unknown_function_points_at_its_name():
    with pytest.raises(ExprSyntaxError) as err:
        parse("1 + cosh(x1)", ["x1"])
    assert err.value.offset == 5
    assert "cosh" in str(err.value)


def test_byte_offsets_count_multibyte_characters():
    # "é" is two bytes, so the stray ")" sits at byte 6 (1-based)
    with pytest.raises(ExprSyntaxError) as err:
        parse("(x1)é", ["x1"])
    assert err.value.offset == 5
    with pytest.raises(ExprSyntaxError) as err:
        parse("é", ["x1"])
    assert err.value.offset == 1


class TestEvaluate:
    def test_examples(self):
        assert ev("x1^2+sin(t1)", {"x1": 2.0, "t1": 0.0}) == 4.0
        assert ev("cos(x1)", {"x1": 0.0}) == 1.0

    def test_division_by_zero(self):
        with pytest.raises(EvalError, match="division by zero"):
            ev("x1/x2", {"x1": 1.0, "x2": 0.0})

    @pytest.mark.parametrize("src, env", [
        ("log(x1)", {"x1": 0.0}),
        ("sqrt(x1)", {"x1": -1.0}),
        ("x1^0.5", {"x1": -2.0}),
        ("exp(x1)", {"x1": 800.0}),
        ("x1^-2", {"x1": 0.0}),
    ])
    def test_domain_errors(self, src, env):
        with pytest.raises(EvalError):
            ev(src, env)

    def test_integer_powers_expand_to_products(self):
        x = 1.1
        assert ev("x1^3", {"x1": x}) == x * x * x
        assert ev("x1^-2", {"x1": x}) == 1.0 / (x * x)

    def test_missing_assignment(self):
        with pytest.raises(EvalError):
            evaluate(parse("x1 + x2", ["x1", "x2"]), {"x1": 1.0})

    def test_array_evaluation_matches_scalar(self):
        e = parse("sin(x1)*x2 + x1^3 / (2 + cos(x2))", ["x1", "x2"])
        rng = np.random.default_rng(3)
        a, b = rng.uniform(-1, 1, 50), rng.uniform(-1, 1, 50)
        arr = evaluate_array(e, {"x1": a, "x2": b}, (50,))
        scal = [evaluate(e, {"x1": u, "x2": v}) for u, v in zip(a, b)]
        np.testing.assert_allclose(arr, scal, rtol=1e-15, atol=0)

    def test_repeat_evaluations_are_bit_identical(self):
        e = parse("exp(sin(x1)) * log(2 + x1^2)", ["x1"])
        vals = {evaluate(e, {"x1": 0.3}) for _ in range(5)}
        assert len(vals) == 1


class TestDerivative:
    names = ["t1", "x1", "x2"]

    def check(self, src, var, expected_src, at):
        d = derivative(parse(src, self.names), var)
        want = evaluate(parse(expected_src, self.names), at)
        assert evaluate(d, at) == pytest.approx(want, rel=1e-14, abs=1e-14)

    def test_power_rule(self):
        self.check("x1^2", "x1", "2*x1", {"t1": 0.0, "x1": 1.7, "x2": 0.0})

    def test_absent_variable_gives_zero(self):
        assert derivative(parse("x1^2", self.names), "t1") == Const(0.0)

    def test_product_and_chain_rule(self):
        self.check("sin(x1)*x2", "x1", "cos(x1)*x2", {"t1": 0.0, "x1": 0.4, "x2": -1.3})

    def test_quotient_rule(self):
        self.check("x1/x2", "x2", "-x1/x2^2", {"t1": 0.0, "x1": 0.4, "x2": -1.3})

    def test_general_power(self):
        self.check("x1^x2", "x2", "x1^x2*log(x1)", {"t1": 0.0, "x1": 1.4, "x2": 0.7})

    def test_simplification_keeps_trees_small(self):
        d = derivative(parse("3*x1 + 0*x2", self.names), "x1")
        assert d == Const(3.0)

    @pytest.mark.parametrize("src", corpus(100))
    def test_matches_central_differences(self, src):
        e = parse(src, VARIABLES)
        for var in VARIABLES:
            d = derivative(e, var)
            for at in points(3):
                assert fd_gap(e, var, at, d, evaluate) <= 1e-5, (src, var, at)


def test_substitute_and_variables():
    e = parse("x1*t1 + x2", ["t1", "x1", "x2"])
    assert variables(e) == frozenset({"t1", "x1", "x2"})
    s = substitute(e, {"x1": parse("2*t1", ["t1"])})
    assert variables(s) == frozenset({"t1", "x2"})
    assert evaluate(s, {"t1": 3.0, "x2": 1.0}) == 19.0


# ---------------------------------------------------------------------------
# property tests

_leaf = st.one_of(
    st.sampled_from(VARIABLES),
    st.floats(min_value=-5, max_value=5, allow_nan=False).map(lambda v: repr(round(v, 4))),
)


def _combine(children):
    unary = st.sampled_from(["sin({})", "cos({})", "-({})", "exp(0.3*sin({}))", "sqrt(1 + ({})^2)",
                             "log(2 + cos({}))", "({})^2", "({})^3"])
    binary = st.sampled_from(["({}) + ({})", "({}) - ({})", "({}) * ({})", "({}) / (2 + cos({}))"])
    return st.one_of(
        st.tuples(unary, children).map(lambda p: p[0].format(p[1])),
        st.tuples(binary, children, children).map(lambda p: p[0].format(p[1], p[2])),
    )


expressions = st.recursive(_leaf, _combine, max_leaves=8)
assignments = st.fixed_dictionaries(
    {v: st.floats(min_value=-1, max_value=1, allow_nan=False) for v in VARIABLES}
)


@settings(max_examples=150, deadline=None)
@given(expressions, assignments)
def test_print_parse_round_trip(src, at):
    e = parse(src, VARIABLES)
    again = parse(to_string(e), VARIABLES)
    assert evaluate(again, at) == evaluate(e, at)


@settings(max_examples=150, deadline=None)
@given(expressions, assignments, st.sampled_from(VARIABLES))
def test_derivative_agrees_with_finite_differences(src, at, var):
    e = parse(src, VARIABLES)
    assert fd_gap(e, var, at, derivative(e, var), evaluate) <= 1e-5


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
def test_constants_print_exactly(v):
    e = parse(to_string(Const(v)), [])
    assert evaluate(e, {}) == v
    assert not math.isnan(evaluate(e, {}))
