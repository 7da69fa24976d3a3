"""The small expression language: parsing, evaluation, fuzz totality."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cckit import DomainError, Expression, ParseError


class TestParse:
    def test_worked_example(self):
        e = Expression("x^2 + max(0, x-1)")
        assert e.eval({"x": 2.0}) == pytest.approx(5.0)
        assert e.eval({"x": 0.5}) == pytest.approx(0.25)

    def test_precedence_and_right_assoc_power(self):
        assert Expression("2 + 3 * 4").eval({}) == 14.0
        assert Expression("2 ^ 3 ^ 2").eval({}) == 512.0   # right-assoc
        assert Expression("-2 ^ 2").eval({}) == -4.0        # unary binds looser
        assert Expression("(2 + 3) * 4").eval({}) == 20.0

    def test_functions(self):
        assert Expression("exp(0)").eval({}) == 1.0
        assert Expression("log(exp(2))").eval({}) == pytest.approx(2.0)
        assert Expression("sqrt(9)").eval({}) == 3.0
        assert Expression("abs(0 - 3)").eval({}) == 3.0
        assert Expression("min(3, 1, 2)").eval({}) == 1.0
        assert Expression("max(3, 1, 2)").eval({}) == 3.0

    def test_scientific_numbers(self):
        assert Expression("1e-3 + 2.5E2").eval({}) == pytest.approx(250.001)

    def test_parse_error_carries_offset(self):
        with pytest.raises(ParseError) as ei:
            Expression("1 + * 2")
        assert ei.value.offset == 4
        with pytest.raises(ParseError):
            Expression("max(1")
        with pytest.raises(ParseError):
            Expression("2 $ 3")

    def test_variables_discovered(self):
        e = Expression("x * y + exp(x)")
        assert set(e.variables) == {"x", "y"}


class TestEval:
    def test_unbound_variable(self):
        with pytest.raises(DomainError):
            Expression("x + 1").eval({})

    def test_domain_violations(self):
        with pytest.raises(DomainError):
            Expression("log(0 - 1)").eval({})
        with pytest.raises(DomainError):
            Expression("1 / x").eval({"x": 0.0})
        with pytest.raises(DomainError):
            Expression("sqrt(0 - 4)").eval({})
        with pytest.raises(DomainError):
            Expression("(0-2) ^ 0.5").eval({})

    def test_derivative_fd(self):
        e = Expression("x^2")
        assert e.derivative({"x": 3.0}, "x") == pytest.approx(6.0, abs=1e-5)
        assert Expression("exp(x)").derivative({"x": 1.0}, "x") == pytest.approx(
            math.e, rel=1e-5
        )


class TestFuzzTotality:
    ALPHABET = "x0123456789.+-*/^()aemN, qlgbst"

    def test_parser_never_crashes_uncontrolled(self):
        # every input either parses or raises ParseError; nothing else escapes
        rng = np.random.default_rng(20240907)
        for _ in range(100_000):
            n = int(rng.integers(1, 18))
            s = "".join(rng.choice(list(self.ALPHABET), size=n))
            try:
                Expression(s)
            except ParseError:
                pass

    @given(st.text(alphabet=ALPHABET, min_size=0, max_size=40))
    @settings(max_examples=500, deadline=None)
    def test_parse_or_parse_error(self, s):
        try:
            Expression(s)
        except ParseError:
            pass

    @given(st.floats(-50, 50), st.floats(-50, 50))
    @settings(max_examples=200, deadline=None)
    def test_round_trip_through_source(self, a, b):
        src = f"{a!r} * x + {b!r}"
        e = Expression(src)
        e2 = Expression(e.src)
        assert e2.eval({"x": 2.0}) == e.eval({"x": 2.0})
