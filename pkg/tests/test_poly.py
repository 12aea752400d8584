import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from germfold.parser import (NegativeExponentError, PolySyntaxError, UnknownVariableError, parse_poly,
                             pretty_print)
from germfold.poly import (PolynomialError, WPolynomial, diff_poly, eval_exact, eval_poly,
                           is_weighted_homogeneous, poly_arith, poly_scale, word)
from germfold.wgeom import make_weight_system

XY = ["x", "y"]
XYZ = ["x", "y", "z"]


def P(text, names=XYZ):
    return parse_poly(text, names)


polys = st.dictionaries(
    st.tuples(*[st.integers(0, 4)] * 3),
    st.fractions(min_value=-5, max_value=5, max_denominator=4),
    max_size=5,
).map(lambda d: WPolynomial(3, d))
weights = st.lists(st.integers(1, 4), min_size=3, max_size=3).map(sorted)


class TestParser:
    def test_literal(self):
        p = parse_poly("x^2 - y^2", XY)
        assert p.terms == {(2, 0): 1, (0, 2): -1}

    def test_bs_base(self):
        p = P("z^5 + x^15 + x*y^7")
        assert p.terms == {(0, 0, 5): 1, (15, 0, 0): 1, (1, 7, 0): 1}

    def test_rational_literals(self):
        assert P("3/4*x - 0.5*y").terms == {(1, 0, 0): Fraction(3, 4), (0, 1, 0): Fraction(-1, 2)}

    def test_parentheses_and_powers(self):
        assert P("(x-y)*(x+y)") == P("x^2-y^2")
        assert P("(x+1)^3") == P("x^3+3*x^2+3*x+1")

    def test_syntax_error_position(self):
        with pytest.raises(PolySyntaxError) as e:
            parse_poly("x^^2", XY)
        assert e.value.position == 2

    def test_implicit_multiplication_rejected(self):
        with pytest.raises(PolySyntaxError):
            parse_poly("2x", XY)
        with pytest.raises(PolySyntaxError):
            parse_poly("x y", XY)

    def test_unknown_variable(self):
        with pytest.raises(UnknownVariableError):
            parse_poly("x + w", XY)

    def test_negative_exponent(self):
        with pytest.raises(NegativeExponentError):
            parse_poly("x^-2", XY)

    @given(polys)
    def test_pretty_print_roundtrip(self, p):
        assert parse_poly(pretty_print(p, XYZ), XYZ).terms == p.terms


class TestArithmetic:
    def test_examples(self):
        assert P("x+y") + P("x-y") == P("2*x")
        assert poly_arith(P("x-y"), P("x+y"), "mul") == P("x^2-y^2")
        z = poly_scale(P("x^2"), 0)
        assert z.is_zero() and z.terms == {}

    def test_nvars_mismatch(self):
        with pytest.raises(PolynomialError):
            parse_poly("x", XY) + P("x")

    def test_derivatives(self):
        assert diff_poly(parse_poly("x^2-y^2", XY), 0) == parse_poly("2*x", XY)
        assert diff_poly(P("z^5+x^15+x*y^7"), 0) == P("15*x^14+y^7")
        assert diff_poly(P("7"), 2).is_zero()
        with pytest.raises(PolynomialError):
            diff_poly(P("x"), 3)

    @given(polys)
    def test_mixed_partials_commute(self, p):
        for i in range(3):
            for j in range(3):
                assert p.diff(i).diff(j) == p.diff(j).diff(i)

    def test_evaluation(self):
        assert eval_poly(parse_poly("x^2-y^2", XY), (1, 0)) == 1
        assert eval_poly(P("z^5+x^15+x*y^7"), (0, 1, 0)) == 0
        assert eval_exact(parse_poly("x^2+y^2", XY), (Fraction(3, 5), Fraction(4, 5))) == 1
        with pytest.raises(PolynomialError):
            eval_poly(P("x"), (1, 2))

    @given(polys, st.lists(st.fractions(-2, 2, max_denominator=7), min_size=3, max_size=3))
    def test_exact_matches_float(self, p, pt):
        exact = float(eval_exact(p, pt))
        approx = eval_poly(p, [float(v) for v in pt])
        assert math.isclose(approx, exact, rel_tol=1e-12, abs_tol=1e-12 * max(1.0, _scale(p, pt)))

    def test_eval_array_batches(self):
        p = P("x*y - z^2 + 1/3")
        pts = np.random.default_rng(0).standard_normal((4, 5, 3))
        vals = p.eval_array(pts)
        assert vals.shape == (4, 5)
        assert np.allclose(vals[2, 3], p(pts[2, 3]))


def _scale(p, pt):
    return sum(abs(float(c)) * math.prod(abs(float(v)) ** e for v, e in zip(pt, m))
               for m, c in p.terms.items())


class TestWeights:
    def test_word(self):
        ws = make_weight_system([1, 2, 3])
        assert word(P("z^5"), ws) == 15
        assert word(P("x*y^7"), ws) == 15
        assert word(WPolynomial.zero(3), ws) == math.inf

    def test_homogeneity(self):
        ws = make_weight_system([1, 2, 3])
        assert is_weighted_homogeneous(P("z^5+x^15+x*y^7"), ws) == (True, 15)
        assert is_weighted_homogeneous(parse_poly("x^2+y^3", XY), [1, 1])[0] is False
        assert is_weighted_homogeneous(parse_poly("y^3+x^2", ["y", "x"]), [2, 3]) == (True, 6)
        assert is_weighted_homogeneous(WPolynomial.zero(2), [1, 1]) == (True, math.inf)

    @settings(max_examples=60)
    @given(polys, polys, weights)
    def test_word_is_a_valuation(self, p, q, w):
        assert word(p * q, w) == word(p, w) + word(q, w)
        assert word(p + q, w) >= min(word(p, w), word(q, w))
