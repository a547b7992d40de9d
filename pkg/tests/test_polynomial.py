from fractions import Fraction

import numpy as np
import pytest

from wick_utils.combinatorics import Multiset
from wick_utils.errors import BasisMismatchError
from wick_utils.polynomial import APPELL, WickPolynomial


class TestParsing:
    """Test the polynomial text syntax."""

    def test_univariate(self):
        p = WickPolynomial.parse("x^3 - 3x^2 + 0x + 1")
        assert p.coefficient("x,x,x") == 1
        assert p.coefficient("x,x") == -3
        assert p.coefficient("x") == 0
        assert p.coefficient("") == 1
        assert len(p) == 3
        assert p.degree == 3

    def test_rational_coefficients(self):
        p = WickPolynomial.parse("2*x*y - 1/2")
        assert p.coefficient("x,y") == 2
        assert p.coefficient("") == Fraction(-1, 2)
        assert p.is_exact

    def test_indexed_symbols(self):
        """x_<k> names become integer components."""
        p = WickPolynomial.parse("x_1^2 + x_0*x_1")
        assert p.symbols() == (0, 1)
        assert p.coefficient(Multiset([1, 1])) == 1
        assert p.coefficient(Multiset([0, 1])) == 1

    def test_constant(self):
        assert WickPolynomial.parse("7") == WickPolynomial.constant(7)
        assert WickPolynomial.parse("0") == WickPolynomial.zero()

    def test_appell_basis(self):
        p = WickPolynomial.parse("x^2 - 1", basis=APPELL, model_id="gaussian:std")
        assert p.basis == APPELL
        assert p.pretty() == "x^{⋄2} + 0x^{⋄1} - 1"

    def test_invalid(self):
        with pytest.raises(ValueError):
            WickPolynomial.parse("x^")
        with pytest.raises(ValueError):
            WickPolynomial.parse("1/x")
        with pytest.raises(ValueError, match="model"):
            WickPolynomial.parse("x", basis=APPELL)


class TestArithmetic:
    """Test polynomial arithmetic and basis checks."""

    def test_zero_terms_dropped(self):
        p = WickPolynomial({"x": 1, "": 0})
        assert len(p) == 1
        assert not (p - p)

    def test_products(self):
        x = WickPolynomial.variable("x")
        assert (x + 1) ** 2 == WickPolynomial.parse("x^2 + 2x + 1")
        assert 3 * x - x / 2 == WickPolynomial({"x": Fraction(5, 2)})
        assert 2 - x == WickPolynomial.parse("2 - x")

    def test_basis_mismatch(self):
        mono = WickPolynomial.parse("x^2")
        appell = WickPolynomial.appell("x,x", "gaussian:std")
        with pytest.raises(BasisMismatchError):
            mono + appell
        with pytest.raises(BasisMismatchError):
            appell + WickPolynomial.appell("x,x", "poisson:1")
        with pytest.raises(BasisMismatchError):
            appell * appell

    def test_allclose(self):
        p = WickPolynomial.parse("x^2 - 1")
        q = p.to_float() + 1e-13
        assert p.allclose(q)
        assert not p.allclose(q + 1e-6)


class TestCalculus:
    """Test differentiation, substitution and evaluation."""

    def test_differentiate(self):
        """d_J x^I = C(I, J) x^(I - J)."""
        p = WickPolynomial.parse("x^3*y + x")
        assert p.differentiate("x") == WickPolynomial.parse("3x^2*y + 1")
        assert p.differentiate("x,x") == WickPolynomial.parse("3x*y")
        assert p.differentiate("y,y") == WickPolynomial.zero()

    def test_differentiate_keeps_basis(self):
        p = WickPolynomial.appell("x,x,x", "poisson:1")
        assert p.differentiate("x") == WickPolynomial.appell("x,x", "poisson:1", 3)

    def test_substitute(self):
        p = WickPolynomial.parse("x^2 + y")
        q = p.substitute({"x": WickPolynomial.parse("z + 1")})
        assert q == WickPolynomial.parse("z^2 + 2z + 1 + y")

    def test_evaluate_exact(self):
        p = WickPolynomial.parse("x^3 - 3x")
        assert p.evaluate({"x": Fraction(1, 2)}) == Fraction(1, 8) - Fraction(3, 2)
        with pytest.raises(KeyError):
            p.evaluate({})

    def test_evaluate_arrays(self):
        p = WickPolynomial.parse("x*y + 2")
        values = p.evaluate({"x": np.array([1.0, 2.0]), "y": np.array([[3.0], [4.0]])})
        np.testing.assert_allclose(values, [[5.0, 8.0], [6.0, 10.0]])

    def test_evaluate_needs_monomial_basis(self):
        with pytest.raises(BasisMismatchError):
            WickPolynomial.appell("x", "gaussian:std").evaluate({"x": 1})


class TestRendering:
    """Test printing and JSON."""

    def test_dense_univariate(self):
        assert WickPolynomial.parse("x^3 - 3x^2 + 1").pretty() == "x^3 - 3x^2 + 0x + 1"
        assert WickPolynomial.parse("-x^2/2").pretty() == "-(1/2)x^2 + 0x + 0"

    def test_multivariate(self):
        assert WickPolynomial.parse("x*y - 2").pretty() == "x*y - 2"
        assert WickPolynomial.zero().pretty() == "0"

    def test_json(self):
        p = WickPolynomial.parse("x^2 - 1/3", basis=APPELL, model_id="poisson:2")
        data = p.to_json()
        assert data == {
            "basis": "appell",
            "model_id": "poisson:2",
            "terms": {"": "-1/3", "x,x": "1"},
        }
        assert WickPolynomial.from_json(data) == p
