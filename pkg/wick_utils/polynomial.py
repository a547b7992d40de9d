"""Sparse multiset-indexed polynomials in the monomial or an Appell basis."""
import re
from collections.abc import Hashable, Iterator, Mapping
from fractions import Fraction
from typing import Any, Optional, Union

import numpy as np
import sympy
from sympy.parsing.sympy_parser import (
    convert_xor,
    implicit_multiplication,
    parse_expr,
    standard_transformations,
)

from .combinatorics import Multiset, as_multiset, multiplicity_coefficient, symbol_key
from .config import REL_TOL
from .errors import BasisMismatchError

Coefficient = Union[Fraction, float]

MONOMIAL = "monomial"
APPELL = "appell"
BASES = (MONOMIAL, APPELL)

_INDEXED_NAME = re.compile(r"x_(\d+)")
_TRANSFORMS = standard_transformations + (implicit_multiplication, convert_xor)
_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
# "3x" and "0x" are not valid Python tokens
_COEF_BEFORE_NAME = re.compile(r"(?<![A-Za-z_0-9.])(\d+(?:\.\d+)?)(?=[A-Za-z_(])")


def coerce_coefficient(value: Any) -> Coefficient:
    """Integers, strings and sympy rationals become ``Fraction``; floats stay floats."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("Boolean is not a polynomial coefficient")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, sympy.Rational):
        return Fraction(int(value.p), int(value.q))
    if isinstance(value, (float, np.floating)):
        return float(value)
    if isinstance(value, sympy.Basic) and value.is_number:
        return float(value)
    raise TypeError(f"Unsupported coefficient type {type(value).__name__}")


def format_coefficient(value: Coefficient) -> str:
    if isinstance(value, Fraction):
        return str(value.numerator) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"
    return f"{value:.12g}"


def symbol_name(symbol: Hashable) -> str:
    """Printable name: integer components render as ``x_<k>``."""
    if isinstance(symbol, int):
        return f"x_{symbol}"
    return str(symbol)


class WickPolynomial:
    """
    Immutable sparse polynomial ``sum_I c_I b_I`` keyed by multisets.

    ``b_I`` is the monomial ``x^I`` when ``basis == "monomial"`` and the Appell
    polynomial ``x^{<>I}`` of the model ``model_id`` when ``basis == "appell"``.
    Zero coefficients are never stored.
    """

    __slots__ = ("_terms", "basis", "model_id")

    def __init__(
        self,
        terms: Optional[Mapping[Union[Multiset, str], Any]] = None,
        basis: str = MONOMIAL,
        model_id: Optional[str] = None,
    ):
        if basis not in BASES:
            raise ValueError(f"Unknown basis {basis!r}; expected one of {BASES}")
        if basis == APPELL and model_id is None:
            raise ValueError("An Appell basis needs the id of its cumulant model")
        self.basis = basis
        self.model_id = model_id if basis == APPELL else None
        collected: dict[Multiset, Coefficient] = {}
        for key, value in (terms or {}).items():
            I = as_multiset(key)
            collected[I] = collected.get(I, Fraction(0)) + coerce_coefficient(value)
        self._terms = {I: c for I, c in collected.items() if c != 0}

    # -- constructors -----------------------------------------------------

    @classmethod
    def constant(cls, value: Any, basis: str = MONOMIAL, model_id: Optional[str] = None) -> "WickPolynomial":
        return cls({Multiset(): value}, basis, model_id)

    @classmethod
    def zero(cls, basis: str = MONOMIAL, model_id: Optional[str] = None) -> "WickPolynomial":
        return cls({}, basis, model_id)

    @classmethod
    def monomial(cls, I: Union[Multiset, str], coef: Any = 1) -> "WickPolynomial":
        return cls({as_multiset(I): coef})

    @classmethod
    def appell(cls, I: Union[Multiset, str], model_id: str, coef: Any = 1) -> "WickPolynomial":
        return cls({as_multiset(I): coef}, APPELL, model_id)

    @classmethod
    def variable(cls, symbol: Hashable) -> "WickPolynomial":
        return cls({Multiset([symbol]): 1})

    @classmethod
    def parse(
        cls,
        text: str,
        basis: str = MONOMIAL,
        model_id: Optional[str] = None,
    ) -> "WickPolynomial":
        """
        Parse the CLI polynomial syntax, e.g. ``"x^3 - 3x + 1"`` or ``"2*x*y - 1/2"``.

        Names ``x_<k>`` denote integer components. With ``basis="appell"`` each
        monomial exponent is read as an Appell index, so ``"x^2 - 1"`` means
        ``x^{<>2} - 1``.
        """
        source = _COEF_BEFORE_NAME.sub(r"\1*", text)
        # every identifier is a plain symbol, so "E" or "I" never mean sympy constants
        local = {name: sympy.Symbol(name) for name in _NAME.findall(source)}
        try:
            expr = parse_expr(source, local_dict=local, transformations=_TRANSFORMS)
        except (SyntaxError, TypeError, sympy.SympifyError) as e:
            raise ValueError(f"Cannot parse polynomial {text!r}: {e}") from e
        gens = sorted(expr.free_symbols, key=lambda s: s.name)
        if not gens:
            return cls.constant(coerce_coefficient(sympy.nsimplify(expr)), basis, model_id)
        try:
            poly = sympy.Poly(sympy.expand(expr), *gens)
        except sympy.PolynomialError as e:
            raise ValueError(f"{text!r} is not a polynomial: {e}") from e

        def to_symbol(name: str) -> Hashable:
            match = _INDEXED_NAME.fullmatch(name)
            return int(match.group(1)) if match else name

        symbols = [to_symbol(g.name) for g in gens]
        terms: dict[Multiset, Any] = {}
        for exponents, coef in poly.terms():
            terms[Multiset.from_multi_index(exponents, symbols)] = coef
        return cls(terms, basis, model_id)

    # -- container protocol -----------------------------------------------

    @property
    def terms(self) -> dict[Multiset, Coefficient]:
        return dict(self._terms)

    def items(self) -> list[tuple[Multiset, Coefficient]]:
        """Terms in canonical order (by size, then symbols)."""
        return sorted(self._terms.items(), key=lambda kv: kv[0].sort_key())

    def __iter__(self) -> Iterator[Multiset]:
        return iter(I for I, _ in self.items())

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    def coefficient(self, I: Union[Multiset, str]) -> Coefficient:
        return self._terms.get(as_multiset(I), Fraction(0))

    @property
    def degree(self) -> int:
        return max((len(I) for I in self._terms), default=0)

    @property
    def is_exact(self) -> bool:
        return all(isinstance(c, Fraction) for c in self._terms.values())

    def symbols(self) -> tuple[Hashable, ...]:
        found: set = set()
        for I in self._terms:
            found.update(I.symbols())
        return tuple(sorted(found, key=symbol_key))

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (int, Fraction, float)):
            other = WickPolynomial.constant(other, self.basis, self.model_id)
        if not isinstance(other, WickPolynomial):
            return NotImplemented
        return (
            self.basis == other.basis
            and self.model_id == other.model_id
            and self._terms == other._terms
        )

    def __hash__(self) -> int:
        return hash((self.basis, self.model_id, frozenset(self._terms.items())))

    def allclose(self, other: "WickPolynomial", rel_tol: float = REL_TOL) -> bool:
        """Coefficient-wise comparison with a relative tolerance scaled by the largest coefficient."""
        self._check_compatible(other)
        keys = set(self._terms) | set(other._terms)
        scale = max([1.0] + [abs(float(c)) for c in self._terms.values()])
        return all(
            abs(float(self.coefficient(k)) - float(other.coefficient(k))) <= rel_tol * scale
            for k in keys
        )

    # -- arithmetic -------------------------------------------------------

    def _check_compatible(self, other: "WickPolynomial") -> None:
        if self.basis != other.basis or self.model_id != other.model_id:
            raise BasisMismatchError(
                f"Cannot combine a {self._basis_label()} polynomial with a "
                f"{other._basis_label()} polynomial; convert one of them first"
            )

    def _basis_label(self) -> str:
        return self.basis if self.basis == MONOMIAL else f"appell[{self.model_id}]"

    def _lift(self, other: Any) -> "WickPolynomial":
        if isinstance(other, WickPolynomial):
            self._check_compatible(other)
            return other
        return WickPolynomial.constant(other, self.basis, self.model_id)

    def _new(self, terms: Mapping[Multiset, Any]) -> "WickPolynomial":
        return WickPolynomial(terms, self.basis, self.model_id)

    def __add__(self, other: Any) -> "WickPolynomial":
        other = self._lift(other)
        terms = dict(self._terms)
        for I, c in other._terms.items():
            terms[I] = terms.get(I, Fraction(0)) + c
        return self._new(terms)

    __radd__ = __add__

    def __neg__(self) -> "WickPolynomial":
        return self._new({I: -c for I, c in self._terms.items()})

    def __sub__(self, other: Any) -> "WickPolynomial":
        return self + (-self._lift(other))

    def __rsub__(self, other: Any) -> "WickPolynomial":
        return self._lift(other) - self

    def scale(self, factor: Any) -> "WickPolynomial":
        factor = coerce_coefficient(factor)
        return self._new({I: factor * c for I, c in self._terms.items()})

    def __mul__(self, other: Any) -> "WickPolynomial":
        """Scalar multiple, or the ordinary product of two monomial-basis polynomials."""
        if not isinstance(other, WickPolynomial):
            return self.scale(other)
        self._check_compatible(other)
        if self.basis != MONOMIAL:
            raise BasisMismatchError(
                "Ordinary products are defined on the monomial basis; "
                "use wick_utils.appell.multiply for Appell polynomials"
            )
        terms: dict[Multiset, Coefficient] = {}
        for I, a in self._terms.items():
            for J, b in other._terms.items():
                K = I + J
                terms[K] = terms.get(K, Fraction(0)) + a * b
        return self._new(terms)

    def __rmul__(self, other: Any) -> "WickPolynomial":
        return self.scale(other)

    def __truediv__(self, other: Any) -> "WickPolynomial":
        other = coerce_coefficient(other)
        return self.scale(1 / other)

    def __pow__(self, n: int) -> "WickPolynomial":
        if n < 0:
            raise ValueError("Negative powers are not polynomials")
        result = WickPolynomial.constant(1, self.basis, self.model_id)
        for _ in range(n):
            result = result * self
        return result

    def map_coefficients(self, fn: Any) -> "WickPolynomial":
        return self._new({I: fn(c) for I, c in self._terms.items()})

    def to_float(self) -> "WickPolynomial":
        return self.map_coefficients(float)

    # -- calculus and substitution ----------------------------------------

    def differentiate(self, J: Union[Multiset, str, Any]) -> "WickPolynomial":
        """
        ``d_J x^I = C(I, J) x^{I - J}``.

        The rule is the same for Appell polynomials, so the basis is kept.
        """
        J = as_multiset(J)
        terms: dict[Multiset, Coefficient] = {}
        for I, c in self._terms.items():
            mult = multiplicity_coefficient(I, J)
            if mult:
                K = I - J
                terms[K] = terms.get(K, Fraction(0)) + mult * c
        return self._new(terms)

    def substitute(self, mapping: Mapping[Hashable, "WickPolynomial"]) -> "WickPolynomial":
        """Replace symbols by monomial-basis polynomials; unmapped symbols stay as they are."""
        if self.basis != MONOMIAL:
            raise BasisMismatchError("Substitution needs the monomial basis")
        result = WickPolynomial.zero()
        powers: dict[tuple[Hashable, int], WickPolynomial] = {}
        for I, c in self._terms.items():
            term = WickPolynomial.constant(c)
            for symbol, count in I.items:
                if symbol in mapping:
                    key = (symbol, count)
                    if key not in powers:
                        powers[key] = mapping[symbol] ** count
                    term = term * powers[key]
                else:
                    term = term * WickPolynomial.monomial(Multiset([symbol] * count))
            result = result + term
        return result

    def evaluate(self, values: Mapping[Hashable, Any]) -> Any:
        """
        Evaluate a monomial-basis polynomial.

        Scalars of type int/Fraction give an exact result; numpy arrays are
        broadcast and give a float array.
        """
        if self.basis != MONOMIAL:
            raise BasisMismatchError("Evaluate the monomial form; convert with to_monomial_basis")
        missing = [s for s in self.symbols() if s not in values]
        if missing:
            raise KeyError(f"No value for symbol(s) {', '.join(map(str, missing))}")
        vectorized = any(isinstance(values[s], np.ndarray) for s in self.symbols())
        if vectorized:
            arrays = {s: np.asarray(values[s], dtype=float) for s in self.symbols()}
            total: Any = np.zeros(np.broadcast_shapes(*(a.shape for a in arrays.values())))
            for I, c in self.items():
                term = np.full(total.shape, float(c))
                for symbol, count in I.items:
                    term = term * arrays[symbol] ** count
                total = total + term
            return total
        total = Fraction(0)
        for I, c in self.items():
            term: Any = c
            for symbol, count in I.items:
                term = term * values[symbol] ** count
            total = total + term
        return total

    # -- rendering --------------------------------------------------------

    def _basis_element(self, I: Multiset) -> str:
        if not I:
            return ""
        if self.basis == APPELL:
            symbols = I.symbols()
            if len(symbols) == 1:
                return f"{symbol_name(symbols[0])}^{{⋄{len(I)}}}"
            return "x^{⋄" + str(Multiset(symbol_name(s) for s in I)) + "}"
        factors = []
        for symbol, count in I.items:
            name = symbol_name(symbol)
            factors.append(name if count == 1 else f"{name}^{count}")
        return "*".join(factors)

    def _join(self, pieces: list[tuple[Coefficient, str]]) -> str:
        out = []
        for k, (c, element) in enumerate(pieces):
            negative = c < 0
            magnitude = -c if negative else c
            text = format_coefficient(magnitude)
            if element:
                if magnitude == 1:
                    text = element
                else:
                    if "/" in text or "e" in text:
                        text = f"({text})"
                    text = f"{text}{element}"
            if k == 0:
                out.append(f"-{text}" if negative else text)
            else:
                out.append(f" - {text}" if negative else f" + {text}")
        return "".join(out) if out else "0"

    def pretty(self) -> str:
        """
        Human-readable rendering.

        Univariate polynomials are written densely from the top degree down,
        keeping zero coefficients (``"x^3 - 3x^2 + 0x + 1"``); others list
        their nonzero terms by decreasing degree.
        """
        symbols = self.symbols()
        if len(symbols) == 1:
            symbol = symbols[0]
            pieces = []
            for n in range(self.degree, -1, -1):
                I = Multiset([symbol] * n)
                pieces.append((self.coefficient(I), self._basis_element(I)))
            return self._join(pieces)
        ordered = sorted(self._terms.items(), key=lambda kv: kv[0].sort_key(), reverse=True)
        ordered.sort(key=lambda kv: -len(kv[0]))
        return self._join([(c, self._basis_element(I)) for I, c in ordered])

    def __str__(self) -> str:
        return self.pretty()

    def __repr__(self) -> str:
        suffix = "" if self.basis == MONOMIAL else f", appell[{self.model_id}]"
        return f"WickPolynomial({self.pretty()!r}{suffix})"

    # -- serialization ----------------------------------------------------

    def to_json(self) -> dict[str, Any]:
        return {
            "basis": self.basis,
            "model_id": self.model_id,
            "terms": {
                I.to_string(): (format_coefficient(c) if isinstance(c, Fraction) else float(c))
                for I, c in self.items()
            },
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "WickPolynomial":
        if "terms" not in data:
            raise ValueError("Polynomial JSON needs a 'terms' object")
        return cls(
            {Multiset.parse(k): v for k, v in data["terms"].items()},
            data.get("basis", MONOMIAL),
            data.get("model_id"),
        )
