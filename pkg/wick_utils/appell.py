"""Appell polynomials, basis conversion and the Wick product of a cumulant model.

The Appell polynomial ``x^{<>I}`` of a model is built four ways (recursion on
moments, the closed partition formula, the cumulant generating function and
inversion of the monomial expansion); all four agree exactly in rational mode.
"""
import math
import warnings
from collections.abc import Hashable, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Any, Optional, Union

import sympy

from .combinatorics import Multiset, as_multiset, enumerate_diagrams, enumerate_set_partitions
from .config import check_slot_cap
from .cumulants import CumulantModel, diagram_weight, partition_sum
from .errors import BasisMismatchError, ConvergenceError, ModelError, WellDefinednessError
from .polynomial import APPELL, MONOMIAL, WickPolynomial, coerce_coefficient

MultisetLike = Union[Multiset, str, Sequence[Hashable]]

APPELL_METHODS = ("recursive", "closed", "generating", "inverse")


def _one(model: CumulantModel) -> Any:
    return Fraction(1) if model.rational_exact else 1.0


def appell_recursive(
    I: MultisetLike, model: CumulantModel, cap: Optional[int] = None
) -> WickPolynomial:
    """
    ``x^{<>I} = x^I - sum_{0 != J <= I} C(I, J) E[X^J] x^{<>I-J}`` with ``x^{<>0} = 1``.

    Returns the polynomial in the monomial basis.
    """
    I = as_multiset(I)
    check_slot_cap(len(I), cap, "Appell index")
    moments: dict[Multiset, Any] = {}
    memo: dict[Multiset, WickPolynomial] = {}

    def expectation(J: Multiset) -> Any:
        if J not in moments:
            moments[J] = partition_sum(J, model, sign=1)
        return moments[J]

    def rec(M: Multiset) -> WickPolynomial:
        if M in memo:
            return memo[M]
        result = WickPolynomial.monomial(M)
        for J, coef in M.submultisets(nonempty=True):
            m = expectation(J)
            if m:
                result = result - rec(M - J).scale(coef * m)
        memo[M] = result
        return result

    return rec(I)


def appell_closed_form(
    I: MultisetLike, model: CumulantModel, cap: Optional[int] = None
) -> WickPolynomial:
    """
    ``x^{<>I} = sum_{J <= I} x^J sum_{pi in P(I - J)} (-1)^|pi| kappa[X]^pi``.

    The inner sum runs over set partitions of positions, enumerated explicitly.
    """
    I = as_multiset(I)
    check_slot_cap(len(I), cap, "Appell index")
    terms: dict[Multiset, Any] = {}
    for J, coef in I.submultisets():
        rest = (I - J).elements()
        total: Any = 0
        for partition in enumerate_set_partitions(range(len(rest)), cap=cap):
            term: Any = (-1) ** len(partition)
            for block in partition:
                term *= model.kappa(rest[i] for i in block)
                if term == 0:
                    break
            total += term
        if total:
            terms[J] = coef * total
    return WickPolynomial(terms)


def appell_from_generating(
    n: int,
    model: CumulantModel,
    symbol: Optional[Hashable] = None,
    cap: Optional[int] = None,
) -> WickPolynomial:
    """
    Univariate ``x^{<>n}`` as ``d^n/dtheta^n exp(theta x - K(theta))`` at ``theta = 0``.

    ``exp(-K(theta))`` is expanded as a truncated power series with sympy, giving
    ``x^{<>n} = n! sum_j e_j x^(n-j) / (n-j)!``.
    """
    check_slot_cap(n, cap, "Appell index")
    if symbol is None:
        if model.components is None or len(model.components) != 1:
            raise ModelError("The generating-function form needs a univariate model")
        symbol = model.components[0]
    theta = sympy.Symbol("theta")
    exact = model.rational_exact

    def to_sympy(value: Any) -> sympy.Expr:
        if exact:
            value = Fraction(value)
            return sympy.Rational(value.numerator, value.denominator)
        return sympy.Float(float(value))

    K = sum(
        (to_sympy(model.kappa([symbol] * l)) * theta**l / sympy.factorial(l) for l in range(1, n + 1)),
        sympy.Integer(0),
    )
    series = sympy.series(sympy.exp(-K), theta, 0, n + 1).removeO()
    terms: dict[Multiset, Any] = {}
    for j in range(n + 1):
        e_j = series.coeff(theta, j)
        c = coerce_coefficient(sympy.factorial(n) * e_j / sympy.factorial(n - j))
        if c:
            terms[Multiset([symbol] * (n - j))] = c
    return WickPolynomial(terms)


def to_appell_basis(p: WickPolynomial, model: CumulantModel, cap: Optional[int] = None) -> WickPolynomial:
    """``x^I = sum_{J <= I} C(I, J) E[X^{I-J}] x^{<>J}``."""
    if p.basis == APPELL:
        _check_model(p, model)
        return p
    check_slot_cap(p.degree, cap, "polynomial degree")
    memo: dict = {}
    terms: dict[Multiset, Any] = {}
    for I, c in p.items():
        for J, coef in I.submultisets():
            m = partition_sum(I - J, model, sign=1, memo=memo)
            if m:
                terms[J] = terms.get(J, 0) + c * coef * m
    return WickPolynomial(terms, APPELL, model.model_id)


def to_monomial_basis(p: WickPolynomial, model: CumulantModel, cap: Optional[int] = None) -> WickPolynomial:
    """``x^{<>I} = sum_{J <= I} C(I, J) x^J sum_{pi in P(I-J)} prod_B (-kappa(B))``."""
    if p.basis == MONOMIAL:
        return p
    _check_model(p, model)
    check_slot_cap(p.degree, cap, "polynomial degree")
    memo: dict = {}
    terms: dict[Multiset, Any] = {}
    for I, c in p.items():
        for J, coef in I.submultisets():
            s = partition_sum(I - J, model, sign=-1, memo=memo)
            if s:
                terms[J] = terms.get(J, 0) + c * coef * s
    return WickPolynomial(terms)


def _check_model(p: WickPolynomial, model: CumulantModel) -> None:
    if p.basis == APPELL and p.model_id != model.model_id:
        raise BasisMismatchError(
            f"Polynomial is in the Appell basis of {p.model_id}, not of {model.model_id}"
        )


def to_basis(p: WickPolynomial, basis: str, model: CumulantModel) -> WickPolynomial:
    if basis == APPELL:
        return to_appell_basis(p, model)
    if basis == MONOMIAL:
        return to_monomial_basis(p, model)
    raise ValueError(f"Unknown basis {basis!r}")


def appell_polynomial(
    I: MultisetLike, model: CumulantModel, method: str = "recursive", cap: Optional[int] = None
) -> WickPolynomial:
    """Dispatch to one of the four constructions; result in the monomial basis."""
    I = as_multiset(I)
    if method == "recursive":
        return appell_recursive(I, model, cap)
    if method == "closed":
        return appell_closed_form(I, model, cap)
    if method == "generating":
        symbols = I.symbols()
        if len(symbols) > 1:
            raise ModelError("The generating-function form needs a single-symbol index")
        return appell_from_generating(len(I), model, symbols[0] if symbols else None, cap)
    if method == "inverse":
        return to_monomial_basis(WickPolynomial.appell(I, model.model_id), model, cap)
    raise ValueError(f"Unknown Appell method {method!r}; expected one of {APPELL_METHODS}")


def multiply(p: WickPolynomial, q: WickPolynomial, model: CumulantModel) -> WickPolynomial:
    """Ordinary product, returned in the basis of ``p``."""
    product = to_monomial_basis(p, model) * to_monomial_basis(q, model)
    return to_basis(product, p.basis, model)


def wick_product(
    p: WickPolynomial,
    q: WickPolynomial,
    model: CumulantModel,
    basis: Optional[str] = None,
    as_random_variables: bool = False,
    cap: Optional[int] = None,
) -> WickPolynomial:
    """
    Wick product ``p <> q`` defined by ``x^{<>I} <> x^{<>J} = x^{<>I+J}``.

    Parameters
    ----------
    p, q : WickPolynomial
        Either basis; Appell inputs must belong to ``model``
    model : CumulantModel
    basis : str, optional
        Basis of the result (default: basis of ``p``)
    as_random_variables : bool
        The result will be read as a product of the random variables ``p(X)``
        and ``q(X)``. Only well defined when no polynomial vanishes on ``X``.
    cap : int, optional

    Returns
    -------
    WickPolynomial
    """
    if as_random_variables and not model.polynomial_relation_free:
        raise WellDefinednessError(
            f"Model {model.model_id} is not known to be free of polynomial relations; "
            "the Wick product of p(X) and q(X) then depends on the polynomial "
            "representatives, not on the random variables"
        )
    check_slot_cap(p.degree + q.degree, cap, "Wick product degree")
    a = to_appell_basis(p, model, cap)
    b = to_appell_basis(q, model, cap)
    terms: dict[Multiset, Any] = {}
    for I, c in a.items():
        for J, d in b.items():
            K = I + J
            terms[K] = terms.get(K, 0) + c * d
    result = WickPolynomial(terms, APPELL, model.model_id)
    return to_basis(result, basis or p.basis, model)


def wick_product_all(polys: Sequence[WickPolynomial], model: CumulantModel, **kwargs: Any) -> WickPolynomial:
    """``p_1 <> ... <> p_m`` (associative, so folded left to right)."""
    if not polys:
        return WickPolynomial.constant(1)
    return reduce(lambda a, b: wick_product(a, b, model, **kwargs), polys)


# ---------------------------------------------------------------------------
# Diagram expansions


def product_formula_expand(
    rows: Sequence[MultisetLike], model: CumulantModel, cap: Optional[int] = None
) -> WickPolynomial:
    """``prod_j x^{<>I_j} = sum_{D non-flat} kappa^pi x^{<>K}`` in the Appell basis."""
    terms: dict[Multiset, Any] = {}
    for d in enumerate_diagrams(rows, non_flat=True, cap=cap):
        w = diagram_weight(d, model)
        if w:
            K = d.residual_multiset()
            terms[K] = terms.get(K, 0) + w
    return WickPolynomial(terms, APPELL, model.model_id)


def reverse_product_expand(
    rows: Sequence[MultisetLike], model: CumulantModel, cap: Optional[int] = None
) -> WickPolynomial:
    """``x^{I_1} <> ... <> x^{I_m} = sum_{D non-flat} (-1)^|pi| kappa^pi x^K`` in the monomial basis."""
    terms: dict[Multiset, Any] = {}
    for d in enumerate_diagrams(rows, non_flat=True, cap=cap):
        w = diagram_weight(d, model)
        if w:
            K = d.residual_multiset()
            terms[K] = terms.get(K, 0) + (-1) ** len(d.edges) * w
    return WickPolynomial(terms)


def change_of_chaos_expand(
    rows: Sequence[MultisetLike], model: CumulantModel, cap: Optional[int] = None
) -> WickPolynomial:
    """
    ``y^1 <>_Y ... <>_Y y^m`` with ``Y^k = X^{<>I_k}``, in the X-Appell basis.

    Sums ``kappa^pi x^{<>K}`` over connected non-flat diagrams with nonempty
    residual. Substitution of ``y^k`` happens after the product.
    """
    terms: dict[Multiset, Any] = {}
    for d in enumerate_diagrams(rows, non_flat=True, connected=True, cap=cap):
        if not d.residual:
            continue
        w = diagram_weight(d, model)
        if w:
            K = d.residual_multiset()
            terms[K] = terms.get(K, 0) + w
    return WickPolynomial(terms, APPELL, model.model_id)


# ---------------------------------------------------------------------------
# Exponential example


@dataclass
class ExpSeriesResult:
    """Truncated ``sum_{l >= 2} kappa_l / (l - 1)!`` with a geometric tail estimate."""

    value: float
    order: int
    terms: list[float] = field(default_factory=list)
    partial_sums: list[float] = field(default_factory=list)
    ratio: Optional[float] = None
    tail_bound: float = 0.0
    conclusive: bool = True
    exact: Any = None

    def to_json(self) -> dict[str, Any]:
        return {
            "value": self.value,
            "order": self.order,
            "ratio": self.ratio,
            "tail_bound": self.tail_bound,
            "conclusive": self.conclusive,
            "partial_sums": self.partial_sums,
        }


def exp_wick_coefficient(
    model: CumulantModel,
    order: int = 30,
    ratio_threshold: float = 0.95,
    symbol: Optional[Hashable] = None,
) -> ExpSeriesResult:
    """
    Coefficient ``c`` in ``E[e^X X] = c E[e^X]`` for a centred univariate ``X``.

    The series ``sum_{l >= 2} kappa_l / (l - 1)!`` is truncated at ``order``.
    Its ratio ``|a_N / a_(N-1)|`` over the last terms bounds the tail by
    ``|a_N| r / (1 - r)``.

    Parameters
    ----------
    model : CumulantModel
        Univariate, centred
    order : int
        Last cumulant order included
    ratio_threshold : float
        Ratios in ``[ratio_threshold, 1)`` mark the result inconclusive

    Returns
    -------
    ExpSeriesResult

    Raises
    ------
    ConvergenceError
        When the ratio estimate is at least 1
    """
    if symbol is None:
        if model.components is None or len(model.components) != 1:
            raise ModelError("The exponential coefficient needs a univariate model")
        symbol = model.components[0]
    if model.kappa([symbol]) != 0:
        raise ModelError("The exponential coefficient needs a centred model")
    if order < 2:
        raise ValueError("order must be at least 2")

    exact_terms = [model.kappa([symbol] * l) / math.factorial(l - 1) for l in range(2, order + 1)]
    terms = [float(a) for a in exact_terms]
    partial: list[float] = []
    running = 0.0
    for a in terms:
        running += a
        partial.append(running)
    exact_sum = sum(exact_terms, Fraction(0) if model.rational_exact else 0.0)

    nonzero = [i for i, a in enumerate(terms) if a != 0]
    if model.max_cumulant_order is not None and model.max_cumulant_order <= order:
        return ExpSeriesResult(running, order, terms, partial, 0.0, 0.0, True, exact_sum)
    if not nonzero:
        return ExpSeriesResult(running, order, terms, partial, 0.0, 0.0, True, exact_sum)

    ratios = [
        abs(terms[i] / terms[i - 1]) for i in range(max(1, len(terms) - 3), len(terms)) if terms[i - 1]
    ]
    ratio = max(ratios) if ratios else 0.0
    if ratio >= 1:
        raise ConvergenceError(
            f"Cumulant series diverges for {model.model_id}: term ratio {ratio:.4g} >= 1 at order {order}"
        )
    tail = abs(terms[-1]) * ratio / (1 - ratio)
    conclusive = ratio < ratio_threshold
    if not conclusive:
        warnings.warn(
            f"Ratio test inconclusive for {model.model_id}: ratio {ratio:.4g} above "
            f"threshold {ratio_threshold}",
            stacklevel=2,
        )
    return ExpSeriesResult(running, order, terms, partial, ratio, tail, conclusive, exact_sum)


def truncated_exp_wick(
    order: int, model: CumulantModel, symbol: Optional[Hashable] = None
) -> WickPolynomial:
    """``(sum_{n <= N} x^n / n!) <> x`` in the monomial basis."""
    if symbol is None:
        if model.components is None or len(model.components) != 1:
            raise ModelError("truncated_exp_wick needs a univariate model")
        symbol = model.components[0]
    exp_n = WickPolynomial(
        {Multiset([symbol] * n): Fraction(1, math.factorial(n)) for n in range(order + 1)}
    )
    return wick_product(exp_n, WickPolynomial.variable(symbol), model, cap=max(order + 1, 12))
