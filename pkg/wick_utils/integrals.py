"""Discretized Wick integrals and the Itô-type correction formulas.

All sums use left endpoints of a partition of ``[s, t]``. For the integrand
``p_b(X_u)`` against ``dX^b`` the Wick sum is expanded on each interval as::

    p_b(X_u) X^b_{u,v} - sum_{a != 0} D_a p_b(X_u) (kappa[X_u^a, X^b_v] - kappa[X_u^a, X^b_u])

with ``D_a = d_a / a!`` (:meth:`WickPolynomial.differentiate`). The correction
is deterministic given the grid, so :class:`WickSumPlan` computes it once and
evaluates any number of paths.
"""
import math
from collections.abc import Hashable, Mapping, Sequence
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Optional, Union

import numpy as np
from scipy import integrate

from .appell import appell_polynomial
from .combinatorics import Multiset
from .cumulants import (
    DEFAULT_SYMBOL,
    CumulantModel,
    RosenblattModel,
    ShiftedProcessModel,
    TimeSliceModel,
    Variable,
    moment,
)
from .errors import BasisMismatchError, GridMismatchError, ModelError, WellDefinednessError
from .polynomial import MONOMIAL, WickPolynomial

PolynomialMap = dict[Hashable, WickPolynomial]
Integrand = Union[WickPolynomial, Mapping[Hashable, WickPolynomial], Callable[[float], Any]]

QUADRATURE_METHODS = ("stieltjes", "trapezoid")
YOUNG_RULES = ("left", "trapezoid")
STRUCTURES = ("generic", "independent", "exchangeable_gaussian")


@dataclass
class SamplePath:
    """
    Values of a ``d``-dimensional path on a strictly increasing time grid.

    ``values[k, j]`` is component ``components[j]`` at ``times[k]``; a 1-D
    ``values`` array is read as a single component.
    """

    times: np.ndarray
    values: np.ndarray
    components: tuple = (DEFAULT_SYMBOL,)

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        self.values = values
        self.components = tuple(self.components)
        if self.times.ndim != 1 or len(self.times) == 0:
            raise ValueError("A sample path needs a non-empty 1-D time grid")
        if values.shape != (len(self.times), len(self.components)):
            raise GridMismatchError(
                f"Values of shape {values.shape} do not match {len(self.times)} times "
                f"and {len(self.components)} components"
            )
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("Path times must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("Path values must be finite")

    @property
    def n_intervals(self) -> int:
        return len(self.times) - 1

    @property
    def mesh(self) -> float:
        return float(np.max(np.diff(self.times))) if self.n_intervals else 0.0

    def column(self, component: Hashable) -> np.ndarray:
        return self.values[:, self.components.index(component)]

    def index_of(self, t: float) -> int:
        return grid_index(self.times, t)

    def value_at(self, t: float, component: Optional[Hashable] = None) -> float:
        j = 0 if component is None else self.components.index(component)
        return float(self.values[self.index_of(t), j])

    def restrict(self, s: Optional[float] = None, t: Optional[float] = None) -> "SamplePath":
        """Sub-path on the grid points of ``[s, t]``; both ends must be grid points."""
        i = 0 if s is None else self.index_of(s)
        j = len(self.times) - 1 if t is None else self.index_of(t)
        if j < i:
            raise ValueError(f"Empty interval [{s}, {t}]")
        return SamplePath(self.times[i : j + 1], self.values[i : j + 1], self.components)

    def subsample(self, grid: Sequence[float]) -> "SamplePath":
        idx = [self.index_of(u) for u in grid]
        return SamplePath(self.times[idx], self.values[idx], self.components)

    def to_json(self) -> dict[str, Any]:
        return {
            "times": self.times.tolist(),
            "values": self.values.tolist(),
            "components": [str(c) for c in self.components],
        }


def grid_index(times: np.ndarray, t: float) -> int:
    k = int(np.searchsorted(times, t))
    for idx in (k - 1, k):
        if 0 <= idx < len(times) and math.isclose(times[idx], t, rel_tol=1e-12, abs_tol=1e-12):
            return idx
    raise GridMismatchError(f"Time {t} is not a point of the path grid")


def dyadic_levels(path: SamplePath, levels: int = 5) -> list[SamplePath]:
    """Coarsenings of ``path`` by factors ``2^(levels-1), ..., 2, 1`` (coarsest first)."""
    factor = 2 ** (levels - 1)
    if path.n_intervals % factor:
        raise ValueError(
            f"{path.n_intervals} intervals cannot be coarsened {levels - 1} times by halving"
        )
    return [
        SamplePath(path.times[::step], path.values[::step], path.components)
        for step in (2**k for k in reversed(range(levels)))
    ]


# ---------------------------------------------------------------------------
# Integrands


def _as_polynomial_map(p: Any, components: Sequence[Hashable]) -> PolynomialMap:
    if isinstance(p, WickPolynomial):
        if len(components) != 1:
            raise ValueError("Give one integrand per component for a multi-dimensional path")
        mapping = {components[0]: p}
    elif isinstance(p, Mapping):
        mapping = dict(p)
    else:
        mapping = {components[0]: WickPolynomial.constant(p)}
    for b, q in mapping.items():
        if b not in components:
            raise ModelError(f"Integrand for unknown component {b!r}")
        if q.basis != MONOMIAL:
            raise BasisMismatchError(
                "Integrands must be in the monomial basis; convert with to_monomial_basis"
            )
    return mapping


def _integrand_at(p: Integrand, components: Sequence[Hashable]) -> Callable[[float], PolynomialMap]:
    if callable(p):
        return lambda u: _as_polynomial_map(p(u), components)
    fixed = _as_polynomial_map(p, components)
    return lambda u: fixed


def _derivative_indices(q: WickPolynomial, max_size: Optional[int]) -> list[Multiset]:
    found: set[Multiset] = set()
    for I in q:
        for J, _ in I.submultisets(nonempty=True):
            if max_size is None or len(J) <= max_size:
                found.add(J)
    return sorted(found, key=Multiset.sort_key)


def _timed(alpha: Multiset, u: float) -> list[Variable]:
    return [Variable(a, u) for a in alpha]


def _model_components(model: Optional[CumulantModel], components: Optional[Sequence]) -> tuple:
    if components is not None:
        return tuple(components)
    if model is not None and model.components is not None:
        return model.components
    return (DEFAULT_SYMBOL,)


def _check_process(model: CumulantModel) -> None:
    if not model.time_indexed:
        raise ModelError(f"Model {model.model_id} is not a process; integrals need timed variables")


def _monomial_values(monomials: Sequence[Multiset], left: np.ndarray, index: Mapping) -> np.ndarray:
    out = np.ones(left.shape[:-1] + (len(monomials),))
    for k, m in enumerate(monomials):
        for symbol, count in m.items:
            out[..., k] *= left[..., index[symbol]] ** count
    return out


def _evaluate_on(q: WickPolynomial, columns: Mapping[Hashable, np.ndarray], n: int) -> np.ndarray:
    if not q.symbols():
        return np.full(n, float(q.coefficient(Multiset())))
    return np.asarray(q.evaluate(columns), dtype=float)


# ---------------------------------------------------------------------------
# Riemann-Stieltjes-Wick sums


@dataclass
class PolynomialTable:
    """Polynomials indexed by interval, stored as rows over one list of monomials."""

    monomials: list[Multiset]
    coefficients: np.ndarray

    @classmethod
    def from_rows(cls, rows: Sequence[WickPolynomial]) -> "PolynomialTable":
        monomials = sorted({I for poly in rows for I in poly}, key=Multiset.sort_key)
        index = {I: k for k, I in enumerate(monomials)}
        table = np.zeros((len(rows), len(monomials)))
        for i, poly in enumerate(rows):
            for I, c in poly.items():
                table[i, index[I]] = float(c)
        return cls(monomials, table)

    def values(self, left: np.ndarray, index: Mapping[Hashable, int]) -> np.ndarray:
        """Row ``i`` evaluated at ``left[..., i, :]``; shape ``left.shape[:-1]``."""
        if not self.monomials:
            return np.zeros(left.shape[:-1])
        basis = _monomial_values(self.monomials, left, index)
        return np.einsum("pim,im->pi", basis, self.coefficients)


def _as_batch(values: Any, n_times: int, components: tuple) -> tuple[np.ndarray, bool]:
    X = np.asarray(values, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    single = X.ndim == 2
    if single:
        X = X[None]
    if X.shape[1:] != (n_times, len(components)):
        raise GridMismatchError(
            f"Values of shape {X.shape[1:]} do not match the plan grid "
            f"({n_times} times, {len(components)} components)"
        )
    return X, single


def _unbatch(value: np.ndarray, single: bool) -> Any:
    return float(value[0]) if single else value


@dataclass
class WickSumValue:
    """Pieces of a left-point sum; arrays when several paths were evaluated."""

    young: Any
    correction: Any
    drift: Any
    centre: bool = False

    @property
    def wick(self) -> Any:
        """Wick sum against ``X`` (or against ``X - mean`` when ``centre``)."""
        if self.centre:
            return self.young - self.drift - self.correction
        return self.young - self.correction


@dataclass
class WickSumPlan:
    """
    Deterministic part of a Wick sum on a fixed grid.

    Per integrator component ``b`` it holds the integrand and correction
    polynomials of every interval and the increments of the mean.
    """

    times: np.ndarray
    components: tuple
    integrand: dict[Hashable, PolynomialTable]
    correction: dict[Hashable, PolynomialTable]
    drift: dict[Hashable, np.ndarray]
    centre: bool = False
    model_id: Optional[str] = None

    @property
    def n_intervals(self) -> int:
        return len(self.times) - 1

    def evaluate(self, values: Any) -> WickSumValue:
        """
        Evaluate on one path (``(n_times, d)``) or a batch (``(n_paths, n_times, d)``).

        Interval sums use numpy's pairwise summation so results do not depend
        on how a batch is split.
        """
        X, single = _as_batch(values, len(self.times), self.components)
        left = X[:, :-1, :]
        incr = np.diff(X, axis=1)
        index = {c: j for j, c in enumerate(self.components)}
        young = np.zeros(X.shape[0])
        correction = np.zeros(X.shape[0])
        drift = np.zeros(X.shape[0])
        for b, table in self.integrand.items():
            integrand = table.values(left, index)
            young += np.sum(integrand * incr[:, :, index[b]], axis=1)
            drift += np.sum(integrand * self.drift[b][None, :], axis=1)
            correction += np.sum(self.correction[b].values(left, index), axis=1)
        return WickSumValue(
            _unbatch(young, single),
            _unbatch(correction, single),
            _unbatch(drift, single),
            self.centre,
        )

    def trapezoid(self, values: Any) -> Any:
        """
        Trapezoidal Young sum ``sum_b sum (p_b(X_u) + p_b(X_v)) / 2 X^b_{u,v}``.

        Same limit as the left-point sum when the path has finite
        ``q``-variation for some ``q < 2``, with a much smaller bias at a fixed
        mesh; for ``p(x) = x`` it telescopes to ``(X_t^2 - X_s^2) / 2``.
        """
        X, single = _as_batch(values, len(self.times), self.components)
        incr = np.diff(X, axis=1)
        index = {c: j for j, c in enumerate(self.components)}
        total = np.zeros(X.shape[0])
        for b, table in self.integrand.items():
            average = (table.values(X[:, :-1, :], index) + table.values(X[:, 1:, :], index)) / 2
            total += np.sum(average * incr[:, :, index[b]], axis=1)
        return _unbatch(total, single)


def _interval_correction(
    q: WickPolynomial, b: Hashable, u: float, v: float, model: CumulantModel
) -> WickPolynomial:
    max_size = None if model.max_cumulant_order is None else model.max_cumulant_order - 1
    result = WickPolynomial.zero()
    for alpha in _derivative_indices(q, max_size):
        D = q.differentiate(alpha)
        if not D:
            continue
        left = _timed(alpha, u)
        delta = float(model.kappa(left + [Variable(b, v)])) - float(
            model.kappa(left + [Variable(b, u)])
        )
        if delta:
            result = result + D.scale(delta)
    return result


def _grid(times: Any) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise ValueError("Empty grid")
    return times


def _build_plan(
    p: Integrand,
    times: Any,
    components: tuple,
    model: Optional[CumulantModel],
    centre: bool,
) -> WickSumPlan:
    times = _grid(times)
    integrand_at = _integrand_at(p, components)
    n_int = len(times) - 1
    rows: dict[Hashable, list[WickPolynomial]] = {}
    corrections: dict[Hashable, list[WickPolynomial]] = {}
    drift: dict[Hashable, np.ndarray] = {}
    for i in range(n_int):
        u, v = float(times[i]), float(times[i + 1])
        for b, q in integrand_at(u).items():
            if b not in rows:
                rows[b] = [WickPolynomial.zero()] * n_int
                corrections[b] = [WickPolynomial.zero()] * n_int
                drift[b] = np.zeros(n_int)
            rows[b][i] = q
            if model is not None:
                corrections[b][i] = _interval_correction(q, b, u, v, model)
                drift[b][i] = float(model.mean(b, v)) - float(model.mean(b, u))
    return WickSumPlan(
        times,
        components,
        {b: PolynomialTable.from_rows(r) for b, r in rows.items()},
        {b: PolynomialTable.from_rows(r) for b, r in corrections.items()},
        drift,
        centre,
        model.model_id if model is not None else None,
    )


def prepare_wick_sum(
    p: Integrand,
    model: CumulantModel,
    times: Any,
    centre: bool = False,
    components: Optional[Sequence[Hashable]] = None,
) -> WickSumPlan:
    """
    Precompute the deterministic part of ``sum p_b(X_u) <> X^b_{u,v}`` on a grid.

    Parameters
    ----------
    p : WickPolynomial, mapping or callable
        Integrand in the monomial basis; a mapping gives one polynomial per
        integrator component; a callable ``u -> integrand`` gives a
        time-dependent integrand
    model : CumulantModel
        Time-indexed, polynomial-relation-free model of ``X``
    times : array_like
        Partition points
    centre : bool
        Integrate against ``X - E[X]`` instead of ``X``

    Raises
    ------
    WellDefinednessError
        The model is not flagged polynomial-relation-free
    """
    _check_process(model)
    if not model.polynomial_relation_free:
        raise WellDefinednessError(
            f"Model {model.model_id} is not flagged polynomial-relation-free; "
            "Wick sums of its random variables are not well defined"
        )
    return _build_plan(p, times, _model_components(model, components), model, centre)


def _restricted(path: SamplePath, partition: Optional[Sequence[float]]) -> SamplePath:
    if partition is None:
        return path
    if len(partition) == 0:
        raise ValueError("Empty grid")
    return path.subsample(partition)


def young_integral(
    p: Integrand,
    path: SamplePath,
    grid: Optional[Sequence[float]] = None,
    rule: str = "left",
) -> float:
    """
    Riemann-Stieltjes sum ``sum_b sum p_b(X_u) X^b_{u,v}``.

    ``rule="trapezoid"`` averages the integrand over both ends of each
    interval; see :meth:`WickSumPlan.trapezoid`.
    """
    if rule not in YOUNG_RULES:
        raise ValueError(f"Unknown Young rule {rule!r}; expected one of {YOUNG_RULES}")
    path = _restricted(path, grid)
    if path.n_intervals == 0:
        return 0.0
    plan = _build_plan(p, path.times, path.components, None, False)
    if rule == "trapezoid":
        return plan.trapezoid(path.values)
    return plan.evaluate(path.values).young


def wick_riemann_sum(
    p: Integrand,
    path: SamplePath,
    model: CumulantModel,
    partition: Optional[Sequence[float]] = None,
    centre: bool = False,
) -> float:
    """
    Left-point Riemann-Stieltjes-Wick sum ``sum_b sum p_b(X_u) <> X^b_{u,v}``.

    ``partition`` selects grid points of ``path``; by default every point is used.
    """
    path = _restricted(path, partition)
    if path.n_intervals == 0:
        return 0.0
    plan = prepare_wick_sum(p, model, path.times, centre, path.components)
    return plan.evaluate(path.values).wick


def mean_drift_integral(p: Integrand, path: SamplePath, model: CumulantModel) -> float:
    """``sum p_b(X_u) (mu^b(v) - mu^b(u))``: the part of the Wick sum carried by the mean."""
    _check_process(model)
    if path.n_intervals == 0:
        return 0.0
    plan = _build_plan(p, path.times, path.components, model, False)
    return plan.evaluate(path.values).drift


# ---------------------------------------------------------------------------
# Correction formulas


@dataclass(frozen=True)
class ItoTerm:
    """One term ``weight * int d_alpha p_b(X_u) kappa^{alpha b}(u, ..., u, du)``."""

    alpha: Multiset
    weight: Fraction
    derivative: WickPolynomial
    beta: Optional[Hashable] = None

    @property
    def order(self) -> int:
        """Order of the cumulant in the term."""
        return len(self.alpha) + (self.beta is not None)

    def scaled_derivative(self) -> WickPolynomial:
        return self.derivative.scale(self.weight)

    def to_json(self) -> dict[str, Any]:
        return {
            "alpha": self.alpha.to_string(),
            "beta": None if self.beta is None else str(self.beta),
            "weight": str(self.weight),
            "order": self.order,
            "derivative": self.derivative.pretty(),
        }


@dataclass
class ItoStratonovichResult:
    """Term list of a correction formula with its pathwise value and its mean."""

    kind: str
    terms: list[ItoTerm]
    s: float
    t: float
    mean: float
    mean_error: float = 0.0
    pathwise: Optional[float] = None
    method: str = "stieltjes"
    structure: str = "generic"
    model: str = ""

    @property
    def term_count(self) -> int:
        return len(self.terms)

    def to_json(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "model": self.model,
            "interval": [self.s, self.t],
            "method": self.method,
            "structure": self.structure,
            "terms": [term.to_json() for term in self.terms],
            "pathwise": self.pathwise,
            "mean": self.mean,
            "mean_error": self.mean_error,
        }


def _expectation(q: WickPolynomial, model: CumulantModel, u: float) -> float:
    total = 0.0
    for I, c in q.items():
        total += float(c) * float(moment(_timed(I, u), model))
    return total


def _interval(
    model: CumulantModel, path: Optional[SamplePath], s: Optional[float], t: Optional[float]
) -> tuple[float, float, Optional[SamplePath]]:
    if path is not None:
        s = float(path.times[0]) if s is None else s
        t = float(path.times[-1]) if t is None else t
        path = path.restrict(s, t)
    s = 0.0 if s is None else float(s)
    t = model.horizon if t is None else float(t)
    if t < s:
        raise ValueError(f"Empty interval [{s}, {t}]")
    return s, t, path


class _Rates:
    """Cumulant increments and time derivatives for a term list."""

    def __init__(self, model: CumulantModel, structure: str, components: tuple):
        self.model = model
        self.structure = structure
        self.pair: Optional[tuple[Hashable, Hashable]] = None
        if structure == "exchangeable_gaussian":
            self.pair = _check_exchangeable(model, components)

    def _representative(self, term: ItoTerm) -> tuple[Multiset, Hashable]:
        if self.pair is None or term.beta is None:
            return term.alpha, term.beta
        first, second = self.pair
        (a,) = term.alpha.elements()
        if a == term.beta:
            return Multiset([first]), first
        return Multiset([first]), second

    def increment(self, term: ItoTerm, u: float, v: float) -> float:
        """``kappa^{alpha b}`` increment over ``[u, v]`` in the integrator slot."""
        if term.beta is None:
            return float(self.model.kappa(_timed(term.alpha, v))) - float(
                self.model.kappa(_timed(term.alpha, u))
            )
        alpha, beta = self._representative(term)
        left = _timed(alpha, u)
        return float(self.model.kappa(left + [Variable(beta, v)])) - float(
            self.model.kappa(left + [Variable(beta, u)])
        )

    def rate(self, term: ItoTerm, u: float) -> float:
        if term.beta is None:
            variables = _timed(term.alpha, u)
            return sum(
                self.model.kappa_time_derivative(variables, slot) for slot in range(len(variables))
            )
        alpha, beta = self._representative(term)
        return self.model.kappa_time_derivative(_timed(alpha, u) + [Variable(beta, u)], -1)


def _check_exchangeable(model: CumulantModel, components: tuple) -> tuple[Hashable, Hashable]:
    if model.max_cumulant_order != 2:
        raise ModelError("The exchangeable-Gaussian form needs a Gaussian model")
    if len(components) < 2:
        return components[0], components[0]
    t = model.horizon
    diag = [float(model.kappa([Variable(c, t), Variable(c, t)])) for c in components]
    off = [
        float(model.kappa([Variable(a, t), Variable(b, t)]))
        for i, a in enumerate(components)
        for b in components[i + 1 :]
    ]
    if not (np.allclose(diag, diag[0], rtol=1e-12) and np.allclose(off, off[0], rtol=1e-12)):
        raise ModelError(f"Components of {model.model_id} are not exchangeable")
    return components[0], components[1]


def _pathwise(
    terms: list[ItoTerm], rates: _Rates, path: SamplePath, method: str
) -> float:
    if path.n_intervals == 0:
        return 0.0
    columns = {c: path.column(c) for c in path.components}
    n = len(path.times)
    total = 0.0
    for term in terms:
        values = _evaluate_on(term.scaled_derivative(), columns, n)
        if method == "stieltjes":
            increments = np.array(
                [
                    rates.increment(term, float(u), float(v))
                    for u, v in zip(path.times[:-1], path.times[1:])
                ]
            )
            total += float(np.sum(values[:-1] * increments))
        else:
            weights = np.array([rates.rate(term, float(u)) for u in path.times])
            total += float(integrate.trapezoid(values * weights, path.times))
    return total


def _mean(terms: list[ItoTerm], rates: _Rates, s: float, t: float) -> tuple[float, float]:
    if t == s or not terms:
        return 0.0, 0.0

    def integrand(u: float) -> float:
        return sum(
            _expectation(term.scaled_derivative(), rates.model, u) * rates.rate(term, u)
            for term in terms
        )

    value, error = integrate.quad(integrand, s, t, limit=200)
    return float(value), float(error)


def _check_method(method: str, structure: str = "generic") -> None:
    if method not in QUADRATURE_METHODS:
        raise ValueError(f"Unknown quadrature method {method!r}; expected one of {QUADRATURE_METHODS}")
    if structure not in STRUCTURES:
        raise ValueError(f"Unknown structure {structure!r}; expected one of {STRUCTURES}")


def ito_stratonovich_terms(
    p: Union[WickPolynomial, Mapping[Hashable, WickPolynomial]],
    model: CumulantModel,
    structure: str = "generic",
    components: Optional[Sequence[Hashable]] = None,
) -> list[ItoTerm]:
    """
    Terms ``(1/alpha!) d_alpha p_b`` of the Itô-Stratonovich correction.

    Multi-indices whose cumulant order exceeds the model's maximal order are
    dropped, so a Gaussian model only yields ``|alpha| = 1``. With
    ``structure="independent"`` only ``alpha`` made of the integrator
    component itself is kept.
    """
    components = _model_components(model, components)
    mapping = _as_polynomial_map(p, components)
    max_size = None if model.max_cumulant_order is None else model.max_cumulant_order - 1
    if structure == "independent" and getattr(model, "independent_components", True) is False:
        raise ModelError(f"Components of {model.model_id} are not independent")
    terms = []
    for b in sorted(mapping, key=components.index):
        q = mapping[b]
        for alpha in _derivative_indices(q, max_size):
            if structure == "independent" and any(a != b for a in alpha):
                continue
            D = q.differentiate(alpha)
            if not D:
                continue
            k = alpha.factorial()
            terms.append(ItoTerm(alpha, Fraction(1, k), D.scale(k), b))
    return terms


def ito_stratonovich_correction(
    p: Union[WickPolynomial, Mapping[Hashable, WickPolynomial]],
    model: CumulantModel,
    s: Optional[float] = None,
    t: Optional[float] = None,
    path: Optional[SamplePath] = None,
    method: str = "stieltjes",
    structure: str = "generic",
) -> ItoStratonovichResult:
    """
    ``sum_b sum_{alpha != 0} (1/alpha!) int_s^t d_alpha p_b(X_u) kappa^{alpha b}(u, ..., u, du)``.

    Parameters
    ----------
    p : WickPolynomial or mapping
        Integrand ``p_b`` per integrator component
    model : CumulantModel
        Time-indexed model; cumulants must be C1 in the integrator slot
    s, t : float, optional
        Interval (defaults: the path ends, else ``[0, horizon]``)
    path : SamplePath, optional
        When given, the pathwise correction is computed on its grid
    method : {"stieltjes", "trapezoid"}
        ``"stieltjes"`` uses cumulant increments over each interval;
        ``"trapezoid"`` integrates the time derivative with the trapezoid rule
    structure : {"generic", "independent", "exchangeable_gaussian"}
        Use the simplified forms for independent or exchangeable Gaussian
        components

    Returns
    -------
    ItoStratonovichResult
        The mean is ``sum (1/alpha!) int E[d_alpha p_b(X_u)] kappa^{alpha b}(u, ..., u, du)``
        by adaptive quadrature

    Raises
    ------
    ConvergenceError
        A finite-difference time derivative is unstable (cumulant not C1)
    """
    _check_process(model)
    _check_method(method, structure)
    s, t, path = _interval(model, path, s, t)
    components = _model_components(model, path.components if path is not None else None)
    terms = ito_stratonovich_terms(p, model, structure, components)
    rates = _Rates(model, structure, components)
    mean, error = _mean(terms, rates, s, t)
    pathwise = _pathwise(terms, rates, path, method) if path is not None else None
    return ItoStratonovichResult(
        "ito-stratonovich", terms, s, t, mean, error, pathwise, method, structure, model.model_id
    )


def _ito_terms(p: WickPolynomial, model: CumulantModel) -> list[ItoTerm]:
    terms = []
    for gamma in _derivative_indices(p, model.max_cumulant_order):
        if len(gamma) < 2:
            continue
        D = p.differentiate(gamma)
        if D:
            k = gamma.factorial()
            terms.append(ItoTerm(gamma, Fraction(1, k), D.scale(k)))
    return terms


def ito_correction(
    p: WickPolynomial,
    model: CumulantModel,
    s: Optional[float] = None,
    t: Optional[float] = None,
    path: Optional[SamplePath] = None,
    method: str = "stieltjes",
) -> ItoStratonovichResult:
    """
    Change-of-variables correction ``sum_{|g| >= 2} (1/g!) int d_g p(X_u) kappa^g(du)``.

    ``kappa^g(u)`` is the equal-time cumulant ``kappa[X_u^{g_1}, ..., X_u^{g_m}]``
    and ``kappa^g(du)`` its total time derivative.
    """
    _check_process(model)
    _check_method(method)
    s, t, path = _interval(model, path, s, t)
    terms = _ito_terms(p, model)
    rates = _Rates(model, "generic", _model_components(model, None))
    mean, error = _mean(terms, rates, s, t)
    pathwise = _pathwise(terms, rates, path, method) if path is not None else None
    return ItoStratonovichResult(
        "ito", terms, s, t, mean, error, pathwise, method, "generic", model.model_id
    )


def rosenblatt_ito_correction(
    p: WickPolynomial,
    model: RosenblattModel,
    s: Optional[float] = None,
    t: Optional[float] = None,
    path: Optional[SamplePath] = None,
    method: str = "stieltjes",
) -> ItoStratonovichResult:
    """
    Itô correction of a Rosenblatt process from its scaling law:
    ``sum_{n >= 2} kappa_n[X_1] H / (n-1)! int p^(n)(X_u) u^(nH-1) du``.
    """
    if not isinstance(model, RosenblattModel):
        raise ModelError("The closed Rosenblatt correction needs a RosenblattModel")
    _check_method(method)
    s, t, path = _interval(model, path, s, t)
    (symbol,) = model.components
    H = model.H
    terms = []
    for n in range(2, p.degree + 1):
        D = p.differentiate([symbol] * n)
        if D:
            k = math.factorial(n)
            terms.append(ItoTerm(Multiset([symbol] * n), Fraction(1, k), D.scale(k)))

    def scale(n: int) -> float:
        # (1/n!) p^(n) * n H kappa_n[X_1] = kappa_n[X_1] H / (n-1)! p^(n)
        return model.unit_cumulant(n) * n * H

    mean = error = 0.0
    if t > s and terms:

        def integrand(u: float) -> float:
            total = 0.0
            for term in terms:
                n = len(term.alpha)
                expected = _expectation(term.scaled_derivative(), model, u)
                total += scale(n) * expected * u ** (n * H - 1)
            return total

        mean, error = integrate.quad(integrand, s, t, limit=200)
    pathwise = None
    if path is not None:
        pathwise = 0.0
        columns = {symbol: path.column(symbol)}
        for term in terms:
            n = len(term.alpha)
            values = _evaluate_on(term.scaled_derivative(), columns, len(path.times))
            if method == "stieltjes":
                increments = np.diff(path.times ** (n * H)) / n
                pathwise += scale(n) * float(np.sum(values[:-1] * increments))
            else:
                weights = path.times ** (n * H - 1)
                pathwise += scale(n) * float(integrate.trapezoid(values * weights, path.times))
    return ItoStratonovichResult(
        "rosenblatt-ito",
        terms,
        s,
        t,
        float(mean),
        float(error),
        pathwise,
        method,
        model=model.model_id,
    )


# ---------------------------------------------------------------------------
# Pathwise identities


@dataclass
class ItoResidual:
    """
    Same-grid pieces of the Itô formula for ``p``; arrays for a batch of paths.

    ``lhs - wick - correction`` tends to zero with the mesh; subtracting the
    second-order fluctuation ``sum D_g p(X_u) (X^g_{u,v} - kappa[X^g_{u,v}])``
    (``|g| = 2``) leaves ``residual``, which vanishes identically for
    polynomials of degree at most 2.
    """

    lhs: Any
    wick: Any
    correction: Any
    quadratic_variation: Any

    @property
    def limit_residual(self) -> Any:
        return self.lhs - self.wick - self.correction

    @property
    def residual(self) -> Any:
        return self.limit_residual - self.quadratic_variation

    def to_json(self) -> dict[str, Any]:
        return {
            "lhs": self.lhs,
            "wick": self.wick,
            "correction": self.correction,
            "quadratic_variation": self.quadratic_variation,
            "limit_residual": self.limit_residual,
            "residual": self.residual,
        }


def _increment_covariance(model: CumulantModel, a: Hashable, b: Hashable, u: float, v: float) -> float:
    k = model.kappa
    return float(
        k([Variable(a, v), Variable(b, v)])
        - k([Variable(a, u), Variable(b, v)])
        - k([Variable(a, v), Variable(b, u)])
        + k([Variable(a, u), Variable(b, u)])
    )


@dataclass
class ItoResidualPlan:
    """Grid tables for :func:`ito_residual`; evaluates single paths or batches."""

    p: WickPolynomial
    times: np.ndarray
    components: tuple
    wick: WickSumPlan
    correction: PolynomialTable
    quadratic: list[tuple[Hashable, Hashable, PolynomialTable, np.ndarray]]

    def evaluate(self, values: Any) -> ItoResidual:
        X, single = _as_batch(values, len(self.times), self.components)
        index = {c: j for j, c in enumerate(self.components)}
        left = X[:, :-1, :]
        incr = np.diff(X, axis=1)
        ends = PolynomialTable.from_rows([self.p, self.p]).values(X[:, [0, -1], :], index)
        lhs = ends[:, 1] - ends[:, 0]
        wick = np.asarray(self.wick.evaluate(X).wick)
        correction = np.sum(self.correction.values(left, index), axis=1)
        quadratic = np.zeros(X.shape[0])
        for a, b, table, cov in self.quadratic:
            fluctuation = incr[:, :, index[a]] * incr[:, :, index[b]] - cov[None, :]
            quadratic += np.sum(table.values(left, index) * fluctuation, axis=1)
        return ItoResidual(
            _unbatch(lhs, single),
            _unbatch(wick, single),
            _unbatch(correction, single),
            _unbatch(quadratic, single),
        )


def prepare_ito_residual(
    p: WickPolynomial,
    model: CumulantModel,
    times: Any,
    components: Optional[Sequence[Hashable]] = None,
) -> ItoResidualPlan:
    """
    Tables for ``p(X_t) - p(X_s)`` against the Wick sum of the gradient plus the
    discretized correction ``sum_{|g| >= 2} D_g p(X_u) (kappa^g(v) - kappa^g(u))``.
    """
    _check_process(model)
    times = _grid(times)
    components = _model_components(model, components)
    if len(times) < 2:
        raise ValueError("The Itô residual needs at least one interval")
    gradient = {b: p.differentiate([b]) for b in components}
    wick = prepare_wick_sum(gradient, model, times, components=components)
    terms = _ito_terms(p, model)
    rows = []
    for u, v in zip(times[:-1], times[1:]):
        row = WickPolynomial.zero()
        for term in terms:
            delta = float(model.kappa(_timed(term.alpha, float(v)))) - float(
                model.kappa(_timed(term.alpha, float(u)))
            )
            if delta:
                row = row + term.scaled_derivative().scale(delta)
        rows.append(row)
    quadratic = []
    intervals = [(float(u), float(v)) for u, v in zip(times[:-1], times[1:])]
    for gamma in _derivative_indices(p, 2):
        if len(gamma) != 2:
            continue
        a, b = gamma.elements()
        D = p.differentiate(gamma)
        cov = np.array([_increment_covariance(model, a, b, u, v) for u, v in intervals])
        quadratic.append((a, b, PolynomialTable.from_rows([D] * len(intervals)), cov))
    return ItoResidualPlan(p, times, components, wick, PolynomialTable.from_rows(rows), quadratic)


def ito_residual(p: WickPolynomial, path: SamplePath, model: CumulantModel) -> ItoResidual:
    """Check ``p(X_t) - p(X_s) = int dp(X) <> dX + Itô correction`` on the path grid."""
    if path.n_intervals == 0:
        return ItoResidual(0.0, 0.0, 0.0, 0.0)
    plan = prepare_ito_residual(p, model, path.times, path.components)
    return plan.evaluate(path.values)


@dataclass
class ScalarIdentityReport:
    """
    ``int_s^t X^{<>n} <> dX`` against ``(X^{<>(n+1)}_t - X^{<>(n+1)}_s) / (n+1)``
    along dyadic refinements of one path.
    """

    n: int
    s: float
    t: float
    model: str
    mesh_table: list[dict[str, float]]
    shifted: bool = False
    seed: Optional[int] = None

    @property
    def lhs(self) -> float:
        return self.mesh_table[-1]["lhs"]

    @property
    def rhs(self) -> float:
        return self.mesh_table[-1]["rhs"]

    @property
    def residual(self) -> float:
        return self.mesh_table[-1]["residual"]

    @property
    def monotone(self) -> bool:
        sizes = [abs(row["residual"]) for row in self.mesh_table]
        return all(b <= a for a, b in zip(sizes, sizes[1:]))

    @property
    def rate(self) -> Optional[float]:
        """Least-squares slope of ``log |residual|`` against ``log mesh``."""
        rows = [row for row in self.mesh_table if abs(row["residual"]) > 0 and row["mesh"] > 0]
        if len(rows) < 2:
            return None
        slope = np.polyfit(
            np.log([row["mesh"] for row in rows]), np.log([abs(row["residual"]) for row in rows]), 1
        )[0]
        return float(slope)

    def to_json(self) -> dict[str, Any]:
        return {
            "identity": "shifted-scalar" if self.shifted else "scalar",
            "n": self.n,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "residual": self.residual,
            "rate": self.rate,
            "monotone": self.monotone,
            "mesh_table": self.mesh_table,
            "seed": self.seed,
            "model": self.model,
            "grid": {"s": self.s, "t": self.t, "n_intervals": self.mesh_table[-1]["n_intervals"]},
        }


@dataclass
class ScalarIdentityPlan:
    """Wick sums of ``X^{<>n}`` on every dyadic level of a grid, with the end Wick powers."""

    n: int
    times: np.ndarray
    s: float
    t: float
    model_id: str
    shifted: bool
    levels: list[tuple[np.ndarray, WickSumPlan]]
    power_s: WickPolynomial
    power_t: WickPolynomial
    symbol: Hashable

    def evaluate(self, values: Any) -> list[dict[str, Any]]:
        """Mesh table rows; entries are arrays for a batch of paths."""
        X, single = _as_batch(values, len(self.times), (self.symbol,))
        if self.shifted:
            X = X - X[:, :1, :]
        x_s, x_t = X[:, 0, 0], X[:, -1, 0]
        rhs = (
            _evaluate_on(self.power_t, {self.symbol: x_t}, len(x_t))
            - _evaluate_on(self.power_s, {self.symbol: x_s}, len(x_s))
        ) / (self.n + 1)
        table = []
        for idx, plan in self.levels:
            lhs = np.asarray(plan.evaluate(X[:, idx, :]).wick)
            table.append(
                {
                    "n_intervals": plan.n_intervals,
                    "mesh": float(np.max(np.diff(plan.times))) if plan.n_intervals else 0.0,
                    "lhs": _unbatch(lhs, single),
                    "rhs": _unbatch(rhs, single),
                    "residual": _unbatch(lhs - rhs, single),
                }
            )
        return table


def prepare_scalar_identity(
    n: int,
    model: CumulantModel,
    times: Any,
    levels: int = 5,
    shifted: bool = False,
) -> ScalarIdentityPlan:
    """
    Plans for ``int X^{<>n} <> dX = (X^{<>(n+1)})_{s,t} / (n+1)`` on ``times`` and its
    dyadic coarsenings; ``s`` and ``t`` are the grid ends.

    Wick powers at time ``u`` are Appell polynomials of the law of ``X_u``.
    With ``shifted=True`` the process is ``X_u - X_s``.
    """
    _check_process(model)
    if model.components is None or len(model.components) != 1:
        raise ModelError("The scalar identities need a one-dimensional model")
    if n < 0:
        raise ValueError(f"Wick power must be non-negative, got {n}")
    times = _grid(times)
    (symbol,) = model.components
    s, t = float(times[0]), float(times[-1])
    if abs(float(model.mean(symbol, t))) > 1e-12:
        raise ModelError("The scalar identities need a centred model; wrap it in CentredModel")
    if shifted:
        model = ShiftedProcessModel(model, s)
    cache: dict[tuple[int, float], WickPolynomial] = {}

    def wick_power(k: int, u: float) -> WickPolynomial:
        key = (k, u)
        if key not in cache:
            cache[key] = appell_polynomial([symbol] * k, TimeSliceModel(model, u))
        return cache[key]

    factor = 2 ** (levels - 1)
    if (len(times) - 1) % factor:
        raise ValueError(
            f"{len(times) - 1} intervals cannot be coarsened {levels - 1} times by halving"
        )
    plans = []
    for step in (2**k for k in reversed(range(levels))):
        idx = np.arange(0, len(times), step)
        plan = prepare_wick_sum(
            lambda u: wick_power(n, u), model, times[idx], components=(symbol,)
        )
        plans.append((idx, plan))
    return ScalarIdentityPlan(
        n,
        times,
        s,
        t,
        model.model_id,
        shifted,
        plans,
        wick_power(n + 1, s),
        wick_power(n + 1, t),
        symbol,
    )


def verify_scalar_identities(
    n: int,
    path: SamplePath,
    model: CumulantModel,
    s: Optional[float] = None,
    t: Optional[float] = None,
    levels: int = 5,
    shifted: bool = False,
    seed: Optional[int] = None,
) -> ScalarIdentityReport:
    """
    Residuals of ``int X^{<>n} <> dX = (X^{<>(n+1)})_{s,t} / (n+1)`` under dyadic refinement.

    With ``shifted=True`` the process is ``X_u - X_s`` and the right-hand
    side is ``(X_t - X_s)^{<>(n+1)} / (n+1)``. Nothing is asserted; the
    report holds the mesh table.
    """
    s, t, path = _interval(model, path, s, t)
    plan = prepare_scalar_identity(n, model, path.times, levels, shifted)
    return ScalarIdentityReport(n, s, t, plan.model_id, plan.evaluate(path.values), shifted, seed)
