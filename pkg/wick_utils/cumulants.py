"""Cumulant models and the moment/cumulant partition identities.

A model is an oracle returning the joint cumulant of a finite list of
variables. Everything else (moments, Appell polynomials, diagram sums) is
computed from that oracle.
"""
import hashlib
import json
import math
import threading
from abc import ABC, abstractmethod
from collections import OrderedDict
from collections.abc import Hashable, Iterable, Mapping, Sequence
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Any, Callable, Optional, Union

import fsspec
import numpy as np
import sympy

from .chaos2 import Chaos2Kernel, joint_cumulant_trace
from .combinatorics import (
    Multiset,
    as_multiset,
    enumerate_diagrams,
    enumerate_set_partitions,
    symbol_key,
)
from .config import KAPPA_CACHE_SIZE, check_slot_cap
from .errors import ConvergenceError, GridMismatchError, ModelError

Number = Union[int, Fraction, float]

DEFAULT_SYMBOL = "x"


@dataclass(frozen=True)
class Variable:
    """Component symbol, optionally observed at a time."""

    component: Hashable
    time: Optional[float] = None

    def sort_key(self) -> tuple:
        when = (0,) if self.time is None else (1, float(self.time))
        return (symbol_key(self.component), when)

    def at(self, time: Optional[float]) -> "Variable":
        return Variable(self.component, time)

    def __str__(self) -> str:
        if self.time is None:
            return str(self.component)
        return f"{self.component}@{self.time:g}"


def as_variable(obj: Any) -> Variable:
    if isinstance(obj, Variable):
        return obj
    return Variable(obj)


def to_number(value: Any, exact: bool) -> Number:
    """Convert table input (int, float, ``"p/q"`` string, Fraction) to Fraction or float."""
    if isinstance(value, str):
        value = Fraction(value)
    if exact:
        if isinstance(value, float):
            return Fraction(value).limit_denominator(10**12)
        return Fraction(value)
    return float(value)


def is_rational(value: Any) -> bool:
    if isinstance(value, (int, Fraction)) and not isinstance(value, bool):
        return True
    if isinstance(value, str):
        try:
            Fraction(value)
        except ValueError:
            return False
        return True
    return False


class CumulantModel(ABC):
    """
    Oracle for joint cumulants of (component, time) variables.

    Subclasses implement :meth:`_kappa` on a canonically sorted, non-empty tuple
    of variables. Values are kept in a per-model LRU memo of
    :attr:`cache_limit` entries behind a lock so one model can be shared by
    worker threads.

    Attributes
    ----------
    model_id : str
        Stable identifier; tags Appell bases built from this model
    rational_exact : bool
        Cumulants are returned as ``Fraction``
    polynomial_relation_free : bool
        No nonzero polynomial vanishes on the base variables, so the Wick
        product of evaluated random variables is well defined
    components : tuple or None
        Declared index set; ``None`` accepts any symbol
    max_cumulant_order : int or None
        Cumulants above this order vanish identically (2 for Gaussian models)
    time_indexed : bool
        Variables carry times
    horizon : float
        Time horizon used to scale finite-difference steps
    cache_limit : int
        Maximum number of memoized cumulants
    """

    rational_exact: bool = False
    polynomial_relation_free: bool = False
    max_cumulant_order: Optional[int] = None
    time_indexed: bool = False
    horizon: float = 1.0
    cache_limit: int = KAPPA_CACHE_SIZE

    def __init__(self, model_id: str, components: Optional[Sequence[Hashable]] = None):
        self.model_id = model_id
        self.components = tuple(components) if components is not None else None
        self._cache: OrderedDict[tuple[Variable, ...], Number] = OrderedDict()
        self._lock = threading.Lock()

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.model_id!r})"

    def zero(self) -> Number:
        return Fraction(0) if self.rational_exact else 0.0

    def _check_variable(self, v: Variable) -> None:
        if self.components is not None and v.component not in self.components:
            raise ModelError(
                f"Component {v.component!r} is not in the index set {self.components} "
                f"of model {self.model_id}"
            )
        if self.time_indexed and v.time is None:
            raise ModelError(f"Model {self.model_id} needs timed variables, got {v}")
        if not self.time_indexed and v.time is not None:
            raise ModelError(f"Model {self.model_id} is static, got timed variable {v}")

    def kappa(self, variables: Iterable[Any]) -> Number:
        """Joint cumulant of ``variables`` (symmetric in its arguments)."""
        vs = tuple(sorted((as_variable(v) for v in variables), key=Variable.sort_key))
        if not vs:
            return self.zero()
        if self.max_cumulant_order is not None and len(vs) > self.max_cumulant_order:
            return self.zero()
        with self._lock:
            cached = self._cache.get(vs)
            if cached is not None:
                self._cache.move_to_end(vs)
                return cached
        for v in vs:
            self._check_variable(v)
        value = self._kappa(vs)
        with self._lock:
            self._cache[vs] = value
            while len(self._cache) > self.cache_limit:
                self._cache.popitem(last=False)
        return value

    @abstractmethod
    def _kappa(self, variables: tuple[Variable, ...]) -> Number:
        ...

    def mean(self, component: Hashable = DEFAULT_SYMBOL, time: Optional[float] = None) -> Number:
        return self.kappa([Variable(component, time)])

    def cache_size(self) -> int:
        return len(self._cache)

    def clear_cache(self) -> None:
        with self._lock:
            self._cache.clear()

    # -- time derivatives -------------------------------------------------

    def _kappa_time_derivative(
        self, variables: tuple[Variable, ...], slot: int
    ) -> Optional[float]:
        """Analytic derivative hook; ``None`` falls back to finite differences."""
        return None

    def kappa_time_derivative(
        self, variables: Sequence[Any], slot: int = -1, step: Optional[float] = None
    ) -> float:
        """
        Derivative of the joint cumulant in the time of one variable.

        Parameters
        ----------
        variables : sequence of Variable
            Timed variables
        slot : int
            Position of the differentiated variable (default: the last one)
        step : float, optional
            Finite-difference step (default ``1e-5 * horizon``)

        Returns
        -------
        float
        """
        vs = tuple(as_variable(v) for v in variables)
        if not vs:
            return 0.0
        idx = slot % len(vs)
        if vs[idx].time is None:
            raise ModelError(f"Variable {vs[idx]} has no time to differentiate")
        if self.max_cumulant_order is not None and len(vs) > self.max_cumulant_order:
            return 0.0
        analytic = self._kappa_time_derivative(vs, idx)
        if analytic is not None:
            return float(analytic)
        return self._finite_difference(vs, idx, step)

    def _finite_difference(
        self, vs: tuple[Variable, ...], idx: int, step: Optional[float]
    ) -> float:
        h = step if step is not None else 1e-5 * self.horizon
        t = float(vs[idx].time)

        def f(time: float) -> float:
            moved = list(vs)
            moved[idx] = vs[idx].at(time)
            return float(self.kappa(moved))

        def diff(h: float) -> float:
            if t - h >= 0:
                return (f(t + h) - f(t - h)) / (2 * h)
            return (-3 * f(t) + 4 * f(t + h) - f(t + 2 * h)) / (2 * h)

        coarse, fine = diff(h), diff(h / 2)
        scale = max(1.0, abs(fine))
        if abs(coarse - fine) > 1e-4 * scale:
            raise ConvergenceError(
                f"Cumulant of {', '.join(map(str, vs))} is not C1 in slot {idx}: "
                f"finite differences {coarse:.6g} and {fine:.6g} disagree"
            )
        return (4 * fine - coarse) / 3


# ---------------------------------------------------------------------------
# Static models


def _stable_id(prefix: str, payload: Any) -> str:
    digest = hashlib.sha1(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()
    return f"{prefix}:{digest[:12]}"


class TableModel(CumulantModel):
    """Static model given by a table of joint cumulants; missing entries are zero."""

    def __init__(
        self,
        kappa: Mapping[Union[Multiset, str], Any],
        components: Optional[Sequence[Hashable]] = None,
        model_id: Optional[str] = None,
        relation_free: bool = False,
    ):
        exact = all(is_rational(v) for v in kappa.values())
        table = {as_multiset(k): to_number(v, exact) for k, v in kappa.items()}
        if components is None:
            symbols: set = set()
            for key in table:
                symbols.update(key.symbols())
            components = sorted(symbols, key=symbol_key)
        payload = {k.to_string(): str(v) for k, v in table.items()}
        super().__init__(model_id or _stable_id("table", payload), components)
        self.table = {k: v for k, v in table.items() if v != 0}
        self.rational_exact = exact
        self.polynomial_relation_free = relation_free

    def _kappa(self, variables: tuple[Variable, ...]) -> Number:
        return self.table.get(Multiset(v.component for v in variables), self.zero())

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.model_id,
            "vars": list(self.components or ()),
            "relation_free": self.polynomial_relation_free,
            "kappa": {
                k.to_string(): (str(v) if self.rational_exact else float(v))
                for k, v in sorted(self.table.items(), key=lambda kv: kv[0].sort_key())
            },
        }

    @classmethod
    def from_json(
        cls, path: str, storage_options: Optional[dict[str, Any]] = None
    ) -> "TableModel":
        """
        Load a table model from JSON ``{"vars": [...], "kappa": {"x,x": "1/2", ...}}``.

        Parameters
        ----------
        path : str
            Local path or fsspec URL
        storage_options : dict, optional
            Passed to ``fsspec.open``
        """
        storage_options = storage_options or {}
        with fsspec.open(path, "r", **storage_options) as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ModelError(f"Invalid JSON in table model {path}: {e}") from e
        if "kappa" not in data:
            raise ModelError(f"Table model {path} has no 'kappa' entry")
        return cls(
            data["kappa"],
            components=data.get("vars"),
            model_id=data.get("id"),
            relation_free=bool(data.get("relation_free", False)),
        )


class GaussianModel(CumulantModel):
    """Static Gaussian vector: means and a covariance matrix, higher cumulants zero."""

    max_cumulant_order = 2

    def __init__(
        self,
        covariance: Sequence[Sequence[Any]],
        components: Optional[Sequence[Hashable]] = None,
        mean: Optional[Sequence[Any]] = None,
        model_id: Optional[str] = None,
    ):
        rows = [list(r) for r in covariance]
        d = len(rows)
        if any(len(r) != d for r in rows):
            raise ModelError("Covariance must be a square matrix")
        components = tuple(range(d)) if components is None else tuple(components)
        if len(components) != d:
            raise ModelError("Covariance size and component list differ")
        means = list(mean) if mean is not None else [0] * d
        exact = all(is_rational(v) for r in rows for v in r) and all(is_rational(v) for v in means)
        self.cov = {
            (components[i], components[j]): to_number(rows[i][j], exact)
            for i in range(d)
            for j in range(d)
        }
        for i in range(d):
            for j in range(i):
                if self.cov[components[i], components[j]] != self.cov[components[j], components[i]]:
                    raise ModelError("Covariance must be symmetric")
        self.means = {c: to_number(m, exact) for c, m in zip(components, means)}
        payload = {"cov": [[str(v) for v in r] for r in rows], "mean": [str(m) for m in means]}
        super().__init__(model_id or _stable_id("gaussian", payload), components)
        self.rational_exact = exact
        eigenvalues = np.linalg.eigvalsh(
            np.array([[float(self.cov[a, b]) for b in components] for a in components])
        )
        self.polynomial_relation_free = bool(d > 0 and eigenvalues.min() > 1e-12)

    @classmethod
    def standard(cls, d: int = 1, components: Optional[Sequence[Hashable]] = None) -> "GaussianModel":
        components = components or ((DEFAULT_SYMBOL,) if d == 1 else tuple(range(d)))
        eye = [[1 if i == j else 0 for j in range(d)] for i in range(d)]
        return cls(eye, components=components, model_id="gaussian:std" if d == 1 else None)

    def _kappa(self, variables: tuple[Variable, ...]) -> Number:
        if len(variables) == 1:
            return self.means[variables[0].component]
        return self.cov[variables[0].component, variables[1].component]


class UnivariateModel(CumulantModel):
    """Single-component static model with cumulants ``kappa_n`` given as a function of ``n``."""

    def __init__(
        self,
        kappa_n: Callable[[int], Any],
        model_id: str,
        component: Hashable = DEFAULT_SYMBOL,
        rational_exact: bool = False,
        relation_free: bool = True,
    ):
        super().__init__(model_id, (component,))
        self.kappa_n = kappa_n
        self.rational_exact = rational_exact
        self.polynomial_relation_free = relation_free

    def _kappa(self, variables: tuple[Variable, ...]) -> Number:
        return to_number(self.kappa_n(len(variables)), self.rational_exact)


class PoissonModel(UnivariateModel):
    """Poisson(lambda): every cumulant equals lambda."""

    def __init__(self, lam: Any, component: Hashable = DEFAULT_SYMBOL):
        exact = is_rational(lam)
        self.lam = to_number(lam, exact)
        if self.lam <= 0:
            raise ModelError(f"Poisson intensity must be positive, got {lam}")
        super().__init__(
            lambda n: self.lam,
            model_id=f"poisson:{self.lam}",
            component=component,
            rational_exact=exact,
        )


def chi_square_model(eps: Any, component: Hashable = DEFAULT_SYMBOL) -> UnivariateModel:
    """Model of ``eps * (Z**2 - 1)``: ``kappa_1 = 0`` and ``kappa_l = eps (2 eps)^(l-1) (l-1)!``."""
    exact = is_rational(eps)
    e = to_number(eps, exact)

    def kappa_n(n: int) -> Number:
        if n == 1:
            return 0 * e
        return e * (2 * e) ** (n - 1) * math.factorial(n - 1)

    return UnivariateModel(kappa_n, f"chi2:{e}", component, rational_exact=exact)


class SecondChaosModel(CumulantModel):
    """Static double Wiener integrals ``I2(f_c)``; joint cumulants are trace sums."""

    def __init__(
        self,
        kernels: Mapping[Hashable, Chaos2Kernel],
        model_id: Optional[str] = None,
        relation_free: Optional[bool] = None,
    ):
        super().__init__(
            model_id or "chaos2:" + ",".join(f"{c}={k.label}" for c, k in kernels.items()),
            tuple(kernels),
        )
        self.kernels = dict(kernels)
        self.polynomial_relation_free = (
            len(kernels) == 1 if relation_free is None else relation_free
        )

    def _kappa(self, variables: tuple[Variable, ...]) -> Number:
        if len(variables) == 1:
            return 0.0
        return joint_cumulant_trace([self.kernels[v.component] for v in variables])


# ---------------------------------------------------------------------------
# Time-indexed models


class GaussianProcessModel(CumulantModel):
    """
    Centred Gaussian process with covariance ``covariance(a, b, s, t)``.

    ``derivative(a, b, s, t)`` is the partial derivative in ``t``; without it
    time derivatives use finite differences.
    """

    max_cumulant_order = 2
    time_indexed = True

    def __init__(
        self,
        covariance: Callable[[Hashable, Hashable, float, float], float],
        components: Sequence[Hashable] = (DEFAULT_SYMBOL,),
        derivative: Optional[Callable[[Hashable, Hashable, float, float], float]] = None,
        model_id: str = "gaussian-process",
        horizon: float = 1.0,
    ):
        super().__init__(model_id, components)
        self.covariance = covariance
        self.derivative = derivative
        self.horizon = horizon
        self.polynomial_relation_free = True

    def _kappa(self, variables: tuple[Variable, ...]) -> Number:
        if len(variables) == 1:
            return 0.0
        a, b = variables
        return float(self.covariance(a.component, b.component, a.time, b.time))

    def _kappa_time_derivative(
        self, variables: tuple[Variable, ...], slot: int
    ) -> Optional[float]:
        if len(variables) != 2:
            return 0.0
        if self.derivative is None:
            return None
        moving = variables[slot]
        other = variables[1 - slot]
        return float(self.derivative(other.component, moving.component, other.time, moving.time))


def fbm_covariance(H: float, s: float, t: float) -> float:
    """``0.5 (s^2H + t^2H - |t - s|^2H)``."""
    return 0.5 * (abs(s) ** (2 * H) + abs(t) ** (2 * H) - abs(t - s) ** (2 * H))


def fbm_covariance_derivative(H: float, s: float, t: float) -> float:
    """Partial derivative of :func:`fbm_covariance` in ``t``; equals ``H t^(2H-1)`` on the diagonal."""
    lag = t - s
    own = H * t ** (2 * H - 1) if t > 0 else (0.0 if H > 0.5 else math.inf)
    if lag == 0:
        return own if H >= 0.5 else math.inf
    return own - H * math.copysign(abs(lag) ** (2 * H - 1), lag)


class FBMModel(GaussianProcessModel):
    """
    Fractional Brownian motion with Hurst index ``H``.

    With several components the covariance is ``mixing[a][b] * R_H(s, t)``;
    the identity mixing gives independent components, a matrix with equal
    diagonal and equal off-diagonal entries gives exchangeable ones.
    """

    def __init__(
        self,
        H: float,
        components: Sequence[Hashable] = (DEFAULT_SYMBOL,),
        mixing: Optional[Sequence[Sequence[float]]] = None,
        horizon: float = 1.0,
    ):
        if not 0 < H < 1:
            raise ModelError(f"Hurst index must lie in (0, 1), got {H}")
        components = tuple(components)
        d = len(components)
        matrix = np.eye(d) if mixing is None else np.asarray(mixing, dtype=float)
        if matrix.shape != (d, d) or not np.allclose(matrix, matrix.T):
            raise ModelError("Mixing matrix must be symmetric and match the components")
        index = {c: i for i, c in enumerate(components)}
        self.H = float(H)
        self.mixing = matrix

        def covariance(a: Hashable, b: Hashable, s: float, t: float) -> float:
            return matrix[index[a], index[b]] * fbm_covariance(self.H, s, t)

        def derivative(a: Hashable, b: Hashable, s: float, t: float) -> float:
            return matrix[index[a], index[b]] * fbm_covariance_derivative(self.H, s, t)

        suffix = "" if mixing is None and d == 1 else f"/d={d}"
        super().__init__(
            covariance,
            components,
            derivative=derivative,
            model_id=f"fbm:{self.H:g}{suffix}",
            horizon=horizon,
        )
        self.polynomial_relation_free = bool(np.linalg.eigvalsh(matrix).min() > 1e-12)

    @property
    def independent_components(self) -> bool:
        return bool(np.allclose(self.mixing, np.diag(np.diag(self.mixing))))


class RosenblattModel(CumulantModel):
    """
    Rosenblatt process with Hurst index ``H``.

    Equal-time cumulants use the scaling law ``kappa_n[X_t] = t^(nH) kappa_n[X_1]``
    with ``kappa_n[X_1]`` from :func:`wick_utils.rosenblatt.rosenblatt_cumulant`;
    distinct times go through :func:`wick_utils.rosenblatt.rosenblatt_joint_cumulant`.
    """

    time_indexed = True

    def __init__(self, H: float, component: Hashable = DEFAULT_SYMBOL, n_cells: int = 64):
        from .rosenblatt import RosenblattSpec

        self.spec = RosenblattSpec.create(H)
        self.H = self.spec.H
        self.n_cells = n_cells
        self._unit: dict[int, float] = {}
        super().__init__(f"rosenblatt:{self.H:g}", (component,))
        self.polynomial_relation_free = True

    def unit_cumulant(self, n: int) -> float:
        """``kappa_n[X_1]``."""
        from .rosenblatt import rosenblatt_cumulant

        if n not in self._unit:
            self._unit[n] = rosenblatt_cumulant(n, 1.0, self.spec).value
        return self._unit[n]

    def _kappa(self, variables: tuple[Variable, ...]) -> Number:
        from .rosenblatt import rosenblatt_joint_cumulant

        n = len(variables)
        if n == 1:
            return 0.0
        times = [float(v.time) for v in variables]
        if max(times) - min(times) == 0:
            return times[0] ** (n * self.H) * self.unit_cumulant(n)
        return rosenblatt_joint_cumulant(times, self.spec, n_cells=self.n_cells).value

    def _kappa_time_derivative(
        self, variables: tuple[Variable, ...], slot: int
    ) -> Optional[float]:
        n = len(variables)
        if n == 1:
            return 0.0
        times = [float(v.time) for v in variables]
        if max(times) - min(times) != 0:
            return None
        u = times[0]
        # d/du kappa_n(u) = n H u^(nH-1) kappa_n(1), shared equally by the n slots
        return self.H * u ** (n * self.H - 1) * self.unit_cumulant(n)


class KernelFamilyModel(CumulantModel):
    """Finite-rank second-chaos process ``X_t = I2(f_t)`` known on a time grid."""

    time_indexed = True

    def __init__(
        self,
        times: Sequence[float],
        kernels: Sequence[Chaos2Kernel],
        component: Hashable = DEFAULT_SYMBOL,
        model_id: Optional[str] = None,
    ):
        if len(times) != len(kernels):
            raise GridMismatchError("Need one kernel per time")
        self.times = np.asarray(times, dtype=float)
        self.kernels = list(kernels)
        self.horizon = float(self.times[-1]) if len(self.times) else 1.0
        super().__init__(model_id or f"chaos2-family:{len(times)}", (component,))
        self.polynomial_relation_free = True

    def kernel_at(self, t: float) -> Chaos2Kernel:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-12 * max(1.0, abs(t)):
            raise GridMismatchError(f"Time {t} is not on the kernel family grid")
        return self.kernels[idx]

    def _kappa(self, variables: tuple[Variable, ...]) -> Number:
        if len(variables) == 1:
            return 0.0
        return joint_cumulant_trace([self.kernel_at(float(v.time)) for v in variables])


# ---------------------------------------------------------------------------
# Model transformations


class _DerivedModel(CumulantModel):
    def __init__(self, base: CumulantModel, model_id: str, components: Optional[Sequence] = None):
        super().__init__(model_id, base.components if components is None else components)
        self.base = base
        self.rational_exact = base.rational_exact
        self.polynomial_relation_free = base.polynomial_relation_free
        self.time_indexed = base.time_indexed
        self.horizon = base.horizon


class CentredModel(_DerivedModel):
    """Same law shifted to mean zero: ``kappa_1 := 0``."""

    def __init__(self, base: CumulantModel):
        super().__init__(base, f"centred({base.model_id})")
        self.max_cumulant_order = base.max_cumulant_order

    def _kappa(self, variables: tuple[Variable, ...]) -> Number:
        if len(variables) == 1:
            return self.zero()
        return self.base.kappa(variables)

    def _kappa_time_derivative(self, variables: tuple[Variable, ...], slot: int) -> Optional[float]:
        if len(variables) == 1:
            return 0.0
        return self.base.kappa_time_derivative(variables, slot)


class DriftModel(_DerivedModel):
    """Adds a deterministic mean function ``mu(component, t)`` to a centred process."""

    def __init__(
        self,
        base: CumulantModel,
        mean: Callable[[Hashable, float], float],
        mean_derivative: Optional[Callable[[Hashable, float], float]] = None,
        label: str = "mu",
    ):
        super().__init__(base, f"{base.model_id}+{label}")
        self.max_cumulant_order = base.max_cumulant_order
        self.mean_function = mean
        self.mean_derivative = mean_derivative

    def _kappa(self, variables: tuple[Variable, ...]) -> Number:
        if len(variables) == 1:
            v = variables[0]
            return float(self.mean_function(v.component, v.time))
        return self.base.kappa(variables)

    def _kappa_time_derivative(self, variables: tuple[Variable, ...], slot: int) -> Optional[float]:
        if len(variables) == 1:
            if self.mean_derivative is None:
                return None
            v = variables[0]
            return float(self.mean_derivative(v.component, v.time))
        return self.base.kappa_time_derivative(variables, slot)


class LinearTransformModel(_DerivedModel):
    """
    Cumulants of ``Y = Lambda X`` by multilinearity.

    ``matrix[y][x]`` is the coefficient of base component ``x`` in ``y``.
    Times pass through unchanged.
    """

    def __init__(
        self,
        base: CumulantModel,
        matrix: Mapping[Hashable, Mapping[Hashable, Any]],
        relation_free: Optional[bool] = None,
    ):
        exact = base.rational_exact and all(
            is_rational(c) for row in matrix.values() for c in row.values()
        )
        self.matrix = {
            y: {x: to_number(c, exact) for x, c in row.items() if c != 0}
            for y, row in matrix.items()
        }
        payload = {str(y): {str(x): str(c) for x, c in row.items()} for y, row in self.matrix.items()}
        super().__init__(base, _stable_id(f"linear({base.model_id})", payload), tuple(matrix))
        self.rational_exact = exact
        self.max_cumulant_order = base.max_cumulant_order
        if relation_free is None:
            base_symbols = sorted(
                {x for row in self.matrix.values() for x in row}, key=symbol_key
            )
            lam = sympy.Matrix(
                [[sympy.nsimplify(self.matrix[y].get(x, 0)) for x in base_symbols] for y in matrix]
            )
            relation_free = base.polynomial_relation_free and lam.rank() == len(matrix)
        self.polynomial_relation_free = bool(relation_free)

    def _kappa(self, variables: tuple[Variable, ...]) -> Number:
        total: Number = self.zero()
        expansions = [
            [(Variable(x, v.time), c) for x, c in self.matrix[v.component].items()]
            for v in variables
        ]
        for choice in product(*expansions):
            coef = 1
            for _, c in choice:
                coef *= c
            value = self.base.kappa([v for v, _ in choice])
            if value:
                total += coef * value
        return total


class ShiftedProcessModel(_DerivedModel):
    """Increments ``X_t - X_s`` of a time-indexed model as a process in ``t``."""

    def __init__(self, base: CumulantModel, s: float):
        if not base.time_indexed:
            raise ModelError("Shifting needs a time-indexed model")
        super().__init__(base, f"shift({base.model_id},{s:g})")
        self.s = float(s)
        self.max_cumulant_order = base.max_cumulant_order

    def _expand(self, variables: Sequence[Variable]) -> Iterable[tuple[list[Variable], int]]:
        options = [[(v, 1), (v.at(self.s), -1)] for v in variables]
        for choice in product(*options):
            sign = 1
            for _, c in choice:
                sign *= c
            yield [v for v, _ in choice], sign

    def _kappa(self, variables: tuple[Variable, ...]) -> Number:
        total = 0.0
        for vs, sign in self._expand(variables):
            total += sign * float(self.base.kappa(vs))
        return total

    def _kappa_time_derivative(self, variables: tuple[Variable, ...], slot: int) -> Optional[float]:
        others = [v for i, v in enumerate(variables) if i != slot]
        total = 0.0
        for vs, sign in self._expand(others):
            total += sign * self.base.kappa_time_derivative(vs + [variables[slot]], -1)
        return total


class TimeSliceModel(_DerivedModel):
    """Static view of a time-indexed model at one time: the law of ``X_t``."""

    def __init__(self, base: CumulantModel, t: float):
        if not base.time_indexed:
            raise ModelError("Slicing needs a time-indexed model")
        super().__init__(base, f"{base.model_id}@{float(t)!r}")
        self.t = float(t)
        self.time_indexed = False
        self.max_cumulant_order = base.max_cumulant_order

    def _kappa(self, variables: tuple[Variable, ...]) -> Number:
        return self.base.kappa([v.at(self.t) for v in variables])


class AppellImageModel(_DerivedModel):
    """
    Static model of ``Y^k = X^{<>I_k}`` (Appell images of a base model).

    Joint cumulants of the images are the connected non-flat total diagram sums
    over the rows ``I_k``.
    """

    def __init__(
        self,
        base: CumulantModel,
        images: Mapping[Hashable, Union[Multiset, str, Iterable[Hashable]]],
        relation_free: bool = False,
    ):
        self.images = {y: as_multiset(I) for y, I in images.items()}
        payload = {str(y): I.to_string() for y, I in self.images.items()}
        super().__init__(base, _stable_id(f"appell-image({base.model_id})", payload), tuple(images))
        self.polynomial_relation_free = relation_free

    def _kappa(self, variables: tuple[Variable, ...]) -> Number:
        return ekw_identity("kappa_appell", [self.images[v.component] for v in variables], self.base)


# ---------------------------------------------------------------------------
# Moments and cumulants


MomentOracle = Union[Callable[[tuple[Variable, ...]], Number], Mapping[Multiset, Number]]


def _as_variables(I: Union[Multiset, Iterable[Any]]) -> tuple[Variable, ...]:
    return tuple(as_variable(v) for v in I)


def moment(
    I: Union[Multiset, Iterable[Any]],
    model: CumulantModel,
    method: str = "recursive",
    cap: Optional[int] = None,
) -> Number:
    """
    Joint moment from cumulants: sum over set partitions of the positions of ``I``
    of the product of block cumulants.

    Parameters
    ----------
    I : multiset or sequence of Variable
        Variables with repetition
    model : CumulantModel
    method : {"recursive", "partitions"}
        ``"partitions"`` enumerates every set partition; ``"recursive"`` sums
        over the block holding the first position, memoized on multisets
    cap : int, optional
        Slot cap override

    Returns
    -------
    Fraction or float
    """
    variables = _as_variables(I)
    check_slot_cap(len(variables), cap, "moment")
    if method == "partitions":
        if not variables:
            return Fraction(1) if model.rational_exact else 1.0
        total: Number = model.zero()
        for partition in enumerate_set_partitions(range(len(variables)), cap=cap):
            term: Number = 1
            for block in partition:
                term *= model.kappa(variables[i] for i in block)
                if term == 0:
                    break
            total += term
        return total
    if method != "recursive":
        raise ValueError(f"Unknown moment method {method!r}")
    return partition_sum(Multiset(variables), model, sign=1)


def partition_sum(
    I: Multiset, model: CumulantModel, sign: int = 1, memo: Optional[dict] = None
) -> Number:
    """
    ``sum_{pi in P(I)} prod_{B in pi} (sign * kappa(B))`` over position partitions of ``I``.

    ``sign=1`` gives the moment, ``sign=-1`` the signed sum of the closed-form
    Appell coefficients.
    """
    if memo is None:
        memo = {}
    one = Fraction(1) if model.rational_exact else 1.0

    def rec(M: Multiset) -> Number:
        if not M:
            return one
        hit = memo.get(M)
        if hit is not None:
            return hit
        first = M.elements()[0]
        head = Multiset([first])
        rest = M - head
        total: Number = model.zero()
        for J, coef in rest.submultisets():
            k = model.kappa(head + J)
            if k == 0:
                continue
            total += coef * sign * k * rec(rest - J)
        memo[M] = total
        return total

    return rec(I)


def cumulant_from_moments(
    I: Union[Multiset, Iterable[Any]], moment_oracle: MomentOracle, cap: Optional[int] = None
) -> Number:
    """
    Joint cumulant from moments:
    ``sum_pi (|pi| - 1)! (-1)^(|pi| - 1) prod_{B in pi} E[X^B]``.

    Parameters
    ----------
    I : multiset or sequence of Variable
    moment_oracle : callable or mapping
        Either ``f(variables) -> moment`` or a table keyed by :class:`Multiset`
        of variables
    cap : int, optional
    """
    variables = _as_variables(I)
    check_slot_cap(len(variables), cap, "cumulant")
    if not variables:
        return 0

    cache: dict[Multiset, Number] = {}

    def E(block: Iterable[int]) -> Number:
        key = Multiset(variables[i] for i in block)
        if key not in cache:
            if isinstance(moment_oracle, Mapping):
                cache[key] = moment_oracle.get(key, 0)
            else:
                cache[key] = moment_oracle(tuple(key))
        return cache[key]

    total: Number = 0
    for partition in enumerate_set_partitions(range(len(variables)), cap=cap):
        k = len(partition)
        term: Number = math.factorial(k - 1) * (-1) ** (k - 1)
        for block in partition:
            term *= E(block)
            if term == 0:
                break
        total += term
    return total


def moment_table(
    model: CumulantModel, symbols: Sequence[Any], max_size: int
) -> dict[Multiset, Number]:
    """Moments of every multiset over ``symbols`` of size ``1..max_size``."""
    table: dict[Multiset, Number] = {}
    variables = [as_variable(s) for s in symbols]

    def rec(start: int, chosen: list[Variable]) -> None:
        if chosen:
            key = Multiset(chosen)
            table[key] = moment(key, model)
        if len(chosen) == max_size:
            return
        for i in range(start, len(variables)):
            chosen.append(variables[i])
            rec(i, chosen)
            chosen.pop()

    rec(0, [])
    return table


EKW_KINDS = {
    "E_monomial": {"total": True},
    "E_appell": {"total": True, "non_flat": True},
    "kappa_monomial": {"total": True, "connected": True},
    "kappa_appell": {"total": True, "non_flat": True, "connected": True},
}


def diagram_weight(diagram: Any, model: CumulantModel) -> Number:
    """Product of the model cumulants over the edge blocks of a diagram."""
    value: Number = 1
    for block in diagram.edge_multisets():
        value *= model.kappa(block)
        if value == 0:
            return value
    return value


def ekw_identity(
    kind: str,
    rows: Sequence[Union[Multiset, str, Iterable[Any]]],
    model: CumulantModel,
    cap: Optional[int] = None,
) -> Number:
    """
    Diagram sums for moments and cumulants of products of monomials or Appell
    polynomials.

    ======================  ==========================================  ===========================
    kind                    quantity                                    diagram class
    ======================  ==========================================  ===========================
    ``E_monomial``          ``E[X^{I_1} ... X^{I_m}]``                  total
    ``E_appell``            ``E[X^{<>I_1} ... X^{<>I_m}]``              total, non-flat
    ``kappa_monomial``      ``kappa[X^{I_1}, ..., X^{I_m}]``            total, connected
    ``kappa_appell``        ``kappa[X^{<>I_1}, ..., X^{<>I_m}]``        total, non-flat, connected
    ======================  ==========================================  ===========================
    """
    if kind not in EKW_KINDS:
        raise ValueError(f"Unknown identity kind {kind!r}; expected one of {sorted(EKW_KINDS)}")
    filters = EKW_KINDS[kind]
    gaussian = model.max_cumulant_order == 2 and all(
        model.kappa([v]) == 0 for row in rows for v in as_multiset(row).symbols()
    )
    total: Number = model.zero()
    for d in enumerate_diagrams(
        [as_multiset(r) for r in rows], gaussian=gaussian, cap=cap, **filters
    ):
        total += diagram_weight(d, model)
    return total
