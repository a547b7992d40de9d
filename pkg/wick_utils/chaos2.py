"""Finite-rank second Wiener chaos: kernels, Hilbert-Schmidt operators and traces.

A kernel ``f`` is stored by its values ``F`` on a grid with quadrature weights
``w``. The operator ``A_f`` acts on grid functions by ``(A_f g)_i = sum_j F_ij w_j g_j``
and, in the orthonormal coordinates ``a = sqrt(W) F sqrt(W)``, is the symmetric
matrix ``a``. Every contraction is a weighted matrix product.
"""
import math
import string
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from itertools import permutations
from typing import Any, Optional

import numpy as np

from .combinatorics import Diagram, Multiset, enumerate_diagrams
from .errors import GridMismatchError
from .polynomial import APPELL, WickPolynomial

MAX_TRACE_ORDER = 8


@dataclass(frozen=True, eq=False)
class Chaos2Kernel:
    """
    Symmetric kernel ``f`` of a double Wiener integral ``I2(f)`` on a weighted grid.

    Attributes
    ----------
    matrix : np.ndarray
        ``F_ij = f(x_i, x_j)``; symmetrized on construction
    weights : np.ndarray
        Positive quadrature weights of the grid
    label : str
    points : np.ndarray, optional
        Grid points (metadata only)
    attrs : dict
        Free-form metadata (support, tail bounds, ...)
    """

    matrix: np.ndarray
    weights: np.ndarray
    label: str = "f"
    points: Optional[np.ndarray] = None
    attrs: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=float)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"Kernel matrix must be square, got shape {matrix.shape}")
        if weights.shape[0] != matrix.shape[0]:
            raise GridMismatchError(
                f"Kernel of size {matrix.shape[0]} has {weights.shape[0]} weights"
            )
        if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
            raise ValueError("Quadrature weights must be positive and finite")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("Kernel matrix has non-finite entries")
        # (a + b) / 2 == (b + a) / 2 bitwise, so the result is exactly symmetric
        matrix = (matrix + matrix.T) / 2
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "weights", weights)
        if self.points is not None:
            object.__setattr__(self, "points", np.asarray(self.points, dtype=float).reshape(-1))
        object.__setattr__(self, "attrs", dict(self.attrs))

    # -- constructors -----------------------------------------------------

    @classmethod
    def from_orthonormal(
        cls, a: np.ndarray, weights: np.ndarray, label: str = "f", **kwargs: Any
    ) -> "Chaos2Kernel":
        """Kernel whose operator has orthonormal coordinates ``a``."""
        weights = np.asarray(weights, dtype=float)
        r = 1 / np.sqrt(weights)
        return cls(r[:, None] * np.asarray(a, dtype=float) * r[None, :], weights, label, **kwargs)

    @classmethod
    def rank_one(
        cls, h: np.ndarray, weights: np.ndarray, scale: float = 1.0, label: str = "h⊗h"
    ) -> "Chaos2Kernel":
        """``scale * h ⊗ h``."""
        h = np.asarray(h, dtype=float)
        return cls(scale * np.outer(h, h), weights, label)

    # -- geometry ---------------------------------------------------------

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def orthonormal_matrix(self) -> np.ndarray:
        r = np.sqrt(self.weights)
        return r[:, None] * self.matrix * r[None, :]

    def apply(self, g: np.ndarray) -> np.ndarray:
        """``(A_f g)(x_i) = sum_j f(x_i, x_j) w_j g(x_j)``."""
        return self.matrix @ (self.weights * np.asarray(g, dtype=float))

    def hs_inner(self, other: "Chaos2Kernel") -> float:
        check_grid(self, other)
        return float(np.sum(self.orthonormal_matrix() * other.orthonormal_matrix()))

    def hs_norm(self) -> float:
        return float(np.linalg.norm(self.orthonormal_matrix()))

    def scaled(self, factor: float, label: Optional[str] = None) -> "Chaos2Kernel":
        return Chaos2Kernel(
            factor * self.matrix, self.weights, label or f"{factor:g}·{self.label}", self.points
        )

    def change_basis(self, q: np.ndarray) -> "Chaos2Kernel":
        """Conjugate the operator by an orthogonal matrix ``q`` of the orthonormal coordinates."""
        q = np.asarray(q, dtype=float)
        if not np.allclose(q @ q.T, np.eye(self.size), atol=1e-12):
            raise ValueError("change_basis needs an orthogonal matrix")
        return Chaos2Kernel.from_orthonormal(
            q @ self.orthonormal_matrix() @ q.T, self.weights, self.label
        )

    def same_grid(self, other: "Chaos2Kernel") -> bool:
        if self.size != other.size or not np.array_equal(self.weights, other.weights):
            return False
        if self.points is not None and other.points is not None:
            return bool(np.array_equal(self.points, other.points))
        return True

    def __repr__(self) -> str:
        return f"Chaos2Kernel(label={self.label!r}, size={self.size})"


def check_grid(*kernels: Chaos2Kernel) -> None:
    """Raise :class:`GridMismatchError` unless all kernels share one grid."""
    for k in kernels[1:]:
        if not kernels[0].same_grid(k):
            raise GridMismatchError(
                f"Kernels {kernels[0].label!r} and {k.label!r} live on different grids"
            )


def operator_apply(f: Chaos2Kernel, g: Chaos2Kernel) -> np.ndarray:
    """Grid values of the contraction ``A_f g``: ``F diag(w) G`` (not symmetric in general)."""
    check_grid(f, g)
    return f.matrix @ (f.weights[:, None] * g.matrix)


def trace_product(*kernels: Chaos2Kernel) -> float:
    """``Tr(A_{f_1} ... A_{f_k})``."""
    if not kernels:
        raise ValueError("trace_product needs at least one kernel")
    check_grid(*kernels)
    product = kernels[0].orthonormal_matrix()
    for k in kernels[1:]:
        product = product @ k.orthonormal_matrix()
    return float(np.trace(product))


def joint_cumulant_trace(kernels: Sequence[Chaos2Kernel]) -> float:
    """
    Joint cumulant of ``I2(f_1), ..., I2(f_m)``.

    ``2^(m-1) sum_{sigma in S_(m-1)} Tr(A_{f_sigma(1)} ... A_{f_sigma(m-1)} A_{f_m})``;
    the mean (``m = 1``) is zero. Traces are summed in permutation order.

    Raises
    ------
    GridMismatchError
        Kernels on different grids
    ValueError
        ``m`` above :data:`MAX_TRACE_ORDER`
    """
    kernels = list(kernels)
    m = len(kernels)
    if m == 0:
        raise ValueError("joint_cumulant_trace needs at least one kernel")
    if m > MAX_TRACE_ORDER:
        raise ValueError(
            f"Trace sum over S_{m - 1} is limited to m <= {MAX_TRACE_ORDER}, got m = {m}"
        )
    check_grid(*kernels)
    if m == 1:
        return 0.0
    mats = [k.orthonormal_matrix() for k in kernels]
    last_t = mats[-1].T
    traces = []
    for order in permutations(range(m - 1)):
        product = mats[order[0]]
        for i in order[1:]:
            product = product @ mats[i]
        # Tr(P A_m) without forming the product
        traces.append(float(np.sum(product * last_t)))
    return 2 ** (m - 1) * math.fsum(traces)


# ---------------------------------------------------------------------------
# Diagram contraction


def contract_diagram(diagram: Diagram, kernels: Sequence[Chaos2Kernel]) -> Any:
    """
    Evaluate a Gaussian diagram over rows of two slots with row ``r`` carrying ``A_{f_r}``.

    Paired slots are contracted (pair cumulant ``delta_ij`` in orthonormal
    coordinates); residual slots stay free and index the returned tensor in
    slot order. A total diagram returns a float.
    """
    if len(kernels) != diagram.nodes.n_rows:
        raise ValueError("Need one kernel per diagram row")
    if any(len(row) != 2 for row in diagram.nodes.rows):
        raise ValueError("contract_diagram needs rows of exactly two slots")
    if not diagram.is_gaussian():
        raise ValueError("contract_diagram needs a Gaussian diagram (pair edges only)")
    check_grid(*kernels)
    letters = iter(string.ascii_letters)
    label: dict[tuple[int, int], str] = {}
    for block in diagram.edges:
        letter = next(letters)
        for slot in block:
            label[slot] = letter
    for slot in diagram.residual:
        label[slot] = next(letters)
    operands = []
    subscripts = []
    for r, k in enumerate(kernels):
        operands.append(k.orthonormal_matrix())
        subscripts.append(label[(r, 0)] + label[(r, 1)])
    out = "".join(label[s] for s in diagram.residual)
    value = np.einsum(",".join(subscripts) + "->" + out, *operands, optimize=True)
    return float(value) if not out else value


def chain_kernel(kernels: Sequence[Chaos2Kernel], label: Optional[str] = None) -> Chaos2Kernel:
    """Symmetrized contraction chain ``sym(F_1 W F_2 W ... F_k)``."""
    check_grid(*kernels)
    product = kernels[0].orthonormal_matrix()
    for k in kernels[1:]:
        product = product @ k.orthonormal_matrix()
    if label is None:
        label = "".join(f"A_{k.label} " for k in kernels[:-1]) + kernels[-1].label
    return Chaos2Kernel.from_orthonormal(product, kernels[0].weights, label, points=kernels[0].points)


@dataclass
class ChaosTerm:
    """``coefficient * I2(k_1) <>_W ... <>_W I2(k_r)`` for the contraction paths ``k_i``."""

    coefficient: int
    paths: tuple[tuple[int, ...], ...]
    kernels: tuple[Chaos2Kernel, ...]

    @property
    def order(self) -> int:
        return 2 * len(self.paths)

    @property
    def is_pure(self) -> bool:
        return all(len(p) == 1 for p in self.paths)

    def describe(self) -> str:
        parts = [f"I2({k.label})" for k in self.kernels]
        return f"{self.coefficient}·" + " ⋄_W ".join(parts)

    def to_json(self) -> dict[str, Any]:
        return {
            "coefficient": self.coefficient,
            "order": self.order,
            "paths": [list(p) for p in self.paths],
            "kernels": [k.label for k in self.kernels],
            "hs_norms": [k.hs_norm() for k in self.kernels],
        }


@dataclass
class ChaosDecomposition:
    """Result of :func:`chaos2_change_of_chaos`."""

    terms: list[ChaosTerm]
    labels: tuple[str, ...]

    @property
    def pure_part(self) -> ChaosTerm:
        return next(t for t in self.terms if t.is_pure)

    @property
    def contraction_terms(self) -> list[ChaosTerm]:
        return [t for t in self.terms if not t.is_pure]

    def coefficient_pattern(self) -> list[int]:
        return sorted({t.coefficient for t in self.terms})

    def to_appell(self, model_id: str) -> WickPolynomial:
        """
        Expansion in the Appell basis of the standard Gaussian coordinates ``x_i = W(e_i)``.

        Uses ``I2(k) = sum_{i,j} a_ij x^{<>{i,j}}``; Wick products of Wiener
        integrals concatenate the Appell indices.
        """
        total = WickPolynomial.zero(APPELL, model_id)
        for term in self.terms:
            poly = WickPolynomial.constant(term.coefficient, APPELL, model_id)
            for k in term.kernels:
                poly = _appell_concat(poly, kernel_appell_form(k, model_id))
            total = total + poly
        return total

    def to_json(self) -> dict[str, Any]:
        return {"kernels": list(self.labels), "terms": [t.to_json() for t in self.terms]}


def kernel_appell_form(kernel: Chaos2Kernel, model_id: str) -> WickPolynomial:
    """``I2(k)`` as ``sum_{i,j} a_ij x^{<>{i,j}}`` over integer coordinates."""
    a = kernel.orthonormal_matrix()
    terms: dict[Multiset, float] = {}
    for i in range(kernel.size):
        for j in range(kernel.size):
            key = Multiset([i, j])
            terms[key] = terms.get(key, 0.0) + float(a[i, j])
    return WickPolynomial(terms, APPELL, model_id)


def _appell_concat(p: WickPolynomial, q: WickPolynomial) -> WickPolynomial:
    terms: dict[Multiset, Any] = {}
    for I, c in p.items():
        for J, d in q.items():
            terms[I + J] = terms.get(I + J, 0) + c * d
    return WickPolynomial(terms, APPELL, p.model_id)


def _diagram_paths(d: Diagram) -> tuple[tuple[int, ...], ...]:
    """Row sequences of the paths of a Gaussian diagram, each in canonical orientation."""
    partner: dict[tuple[int, int], tuple[int, int]] = {}
    for a, b in d.edges:
        partner[a] = b
        partner[b] = a
    paths = []
    seen: set[int] = set()
    for start in sorted(d.residual):
        if start[0] in seen:
            continue
        rows = [start[0]]
        slot = (start[0], 1 - start[1])
        while slot in partner:
            nxt = partner[slot]
            rows.append(nxt[0])
            slot = (nxt[0], 1 - nxt[1])
        seen.update(rows)
        path = tuple(rows)
        paths.append(min(path, path[::-1]))
    return tuple(sorted(paths))


def chaos2_change_of_chaos(*kernels: Chaos2Kernel) -> ChaosDecomposition:
    """
    Change of chaos ``I2(f_1) <> ... <> I2(f_m)`` in terms of Wick products
    with respect to the underlying Gaussian field.

    Enumerates connected non-flat Gaussian diagrams over ``m`` rows of two
    slots with a nonempty residual; each one splits into paths whose row
    sequence ``r_1 - ... - r_k`` contributes ``I2(sym(F_r1 W ... F_rk))``.
    Diagrams are grouped by their path sets, giving coefficient 1 for the pure
    part, 4 for each two-row path and 8 for each three-row path.
    """
    if len(kernels) < 2:
        raise ValueError("chaos2_change_of_chaos needs at least two kernels")
    check_grid(*kernels)
    rows = [Multiset([r, r]) for r in range(len(kernels))]
    groups: dict[tuple[tuple[int, ...], ...], int] = {}
    for d in enumerate_diagrams(rows, non_flat=True, connected=True, gaussian=True):
        if not d.residual:
            continue
        key = _diagram_paths(d)
        groups[key] = groups.get(key, 0) + 1
    terms = []
    for paths in sorted(groups, key=lambda p: (max(len(x) for x in p), p)):
        path_kernels = tuple(chain_kernel([kernels[r] for r in path]) for path in paths)
        terms.append(ChaosTerm(groups[paths], paths, path_kernels))
    return ChaosDecomposition(terms, tuple(k.label for k in kernels))
