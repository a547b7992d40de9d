"""Rosenblatt process: normalization, cumulant quadrature and kernel discretization.

``X_t = I2(f_t)`` with
``f_t(x1, x2) = c_H int_0^t (s - x1)_+^(H/2 - 1) (s - x2)_+^(H/2 - 1) ds``.
Joint cumulants reduce, via the beta identity
``int (u - x)_+^(a-1) (v - x)_+^(a-1) dx = B(a, 1 - 2a) |u - v|^(2a - 1)``,
to cyclic integrals of ``|s_i - s_j|^(H - 1)`` over boxes, which are computed
here as traces of a Galerkin (cell-average) discretization of that operator,
extrapolated in the cell count.
"""
import math
import warnings
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import permutations
from typing import Any, Callable, Optional

import numpy as np
from scipy import linalg, optimize, special

from .chaos2 import Chaos2Kernel
from .config import DEFAULT_SUPPORT_FACTOR
from .errors import ConvergenceError, ModelError

DEFAULT_LEVELS = (128, 256, 512, 1024)
# Relative error below which an extrapolated cumulant counts as converged
DEFAULT_TOL = 1e-8
MAX_CUMULANT_ORDER = 6


def jacobi_integral(g: Callable[[np.ndarray], np.ndarray], beta: float, n: int = 40) -> float:
    """``int_0^1 w^beta g(w) dw`` by Gauss-Jacobi quadrature (``beta > -1``, ``g`` smooth)."""
    x, weights = special.roots_jacobi(n, 0.0, beta)
    w = (1 + x) / 2
    return float(2 ** (-beta - 1) * np.sum(weights * g(w)))


def beta_identity_check(u: float, v: float, H: float, n: int = 40) -> dict[str, float]:
    """
    Compare ``int_R (u - x)_+^(a-1) (v - x)_+^(a-1) dx`` with ``B(a, 1 - 2a) |u - v|^(2a - 1)``, ``a = H/2``.

    After ``x = min(u, v) - y`` the integral splits at ``y = |u - v|``; both
    pieces have an endpoint power singularity and are integrated by
    Gauss-Jacobi rules (the outer piece after ``y = d / w``).
    """
    a = H / 2
    if not 0 < a < 0.5:
        raise ModelError(f"Beta identity needs 0 < H < 1, got {H}")
    d = abs(u - v)
    if d == 0:
        raise ValueError("Beta identity needs u != v")
    inner = jacobi_integral(lambda w: (1 + w) ** (a - 1), a - 1, n)
    outer = jacobi_integral(lambda w: (1 + w) ** (a - 1), -2 * a, n)
    quadrature = d ** (2 * a - 1) * (inner + outer)
    closed = special.beta(a, 1 - 2 * a) * d ** (2 * a - 1)
    return {"quadrature": quadrature, "closed_form": closed, "abs_error": abs(quadrature - closed)}


@dataclass(frozen=True)
class RosenblattSpec:
    """
    Hurst index with its normalization.

    ``c_H`` is chosen so that ``kappa_2[X_1] = 1``; ``c_H_residual`` is the gap
    between the quadrature of ``int int_[0,1]^2 |s - s'|^(2H-2)`` and its closed
    form ``1 / (H (2H - 1))``.
    """

    H: float
    c_H: float
    beta: float
    c_H_residual: float
    support_factor: float = DEFAULT_SUPPORT_FACTOR

    @property
    def alpha(self) -> float:
        return self.H / 2

    @classmethod
    def create(cls, H: float, support_factor: float = DEFAULT_SUPPORT_FACTOR) -> "RosenblattSpec":
        H = float(H)
        if not 0.5 < H < 1:
            raise ModelError(f"Rosenblatt Hurst index must lie in (1/2, 1), got {H}")
        beta = float(special.beta(H / 2, 1 - H))
        pair = pair_integral(1.0, H)
        c_H = 1.0 / (beta * math.sqrt(2 * pair))
        residual = abs(pair - 1 / (H * (2 * H - 1)))
        return cls(H, c_H, beta, residual, support_factor)

    def to_json(self) -> dict[str, float]:
        return {
            "H": self.H,
            "c_H": self.c_H,
            "beta": self.beta,
            "c_H_residual": self.c_H_residual,
            "support_factor": self.support_factor,
        }


def _as_spec(spec: Any) -> RosenblattSpec:
    return spec if isinstance(spec, RosenblattSpec) else RosenblattSpec.create(spec)


def pair_integral(t: float, H: float) -> float:
    """``int int_[0,t]^2 |s - s'|^(2H-2) ds ds' = 2 int_0^t (t - d) d^(2H-2) dd``."""
    return t ** (2 * H) * jacobi_integral(lambda w: 2 * (1 - w), 2 * H - 2, n=8)


@dataclass
class QuadratureReport:
    """Value of an extrapolated quadrature with its refinement history."""

    value: float
    error_estimate: float
    converged: bool
    levels: list[dict[str, float]] = field(default_factory=list)
    method: str = ""

    def to_json(self) -> dict[str, Any]:
        return {
            "value": self.value,
            "error_estimate": self.error_estimate,
            "converged": self.converged,
            "method": self.method,
            "levels": self.levels,
        }


# ---------------------------------------------------------------------------
# Galerkin traces


def galerkin_matrix(n_cells: int, H: float, t: float = 1.0) -> np.ndarray:
    """
    Cell-average matrix of ``|s - s'|^(H-1)`` on ``n_cells`` uniform cells of ``[0, t]``.

    In the orthonormal indicator basis the entries depend on the cell offset
    ``d`` only: ``h^H [(d+1)^(H+1) + |d-1|^(H+1) - 2 d^(H+1)] / (H (H+1))``.
    """
    h = t / n_cells
    d = np.arange(n_cells, dtype=float)
    column = h**H * ((d + 1) ** (H + 1) + np.abs(d - 1) ** (H + 1) - 2 * d ** (H + 1)) / (H * (H + 1))
    return linalg.toeplitz(column)


@lru_cache(maxsize=32)
def _galerkin_eigenvalues(n_cells: int, H: float) -> np.ndarray:
    return linalg.eigvalsh(galerkin_matrix(n_cells, H))


def richardson(
    levels: Sequence[int], values: Sequence[float], leading: float
) -> tuple[float, float]:
    """
    Extrapolate values at doubling cell counts.

    The first sweep removes the ``N^(-leading)`` term; a second sweep uses the
    rate observed in the first-sweep differences. Returns ``(value, error)``.
    """
    values = [float(v) for v in values]
    if len(values) == 1:
        return values[0], math.inf
    factor = 2.0**leading
    first = [(factor * b - a) / (factor - 1) for a, b in zip(values, values[1:])]
    if len(first) == 1:
        return first[0], abs(first[0] - values[-1])
    diffs = [b - a for a, b in zip(first, first[1:])]
    error = abs(diffs[-1])
    if len(diffs) >= 2 and diffs[-1] != 0 and diffs[-2] != 0 and diffs[-2] / diffs[-1] > 1:
        rate = math.log2(diffs[-2] / diffs[-1])
        second = (2**rate * first[-1] - first[-2]) / (2**rate - 1)
        return second, abs(second - first[-1])
    return first[-1], error


def cyclic_integral(n: int, H: float, levels: Sequence[int] = DEFAULT_LEVELS) -> QuadratureReport:
    """``int_[0,1]^n prod_i |s_i - s_(i+1)|^(H-1) ds`` (cyclic indices) as ``Tr(G^n)`` extrapolated."""
    values = []
    history = []
    for N in levels:
        lam = _galerkin_eigenvalues(int(N), float(H))
        value = float(np.sum(lam**n))
        values.append(value)
        history.append({"n_cells": int(N), "value": value})
    value, error = richardson(levels, values, n * H - 1)
    return QuadratureReport(value, error, True, history, "galerkin-richardson")


def rosenblatt_cumulant(
    n: int,
    t: float,
    spec: Any,
    tol: float = DEFAULT_TOL,
    levels: Sequence[int] = DEFAULT_LEVELS,
    strict: bool = False,
) -> QuadratureReport:
    """
    ``kappa_n[X_t] = 2^(n-1) (n-1)! c_H^n B(H/2, 1-H)^n C_n(t)`` with ``C_n`` the cyclic integral.

    ``C_2`` reduces to a one-dimensional integral done by Gauss-Jacobi; for
    ``n >= 3`` the Galerkin traces on ``[0, 1]`` are extrapolated and scaled by
    ``t^(nH)``.

    Parameters
    ----------
    n : int
        Order, 2 to 6
    t : float
        Time, positive
    spec : RosenblattSpec or float
        Hurst index or prepared spec
    tol : float
        Relative error target for the ``converged`` flag, compared with the
        last Richardson correction (default :data:`DEFAULT_TOL`)
    strict : bool
        Raise :class:`ConvergenceError` instead of warning when not converged

    Returns
    -------
    QuadratureReport
    """
    spec = _as_spec(spec)
    if not 2 <= n <= MAX_CUMULANT_ORDER:
        raise ValueError(f"Rosenblatt cumulant order must be in [2, {MAX_CUMULANT_ORDER}], got {n}")
    if t <= 0:
        raise ValueError(f"Time must be positive, got {t}")
    H = spec.H
    prefactor = 2 ** (n - 1) * math.factorial(n - 1) * (spec.c_H * spec.beta) ** n
    if n == 2:
        value = prefactor * pair_integral(t, H)
        return QuadratureReport(value, spec.c_H_residual * value, True, [], "gauss-jacobi")
    report = cyclic_integral(n, H, levels)
    scale = prefactor * t ** (n * H)
    value = scale * report.value
    error = scale * report.error_estimate
    converged = error <= tol * abs(value)
    levels_out = [{**lv, "value": scale * lv["value"]} for lv in report.levels]
    result = QuadratureReport(value, error, converged, levels_out, report.method)
    if not converged:
        message = (
            f"Rosenblatt cumulant kappa_{n}(H={H:g}) error estimate {error:.3g} "
            f"exceeds tolerance {tol:g} relative to {value:.6g}"
        )
        if strict:
            raise ConvergenceError(message)
        warnings.warn(message, stacklevel=2)
    return result


def _coverage(edges: np.ndarray, t: float) -> np.ndarray:
    widths = np.diff(edges)
    return np.clip((t - edges[:-1]) / widths, 0.0, 1.0)


def galerkin_joint_trace(times: Sequence[float], H: float, n_cells: int) -> float:
    """
    ``sum_{sigma in S_(n-1)}`` of the cyclic integral over the box ``prod_i [0, t_i]``.

    The restriction to ``[0, t_i]`` is the diagonal of cell coverage fractions
    of a uniform grid on ``[0, max t]``. Cycles equal up to rotation or
    reversal are evaluated once.
    """
    n = len(times)
    T = max(times)
    G = galerkin_matrix(n_cells, H, T)
    edges = np.linspace(0.0, T, n_cells + 1)
    D = [_coverage(edges, t) for t in times]
    memo: dict[tuple[float, ...], float] = {}

    def canonical(cycle: tuple[float, ...]) -> tuple[float, ...]:
        variants = []
        for seq in (cycle, cycle[::-1]):
            for k in range(len(seq)):
                variants.append(seq[k:] + seq[:k])
        return min(variants)

    total = []
    for order in permutations(range(n - 1)):
        idx = list(order) + [n - 1]
        key = canonical(tuple(float(times[i]) for i in idx))
        if key not in memo:
            product = np.eye(n_cells)
            for i in idx:
                product = product @ (D[i][:, None] * G)
            memo[key] = float(np.trace(product))
        total.append(memo[key])
    return math.fsum(total)


def rosenblatt_joint_cumulant(
    times: Sequence[float],
    spec: Any,
    n_cells: int = 64,
    refinements: int = 3,
) -> QuadratureReport:
    """
    ``kappa[X_t1, ..., X_tn]`` for arbitrary times.

    Order 2 is the fBm covariance; equal times use :func:`rosenblatt_cumulant`;
    otherwise Galerkin traces at ``n_cells * 2^k`` cells are extrapolated.
    """
    spec = _as_spec(spec)
    times = [float(t) for t in times]
    n = len(times)
    if n == 1:
        return QuadratureReport(0.0, 0.0, True, [], "exact")
    if n > MAX_CUMULANT_ORDER:
        raise ValueError(f"Rosenblatt cumulant order must be at most {MAX_CUMULANT_ORDER}")
    if min(times) < 0:
        raise ValueError("Times must be non-negative")
    if min(times) == 0:
        return QuadratureReport(0.0, 0.0, True, [], "exact")
    if n == 2:
        s, t = times
        H = spec.H
        value = 0.5 * (s ** (2 * H) + t ** (2 * H) - abs(t - s) ** (2 * H))
        return QuadratureReport(value, 0.0, True, [], "covariance")
    if max(times) == min(times):
        return rosenblatt_cumulant(n, times[0], spec)
    prefactor = 2 ** (n - 1) * (spec.c_H * spec.beta) ** n
    levels = [n_cells * 2**k for k in range(refinements)]
    values = [prefactor * galerkin_joint_trace(times, spec.H, N) for N in levels]
    value, error = richardson(levels, values, n * spec.H - 1)
    history = [{"n_cells": N, "value": v} for N, v in zip(levels, values)]
    return QuadratureReport(value, error, error <= 1e-2 * abs(value), history, "galerkin-richardson")


# ---------------------------------------------------------------------------
# Kernel discretization


def kernel_grid(t: float, n_grid: int, support: float) -> np.ndarray:
    """
    Cell edges on ``[-support, t]``: ``n_grid // 2`` uniform cells on ``[0, t]``
    and geometrically graded cells on ``[-support, 0]`` starting at the same width.
    """
    if n_grid < 16:
        raise ValueError(f"n_grid must be at least 16, got {n_grid}")
    n_pos = n_grid // 2
    n_neg = n_grid - n_pos
    h0 = t / n_pos
    positive = np.linspace(0.0, t, n_pos + 1)
    if support <= n_neg * h0:
        negative = -np.linspace(0.0, support, n_neg + 1)[::-1]
    else:
        def excess(q: float) -> float:
            return h0 * (q**n_neg - 1) / (q - 1) - support

        upper = 2.0
        while excess(upper) <= 0:
            upper *= 2
        ratio = optimize.brentq(excess, 1 + 1e-12, upper)
        widths = h0 * ratio ** np.arange(n_neg)
        negative = -np.concatenate([[0.0], np.cumsum(widths)])[::-1]
        negative[0] = -support
    return np.concatenate([negative[:-1], positive])


def _panel_rule(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on ``[0, 1]`` after ``s = u^3`` (flattens ``s^a`` at the left end)."""
    x, w = special.roots_legendre(q)
    u = (x + 1) / 2
    return u**3, w / 2 * 3 * u**2


def _cell_averages(edges: np.ndarray, s: np.ndarray, alpha: float) -> np.ndarray:
    """``a_i(s) = [(s - x_l)_+^a - (s - x_r)_+^a] / (a w_i)``: cell average of ``(s - x)_+^(a-1)``."""
    left = np.clip(s[None, :] - edges[:-1, None], 0.0, None) ** alpha
    right = np.clip(s[None, :] - edges[1:, None], 0.0, None) ** alpha
    return (left - right) / (alpha * np.diff(edges)[:, None])


def support_tail_bound(t: float, spec: RosenblattSpec, support: float) -> float:
    """Upper bound on the part of ``2 ||f_t||^2`` carried by ``x < -support`` in either variable."""
    H = spec.H
    one_side = (
        spec.c_H**2 * spec.beta * support ** (H - 1) / (1 - H) * 2 * t ** (H + 1) / (H * (H + 1))
    )
    return 2 * 2 * one_side


def rosenblatt_kernel_family(
    times: Sequence[float],
    spec: Any,
    n_grid: int = 256,
    support: Optional[float] = None,
    quad_points: int = 12,
) -> list[Chaos2Kernel]:
    """
    Cell-averaged kernels ``f_t`` for several times on one shared grid.

    ``F_ij = c_H int_0^t a_i(s) a_j(s) ds`` is accumulated panel by panel in
    ``s``; panels are the uniform cells of ``[0, max t]`` split at the requested
    times.
    """
    spec = _as_spec(spec)
    times = [float(t) for t in times]
    if any(t <= 0 for t in times):
        raise ValueError("Kernel times must be positive")
    T = max(times)
    L = spec.support_factor * T if support is None else float(support)
    edges = kernel_grid(T, n_grid, L)
    weights = np.diff(edges)
    points = (edges[:-1] + edges[1:]) / 2
    breaks = np.unique(np.concatenate([edges[edges >= 0], times]))
    u, wu = _panel_rule(quad_points)
    F = np.zeros((len(weights), len(weights)))
    kernels: dict[float, Chaos2Kernel] = {}
    pending = sorted(set(times))
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        s = lo + (hi - lo) * u
        a = _cell_averages(edges, s, spec.alpha)
        F += spec.c_H * (a * ((hi - lo) * wu)[None, :]) @ a.T
        while pending and pending[0] <= hi + 1e-15 * T:
            t = pending.pop(0)
            kernels[t] = Chaos2Kernel(
                F.copy(),
                weights,
                f"f_{t:g}",
                points,
                attrs={
                    "H": spec.H,
                    "t": t,
                    "support": L,
                    "n_grid": n_grid,
                    "support_tail_bound": support_tail_bound(t, spec, L),
                },
            )
    return [kernels[t] for t in times]


def rosenblatt_kernel_discretize(
    t: float,
    spec: Any,
    n_grid: int = 256,
    support: Optional[float] = None,
    quad_points: int = 12,
) -> Chaos2Kernel:
    """
    Discretize ``f_t`` on ``[-support, t]`` (default support ``10 t``).

    The kernel is the cell average of ``f_t`` over a grid of ``n_grid`` cells,
    so ``2 Tr(A^2)`` approaches ``t^(2H)`` from below as the grid and support
    grow. The truncation bound is stored in ``attrs["support_tail_bound"]``.

    Raises
    ------
    ModelError
        ``H`` outside ``(1/2, 1)``
    """
    return rosenblatt_kernel_family([t], spec, n_grid, support, quad_points)[0]


def kernel_convergence_table(
    t: float, spec: Any, grids: Sequence[int] = (32, 64, 128, 256), support: Optional[float] = None
) -> list[dict[str, float]]:
    """``2 Tr(A^2)`` against ``t^(2H)`` for a sequence of grids."""
    spec = _as_spec(spec)
    target = t ** (2 * spec.H)
    rows = []
    for n in grids:
        kernel = rosenblatt_kernel_discretize(t, spec, n, support)
        value = 2 * float(np.sum(kernel.orthonormal_matrix() ** 2))
        rows.append({"n_grid": int(n), "variance": value, "error": abs(value - target)})
    return rows
