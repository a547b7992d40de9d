"""Seeded path samplers and the Monte Carlo experiment harness.

Normal variates come from a counter-based generator (Philox) keyed by
``(seed, stream)``; path ``i`` always reads the same counter block, so a
batch of paths is bit-identical to drawing them one at a time. Experiments
run over fixed chunks of paths, which keeps every reduction independent of
the number of workers.
"""
import math
import warnings
from abc import ABC, abstractmethod
from collections.abc import Hashable, Sequence
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, ClassVar, Optional

import dask
import numpy as np
from scipy import linalg, special, stats

from .appell import exp_wick_coefficient
from .chaos2 import Chaos2Kernel, check_grid
from .config import DEFAULT_CHUNK_SIZE, parse_scalar
from .cumulants import DEFAULT_SYMBOL, FBMModel, chi_square_model
from .debug import WickDebugger
from .errors import ConfigurationError, ModelError, UnknownExperimentError
from .integrals import (
    YOUNG_RULES,
    SamplePath,
    ito_stratonovich_correction,
    prepare_ito_residual,
    prepare_scalar_identity,
    prepare_wick_sum,
)
from .polynomial import WickPolynomial
from .rosenblatt import RosenblattSpec, rosenblatt_kernel_discretize

MAX_GRID_POINTS = 4096
MIN_PATHS = 100

# Substream ids keep the samplers of different experiments apart
FBM_STREAM = 0
CHAOS2_STREAM = 1
SCALAR_STREAM = 2

_WORDS_PER_BLOCK = 4


@dataclass(frozen=True)
class GaussianBase:
    """
    Standard normal draws addressed by ``(seed, stream, offset)``.

    The generator is Philox4x64 with key ``(seed, stream)``; offset ``k``
    starts at counter block ``k // 4``. Uniforms use the top 53 bits of each
    word and normals the inverse CDF, so values do not depend on platform
    specific transforms.
    """

    seed: int
    stream: int = 0

    def __post_init__(self) -> None:
        for name in ("seed", "stream"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise TypeError(f"{name} must be an integer, got {value!r}")
            if not 0 <= value < 2**64:
                raise ValueError(f"{name} must lie in [0, 2^64), got {value}")

    def raw(self, n: int, offset: int = 0) -> np.ndarray:
        if offset % _WORDS_PER_BLOCK:
            raise ValueError(f"Offset must be a multiple of {_WORDS_PER_BLOCK}, got {offset}")
        bitgen = np.random.Philox(
            key=np.array([self.seed, self.stream], dtype=np.uint64),
            counter=np.array([offset // _WORDS_PER_BLOCK, 0, 0, 0], dtype=np.uint64),
        )
        return bitgen.random_raw(n)

    def uniforms(self, n: int, offset: int = 0) -> np.ndarray:
        """Uniforms on the open interval ``(0, 1)``."""
        words = self.raw(n, offset) >> np.uint64(11)
        return (words.astype(np.float64) + 0.5) / 2.0**53

    def normals(self, n: int, offset: int = 0) -> np.ndarray:
        return special.ndtri(self.uniforms(n, offset))

    @staticmethod
    def stride(m: int) -> int:
        """Words reserved per path for ``m`` normals."""
        return _WORDS_PER_BLOCK * max(1, math.ceil(m / _WORDS_PER_BLOCK))

    def block(self, start: int, count: int, m: int) -> np.ndarray:
        """Normals of paths ``start, ..., start + count - 1``; shape ``(count, m)``."""
        if start < 0 or count < 0:
            raise ValueError("Path range must be non-negative")
        stride = self.stride(m)
        draws = self.normals(count * stride, start * stride)
        return draws.reshape(count, stride)[:, :m]


# ---------------------------------------------------------------------------
# Fractional Brownian motion


def _sample_times(times: Any) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise ValueError("Sample times must be a non-empty 1-D array")
    if len(times) > MAX_GRID_POINTS:
        raise ValueError(f"At most {MAX_GRID_POINTS} sample times are supported, got {len(times)}")
    if times[0] < 0 or np.any(np.diff(times) <= 0):
        raise ValueError("Sample times must be non-negative and strictly increasing")
    return times


@lru_cache(maxsize=32)
def _fbm_factor(H: float, times: tuple[float, ...]) -> np.ndarray:
    t = np.asarray(times)
    cov = 0.5 * (
        t[:, None] ** (2 * H) + t[None, :] ** (2 * H) - np.abs(t[:, None] - t[None, :]) ** (2 * H)
    )
    try:
        return linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        jitter = 1e-10 * float(np.max(np.diag(cov)))
        warnings.warn(
            f"fBm covariance for H={H} on {len(t)} points is not numerically positive "
            f"definite; retrying with jitter {jitter:.3g}",
            stacklevel=3,
        )
    try:
        return linalg.cholesky(cov + jitter * np.eye(len(t)), lower=True)
    except linalg.LinAlgError as e:
        raise ModelError(
            f"fBm covariance for H={H} on {len(t)} points is not positive definite"
        ) from e


def _mixing_factor(mixing: Optional[Sequence[Sequence[float]]], d: int) -> np.ndarray:
    if mixing is None:
        return np.eye(d)
    matrix = np.asarray(mixing, dtype=float)
    if matrix.shape != (d, d):
        raise ModelError(f"Mixing matrix must be {d}x{d}, got shape {matrix.shape}")
    try:
        return linalg.cholesky(matrix, lower=True)
    except linalg.LinAlgError as e:
        raise ModelError("Mixing matrix must be positive definite") from e


def fbm_paths(
    H: float,
    times: Any,
    seed: int,
    start: int = 0,
    count: int = 1,
    components: Sequence[Hashable] = (DEFAULT_SYMBOL,),
    mixing: Optional[Sequence[Sequence[float]]] = None,
    stream: int = FBM_STREAM,
) -> np.ndarray:
    """
    Exact fBm samples for paths ``start, ..., start + count - 1``.

    Returns an array of shape ``(count, len(times), d)``. With several
    components the covariance is ``mixing[a][b] * R_H(s, t)``. A time ``0``
    carries the value 0 and uses no draws.
    """
    if not 0 < H < 1:
        raise ModelError(f"Hurst index must lie in (0, 1), got {H}")
    times = _sample_times(times)
    d = len(components)
    mix = _mixing_factor(mixing, d)
    positive = times > 0
    m = int(np.sum(positive))
    values = np.zeros((count, len(times), d))
    if m == 0 or count == 0:
        return values
    L = _fbm_factor(float(H), tuple(times[positive].tolist()))
    Z = GaussianBase(seed, stream).block(start, count, m * d).reshape(count, d, m)
    # (count, d, m) -> (count, m, d): L Z_a for every component, then mixed
    paths = np.einsum("ij,pdj->pid", L, Z)
    values[:, positive, :] = paths @ mix.T
    return values


def fbm_sample(
    H: float,
    times: Any,
    seed: int,
    path_index: int = 0,
    components: Sequence[Hashable] = (DEFAULT_SYMBOL,),
    mixing: Optional[Sequence[Sequence[float]]] = None,
) -> SamplePath:
    """
    One fractional Brownian motion path by Cholesky factorization of its covariance.

    Parameters
    ----------
    H : float
        Hurst index in ``(0, 1)``
    times : array_like
        Non-negative, strictly increasing, at most 4096 points
    seed : int
    path_index : int
        Substream of the path; equal ``(seed, path_index)`` give identical paths
    components, mixing : optional
        Several fBm components with covariance ``mixing[a][b] * R_H(s, t)``

    Raises
    ------
    ModelError
        The covariance stays singular after one jittered retry
    """
    values = fbm_paths(H, times, seed, path_index, 1, components, mixing)[0]
    return SamplePath(np.asarray(times, dtype=float), values, tuple(components))


# ---------------------------------------------------------------------------
# Finite-rank second chaos


def _kernel_stack(kernels: Sequence[Chaos2Kernel]) -> tuple[np.ndarray, np.ndarray]:
    if not kernels:
        raise ValueError("Need at least one kernel")
    check_grid(*kernels)
    M = np.stack([k.orthonormal_matrix() for k in kernels])
    return M, np.trace(M, axis1=1, axis2=2)


def chaos2_paths(
    kernels: Sequence[Chaos2Kernel],
    seed: int,
    start: int = 0,
    count: int = 1,
    stream: int = CHAOS2_STREAM,
) -> np.ndarray:
    """``Z^T a_k Z - Tr(a_k)`` per path and kernel, one shared ``Z`` per path; shape ``(count, K)``."""
    M, traces = _kernel_stack(kernels)
    Z = GaussianBase(seed, stream).block(start, count, M.shape[1])
    quadratic = np.einsum("pi,kij,pj->pk", Z, M, Z, optimize=True)
    return quadratic - traces[None, :]


def chaos2_path_sample(
    kernels: Sequence[Chaos2Kernel],
    seed: int,
    times: Optional[Sequence[float]] = None,
    include_origin: bool = True,
    path_index: int = 0,
) -> SamplePath:
    """
    Path ``t -> I2(f_t)`` of a finite-rank second-chaos process.

    One Gaussian vector on the shared grid drives every time, so the values
    form a genuine path. Times default to ``kernel.attrs["t"]``; with
    ``include_origin`` the point ``(0, 0)`` is prepended.

    Raises
    ------
    GridMismatchError
        Kernels on different grids
    """
    if times is None:
        try:
            times = [float(k.attrs["t"]) for k in kernels]
        except KeyError as e:
            raise ValueError("Pass times explicitly; kernels carry no 't' attribute") from e
    times = np.asarray(times, dtype=float)
    if len(times) != len(kernels):
        raise ValueError(f"Got {len(kernels)} kernels for {len(times)} times")
    values = chaos2_paths(kernels, seed, path_index, 1)[0]
    if include_origin and times[0] > 0:
        times = np.concatenate([[0.0], times])
        values = np.concatenate([[0.0], values])
    return SamplePath(times, values)


# ---------------------------------------------------------------------------
# Experiments


def _mean_and_stderr(values: np.ndarray) -> tuple[float, float]:
    n = len(values)
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(n))


class Experiment(ABC):
    """
    A Monte Carlo experiment: per-path samples plus an aggregate.

    ``prepare`` runs once before sampling and builds every deterministic
    table; ``sample`` must be a pure function of ``(seed, start, count)``.
    """

    name: ClassVar[str]
    defaults: ClassVar[dict[str, Any]]

    def __init__(self, config: Optional[dict[str, Any]] = None):
        config = dict(config or {})
        unknown = sorted(set(config) - set(self.defaults))
        if unknown:
            raise ConfigurationError(
                f"Unknown option(s) {', '.join(unknown)} for experiment {self.name!r}; "
                f"expected {', '.join(sorted(self.defaults))}"
            )
        resolved = {}
        for key, default in self.defaults.items():
            value = config.get(key, default)
            try:
                if isinstance(default, bool) and isinstance(value, str):
                    value = parse_scalar(value)
                    if not isinstance(value, bool):
                        raise ValueError(value)
                resolved[key] = type(default)(value)
            except (TypeError, ValueError) as e:
                raise ConfigurationError(f"Option {key}={value!r} is not a {type(default).__name__}") from e
        self.config = resolved

    def prepare(self) -> None:
        """Build deterministic tables."""

    @abstractmethod
    def sample(self, seed: int, start: int, count: int) -> np.ndarray:
        ...

    @abstractmethod
    def summarize(self, values: np.ndarray) -> dict[str, Any]:
        """Return ``estimate``, ``stderr``, optional ``target`` and extras."""


class _FBMExperiment(Experiment):
    """Shared grid and polynomial handling for fBm experiments."""

    def prepare(self) -> None:
        H, grid, T = self.config["H"], self.config["grid"], self.config["T"]
        if grid < 1:
            raise ConfigurationError(f"grid must be positive, got {grid}")
        self.times = np.linspace(0.0, T, grid + 1)
        self.model = FBMModel(H, horizon=T)
        self.p = WickPolynomial.parse(self.config["p"])

    def paths(self, seed: int, start: int, count: int) -> np.ndarray:
        return fbm_paths(self.config["H"], self.times, seed, start, count)


class ZeroMeanWick(_FBMExperiment):
    """``int_0^T p(X) <> dX`` has mean zero."""

    name = "zero-mean-wick"
    defaults = {"p": "x^2", "H": 0.7, "grid": 256, "T": 1.0}

    def prepare(self) -> None:
        super().prepare()
        self.plan = prepare_wick_sum(self.p, self.model, self.times)

    def sample(self, seed: int, start: int, count: int) -> np.ndarray:
        return np.asarray(self.plan.evaluate(self.paths(seed, start, count)).wick)

    def summarize(self, values: np.ndarray) -> dict[str, Any]:
        estimate, stderr = _mean_and_stderr(values)
        return {"estimate": estimate, "stderr": stderr, "target": 0.0}


class YoungMean(_FBMExperiment):
    """
    Mean of the Young integral ``int_0^T p(X) dX`` equals the mean Itô-Stratonovich correction.

    The left-point sum carries a bias of order ``grid^(1 - 2H)`` in the mean;
    the default trapezoid rule removes it for linear ``p``.
    """

    name = "young-mean"
    defaults = {"p": "x", "H": 0.7, "grid": 256, "T": 1.0, "rule": "trapezoid"}

    def prepare(self) -> None:
        super().prepare()
        if self.config["rule"] not in YOUNG_RULES:
            raise ConfigurationError(
                f"Unknown rule {self.config['rule']!r}; expected one of {YOUNG_RULES}"
            )
        self.plan = prepare_wick_sum(self.p, self.model, self.times)
        self.correction = ito_stratonovich_correction(self.p, self.model, 0.0, self.config["T"])

    def sample(self, seed: int, start: int, count: int) -> np.ndarray:
        paths = self.paths(seed, start, count)
        if self.config["rule"] == "trapezoid":
            return np.asarray(self.plan.trapezoid(paths))
        return np.asarray(self.plan.evaluate(paths).young)

    def summarize(self, values: np.ndarray) -> dict[str, Any]:
        estimate, stderr = _mean_and_stderr(values)
        return {
            "estimate": estimate,
            "stderr": stderr,
            "target": self.correction.mean,
            "target_quadrature_error": self.correction.mean_error,
        }


class ItoResidualExperiment(_FBMExperiment):
    """Same-grid Itô residual: zero for quadratic ``p``, vanishing with the mesh otherwise."""

    name = "ito-residual"
    defaults = {"p": "x^2", "H": 0.7, "grid": 256, "T": 1.0}

    def prepare(self) -> None:
        super().prepare()
        self.plan = prepare_ito_residual(self.p, self.model, self.times)

    def sample(self, seed: int, start: int, count: int) -> np.ndarray:
        result = self.plan.evaluate(self.paths(seed, start, count))
        return np.stack([result.residual, result.limit_residual], axis=1)

    def summarize(self, values: np.ndarray) -> dict[str, Any]:
        estimate, stderr = _mean_and_stderr(values[:, 0])
        limit_mean, limit_stderr = _mean_and_stderr(values[:, 1])
        return {
            "estimate": estimate,
            "stderr": stderr,
            "target": 0.0,
            "max_abs_residual": float(np.max(np.abs(values[:, 0]))),
            "limit_residual_mean": limit_mean,
            "limit_residual_stderr": limit_stderr,
            "limit_residual_mean_abs": float(np.mean(np.abs(values[:, 1]))),
        }


class ScalarIdentity(_FBMExperiment):
    """``int X^{<>n} <> dX = X^{<>(n+1)} / (n+1)`` along dyadic refinements."""

    name = "scalar-identity"
    defaults = {"n": 1, "H": 0.7, "grid": 256, "T": 1.0, "levels": 5, "shifted": False}

    def prepare(self) -> None:
        H, grid, T = self.config["H"], self.config["grid"], self.config["T"]
        self.times = np.linspace(0.0, T, grid + 1)
        self.model = FBMModel(H, horizon=T)
        self.plan = prepare_scalar_identity(
            self.config["n"], self.model, self.times, self.config["levels"], self.config["shifted"]
        )

    def sample(self, seed: int, start: int, count: int) -> np.ndarray:
        table = self.plan.evaluate(self.paths(seed, start, count))
        return np.stack([row["residual"] for row in table], axis=1)

    def summarize(self, values: np.ndarray) -> dict[str, Any]:
        mesh_table = []
        for k, (_, plan) in enumerate(self.plan.levels):
            column = np.abs(values[:, k])
            mean_abs, stderr = _mean_and_stderr(column)
            mesh_table.append(
                {
                    "n_intervals": plan.n_intervals,
                    "mesh": float(np.max(np.diff(plan.times))),
                    "mean_abs_residual": mean_abs,
                    "stderr": stderr,
                }
            )
        sizes = [row["mean_abs_residual"] for row in mesh_table]
        return {
            "estimate": sizes[-1],
            "stderr": mesh_table[-1]["stderr"],
            "mesh_table": mesh_table,
            "monotone": all(b < a for a, b in zip(sizes, sizes[1:])),
        }


class ExpWick(Experiment):
    """``E[e^X X] / E[e^X]`` for ``X = eps (Z^2 - 1)`` against the cumulant series."""

    name = "exp-wick"
    defaults = {"eps": 0.1, "order": 30}

    def prepare(self) -> None:
        eps = self.config["eps"]
        if not 0 < eps < 0.5:
            raise ConfigurationError(f"eps must lie in (0, 1/2) for E[e^X] to exist, got {eps}")
        self.series = exp_wick_coefficient(chi_square_model(eps), order=self.config["order"])

    def sample(self, seed: int, start: int, count: int) -> np.ndarray:
        z = GaussianBase(seed, SCALAR_STREAM).block(start, count, 1)[:, 0]
        x = self.config["eps"] * (z**2 - 1)
        weight = np.exp(x)
        return np.stack([weight * x, weight], axis=1)

    def summarize(self, values: np.ndarray) -> dict[str, Any]:
        numerator, denominator = np.mean(values[:, 0]), np.mean(values[:, 1])
        ratio = float(numerator / denominator)
        # delta method for a ratio of means
        influence = (values[:, 0] - ratio * values[:, 1]) / denominator
        stderr = float(np.std(influence, ddof=1) / math.sqrt(len(values)))
        return {
            "estimate": ratio,
            "stderr": stderr,
            "target": self.series.value,
            "series": self.series.to_json(),
        }


class Chaos2Moments(Experiment):
    """Sample cumulants of ``I2(f)`` against ``2^(m-1) (m-1)! Tr(A^m)``."""

    name = "chaos2-moments"
    defaults = {"kernel": "rank-one", "H": 0.7, "t": 1.0, "n_grid": 64, "size": 8}

    def prepare(self) -> None:
        kind = self.config["kernel"]
        if kind == "rank-one":
            size = self.config["size"]
            weights = np.full(size, 1.0 / size)
            h = np.ones(size)
            self.kernel = Chaos2Kernel.rank_one(h, weights)
            self.target_variance = None
        elif kind == "rosenblatt":
            spec = RosenblattSpec.create(self.config["H"])
            self.kernel = rosenblatt_kernel_discretize(self.config["t"], spec, self.config["n_grid"])
            self.target_variance = self.config["t"] ** (2 * spec.H)
        else:
            raise ConfigurationError(f"Unknown kernel {kind!r}; expected 'rank-one' or 'rosenblatt'")
        a = self.kernel.orthonormal_matrix()
        powers = [a]
        for _ in range(3):
            powers.append(powers[-1] @ a)
        self.trace_cumulants = {
            m: 2 ** (m - 1) * math.factorial(m - 1) * float(np.trace(powers[m - 1])) for m in (2, 3, 4)
        }

    def sample(self, seed: int, start: int, count: int) -> np.ndarray:
        return chaos2_paths([self.kernel], seed, start, count)[:, 0]

    def summarize(self, values: np.ndarray) -> dict[str, Any]:
        kstats = {m: float(stats.kstat(values, m)) for m in (1, 2, 3, 4)}
        result = {
            "estimate": kstats[2],
            "stderr": float(math.sqrt(stats.kstatvar(values, 2))),
            "target": self.trace_cumulants[2],
            "kstats": {str(m): v for m, v in kstats.items()},
            "trace_cumulants": {str(m): v for m, v in self.trace_cumulants.items()},
            "mean_stderr": _mean_and_stderr(values)[1],
        }
        if self.target_variance is not None:
            bias = self.target_variance - self.trace_cumulants[2]
            result["process_variance"] = self.target_variance
            result["truncation_bias"] = bias
            result["support_tail_bound"] = self.kernel.attrs.get("support_tail_bound")
        return result


EXPERIMENTS: dict[str, type[Experiment]] = {
    cls.name: cls
    for cls in (ZeroMeanWick, YoungMean, ItoResidualExperiment, ScalarIdentity, ExpWick, Chaos2Moments)
}


def get_experiment(name: str, config: Optional[dict[str, Any]] = None) -> Experiment:
    try:
        cls = EXPERIMENTS[name]
    except KeyError:
        raise UnknownExperimentError(
            f"Unknown experiment {name!r}; expected one of {', '.join(sorted(EXPERIMENTS))}"
        ) from None
    return cls(config)


@dataclass
class ExperimentReport:
    """Aggregate of one Monte Carlo run; JSON is a pure function of seed and config."""

    experiment: str
    estimate: float
    stderr: float
    n_paths: int
    seed: int
    config: dict[str, Any]
    target: Optional[float] = None
    extras: dict[str, Any] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.n_paths < 2:
            raise ValueError(f"A report needs at least 2 paths, got {self.n_paths}")

    @property
    def z_score(self) -> Optional[float]:
        if self.target is None or self.stderr == 0:
            return None
        return (self.estimate - self.target) / self.stderr

    def within(self, k: float = 3.0) -> bool:
        """Estimate within ``k`` standard errors of the target."""
        if self.target is None:
            return True
        return abs(self.estimate - self.target) <= k * self.stderr

    def to_json(self) -> dict[str, Any]:
        return {
            "experiment": self.experiment,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "target": self.target,
            "z_score": self.z_score,
            "n_paths": self.n_paths,
            "seed": self.seed,
            "config": self.config,
            "extras": self.extras,
            "warnings": self.warnings,
        }


def monte_carlo(
    experiment: str,
    n_paths: int,
    seed: int,
    workers: int = 1,
    config: Optional[dict[str, Any]] = None,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    verbose: bool = False,
) -> ExperimentReport:
    """
    Run a registered experiment over ``n_paths`` seeded paths.

    Parameters
    ----------
    experiment : str
        Name in :data:`EXPERIMENTS`
    n_paths : int
        At least 100
    seed : int
    workers : int
        Threads used by dask; results do not depend on it
    config : dict, optional
        Overrides of the experiment defaults
    chunk_size : int
        Paths per work unit
    verbose : bool
        Print progress to stderr

    Returns
    -------
    ExperimentReport

    Raises
    ------
    UnknownExperimentError
        ``experiment`` is not registered
    """
    exp = get_experiment(experiment, config)
    if n_paths < MIN_PATHS:
        raise ValueError(f"Monte Carlo needs at least {MIN_PATHS} paths, got {n_paths}")
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be positive, got {chunk_size}")
    GaussianBase(seed)  # seed range check

    debugger = WickDebugger(verbose=verbose)
    caught: list[str] = []
    with warnings.catch_warnings(record=True) as records:
        warnings.simplefilter("always")
        with debugger.operation(f"Prepare {experiment}"):
            exp.prepare()

        starts = range(0, n_paths, chunk_size)
        tasks = [dask.delayed(exp.sample)(seed, s, min(chunk_size, n_paths - s)) for s in starts]
        with debugger.operation(f"Sample {n_paths} paths in {len(tasks)} chunks"):
            if workers > 1:
                chunks = dask.compute(*tasks, scheduler="threads", num_workers=workers)
            else:
                chunks = dask.compute(*tasks, scheduler="synchronous")
            values = np.concatenate(chunks, axis=0)

        with debugger.operation("Summarize"):
            summary = exp.summarize(values)
    for record in records:
        message = str(record.message)
        if message not in caught:
            caught.append(message)
            warnings.warn(message, record.category, stacklevel=2)

    if verbose:
        debugger.summarize()

    estimate = summary.pop("estimate")
    stderr = summary.pop("stderr")
    target = summary.pop("target", None)
    return ExperimentReport(
        experiment,
        float(estimate),
        float(stderr),
        n_paths,
        int(seed),
        exp.config,
        None if target is None else float(target),
        summary,
        caught,
    )
