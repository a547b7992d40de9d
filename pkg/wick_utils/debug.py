"""Progress timing, model diagnostics and readable explanations of failures."""
import functools
import reprlib
import sys
import time
import traceback
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Callable, Optional, TextIO

from .config import SLOT_CAP_ENV
from .errors import (
    BasisMismatchError,
    ConfigurationError,
    ConvergenceError,
    GridMismatchError,
    ModelError,
    SlotCapError,
    UnknownExperimentError,
    WellDefinednessError,
)


@dataclass
class OperationRecord:
    """One timed step; ``error`` holds the message when the step raised."""

    name: str
    duration: float
    error: Optional[str] = None

    @property
    def success(self) -> bool:
        return self.error is None


class WickDebugger:
    """Timing and progress markers for long computations.

    Output goes to stderr unless another stream is given, so stdout can carry
    a machine-readable artifact.
    """

    def __init__(self, verbose: bool = True, stream: Optional[TextIO] = None):
        self.verbose = verbose
        self.stream = stream
        self.records: list[OperationRecord] = []

    def _print(self, text: str) -> None:
        print(text, file=self.stream if self.stream is not None else sys.stderr)

    def note(self, message: str) -> None:
        if self.verbose:
            self._print(f"  {message}")

    @contextmanager
    def operation(self, name: str) -> Iterator[None]:
        """Time the enclosed block and record whether it raised."""
        self.note(f"Starting: {name}")
        start = time.perf_counter()
        try:
            yield
        except Exception as e:
            record = OperationRecord(name, time.perf_counter() - start, str(e))
            self.records.append(record)
            self.note(f"Failed: {name} after {record.duration:.2f}s")
            raise
        record = OperationRecord(name, time.perf_counter() - start)
        self.records.append(record)
        self.note(f"Completed: {name} in {record.duration:.2f}s")

    def summarize(self) -> None:
        """Print one line per recorded step under a totals header."""
        if not self.records:
            return
        failed = sum(not r.success for r in self.records)
        total = sum(r.duration for r in self.records)
        self._print(
            f"\nOperation Summary: {len(self.records)} operations, {failed} failed, {total:.2f}s"
        )
        width = max(len(r.name) for r in self.records)
        for r in self.records:
            line = f"  {'ok' if r.success else 'FAIL':<4}  {r.name:<{width}}  {r.duration:7.2f}s"
            self._print(line if r.success else f"{line}  {r.error}")


def diagnose_model(
    model: Any,
    times: Optional[list[float]] = None,
    max_order: int = 4,
    detailed: bool = True,
    stream: Optional[TextIO] = None,
) -> dict[str, Any]:
    """
    Check a cumulant model for the properties the integrals and products rely on.

    Parameters
    ----------
    model : CumulantModel
        Model to check
    times : list of float, optional
        Sample times for time-indexed models (default: quarter points of the horizon)
    max_order : int, optional
        Highest equal-argument cumulant to tabulate (default: 4)
    detailed : bool, optional
        Print progress markers and a summary (default: True)

    Returns
    -------
    dict
        Report with flags, a cumulant table, C1 derivative checks, issues and suggestions
    """
    from .cumulants import Variable

    debugger = WickDebugger(verbose=detailed, stream=stream)
    component = model.components[0] if model.components else "x"
    report: dict[str, Any] = {
        "model": model.model_id,
        "kind": type(model).__name__,
        "time_indexed": model.time_indexed,
        "polynomial_relation_free": model.polynomial_relation_free,
        "rational_exact": model.rational_exact,
        "max_cumulant_order": model.max_cumulant_order,
        "cumulants": {},
        "derivatives": {},
        "issues": [],
        "suggestions": [],
    }
    if model.time_indexed:
        grid_times = times or [model.horizon * k / 4 for k in range(1, 5)]
    else:
        grid_times = [None]

    with debugger.operation("Tabulate equal-argument cumulants"):
        for u in grid_times:
            row = {}
            for n in range(1, max_order + 1):
                try:
                    row[n] = float(model.kappa([Variable(component, u)] * n))
                except Exception as e:
                    report["issues"].append(f"kappa_{n} at t={u}: {e}")
                    break
            report["cumulants"]["static" if u is None else f"{u:g}"] = row
            if row.get(2, 0.0) < 0:
                report["issues"].append(f"Negative variance at t={u}")

    if model.time_indexed:
        with debugger.operation("Check time derivatives"):
            for u in grid_times:
                for n in range(2, min(max_order, model.max_cumulant_order or max_order) + 1):
                    variables = [Variable(component, u)] * n
                    try:
                        report["derivatives"][f"{u:g}/{n}"] = model.kappa_time_derivative(variables)
                    except ConvergenceError as e:
                        report["issues"].append(str(e))
                        report["suggestions"].append(
                            "Supply an analytic time derivative or widen the finite-difference step"
                        )

    if not model.polynomial_relation_free:
        report["suggestions"].append(
            "Wick products of random variables need a polynomial-relation-free model; "
            "pass relation_free=True only if no polynomial vanishes on the variables"
        )

    if detailed:
        debugger.summarize()

    return report


# First matching class wins, so subclasses come before their bases
_EXPLANATIONS: tuple[tuple[type[BaseException], str, tuple[str, ...]], ...] = (
    (
        SlotCapError,
        "The enumeration would exceed the slot cap.",
        (
            f"Raise the cap with the {SLOT_CAP_ENV} environment variable or pass cap=...",
            "Set partitions grow like Bell numbers; keep multisets small",
        ),
    ),
    (
        WellDefinednessError,
        "The Wick product of random variables is only defined when no polynomial "
        "relation holds between them.",
        (
            "Compute the product formally (as_random_variables=False)",
            "Or mark the model relation_free=True if you know it is",
        ),
    ),
    (
        BasisMismatchError,
        "Polynomials from the Appell bases of different models were mixed.",
        (
            "Convert both operands with to_monomial_basis first",
            "Check that the same model instance is used throughout",
        ),
    ),
    (
        GridMismatchError,
        "Kernels, paths or times do not live on the same grid.",
        (
            "Build kernels with rosenblatt_kernel_family to share one grid",
            "Check that requested times are grid points",
        ),
    ),
    (
        ConvergenceError,
        "A numerical procedure did not converge to the requested tolerance.",
        (
            "Loosen the tolerance or refine the quadrature levels",
            "For exponential series, check that the ratio test is below 1",
            "For finite-difference derivatives, the cumulant may not be C1 at that time",
        ),
    ),
    (
        UnknownExperimentError,
        "No Monte Carlo experiment is registered under that name.",
        ("List the names in wick_utils.simulate.EXPERIMENTS",),
    ),
    (
        ConfigurationError,
        "A configuration file or environment variable is malformed.",
        (
            "Configs are JSON objects or flat key=value files",
            f"{SLOT_CAP_ENV} must be a positive integer",
        ),
    ),
    (
        ModelError,
        "The cumulant model specification is invalid.",
        (
            "Model strings look like gaussian:1, poisson:2, fbm:0.7, rosenblatt:0.7, table:path.json",
            "Hurst indices must lie in (0, 1), and in (1/2, 1) for Rosenblatt",
        ),
    ),
    (
        FileNotFoundError,
        "The input file does not exist.",
        ("Check the path/URL for typos",),
    ),
)


def explain_wick_error(error: Exception, context: Optional[dict[str, Any]] = None) -> str:
    """
    Describe a wick-utils failure in plain words with suggested fixes.

    Parameters
    ----------
    error : Exception
        The exception that occurred
    context : dict, optional
        Extra key/value lines, e.g. ``{"command": "appell"}``

    Returns
    -------
    str
        Multi-line explanation
    """
    lines = [f"\nError: {type(error).__name__}: {error}"]
    for cls, meaning, suggestions in _EXPLANATIONS:
        if isinstance(error, cls):
            lines.append(f"  What this means: {meaning}")
            lines.append("  Suggestions:")
            lines.extend(f"    - {s}" for s in suggestions)
            break
    if context:
        lines.append("  Context:")
        lines.extend(f"    {key}: {value}" for key, value in context.items())
    frames = traceback.extract_tb(error.__traceback__)
    if frames:
        lines.append(f"  Error occurred in: {frames[-1].filename}:{frames[-1].lineno}")
    return "\n".join(lines)


# Public entry points that enable_debug_mode wraps
DEBUG_WRAPPED = (
    "appell_polynomial",
    "wick_product",
    "enumerate_diagrams",
    "ekw_identity",
    "rosenblatt_cumulant",
    "wick_riemann_sum",
    "verify_scalar_identities",
    "monte_carlo",
    "open_kernel",
)


def _explaining(func: Callable[..., Any]) -> Callable[..., Any]:
    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except Exception as e:
            context = {"function": func.__name__, "args": reprlib.repr(args)}
            print(explain_wick_error(e, context), file=sys.stderr)
            raise

    return wrapper


def enable_debug_mode() -> None:
    """Wrap the main public functions so failures print an explanation to stderr."""
    import wick_utils

    for name in DEBUG_WRAPPED:
        func = getattr(wick_utils, name, None)
        if func is None or hasattr(func, "__wrapped__"):
            continue
        setattr(wick_utils, name, _explaining(func))
    print("Debug mode enabled: failures print an explanation to stderr", file=sys.stderr)
