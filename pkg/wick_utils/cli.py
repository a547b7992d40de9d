"""Command-line front end: ``wick <subcommand> [flags]``.

Every run prints one artifact on stdout (JSON by default, text with
``--pretty``, CSV with ``--csv`` for tabular results). The JSON records the
arguments it was produced from, so ``--input`` replays it. Diagnostics go to
stderr. Exit codes: 0 success, 1 domain error, 2 usage error.
"""
import argparse
import sys
from collections.abc import Sequence
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Optional

import fsspec
import numpy as np

from . import __version__
from .appell import APPELL_METHODS, appell_polynomial, change_of_chaos_expand, to_basis, wick_product
from .combinatorics import Multiset, diagrams_to_json, enumerate_diagrams, parse_symbol
from .config import load_experiment_config, parse_scalar
from .cumulants import (
    DEFAULT_SYMBOL,
    CumulantModel,
    FBMModel,
    GaussianModel,
    PoissonModel,
    RosenblattModel,
    TableModel,
    Variable,
    chi_square_model,
    moment,
)
from .debug import WickDebugger, explain_wick_error
from .errors import ModelError, WickError
from .integrals import (
    ito_residual,
    ito_stratonovich_correction,
    verify_scalar_identities,
    wick_riemann_sum,
    young_integral,
)
from .polynomial import BASES, MONOMIAL, WickPolynomial
from .rosenblatt import (
    DEFAULT_TOL,
    RosenblattSpec,
    kernel_convergence_table,
    rosenblatt_cumulant,
    rosenblatt_joint_cumulant,
    rosenblatt_kernel_discretize,
)
from .simulate import EXPERIMENTS, fbm_sample, monte_carlo
from .storage import dumps, read_json, save_kernel, validate_artifact, write_csv

EXIT_OK = 0
EXIT_DOMAIN_ERROR = 1
EXIT_USAGE = 2

# Flags that shape the output but not the result; they are not recorded for replay
_PRESENTATION = ("command", "output", "input", "pretty", "csv", "verbose", "workers")

# Flags a subcommand cannot run without; checked after --input has filled them in
_REQUIRED = {
    "wick-product": ("left", "right"),
    "diagrams": ("rows",),
    "cumulant": ("vars",),
    "change-chaos": ("rows",),
    "mc": ("experiment",),
}

IDENTITIES = ("scalar", "shifted-scalar", "ito-residual", "ito-stratonovich")


class UsageError(Exception):
    """Invalid combination of command-line arguments."""


@dataclass
class Outcome:
    """Result of a subcommand: JSON artifact, text rendering and an optional table."""

    artifact: dict[str, Any]
    text: str
    table: Optional[list[dict[str, Any]]] = None


# ---------------------------------------------------------------------------
# Parsing helpers


def parse_model(text: str) -> CumulantModel:
    """
    Build a model from the flag mini-language.

    ``gaussian:<variance>``, ``poisson:<lambda>``, ``chi2:<eps>``, ``fbm:<H>``,
    ``rosenblatt:<H>`` and ``table:<path or URL>``. Rational parameters such
    as ``1/2`` keep arithmetic exact.
    """
    kind, sep, value = text.partition(":")
    if not sep or not value:
        raise ModelError(f"Model {text!r} must look like kind:value, e.g. poisson:1")
    kind = kind.strip().lower()
    value = value.strip()
    try:
        if kind == "gaussian":
            model = GaussianModel([[value]], components=(DEFAULT_SYMBOL,), model_id=f"gaussian:{value}")
        elif kind == "poisson":
            model = PoissonModel(value)
        elif kind == "chi2":
            model = chi_square_model(value)
        elif kind == "fbm":
            model = FBMModel(float(value))
        elif kind == "rosenblatt":
            model = RosenblattModel(float(value))
        elif kind == "table":
            model = TableModel.from_json(value)
        else:
            raise ModelError(
                f"Unknown model kind {kind!r}; expected gaussian, poisson, chi2, fbm, rosenblatt or table"
            )
    except (ValueError, ZeroDivisionError) as e:
        if isinstance(e, ModelError):
            raise
        raise ModelError(f"Invalid parameter in model {text!r}: {e}") from e
    return model


def parse_rows(text: str) -> list[Multiset]:
    """``"2,2,2"`` gives three rows ``x,x``; ``"x,y;x"`` gives explicit multisets."""
    text = text.strip()
    if not text:
        raise UsageError("--rows must not be empty")
    if ";" not in text and all(tok.strip().isdigit() for tok in text.split(",")):
        return [Multiset([DEFAULT_SYMBOL] * int(tok)) for tok in text.split(",")]
    return [Multiset.parse(row) for row in text.split(";")]


def parse_variables(text: str) -> list[Variable]:
    """``"x,x,y"`` or timed ``"x@0.5,x@1"``."""
    variables = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            raise UsageError(f"Empty variable in {text!r}")
        symbol, at, time = token.partition("@")
        variables.append(Variable(parse_symbol(symbol), float(time) if at else None))
    return variables


def parse_floats(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def json_number(value: Any) -> Any:
    """Fractions become ``int`` or ``"p/q"``; numpy scalars become Python floats."""
    if isinstance(value, Fraction):
        return int(value) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"
    if isinstance(value, (np.floating, float)):
        return float(value)
    return value


def _multiset(args: argparse.Namespace) -> Multiset:
    if args.multiset:
        return Multiset.parse(args.multiset)
    if args.degree is None:
        raise UsageError("Give --degree or --multiset")
    if args.degree < 0:
        raise UsageError("--degree must be non-negative")
    return Multiset([DEFAULT_SYMBOL] * args.degree)


def _check_required(args: argparse.Namespace) -> None:
    missing = [name for name in _REQUIRED.get(args.command, ()) if getattr(args, name, None) is None]
    if missing:
        flags = ", ".join(f"--{name}" for name in missing)
        raise UsageError(f"{args.command} needs {flags} (or --input with a recorded artifact)")


def _require_seed(args: argparse.Namespace) -> int:
    if args.seed is None:
        raise UsageError(f"{args.command} needs --seed")
    return args.seed


# ---------------------------------------------------------------------------
# Subcommands


def cmd_appell(args: argparse.Namespace, debugger: WickDebugger) -> Outcome:
    model = parse_model(args.model)
    I = _multiset(args)
    with debugger.operation(f"Appell polynomial x^<>{{{I}}} ({args.method})"):
        p = appell_polynomial(I, model, method=args.method)
    return Outcome(
        {"model": model.model_id, "multiset": I.to_string(), "polynomial": p.to_json(), "text": p.pretty()},
        p.pretty(),
    )


def cmd_wick_product(args: argparse.Namespace, debugger: WickDebugger) -> Outcome:
    model = parse_model(args.model)
    left = WickPolynomial.parse(args.left)
    right = WickPolynomial.parse(args.right)
    with debugger.operation("Wick product"):
        result = wick_product(
            left, right, model, basis=args.basis, as_random_variables=args.random_variables
        )
    return Outcome(
        {
            "model": model.model_id,
            "left": left.to_json(),
            "right": right.to_json(),
            "result": result.to_json(),
            "text": result.pretty(),
        },
        result.pretty(),
    )


def cmd_diagrams(args: argparse.Namespace, debugger: WickDebugger) -> Outcome:
    rows = parse_rows(args.rows)
    filters = {
        "total": args.total,
        "non_flat": args.nonflat,
        "gaussian": args.gaussian,
        "connected": args.connected,
    }
    with debugger.operation("Enumerate diagrams"):
        diagrams = list(enumerate_diagrams(rows, **filters))
    artifact: dict[str, Any] = {
        "rows": [row.to_string() for row in rows],
        "filters": filters,
        "count": len(diagrams),
    }
    table = None
    if not args.count:
        artifact["diagrams"] = diagrams_to_json(diagrams)
        table = [
            {"index": i, "edges": d["edges"], "residual": d["residual"]}
            for i, d in enumerate(artifact["diagrams"])
        ]
    text = str(len(diagrams))
    if not args.count:
        lines = [f"{len(diagrams)} diagram(s)"]
        lines += [f"  edges={d['edges']} residual={d['residual']}" for d in artifact["diagrams"]]
        text = "\n".join(lines)
    return Outcome(artifact, text, table)


def cmd_cumulant(args: argparse.Namespace, debugger: WickDebugger) -> Outcome:
    model = parse_model(args.model)
    variables = parse_variables(args.vars)
    with debugger.operation("Joint cumulant and moment"):
        kappa = model.kappa(variables)
        m = moment(variables, model)
    names = [str(v) for v in variables]
    return Outcome(
        {
            "model": model.model_id,
            "variables": names,
            "kappa": json_number(kappa),
            "moment": json_number(m),
        },
        f"kappa[{', '.join(names)}] = {json_number(kappa)}\nE[{' '.join(names)}] = {json_number(m)}",
    )


def cmd_change_chaos(args: argparse.Namespace, debugger: WickDebugger) -> Outcome:
    model = parse_model(args.model)
    rows = parse_rows(args.rows)
    with debugger.operation("Change of chaos expansion"):
        p = change_of_chaos_expand(rows, model)
        p = to_basis(p, args.basis, model)
    return Outcome(
        {
            "model": model.model_id,
            "rows": [row.to_string() for row in rows],
            "polynomial": p.to_json(),
            "text": p.pretty(),
        },
        p.pretty(),
    )


def cmd_rosenblatt(args: argparse.Namespace, debugger: WickDebugger) -> Outcome:
    spec = RosenblattSpec.create(args.H)
    artifact: dict[str, Any] = {"spec": spec.to_json()}
    table = None
    if args.times:
        times = parse_floats(args.times)
        with debugger.operation(f"Joint cumulant at {len(times)} times"):
            report = rosenblatt_joint_cumulant(times, spec)
        artifact.update({"times": times, "cumulant": report.to_json()})
        text = f"kappa[{', '.join(f'X_{t:g}' for t in times)}] = {report.value:.10g}"
    else:
        with debugger.operation(f"kappa_{args.n}[X_{args.t:g}]"):
            report = rosenblatt_cumulant(args.n, args.t, spec, tol=args.tol)
        artifact.update({"n": args.n, "t": args.t, "cumulant": report.to_json()})
        text = f"kappa_{args.n}[X_{args.t:g}] = {report.value:.10g} (error {report.error_estimate:.2g})"
        if args.n == 2:
            artifact["target"] = args.t ** (2 * spec.H)
        table = report.levels
    if args.kernel_out:
        t = max(parse_floats(args.times)) if args.times else args.t
        with debugger.operation(f"Discretize kernel f_{t:g} on {args.grid} cells"):
            kernel = rosenblatt_kernel_discretize(t, spec, args.grid, args.support)
            save_kernel(kernel, args.kernel_out)
            grids = [g for g in (args.grid // 4, args.grid // 2) if g >= 16]
            table = kernel_convergence_table(t, spec, grids, args.support) if grids else []
        variance = 2 * float(np.sum(kernel.orthonormal_matrix() ** 2))
        table.append({"n_grid": args.grid, "variance": variance, "error": abs(variance - t ** (2 * spec.H))})
        artifact["kernel"] = {
            "path": args.kernel_out,
            "t": t,
            "n_grid": args.grid,
            "support": kernel.attrs["support"],
            "variance": variance,
            "target_variance": t ** (2 * spec.H),
            "support_tail_bound": kernel.attrs["support_tail_bound"],
            "convergence": table,
        }
        text += f"\nkernel written to {args.kernel_out}: 2Tr(A^2) = {variance:.6g} vs t^2H = {t ** (2 * spec.H):.6g}"
    return Outcome(artifact, text, table)


def cmd_verify(args: argparse.Namespace, debugger: WickDebugger) -> Outcome:
    seed = _require_seed(args)
    model = parse_model(args.model)
    if not isinstance(model, FBMModel):
        raise ModelError("verify samples fractional Brownian motion; use --model fbm:<H>")
    times = np.linspace(0.0, args.T, args.grid + 1)
    with debugger.operation(f"Sample fBm path on {args.grid} intervals"):
        path = fbm_sample(model.H, times, seed)

    table = None
    with debugger.operation(f"Verify {args.identity}"):
        if args.identity in ("scalar", "shifted-scalar"):
            report = verify_scalar_identities(
                args.n, path, model, levels=args.levels, shifted=args.identity == "shifted-scalar", seed=seed
            )
            result = report.to_json()
            table = report.mesh_table
            text = (
                f"residual {report.residual:.3e} on {args.grid} intervals; "
                f"monotone under refinement: {report.monotone}"
            )
        else:
            p = WickPolynomial.parse(args.p)
            if args.identity == "ito-residual":
                result = {"identity": "ito-residual", **ito_residual(p, path, model).to_json()}
                text = f"same-grid residual {result['residual']:.3e}, limit residual {result['limit_residual']:.3e}"
            else:
                correction = ito_stratonovich_correction(p, model, path=path)
                young = young_integral(p, path)
                wick = wick_riemann_sum(p, path, model)
                result = {
                    "identity": "ito-stratonovich",
                    "young": young,
                    "wick": wick,
                    "correction": correction.to_json(),
                    "residual": young - wick - correction.pathwise,
                }
                text = f"young - wick - correction = {result['residual']:.3e}"
            result["p"] = p.to_json()
    result["seed"] = seed
    return Outcome(result, text, table)


def _experiment_config(args: argparse.Namespace) -> dict[str, Any]:
    config = load_experiment_config(args.config) if args.config else {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        config[key.strip()] = parse_scalar(value)
    for key in ("H", "grid", "p", "n", "eps"):
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    return config


def cmd_mc(args: argparse.Namespace, debugger: WickDebugger) -> Outcome:
    seed = _require_seed(args)
    report = monte_carlo(
        args.experiment,
        args.paths,
        seed,
        workers=args.workers,
        config=_experiment_config(args),
        verbose=args.verbose,
    )
    result = report.to_json()
    text = f"{report.experiment}: {report.estimate:.6g} ± {report.stderr:.2g} ({report.n_paths} paths)"
    if report.z_score is not None:
        text += f"; target {report.target:.6g}, z = {report.z_score:.2f}"
    return Outcome(result, text, report.extras.get("mesh_table"))


COMMANDS: dict[str, Callable[[argparse.Namespace, WickDebugger], Outcome]] = {
    "appell": cmd_appell,
    "wick-product": cmd_wick_product,
    "diagrams": cmd_diagrams,
    "cumulant": cmd_cumulant,
    "change-chaos": cmd_change_chaos,
    "rosenblatt": cmd_rosenblatt,
    "verify": cmd_verify,
    "mc": cmd_mc,
}


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--pretty", action="store_true", help="Human-readable text instead of JSON")
    common.add_argument("--csv", action="store_true", help="Tabular part of the result as CSV")
    common.add_argument("--output", help="Write the artifact to this path/URL instead of stdout")
    common.add_argument("--input", help="Replay the arguments recorded in a previous JSON artifact")
    common.add_argument("--verbose", action="store_true", help="Progress and timings on stderr")

    parser = argparse.ArgumentParser(prog="wick", description="Wick/Appell calculus for non-Gaussian processes")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("appell", parents=[common], help="Appell polynomial x^<>I")
    p.add_argument("--model", default="gaussian:1")
    p.add_argument("--degree", type=int)
    p.add_argument("--multiset", help="Index multiset, e.g. x,x,y")
    p.add_argument("--method", choices=APPELL_METHODS, default="recursive")

    p = sub.add_parser("wick-product", parents=[common], help="Wick product of two polynomials")
    p.add_argument("--model", default="gaussian:1")
    p.add_argument("--left")
    p.add_argument("--right")
    p.add_argument("--basis", choices=BASES, default=MONOMIAL)
    p.add_argument("--random-variables", action="store_true", help="Read the operands as random variables")

    p = sub.add_parser("diagrams", parents=[common], help="Enumerate diagrams over rows")
    p.add_argument("--rows", help="Row sizes (2,2,2) or multisets (x,y;x)")
    p.add_argument("--total", action="store_true")
    p.add_argument("--nonflat", action="store_true")
    p.add_argument("--gaussian", action="store_true")
    p.add_argument("--connected", action="store_true")
    p.add_argument("--count", action="store_true", help="Only count")

    p = sub.add_parser("cumulant", parents=[common], help="Joint cumulant and moment")
    p.add_argument("--model", default="gaussian:1")
    p.add_argument("--vars", help="Variables, e.g. x,x,y or x@0.5,x@1")

    p = sub.add_parser("change-chaos", parents=[common], help="Change of chaos expansion")
    p.add_argument("--model", default="gaussian:1")
    p.add_argument("--rows", help="Index multisets I_k, e.g. x,x;x")
    p.add_argument("--basis", choices=BASES, default="appell")

    p = sub.add_parser("rosenblatt", parents=[common], help="Rosenblatt cumulants and kernels")
    p.add_argument("--H", type=float, default=0.7)
    p.add_argument("--n", type=int, default=2, help="Cumulant order")
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--times", help="Distinct times for a joint cumulant, e.g. 0.5,1")
    p.add_argument(
        "--tol",
        type=float,
        default=DEFAULT_TOL,
        help="Relative error estimate below which the cumulant is reported converged (default 1e-8)",
    )
    p.add_argument("--grid", type=int, default=256, help="Kernel grid cells")
    p.add_argument("--support", type=float, help="Kernel support length (default 10 t)")
    p.add_argument("--kernel-out", help="Write the discretized kernel (zarr or .json)")

    p = sub.add_parser("verify", parents=[common], help="Pathwise identities on one fBm path")
    p.add_argument("--identity", choices=IDENTITIES, default="scalar")
    p.add_argument("--model", default="fbm:0.7")
    p.add_argument("--n", type=int, default=1, help="Wick power for the scalar identities")
    p.add_argument("--p", default="x^2", help="Polynomial for the Itô identities")
    p.add_argument("--grid", type=int, default=256)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--levels", type=int, default=5)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("mc", parents=[common], help="Monte Carlo experiment")
    p.add_argument("--experiment", choices=sorted(EXPERIMENTS))
    p.add_argument("--paths", type=int, default=10_000)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--config", help="Experiment config (JSON or key=value)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="Override one config value")
    p.add_argument("--H", type=float)
    p.add_argument("--grid", type=int)
    p.add_argument("--p")
    p.add_argument("--n", type=int)
    p.add_argument("--eps", type=float)

    return parser


# ---------------------------------------------------------------------------
# Driver


def _recorded(args: argparse.Namespace) -> dict[str, Any]:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _PRESENTATION}


def _replay(args: argparse.Namespace) -> argparse.Namespace:
    artifact = read_json(args.input)
    check = validate_artifact(artifact)
    if not check["valid"]:
        raise UsageError(f"{args.input} is not a replayable artifact: {'; '.join(check['issues'])}")
    if artifact["command"] != args.command:
        raise UsageError(f"{args.input} was produced by '{artifact['command']}', not '{args.command}'")
    merged = vars(args).copy()
    merged.update(artifact["args"])
    return argparse.Namespace(**merged)


def _emit(args: argparse.Namespace, outcome: Outcome) -> None:
    if args.csv:
        if outcome.table is None:
            raise UsageError(f"{args.command} has no tabular output for --csv")
        if args.output:
            write_csv(outcome.table, args.output)
        else:
            sys.stdout.write(write_csv(outcome.table))
        return
    if args.pretty:
        text = outcome.text + "\n"
    else:
        text = dumps(outcome.artifact) + "\n"
    if args.output:
        with fsspec.open(args.output, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run the subcommand and return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    debugger = WickDebugger(verbose=args.verbose)
    try:
        if args.input:
            args = _replay(args)
        _check_required(args)
        outcome = COMMANDS[args.command](args, debugger)
        outcome.artifact = {"command": args.command, "args": _recorded(args), **outcome.artifact}
        _emit(args, outcome)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"wick: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (WickError, ValueError, KeyError, FileNotFoundError) as e:
        error = {"error": {"type": type(e).__name__, "message": str(e)}}
        sys.stdout.write(dumps(error) + "\n")
        print(explain_wick_error(e, {"command": args.command}), file=sys.stderr)
        return EXIT_DOMAIN_ERROR
    if args.verbose:
        debugger.summarize()
        if args.output:
            print(f"✓ Wrote {args.output}", file=sys.stderr)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
