"""Persistence of kernels, tables and CLI artifacts through fsspec."""
import json
from collections.abc import Mapping, Sequence
from typing import Any, Optional

import fsspec
import numpy as np
import xarray as xr

from .chaos2 import Chaos2Kernel, check_grid
from .errors import GridMismatchError

FORMAT_VERSION = 1
KERNEL_FORMATS = ("zarr", "json")


def _json_default(obj: Any) -> Any:
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def dumps(obj: Any, pretty: bool = True) -> str:
    """Canonical JSON: sorted keys, fixed indent, numpy scalars converted."""
    return json.dumps(obj, sort_keys=True, indent=2 if pretty else None, default=_json_default)


def write_json(
    obj: Any, url: str, storage_options: Optional[dict[str, Any]] = None
) -> None:
    storage_options = storage_options or {}
    with fsspec.open(url, "w", **storage_options) as f:
        f.write(dumps(obj))
        f.write("\n")


def read_json(url: str, storage_options: Optional[dict[str, Any]] = None) -> Any:
    storage_options = storage_options or {}
    with fsspec.open(url, "r", **storage_options) as f:
        return json.load(f)


# ---------------------------------------------------------------------------
# Kernels


def kernels_to_dataset(kernels: Sequence[Chaos2Kernel]) -> xr.Dataset:
    """
    Stack kernels sharing one grid into an ``xarray.Dataset``.

    Variables are ``matrix(kernel, x1, x2)``, ``weights(x)`` and ``points(x)``;
    labels and per-kernel attributes travel as JSON in ``attrs``.
    """
    if not kernels:
        raise ValueError("Need at least one kernel")
    check_grid(*kernels)
    first = kernels[0]
    points = first.points if first.points is not None else np.arange(first.size, dtype=float)
    return xr.Dataset(
        {
            "matrix": (("kernel", "x1", "x2"), np.stack([k.matrix for k in kernels])),
            "weights": (("x",), first.weights),
            "points": (("x",), points),
        },
        attrs={
            "format_version": FORMAT_VERSION,
            "kind": "chaos2-kernels",
            "labels": json.dumps([k.label for k in kernels]),
            "kernel_attrs": json.dumps([dict(k.attrs) for k in kernels], default=_json_default),
            "has_points": first.points is not None,
        },
    )


def kernel_to_dataset(kernel: Chaos2Kernel) -> xr.Dataset:
    return kernels_to_dataset([kernel])


def dataset_to_kernels(ds: xr.Dataset) -> list[Chaos2Kernel]:
    """Inverse of :func:`kernels_to_dataset`."""
    for name in ("matrix", "weights"):
        if name not in ds:
            raise ValueError(f"Dataset has no {name!r} variable; not a kernel store")
    matrices = np.asarray(ds["matrix"].values, dtype=float)
    weights = np.asarray(ds["weights"].values, dtype=float)
    if matrices.shape[1:] != (len(weights), len(weights)):
        raise GridMismatchError(
            f"Kernel matrices of shape {matrices.shape[1:]} do not match {len(weights)} weights"
        )
    has_points = bool(ds.attrs.get("has_points", True)) and "points" in ds
    points = np.asarray(ds["points"].values, dtype=float) if has_points else None
    labels = json.loads(ds.attrs.get("labels", "[]")) or [f"f{k}" for k in range(len(matrices))]
    attrs = json.loads(ds.attrs.get("kernel_attrs", "[]")) or [{}] * len(matrices)
    return [
        Chaos2Kernel(matrices[k], weights, labels[k], points, attrs=attrs[k])
        for k in range(len(matrices))
    ]


def dataset_to_kernel(ds: xr.Dataset) -> Chaos2Kernel:
    kernels = dataset_to_kernels(ds)
    if len(kernels) != 1:
        raise ValueError(f"Store holds {len(kernels)} kernels; use open_kernels")
    return kernels[0]


def _kernel_format(url: str, format: Optional[str]) -> str:
    if format is None:
        format = "json" if url.rstrip("/").endswith(".json") else "zarr"
    if format not in KERNEL_FORMATS:
        raise ValueError(f"Unknown kernel format {format!r}; expected one of {KERNEL_FORMATS}")
    return format


def kernels_to_json(kernels: Sequence[Chaos2Kernel]) -> dict[str, Any]:
    check_grid(*kernels)
    return {
        "format_version": FORMAT_VERSION,
        "kind": "chaos2-kernels",
        "kernels": [
            {
                "label": k.label,
                "matrix": k.matrix.tolist(),
                "weights": k.weights.tolist(),
                "points": None if k.points is None else k.points.tolist(),
                "attrs": dict(k.attrs),
            }
            for k in kernels
        ],
    }


def kernels_from_json(data: Mapping[str, Any]) -> list[Chaos2Kernel]:
    if data.get("kind") != "chaos2-kernels":
        raise ValueError(f"Not a kernel artifact (kind={data.get('kind')!r})")
    kernels = [
        Chaos2Kernel(
            np.asarray(entry["matrix"], dtype=float),
            np.asarray(entry["weights"], dtype=float),
            entry.get("label", "f"),
            None if entry.get("points") is None else np.asarray(entry["points"], dtype=float),
            attrs=entry.get("attrs", {}),
        )
        for entry in data["kernels"]
    ]
    check_grid(*kernels)
    return kernels


def save_kernels(
    kernels: Sequence[Chaos2Kernel],
    url: str,
    storage_options: Optional[dict[str, Any]] = None,
    format: Optional[str] = None,
) -> str:
    """
    Write kernels sharing one grid to a zarr store or a JSON file.

    Parameters
    ----------
    kernels : sequence of Chaos2Kernel
    url : str
        Local path or fsspec URL; ``*.json`` selects JSON unless ``format`` is given
    storage_options : dict, optional
        Passed to fsspec (e.g. ``{'anon': False}`` for S3)
    format : {"zarr", "json"}, optional

    Returns
    -------
    str
        The format written
    """
    storage_options = storage_options or {}
    format = _kernel_format(url, format)
    if format == "json":
        write_json(kernels_to_json(kernels), url, storage_options)
        return format
    mapper = fsspec.get_mapper(url, **storage_options)
    kernels_to_dataset(kernels).to_zarr(mapper, mode="w", consolidated=True)
    return format


def open_kernels(
    url: str, storage_options: Optional[dict[str, Any]] = None, format: Optional[str] = None
) -> list[Chaos2Kernel]:
    storage_options = storage_options or {}
    format = _kernel_format(url, format)
    if format == "json":
        return kernels_from_json(read_json(url, storage_options))
    mapper = fsspec.get_mapper(url, **storage_options)
    try:
        ds = xr.open_zarr(mapper, consolidated=True)
    except KeyError:
        # stores written without consolidated metadata
        ds = xr.open_zarr(mapper, consolidated=False)
    with ds:
        return dataset_to_kernels(ds.load())


def save_kernel(
    kernel: Chaos2Kernel,
    url: str,
    storage_options: Optional[dict[str, Any]] = None,
    format: Optional[str] = None,
) -> str:
    return save_kernels([kernel], url, storage_options, format)


def open_kernel(
    url: str, storage_options: Optional[dict[str, Any]] = None, format: Optional[str] = None
) -> Chaos2Kernel:
    """Open a store written by :func:`save_kernel`."""
    kernels = open_kernels(url, storage_options, format)
    if len(kernels) != 1:
        raise ValueError(f"{url} holds {len(kernels)} kernels; use open_kernels")
    return kernels[0]


# ---------------------------------------------------------------------------
# Tables


def table_to_dataset(rows: Sequence[Mapping[str, Any]], dim: str = "row") -> xr.Dataset:
    """One variable per column of ``rows``, indexed along ``dim``."""
    if not rows:
        return xr.Dataset(coords={dim: np.arange(0)})
    columns: dict[str, list[Any]] = {}
    for row in rows:
        for key in row:
            columns.setdefault(key, [])
    for row in rows:
        for key, values in columns.items():
            value = row.get(key)
            if isinstance(value, (list, tuple, dict)):
                value = json.dumps(value, sort_keys=True, default=_json_default)
            values.append(value)
    return xr.Dataset(
        {key: ((dim,), np.asarray(values)) for key, values in columns.items()},
        coords={dim: np.arange(len(rows))},
    )


def write_csv(
    rows: Sequence[Mapping[str, Any]],
    url: Optional[str] = None,
    dim: str = "row",
    storage_options: Optional[dict[str, Any]] = None,
) -> Optional[str]:
    """Write a table as CSV; without ``url`` the CSV text is returned."""
    frame = table_to_dataset(rows, dim).to_dataframe()
    if url is None:
        return frame.to_csv(index=False)
    storage_options = storage_options or {}
    with fsspec.open(url, "w", **storage_options) as f:
        frame.to_csv(f, index=False)
    return None


# ---------------------------------------------------------------------------
# Artifacts


_ARTIFACT_KEYS = {
    "appell": ("polynomial", "text"),
    "wick-product": ("left", "right", "result"),
    "diagrams": ("rows", "count"),
    "cumulant": ("variables", "kappa"),
    "change-chaos": ("rows", "polynomial"),
    "rosenblatt": ("spec",),
    "verify": ("identity",),
    "mc": ("experiment", "estimate", "stderr", "n_paths", "seed"),
}


def validate_artifact(obj: Any, verbose: bool = False) -> dict[str, Any]:
    """
    Check that ``obj`` is a JSON artifact written by the ``wick`` command.

    Returns
    -------
    dict
        Report with keys ``valid``, ``kind`` and ``issues``
    """
    issues: list[str] = []
    report: dict[str, Any] = {"valid": True, "kind": None, "issues": issues}

    if not isinstance(obj, Mapping):
        issues.append(f"Artifact must be a JSON object, got {type(obj).__name__}")
    elif obj.get("kind") == "chaos2-kernels":
        report["kind"] = "chaos2-kernels"
        if obj.get("format_version") != FORMAT_VERSION:
            issues.append(f"Unsupported format_version {obj.get('format_version')!r}")
        if not obj.get("kernels"):
            issues.append("No kernels in artifact")
    elif "error" in obj:
        report["kind"] = "error"
        issues.append(f"Artifact records a failed run: {obj['error'].get('message')}")
    else:
        command = obj.get("command")
        report["kind"] = command
        if command not in _ARTIFACT_KEYS:
            issues.append(f"Unknown command {command!r}")
        else:
            missing = [key for key in _ARTIFACT_KEYS[command] if key not in obj]
            if missing:
                issues.append(f"Missing keys for {command}: {', '.join(missing)}")
            if not isinstance(obj.get("args"), Mapping):
                issues.append("No recorded arguments; the run cannot be replayed")

    report["valid"] = not issues

    if verbose:
        if report["valid"]:
            print(f"✓ Valid {report['kind']} artifact")
        else:
            for issue in issues:
                print(f"⚠ {issue}")

    return report
