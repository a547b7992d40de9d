"""Runtime configuration: caps, tolerances and experiment config files."""
import json
import os
from typing import Any, Optional, Union

import fsspec

from .errors import ConfigurationError, SlotCapError

DEFAULT_SLOT_CAP = 12
SLOT_CAP_ENV = "WICK_SLOT_CAP"

# Relative tolerance for floating identity checks
REL_TOL = 1e-10

# Paths per Monte Carlo work unit; fixed so reductions do not depend on workers
DEFAULT_CHUNK_SIZE = 1000

# Rosenblatt kernel support is truncated to [-factor * t, t]
DEFAULT_SUPPORT_FACTOR = 10.0

# Joint cumulants memoized per model; least recently used entries are evicted beyond this
KAPPA_CACHE_SIZE = 65_536


def get_slot_cap(cap: Optional[int] = None) -> int:
    """Resolve the slot cap: explicit argument, then environment, then default."""
    if cap is not None:
        if cap < 0:
            raise ConfigurationError(f"Slot cap must be non-negative, got {cap}")
        return int(cap)

    raw = os.environ.get(SLOT_CAP_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_SLOT_CAP
    try:
        value = int(raw)
    except ValueError as e:
        raise ConfigurationError(f"{SLOT_CAP_ENV} must be an integer, got {raw!r}") from e
    if value < 0:
        raise ConfigurationError(f"{SLOT_CAP_ENV} must be non-negative, got {value}")
    return value


def check_slot_cap(size: int, cap: Optional[int] = None, what: str = "ground set") -> int:
    """Raise :class:`SlotCapError` when ``size`` exceeds the resolved cap.

    Returns the resolved cap so callers can pass it on.
    """
    limit = get_slot_cap(cap)
    if size > limit:
        raise SlotCapError(size, limit, what)
    return limit


def parse_scalar(text: str) -> Union[bool, int, float, str]:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text.strip()


def load_experiment_config(
    path: str, storage_options: Optional[dict[str, Any]] = None
) -> dict[str, Any]:
    """
    Load a Monte Carlo experiment configuration.

    Parameters
    ----------
    path : str
        Local path or fsspec URL of a JSON object or a flat ``key=value`` file
    storage_options : dict, optional
        Passed to ``fsspec.open`` (e.g. ``{'anon': True}`` for S3)

    Returns
    -------
    dict
        Configuration values; ``key=value`` entries are parsed as bool/int/float/str
    """
    storage_options = storage_options or {}
    with fsspec.open(path, "r", **storage_options) as f:
        text = f.read()

    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Invalid JSON in {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path} must contain a JSON object")
        return data

    config: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        config[key.strip()] = parse_scalar(value)
    return config
