"""Shared plumbing: keyed counter-based RNG, deterministic file writers."""

from __future__ import annotations

import hashlib
import json
import os
from typing import Iterable, Sequence

import numpy as np


class PipelineError(Exception):
    """Domain error; the CLI maps it to exit code 1."""


class ConfigError(PipelineError):
    """Bad or unknown configuration; the CLI maps it to exit code 2."""


def keyed_rng(*parts) -> np.random.Generator:
    """Counter-based (Philox) generator derived from a tuple of key parts.

    The key is the SHA-256 of the '/'-joined string forms of ``parts``, so
    the stream is a pure function of the parts and is stable across
    platforms, processes, and thread schedules.
    """
    key = "/".join(str(p) for p in parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    words = np.frombuffer(digest[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=words))


def fmt_float(x) -> str:
    """Shortest round-trip decimal form; '.' decimal point always."""
    return repr(float(x))


def write_json(path: str, obj) -> None:
    """Write JSON with sorted keys, 2-space indent, LF endings."""
    text = json.dumps(obj, sort_keys=True, indent=2, allow_nan=False)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
        fh.write("\n")


def read_json(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """CSV with ',' separator, '.' decimal, LF endings, header always present."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header))
        fh.write("\n")
        for row in rows:
            cells = []
            for cell in row:
                if isinstance(cell, (float, np.floating)):
                    cells.append(fmt_float(cell))
                else:
                    cells.append(str(cell))
            fh.write(",".join(cells))
            fh.write("\n")


def read_csv(path: str) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip() != ""]
    if not lines:
        raise PipelineError(f"empty CSV: {path}")
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    return header, rows


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def json_sanitize(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats."""
    if isinstance(obj, dict):
        return {str(k): json_sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [json_sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else None
    return obj
