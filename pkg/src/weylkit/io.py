"""File formats: matrix JSON encoding and the CSV table writers.

Matrices travel as row-major lists of [re, im] pairs.  CSV output is fully
deterministic: fixed column order, repr-exact floats, no timestamps.
"""

from __future__ import annotations

import json
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError

__all__ = [
    "matrix_to_pairs",
    "matrix_from_pairs",
    "load_json",
    "write_csv",
    "format_float",
]


def matrix_to_pairs(m) -> list:
    """Row-major list of [re, im] pairs for a d x d complex matrix."""
    m = np.asarray(m, dtype=complex)
    return [[float(v.real), float(v.imag)] for v in m.reshape(-1)]


def matrix_from_pairs(pairs, dim: int, what: str = "matrix") -> np.ndarray:
    """Rebuild a d x d complex matrix from [re, im] pairs.

    Accepts either the flat row-major form (d*d pairs) or a nested
    list of d rows of d pairs.
    """
    try:
        arr = np.asarray(pairs, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{what}: entries are not numeric: {exc}") from None
    if arr.shape == (dim * dim, 2):
        flat = arr
    elif arr.shape == (dim, dim, 2):
        flat = arr.reshape(dim * dim, 2)
    else:
        raise ParseError(
            f"{what}: expected {dim * dim} [re, im] pairs, got shape {arr.shape}"
        )
    return (flat[:, 0] + 1j * flat[:, 1]).reshape(dim, dim)


def load_json(path_or_stream):
    """Parse JSON from a path, byte/str stream, or str/bytes content."""
    try:
        if hasattr(path_or_stream, "read"):
            return json.load(path_or_stream)
        if isinstance(path_or_stream, (bytes, str)) and not _looks_like_path(path_or_stream):
            return json.loads(path_or_stream)
        with open(path_or_stream, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}") from None
    except OSError as exc:
        raise ParseError(f"cannot read {path_or_stream!r}: {exc}") from None


def _looks_like_path(s) -> bool:
    if isinstance(s, bytes):
        return False
    stripped = s.lstrip()
    return not (stripped.startswith("{") or stripped.startswith("["))


def format_float(x: float) -> str:
    """Shortest round-trip decimal form; deterministic across runs."""
    return repr(float(x))


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write a CSV table with repr-exact floats and no quoting surprises."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = []
            for v in row:
                if isinstance(v, (float, np.floating)):
                    cells.append(format_float(float(v)))
                elif isinstance(v, (int, np.integer)):
                    cells.append(str(int(v)))
                else:
                    cells.append(str(v))
            fh.write(",".join(cells) + "\n")


def complex_columns(prefix: str, dim: int) -> list:
    """Column names Re/Im prefix_jk, row-major over a d x d matrix."""
    names = []
    for j in range(dim):
        for k in range(dim):
            names.append(f"Re({prefix}_{j}{k})")
            names.append(f"Im({prefix}_{j}{k})")
    return names


def complex_cells(m) -> list:
    """Interleaved Re/Im cells, row-major, matching complex_columns order."""
    m = np.asarray(m, dtype=complex).reshape(-1)
    cells = []
    for v in m:
        cells.append(float(v.real))
        cells.append(float(v.imag))
    return cells
