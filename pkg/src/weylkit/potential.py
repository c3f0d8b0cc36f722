"""Hermitian matrix-valued potentials V(x) on [a, b_max] with an extension rule.

A potential is a grid of Hermitian samples plus an interpolation mode.
Piecewise-constant (the default) keeps each cell exactly solvable; linear
interpolates between nodes.  Beyond b_max the potential continues with
either zeros or the frozen last sample, so truncation points may exceed
the data range.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NonHermitianSample, NonMonotoneGrid, OutOfDomain, ParseError
from .io import load_json, matrix_from_pairs, matrix_to_pairs
from .linalg import ensure_complex_matrix, hermiticity_residual

INTERPOLATIONS = ("piecewise-constant", "linear")
EXTENSIONS = ("zero", "freeze")
ANALYTIC_TAGS = (None, "zero", "constant", "diagonal")

__all__ = ["PotentialModel", "load_potential", "save_potential",
           "evaluate_potential", "validate_potential", "ValidationReport"]


@dataclass(frozen=True)
class PotentialModel:
    """Gridded Hermitian potential with interpolation and extension rules.

    grid[0] is the regular left endpoint a; values[i] is the Hermitian
    sample at grid[i].  For piecewise-constant interpolation, values[i]
    rules the cell [grid[i], grid[i+1]).
    """

    dim: int
    grid: np.ndarray
    values: np.ndarray  # shape (n, d, d)
    interpolation: str = "piecewise-constant"
    extension: str = "zero"
    analytic_tag: Optional[str] = None

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 1 or grid.size < 1:
            raise ParseError("grid must be a non-empty 1-d array")
        if grid.size > 1 and not np.all(np.diff(grid) > 0):
            raise NonMonotoneGrid("grid is not strictly increasing")
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (grid.size, self.dim, self.dim):
            raise ParseError(
                f"values shape {values.shape} does not match "
                f"(n={grid.size}, d={self.dim})"
            )
        for i in range(grid.size):
            m = values[i]
            if not np.all(np.isfinite(m.view(float))):
                raise ParseError(f"value {i} has non-finite entries")
            res = hermiticity_residual(m)
            if res > 1e-10 * (np.linalg.norm(m) + 1e-30):
                raise NonHermitianSample(i, res)
        if self.interpolation not in INTERPOLATIONS:
            raise ParseError(f"unknown interpolation {self.interpolation!r}")
        if self.extension not in EXTENSIONS:
            raise ParseError(f"unknown extension {self.extension!r}")
        if self.analytic_tag not in ANALYTIC_TAGS:
            raise ParseError(f"unknown analytic_tag {self.analytic_tag!r}")
        # store symmetrized, immutable copies
        sym = 0.5 * (values + np.conj(np.transpose(values, (0, 2, 1))))
        grid.setflags(write=False)
        sym.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", sym)

    @property
    def a(self) -> float:
        return float(self.grid[0])

    @property
    def b_max(self) -> float:
        return float(self.grid[-1])

    @classmethod
    def zero(cls, dim: int, a: float = 0.0, b_max: float = 1.0) -> "PotentialModel":
        return cls(
            dim=dim,
            grid=np.array([a, b_max]),
            values=np.zeros((2, dim, dim)),
            analytic_tag="zero",
        )

    @classmethod
    def constant(cls, matrix, a: float = 0.0, b_max: float = 1.0,
                 extension: str = "freeze") -> "PotentialModel":
        m = ensure_complex_matrix(matrix)
        d = m.shape[0]
        diag = np.allclose(m, np.diag(np.diagonal(m)))
        return cls(
            dim=d,
            grid=np.array([a, b_max]),
            values=np.array([m, m]),
            extension=extension,
            analytic_tag="diagonal" if diag else "constant",
        )


def evaluate_potential(model: PotentialModel, x: float) -> np.ndarray:
    """V(x) as a Hermitian matrix; applies the extension rule for x > b_max."""
    x = float(x)
    if x < model.a:
        raise OutOfDomain(x, model.a, model.b_max)
    if x > model.b_max:
        if model.extension == "freeze":
            return model.values[-1]
        return np.zeros((model.dim, model.dim), dtype=complex)
    grid = model.grid
    if model.interpolation == "piecewise-constant":
        # left node of the containing cell [grid[i], grid[i+1])
        i = int(np.searchsorted(grid, x, side="right") - 1)
        i = min(max(i, 0), grid.size - 1)
        return model.values[i]
    i = int(np.searchsorted(grid, x, side="right") - 1)
    i = min(max(i, 0), grid.size - 2) if grid.size > 1 else 0
    if grid.size == 1:
        return model.values[0]
    x0, x1 = grid[i], grid[i + 1]
    t = 0.0 if x1 == x0 else (x - x0) / (x1 - x0)
    return (1.0 - t) * model.values[i] + t * model.values[i + 1]


def potential_cells(model: PotentialModel, lo: float, hi: float):
    """Break [lo, hi] at the potential's grid nodes.

    Yields (x_left, x_right) segments on which a piecewise-constant
    potential is exactly constant.
    """
    if hi < lo:
        raise OutOfDomain(hi, lo, None)
    cuts = [lo]
    for g in model.grid:
        if lo < g < hi:
            cuts.append(float(g))
    cuts.append(hi)
    for i in range(len(cuts) - 1):
        if cuts[i + 1] > cuts[i]:
            yield cuts[i], cuts[i + 1]


@dataclass(frozen=True)
class ValidationReport:
    max_hermiticity_residual: float
    per_node_residuals: np.ndarray
    norm_integral: float

    def __str__(self):
        return (
            f"max Hermiticity residual: {self.max_hermiticity_residual:.3e}\n"
            f"integral of |V| over [a, b_max]: {self.norm_integral:.12g}"
        )


def validate_potential(model: PotentialModel) -> ValidationReport:
    """Per-node Hermiticity residuals and a trapezoid estimate of int |V(x)|_2 dx."""
    residuals = np.array([hermiticity_residual(v) for v in model.values])
    norms = np.array([np.linalg.norm(v, 2) for v in model.values])
    if model.grid.size > 1:
        if model.interpolation == "piecewise-constant":
            widths = np.diff(model.grid)
            integral = float(np.sum(norms[:-1] * widths))
        else:
            integral = float(np.trapezoid(norms, model.grid))
    else:
        integral = 0.0
    return ValidationReport(
        max_hermiticity_residual=float(residuals.max()),
        per_node_residuals=residuals,
        norm_integral=integral,
    )


def load_potential(source) -> PotentialModel:
    """Read a potential from JSON (path, stream, or inline text).

    Expected document:
    { "dim": d, "a": a, "grid": [...], "values": [M0, ...],
      "interpolation": "piecewise-constant"|"linear",
      "extension": "zero"|"freeze" }
    with each Mi a row-major list of [re, im] pairs.
    """
    doc = load_json(source)
    if not isinstance(doc, dict):
        raise ParseError("potential document must be a JSON object")
    try:
        dim = int(doc["dim"])
        grid = np.asarray(doc["grid"], dtype=float)
    except KeyError as exc:
        raise ParseError(f"missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad field: {exc}") from None
    raw_values = doc.get("values")
    if raw_values is None or len(raw_values) != grid.size:
        raise ParseError("values must list one matrix per grid node")
    if grid.size > 1 and not np.all(np.diff(grid) > 0):
        raise NonMonotoneGrid("grid is not strictly increasing")
    if "a" in doc and abs(float(doc["a"]) - float(grid[0])) > 0:
        raise ParseError("field 'a' disagrees with grid[0]")
    values = np.empty((grid.size, dim, dim), dtype=complex)
    for i, pairs in enumerate(raw_values):
        m = matrix_from_pairs(pairs, dim, what=f"values[{i}]")
        res = hermiticity_residual(m)
        if res > 1e-10 * (np.linalg.norm(m) + 1e-30):
            raise NonHermitianSample(i, res)
        values[i] = m
    tag = doc.get("analytic_tag")
    if tag is None:
        tag = _infer_tag(values)
    return PotentialModel(
        dim=dim,
        grid=grid,
        values=values,
        interpolation=doc.get("interpolation", "piecewise-constant"),
        extension=doc.get("extension", "zero"),
        analytic_tag=tag,
    )


def _infer_tag(values: np.ndarray) -> Optional[str]:
    if np.all(values == 0):
        return "zero"
    if all(np.array_equal(values[0], v) for v in values[1:]):
        base = values[0]
        if np.array_equal(base, np.diag(np.diagonal(base))):
            return "diagonal"
        return "constant"
    return None


def potential_to_dict(model: PotentialModel) -> dict:
    doc = {
        "dim": model.dim,
        "a": model.a,
        "grid": [float(x) for x in model.grid],
        "values": [matrix_to_pairs(v) for v in model.values],
        "interpolation": model.interpolation,
        "extension": model.extension,
    }
    if model.analytic_tag is not None:
        doc["analytic_tag"] = model.analytic_tag
    return doc


def save_potential(model: PotentialModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(potential_to_dict(model), fh, indent=1)
        fh.write("\n")
