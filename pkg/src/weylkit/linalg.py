"""Dense complex linear algebra for boundary-value machinery.

Hermitian functional calculus through eigendecomposition, the principal
square root with nonnegative imaginary part, the boundary operator alpha
with its sine/cosine images, and the Cayley transform exp(2i*alpha).
All matrices are small (d <= 64) dense numpy arrays; everything here is a
pure function of its inputs.
"""

from __future__ import annotations

import cmath
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import DegenerateCombination, DimError, InvalidHermitian, ParseError
from .io import load_json, matrix_from_pairs, matrix_to_pairs

HERMITICITY_RTOL = 1e-10
RECONSTRUCTION_RTOL = 1e-12
MAX_DIM = 64

__all__ = [
    "HERMITICITY_RTOL",
    "HermitianMatrix",
    "BoundaryOperator",
    "BlockOperator2x2",
    "ensure_complex_matrix",
    "hermiticity_residual",
    "hermitian_calculus",
    "imag_part",
    "real_part",
    "principal_sqrt",
    "boundary_combination",
    "cayley_transform",
    "hermitian_relation_residual",
]


def ensure_complex_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a square, finite complex ndarray (d x d, 1 <= d <= 64)."""
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimError(f"{name} must be square, got shape {m.shape}")
    if not (1 <= m.shape[0] <= MAX_DIM):
        raise DimError(f"{name} dimension {m.shape[0]} outside [1, {MAX_DIM}]")
    if not np.all(np.isfinite(m.view(float))):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def hermiticity_residual(a) -> float:
    """Frobenius norm of A - A*."""
    m = np.asarray(a, dtype=complex)
    return float(np.linalg.norm(m - m.conj().T))


class HermitianMatrix:
    """A validated Hermitian matrix with a cached eigendecomposition.

    The constructor enforces ``|A - A*| <= rtol * |A|`` and symmetrizes the
    stored matrix so downstream numpy.linalg.eigh sees an exactly Hermitian
    input.  Eigenvalues are real, eigenvectors unitary.
    """

    def __init__(self, matrix, rtol: float = HERMITICITY_RTOL):
        m = ensure_complex_matrix(matrix)
        res = hermiticity_residual(m)
        tol = rtol * (np.linalg.norm(m) + 1e-30)
        if res > tol:
            raise InvalidHermitian(res, tol)
        self.matrix = 0.5 * (m + m.conj().T)
        self.matrix.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def _eig(self):
        w, u = np.linalg.eigh(self.matrix)
        return w, u

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._eig[0]

    @property
    def eigenvectors(self) -> np.ndarray:
        return self._eig[1]

    def reconstruction_residual(self) -> float:
        w, u = self._eig
        return float(np.linalg.norm((u * w) @ u.conj().T - self.matrix))

    def apply(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """f(A) = U diag(f(lambda)) U* for a real scalar function f."""
        w, u = self._eig
        return (u * f(w)) @ u.conj().T

    def __repr__(self):
        return f"HermitianMatrix(dim={self.dim})"


def _as_hermitian(a) -> HermitianMatrix:
    return a if isinstance(a, HermitianMatrix) else HermitianMatrix(a)


def hermitian_calculus(a, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Evaluate a real scalar function of a Hermitian matrix.

    Parameters
    ----------
    a : array_like or HermitianMatrix
        Hermitian input; validated against the relative Hermiticity tolerance.
    f : callable
        Vectorized real function applied to the eigenvalues.

    Returns
    -------
    numpy.ndarray
        U diag(f(lambda)) U*; Hermitian up to round-off.
    """
    return _as_hermitian(a).apply(f)


def imag_part(m) -> np.ndarray:
    """Operator imaginary part (M - M*) / 2i (a Hermitian matrix)."""
    m = np.asarray(m, dtype=complex)
    return (m - m.conj().T) / 2j


def real_part(m) -> np.ndarray:
    """Operator real part (M + M*) / 2."""
    m = np.asarray(m, dtype=complex)
    return 0.5 * (m + m.conj().T)


def principal_sqrt(z: complex) -> complex:
    """Square root with Im >= 0; nonnegative real root for real z >= 0.

    The branch cut runs along [0, inf); values on the positive real axis
    are the limits from the upper half-plane.
    """
    w = cmath.sqrt(z)
    if w.imag < 0.0:
        w = -w
    return w


@dataclass(frozen=True)
class BoundaryOperator:
    """Hermitian boundary parameter alpha with derived sin/cos images.

    Parametrizes the boundary condition sin(alpha) u'(a) + cos(alpha) u(a) = 0.
    sin_alpha and cos_alpha commute, square-sum to the identity, and have
    spectra inside [-1, 1]; all three facts follow from the shared
    eigendecomposition and are re-checked on construction.
    """

    alpha: HermitianMatrix
    sin_alpha: np.ndarray = field(init=False)
    cos_alpha: np.ndarray = field(init=False)

    def __post_init__(self):
        a = _as_hermitian(self.alpha)
        object.__setattr__(self, "alpha", a)
        s = a.apply(np.sin)
        c = a.apply(np.cos)
        s.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "sin_alpha", s)
        object.__setattr__(self, "cos_alpha", c)
        eye = np.eye(a.dim)
        if np.linalg.norm(s @ s + c @ c - eye) > 1e-12 * a.dim:
            raise InvalidHermitian(
                np.linalg.norm(s @ s + c @ c - eye), 1e-12 * a.dim,
                "sin^2 + cos^2 deviates from the identity",
            )

    @property
    def dim(self) -> int:
        return self.alpha.dim

    @classmethod
    def from_matrix(cls, alpha) -> "BoundaryOperator":
        return cls(_as_hermitian(alpha))

    @classmethod
    def dirichlet(cls, dim: int) -> "BoundaryOperator":
        """alpha = 0: boundary condition u(a) = 0."""
        return cls.from_matrix(np.zeros((dim, dim)))

    @classmethod
    def neumann(cls, dim: int) -> "BoundaryOperator":
        """alpha = (pi/2) I: boundary condition u'(a) = 0."""
        return cls.from_matrix(0.5 * np.pi * np.eye(dim))


def load_boundary_operator(source) -> BoundaryOperator:
    """Read alpha from JSON: { "dim": d, "alpha": [[re, im], ...] } row-major."""
    doc = load_json(source)
    if not isinstance(doc, dict):
        raise ParseError("boundary operator document must be a JSON object")
    try:
        dim = int(doc["dim"])
        alpha = matrix_from_pairs(doc["alpha"], dim, "alpha")
    except KeyError as exc:
        raise ParseError(f"missing field {exc}") from None
    return BoundaryOperator.from_matrix(alpha)


def save_boundary_operator(bc: BoundaryOperator, path) -> None:
    doc = {"dim": bc.dim, "alpha": matrix_to_pairs(bc.alpha.matrix)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def boundary_combination(c1: complex, c2: complex, bc: BoundaryOperator):
    """c1 sin(alpha) + c2 cos(alpha) together with an invertibility certificate.

    For c1/c2 nonreal the combination is invertible; the certificate reports
    the smallest singular value so callers can assert it.

    Returns
    -------
    (numpy.ndarray, float)
        The combination and its smallest singular value.
    """
    if c1 == 0 and c2 == 0:
        raise DegenerateCombination("c1 = c2 = 0")
    m = c1 * bc.sin_alpha + c2 * bc.cos_alpha
    smin = float(np.linalg.svd(m, compute_uv=False)[-1])
    return m, smin


def cayley_transform(bc: BoundaryOperator) -> np.ndarray:
    """Unitary U = exp(2i alpha) associated with the boundary relation.

    (U - I) f2 + i (U + I) f1 = 0 holds exactly when
    sin(alpha) f2 + cos(alpha) f1 = 0.
    """
    w = bc.alpha.eigenvalues
    u = bc.alpha.eigenvectors
    return (u * np.exp(2j * w)) @ u.conj().T


def hermitian_relation_residual(f1, f2, bc: BoundaryOperator) -> float:
    """Norm of sin(alpha) f2 + cos(alpha) f1; zero iff (f1, f2) lies in the relation."""
    f1 = np.asarray(f1, dtype=complex).reshape(-1)
    f2 = np.asarray(f2, dtype=complex).reshape(-1)
    if f1.shape != (bc.dim,) or f2.shape != (bc.dim,):
        raise DimError(
            f"expected vectors of dim {bc.dim}, got {f1.shape} and {f2.shape}"
        )
    return float(np.linalg.norm(bc.sin_alpha @ f2 + bc.cos_alpha @ f1))


@dataclass(frozen=True)
class BlockOperator2x2:
    """2x2 block matrix of d x d blocks, row order (top-left, top-right, ...).

    Used for the fundamental-system block [[theta, phi], [theta', phi']],
    whose inverse is assembled from the conjugate-parameter system.
    """

    a11: np.ndarray
    a12: np.ndarray
    a21: np.ndarray
    a22: np.ndarray

    def __post_init__(self):
        blocks = [ensure_complex_matrix(b) for b in (self.a11, self.a12, self.a21, self.a22)]
        dims = {b.shape[0] for b in blocks}
        if len(dims) != 1:
            raise DimError(f"blocks have mixed dimensions {sorted(dims)}")
        for name, b in zip(("a11", "a12", "a21", "a22"), blocks):
            object.__setattr__(self, name, b)

    @property
    def dim(self) -> int:
        return self.a11.shape[0]

    def full(self) -> np.ndarray:
        return np.block([[self.a11, self.a12], [self.a21, self.a22]])

    @classmethod
    def fundamental(cls, theta, phi, dtheta, dphi) -> "BlockOperator2x2":
        return cls(theta, phi, dtheta, dphi)

    def inverse_from_conjugate(self, conj: "BlockOperator2x2") -> np.ndarray:
        """Two-sided inverse built from the conjugate-z fundamental block.

        With self = [[theta(z), phi(z)], [theta'(z), phi'(z)]] and conj the
        block at zbar, the inverse is
        [[phi'(zbar)*, -phi(zbar)*], [-theta'(zbar)*, theta(zbar)*]].
        """
        h = lambda b: b.conj().T
        return np.block(
            [
                [h(conj.a22), -h(conj.a12)],
                [-h(conj.a21), h(conj.a11)],
            ]
        )
