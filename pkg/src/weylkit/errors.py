"""Exception hierarchy for weylkit.

Every failure mode that callers are expected to handle gets its own class;
the CLI maps each class to a stable exit code.
"""


class WeylkitError(Exception):
    """Base class for all weylkit errors."""


class InvalidHermitian(WeylkitError):
    """A matrix required to be Hermitian failed the Hermiticity check."""

    def __init__(self, residual, tolerance, msg=None):
        self.residual = float(residual)
        self.tolerance = float(tolerance)
        super().__init__(
            msg or f"Hermiticity residual {self.residual:.3e} exceeds "
            f"tolerance {self.tolerance:.3e}"
        )


class DimError(WeylkitError):
    """Operands have incompatible dimensions."""


class DegenerateCombination(WeylkitError):
    """Both coefficients of a sin/cos boundary combination vanish."""


class ParseError(WeylkitError):
    """Malformed input file."""


class NonHermitianSample(WeylkitError):
    """A potential sample is not Hermitian."""

    def __init__(self, index, residual):
        self.index = int(index)
        self.residual = float(residual)
        super().__init__(
            f"potential sample {self.index} is not Hermitian "
            f"(residual {self.residual:.3e})"
        )


class NonMonotoneGrid(WeylkitError):
    """Grid values are not strictly increasing."""


class OutOfDomain(WeylkitError):
    """Evaluation point lies outside the model's domain."""

    def __init__(self, x, lo=None, hi=None):
        self.x = float(x)
        rng = "" if lo is None else f" (domain [{lo}, {hi}])"
        super().__init__(f"x = {self.x} outside domain{rng}")


class ToleranceNotMet(WeylkitError):
    """An iterative solve exhausted its budget before reaching tolerance."""


class GridMismatch(WeylkitError):
    """Two solution paths do not share the required grid."""


class RegimeNotSatisfied(WeylkitError):
    """The interval is too long for the certified lower-bound constant."""


class RealSpectralParameter(WeylkitError):
    """An operation requiring Im(z) != 0 received a real z."""


class NearSingularCap(WeylkitError):
    """The truncation cap matrix is numerically singular."""

    def __init__(self, cond):
        self.cond = float(cond)
        super().__init__(f"cap matrix condition number {self.cond:.3e} beyond limit")


class NotConverged(WeylkitError):
    """The truncation schedule did not certify convergence of the m-function.

    Carries the partial sample so callers can inspect the trail.
    """

    def __init__(self, sample=None, msg=None):
        self.sample = sample
        super().__init__(msg or "m-function truncations did not converge")


class SingularDenominator(WeylkitError):
    """The denominator of a linear fractional transform is singular."""

    def __init__(self, cond):
        self.cond = float(cond)
        super().__init__(f"denominator condition number {self.cond:.3e} beyond limit")


class DivergentLinearTerm(WeylkitError):
    """The trail for the Nevanlinna linear term shows no Cauchy decay."""


class NonDecayingTrail(WeylkitError):
    """An epsilon-extrapolation trail fails to settle."""


class WindowTooNarrow(WeylkitError):
    """The measure window misses too much of the total mass."""


class UnsupportedSupport(WeylkitError):
    """The inhomogeneity is not supported inside the quadrature grid."""


class ConfigError(WeylkitError):
    """Invalid run configuration."""
