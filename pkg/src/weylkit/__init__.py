"""weylkit: m-functions, Green kernels and spectral measures for
half-line Schrodinger operators with Hermitian matrix potentials."""

from .errors import (
    ConfigError,
    DegenerateCombination,
    DimError,
    DivergentLinearTerm,
    GridMismatch,
    InvalidHermitian,
    NearSingularCap,
    NonDecayingTrail,
    NonHermitianSample,
    NonMonotoneGrid,
    NotConverged,
    OutOfDomain,
    ParseError,
    RealSpectralParameter,
    RegimeNotSatisfied,
    SingularDenominator,
    ToleranceNotMet,
    UnsupportedSupport,
    WeylkitError,
    WindowTooNarrow,
)
from .linalg import (
    BlockOperator2x2,
    BoundaryOperator,
    HermitianMatrix,
    boundary_combination,
    cayley_transform,
    hermitian_calculus,
    hermitian_relation_residual,
    imag_part,
    principal_sqrt,
    real_part,
)
from .potential import (
    PotentialModel,
    evaluate_potential,
    load_potential,
    save_potential,
    validate_potential,
)
from .ivp import (
    IntegratorConfig,
    SolutionPath,
    green_formula_residual,
    integral_equation_residual,
    ivp_lower_bound_check,
    picard_bound_constant,
    picard_iterates,
    solve_operator_ivp,
    solve_vector_ivp,
    variation_of_constants,
    wronskian,
)
from .weyl import (
    FundamentalSystem,
    TruncationSchedule,
    WeylSample,
    fundamental_system,
    herglotz_residual,
    identity_suite,
    lft_transform,
    m_function,
    m_truncated,
    reflection_residual,
    weyl_solution,
)
from .green import (
    GreenEvaluator,
    apply_resolvent,
    green_kernel,
    m_from_green_boundary,
    resolvent_consistency,
)
from .herglotz import (
    HerglotzSampler,
    MeasureApprox,
    NevanlinnaData,
    hilbert_boundary_value,
    kernel_invariance,
    measure_table,
    nevanlinna_constants,
    nevanlinna_data,
    point_mass,
    reconstruct,
    sampler_from_m_function,
    sampler_from_spec,
    stieltjes_inversion,
)

__version__ = "0.1.0"
