"""Fundamental systems, Wronskian identities, and the m-function.

theta/phi are the operator solutions of tau Y = z Y normalized at the left
endpoint a by cos/sin of the boundary operator.  The m-function is the
limit of Dirichlet-capped truncations M_b = -phi(z,b)^{-1} theta(z,b);
convergence is certified by successive-difference decay over a truncation
schedule, and failure is a first-class outcome (NotConverged), never a
silent success.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    NearSingularCap,
    NotConverged,
    RealSpectralParameter,
    SingularDenominator,
)
from .ivp import (
    IntegratorConfig,
    SolutionPath,
    _CellPropagator,
    propagate_pair,
    solve_operator_ivp,
)
from .linalg import BoundaryOperator, imag_part
from .potential import PotentialModel

__all__ = [
    "FundamentalSystem",
    "TruncationSchedule",
    "WeylSample",
    "fundamental_system",
    "identity_suite",
    "IdentityReport",
    "m_truncated",
    "m_function",
    "weyl_solution",
    "column_tail_norms",
    "reflection_residual",
    "lft_transform",
    "herglotz_residual",
]

CAP_COND_LIMIT = 1e12
HERGLOTZ_SLACK = 1e-8


@dataclass(frozen=True)
class FundamentalSystem:
    """Operator solutions theta, phi at z plus their companions at conj(z).

    Initial data at a: theta(a) = phi'(a) = cos(alpha),
    theta'(a) = -phi(a) = sin(alpha).
    """

    z: complex
    bc: BoundaryOperator
    theta: SolutionPath
    phi: SolutionPath
    theta_conj: SolutionPath
    phi_conj: SolutionPath

    @property
    def grid(self) -> np.ndarray:
        return self.theta.grid

    @property
    def dim(self) -> int:
        return self.bc.dim

    def states_at(self, x: float, conjugate: bool = False):
        """(theta, phi, theta', phi') at x, at z or at conj(z)."""
        th = self.theta_conj if conjugate else self.theta
        ph = self.phi_conj if conjugate else self.phi
        tv, td = th.state_at(x)
        pv, pd = ph.state_at(x)
        return tv, pv, td, pd

    def initial_condition_residual(self) -> float:
        a = float(self.grid[0])
        res = 0.0
        for fs_z in (False, True):
            tv, pv, td, pd = self.states_at(a, conjugate=fs_z)
            res = max(
                res,
                float(np.linalg.norm(tv - self.bc.cos_alpha)),
                float(np.linalg.norm(pd - self.bc.cos_alpha)),
                float(np.linalg.norm(td - self.bc.sin_alpha)),
                float(np.linalg.norm(pv + self.bc.sin_alpha)),
            )
        return res


def fundamental_system(V: PotentialModel, bc: BoundaryOperator, z: complex,
                       grid, cfg: Optional[IntegratorConfig] = None) -> FundamentalSystem:
    """Solve the four operator IVPs defining the fundamental system at z and conj(z)."""
    cfg = cfg or IntegratorConfig()
    grid = np.asarray(grid, dtype=float)
    a = float(grid[0])
    cos_a, sin_a = bc.cos_alpha, bc.sin_alpha
    theta = solve_operator_ivp(V, z, a, cos_a, sin_a, grid=grid, cfg=cfg)
    phi = solve_operator_ivp(V, z, a, -sin_a, cos_a, grid=grid, cfg=cfg)
    zc = np.conj(z)
    theta_conj = solve_operator_ivp(V, zc, a, cos_a, sin_a, grid=grid, cfg=cfg)
    phi_conj = solve_operator_ivp(V, zc, a, -sin_a, cos_a, grid=grid, cfg=cfg)
    return FundamentalSystem(
        z=complex(z), bc=bc, theta=theta, phi=phi,
        theta_conj=theta_conj, phi_conj=phi_conj,
    )


IDENTITY_NAMES = (
    "adj-theta-theta",
    "adj-phi-phi",
    "adj-phi-theta",
    "adj-theta-phi",
    "right-phi-theta",
    "right-dphi-dtheta",
    "right-dphi-theta",
    "right-theta-dphi",
)


@dataclass(frozen=True)
class IdentityReport:
    names: tuple
    residuals: np.ndarray  # (8,) max over probes per identity

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals))

    def __str__(self):
        lines = [f"{n}: {r:.3e}" for n, r in zip(self.names, self.residuals)]
        lines.append(f"max: {self.max_residual:.3e}")
        return "\n".join(lines)


def identity_suite(fs: FundamentalSystem, probe_xs: Sequence[float]) -> IdentityReport:
    """Residuals of the eight constancy-of-Wronskian identities at the probes.

    Four 'adjoint on the left' identities pair conj(z)-solutions' adjoints
    with z-solutions; four 'adjoint on the right' identities are their
    two-sided-inverse counterparts.  All eight vanish (or equal I) exactly
    for exact solutions.
    """
    eye = np.eye(fs.dim)
    worst = np.zeros(8)
    for x in probe_xs:
        th, ph, dth, dph = fs.states_at(x)
        thc, phc, dthc, dphc = fs.states_at(x, conjugate=True)
        h = lambda m: m.conj().T
        lhs = (
            h(dthc) @ th - h(thc) @ dth,
            h(dphc) @ ph - h(phc) @ dph,
            h(dphc) @ th - h(phc) @ dth - eye,
            h(thc) @ dph - h(dthc) @ ph - eye,
            ph @ h(thc) - th @ h(phc),
            dph @ h(dthc) - dth @ h(dphc),
            dph @ h(thc) - dth @ h(phc) - eye,
            th @ h(dphc) - ph @ h(dthc) - eye,
        )
        for i, m in enumerate(lhs):
            worst[i] = max(worst[i], float(np.linalg.norm(m, 2)))
    return IdentityReport(names=IDENTITY_NAMES, residuals=worst)


def _require_nonreal(z: complex):
    if complex(z).imag == 0.0:
        raise RealSpectralParameter(f"Im(z) must be nonzero, got z = {z}")


def _marching_segments(V: PotentialModel, z: complex, a: float, b: float,
                       linear_step: Optional[float]):
    """Split [a, b] at potential cells, then cap step lengths for stability.

    Per-segment growth is bounded by exp(|sqrt(V - z)| dx); capping the
    exponent keeps every renormalized marching step well conditioned.
    """
    from .potential import evaluate_potential, potential_cells

    out = []
    for lo, hi in potential_cells(V, a, b):
        vmid = evaluate_potential(V, 0.5 * (lo + hi))
        mu = np.linalg.eigvalsh(0.5 * (vmid + vmid.conj().T)) - z
        smax = float(np.max(np.abs(np.sqrt(mu.astype(complex)))))
        cap = 8.0 / max(smax, 1e-9)
        if linear_step is not None:
            cap = min(cap, linear_step)
        n = max(1, int(np.ceil((hi - lo) / cap)))
        cuts = np.linspace(lo, hi, n + 1)
        out.extend((cuts[i], cuts[i + 1]) for i in range(n))
    return out


def m_truncated(V: PotentialModel, bc: BoundaryOperator, z: complex, b: float,
                cfg: Optional[IntegratorConfig] = None) -> np.ndarray:
    """Dirichlet-capped truncation M_b = -phi(z,b)^{-1} theta(z,b).

    Computed by marching the family of solutions that vanish at the cap
    backward from b to a with per-step renormalization.  The march is
    equivalent to the phi-inverse formula but stays well conditioned when
    channels grow at different exponential rates; the Riccati flow toward
    the square-integrable family is contracting, so step round-off decays.
    For nonreal z the final boundary solve is invertible (the capped
    problem is self-adjoint, hence free of nonreal eigenvalues).
    """
    _require_nonreal(z)
    a = V.a
    if b <= a:
        raise ValueError(f"cap b = {b} must exceed a = {a}")
    cfg = cfg or IntegratorConfig()
    d = bc.dim
    linear_step = None if V.interpolation == "piecewise-constant" else cfg.max_step
    segments = _marching_segments(V, z, a, b, linear_step)
    prop = _CellPropagator(V, z)
    y = np.zeros((d, d), dtype=complex)
    dy = np.eye(d, dtype=complex)
    for lo, hi in reversed(segments):
        y, dy = prop.step(lo, hi, y, dy, direction=-1)
        # renormalize the family basis so values stay O(1)
        cond = float(np.linalg.cond(y))
        if not np.isfinite(cond) or cond > CAP_COND_LIMIT:
            raise NearSingularCap(cond)
        dy = np.linalg.solve(y.T, dy.T).T
        y = np.eye(d, dtype=complex)
    f = bc.cos_alpha @ y + bc.sin_alpha @ dy
    g = -bc.sin_alpha @ y + bc.cos_alpha @ dy
    cond = float(np.linalg.cond(f))
    if not np.isfinite(cond) or cond > CAP_COND_LIMIT:
        raise NearSingularCap(cond)
    return np.linalg.solve(f.T, g.T).T


@dataclass(frozen=True)
class TruncationSchedule:
    """Increasing truncation points with the certificate tolerance."""

    b_values: np.ndarray
    m_tol: float = 1e-8

    def __post_init__(self):
        bs = np.asarray(self.b_values, dtype=float)
        if bs.size < 2:
            raise ValueError("schedule needs at least 2 truncation points")
        if not np.all(np.diff(bs) > 0):
            raise ValueError("truncation points must be increasing")
        bs.setflags(write=False)
        object.__setattr__(self, "b_values", bs)

    @classmethod
    def geometric(cls, b_first: float, b_last: float, count: int = 6,
                  m_tol: float = 1e-8) -> "TruncationSchedule":
        return cls(np.geomspace(b_first, b_last, count), m_tol=m_tol)

    @classmethod
    def auto(cls, V: PotentialModel, z: complex,
             m_tol: float = 1e-8) -> "TruncationSchedule":
        """Geometric schedule sized from the truncation-decay heuristic.

        The cap error shrinks like exp(-2 Im sqrt(z - v) b); the slowest
        channel sets the final truncation point.
        """
        from .linalg import principal_sqrt

        vmax = max(
            (float(np.linalg.eigvalsh(v)[-1]) for v in V.values), default=0.0
        )
        kappa = principal_sqrt(complex(z) - vmax).imag
        if kappa <= 0:
            raise RealSpectralParameter("auto schedule needs Im(z) != 0")
        b_needed = np.log(10.0 / m_tol) / (2.0 * kappa)
        b_last = max(2.0 * (V.b_max - V.a), 1.5 * b_needed, V.a + 1.0)
        b_first = max((V.b_max - V.a) * 1.01, b_last / 64.0, 1e-3)
        count = max(3, int(np.ceil(np.log2(b_last / b_first))) + 1)
        return cls(np.geomspace(b_first, b_last, count), m_tol=m_tol)


@dataclass(frozen=True)
class WeylSample:
    """m(z) with its truncation trail; the certificate of convergence."""

    z: complex
    m: np.ndarray
    truncations_used: list = field(default_factory=list)  # [(b, |delta|)]
    converged: bool = False

    @property
    def final_delta(self) -> float:
        return self.truncations_used[-1][1] if self.truncations_used else float("inf")

    def herglotz_floor(self) -> float:
        return float(np.linalg.eigvalsh(imag_part(self.m))[0])


def m_function(V: PotentialModel, bc: BoundaryOperator, z: complex,
               sched: TruncationSchedule, cfg: Optional[IntegratorConfig] = None,
               strict: bool = True) -> WeylSample:
    """m(z) as the certified limit of Dirichlet-capped truncations.

    Walks the schedule until two successive truncations differ by at most
    m_tol.  If the schedule is exhausted first, raises NotConverged (or,
    with strict=False, returns the unconverged sample for inspection).
    """
    _require_nonreal(z)
    if np.any(sched.b_values <= V.a):
        raise ValueError("all truncation points must exceed a")
    trail = []
    prev = None
    m = None
    for b in sched.b_values:
        m = m_truncated(V, bc, z, float(b), cfg=cfg)
        delta = float("inf") if prev is None else float(np.linalg.norm(m - prev, 2))
        trail.append((float(b), delta))
        if prev is not None and delta <= sched.m_tol:
            sample = WeylSample(z=complex(z), m=m, truncations_used=trail, converged=True)
            if complex(z).imag > 0 and sample.herglotz_floor() < -HERGLOTZ_SLACK:
                raise NotConverged(
                    sample,
                    f"converged sample violates the Herglotz floor "
                    f"({sample.herglotz_floor():.3e})",
                )
            return sample
        prev = m
    sample = WeylSample(z=complex(z), m=m, truncations_used=trail, converged=False)
    if strict:
        raise NotConverged(sample)
    return sample


def weyl_solution(fs: FundamentalSystem, m: np.ndarray) -> SolutionPath:
    """psi(z, x) = theta(z, x) + phi(z, x) m, the square-integrable family."""
    m = np.asarray(m, dtype=complex)
    vals = fs.theta.values + np.einsum("nij,jk->nik", fs.phi.values, m)
    ders = fs.theta.derivatives + np.einsum("nij,jk->nik", fs.phi.derivatives, m)
    return SolutionPath(grid=fs.grid, values=vals, derivatives=ders, z=fs.z, x0=fs.theta.x0)


def column_tail_norms(path: SolutionPath) -> np.ndarray:
    """Per-column tail integrals T[k, j] = int_{x_k}^{end} |Y(x) e_j|^2 dx.

    Nonincreasing in k by construction; their decay rate is the
    square-integrability monitor for Weyl solutions.
    """
    sq = np.sum(np.abs(path.values) ** 2, axis=1)  # (n, d) column norms squared
    dx = np.diff(path.grid)
    seg = 0.5 * (sq[1:] + sq[:-1]) * dx[:, None]
    tails = np.zeros_like(sq)
    tails[:-1] = np.cumsum(seg[::-1], axis=0)[::-1]
    return tails


def reflection_residual(V: PotentialModel, bc: BoundaryOperator, z: complex,
                        sched: TruncationSchedule,
                        cfg: Optional[IntegratorConfig] = None) -> float:
    """|m(z) - m(conj(z))*| with both sides computed independently."""
    _require_nonreal(z)
    mz = m_function(V, bc, z, sched, cfg=cfg).m
    mzc = m_function(V, bc, np.conj(complex(z)), sched, cfg=cfg).m
    return float(np.linalg.norm(mz - mzc.conj().T, 2))


def lft_transform(m_alpha: np.ndarray, alpha: BoundaryOperator,
                  beta: BoundaryOperator) -> np.ndarray:
    """Map m for boundary operator alpha to m for beta.

    m_beta = (C + D m_alpha)(A + B m_alpha)^{-1} with the blocks of the
    composed boundary rotation
    [[A, B], [C, D]] = R(beta) R(-alpha).
    """
    m = np.asarray(m_alpha, dtype=complex)
    ca, sa = alpha.cos_alpha, alpha.sin_alpha
    cb, sb = beta.cos_alpha, beta.sin_alpha
    a = cb @ ca + sb @ sa
    b = -cb @ sa + sb @ ca
    c = -sb @ ca + cb @ sa
    d = sb @ sa + cb @ ca
    den = a + b @ m
    cond = float(np.linalg.cond(den))
    if not np.isfinite(cond) or cond > CAP_COND_LIMIT:
        raise SingularDenominator(cond)
    num = c + d @ m
    return np.linalg.solve(den.T, num.T).T


def herglotz_residual(m) -> float:
    """Smallest eigenvalue of Im(m) = (m - m*) / 2i.

    Nonnegative (within slack) for Herglotz values; the caller compares
    against its tolerance.
    """
    return float(np.linalg.eigvalsh(imag_part(m))[0])
