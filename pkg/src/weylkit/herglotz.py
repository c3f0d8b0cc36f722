"""Operator Herglotz functions: Nevanlinna data, Stieltjes inversion,
point masses, kernel invariance, reconstruction, and boundary values.

A sampler wraps any analytic map z -> d x d matrix with PSD imaginary part
on the upper half-plane (an m-function or a synthetic model) and answers
lower half-plane queries by reflection M(z) = M(conj z)*.  The spectral
measure is recovered on intervals by the coupled-schedule Stieltjes
inversion and extrapolation in the regularization parameter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import subspace_angles
from scipy.special import wofz

from .errors import (
    DivergentLinearTerm,
    NonDecayingTrail,
    ParseError,
    RealSpectralParameter,
    WindowTooNarrow,
)
from .io import load_json, matrix_from_pairs
from .linalg import imag_part, principal_sqrt, real_part

__all__ = [
    "HerglotzSampler",
    "MeasureApprox",
    "NevanlinnaData",
    "KernelInvarianceReport",
    "sampler_from_spec",
    "sampler_from_m_function",
    "nevanlinna_constants",
    "stieltjes_inversion",
    "measure_table",
    "point_mass",
    "kernel_invariance",
    "reconstruct",
    "hilbert_boundary_value",
]

PSD_CLIP_TOL = 1e-6
HERGLOTZ_PROBE_SLACK = 1e-8


@dataclass
class HerglotzSampler:
    """z -> M(z) on the upper half-plane, reflected to the lower one.

    evaluator must accept a complex scalar; set vectorized=True when it
    also accepts 1-d arrays of z (synthetic models do).  Memoization keeps
    repeated probes cheap; the cache is the only shared state and is only
    ever appended to.
    """

    evaluator: Callable
    dim: int
    label: str = ""
    vectorized: bool = False
    _cache: dict = field(default_factory=dict, repr=False)

    def __call__(self, z: complex) -> np.ndarray:
        z = complex(z)
        if z.imag == 0.0:
            raise RealSpectralParameter("sampler is defined off the real axis")
        if z.imag < 0.0:
            return self(np.conj(z)).conj().T
        got = self._cache.get(z)
        if got is None:
            got = np.asarray(self.evaluator(z), dtype=complex).reshape(self.dim, self.dim)
            self._cache[z] = got
        return got

    def sample_many(self, zs) -> np.ndarray:
        zs = np.asarray(zs, dtype=complex).reshape(-1)
        if self.vectorized and np.all(zs.imag > 0):
            out = np.asarray(self.evaluator(zs), dtype=complex)
            return out.reshape(zs.size, self.dim, self.dim)
        return np.array([self(z) for z in zs])

    def herglotz_floor(self, z: complex) -> float:
        return float(np.linalg.eigvalsh(imag_part(self(z)))[0])

    def check(self, z_probes: Sequence[complex], slack: float = HERGLOTZ_PROBE_SLACK) -> float:
        """Worst Herglotz floor over the probes; also exercises reflection."""
        worst = np.inf
        for z in z_probes:
            worst = min(worst, self.herglotz_floor(z))
            lower = self(np.conj(complex(z)))
            if np.linalg.norm(lower - self(z).conj().T) > 1e-14 * (1 + np.linalg.norm(lower)):
                raise ParseError("reflection consistency violated")
        if worst < -slack:
            raise ParseError(f"sampler violates the Herglotz floor ({worst:.3e})")
        return float(worst)


# ---------------------------------------------------------------------------
# synthetic models and constructors


def _pole_model(lam0: float, mass: np.ndarray):
    def ev(z):
        z = np.asarray(z, dtype=complex)
        return np.multiply.outer(1.0 / (lam0 - z), mass) if z.ndim else mass / (lam0 - z)
    return ev


def _constant_model(value: np.ndarray):
    def ev(z):
        z = np.asarray(z, dtype=complex)
        if z.ndim:
            return np.broadcast_to(value, z.shape + value.shape).copy()
        return value
    return ev


def _linear_model(c: np.ndarray, d: np.ndarray):
    def ev(z):
        z = np.asarray(z, dtype=complex)
        if z.ndim:
            return c[None, :, :] + np.multiply.outer(z, d)
        return c + z * d
    return ev


def _free_model(dim: int, boundary: str):
    def ev(z):
        z = np.asarray(z, dtype=complex)
        scalars = np.vectorize(
            lambda w: 1j * principal_sqrt(w) if boundary == "dirichlet"
            else 1j / principal_sqrt(w)
        )(z)
        eye = np.eye(dim)
        if z.ndim:
            return np.multiply.outer(scalars, eye)
        return complex(scalars) * eye
    return ev


def _bump_model(center: float, width: float, mass: np.ndarray):
    """Absolutely continuous model with Gaussian density mass * rho(t).

    The Cauchy transform of a Gaussian is a Faddeeva function, exact
    arbitrarily close to the real axis.
    """

    def ev(z):
        z = np.asarray(z, dtype=complex)
        zeta = (z - center) / (width * np.sqrt(2.0))
        cauchy = 1j * np.sqrt(np.pi) * wofz(zeta) / (width * np.sqrt(2.0))
        if z.ndim:
            return np.multiply.outer(cauchy, mass)
        return complex(cauchy) * mass

    return ev


def bump_density(center: float, width: float, mass: np.ndarray, ts: np.ndarray) -> np.ndarray:
    rho = np.exp(-0.5 * ((ts - center) / width) ** 2) / (width * np.sqrt(2.0 * np.pi))
    return np.multiply.outer(rho, mass)


def sampler_from_spec(doc, dim: Optional[int] = None) -> HerglotzSampler:
    """Build a synthetic sampler from its JSON description.

    { "type": "pole", "lambda0": l, "dim": d, "mass": pairs }
    { "type": "constant", "dim": d, "value": pairs }
    { "type": "linear", "dim": d, "c": pairs, "d": pairs }
    { "type": "free", "dim": d, "boundary": "dirichlet"|"neumann" }
    { "type": "bump", "dim": d, "center": c, "width": w, "mass": pairs }
    """
    if not isinstance(doc, dict):
        doc = load_json(doc)
    kind = doc.get("type")
    d = int(doc.get("dim", dim or 1))
    if kind == "pole":
        mass = matrix_from_pairs(doc["mass"], d, "mass")
        ev = _pole_model(float(doc["lambda0"]), mass)
    elif kind == "constant":
        ev = _constant_model(matrix_from_pairs(doc["value"], d, "value"))
    elif kind == "linear":
        ev = _linear_model(
            matrix_from_pairs(doc["c"], d, "c"), matrix_from_pairs(doc["d"], d, "d")
        )
    elif kind == "free":
        ev = _free_model(d, doc.get("boundary", "dirichlet"))
    elif kind == "bump":
        mass = matrix_from_pairs(doc["mass"], d, "mass")
        ev = _bump_model(float(doc["center"]), float(doc["width"]), mass)
    else:
        raise ParseError(f"unknown synthetic model type {kind!r}")
    return HerglotzSampler(evaluator=ev, dim=d, label=str(kind), vectorized=True)


def sampler_from_m_function(V, bc, sched, cfg=None) -> HerglotzSampler:
    """Sampler backed by the truncation-certified m-function."""
    from .weyl import m_function  # local import avoids a cycle at module load

    def ev(z):
        return m_function(V, bc, z, sched, cfg=cfg).m

    return HerglotzSampler(evaluator=ev, dim=bc.dim, label="m-function", vectorized=False)


# ---------------------------------------------------------------------------
# extrapolation helpers


def _neville(xs: Sequence[float], tables: Sequence[np.ndarray]) -> np.ndarray:
    """Polynomial extrapolation of matrix samples to x = 0."""
    t = [np.array(m, dtype=complex) for m in tables]
    xs = [float(x) for x in xs]
    n = len(t)
    for level in range(1, n):
        for i in range(n - level):
            t[i] = (xs[i] * t[i + 1] - xs[i + level] * t[i]) / (xs[i] - xs[i + level])
    return t[0]


def _check_decay(norms: Sequence[float], what: str, slack: float = 2.0):
    """Successive differences must not grow; tiny trails pass unconditionally."""
    for a, b in zip(norms, norms[1:]):
        if b > slack * max(a, 1e-13):
            raise NonDecayingTrail(f"{what}: trail grows ({a:.3e} -> {b:.3e})")


def _clip_psd(m: np.ndarray, tol: float, what: str) -> np.ndarray:
    w, u = np.linalg.eigh(real_part(m))
    if w[0] < -tol:
        raise NonDecayingTrail(f"{what}: negative mass {w[0]:.3e} beyond repair tolerance")
    return (u * np.clip(w, 0.0, None)) @ u.conj().T


# ---------------------------------------------------------------------------
# contour evaluation of the inversion integrals
#
# int_{a}^{b} Im M(s + i eps) ds equals the operator imaginary part of the
# contour integral of M from a + i eps to b + i eps; lifting the contour to
# height H (verticals at a and b, horizontal at H) leaves the value
# unchanged by analyticity but keeps the integrand smooth even when the
# measure has atoms just below the path.


def _interval_masses_contour(M: HerglotzSampler, edges: np.ndarray, eps: float,
                             height: float, n_vert: int = 65) -> np.ndarray:
    """Per-interval (1/pi) int Im M(s + i eps) ds over [edges_k, edges_{k+1}]."""
    n = edges.size - 1
    # vertical legs at every edge, geometric nodes t = eps e^s up to height
    s = np.linspace(0.0, np.log(height / eps), n_vert)
    ts = eps * np.exp(s)
    zs = (edges[:, None] + 1j * ts[None, :]).reshape(-1)
    vals = M.sample_many(zs).reshape(edges.size, n_vert, M.dim, M.dim)
    verts = 1j * simpson(vals * ts[None, :, None, None], x=s, axis=1)
    # horizontal sweep at height H: Simpson with midpoints per interval
    nodes = np.linspace(edges[0], edges[-1], 2 * n + 1)
    hvals = M.sample_many(nodes + 1j * height)
    width = (edges[-1] - edges[0]) / n
    horiz = (width / 6.0) * (hvals[0:-1:2] + 4.0 * hvals[1::2] + hvals[2::2])
    total = verts[:-1] + horiz - verts[1:]
    im = (total - np.conj(np.transpose(total, (0, 2, 1)))) / 2j
    return im / np.pi


# ---------------------------------------------------------------------------
# the Appendix operations


@dataclass(frozen=True)
class MeasureApprox:
    """Interval masses (lambda1, lambda2] -> PSD matrix, with the epsilon trail."""

    intervals: np.ndarray  # (N, 2)
    masses: np.ndarray  # (N, d, d)
    epsilon_trail: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.masses.shape[1]

    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.intervals[:, 0] + self.intervals[:, 1])

    def total(self) -> np.ndarray:
        return self.masses.sum(axis=0)


@dataclass(frozen=True)
class NevanlinnaData:
    """Constants C (Hermitian), D (PSD) and the windowed measure."""

    c: np.ndarray
    d: np.ndarray
    measure: Optional[MeasureApprox] = None
    budget: Optional[np.ndarray] = None  # Im M(i), the total-mass target


def nevanlinna_constants(M: HerglotzSampler, eta_schedule: Sequence[float]) -> NevanlinnaData:
    """C = Re M(i) exactly; D extrapolated from M(i eta)/(i eta).

    eta_schedule must increase; the trail of slopes has to be Cauchy or the
    linear term is declared divergent.  The limit is extracted by fitting
    the trail to D + a (1/eta)^{1/2} + b (1/eta): the square-root term
    carries the tail of an unbounded absolutely continuous measure, the
    linear one a bounded measure plus the constant.
    """
    etas = np.asarray(eta_schedule, dtype=float)
    if etas.size < 3 or not np.all(np.diff(etas) > 0):
        raise ValueError("eta_schedule must be increasing with >= 3 entries")
    c = real_part(M(1j))
    slopes = np.array([M(1j * eta) / (1j * eta) for eta in etas])
    diffs = [float(np.linalg.norm(b - a)) for a, b in zip(slopes, slopes[1:])]
    try:
        _check_decay(diffs, "linear-term slope")
    except NonDecayingTrail as exc:
        raise DivergentLinearTerm(str(exc)) from None
    x = 1.0 / etas
    basis = np.column_stack([np.ones_like(x), np.sqrt(x), x])
    coef, *_ = np.linalg.lstsq(basis, slopes.reshape(etas.size, -1), rcond=None)
    d = coef[0].reshape(M.dim, M.dim)
    d = _clip_psd(d, PSD_CLIP_TOL, "linear term")
    return NevanlinnaData(c=c, d=d)


def stieltjes_inversion(M: HerglotzSampler, lam1: float, lam2: float,
                        eps_schedule: Sequence[float], n_quad: int = 257,
                        n_vert: int = 65) -> np.ndarray:
    """Mass of (lam1, lam2] by the coupled-shift inversion integral.

    For each eps, integrates Im M(lambda + i eps)/pi over
    [lam1 + eps, lam2 + eps] (the shift delta is coupled to eps) along an
    elevated contour, then extrapolates eps -> 0 over the schedule.
    """
    if not lam1 < lam2:
        raise ValueError("need lam1 < lam2")
    eps = np.asarray(eps_schedule, dtype=float)
    if eps.size < 2 or not np.all(np.diff(eps) < 0):
        raise ValueError("eps_schedule must be decreasing with >= 2 entries")
    span = lam2 - lam1
    n_sub = max(2, n_quad - 1)
    height = max(0.5 * span, 4.0 * float(eps[0]))
    estimates = []
    for e in eps:
        edges = np.linspace(lam1 + e, lam2 + e, n_sub + 1)
        per_interval = _interval_masses_contour(M, edges, float(e), height, n_vert)
        estimates.append(per_interval.sum(axis=0))
    diffs = [float(np.linalg.norm(b - a)) for a, b in zip(estimates, estimates[1:])]
    _check_decay(diffs, "inversion")
    mass = _neville(eps, estimates)
    tol = PSD_CLIP_TOL * (1.0 + float(np.linalg.norm(estimates[-1])))
    return _clip_psd(mass, tol, "interval mass")


def measure_table(M: HerglotzSampler, lo: float, hi: float, n_intervals: int,
                  eps_schedule: Sequence[float], n_vert: int = 65) -> MeasureApprox:
    """Uniform partition of (lo, hi] with per-interval masses.

    One vectorized contour sweep per eps (shared vertical legs between
    neighbors), extrapolated in eps; keeps large tables affordable.
    """
    eps = np.asarray(eps_schedule, dtype=float)
    if eps.size < 1:
        raise ValueError("eps_schedule must not be empty")
    edges = np.linspace(lo, hi, n_intervals + 1)
    width = (hi - lo) / n_intervals
    height = max(2.0 * width, 4.0 * float(np.max(eps)))
    per_eps = [
        _interval_masses_contour(M, edges + e, float(e), height, n_vert) for e in eps
    ]
    if eps.size == 1:
        masses = per_eps[0]
        movement = np.zeros(n_intervals)
    else:
        masses = _neville(eps, per_eps)
        movement = np.linalg.norm(per_eps[-1] - per_eps[0], axis=(1, 2))
    # negative dips are bounded by the extrapolation's own movement
    scale = max(float(np.max(np.abs(per_eps[-1]))), 1.0)
    masses = np.array([
        _clip_psd(mk, PSD_CLIP_TOL * scale + mv, "interval mass")
        for mk, mv in zip(masses, movement)
    ])
    trail = [(float(e), float(np.linalg.norm(t.sum(axis=0)))) for e, t in zip(eps, per_eps)]
    return MeasureApprox(
        intervals=np.column_stack([edges[:-1], edges[1:]]),
        masses=masses,
        epsilon_trail=trail,
    )


def nevanlinna_data(M: HerglotzSampler, lo: float, hi: float, n_intervals: int,
                    eps_schedule: Sequence[float],
                    eta_schedule: Sequence[float] = (8.0, 16.0, 32.0, 64.0, 128.0),
                    n_vert: int = 65) -> NevanlinnaData:
    """Assemble constants, windowed measure and the total-mass budget."""
    base = nevanlinna_constants(M, eta_schedule)
    table = measure_table(M, lo, hi, n_intervals, eps_schedule, n_vert=n_vert)
    return NevanlinnaData(c=base.c, d=base.d, measure=table, budget=imag_part(M(1j)))


def point_mass(M: HerglotzSampler, lam0: float, eps_schedule: Sequence[float]) -> np.ndarray:
    """Mass of the single point lam0: the limit of eps Im M(lam0 + i eps).

    The companion limit eps Re M -> 0 is verified on the same trail.
    """
    eps = np.asarray(eps_schedule, dtype=float)
    if eps.size < 2 or not np.all(np.diff(eps) < 0):
        raise ValueError("eps_schedule must be decreasing with >= 2 entries")
    ims, res = [], []
    for e in eps:
        v = M(lam0 + 1j * e)
        ims.append(e * imag_part(v))
        res.append(e * real_part(v))
    diffs = [float(np.linalg.norm(b - a)) for a, b in zip(ims, ims[1:])]
    _check_decay(diffs, "point mass")
    limit = _neville(eps, ims)
    re_limit = _neville(eps, res)
    scale = max(float(np.linalg.norm(m)) for m in res + ims) + 1e-30
    if float(np.linalg.norm(re_limit)) > max(1e-7, 1e-4 * scale):
        raise NonDecayingTrail(
            f"real-part trail does not vanish ({np.linalg.norm(re_limit):.3e})"
        )
    return _clip_psd(limit, PSD_CLIP_TOL, "point mass")


@dataclass(frozen=True)
class KernelInvarianceReport:
    z_probes: tuple
    kernel_dims: tuple
    max_principal_angle: float
    min_positive_eigs: tuple

    @property
    def consistent(self) -> bool:
        return len(set(self.kernel_dims)) == 1 and self.max_principal_angle < 1e-6


def kernel_invariance(M: HerglotzSampler, z_probes: Sequence[complex],
                      kernel_tol: float = 1e-9) -> KernelInvarianceReport:
    """Numerical kernel of Im M(z) at each probe and its z-independence.

    Compares kernel subspaces pairwise through principal angles; on the
    complement the imaginary part must be positive definite.
    """
    probes = [complex(z) for z in z_probes]
    if len(probes) < 2:
        raise ValueError("need at least 2 probes")
    bases, dims, minpos = [], [], []
    for z in probes:
        if z.imag <= 0:
            raise RealSpectralParameter("probes must lie in the upper half-plane")
        w, u = np.linalg.eigh(imag_part(M(z)))
        thresh = kernel_tol * max(1.0, float(w[-1]))
        ker = w < thresh
        bases.append(u[:, ker])
        dims.append(int(np.sum(ker)))
        minpos.append(float(w[~ker][0]) if np.any(~ker) else np.inf)
    max_angle = 0.0
    for b in bases[1:]:
        if b.shape[1] != bases[0].shape[1]:
            max_angle = np.pi / 2.0
            break
        if b.shape[1]:
            max_angle = max(max_angle, float(np.max(subspace_angles(bases[0], b))))
    return KernelInvarianceReport(
        z_probes=tuple(probes),
        kernel_dims=tuple(dims),
        max_principal_angle=max_angle,
        min_positive_eigs=tuple(minpos),
    )


def reconstruct(data: NevanlinnaData, z: complex, budget_tol: float = 0.1,
                tail_correction: bool = True) -> np.ndarray:
    """C + D z + sum over intervals of mass [(mid - z)^{-1} - mid/(1 + mid^2)].

    Checks the windowed total of (1 + mid^2)^{-1} masses against the
    recorded Im M(i) budget when available and flags a window that misses
    too much of it.  With tail_correction the budget defect feeds the
    leading out-of-window term z * integral of dOmega/(1+lambda^2) over the
    tail, which removes the O(1/sqrt(window)) truncation error.
    """
    if data.measure is None:
        raise ValueError("NevanlinnaData carries no measure")
    mids = data.measure.midpoints()
    masses = data.measure.masses
    defect = None
    if data.budget is not None:
        covered = np.einsum("k,kij->ij", 1.0 / (1.0 + mids**2), masses)
        defect = data.budget - covered
        miss = float(np.linalg.norm(defect, 2))
        if miss > budget_tol * (float(np.linalg.norm(data.budget, 2)) + 1e-30):
            raise WindowTooNarrow(
                f"window covers total mass short of Im M(i) by {miss:.3e}"
            )
    coef = 1.0 / (mids - complex(z)) - mids / (1.0 + mids**2)
    out = data.c + complex(z) * data.d + np.einsum("k,kij->ij", coef, masses)
    if tail_correction and defect is not None:
        out = out + complex(z) * defect
    return out


def hilbert_boundary_value(t_grid: np.ndarray, density: np.ndarray, f, lam: float,
                           min_margin: int = 8) -> np.ndarray:
    """Boundary value M(lam + i0) f of an absolutely continuous model.

    Principal-value quadrature of the density against 1/(t - lam) with the
    symmetric-gap rule (the singular node is dropped; pairs around it
    cancel), plus the half-residue i pi density(lam) f.
    """
    t = np.asarray(t_grid, dtype=float)
    rho = np.asarray(density, dtype=complex)
    f = np.asarray(f, dtype=complex).reshape(-1)
    if t.ndim != 1 or rho.shape[0] != t.size:
        raise ValueError("density must be sampled on the t grid")
    h = t[1] - t[0]
    if not np.allclose(np.diff(t), h):
        raise ValueError("t grid must be uniform")
    i = int(np.argmin(np.abs(t - lam)))
    if abs(t[i] - lam) > 1e-9 * max(1.0, abs(lam)):
        raise ValueError("lam must be a node of the t grid")
    if i < min_margin or (t.size - 1 - i) < min_margin:
        raise WindowTooNarrow("lam sits too close to the window edge")
    w = np.full(t.size, h)
    w[0] = w[-1] = h / 2.0
    w[i] = 0.0
    kern = np.zeros(t.size)
    kern[np.arange(t.size) != i] = 1.0 / (t[np.arange(t.size) != i] - lam)
    pv = np.einsum("n,n,nij,j->i", w, kern, rho, f)
    return pv + 1j * np.pi * (rho[i] @ f)
