"""Self-contained acceptance checks behind the `selftest` command.

Each check pins its tolerance in code and reports one pass/fail line.
Seeds are fixed so every run exercises the same instances.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, List

import numpy as np
from scipy.integrate import simpson

from .fixtures import load_fixture_alpha, load_fixture_potential
from .green import apply_resolvent, m_from_green_boundary, resolvent_consistency
from .herglotz import point_mass, sampler_from_spec, stieltjes_inversion
from .io import matrix_to_pairs
from .ivp import (
    IntegratorConfig,
    ivp_lower_bound_check,
    picard_bound_constant,
    picard_iterates,
    solve_vector_ivp,
)
from .linalg import BoundaryOperator, principal_sqrt
from .potential import PotentialModel
from .weyl import (
    TruncationSchedule,
    fundamental_system,
    herglotz_residual,
    identity_suite,
    lft_transform,
    m_function,
)
from . import ivp as _ivp

__all__ = ["CheckResult", "run_all", "ACCEPTANCE_CHECKS"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    elapsed: float

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.name}: {self.detail} ({self.elapsed:.2f}s)"


def _sched(b_last=40.0, b_first=10.0, count=4, m_tol=1e-8) -> TruncationSchedule:
    return TruncationSchedule(np.geomspace(b_first, b_last, count), m_tol=m_tol)


def _random_hermitian(rng, d, scale=0.5):
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    m = 0.5 * (a + a.conj().T)
    return m * (scale / max(1.0, np.linalg.norm(m, 2)))


def _random_pc_potential(rng, d, span=2.0, cells=6, scale=0.5) -> PotentialModel:
    grid = np.linspace(0.0, span, cells + 1)
    vals = np.array([_random_hermitian(rng, d, scale) for _ in grid])
    return PotentialModel(dim=d, grid=grid, values=vals)


def check_free_m_functions() -> CheckResult:
    """d=1, V=0, z=i: both trigonometric boundary conditions, 1e-6, < 5 s each."""
    v = load_fixture_potential("potential_free_d1")
    sched = _sched()
    worst = 0.0
    times = []
    for bc, target in (
        (BoundaryOperator.dirichlet(1), 1j * principal_sqrt(1j)),
        (BoundaryOperator.neumann(1), 1j / principal_sqrt(1j)),
    ):
        t0 = time.perf_counter()
        sample = m_function(v, bc, 1j, sched)
        times.append(time.perf_counter() - t0)
        worst = max(worst, abs(complex(sample.m[0, 0]) - target))
    ok = worst <= 1e-6 and max(times) < 5.0
    return CheckResult(
        "free-potential m-functions", ok,
        f"max |m - oracle| = {worst:.3e} (tol 1e-6), slowest run {max(times):.2f}s (< 5s)",
        sum(times),
    )


def check_constant_diag_m() -> CheckResult:
    """d=2 diagonal constant potential at z=2i against the scalar closed forms."""
    t0 = time.perf_counter()
    v = load_fixture_potential("potential_const_diag_d2")
    bc = BoundaryOperator.dirichlet(2)
    sample = m_function(v, bc, 2j, _sched())
    target = np.diag([1j * principal_sqrt(2j - 1), 1j * principal_sqrt(2j - 4)])
    err = float(np.linalg.norm(sample.m - target, 2))
    return CheckResult(
        "constant diagonal m", err <= 1e-6,
        f"|m - diag oracle| = {err:.3e} (tol 1e-6)", time.perf_counter() - t0,
    )


def check_identity_suite() -> CheckResult:
    """Eight Wronskian identities for 10 random potentials; order >= 2 refinement."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    z = 2 + 1j
    bc = BoundaryOperator.dirichlet(3)
    cfg = IntegratorConfig(method="picard")
    probes = [0.4, 0.9, 1.3, 1.7, 2.0]
    worst = 0.0
    orders = []
    for trial in range(10):
        v = _random_pc_potential(rng, 3)
        grid = np.linspace(0.0, 2.0, 2001)  # step 1e-3
        fs = fundamental_system(v, bc, z, grid, cfg=cfg)
        res = identity_suite(fs, probes).max_residual
        worst = max(worst, res)
        if trial < 3:
            fine = fundamental_system(v, bc, z, np.linspace(0.0, 2.0, 4001), cfg=cfg)
            res_fine = identity_suite(fine, probes).max_residual
            orders.append(np.log2(res / max(res_fine, 1e-14)))
    ok = worst <= 1e-8 and min(orders) >= 2.0
    return CheckResult(
        "identity suite", ok,
        f"max residual = {worst:.3e} (tol 1e-8), refinement order >= {min(orders):.2f} (>= 2)",
        time.perf_counter() - t0,
    )


def check_reflection() -> CheckResult:
    """m(z) vs m(conj z)* over a 5x5 grid, independent computations."""
    t0 = time.perf_counter()
    v = load_fixture_potential("potential_random_d2")
    bc = BoundaryOperator.dirichlet(2)
    sched = _sched(b_last=160.0, count=6)
    worst = 0.0
    for re in np.linspace(-1.0, 3.0, 5):
        for im in np.linspace(0.5, 2.5, 5):
            z = complex(re, im)
            mz = m_function(v, bc, z, sched).m
            mzc = m_function(v, bc, np.conj(z), sched).m
            worst = max(worst, float(np.linalg.norm(mz - mzc.conj().T, 2)))
    return CheckResult(
        "reflection symmetry", worst <= 1e-6,
        f"max |m(z) - m(conj z)*| = {worst:.3e} (tol 1e-6)", time.perf_counter() - t0,
    )


def check_herglotz_scan() -> CheckResult:
    """Smallest eigenvalue of Im m >= -1e-10 on 100 points, all shipped potentials."""
    t0 = time.perf_counter()
    sched = TruncationSchedule(np.geomspace(5.0, 1280.0, 9), m_tol=1e-8)
    names = ("potential_free_d1", "potential_const_diag_d2",
             "potential_random_d2", "potential_random_d3")
    floor = np.inf
    count = 0
    for name in names:
        v = load_fixture_potential(name)
        bc = BoundaryOperator.dirichlet(v.dim)
        for re in np.linspace(-1.0, 3.0, 5):
            for im in np.linspace(0.1, 2.0, 5):
                sample = m_function(v, bc, complex(re, im), sched)
                floor = min(floor, herglotz_residual(sample.m))
                count += 1
    return CheckResult(
        "Herglotz floor scan", floor >= -1e-10,
        f"min eig Im m = {floor:.3e} over {count} points (floor -1e-10)",
        time.perf_counter() - t0,
    )


def check_lft() -> CheckResult:
    """Boundary-rotation transform of m vs the directly computed target."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    v = load_fixture_potential("potential_random_d2")
    sched = _sched(b_last=160.0, count=6, m_tol=1e-9)
    z = 2j
    worst = 0.0
    for _ in range(5):
        alpha = BoundaryOperator.from_matrix(_random_hermitian(rng, 2, 1.2))
        beta = BoundaryOperator.from_matrix(_random_hermitian(rng, 2, 1.2))
        m_alpha = m_function(v, alpha, z, sched).m
        m_beta = m_function(v, beta, z, sched).m
        moved = lft_transform(m_alpha, alpha, beta)
        worst = max(worst, float(np.linalg.norm(moved - m_beta, 2)))
    return CheckResult(
        "linear fractional transform", worst <= 1e-6,
        f"max |lft(m_a) - m_b| = {worst:.3e} (tol 1e-6)", time.perf_counter() - t0,
    )


def check_stieltjes() -> CheckResult:
    """Free-model band mass, spectral-gap emptiness, and additivity."""
    t0 = time.perf_counter()
    free = sampler_from_spec({"type": "free", "dim": 1, "boundary": "dirichlet"})
    eps = [2.0 ** -k for k in range(4, 10)]
    band = stieltjes_inversion(free, 0.0, 1.0, eps)
    band_err = abs(float(band[0, 0].real) - 2.0 / (3.0 * np.pi))
    gap = float(np.linalg.norm(stieltjes_inversion(free, -2.0, -1.0, eps)))
    left = stieltjes_inversion(free, 0.0, 0.5, eps)
    right = stieltjes_inversion(free, 0.5, 1.0, eps)
    add_err = float(np.linalg.norm(left + right - band))
    ok = band_err <= 1e-3 and gap <= 1e-6 and add_err <= 2e-3
    return CheckResult(
        "Stieltjes inversion", ok,
        f"band err {band_err:.3e} (1e-3), gap mass {gap:.3e} (1e-6), "
        f"additivity {add_err:.3e} (2e-3)", time.perf_counter() - t0,
    )


def check_point_mass() -> CheckResult:
    """Pole model recovers its residue; a.c. model yields zero."""
    t0 = time.perf_counter()
    p = np.array([[0.5, 0.25], [0.25, 0.5]])
    pole = sampler_from_spec(
        {"type": "pole", "dim": 2, "lambda0": 1.5, "mass": matrix_to_pairs(p)}
    )
    eps = [2.0 ** -k for k in range(4, 10)]
    pole_err = float(np.linalg.norm(point_mass(pole, 1.5, eps) - p, 2))
    free = sampler_from_spec({"type": "free", "dim": 1, "boundary": "dirichlet"})
    ac = float(np.linalg.norm(point_mass(free, 1.0, eps)))
    ok = pole_err <= 1e-8 and ac <= 1e-6
    return CheckResult(
        "point-mass extraction", ok,
        f"pole err {pole_err:.3e} (1e-8), a.c. mass {ac:.3e} (1e-6)",
        time.perf_counter() - t0,
    )


def _bump_pair(grid: np.ndarray):
    """p(x) = cos^4(pi x/2), q = x p on [0,1], with second derivatives; 0 beyond."""
    x = np.minimum(grid, 1.0)
    u = 0.5 * np.pi * x
    c, s = np.cos(u), np.sin(u)
    p = c**4
    ppp = (0.5 * np.pi) ** 2 * 4.0 * (3.0 * c**2 * s**2 - c**4)
    dp = -2.0 * np.pi * c**3 * s
    q = x * p
    qpp = 2.0 * dp + x * ppp
    mask = grid <= 1.0
    zero = np.zeros_like(grid)
    return (np.where(mask, p, zero), np.where(mask, ppp, zero),
            np.where(mask, q, zero), np.where(mask, qpp, zero))


def check_resolvent() -> CheckResult:
    """Manufactured-solution recovery and the boundary condition at a."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    v = load_fixture_potential("potential_random_d2")
    bc = load_fixture_alpha("alpha_random_d2")
    z = 1j
    grid = np.linspace(0.0, 2.5, 2501)
    p, ppp, q, qpp = _bump_pair(grid)
    h = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    v1 = -bc.sin_alpha @ h
    v2 = bc.cos_alpha @ h
    w = np.outer(p, v1) + np.outer(q, v2)
    wpp = np.outer(ppp, v1) + np.outer(qpp, v2)
    vsamp = _ivp._sample_potential(v, grid)
    f = -wpp + np.einsum("nij,nj->ni", vsamp, w) - z * w
    sched = _sched(b_last=80.0, count=5, m_tol=1e-9)
    u = apply_resolvent(v, bc, z, f, grid, sched)
    num = simpson(np.sum(np.abs(u.values - w) ** 2, axis=1), x=grid)
    den = simpson(np.sum(np.abs(w) ** 2, axis=1), x=grid)
    rel = float(np.sqrt(num / den))
    bres = float(np.linalg.norm(bc.sin_alpha @ u.derivatives[0] + bc.cos_alpha @ u.values[0]))
    ok = rel <= 1e-4 and bres <= 1e-8
    return CheckResult(
        "resolvent application", ok,
        f"L2 rel err {rel:.3e} (1e-4), boundary residual {bres:.3e} (1e-8)",
        time.perf_counter() - t0,
    )


def check_cross_route_m() -> CheckResult:
    """Green-boundary route to m and the resolvent-side identity."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    sched = _sched(b_last=80.0, count=5, m_tol=1e-9)
    worst_green = 0.0
    for name, z in (("potential_free_d1", 1j), ("potential_random_d2", 1.5j)):
        v = load_fixture_potential(name)
        bc = BoundaryOperator.dirichlet(v.dim)
        direct = m_function(v, bc, z, sched).m
        via_green = m_from_green_boundary(v, bc, z, sched)
        worst_green = max(worst_green, float(np.linalg.norm(via_green - direct, 2)))
    worst_cons = resolvent_consistency(
        load_fixture_potential("potential_free_d1"),
        BoundaryOperator.dirichlet(1), 1j, [1.0], 1.0, sched,
    )
    v2 = load_fixture_potential("potential_random_d2")
    bc2 = load_fixture_alpha("alpha_random_d2")
    for _ in range(3):
        f0 = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        worst_cons = max(
            worst_cons, resolvent_consistency(v2, bc2, 1j, f0, 1.0, sched)
        )
    ok = worst_green <= 1e-3 and worst_cons <= 1e-4
    return CheckResult(
        "cross-route m", ok,
        f"green-corner vs direct {worst_green:.3e} (1e-3), "
        f"resolvent identity {worst_cons:.3e} (1e-4)", time.perf_counter() - t0,
    )


def check_ivp_bounds() -> CheckResult:
    """Factorial term bounds for n <= 10 and the short-interval lower bound."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(505)
    import math

    bound_ok = True
    worst_ratio = 0.0
    for name, z in (("potential_free_d1", 0.0), ("potential_const_diag_d2", 1j),
                    ("potential_random_d2", 2 + 1j), ("potential_random_d3", 1j)):
        v = load_fixture_potential(name)
        grid = np.linspace(v.a, min(v.b_max, v.a + 1.0), 501)
        h0 = rng.standard_normal(v.dim) + 1j * rng.standard_normal(v.dim)
        h1 = rng.standard_normal(v.dim) + 1j * rng.standard_normal(v.dim)
        data = float(np.linalg.norm(h0) + np.linalg.norm(h1))
        terms = picard_iterates(v, z, v.a, h0, h1, grid=grid, n=10)
        c = picard_bound_constant(v, z, grid)
        vsamp = _ivp._sample_potential(v, grid)
        vnorm = np.array([np.linalg.norm(m, 2) for m in vsamp])
        wcum = np.concatenate([[0.0], np.cumsum(
            0.5 * (vnorm[1:] + vnorm[:-1]) * np.diff(grid))])
        for n in range(1, 11):
            lhs = (np.linalg.norm(terms[n].values, axis=1)
                   + np.linalg.norm(terms[n].derivatives, axis=1))
            rhs = (c * wcum) ** n / math.factorial(n) * data
            ratio = float(np.max(lhs / np.maximum(rhs, 1e-300)))
            if np.any(lhs > rhs * (1 + 1e-9) + 1e-14):
                bound_ok = False
            worst_ratio = max(worst_ratio, ratio)
    v3 = load_fixture_potential("potential_random_d3")
    grid3 = np.linspace(0.0, 0.1, 201)
    lower_ok = True
    for _ in range(50):
        y0 = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        y1 = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        path = solve_vector_ivp(v3, 1j, 0.0, y0, y1, grid=grid3)
        lower_ok = lower_ok and ivp_lower_bound_check(path, v3, 0.0, 0.1)
    ok = bound_ok and lower_ok
    return CheckResult(
        "IVP bounds", ok,
        f"term bound worst ratio {worst_ratio:.3f} (<= 1), "
        f"lower bound 50/50 trials {'pass' if lower_ok else 'FAIL'}",
        time.perf_counter() - t0,
    )


ACCEPTANCE_CHECKS: List[Callable[[], CheckResult]] = [
    check_free_m_functions,
    check_constant_diag_m,
    check_identity_suite,
    check_reflection,
    check_herglotz_scan,
    check_lft,
    check_stieltjes,
    check_point_mass,
    check_resolvent,
    check_cross_route_m,
    check_ivp_bounds,
]

RUNTIME_BUDGET_S = 180.0


def run_all(progress=None) -> List[CheckResult]:
    """Run every acceptance check plus the total-runtime budget check."""
    results = []
    t0 = time.perf_counter()
    for check in ACCEPTANCE_CHECKS:
        res = check()
        results.append(res)
        if progress is not None:
            progress(res.line())
    total = time.perf_counter() - t0
    runtime = CheckResult(
        "selftest runtime", total < RUNTIME_BUDGET_S,
        f"total {total:.1f}s (budget {RUNTIME_BUDGET_S:.0f}s, single process)", total,
    )
    results.append(runtime)
    if progress is not None:
        progress(runtime.line())
    return results
