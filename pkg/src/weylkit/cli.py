"""Batch command-line front door.

Subcommands: validate, solve-ivp, fundamental, m-grid, spectral-measure,
green, herglotz-check, selftest.  Primary outputs are deterministic CSV
tables; each report also renders a matplotlib figure next to its CSV
unless --no-plot is given.  A JSON config file can mirror any long flag
(underscored keys); explicit flags win.

Exit codes: 0 ok, 2 usage/config, 3 bad input file, 4 precondition
violated, 5 not converged, 6 numerical failure, 7 check failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import errors as E
from .acceptance import run_all
from .green import GreenEvaluator, apply_resolvent
from .herglotz import kernel_invariance, measure_table, sampler_from_m_function, sampler_from_spec
from .io import complex_cells, complex_columns, load_json, write_csv
from .ivp import IntegratorConfig, solve_vector_ivp
from .linalg import BoundaryOperator, load_boundary_operator
from .potential import load_potential, validate_potential
from .weyl import (
    TruncationSchedule,
    fundamental_system,
    herglotz_residual,
    identity_suite,
    m_function,
    weyl_solution,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BAD_INPUT = 3
EXIT_PRECONDITION = 4
EXIT_NOT_CONVERGED = 5
EXIT_NUMERICAL = 6
EXIT_CHECK_FAILED = 7

_INPUT_ERRORS = (E.ParseError, E.NonHermitianSample, E.NonMonotoneGrid, E.InvalidHermitian)
_PRECONDITION_ERRORS = (E.RealSpectralParameter, E.OutOfDomain, E.UnsupportedSupport,
                        E.RegimeNotSatisfied, E.GridMismatch, E.DimError)
_NUMERICAL_ERRORS = (E.ToleranceNotMet, E.NearSingularCap, E.SingularDenominator,
                     E.NonDecayingTrail, E.DivergentLinearTerm, E.WindowTooNarrow,
                     E.DegenerateCombination)


def _parse_range(spec: str) -> np.ndarray:
    """'lo:hi:n' -> n points, 'v' -> single value."""
    parts = str(spec).split(":")
    try:
        if len(parts) == 1:
            return np.array([float(parts[0])])
        if len(parts) == 3:
            lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
            if n < 1:
                raise ValueError
            return np.linspace(lo, hi, n)
    except ValueError:
        pass
    raise E.ConfigError(f"bad range spec {spec!r} (want 'lo:hi:n' or a number)")


def _parse_floats(spec: str) -> np.ndarray:
    try:
        return np.array([float(tok) for tok in str(spec).split(",") if tok.strip()])
    except ValueError:
        raise E.ConfigError(f"bad number list {spec!r}") from None


def _parse_complex_vector(spec: str, dim: int) -> np.ndarray:
    try:
        vals = [complex(tok.replace(" ", "")) for tok in str(spec).split(",")]
    except ValueError:
        raise E.ConfigError(f"bad complex list {spec!r}") from None
    if len(vals) != dim:
        raise E.ConfigError(f"expected {dim} components, got {len(vals)}")
    return np.array(vals, dtype=complex)


def _z_grid(args) -> np.ndarray:
    if getattr(args, "z_list", None):
        pts = []
        for tok in str(args.z_list).split(";"):
            re_s, im_s = tok.split(",")
            pts.append(complex(float(re_s), float(im_s)))
        return np.array(pts)
    res = _parse_range(args.z_re)
    ims = _parse_range(args.z_im)
    return np.array([complex(r, i) for r in res for i in ims])


def _schedule(args, V=None, z=None) -> TruncationSchedule:
    m_tol = float(args.m_tol)
    if args.b_schedule:
        return TruncationSchedule(_parse_floats(args.b_schedule), m_tol=m_tol)
    if V is not None and z is not None:
        return TruncationSchedule.auto(V, z, m_tol=m_tol)
    raise E.ConfigError("--b-schedule is required here")


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_inputs(args, need_alpha=True):
    V = load_potential(args.potential)
    if not need_alpha:
        return V, None
    if args.alpha:
        bc = load_boundary_operator(args.alpha)
    else:
        bc = BoundaryOperator.dirichlet(V.dim)
    if bc.dim != V.dim:
        raise E.ConfigError(f"alpha dim {bc.dim} != potential dim {V.dim}")
    return V, bc


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args) -> int:
    V, bc = _load_inputs(args, need_alpha=bool(args.alpha))
    report = validate_potential(V)
    print(f"potential: dim={V.dim} nodes={V.grid.size} "
          f"interpolation={V.interpolation} extension={V.extension}")
    print(report)
    if bc is not None:
        eye = np.eye(bc.dim)
        pyth = float(np.linalg.norm(
            bc.sin_alpha @ bc.sin_alpha + bc.cos_alpha @ bc.cos_alpha - eye))
        print(f"alpha: dim={bc.dim}, sin^2+cos^2 residual {pyth:.3e}")
    if args.out:
        out = _outdir(args)
        doc = {
            "dim": V.dim,
            "max_hermiticity_residual": report.max_hermiticity_residual,
            "norm_integral": report.norm_integral,
            "per_node_residuals": [float(r) for r in report.per_node_residuals],
        }
        (out / "potential_report.json").write_text(json.dumps(doc, indent=1) + "\n")
        if not args.no_plot:
            from .plotting import render_potential

            render_potential(V, out / "potential.png")
    return EXIT_OK


def cmd_solve_ivp(args) -> int:
    V, _ = _load_inputs(args, need_alpha=False)
    z = complex(float(args.z_re), float(args.z_im))
    grid = _parse_range(args.grid)
    h0 = (_parse_complex_vector(args.h0, V.dim) if args.h0
          else np.eye(V.dim, dtype=complex)[:, 0])
    h1 = (_parse_complex_vector(args.h1, V.dim) if args.h1
          else np.zeros(V.dim, dtype=complex))
    cfg = IntegratorConfig(method=args.method)
    x0 = float(args.x0) if args.x0 is not None else float(grid[0])
    path = solve_vector_ivp(V, z, x0, h0, h1, grid=grid, cfg=cfg)
    out = _outdir(args)
    path.to_csv(out / "solution.csv")
    from .ivp import integral_equation_residual

    res = integral_equation_residual(path, V, h0, h1)
    print(f"solved on {grid.size} nodes; integral-equation residual {res:.3e}")
    print(f"wrote {out / 'solution.csv'}")
    if not args.no_plot:
        from .plotting import render_solution

        render_solution(path, out / "solution.png")
    return EXIT_OK


def cmd_fundamental(args) -> int:
    V, bc = _load_inputs(args)
    z = complex(float(args.z_re), float(args.z_im))
    grid = _parse_range(args.grid)
    fs = fundamental_system(V, bc, z, grid)
    out = _outdir(args)
    fs.theta.to_csv(out / "theta.csv")
    fs.phi.to_csv(out / "phi.csv")
    probes = grid[:: max(1, grid.size // 16)]
    rep = identity_suite(fs, probes)
    write_csv(out / "identity_report.csv", ["identity", "max_residual"],
              [[n, r] for n, r in zip(rep.names, rep.residuals)])
    print(f"initial-condition residual {fs.initial_condition_residual():.3e}")
    print(f"identity suite max residual {rep.max_residual:.3e}")
    print(f"wrote {out / 'theta.csv'}, {out / 'phi.csv'}, {out / 'identity_report.csv'}")
    if not args.no_plot:
        from .plotting import render_fundamental

        render_fundamental(fs, out / "fundamental.png")
    return EXIT_OK


def _m_point(payload):
    V, bc, z, sched = payload
    sample = m_function(V, bc, z, sched, strict=False)
    return sample


def cmd_m_grid(args) -> int:
    V, bc = _load_inputs(args)
    zs = _z_grid(args)
    if np.any(zs.imag == 0.0):
        raise E.RealSpectralParameter("z-grid contains points with Im z = 0")
    sched = _schedule(args, V, zs[np.argmin(np.abs(zs.imag))])
    payloads = [(V, bc, z, sched) for z in zs]
    jobs = int(args.jobs)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            samples = list(pool.map(_m_point, payloads, chunksize=4))
    else:
        samples = [_m_point(p) for p in payloads]
    out = _outdir(args)
    d = V.dim
    header = ["Re(z)", "Im(z)"] + complex_columns("m", d) + ["converged", "final_delta"]
    rows = []
    for z, s in zip(zs, samples):
        rows.append([z.real, z.imag] + complex_cells(s.m)
                    + [int(s.converged), s.final_delta])
    write_csv(out / "m_grid.csv", header, rows)
    n_bad = sum(1 for s in samples if not s.converged)
    print(f"m-grid: {len(zs)} points, {n_bad} unconverged; wrote {out / 'm_grid.csv'}")
    if not args.no_plot:
        from .plotting import render_m_grid

        render_m_grid(zs, [s.m for s in samples], out / "m_grid.png")
    if n_bad:
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_spectral_measure(args) -> int:
    if args.model:
        sampler = sampler_from_spec(load_json(args.model))
        label = f"model {sampler.label}"
    else:
        if not args.potential:
            raise E.ConfigError("need --model or --potential")
        V, bc = _load_inputs(args)
        z_ref = complex(0.0, max(float(e) for e in _parse_floats(args.eps)))
        sched = _schedule(args, V, z_ref)
        sampler = sampler_from_m_function(V, bc, sched)
        label = "m-function"
    eps = _parse_floats(args.eps)
    n_vert = 65 if sampler.vectorized else 17
    table = measure_table(sampler, float(args.lambda_min), float(args.lambda_max),
                          int(args.intervals), eps, n_vert=n_vert)
    out = _outdir(args)
    d = sampler.dim
    header = ["lambda1", "lambda2"] + complex_columns("mass", d) + ["eps"]
    eps_used = float(eps[-1])
    rows = [
        [float(iv[0]), float(iv[1])] + complex_cells(mk) + [eps_used]
        for iv, mk in zip(table.intervals, table.masses)
    ]
    write_csv(out / "spectral_measure.csv", header, rows)
    total = table.total()
    print(f"spectral measure of {label}: {int(args.intervals)} intervals, "
          f"total trace {np.trace(total).real:.6g}; wrote {out / 'spectral_measure.csv'}")
    if not args.no_plot:
        from .plotting import render_measure

        render_measure(table, out / "spectral_measure.png")
    return EXIT_OK


def cmd_green(args) -> int:
    V, bc = _load_inputs(args)
    z = complex(float(args.z_re), float(args.z_im))
    sched = _schedule(args, V, z)
    xs = _parse_range(args.x_grid)
    ev = GreenEvaluator(V, bc, z, sched)
    out = _outdir(args)
    d = V.dim
    header = ["x", "xp"] + complex_columns("G", d)
    rows = []
    norms = np.empty((xs.size, xs.size))
    for i, x in enumerate(xs):
        for j, xp in enumerate(xs):
            g = ev.kernel(float(x), float(xp))
            norms[i, j] = np.linalg.norm(g, 2)
            rows.append([float(x), float(xp)] + complex_cells(g))
    write_csv(out / "green_kernel.csv", header, rows)
    print(f"kernel tile {xs.size}x{xs.size} at z={z:g}; wrote {out / 'green_kernel.csv'}")
    if args.with_resolvent:
        quad = np.linspace(V.a, float(xs[-1]) + 1.0, 2001)
        width = min(1.0, (quad[-1] - quad[0]) / 4.0)
        u_arg = np.clip((quad - V.a) / width, 0.0, 1.0) * np.pi
        bump = np.where(quad <= V.a + width, np.sin(u_arg) ** 2, 0.0)
        f = np.zeros((quad.size, d), dtype=complex)
        f[:, 0] = bump
        u = apply_resolvent(V, bc, z, f, quad, sched)
        u.to_csv(out / "resolvent.csv")
        bres = float(np.linalg.norm(
            bc.sin_alpha @ u.derivatives[0] + bc.cos_alpha @ u.values[0]))
        print(f"resolvent applied to a bump source; boundary residual {bres:.3e}; "
              f"wrote {out / 'resolvent.csv'}")
    if not args.no_plot:
        from .plotting import render_kernel

        render_kernel(xs, xs, norms, out / "green_kernel.png")
    return EXIT_OK


def cmd_herglotz_check(args) -> int:
    V, bc = _load_inputs(args)
    zs = _z_grid(args)
    if np.any(zs.imag <= 0.0):
        raise E.RealSpectralParameter("herglotz scan needs Im z > 0")
    sched = _schedule(args, V, zs[np.argmin(zs.imag)])
    floors = []
    samples = []
    for z in zs:
        s = m_function(V, bc, z, sched, strict=False)
        samples.append(s)
        floors.append(herglotz_residual(s.m) if s.converged else np.nan)
    floors = np.array(floors)
    out = _outdir(args)
    rows = [
        [z.real, z.imag, f if np.isfinite(f) else "nan", int(s.converged)]
        for z, f, s in zip(zs, floors, samples)
    ]
    write_csv(out / "herglotz_scan.csv", ["Re(z)", "Im(z)", "min_eig_Im_m", "converged"], rows)
    sampler = sampler_from_m_function(V, bc, sched)
    probes = [complex(z) for z in zs[zs.imag >= np.median(zs.imag)][:4]]
    if len(probes) >= 2:
        rep = kernel_invariance(sampler, probes)
        (out / "kernel_invariance.json").write_text(json.dumps({
            "kernel_dims": list(rep.kernel_dims),
            "max_principal_angle": rep.max_principal_angle,
            "min_positive_eigs": [
                (None if not np.isfinite(v) else float(v)) for v in rep.min_positive_eigs
            ],
            "consistent": bool(rep.consistent),
        }, indent=1) + "\n")
    finite = floors[np.isfinite(floors)]
    n_bad = int(np.sum(~np.isfinite(floors)))
    worst = float(np.min(finite)) if finite.size else float("nan")
    print(f"herglotz scan: {len(zs)} points, min floor {worst:.3e}, "
          f"{n_bad} unconverged; wrote {out / 'herglotz_scan.csv'}")
    if not args.no_plot:
        from .plotting import render_herglotz_scan

        render_herglotz_scan(zs[np.isfinite(floors)], finite, out / "herglotz_scan.png")
    if n_bad:
        return EXIT_NOT_CONVERGED
    if finite.size and worst < -1e-10:
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_selftest(args) -> int:
    results = run_all(progress=print)
    if args.out:
        out = _outdir(args)
        doc = [
            {"name": r.name, "passed": r.passed, "detail": r.detail,
             "elapsed_s": round(r.elapsed, 3)}
            for r in results
        ]
        (out / "selftest_report.json").write_text(json.dumps(doc, indent=1) + "\n")
    if all(r.passed for r in results):
        print("selftest: all checks passed")
        return EXIT_OK
    print("selftest: FAILURES present")
    return EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# parser plumbing


def _add_common(p, with_alpha=True, with_schedule=False):
    p.add_argument("--potential", help="potential JSON file")
    if with_alpha:
        p.add_argument("--alpha", help="boundary operator JSON file (default: zero)")
    if with_schedule:
        p.add_argument("--b-schedule", help="comma list of truncation points "
                                            "(default: auto from z and the potential)")
        p.add_argument("--m-tol", default=1e-8, type=float,
                       help="truncation convergence tolerance")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--jobs", default=1, type=int, help="parallel workers over z-points")
    p.add_argument("--no-plot", action="store_true", help="skip figure rendering")
    p.add_argument("--config", help="JSON file mirroring flags (flags win)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="weylkit",
        description="m-functions, Green kernels and spectral measures for "
                    "half-line Schrodinger operators with matrix potentials",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a potential (and optional alpha) file")
    _add_common(p)

    p = sub.add_parser("solve-ivp", help="solve one vector initial value problem")
    _add_common(p, with_alpha=False)
    p.add_argument("--z-re", default=0.0, type=float)
    p.add_argument("--z-im", default=0.0, type=float)
    p.add_argument("--x0", type=float, help="anchor (default: grid start)")
    p.add_argument("--h0", help="comma list of complex components")
    p.add_argument("--h1", help="comma list of complex components")
    p.add_argument("--grid", default="0:1:1001", help="lo:hi:n solver grid")
    p.add_argument("--method", default="propagator",
                   choices=("propagator", "picard", "rk-adaptive"))

    p = sub.add_parser("fundamental", help="fundamental system dump + identity report")
    _add_common(p)
    p.add_argument("--z-re", default=0.0, type=float)
    p.add_argument("--z-im", default=1.0, type=float)
    p.add_argument("--grid", default="0:2:2001")

    p = sub.add_parser("m-grid", help="m(z) over a rectangular or listed z-grid")
    _add_common(p, with_schedule=True)
    p.add_argument("--z-re", default="0:2:5", help="lo:hi:n or single value")
    p.add_argument("--z-im", default="0.5:2:4", help="lo:hi:n or single value")
    p.add_argument("--z-list", help="explicit points 're,im;re,im;...' (wins)")

    p = sub.add_parser("spectral-measure", help="Stieltjes inversion table")
    _add_common(p, with_schedule=True)
    p.add_argument("--model", help="synthetic sampler JSON (instead of a potential)")
    p.add_argument("--lambda-min", default=0.0, type=float)
    p.add_argument("--lambda-max", default=4.0, type=float)
    p.add_argument("--intervals", default=400, type=int)
    p.add_argument("--eps", default="0.01,0.005",
                   help="decreasing comma list of regularizations")

    p = sub.add_parser("green", help="Green kernel tile (and optional resolvent demo)")
    _add_common(p, with_schedule=True)
    p.add_argument("--z-re", default=0.0, type=float)
    p.add_argument("--z-im", default=1.0, type=float)
    p.add_argument("--x-grid", default="0:2:33", help="lo:hi:n tile axis")
    p.add_argument("--with-resolvent", action="store_true",
                   help="also apply the resolvent to a bump source")

    p = sub.add_parser("herglotz-check", help="Herglotz floor scan + kernel invariance")
    _add_common(p, with_schedule=True)
    p.add_argument("--z-re", default="-1:3:5")
    p.add_argument("--z-im", default="0.1:2:5")
    p.add_argument("--z-list")

    p = sub.add_parser("selftest", help="run the acceptance suite")
    p.add_argument("--out", default=None, help="write selftest_report.json here")
    p.add_argument("--config", help="ignored (uniform interface)")

    return ap


_COMMANDS = {
    "validate": cmd_validate,
    "solve-ivp": cmd_solve_ivp,
    "fundamental": cmd_fundamental,
    "m-grid": cmd_m_grid,
    "spectral-measure": cmd_spectral_measure,
    "green": cmd_green,
    "herglotz-check": cmd_herglotz_check,
    "selftest": cmd_selftest,
}


def _merge_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    """Fill argparse defaults from --config JSON; explicit flags win."""
    if not getattr(args, "config", None):
        return
    doc = load_json(args.config)
    if not isinstance(doc, dict):
        raise E.ConfigError("--config must hold a JSON object")
    given = {a for a in sys.argv[1:] if a.startswith("--")}
    for key, value in doc.items():
        attr = key.replace("-", "_")
        flag = "--" + key.replace("_", "-")
        if not hasattr(args, attr):
            raise E.ConfigError(f"config key {key!r} does not match any flag")
        if flag in given:
            continue  # explicit flag wins
        setattr(args, attr, value)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _merge_config(args, parser)
        if args.command != "selftest" and getattr(args, "potential", None) is None \
                and getattr(args, "model", None) is None:
            raise E.ConfigError("--potential is required (or --model where supported)")
        return _COMMANDS[args.command](args)
    except E.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _INPUT_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except _PRECONDITION_ERRORS as exc:
        print(f"precondition violated: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except E.NotConverged as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
