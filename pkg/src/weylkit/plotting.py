"""Figure rendering for the CLI report path.

Every report command writes its figure next to the CSV it documents.
Figures are diagnostic companions; the CSVs stay the primary, byte-stable
outputs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "render_potential",
    "render_solution",
    "render_fundamental",
    "render_m_grid",
    "render_measure",
    "render_kernel",
    "render_herglotz_scan",
]

_DPI = 130


def _save(fig, out_path):
    fig.tight_layout()
    fig.savefig(out_path, dpi=_DPI)
    plt.close(fig)


def render_potential(model, out_path):
    xs = np.linspace(model.a, model.b_max, 512)
    from .potential import evaluate_potential

    norms = [np.linalg.norm(evaluate_potential(model, x), 2) for x in xs]
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.plot(xs, norms, lw=1.2)
    ax.set_xlabel("x")
    ax.set_ylabel(r"$\|V(x)\|_2$")
    ax.set_title(f"potential profile (d={model.dim}, {model.interpolation})")
    _save(fig, out_path)


def render_solution(path, out_path):
    fig, ax = plt.subplots(figsize=(6.5, 3.8))
    vals = path.values.reshape(path.grid.size, -1)
    for j in range(min(vals.shape[1], 8)):
        ax.plot(path.grid, vals[:, j].real, lw=1.0, label=f"Re comp {j}")
        ax.plot(path.grid, vals[:, j].imag, lw=1.0, ls="--", label=f"Im comp {j}")
    ax.set_xlabel("x")
    ax.set_ylabel("solution components")
    ax.set_title(f"solution path (z = {path.z:g})")
    if vals.shape[1] <= 4:
        ax.legend(fontsize=7)
    _save(fig, out_path)


def render_fundamental(fs, out_path):
    fig, ax = plt.subplots(figsize=(6.5, 3.8))
    gs = fs.grid
    th = [np.linalg.norm(v, 2) for v in fs.theta.values]
    ph = [np.linalg.norm(v, 2) for v in fs.phi.values]
    ax.semilogy(gs, th, lw=1.2, label=r"$\|\theta(z,x)\|$")
    ax.semilogy(gs, ph, lw=1.2, label=r"$\|\varphi(z,x)\|$")
    ax.set_xlabel("x")
    ax.set_ylabel("operator norm")
    ax.set_title(f"fundamental system (z = {fs.z:g})")
    ax.legend()
    _save(fig, out_path)


def render_m_grid(zs, m_values, out_path):
    zs = np.asarray(zs)
    floors = []
    traces = []
    for m in m_values:
        im = (m - m.conj().T) / 2j
        floors.append(np.linalg.eigvalsh(im)[0])
        traces.append(np.trace(m))
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.8))
    sc = axes[0].scatter(zs.real, zs.imag, c=np.log10(np.maximum(floors, 1e-16)),
                         s=22, cmap="viridis")
    fig.colorbar(sc, ax=axes[0], label=r"$\log_{10}$ min eig Im m")
    axes[0].set_xlabel("Re z")
    axes[0].set_ylabel("Im z")
    axes[0].set_title("Herglotz floor over the z-grid")
    traces = np.asarray(traces)
    axes[1].plot(np.arange(len(traces)), traces.real, lw=1.0, label="Re tr m")
    axes[1].plot(np.arange(len(traces)), traces.imag, lw=1.0, label="Im tr m")
    axes[1].set_xlabel("grid index")
    axes[1].set_title("trace of m along the grid")
    axes[1].legend(fontsize=8)
    _save(fig, out_path)


def render_measure(measure, out_path):
    mids = measure.midpoints()
    widths = measure.intervals[:, 1] - measure.intervals[:, 0]
    dens = np.array([np.trace(m).real for m in measure.masses]) / widths
    fig, ax = plt.subplots(figsize=(6.5, 3.8))
    ax.step(mids, dens, where="mid", lw=1.0)
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel(r"trace density  $\mathrm{tr}\,\Omega'$")
    ax.set_title("spectral measure (per-interval trace density)")
    _save(fig, out_path)


def render_kernel(xs, xps, norms, out_path):
    fig, ax = plt.subplots(figsize=(5.4, 4.4))
    pc = ax.pcolormesh(xps, xs, norms, shading="auto", cmap="magma")
    fig.colorbar(pc, ax=ax, label=r"$\|G(z,x,x')\|_2$")
    ax.set_xlabel("x'")
    ax.set_ylabel("x")
    ax.set_title("Green kernel magnitude")
    _save(fig, out_path)


def render_herglotz_scan(zs, floors, out_path):
    zs = np.asarray(zs)
    fig, ax = plt.subplots(figsize=(6, 4))
    sc = ax.scatter(zs.real, zs.imag, c=floors, s=24, cmap="coolwarm",
                    vmin=-1e-10, vmax=max(1e-10, float(np.max(floors))))
    fig.colorbar(sc, ax=ax, label="min eig Im m(z)")
    ax.set_xlabel("Re z")
    ax.set_ylabel("Im z")
    ax.set_title("Herglotz scan")
    _save(fig, out_path)
