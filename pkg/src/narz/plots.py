"""Figure rendering for the report pipelines.

Every renderer takes already-computed study objects and writes one PNG;
nothing here recomputes physics.  The Agg backend is forced so the CLI
works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .cumulative import cumulative_from_particles
from .dynamics import Trajectory
from .kernels import Kernel

__all__ = [
    "plot_trajectory",
    "plot_cumulative",
    "plot_convergence",
    "plot_stability",
    "plot_certificates",
    "plot_kernels",
]


def plot_trajectory(traj: Trajectory, path, max_particles: int = 256) -> None:
    """Particle worldlines x(t), collision events marked."""
    times = np.array([rec.time for rec in traj.records])
    xs = np.stack([rec.state.x for rec in traj.records])
    n = xs.shape[1]
    step = max(1, n // max_particles)
    fig, ax = plt.subplots(figsize=(7.5, 5.0))
    ax.plot(times, xs[:, ::step], lw=0.7, color="tab:blue", alpha=0.6)
    cols = traj.collisions()
    if cols:
        ct = [e.time for e in cols]
        cx = []
        for e in cols:
            rec = next(r for r in traj.records if r.time == e.time)
            cx.append(rec.state.x[e.indices[0]])
        ax.plot(ct, cx, "o", ms=4, color="tab:red", label=f"{len(cols)} collisions")
        ax.legend(loc="best")
    ax.set_xlabel("t")
    ax.set_ylabel("x")
    ax.set_title("particle trajectories")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_cumulative(traj: Trajectory, path, times=None) -> None:
    """Cumulative mass profiles at a few snapshot times."""
    rec_times = [rec.time for rec in traj.records]
    if times is None:
        idx = np.unique(np.linspace(0, len(rec_times) - 1, 5).astype(int))
        times = [rec_times[i] for i in idx]
    fig, ax = plt.subplots(figsize=(7.5, 5.0))
    for t in times:
        rec = min(traj.records, key=lambda r: abs(r.time - t))
        M = cumulative_from_particles(rec.state)
        bp = M.breakpoints
        pad = 0.05 * (bp[-1] - bp[0] + 1.0)
        grid = np.concatenate([[bp[0] - pad], np.repeat(bp, 2), [bp[-1] + pad]])
        vals = np.repeat(M.plateaus(), 2)
        ax.plot(grid, vals, lw=1.2, label=f"t = {rec.time:g}")
    ax.set_xlabel("x")
    ax.set_ylabel("M(x)")
    ax.set_title("cumulative mass")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_convergence(table, path) -> None:
    """Log-log distances to the reference level per sample time."""
    fig, ax = plt.subplots(figsize=(6.5, 5.0))
    times = sorted({r.t for r in table.rows})
    for t in times:
        pts = sorted((r.n, r.distance) for r in table.rows if r.t == t)
        ns = [p[0] for p in pts]
        ds = [p[1] for p in pts]
        ax.loglog(ns, ds, "o-", label=f"t = {t:g}")
    ns_all = sorted({r.n for r in table.rows})
    ref = [table.rows[0].distance * ns_all[0] / n for n in ns_all]
    ax.loglog(ns_all, ref, "k--", lw=0.8, label="slope -1")
    ax.set_xlabel("N")
    ax.set_ylabel(f"L1 distance to N = {table.n_ref}")
    ax.set_title("convergence study")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_stability(report, path) -> None:
    """Measured W1 against the two bounds and their minimum."""
    ts = [r.t for r in report.rows]
    fig, ax = plt.subplots(figsize=(6.5, 5.0))
    ax.plot(ts, [r.measured for r in report.rows], "o-", label="measured W1")
    ax.plot(ts, [r.exp_bound for r in report.rows], "s--", label="exp bound")
    ax.plot(ts, [r.linear_bound for r in report.rows], "d--", label="linear bound")
    ax.plot(ts, [r.min_bound for r in report.rows], "k-", lw=0.8, label="min bound")
    ax.set_xlabel("t")
    ax.set_ylabel("W1")
    ax.set_yscale("log")
    ax.set_title(f"stability (w1_0 = {report.w1_0:.3g}, lip_diff = {report.lip_diff:.3g})")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_certificates(cert_rows, entropy_rows, path) -> None:
    """RH residuals and Oleinik margins over time, Kruzkov residuals
    per alpha."""
    fig, axes = plt.subplots(1, 3, figsize=(12.0, 4.0))
    ts = [r.t for r in cert_rows]
    axes[0].semilogy(ts, [max(r.rh_residual, 1e-18) for r in cert_rows], ".", ms=4)
    axes[0].set_xlabel("t")
    axes[0].set_title("RH residual per cluster")
    margins = [r.oleinik_margin for r in cert_rows if np.isfinite(r.oleinik_margin)]
    tsm = [r.t for r in cert_rows if np.isfinite(r.oleinik_margin)]
    if margins:
        axes[1].plot(tsm, margins, ".", ms=4)
    axes[1].axhline(0.0, color="k", lw=0.8)
    axes[1].set_xlabel("t")
    axes[1].set_title("Oleinik margin per cluster")
    if entropy_rows:
        alphas = [row["alpha"] for row in entropy_rows]
        residuals = [row["residual"] for row in entropy_rows]
        axes[2].plot(alphas, residuals, "o", ms=4)
        axes[2].axhline(0.0, color="k", lw=0.8)
        axes[2].set_xlabel("alpha")
        axes[2].set_title("Kruzkov residual")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_kernels(kernels: list[Kernel], path) -> None:
    """Shapes of omega and phi for a list of kernels."""
    fig, axes = plt.subplots(1, 2, figsize=(10.0, 4.0))
    for k in kernels:
        a, b = k.support
        pad = 0.15 * (b - a)
        u = np.linspace(a - pad, b + pad, 801)
        axes[0].plot(u, k.omega(u), label=k.name)
        axes[1].plot(u, k.phi(u), label=k.name)
    axes[0].set_title("omega")
    axes[1].set_title("phi = omega'")
    for ax in axes:
        ax.axhline(0.0, color="k", lw=0.6)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
