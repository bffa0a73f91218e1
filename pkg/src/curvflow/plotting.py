"""Static figures for run directories (written only when requested with ``--plots``)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .estimates import series  # noqa: E402
from .profile import Topology  # noqa: E402


def plot_monitors(rows, path):
    """Three stacked panels: max G, the pinching ratios, and the convexity ratio, against time."""
    t = series(rows, "t")
    fig, axes = plt.subplots(3, 1, figsize=(7, 8), sharex=True)
    axes[0].semilogy(t, series(rows, "max_G"), label="max G")
    axes[0].semilogy(t, series(rows, "min_G"), label="min G")
    axes[0].legend()
    axes[1].plot(t, series(rows, "max_H_over_Grho"), label="max H/G_rho")
    axes[1].plot(t, series(rows, "H_over_G1_at_maxG"), label="H/G_1 at max G")
    axes[1].legend()
    axes[2].plot(t, series(rows, "max_neg_l1_over_Grho"), label="max -lambda_1/G_rho")
    axes[2].plot(t, series(rows, "max_neg_l1_over_Grho_hi"), label="(high-curvature nodes)")
    axes[2].axhline(0.0, color="0.5", lw=0.5)
    axes[2].legend()
    axes[2].set_xlabel("t")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_profiles(snapshots, path, max_curves=8):
    """Profile curves of selected snapshots (meridian section for polar profiles)."""
    pick = np.unique(np.linspace(0, len(snapshots) - 1, min(max_curves, len(snapshots))).astype(int))
    fig, ax = plt.subplots(figsize=(7, 4))
    for i in pick:
        mesh = snapshots[i].mesh
        if mesh.topology is Topology.POLAR:
            x, y = mesh.u * np.cos(mesh.x), mesh.u * np.sin(mesh.x)
            ax.set_aspect("equal")
        else:
            x, y = mesh.x, mesh.u
        ax.plot(x, y, lw=1, label=f"t={snapshots[i].t:.4g}")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_sweep(table, path):
    """Terminal convexity ratio and decay exponent against rho."""
    rho = [r["rho"] for r in table]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    axes[0].semilogx(rho, [r["final_neg_l1_over_Grho"] for r in table], "o-")
    axes[0].set_ylabel("final windowed max -lambda_1/G_rho")
    axes[1].semilogx(rho, [r["sigma"] for r in table], "o-")
    axes[1].set_ylabel("fitted sigma")
    for ax in axes:
        ax.set_xlabel("rho")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_run_figures(out_dir, result):
    fig_dir = Path(out_dir) / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    plot_monitors(result.monitors, fig_dir / "monitors.png")
    plot_profiles(result.snapshots, fig_dir / "profiles.png")
    return fig_dir
