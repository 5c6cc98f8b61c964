"""Figure and CSV export for finished runs.

Per state: a wavefunction overlay (predicted samples as dots over the
closed-form curve) as SVG plus the same data as CSV, a log-scale loss
history, and a fidelity history.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from . import report, runio
from .losses import LOSS_TERMS

_EXACT_STYLE = dict(color="tab:blue", lw=1.5)
_PRED_STYLE = dict(color="tab:red", s=6, zorder=3)


def export_plots(run_dir) -> list[Path]:
    """Write every figure/CSV for a run; returns the created paths."""
    run_dir = Path(run_dir)
    result = report.evaluate_run(run_dir)
    created = []
    for m in result["metrics"]:
        sdir = runio.state_dir(run_dir, m.index)
        created.append(_overlay_csv(sdir / "wavefunction.csv", m))
        created.append(_overlay_svg(sdir / "wavefunction.svg", m,
                                    result["system"]))
        history = runio.read_history(run_dir, m.index)
        created.append(_loss_history_svg(sdir / "loss_history.svg", history, m.label))
        created.append(_fidelity_history_svg(sdir / "fidelity_history.svg",
                                             history, m.label))
    return created


def _overlay_csv(path, m) -> Path:
    channels = m.aligned.shape[0]
    header = ["x", "psi_pinn_re"]
    if channels == 2:
        header += ["psi_pinn_im"]
    header += ["psi_exact_re"]
    if channels == 2:
        header += ["psi_exact_im"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for j, x in enumerate(m.exact.grid):
            row = [x] + [m.aligned[c, j] for c in range(channels)] \
                + [m.exact.samples[c, j] for c in range(channels)]
            writer.writerow([repr(float(v)) for v in row])
    return path


def _overlay_svg(path, m, system: str) -> Path:
    channels = m.aligned.shape[0]
    fig, axes = plt.subplots(1, channels, figsize=(5 * channels, 3.4), squeeze=False)
    names = ["Re psi"] if channels == 1 else ["Re psi", "Im psi"]
    for c, ax in enumerate(axes[0]):
        ax.plot(m.exact.grid, m.exact.samples[c], label="exact", **_EXACT_STYLE)
        ax.scatter(m.exact.grid[::4], m.aligned[c, ::4], label="network",
                   **_PRED_STYLE)
        ax.set_xlabel("theta" if system == "ring" else "x")
        ax.set_ylabel(names[c])
        ax.legend(loc="upper right", fontsize=8)
    fig.suptitle(f"state n={m.label:+d}: fidelity {m.fidelity:.6f}")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def _loss_history_svg(path, history, label: int) -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    epochs = [row["epoch"] for row in history]
    ax.plot(epochs, [row["total"] for row in history], label="total", lw=1.4)
    for term in LOSS_TERMS:
        vals = [row.get(f"loss_{term}") for row in history]
        if any(v not in (None, 0.0) for v in vals):
            ax.plot(epochs, vals, label=term, lw=0.8, alpha=0.8)
    ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(f"loss history, state n={label:+d}")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def _fidelity_history_svg(path, history, label: int) -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    pts = [(row["epoch"], row["fidelity"]) for row in history
           if row.get("fidelity") is not None]
    if pts:
        ax.plot([p[0] for p in pts], [p[1] for p in pts], lw=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("fidelity")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(f"fidelity history, state n={label:+d}")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
