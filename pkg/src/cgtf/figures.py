"""Figure rendering for experiment reports (file output only, Agg backend)."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "convergence_figure",
    "nmse_vs_snr_figure",
    "coverage_figure",
    "roc_figure",
]


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def convergence_figure(report, path) -> None:
    """Objective and per-family residual maxima against the iteration count."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    its = np.arange(report.iterations + 1)
    ax1.semilogy(its, report.objective_history, color="tab:blue")
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("objective")
    ax1.set_title("fit objective")

    its = np.arange(1, report.iterations + 1)
    series = [
        ("factor copy gap", report.primal_gap_bar),
        ("nonneg copy gap", report.primal_gap_tilde),
        ("weight copy gap", report.primal_gap_d),
        ("dual step", report.dual_step_bar),
    ]
    for label, hist in series:
        values = hist.max(axis=1)
        ax2.semilogy(its, np.maximum(values, 1e-300), label=label)
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("residual (max over modes)")
    ax2.set_title("consensus residuals")
    ax2.legend(fontsize=8)
    _save(fig, path)


def nmse_vs_snr_figure(rows, path) -> None:
    """rows: (snr_db, nmse_coupled, nmse_baseline) triples."""
    rows = sorted(rows)
    snr = [r[0] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.semilogy(snr, [r[1] for r in rows], "o-", label="coupled")
    ax.semilogy(snr, [r[2] for r in rows], "s--", label="tensor-only baseline")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("NMSE on missing entries")
    ax.legend()
    _save(fig, path)


def coverage_figure(curves, path) -> None:
    """curves: {name: list of CoveragePoint} per graph mode."""
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for name, pts in curves.items():
        ax.plot([p.alpha for p in pts], [p.coverage for p in pts], "o-", label=name)
    ax.set_xlabel("max conductance")
    ax.set_ylabel("coverage")
    ax.set_ylim(-0.05, 1.05)
    ax.legend()
    _save(fig, path)


def roc_figure(curves, path) -> None:
    """curves: {name: list of RocPoint}."""
    fig, ax = plt.subplots(figsize=(4.2, 4))
    for name, pts in curves.items():
        ax.plot([p.fpr for p in pts], [p.tpr for p in pts], "o-", label=name)
    ax.plot([0, 1], [0, 1], ":", color="gray", linewidth=1)
    ax.set_xlabel("false-alarm rate")
    ax.set_ylabel("detection rate")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8)
    _save(fig, path)
