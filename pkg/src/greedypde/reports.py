"""Report serialization: CSV, aligned text tables, and figures.

CSV files are UTF-8 with LF line endings and %.6e numeric formatting:
a header row, the neuron count, the error columns in table order, then the
order columns (blank where undefined).  The text table mirrors the paper's
layout with two-significant-digit errors and two-decimal orders.  The
figure path renders a log-log convergence plot next to the delimited
output; the adaptivity preset additionally renders its breakpoint plot.
"""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import ConvergenceReport, fitted_order  # noqa: E402


def write_csv(report: ConvergenceReport, path) -> None:
    lines = []
    header = ["n"] + list(report.columns)
    header += [f"order_{c}" for c in report.columns]
    lines.append(",".join(header))
    for n, errs, orders in report.rows:
        cells = [str(int(n))]
        cells += [f"{errs[c]:.6e}" for c in report.columns]
        cells += [
            f"{orders[c]:.6e}" if c in orders else "" for c in report.columns
        ]
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_text(report: ConvergenceReport, path) -> None:
    cols = list(report.columns)
    header = ["n"]
    for c in cols:
        header += [c, "order"]
    widths = [max(len(h), 10) for h in header]
    lines = []
    for key, value in sorted(report.metadata.items()):
        lines.append(f"# {key}: {value}")
    lines.append("  ".join(h.rjust(w) for h, w in zip(header, widths)))
    for n, errs, orders in report.rows:
        cells = [str(int(n))]
        for c in cols:
            cells.append(f"{errs[c]:.2e}")
            cells.append(f"{orders[c]:.2f}" if c in orders else "-")
        lines.append("  ".join(s.rjust(w) for s, w in zip(cells, widths)))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def render_convergence_figure(report: ConvergenceReport, path) -> None:
    ns = np.array([row[0] for row in report.rows], dtype=float)
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    plotted = False
    for c in report.columns:
        errs = np.array([row[1][c] for row in report.rows])
        if np.all(errs <= 0):
            continue
        order = fitted_order(ns, errs)
        label = c if np.isnan(order) else f"{c} (order {order:.2f})"
        ax.loglog(ns, errs, "o-", label=label)
        plotted = True
    ax.set_xlabel("neurons n")
    ax.set_ylabel("error")
    ax.set_title(report.metadata.get("preset", ""))
    ax.grid(True, which="both", alpha=0.3)
    if plotted:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_breakpoints_csv(breakpoints, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("breakpoint\n")
        for b in breakpoints:
            fh.write(f"{b:.6e}\n")


def render_breakpoints_figure(breakpoints, exact_curve, domain, path) -> None:
    lo, hi = domain
    xs = np.linspace(lo, hi, 800)
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    if exact_curve is not None:
        ax.plot(xs, exact_curve.value(xs[:, None]), lw=1.2,
                label="exact solution")
    if len(breakpoints):
        ax.plot(breakpoints, np.zeros(len(breakpoints)), "|", ms=14,
                color="tab:red", label="breakpoints")
    ax.set_xlabel("x")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
