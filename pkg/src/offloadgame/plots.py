"""Figure rendering for the experiment reports.

Every renderer takes plain row data (as written to the CSVs) and writes a
PNG next to the delimited output.
"""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_MARKERS = ["o", "s", "^", "v", "D", "x"]


def _save(fig, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_trace(trace_rows, path: str) -> str:
    """Per-device response time against the sweep index.

    trace_rows: iterable of (iteration, device, T, *rest).
    """
    series = {}
    for row in trace_rows:
        k, i, T = int(row[0]), int(row[1]), float(row[2])
        series.setdefault(i, []).append((k, T))
    fig, ax = plt.subplots(figsize=(6, 4))
    for i in sorted(series):
        pts = sorted(series[i])
        ax.plot([p[0] for p in pts], [p[1] for p in pts],
                marker=_MARKERS[i % len(_MARKERS)], markersize=3,
                label=f"device {i + 1}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("average response time")
    ax.grid(True, alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_sweep(rows, path: str, xlabel: str = "scale coefficient c") -> str:
    """Response-time curves against the sweep coefficient.

    rows: iterable of dicts with keys 'c' and 'T_i' (1-based device index).
    """
    rows = list(rows)
    if not rows:
        raise ValueError("no sweep rows to plot")
    devices = sorted(int(k[2:]) for k in rows[0] if k.startswith("T_"))
    fig, ax = plt.subplots(figsize=(6, 4))
    for d in devices:
        xs = [r["c"] for r in rows if r.get(f"T_{d}") is not None]
        ys = [r[f"T_{d}"] for r in rows if r.get(f"T_{d}") is not None]
        ax.plot(xs, ys, marker=_MARKERS[(d - 1) % len(_MARKERS)],
                label=f"device {d}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("average response time")
    ax.grid(True, alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_validation(rows, path: str) -> str:
    """Analytic values against simulated confidence intervals.

    rows: iterable of dicts with keys kind, index, analytic, simulated,
    ci_half_width, status.
    """
    rows = [r for r in rows if r["status"] != "skipped"
            and r["simulated"] is not None]
    fig, ax = plt.subplots(figsize=(6, 4))
    if rows:
        labels = [f"{r['kind']}[{r['index']}]" for r in rows]
        x = range(len(rows))
        ax.errorbar(x, [r["simulated"] for r in rows],
                    yerr=[r["ci_half_width"] for r in rows],
                    fmt="o", capsize=4, label="simulated (99% CI)")
        ax.plot(x, [r["analytic"] for r in rows], "x", markersize=9,
                label="analytic")
        ax.set_xticks(list(x))
        ax.set_xticklabels(labels, rotation=30, ha="right")
        ax.legend()
    ax.set_ylabel("value")
    ax.grid(True, alpha=0.3)
    return _save(fig, path)
