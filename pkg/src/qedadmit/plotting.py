"""Figures rendered from the CLI's CSV products.

matplotlib is an optional extra (``pip install qedadmit[plot]``) and is
imported only when a figure is requested. The Agg backend is forced so
rendering works without a display.
"""
from __future__ import annotations

import csv
import math
from typing import List, Sequence

from .errors import DomainError


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise ImportError("plotting needs matplotlib: pip install 'qedadmit[plot]'") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _num(v):
    if v is None or v == "":
        return math.nan
    return float(v)


def _column(rows: Sequence[Sequence], i: int) -> List[float]:
    return [_num(r[i]) for r in rows]


def plot_gap(rows: Sequence[Sequence], path: str):
    """Two panels: optimal vs rounded threshold, and the relative gap, against ``s``.

    ``rows`` follow the gap CSV header ``s, tau_star, tau_qed, R_tau_star, R_tau_qed, rel_gap``.
    """
    plt = _pyplot()
    s = _column(rows, 0)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(s, _column(rows, 1), "o", ms=3, label=r"$\tau^*$")
    ax1.plot(s, _column(rows, 2), "-", lw=1, label=r"$\lfloor\eta^*\sqrt{s}\rfloor$")
    ax1.set_xlabel("s")
    ax1.set_ylabel("threshold")
    ax1.legend()
    gap = _column(rows, 5)
    pos = [(a, g) for a, g in zip(s, gap) if g > 0]
    if pos:
        ax2.semilogy(*zip(*pos), "o", ms=3)
    ax2.set_xlabel("s")
    ax2.set_ylabel("relative gap (nonzero entries)")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_sweep(rows: Sequence[Sequence], path: str):
    """Optimal threshold with its bounds and asymptotes against ``gamma``.

    ``rows`` follow the sweep CSV header; only the first eight columns are read.
    """
    plt = _pyplot()
    g = _column(rows, 0)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(g, _column(rows, 1), "-", color="k", label=r"$\eta^*$")
    ax.plot(g, _column(rows, 3), "--", label=r"$\eta_{\min}$")
    ax.plot(g, _column(rows, 4), "--", label=r"$\eta_{\max}$")
    ax.plot(g, _column(rows, 5), ":", label=r"$\gamma\to-\infty$")
    ax.plot(g, _column(rows, 6), ":", label=r"$\gamma\to\infty$")
    ax.set_xlabel(r"$\gamma$")
    ax.set_ylabel(r"$\eta$")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_csv(kind: str, csv_path: str, out_path: str):
    """Render a figure of ``kind`` ('gap' or 'sweep') from a CSV written by the CLI."""
    try:
        with open(csv_path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DomainError(f"cannot read {csv_path}: {exc}") from exc
    if not rows:
        raise DomainError("empty CSV")
    body = rows[1:]
    try:
        if kind == "gap":
            plot_gap(body, out_path)
        elif kind == "sweep":
            plot_sweep(body, out_path)
        else:
            raise DomainError(f"unknown figure kind {kind!r}")
    except (ValueError, IndexError) as exc:
        if isinstance(exc, DomainError):
            raise
        raise DomainError(f"CSV does not match the {kind} layout") from exc
