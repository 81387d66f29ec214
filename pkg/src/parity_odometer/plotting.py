"""PNG figures rendered next to the CSV outputs (Agg backend, no display)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

META = {"Software": None}


def _save(fig, path: Path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=META)
    plt.close(fig)


def plot_orbit(path: Path, steps: Sequence[int], cocycles: Sequence[float]) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.step(steps, cocycles, where="post")
    ax.set_xlabel("step")
    ax.set_ylabel("cocycle / log q")
    ax.set_title("cocycle along the forward orbit")
    _save(fig, path)


def plot_distribution(path: Path, values: Sequence[float], probs: Sequence[float], b: float | None) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.vlines(values, 0, probs, linewidth=1)
    if b is not None:
        for x in (-b, b):
            ax.axvline(x, color="tab:red", linestyle="--", linewidth=1)
    ax.set_xlabel("centered statistic / log q")
    ax.set_ylabel("probability")
    _save(fig, path)


def plot_kset(path: Path, series: dict[str, tuple[Sequence[float], Sequence[float]]]) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for name, (xs, ys) in sorted(series.items()):
        ax.plot(xs, ys, marker="o", label=name)
    ax.set_xlabel("s")
    ax.set_ylabel("K-set measure")
    ax.set_ylim(-0.05, 1.05)
    ax.legend()
    _save(fig, path)


def plot_ratios(path: Path, ratios: Sequence[float]) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.hist(ratios, bins=40, range=(0.5, 1.0))
    ax.axvline(0.5, color="tab:red", linestyle="--", linewidth=1)
    ax.set_xlabel("mu(Z_E0) / mu(Z_E)")
    ax.set_ylabel("instances")
    _save(fig, path)


def plot_margins(path: Path, labels: Sequence[str], margins: Sequence[float]) -> None:
    fig, ax = plt.subplots(figsize=(7, 3.5))
    colors = ["tab:green" if m > 0 else "tab:red" for m in margins]
    ax.bar(range(len(labels)), margins, color=colors)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=60, fontsize=7)
    ax.set_ylabel("log(lhs / rhs)")
    _save(fig, path)
