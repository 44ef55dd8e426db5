"""SVG rendering of the report series (trend lines, heatmap, similarity
scatter, word-count bars)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

# Deterministic SVG output: stable element ids, no embedded creation date.
plt.rcParams["svg.hashsalt"] = "protolink"

_SAVE_KWARGS = {"format": "svg", "metadata": {"Date": None}}


def plot_topk_trends(rows, path) -> None:
    """Line plot of R@1/R@5 against the top-k used for reranking.

    ``rows`` are dicts with method, k, interpretation, r1, r5; only the
    alias-level interpretation is drawn.
    """
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharex=True)
    methods = sorted({row["method"] for row in rows})
    for metric, ax in zip(("r1", "r5"), axes):
        for method in methods:
            series = sorted((int(r["k"]), float(r[metric])) for r in rows
                            if r["method"] == method and r.get("interpretation", "alias") == "alias")
            if series:
                ax.plot([k for k, _ in series], [v for _, v in series], marker="o", label=method)
        ax.set_xlabel("top-k candidates")
        ax.set_ylabel(metric.upper().replace("R", "R@"))
        ax.grid(True, alpha=0.3)
    axes[0].legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def plot_transition_heatmap(counts, row_percent, labels, path) -> None:
    """FROM x TO heatmap of outcome transitions, annotated with row percents."""
    counts = np.asarray(counts)
    row_percent = np.asarray(row_percent)
    fig, ax = plt.subplots(figsize=(5, 4))
    image = ax.imshow(row_percent, cmap="Blues", vmin=0, vmax=100)
    ax.set_xticks(range(len(labels)), labels)
    ax.set_yticks(range(len(labels)), labels)
    ax.set_xlabel("TO")
    ax.set_ylabel("FROM")
    for i in range(len(labels)):
        for j in range(len(labels)):
            ax.text(j, i, f"{row_percent[i, j]:.1f}%\n({counts[i, j]})",
                    ha="center", va="center", fontsize=8)
    fig.colorbar(image, ax=ax, label="% of FROM row")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def plot_article_similarity(diffs, smoothed_r1, regions, path) -> None:
    """Scatter of per-article similarity gap with the smoothed recall curve."""
    diffs = np.asarray(diffs, dtype=float)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    x = np.arange(len(diffs))
    colors = ["tab:green" if r == "A" else "tab:red" if r == "B" else "lightgray"
              for r in regions]
    ax.scatter(x, diffs, s=6, c=colors, label="gold minus predicted similarity")
    ax.set_xlabel("articles ordered by similarity gap")
    ax.set_ylabel("similarity gap")
    ax2 = ax.twinx()
    ax2.plot(x, smoothed_r1, color="tab:blue", label="smoothed R@1")
    ax2.set_ylabel("smoothed per-article R@1")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def plot_wordcount_bars(rows, path) -> None:
    """Grouped bars of exact+related rate per mention word count and method."""
    methods = sorted({row["method"] for row in rows})
    words = sorted({int(row["words"]) for row in rows})
    fig, ax = plt.subplots(figsize=(8, 4))
    width = 0.8 / max(len(methods), 1)
    for slot, method in enumerate(methods):
        values = []
        for count in words:
            match = [r for r in rows if r["method"] == method and int(r["words"]) == count]
            values.append(float(match[0]["exact_rate"]) + float(match[0]["related_rate"])
                          if match else 0.0)
        offsets = [w + (slot - (len(methods) - 1) / 2) * width for w in range(len(words))]
        ax.bar(offsets, values, width=width, label=method)
    ax.set_xticks(range(len(words)), [str(w) for w in words])
    ax.set_xlabel("mention word count")
    ax.set_ylabel("exact + related rate")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
