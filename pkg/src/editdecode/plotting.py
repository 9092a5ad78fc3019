"""Report figures written to image files (non-interactive backend)."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

KINDS = ("insert", "delete", "subst")


def _save(fig, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_reports(reports: dict, path: str) -> str:
    """SARI components and satisfaction rates, one bar group per system."""
    names = list(reports)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    comps = ("overall", "add", "keep", "delete")
    x = np.arange(len(comps))
    width = 0.8 / max(1, len(names))
    for k, name in enumerate(names):
        s = reports[name].sari
        vals = [getattr(s, c) if s else 0.0 for c in comps]
        ax1.bar(x + k * width, vals, width, label=name or "system")
    ax1.set_xticks(x + width * (len(names) - 1) / 2, ["SARI", "add", "keep", "del"])
    ax1.set_ylim(0, 100)
    ax1.set_title("SARI")
    ax1.legend()

    x = np.arange(len(KINDS))
    for k, name in enumerate(names):
        sat = reports[name].satisfaction or {}
        ax2.bar(x + k * width, [sat.get(kind) or 0.0 for kind in KINDS], width, label=name or "system")
    ax2.set_xticks(x + width * (len(names) - 1) / 2, list(KINDS))
    ax2.set_ylim(0, 100)
    ax2.set_title("constraints satisfied (%)")
    return _save(fig, path)


def plot_tuning(result, path: str) -> str:
    """Validation SARI per trial with the running best, plus score against each weight."""
    scores = np.array([t.score for t in result.trials])
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    axes[0].plot(scores, ".", alpha=0.6, label="trial")
    axes[0].plot(np.maximum.accumulate(scores), "-", label="best so far")
    axes[0].set_xlabel("trial")
    axes[0].set_ylabel("validation SARI")
    axes[0].legend()
    for key, marker in (("insert", "o"), ("delete", "s"), ("subst", "^")):
        axes[1].scatter([t.weights.to_dict()[key] for t in result.trials], scores, marker=marker, s=14,
                        alpha=0.6, label=key)
    axes[1].scatter([t.delta / 2 for t in result.trials], scores, marker="x", s=14, alpha=0.6,
                    label="delta / 2")
    axes[1].set_xlabel("weight")
    axes[1].legend()
    return _save(fig, path)
