"""Report figures rendered to files next to the delimited reports."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .metrics import roc_points  # noqa: E402


def save_loss_curve(history, path, val_history=None) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(history)), history, marker=".", label="training loss")
    if val_history:
        ax.plot(range(len(val_history)), val_history, marker=".", label="validation loss")
        ax.legend()
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss")
    ax.set_title("Training loss")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_roc_curves(scores, labels, aucs, path) -> None:
    """One ROC curve per class with a defined AUC."""
    fig, ax = plt.subplots(figsize=(5.5, 5))
    for c, auc in enumerate(aucs):
        if auc is None:
            continue
        fpr, tpr = roc_points(scores[:, c], labels == c)
        ax.plot(fpr, tpr, label=f"class {c} (AUC {auc:.3f})")
    ax.plot([0, 1], [0, 1], "k--", linewidth=0.8, label="chance")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title("One-vs-rest ROC")
    ax.legend(loc="lower right", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_fold_accuracy(fold_accuracies, path, mean=None, std=None) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    folds = range(len(fold_accuracies))
    ax.bar(folds, fold_accuracies, color="tab:blue", alpha=0.8)
    if mean is not None:
        label = f"mean {mean:.3f}" + (f" ± {std:.3f}" if std is not None else "")
        ax.axhline(mean, color="tab:red", linestyle="--", linewidth=1, label=label)
        ax.legend()
    ax.set_xticks(list(folds))
    ax.set_xlabel("fold")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1.05)
    ax.set_title("Per-fold accuracy")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
