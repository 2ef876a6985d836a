"""Optional PNG figures written next to the CSV outputs (``--figures``)."""
from __future__ import annotations

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
}

# Matplotlib stamps its version and a timestamp otherwise.
PNG_METADATA = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)


def training_curve(report, path) -> None:
    epochs = range(1, len(report.mean_loss) + 1)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(epochs, report.mean_loss, color="C0", label="mean loss")
        ax.set_xlabel("epoch")
        ax.set_ylabel("mean loss")
        ax2 = ax.twinx()
        ax2.plot(epochs, report.clean_accuracy, color="C1", label="train accuracy")
        ax2.set_ylabel("accuracy")
        ax2.grid(False)
        fig.legend(loc="upper center", ncol=2)
        _save(fig, path)


def sweep_figure(rows, axis: str, path, seconds=None) -> None:
    """Robust accuracy (and mean Krylov dimension) against the swept value.

    ``rows`` are dicts with ``value``, ``model``, ``robust_accuracy``, ``mean_m``.
    """
    by_model = defaultdict(list)
    for row in rows:
        by_model[row["model"]].append(row)
    log_axis = axis in ("eta", "tau")
    with plt.rc_context(STYLE):
        fig, (ax_acc, ax_m) = plt.subplots(1, 2, figsize=(8.0, 3.2))
        for k, (model, items) in enumerate(sorted(by_model.items())):
            items = sorted(items, key=lambda r: r["value"])
            xs = [r["value"] for r in items]
            ax_acc.plot(xs, [r["robust_accuracy"] for r in items], "o-", color=f"C{k}", label=model)
            ax_m.plot(xs, [r["mean_m"] for r in items], "s--", color=f"C{k}")
        for ax in (ax_acc, ax_m):
            ax.set_xlabel(axis)
            if log_axis:
                ax.set_xscale("log")
        ax_acc.set_ylabel("robust accuracy")
        ax_m.set_ylabel("mean Krylov dimension m")
        if seconds:
            ax_t = ax_m.twinx()
            pts = sorted(seconds.items())
            ax_t.plot([p[0] for p in pts], [p[1] for p in pts], ":", color="grey")
            ax_t.set_ylabel("seconds / example", color="grey")
            ax_t.grid(False)
        ax_acc.legend()
        _save(fig, path)


def evaluation_figure(report, path) -> None:
    names = list(report.robust_accuracy)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        values = [report.clean_accuracy] + [report.robust_accuracy[n] for n in names]
        ax.bar(["clean", *names], values, color=["grey"] + [f"C{k}" for k in range(len(names))])
        ax.set_ylim(0, 1)
        ax.set_ylabel("accuracy")
        _save(fig, path)
