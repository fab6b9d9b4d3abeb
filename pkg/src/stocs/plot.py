"""Two-panel plot of bike availability per station under two rate regimes."""
from __future__ import annotations

import csv


def read_summary(path) -> tuple[list[float], dict[str, list[float]]]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    times = [float(r["time"]) for r in rows]
    cols = {k[:-5]: [float(r[k]) for r in rows] for k in rows[0] if k.endswith("_mean")}
    return times, cols


def plot_comparison(left, right, out, left_title="resource-dependent rates",
                    right_title="constant rates"):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(11, 4), sharey=True)
    for ax, path, title in ((axes[0], left, left_title), (axes[1], right, right_title)):
        times, cols = read_summary(path)
        for name, values in cols.items():
            if name.startswith("bikes_p"):
                ax.plot(times, values, lw=0.8, alpha=0.7)
        if "bikes_mean" in cols:
            ax.plot(times, cols["bikes_mean"], "k-", lw=2, label="mean over stations")
        ax.set_title(title)
        ax.set_xlabel("time")
        ax.legend(loc="upper right")
    axes[0].set_ylabel("available bikes")
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
