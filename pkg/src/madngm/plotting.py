"""Report figures: solution profiles and MSE histories."""

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

golden_mean = (math.sqrt(5) - 1.0) / 2.0
fig_width = 3.4

params = {
    "axes.labelsize": 9,
    "font.size": 8,
    "font.family": "serif",
    "mathtext.fontset": "stix",
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.0,
    "figure.dpi": 150,
    "savefig.bbox": "tight",
}

# PNG metadata otherwise carries the matplotlib version string
_SAVE_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, metadata=_SAVE_META)
    plt.close(fig)


def plot_profiles(x, ref_fields, pred_fields, times, path, title=""):
    """Reference vs predicted 1D profiles, one panel per time."""
    with matplotlib.rc_context(params):
        n = len(times)
        fig, axes = plt.subplots(1, n, figsize=(fig_width * n / 1.6, fig_width * golden_mean), sharey=True)
        axes = np.atleast_1d(axes)
        order = np.argsort(x)
        for ax, t, r, p in zip(axes, times, ref_fields, pred_fields):
            ax.plot(x[order], r[order], "k-", label="reference")
            ax.plot(x[order], p[order], "r--", label="prediction")
            ax.set_title(f"t = {t:g}")
            ax.set_xlabel("x")
        axes[0].set_ylabel("u")
        axes[0].legend(loc="best")
        if title:
            fig.suptitle(title, y=1.04)
        _save(fig, path)


def plot_fields_2d(points, ref_fields, pred_fields, times, path):
    """Reference (top row) and predicted (bottom row) 2D fields."""
    n_side = int(round(math.sqrt(points.shape[0])))
    with matplotlib.rc_context(params):
        n = len(times)
        fig, axes = plt.subplots(2, n, figsize=(2.2 * n, 4.2), squeeze=False)
        for j, t in enumerate(times):
            for i, data in enumerate((ref_fields[j], pred_fields[j])):
                ax = axes[i, j]
                im = ax.imshow(
                    data.reshape(n_side, n_side).T, origin="lower", extent=(0, 1, 0, 1), cmap="viridis"
                )
                ax.set_title(("ref" if i == 0 else "pred") + f" t={t:g}")
                fig.colorbar(im, ax=ax, fraction=0.046)
        _save(fig, path)


def plot_mse_history(series: dict, path, ylabel="MSE"):
    """Semilog MSE against time, one curve per mode label."""
    with matplotlib.rc_context(params):
        fig, ax = plt.subplots(figsize=(fig_width, fig_width * golden_mean))
        for label, (times, values) in series.items():
            ax.semilogy(times, np.maximum(values, 1e-300), marker="o", label=label)
        ax.set_xlabel("t")
        ax.set_ylabel(ylabel)
        ax.legend(loc="best")
        ax.grid(True, which="both", alpha=0.3)
        _save(fig, path)


def plot_loss_history(losses, path, label="loss"):
    with matplotlib.rc_context(params):
        fig, ax = plt.subplots(figsize=(fig_width, fig_width * golden_mean))
        ax.semilogy(np.arange(len(losses)), losses)
        ax.set_xlabel("iteration")
        ax.set_ylabel(label)
        _save(fig, path)
