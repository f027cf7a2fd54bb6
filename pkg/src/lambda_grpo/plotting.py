"""Matplotlib figures for training diagnostics and weight curves."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .weighting import DEFAULT_SCALE_R, lambda_weights  # noqa: E402

PANELS = (
    ("mean_entropy", "token entropy (nats)", "entropy.png"),
    ("mean_response_len", "response length (tokens)", "response_length.png"),
    ("accuracy", "training accuracy", "accuracy.png"),
    ("lambda", r"$\lambda$", "lambda.png"),
)


def configure_plt():
    plt.rcParams.update({
        "axes.labelsize": 11,
        "font.size": 11,
        "legend.fontsize": 9,
        "xtick.labelsize": 9,
        "ytick.labelsize": 9,
        "figure.figsize": (5.5, 3.6),
        "axes.spines.top": False,
        "axes.spines.right": False,
    })


def plot_metrics(runs: dict, out_dir, fmt: str = "png") -> list[Path]:
    """One figure per diagnostic, every run overlaid.

    ``runs`` maps a label to a column dict as returned by ``read_metrics``.
    """
    configure_plt()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for column, ylabel, fname in PANELS:
        fig, ax = plt.subplots()
        for label, cols in runs.items():
            if len(cols["step"]) == 0:
                continue
            ax.plot(cols["step"], cols[column], label=label, lw=1.4)
        ax.set_xlabel("step")
        ax.set_ylabel(ylabel)
        if len(runs) > 1:
            ax.legend(frameon=False)
        fig.tight_layout()
        path = out_dir / Path(fname).with_suffix("." + fmt)
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def plot_lambda_effect(path, scale_r: float = DEFAULT_SCALE_R, lambdas=(-2, -1, 0, 1, 2)) -> Path:
    """Weight of one response against its standardized length, for several lambda.

    The rest of the group is held at z = 0 (G = 8), so the curve shows how
    lambda tilts the softmax toward long or short responses.
    """
    configure_plt()
    z = np.linspace(-3, 3, 121)
    G = 8
    fig, ax = plt.subplots()
    for lam in lambdas:
        f = []
        for zi in z:
            h = np.ones(G)
            h[0] = max(1 + scale_r * zi, 1e-3)
            f.append(lambda_weights(h, lam).f[0])
        ax.plot(z, f, label=fr"$\lambda={lam:g}$", lw=1.4)
    ax.set_xlabel("standardized length z")
    ax.set_ylabel("weight f")
    ax.legend(frameon=False)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
