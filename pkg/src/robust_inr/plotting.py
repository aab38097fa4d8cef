"""Figures written next to the CSV reports."""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "savefig.bbox": "tight",
    # keep PNG bytes stable across reruns
    "svg.hashsalt": "robust-inr",
}


def _label(family: str, lam: float) -> str:
    return family if family in ("mse", "noise_aware") else f"{family} (lambda={lam:g})"


def plot_sweep(summary: list[dict], out_dir) -> list[Path]:
    """One PSNR-vs-strength panel per noise family, one line per loss cell."""
    out = Path(out_dir)
    paths = []
    families = sorted({s["noise_family"] for s in summary if s["noise_family"] not in ("none", "error")})
    for nf in families:
        rows = [s for s in summary if s["noise_family"] == nf and math.isfinite(s["mean_psnr_db"])]
        cells = sorted({(s["loss_family"], s["lambda"]) for s in rows})
        with plt.rc_context(STYLE):
            fig, ax = plt.subplots()
            for fam, lam in cells:
                pts = sorted((s["strength"], s["mean_psnr_db"], s["std_psnr_db"]) for s in rows
                             if (s["loss_family"], s["lambda"]) == (fam, lam))
                xs, ys, es = zip(*pts)
                ax.errorbar(xs, ys, yerr=es, marker="o", ms=3, capsize=2, label=_label(fam, lam))
            ax.set_xscale("log")
            ax.set_xlabel("noise strength")
            ax.set_ylabel("PSNR (dB)")
            ax.set_title(nf)
            ax.legend()
            path = out / f"psnr_vs_strength_{nf}.png"
            fig.savefig(path, metadata={"Software": None})
            plt.close(fig)
        paths.append(path)
    return paths


def plot_training(records, path) -> Path:
    """Loss curve (data term and total) on a log scale."""
    steps = [r.step for r in records]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(steps, [r.data_term for r in records], label="reconstruction")
        if any(r.total != r.data_term for r in records):
            ax.plot(steps, [r.total for r in records], label="total", ls="--")
        ax.set_yscale("log")
        ax.set_xlabel("step")
        ax.set_ylabel("loss")
        ax.legend()
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
    return Path(path)
