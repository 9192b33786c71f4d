"""Render study CSVs to matplotlib figures saved alongside the data.

The simulate report path is CSV-first; these helpers turn a result file into
a PNG next to it (``results.csv`` -> ``results.png``) so a run leaves both
the machine-readable rows and a ready figure.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .exceptions import DataFormatError

__all__ = ["render_study_figure"]


def _read_rows(csv_path: Path) -> list[dict]:
    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataFormatError(f"{csv_path}: no data rows")
    return rows


def _floats(rows: list[dict], key: str) -> list[float]:
    return [float(r[key]) for r in rows]


def _plot_sweep(rows: list[dict], ax, x_key: str, x_label: str) -> None:
    xs = _floats(rows, x_key)
    ax.plot(xs, _floats(rows, "mse_rescaled"), "o-", color="tab:blue", label="empirical MSE")
    ax.errorbar(
        xs, _floats(rows, "mse_rescaled"), yerr=[2 * v for v in _floats(rows, "mse_se")],
        fmt="none", ecolor="tab:blue", alpha=0.5, capsize=3,
    )
    ax.plot(xs, _floats(rows, "bound_rescaled"), "s--", color="tab:red", label="upper bound")
    ax.plot(xs, _floats(rows, "asymptote"), color="tab:green", label="asymptotic")
    ax.set_xlabel(x_label)
    ax.set_ylabel("rescaled MSE")
    ax.legend()


def _plot_hard(rows: list[dict], ax) -> None:
    xs = _floats(rows, "omega")
    ax.plot(xs, _floats(rows, "log_increase_empirical"), "o-.", color="tab:blue", label="empirical")
    ax.plot(xs, _floats(rows, "log_increase_prediction"), "s--", color="tab:red", label="prediction")
    ax.plot(xs, _floats(rows, "asymptote_log"), color="tab:green", label="asymptotic")
    ax.set_xlabel("noise weight")
    ax.set_ylabel("log MSE increase")
    ax.legend()


def _plot_corrected(rows: list[dict], fig) -> None:
    kde = [r for r in rows if r["row_type"] == "kde"]
    alphas = sorted({float(r["alpha1"]) for r in kde})
    if not alphas:
        raise DataFormatError("no density rows to plot")
    axes = fig.subplots(1, len(alphas), squeeze=False)[0]
    for ax, a1 in zip(axes, alphas):
        for curve, style, color in (("classical", "-", "tab:red"), ("corrected", "--", "tab:blue")):
            pts = [r for r in kde if float(r["alpha1"]) == a1 and r["curve"] == curve]
            if pts:
                ax.plot(_floats(pts, "grid"), _floats(pts, "density"), style, color=color, label=curve)
        ax.set_title(f"instrument strength {a1:g}")
        ax.set_xlabel("log10(CI width / error)")
        ax.set_ylabel("density")
        ax.legend()


def render_study_figure(csv_path, out_path=None) -> Path:
    """Render the figure for a study result CSV; returns the PNG path."""
    csv_path = Path(csv_path)
    out_path = Path(out_path) if out_path else csv_path.with_suffix(".png")
    rows = _read_rows(csv_path)
    study = rows[0].get("study", "")
    if study in ("corrected-ci-small-kappa", "corrected-ci-large-kappa"):
        n_panels = len({r["alpha1"] for r in rows if r["row_type"] == "kde"})
        fig = plt.figure(figsize=(5 * max(n_panels, 1), 4))
        _plot_corrected(rows, fig)
    else:
        fig, ax = plt.subplots(figsize=(6, 4.5))
        if study == "endogeneity-sweep":
            _plot_sweep(rows, ax, "eta", "endogeneity")
        elif study == "growing-dims":
            _plot_sweep(rows, ax, "n", "sample size")
            ax.set_xscale("log", base=2)
        elif study == "hard-tracewise":
            _plot_hard(rows, ax)
        else:
            raise DataFormatError(f"cannot infer a figure layout for study {study!r}")
    fig.suptitle(study)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
