"""Static figures written next to the CSV reports."""

import os
import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "figure.figsize": (4.5, 3.0),
    "figure.dpi": 150,
    "savefig.bbox": "tight",
    # keep the PNG bytes free of version/time metadata
    "svg.hashsalt": "occid",
}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.stem}.", suffix=path.suffix, dir=path.parent)
    os.close(fd)
    fig.savefig(tmp, metadata={"Software": None})
    plt.close(fig)
    os.replace(tmp, path)
    return path


def _col(header, rows, name):
    i = header.index(name)
    return np.array([r[i] for r in rows], dtype=float)


def evaluation_figures(plant, header, rows, fig_dir):
    """Scalar plants: truth vs estimate and error curves; otherwise relative error by probe index."""
    fig_dir = Path(fig_dir)
    out = []
    with plt.rc_context(STYLE):
        if plant.n == 1 and plant.m == 1:
            x = _col(header, rows, "x1")
            for sym, true, est, err in (("f", "f1", "fhat1", "ftilde1"), ("g", "g1_1", "ghat1_1", "gtilde1_1")):
                fig, ax = plt.subplots()
                ax.plot(x, _col(header, rows, true), "k-", label=f"${sym}$")
                ax.plot(x, _col(header, rows, est), "r--", label=f"$\\hat{{{sym}}}$")
                ax.set_xlabel("$x$")
                ax.legend()
                out.append(_save(fig, fig_dir / f"{sym}_estimate.png"))
                fig, ax = plt.subplots()
                ax.plot(x, _col(header, rows, err), "b-")
                ax.set_xlabel("$x$")
                ax.set_ylabel(f"$\\tilde{{{sym}}}$")
                out.append(_save(fig, fig_dir / f"{sym}_error.png"))
        else:
            idx = _col(header, rows, "index")
            series = [("f", "f_rel_err")] + [(f"g_{c + 1}", f"g{c + 1}_rel_err") for c in range(plant.m)]
            for sym, name in series:
                fig, ax = plt.subplots()
                ax.plot(idx, _col(header, rows, name), "o-", ms=3)
                ax.set_xlabel("probe index (decreasing distance from origin)")
                ax.set_ylabel(f"$\\|\\tilde{{{sym}}}\\| / \\|{sym}\\|$")
                out.append(_save(fig, fig_dir / f"{name}.png"))
    return out


def montecarlo_figure(header, rows, fig_dir):
    trial = _col(header, rows, "trial")
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(8, 3))
        for ax, name, label in zip(axes, ("mean_abs_f", "mean_abs_g"),
                                   (r"mean $|\tilde f|$", r"mean $|\tilde g|$")):
            ax.plot(trial, _col(header, rows, name), ".", ms=4)
            ax.set_xlabel("trial")
            ax.set_ylabel(label)
        return _save(fig, Path(fig_dir) / "montecarlo.png")


def closed_loop_figure(runs, fig_dir):
    labels = ["$q_1$", "$q_2$", r"$\dot q_1$", r"$\dot q_2$"]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(len(runs), 2, figsize=(8, 2.6 * len(runs)), squeeze=False)
        for row, (name, (t, Z, U)) in zip(axes, runs.items()):
            for i in range(4):
                row[0].plot(t, Z[:, i], label=labels[i])
            row[0].set_title(f"{name} model: states", fontsize=9)
            row[0].legend(ncol=2)
            row[1].plot(t, U[:, 0], label=r"$\tau_1$")
            row[1].plot(t, U[:, 1], label=r"$\tau_2$")
            row[1].set_title(f"{name} model: torque", fontsize=9)
            row[1].legend()
        for ax in axes[-1]:
            ax.set_xlabel("t [s]")
        fig.tight_layout()
        return _save(fig, Path(fig_dir) / "closed_loop.png")
