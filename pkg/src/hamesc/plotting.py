"""Static figures from a run report, rendered off-screen to PNG files."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {"figure.figsize": (6.0, 4.0), "figure.dpi": 120, "axes.grid": True,
         "grid.alpha": 0.3, "font.size": 9, "savefig.bbox": "tight"}


def _save(fig, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp.png")
    fig.savefig(tmp, metadata={"Software": None})
    tmp.replace(path)
    plt.close(fig)
    return path


def plot_trajectories(tables, path):
    fig, ax = plt.subplots()
    for tab in tables:
        rows = tab.rows
        if rows.shape[1] >= 5:
            ax.plot(rows[:, 1], rows[:, 2], lw=0.8)
            ax.set_xlabel("y1")
            ax.set_ylabel("y2")
        else:
            ax.plot(rows[:, 0], rows[:, 1], lw=0.8)
            ax.set_xlabel("t")
            ax.set_ylabel("y1")
    ax.set_title("spatial projections of the flow")
    return _save(fig, path)


def plot_band(tables, path):
    fig, ax = plt.subplots()
    for tab in tables:
        t, eta, lo, hi = tab.rows.T
        eta0 = 2.0 * lo[0]
        s = np.abs(t)
        ax.plot(s, eta / eta0, lw=0.6, color="C0", alpha=0.5)
        ax.plot(s, lo / eta0, lw=0.6, color="C3", ls="--")
        ax.plot(s, hi / eta0, lw=0.6, color="C3", ls="--")
    ax.set_xscale("symlog")
    ax.set_xlabel("|t|")
    ax.set_ylabel("|eta(t)| / eta0")
    ax.set_title("momentum band after exit")
    return _save(fig, path)


def plot_margins(tables, path):
    rows = tables[0].rows
    fig, ax = plt.subplots()
    m = rows[:, 1]
    ax.plot(rows[:, 0], np.sign(m) * np.log10(1.0 + np.abs(m) * 1e12), ".", ms=1.5)
    ax.axhline(0.0, color="k", lw=0.5)
    ax.set_xlabel("point index")
    ax.set_ylabel("sign(m) log10(1 + 1e12 |m|)")
    ax.set_title("radial bound margins")
    return _save(fig, path)


def plot_estimate(section, path):
    fig, ax = plt.subplots()
    for key, label in (("estimate", "N"), ("estimate_refined", "refined N")):
        est = section[key]
        z = [float(k) for k in est["C_hat"]]
        ax.plot(z, list(est["C_hat"].values()), "o-", label=f"{label}={est['grid']['N']}")
    ax.set_xscale("log")
    ax.set_xlabel("Im z")
    ax.set_ylabel("fitted constant")
    ax.legend()
    ax.set_title("weighted estimate on the grid")
    return _save(fig, path)


def render_figures(report, out_dir):
    """One PNG per available plot kind; returns the written paths."""
    out = Path(out_dir) / "figures"
    written = []
    with plt.rc_context(STYLE):
        if report.plots.get("trajectory"):
            written.append(plot_trajectories(report.plots["trajectory"], out / "trajectories.png"))
        if report.plots.get("band"):
            written.append(plot_band(report.plots["band"], out / "band.png"))
        if report.plots.get("margin-sweep"):
            written.append(plot_margins(report.plots["margin-sweep"], out / "margins.png"))
        q = report.data["results"].get("quantize-check", {})
        if "estimate" in q:
            written.append(plot_estimate(q, out / "estimate.png"))
    return written
