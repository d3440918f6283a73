"""Figure recipes: which CSVs each figure needs and how it is drawn.

All statistics come from the simulator's CSVs; recipes only arrange them.
Rendering is deterministic for identical inputs (fixed style, no
timestamps embedded in the output files).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .io import FigureInputError, fnum, load_csv, parse_config_id, sweep_table

plt.rcParams.update({
    "figure.dpi": 110,
    "svg.hashsalt": "crashfigs",
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
})

STEPS_PER_MINUTE = 1_200

SUMMARY_BASE = ("config_id", "trials", "p_contagion", "p_contagion_lo",
                "p_contagion_hi", "omega", "p_crash", "p_crash_lo",
                "p_crash_hi", "mean_speed", "speed_lo", "speed_hi",
                "median_onset_steps", "median_second_crash_gap_steps",
                "mean_f_default")


@dataclass(frozen=True)
class FigureRecipe:
    figure_id: str
    description: str
    inputs: dict[str, tuple[str, ...]]     # file name -> required columns
    draw: Callable[[Path], "plt.Figure"]

    def render(self, input_dir: str | Path, out_path: str | Path) -> Path:
        """Draw from input_dir CSVs and write the image; no file is written
        when inputs are missing or unusable."""
        input_dir = Path(input_dir)
        for name, columns in self.inputs.items():
            if "*" not in name:
                load_csv(input_dir / name, columns)
        fig = self.draw(input_dir)
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        metadata = {"Date": None} if out_path.suffix == ".svg" else \
            {"Software": "crashfigs"}
        fig.savefig(out_path, metadata=metadata)
        plt.close(fig)
        return out_path


def _ci_plot(ax, table: list[dict], x_key: str, series_key: str,
             value: str, lo: str, hi: str, ylabel: str,
             series_label: str) -> None:
    groups: dict[float, list[dict]] = {}
    for row in table:
        groups.setdefault(row[series_key], []).append(row)
    for series_value, rows in sorted(groups.items()):
        rows = sorted(rows, key=lambda r: r[x_key])
        x = [r[x_key] for r in rows]
        y = [fnum(r, value) for r in rows]
        lo_v = [fnum(r, lo) for r in rows]
        hi_v = [fnum(r, hi) for r in rows]
        line, = ax.plot(x, y, marker="o", markersize=3,
                        label=f"{series_label}={series_value:g}")
        ax.fill_between(x, lo_v, hi_v, alpha=0.2, color=line.get_color())
    ax.set_xlabel(x_key)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=7)


# ---------------------------------------------------------------------------
# individual figures


def _draw_fig3(input_dir: Path) -> plt.Figure:
    prices_dir = input_dir / "prices"
    price_files = sorted(p for p in prices_dir.glob("*.csv")
                         if not p.name.startswith("depth_"))
    if not price_files:
        raise FigureInputError(f"no price files under {prices_dir}")
    price_rows = load_csv(price_files[0], ("step", "asset", "price"))
    depth_rows = load_csv(prices_dir / f"depth_{price_files[0].name}",
                          ("step", "asset", "bid_qty", "ask_qty"))
    kurt = load_csv(input_dir / "stylised_kurtosis.csv",
                    ("horizon", "group", "mean", "lo", "hi"))
    acf = load_csv(input_dir / "stylised_acf.csv",
                   ("lag", "group", "ret_mean", "abs_mean"))

    fig, axes = plt.subplots(3, 2, figsize=(9, 10))
    ax = axes[0, 0]
    steps = np.array([int(r["step"]) for r in price_rows if r["asset"] == "0"])
    prices = np.array([int(r["price"]) for r in price_rows if r["asset"] == "0"])
    ax.plot(steps, prices, lw=0.7, color="black")
    ax.set_xlabel("step")
    ax.set_ylabel("price (ticks)")
    ax.set_title("price path")

    ax = axes[0, 1]
    d_steps = np.array([int(r["step"]) for r in depth_rows if r["asset"] == "0"])
    bid = np.array([int(r["bid_qty"]) for r in depth_rows if r["asset"] == "0"])
    ask = np.array([int(r["ask_qty"]) for r in depth_rows if r["asset"] == "0"])
    ax.plot(d_steps, bid, lw=0.7, color="black", label="bid volume")
    ax.plot(d_steps, ask, lw=0.7, color="red", label="ask volume")
    ax.set_xlabel("step")
    ax.set_ylabel("resting shares")
    ax.set_title("book depth")
    ax.legend(fontsize=7)

    ax = axes[1, 0]
    colours = {"crash": "red", "calm": "black"}
    for group in ("crash", "calm"):
        rows = [r for r in kurt if r["group"] == group]
        if not rows:
            continue
        h = [int(r["horizon"]) for r in rows]
        ax.errorbar(h, [fnum(r, "mean") for r in rows],
                    yerr=[[max(fnum(r, "mean") - fnum(r, "lo"), 0) for r in rows],
                          [max(fnum(r, "hi") - fnum(r, "mean"), 0) for r in rows]],
                    marker="o", markersize=3, color=colours[group], label=group)
    ax.axhline(3.0, ls="--", lw=0.8, color="grey")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("return horizon (steps)")
    ax.set_ylabel("kurtosis")
    ax.set_title("aggregational Gaussianity")
    ax.legend(fontsize=7)

    ax = axes[1, 1]
    for group in ("crash", "calm"):
        rows = [r for r in acf if r["group"] == group and int(r["lag"]) >= 1]
        if not rows:
            continue
        lags = [int(r["lag"]) for r in rows]
        ax.plot(lags, [fnum(r, "ret_mean") for r in rows],
                lw=0.8, color=colours[group], label=f"returns ({group})")
    ax.set_xscale("log")
    ax.set_xlabel("lag (steps)")
    ax.set_ylabel("autocorrelation")
    ax.set_title("return autocorrelation")
    ax.legend(fontsize=7)

    ax = axes[2, 0]
    for group in ("crash", "calm"):
        rows = [r for r in acf if r["group"] == group and int(r["lag"]) >= 1]
        if not rows:
            continue
        lags = [int(r["lag"]) for r in rows]
        vals = np.array([fnum(r, "abs_mean") for r in rows])
        ax.plot(lags, np.clip(vals, 1e-4, None),
                lw=0.8, color=colours[group], label=f"|returns| ({group})")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("lag (steps)")
    ax.set_ylabel("autocorrelation")
    ax.set_title("volatility autocorrelation")
    ax.legend(fontsize=7)

    ax = axes[2, 1]
    returns = np.diff(np.log(np.maximum(prices.astype(float), 1.0)))
    returns = returns[returns != 0]
    if len(returns):
        scaled = np.sort(np.abs(returns)) / (returns.std() or 1.0)
        survival = 1.0 - np.arange(1, len(scaled) + 1) / len(scaled)
        ax.plot(scaled, np.clip(survival, 1e-6, None), lw=0.8, color="black")
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel("|return| / std")
    ax.set_ylabel("survival probability")
    ax.set_title("return tail")

    fig.tight_layout()
    return fig


def _draw_fig4(input_dir: Path) -> plt.Figure:
    rows = load_csv(input_dir / "summary.csv", SUMMARY_BASE)
    table = sweep_table(rows, ("shock.eta", "shock.delta"))
    fig, (ax_a, ax_b) = plt.subplots(1, 2, figsize=(9, 3.4))
    _ci_plot(ax_a, table, "shock.eta", "shock.delta",
             "p_crash", "p_crash_lo", "p_crash_hi",
             "P(flash crash)", "delta")
    ax_a.set_title("flash crash probability")
    groups: dict[float, list[dict]] = {}
    for row in table:
        groups.setdefault(row["shock.delta"], []).append(row)
    for delta, rows_d in sorted(groups.items()):
        rows_d = sorted(rows_d, key=lambda r: r["shock.eta"])
        x = [r["shock.eta"] for r in rows_d]
        y = [fnum(r, "median_onset_steps") / STEPS_PER_MINUTE for r in rows_d]
        ax_b.plot(x, y, marker="o", markersize=3, label=f"delta={delta:g}")
    ax_b.set_xlabel("shock.eta")
    ax_b.set_ylabel("median onset (minutes)")
    ax_b.set_title("time to flash crash after shock")
    ax_b.legend(fontsize=7)
    fig.tight_layout()
    return fig


def _draw_fig5(input_dir: Path) -> plt.Figure:
    rows = load_csv(input_dir / "summary.csv", SUMMARY_BASE)
    table = sweep_table(rows, ("theta.lambda0", "theta.c0"))
    lams = sorted({r["theta.lambda0"] for r in table})
    caps = sorted({r["theta.c0"] for r in table})
    grid = np.full((len(caps), len(lams)), np.nan)
    for row in table:
        i = caps.index(row["theta.c0"])
        j = lams.index(row["theta.lambda0"])
        grid[i, j] = fnum(row, "mean_f_default")
    fig, ax = plt.subplots(figsize=(5.2, 4))
    mesh = ax.pcolormesh(lams, [c / 1e6 for c in caps], grid,
                         shading="nearest", vmin=0, vmax=1, cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="mean default fraction")
    if len(lams) > 1 and len(caps) > 1:
        ax.contour(lams, [c / 1e6 for c in caps], grid, levels=[0.25, 0.75],
                   colors="white", linewidths=1.0)
    ax.set_xlabel("initial leverage")
    ax.set_ylabel("fund capital (MUSD)")
    ax.set_title("default fraction phase diagram")
    fig.tight_layout()
    return fig


def _fig6_axis(table: list[dict]) -> str:
    for axis in ("theta.lambda0", "theta.tau_c", "theta.c0"):
        values = set()
        for row in table:
            if axis in row:
                values.add(row[axis])
        if len(values) > 1:
            return axis
    raise FigureInputError("summary.csv does not sweep a theta parameter")


def _draw_fig6(input_dir: Path) -> plt.Figure:
    rows = load_csv(input_dir / "summary.csv", SUMMARY_BASE)
    table = [dict(r, **parse_config_id(r["config_id"])) for r in rows]
    axis = _fig6_axis(table)
    table = [r for r in table if axis in r]
    table.sort(key=lambda r: r[axis])
    x = [r[axis] for r in table]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))

    ax = axes[0]
    y = [fnum(r, "p_contagion") for r in table]
    lo = [fnum(r, "p_contagion_lo") for r in table]
    hi = [fnum(r, "p_contagion_hi") for r in table]
    ax.plot(x, y, marker="o", markersize=3, color="black")
    ax.fill_between(x, lo, hi, alpha=0.2, color="black")
    ax.set_xlabel(axis)
    ax.set_ylabel("P(contagion)")

    ax = axes[1]
    y = [fnum(r, "mean_speed") for r in table]
    lo = [fnum(r, "speed_lo") for r in table]
    hi = [fnum(r, "speed_hi") for r in table]
    ax.plot(x, y, marker="o", markersize=3, color="black")
    ax.fill_between(x, np.nan_to_num(lo), np.nan_to_num(hi),
                    alpha=0.2, color="black")
    ax.set_xlabel(axis)
    ax.set_ylabel("propagation speed (1/min)")

    ax = axes[2]
    y = [fnum(r, "median_second_crash_gap_steps") / STEPS_PER_MINUTE
         for r in table]
    ax.plot(x, y, marker="o", markersize=3, color="black")
    ax.set_xlabel(axis)
    ax.set_ylabel("second crash gap (minutes)")

    if axis == "theta.tau_c":
        for ax in axes:
            ax.set_xscale("log")
    fig.tight_layout()
    return fig


def _draw_fig7(input_dir: Path) -> plt.Figure:
    rows = load_csv(input_dir / "summary.csv", SUMMARY_BASE)
    table = sweep_table(rows, ("network.rho", "network.beta"))
    fig, (ax_a, ax_b) = plt.subplots(1, 2, figsize=(9, 3.4))
    _ci_plot(ax_a, table, "network.rho", "network.beta",
             "p_contagion", "p_contagion_lo", "p_contagion_hi",
             "P(contagion)", "beta")
    ax_a.set_title("probability of contagion")
    groups: dict[float, list[dict]] = {}
    for row in table:
        groups.setdefault(row["network.beta"], []).append(row)
    for beta, rows_b in sorted(groups.items()):
        rows_b = sorted(rows_b, key=lambda r: r["network.rho"])
        pts = [(r["network.rho"], fnum(r, "omega")) for r in rows_b
               if not math.isnan(fnum(r, "omega"))]
        if pts:
            ax_b.plot([p[0] for p in pts], [p[1] for p in pts],
                      marker="o", markersize=3, label=f"beta={beta:g}")
    ax_b.set_xlabel("network.rho")
    ax_b.set_ylabel("extent of contagion")
    ax_b.set_title("extent of contagion")
    ax_b.legend(fontsize=7)
    fig.tight_layout()
    return fig


def _draw_fig8(input_dir: Path) -> plt.Figure:
    rows = load_csv(input_dir / "summary.csv", SUMMARY_BASE)
    table = sweep_table(rows, ("network.rho", "network.beta"))
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    _ci_plot(ax, table, "network.rho", "network.beta",
             "mean_speed", "speed_lo", "speed_hi",
             "propagation speed (1/min)", "beta")
    ax.set_title("flash crash propagation speed")
    fig.tight_layout()
    return fig


def _draw_fig9(input_dir: Path) -> plt.Figure:
    rows = load_csv(input_dir / "summary.csv", SUMMARY_BASE)
    table = sweep_table(rows, ("network.alpha", "network.beta"))
    fig, ax = plt.subplots(figsize=(6, 4))
    _ci_plot(ax, table, "network.alpha", "network.beta",
             "p_contagion", "p_contagion_lo", "p_contagion_hi",
             "P(contagion)", "beta")
    ax.set_title("allocation uniformity and contagion")

    metrics_rows = load_csv(input_dir / "metrics.csv",
                            ("config_id", "cascade", "shock_asset_rank"))
    ranks_cascade, ranks_quiet = [], []
    for row in metrics_rows:
        params = parse_config_id(row["config_id"])
        if params.get("network.beta") != 7.5:
            continue
        rank = fnum(row, "shock_asset_rank")
        if math.isnan(rank):
            continue
        (ranks_cascade if row["cascade"] == "1" else ranks_quiet).append(rank)
    if ranks_cascade or ranks_quiet:
        inset = ax.inset_axes([0.55, 0.14, 0.4, 0.3])
        bins = np.linspace(0, 1, 6)
        inset.hist([ranks_quiet, ranks_cascade], bins=bins, stacked=True,
                   color=["dimgray", "lightcoral"],
                   label=["no cascade", "cascade"])
        inset.set_xlabel("shocked asset rank", fontsize=6)
        inset.set_ylabel("trials", fontsize=6)
        inset.tick_params(labelsize=6)
        inset.legend(fontsize=5)
    fig.tight_layout()
    return fig


RECIPES: dict[str, FigureRecipe] = {
    "fig3": FigureRecipe(
        "fig3", "price/volume, depth, and stylised-facts panels",
        {"stylised_kurtosis.csv": ("horizon", "group", "mean", "lo", "hi"),
         "stylised_acf.csv": ("lag", "group", "ret_mean", "abs_mean")},
        _draw_fig3),
    "fig4": FigureRecipe(
        "fig4", "flash-crash probability and onset over the eta-delta grid",
        {"summary.csv": SUMMARY_BASE}, _draw_fig4),
    "fig5": FigureRecipe(
        "fig5", "default-fraction phase diagram over leverage and capital",
        {"summary.csv": SUMMARY_BASE}, _draw_fig5),
    "fig6": FigureRecipe(
        "fig6", "contagion, speed and onset along one theta axis",
        {"summary.csv": SUMMARY_BASE}, _draw_fig6),
    "fig7": FigureRecipe(
        "fig7", "contagion probability/extent vs diversification by crowding",
        {"summary.csv": SUMMARY_BASE}, _draw_fig7),
    "fig8": FigureRecipe(
        "fig8", "propagation speed vs diversification by crowding",
        {"summary.csv": SUMMARY_BASE}, _draw_fig8),
    "fig9": FigureRecipe(
        "fig9", "contagion vs allocation uniformity, with shocked-asset inset",
        {"summary.csv": SUMMARY_BASE,
         "metrics.csv": ("config_id", "cascade", "shock_asset_rank")},
        _draw_fig9),
}


def render(figure_id: str, input_dir: str | Path, out_path: str | Path) -> Path:
    """Render one figure from an experiment output directory."""
    recipe = RECIPES.get(figure_id)
    if recipe is None:
        raise FigureInputError(
            f"unknown figure {figure_id!r}; available: {sorted(RECIPES)}")
    return recipe.render(input_dir, out_path)
