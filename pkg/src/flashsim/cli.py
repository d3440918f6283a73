"""Command-line entry point: validate and run experiment files, emit the
parameter presets, and generate figure-replication specs.

An experiment run writes into its output directory:

  manifest.txt   resolved config (re-runnable; includes the derived seed)
  metrics.csv    one row per trial
  summary.csv    one row per sweep point with means and 95% CIs
  prices/        downsampled per-trial price paths  (record.prices)
  trades/        per-trial trade logs               (record.trades)
  networks/      per-trial fund-asset edge lists    (record.network)
  funds/         per-trial fund snapshots           (record.funds_every > 0)
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import __version__
from . import metrics as mt
from .config import (ConfigError, ExperimentSpec, PARAMETER_DOMAINS,
                     THETA_PRESETS, format_spec, parse_config, replicate_spec)
from .engine import _DOM_NETWORK, Trial, TrialConfig, run_ensemble, worker_count
from .macrofin import STATE_NAMES
from .netgen import generate_network, edge_list_rows
from .orderbook import SIDE_NAMES

SUMMARY_COLUMNS = [
    "config_id", "trials",
    "p_contagion", "p_contagion_lo", "p_contagion_hi",
    "omega", "p_crash", "p_crash_lo", "p_crash_hi",
    "mean_f_default", "f_default_lo", "f_default_hi",
    "mean_speed", "speed_lo", "speed_hi", "n_speed_defined", "n_speed_infinite",
    "median_onset_steps", "median_second_crash_gap_steps",
    "mean_crashed_assets",
]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        if math.isinf(value):
            return "inf"
        return repr(value)
    return str(value)


def write_metrics_csv(rows: list[dict], path: Path) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(mt.METRICS_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in mt.METRICS_COLUMNS])


def summarise_point(config_id: str, rows: list[dict], gamma: float) -> dict:
    n = len(rows)
    cascades = sum(r["cascade"] for r in rows)
    p, p_lo, p_hi = mt.proportion_ci(cascades, n)
    _, omega = mt.contagion_stats([r["f_default"] for r in rows], gamma)
    crashed = sum(1 for r in rows if r["n_crashed_assets"] > 0)
    pc, pc_lo, pc_hi = mt.proportion_ci(crashed, n)
    fd, fd_lo, fd_hi = mt.mean_ci([r["f_default"] for r in rows])
    speeds = [r["speed"] for r in rows]
    sp, sp_lo, sp_hi = mt.mean_ci(speeds)
    n_defined = sum(1 for s in speeds if s is not None and not math.isinf(s))
    n_inf = sum(1 for s in speeds if s is not None and math.isinf(s))
    onsets = sorted(r["onset_gap_steps"] for r in rows
                    if r["onset_gap_steps"] is not None)
    seconds = sorted(r["second_crash_gap_steps"] for r in rows
                     if r["second_crash_gap_steps"] is not None)
    return {
        "config_id": config_id, "trials": n,
        "p_contagion": p, "p_contagion_lo": p_lo, "p_contagion_hi": p_hi,
        "omega": omega, "p_crash": pc, "p_crash_lo": pc_lo, "p_crash_hi": pc_hi,
        "mean_f_default": fd, "f_default_lo": fd_lo, "f_default_hi": fd_hi,
        "mean_speed": sp, "speed_lo": sp_lo, "speed_hi": sp_hi,
        "n_speed_defined": n_defined, "n_speed_infinite": n_inf,
        "median_onset_steps": onsets[len(onsets) // 2] if onsets else None,
        "median_second_crash_gap_steps": seconds[len(seconds) // 2] if seconds else None,
        "mean_crashed_assets": float(np.mean([r["n_crashed_assets"] for r in rows])),
    }


def write_summary_csv(rows: list[dict], path: Path, gamma: float) -> None:
    by_point: dict[str, list[dict]] = defaultdict(list)
    for row in rows:
        by_point[row["config_id"]].append(row)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for config_id, point_rows in by_point.items():
            summary = summarise_point(config_id, point_rows, gamma)
            writer.writerow([_fmt(summary[c]) for c in SUMMARY_COLUMNS])


def _write_price_csv(result: mt.TrialResult, path: Path, every: int) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "asset", "price"])
        for asset in range(result.n_assets):
            series = result.price_series(asset)
            for step in range(0, result.total_steps, max(every, 1)):
                writer.writerow([step, asset, int(series[step])])


def _write_depth_csv(result: mt.TrialResult, path: Path) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "asset", "bid_qty", "ask_qty"])
        for asset, samples in enumerate(result.depth_samples):
            for step, bid, ask in samples.tolist():
                writer.writerow([step, asset, bid, ask])


def _write_stylised_csvs(results, outdir: Path, max_lag: int = 1_000) -> None:
    """Return-distribution diagnostics aggregated across trials, split into
    trials with and without a flash crash (asset 0)."""
    horizons = (1, 10, 100, 1_000, 10_000)
    groups: dict[str, list[mt.StylisedFacts]] = {"crash": [], "calm": []}
    for result in results:
        if result.total_steps < 10_000:
            continue
        facts = mt.stylised_facts(result.price_series(0), horizons, max_lag)
        key = "crash" if result.first_crash_steps else "calm"
        groups[key].append(facts)
    if not groups["crash"] and not groups["calm"]:
        return
    with (outdir / "stylised_kurtosis.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["horizon", "group", "n", "mean", "lo", "hi"])
        for group, facts_list in groups.items():
            if not facts_list:
                continue
            for h in horizons:
                values = [f.kurtosis_by_horizon.get(h) for f in facts_list]
                values = [v for v in values if v is not None and not math.isnan(v)]
                mean, lo, hi = mt.mean_ci(values)
                writer.writerow([h, group, len(values), _fmt(mean), _fmt(lo), _fmt(hi)])
    with (outdir / "stylised_acf.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lag", "group", "ret_mean", "ret_lo", "ret_hi",
                         "abs_mean", "abs_lo", "abs_hi"])
        for group, facts_list in groups.items():
            if not facts_list:
                continue
            ret = np.stack([f.return_acf for f in facts_list])
            ab = np.stack([f.abs_return_acf for f in facts_list])
            for lag in range(max_lag + 1):
                rm, rl, rh = mt.mean_ci(ret[:, lag])
                am, al, ah = mt.mean_ci(ab[:, lag])
                writer.writerow([lag, group, _fmt(rm), _fmt(rl), _fmt(rh),
                                 _fmt(am), _fmt(al), _fmt(ah)])


def run_experiment(spec: ExperimentSpec, outdir: str | Path,
                   workers: int | None = None) -> Path:
    """Expand the sweep, run every trial, and persist results. Returns the
    output directory."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    seed0 = spec.resolved_seed()
    manifest = format_spec(spec, resolved_seed=seed0)
    manifest += f"# flashsim {__version__}\n"
    (outdir / "manifest.txt").write_text(manifest)

    configs = spec.trial_configs()
    results = run_ensemble(configs, workers=workers or spec.workers)

    rows = [mt.trial_row(r, gamma=c.gamma, zeta=c.zeta)
            for c, r in zip(configs, results)]
    write_metrics_csv(rows, outdir / "metrics.csv")
    write_summary_csv(rows, outdir / "summary.csv", spec.base.gamma)

    if spec.record_prices:
        prices_dir = outdir / "prices"
        prices_dir.mkdir(exist_ok=True)
        every = 1 if spec.record_full_prices else spec.record_prices_every
        for config, result in zip(configs, results):
            name = f"{config.config_id or 'base'}_{config.seed}.csv"
            _write_price_csv(result, prices_dir / name.replace("/", "_"), every)
            _write_depth_csv(result, prices_dir / ("depth_" + name.replace("/", "_")))
        _write_stylised_csvs(results, outdir)
    if spec.record_trades:
        trades_dir = outdir / "trades"
        trades_dir.mkdir(exist_ok=True)
        for config, result in zip(configs, results):
            name = f"{config.config_id or 'base'}_{config.seed}.csv"
            with (trades_dir / name.replace("/", "_")).open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["time", "asset", "price", "qty", "aggressor"])
                for asset in range(result.n_assets):
                    log = result.trade_log[asset]
                    for i in range(log.shape[1]):
                        writer.writerow([int(log[0, i]), asset, int(log[1, i]),
                                         int(log[2, i]), SIDE_NAMES[int(log[3, i])]])
    if spec.record_network:
        net_dir = outdir / "networks"
        net_dir.mkdir(exist_ok=True)
        for config in configs:
            rng = np.random.default_rng(
                np.random.SeedSequence((config.seed, _DOM_NETWORK)))
            net = generate_network(config.network_params(), rng)
            name = f"{config.config_id or 'base'}_{config.seed}.csv"
            with (net_dir / name.replace("/", "_")).open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["fund", "asset", "investment"])
                for fund, asset, amount in edge_list_rows(net):
                    writer.writerow([fund, asset, repr(amount)])
    return outdir


def cmd_run(args) -> int:
    spec = parse_config(args.config)
    outdir = run_experiment(spec, args.out or f"out_{spec.name}",
                            workers=args.workers)
    print(f"wrote {outdir}/metrics.csv ({spec.trials} trials x "
          f"{len(spec.points())} points)")
    return 0


def cmd_validate(args) -> int:
    spec = parse_config(args.config)
    points = spec.points()
    print(f"{args.config}: OK ({spec.name}: {len(points)} points x "
          f"{spec.trials} trials, seed {spec.resolved_seed()})")
    return 0


def cmd_presets(_args) -> int:
    print("# leverage regime presets (lambda0, tau_c, c0 dollars)")
    for name, values in THETA_PRESETS.items():
        row = ", ".join(f"{k} = {v}" for k, v in values.items())
        print(f"{name}: {row}")
    print("\n# sampled parameter domains")
    for key, domain in PARAMETER_DOMAINS.items():
        print(f"{key}: {domain}")
    return 0


def cmd_replicate(args) -> int:
    text = replicate_spec(args.figure)
    path = Path(args.out or f"{args.figure}.cfg")
    path.write_text(text)
    print(f"wrote {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="flashsim",
        description="agent-based flash-crash contagion simulator")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment file")
    p_run.add_argument("config")
    p_run.add_argument("--out", help="output directory (default out_<name>)")
    p_run.add_argument("--workers", type=int, default=None,
                       help="worker processes (default: FLASHSIM_WORKERS or CPU count)")
    p_run.set_defaults(func=cmd_run)

    p_val = sub.add_parser("validate", help="check an experiment file")
    p_val.add_argument("config")
    p_val.set_defaults(func=cmd_validate)

    p_pre = sub.add_parser("presets", help="print calibrated parameter presets")
    p_pre.set_defaults(func=cmd_presets)

    p_rep = sub.add_parser("replicate",
                           help="write a desk-scale figure replication spec")
    p_rep.add_argument("figure",
                       help="fig3 fig4 fig5 fig6 fig6b fig6c fig7 fig8 fig9")
    p_rep.add_argument("--out")
    p_rep.set_defaults(func=cmd_replicate)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
