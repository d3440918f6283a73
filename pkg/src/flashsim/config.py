"""Experiment configuration: flat dotted-key text files, sweep expansion,
and the reproducibility manifest format.

A config file holds one `key = value` per line with `#` comments. Keys
prefixed `sweep.` define combinatorial sweep axes over the remaining keys,
e.g. `sweep.shock.eta = 0.02, 0.09, 0.15`.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .engine import TrialConfig


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_float(text: str) -> float:
    value = text.strip().lower()
    if value in ("inf", "infinity"):
        return math.inf
    return float(text)


#: config-file key -> (TrialConfig attribute, parser)
TRIAL_KEYS: dict[str, tuple[str, type | object]] = {
    "steps": ("total_steps", int),
    "dt_ms": ("dt_ms", int),
    "assets": ("n_assets", int),
    "funds": ("n_funds", int),
    "p0": ("p0", int),
    "scale_divisor": ("scale_divisor", int),
    "valuation_std": ("valuation_std", _parse_float),
    "network.rho": ("rho", _parse_float),
    "network.beta": ("beta", _parse_float),
    "network.alpha": ("alpha", _parse_float),
    "network.sigma": ("sigma", _parse_float),
    "theta.lambda0": ("lambda0", _parse_float),
    "theta.tau_c": ("tau_c", _parse_float),
    "theta.c0": ("c0", _parse_float),
    "shock.enabled": ("shock_enabled", _parse_bool),
    "shock.quantity": ("shock_quantity", int),
    "shock.eta": ("eta", _parse_float),
    "shock.delta": ("delta_s", _parse_float),
    "metrics.gamma": ("gamma", _parse_float),
    "metrics.zeta": ("zeta", _parse_float),
    "record.depth_every": ("record_depth_every", int),
    "record.funds_every": ("record_funds_every", int),
}

ORDER_SIZE_KINDS = ("small", "fundamental", "opportunistic", "market_maker", "hft")

#: experiment-level keys handled outside TrialConfig
EXPERIMENT_KEYS = ("name", "trials", "seed", "workers", "record.prices",
                   "record.prices_every", "record.full_prices",
                   "record.trades", "record.network")


@dataclass
class ExperimentSpec:
    """One experiment: a base trial config, sweep axes expanded
    combinatorially, and M seeded replicates per point."""

    name: str
    base: TrialConfig
    sweep: dict[str, list] = field(default_factory=dict)
    trials: int = 20
    seed: int | None = None
    workers: int | None = None
    record_prices: bool = False
    record_prices_every: int = 20
    record_full_prices: bool = False
    record_trades: bool = False
    record_network: bool = False

    def resolved_seed(self) -> int:
        """Explicit seed, or one derived from the spec contents so that a
        config without a seed still runs reproducibly."""
        if self.seed is not None:
            return self.seed
        digest = hashlib.sha256(format_spec(self).encode()).digest()
        return int.from_bytes(digest[:4], "big")

    def points(self) -> list[tuple[str, TrialConfig]]:
        """Expand sweep axes into (config_id, trial config) pairs."""
        points: list[tuple[str, TrialConfig]] = [("base", self.base)]
        for key, values in self.sweep.items():
            attr, parser = TRIAL_KEYS[key]
            expanded = []
            for cid, config in points:
                for raw in values:
                    value = parser(str(raw))
                    label = f"{key}={raw}".replace(" ", "")
                    new_id = label if cid == "base" else f"{cid},{label}"
                    expanded.append((new_id, replace(config, **{attr: value})))
            points = expanded
        return points

    def trial_configs(self) -> list[TrialConfig]:
        seed0 = self.resolved_seed()
        out = []
        for cid, config in self.points():
            for m in range(self.trials):
                out.append(replace(config, config_id=cid, seed=seed0 + m))
        return out


class ConfigError(ValueError):
    pass


def parse_config(path: str | Path) -> ExperimentSpec:
    """Read and validate an experiment file; unknown keys are rejected with
    their line number."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    spec = ExperimentSpec(name=path.stem, base=TrialConfig())
    order_sizes: dict[str, int] = {}
    trial_values: dict[str, object] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        try:
            _apply_key(spec, key, value, order_sizes, trial_values)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
        except KeyError:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}") from None
    if order_sizes:
        trial_values["order_sizes"] = order_sizes
    spec.base = replace(spec.base, **trial_values)
    try:
        spec.base.validate()
        for _, config in spec.points():
            config.validate()
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return spec


def _apply_key(spec: ExperimentSpec, key: str, value: str,
               order_sizes: dict, trial_values: dict) -> None:
    if key == "name":
        spec.name = value
    elif key == "trials":
        spec.trials = int(value)
        if spec.trials < 1:
            raise ValueError("trials must be >= 1")
    elif key == "seed":
        spec.seed = int(value)
    elif key == "workers":
        spec.workers = int(value)
    elif key == "record.prices":
        spec.record_prices = _parse_bool(value)
    elif key == "record.prices_every":
        spec.record_prices_every = int(value)
    elif key == "record.full_prices":
        spec.record_full_prices = _parse_bool(value)
    elif key == "record.trades":
        spec.record_trades = _parse_bool(value)
    elif key == "record.network":
        spec.record_network = _parse_bool(value)
    elif key.startswith("order_size."):
        kind = key.split(".", 1)[1]
        if kind not in ORDER_SIZE_KINDS:
            raise KeyError(key)
        order_sizes[kind] = int(value)
    elif key.startswith("sweep."):
        target = key.split(".", 1)[1]
        if target not in TRIAL_KEYS:
            raise KeyError(key)
        values = [v.strip() for v in value.split(",") if v.strip()]
        if not values:
            raise ValueError("empty sweep axis")
        spec.sweep[target] = values
    else:
        attr, parser = TRIAL_KEYS[key]   # KeyError -> unknown key
        trial_values[attr] = parser(value)


def format_spec(spec: ExperimentSpec, resolved_seed: int | None = None) -> str:
    """Serialise a spec back to config-file text (the manifest format).
    Re-parsing the output reproduces the experiment exactly."""
    lines = [f"name = {spec.name}", f"trials = {spec.trials}"]
    if resolved_seed is not None:
        lines.append(f"seed = {resolved_seed}")
    elif spec.seed is not None:
        lines.append(f"seed = {spec.seed}")
    if spec.workers is not None:
        lines.append(f"workers = {spec.workers}")
    base = spec.base
    for key, (attr, _) in TRIAL_KEYS.items():
        lines.append(f"{key} = {getattr(base, attr)}")
    if base.order_sizes:
        for kind, size in sorted(base.order_sizes.items()):
            lines.append(f"order_size.{kind} = {size}")
    for flag, key in ((spec.record_prices, "record.prices"),
                      (spec.record_full_prices, "record.full_prices"),
                      (spec.record_trades, "record.trades"),
                      (spec.record_network, "record.network")):
        lines.append(f"{key} = {str(flag).lower()}")
    lines.append(f"record.prices_every = {spec.record_prices_every}")
    for key, values in spec.sweep.items():
        lines.append(f"sweep.{key} = {', '.join(str(v) for v in values)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# presets

#: the three leverage regimes used by the topology experiments
THETA_PRESETS = {
    "theta1": {"theta.lambda0": 3.0, "theta.tau_c": 1.01, "theta.c0": 1e6},
    "theta2": {"theta.lambda0": 2.0, "theta.tau_c": 1.01, "theta.c0": 0.5e6},
    "theta3": {"theta.lambda0": 1.5, "theta.tau_c": 1.01, "theta.c0": 0.25e6},
}

#: sampled parameter domains (defaults for sweeps)
PARAMETER_DOMAINS = {
    "network.rho": (0.0, 1.0),
    "network.beta": (-7.5, 7.5),
    "network.alpha": (0.0, 1.0),
    "network.sigma": 0.001,
    "theta.lambda0": (1.0, 20.0),
    "theta.tau_c": (1.001, 1.2),
    "theta.c0": (0.25e6, 5e6),
    "shock.eta": (0.05, 0.18),
    "shock.delta": (1.0, 60.0),
    "metrics.gamma": 0.05,
    "metrics.zeta": 0.8,
}


def _theta_lines(preset: str = "theta1") -> list[str]:
    values = THETA_PRESETS[preset]
    return [f"{k} = {v}" for k, v in values.items()]


def replicate_spec(figure: str) -> str:
    """Desk-scale experiment file reproducing one of the published figures'
    data requirements."""
    single_asset = [
        "assets = 1", "funds = 1", "theta.lambda0 = 3", "theta.tau_c = inf",
        "theta.c0 = 1000000",
    ]
    figures = {
        "fig3": ["name = fig3", "trials = 20", "seed = 0", "scale_divisor = 4",
                 *single_asset, "record.prices = true", "record.prices_every = 20",
                 "record.depth_every = 20"],
        "fig4": ["name = fig4", "trials = 20", "seed = 0",
                 *single_asset,
                 "sweep.shock.eta = 0.02, 0.09, 0.15",
                 "sweep.shock.delta = 1, 10, 60"],
        "fig5": ["name = fig5", "trials = 10", "seed = 0",
                 "assets = 20", "funds = 20", "network.rho = 0.5",
                 "theta.tau_c = 1.01",
                 "sweep.theta.lambda0 = 1, 2, 3, 5, 10",
                 "sweep.theta.c0 = 250000, 500000, 1000000, 2500000, 5000000"],
        "fig6": ["name = fig6", "trials = 20", "seed = 0",
                 "assets = 20", "funds = 20", "network.rho = 0.5",
                 *_theta_lines(),
                 "sweep.theta.lambda0 = 1, 1.5, 2, 3, 5, 10, 20"],
        "fig6b": ["name = fig6b", "trials = 20", "seed = 0",
                  "assets = 20", "funds = 20", "network.rho = 0.5",
                  *_theta_lines(),
                  "sweep.theta.tau_c = 1.002, 1.005, 1.01, 1.02, 1.05, 1.1"],
        "fig6c": ["name = fig6c", "trials = 20", "seed = 0",
                  "assets = 20", "funds = 20", "network.rho = 0.5",
                  *_theta_lines(),
                  "sweep.theta.c0 = 100000, 250000, 500000, 1000000, 2500000, 5000000"],
        "fig7": ["name = fig7", "trials = 10", "seed = 0",
                 "assets = 20", "funds = 20", *_theta_lines(),
                 "sweep.network.rho = 0.02, 0.1, 0.25, 0.5, 0.75, 1.0",
                 "sweep.network.beta = -7.5, -2, 0, 2, 7.5"],
        "fig8": ["name = fig8", "trials = 10", "seed = 0",
                 "assets = 20", "funds = 20", *_theta_lines(),
                 "sweep.network.rho = 0.02, 0.1, 0.25, 0.5, 0.75, 1.0",
                 "sweep.network.beta = -7.5, -2, 0, 2, 7.5"],
        "fig9": ["name = fig9", "trials = 20", "seed = 0",
                 "assets = 20", "funds = 20", "network.rho = 1.0", *_theta_lines(),
                 "sweep.network.alpha = 0, 0.25, 0.5, 0.75, 1.0",
                 "sweep.network.beta = -7.5, 0, 7.5"],
    }
    if figure not in figures:
        raise ConfigError(f"no replication spec for {figure!r}; "
                          f"choose from {sorted(figures)}")
    return "\n".join(figures[figure]) + "\n"
