"""Systemic-risk metrics: flash-crash detection over rolling windows,
propagation speed across assets, default-cascade statistics, and the
stylised-facts diagnostics used for empirical validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

#: A flash crash is a strict fall of more than 5% over a rolling window of
#: five simulated minutes.
FLASH_CRASH_FALL = 0.05
FLASH_CRASH_WINDOW_MINUTES = 5.0

DEFAULT_GAMMA = 0.05
DEFAULT_ZETA = 0.8


def crash_window_steps(dt_ms: int) -> int:
    return int(FLASH_CRASH_WINDOW_MINUTES * 60_000 / dt_ms)


def flash_crash_indicator(prices: np.ndarray, t: int, window_steps: int) -> int:
    """1 iff price at t is more than 5% below the price at
    max(t - window, 0), else 0."""
    ref = prices[max(t - window_steps, 0)]
    return 1 if (prices[t] - ref) / ref < -FLASH_CRASH_FALL else 0


def flash_crash_flags(prices: np.ndarray, window_steps: int) -> np.ndarray:
    """Vectorised indicator over a whole per-step price series."""
    prices = np.asarray(prices, dtype=np.float64)
    idx = np.arange(len(prices)) - window_steps
    ref = prices[np.maximum(idx, 0)]
    return ((prices - ref) / ref < -FLASH_CRASH_FALL).astype(np.int8)


def first_crash_step(prices: np.ndarray, window_steps: int) -> int | None:
    flags = flash_crash_flags(prices, window_steps)
    hits = np.nonzero(flags)[0]
    return int(hits[0]) if len(hits) else None


def propagation_speed(first_crashes, zeta: float = DEFAULT_ZETA,
                      dt_ms: int = 50) -> float | None:
    """Flash crashes per minute from the set of per-asset first-crash steps.

    Undefined (None) when fewer than two assets crashed. Simultaneous first
    and percentile crashes give +inf, reported separately by callers.
    """
    times = sorted(first_crashes)
    n = len(times)
    if n <= 1:
        return None
    p = math.floor(zeta * n)
    t1, tp = times[0], times[p - 1]
    c = 60_000.0 / dt_ms
    if tp == t1:
        return math.inf
    return c * zeta * (n - 1) / (tp - t1)


def contagion_stats(default_fractions, gamma: float = DEFAULT_GAMMA
                    ) -> tuple[float, float | None]:
    """Probability of contagion and (conditional) extent over an ensemble.

    A cascade is a trial whose default fraction strictly exceeds gamma; the
    extent is the mean default fraction over cascade trials, undefined when
    no cascade occurred.
    """
    fractions = list(default_fractions)
    if not fractions:
        raise ValueError("contagion statistics need at least one trial")
    cascades = [f for f in fractions if f > gamma]
    probability = len(cascades) / len(fractions)
    extent = sum(cascades) / len(cascades) if cascades else None
    return probability, extent


# ---------------------------------------------------------------------------
# stylised facts


def log_returns(prices: np.ndarray, horizon: int) -> np.ndarray:
    logp = np.log(np.asarray(prices, dtype=np.float64))
    return logp[horizon:] - logp[:-horizon]


def kurtosis(x: np.ndarray) -> float:
    """Fourth standardised moment (a Gaussian scores 3)."""
    x = np.asarray(x, dtype=np.float64)
    centred = x - x.mean()
    variance = (centred ** 2).mean()
    if variance == 0:
        return float("nan")
    return float((centred ** 4).mean() / variance ** 2)


def autocorrelation(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Autocorrelation at lags 0..max_lag (FFT-based, biased estimator)."""
    x = np.asarray(x, dtype=np.float64)
    x = x - x.mean()
    n = len(x)
    spectrum = np.fft.rfft(x, 2 * n)
    acov = np.fft.irfft(spectrum * np.conj(spectrum))[:max_lag + 1]
    if acov[0] == 0:
        return np.zeros(max_lag + 1)
    return acov / acov[0]


@dataclass
class StylisedFacts:
    horizons: tuple[int, ...]
    kurtosis_by_horizon: dict[int, float]
    return_acf: np.ndarray
    abs_return_acf: np.ndarray
    #: survival function of |1-step returns| standardised by their std
    tail_values: np.ndarray
    tail_survival: np.ndarray


def stylised_facts(prices: np.ndarray,
                   horizons: tuple[int, ...] = (1, 10, 100, 1_000, 10_000),
                   max_lag: int = 1_000) -> StylisedFacts:
    prices = np.asarray(prices, dtype=np.float64)
    if len(prices) < 10_000:
        raise ValueError("stylised facts need at least 10,000 price samples")
    kurt = {h: kurtosis(log_returns(prices, h)) for h in horizons
            if h < len(prices)}
    r1 = log_returns(prices, 1)
    ret_acf = autocorrelation(r1, max_lag)
    abs_acf = autocorrelation(np.abs(r1), max_lag)
    std = r1.std()
    scaled = np.sort(np.abs(r1)) / (std if std > 0 else 1.0)
    survival = 1.0 - np.arange(1, len(scaled) + 1) / len(scaled)
    return StylisedFacts(tuple(kurt), kurt, ret_acf, abs_acf, scaled, survival)


# ---------------------------------------------------------------------------
# per-trial results


@dataclass
class TrialResult:
    """Everything recorded from one simulation trial.

    Price paths are stored as change points (steps, prices) per asset and
    expanded to per-step series on demand.
    """

    config_id: str
    seed: int
    n_assets: int
    n_funds: int
    total_steps: int
    dt_ms: int
    shock_step: int
    shock_asset: int                     # -1 when no shock was injected
    price_points: list[tuple[np.ndarray, np.ndarray]]
    #: per asset, a 4 x n_trades int array: rows step, price, qty, aggressor
    trade_log: list[np.ndarray]
    depth_samples: list[np.ndarray]      # per asset: (step, bid_qty, ask_qty)
    fund_states: np.ndarray              # final state codes
    fund_default_steps: np.ndarray       # -1 for funds that never defaulted
    bank_loss_marked: float
    bank_loss_realised: float
    margin_call_events: int
    #: total-investment percentile of the shocked asset (nan when unshocked)
    shock_asset_rank: float = float("nan")
    first_crash_steps: dict[int, int] = field(default_factory=dict)

    def price_series(self, asset: int) -> np.ndarray:
        """Per-step last-trade price for one asset, length total_steps."""
        steps, prices = self.price_points[asset]
        bounds = np.append(steps[1:], self.total_steps)
        lengths = bounds - np.maximum(steps, 0)
        return np.repeat(prices, np.maximum(lengths, 0))[:self.total_steps]

    @property
    def default_fraction(self) -> float:
        return float((self.fund_default_steps >= 0).sum()) / self.n_funds


def compute_first_crashes(result: TrialResult) -> dict[int, int]:
    """First flash-crash step per asset (assets that never crash omitted)."""
    window = crash_window_steps(result.dt_ms)
    out: dict[int, int] = {}
    for asset in range(result.n_assets):
        step = first_crash_step(result.price_series(asset), window)
        if step is not None:
            out[asset] = step
    return out


def trial_row(result: TrialResult, gamma: float = DEFAULT_GAMMA,
              zeta: float = DEFAULT_ZETA) -> dict:
    """One metrics-CSV row for a finished trial."""
    crashes = result.first_crash_steps
    times = sorted(crashes.values())
    f_default = result.default_fraction
    speed = propagation_speed(times, zeta, result.dt_ms)
    first = times[0] if times else None
    onset = first - result.shock_step if (times and result.shock_step >= 0) else None

    second = times[1] - result.shock_step if len(times) > 1 else None
    excl = sorted(t for a, t in crashes.items() if a != result.shock_asset)
    second_excl = excl[0] - result.shock_step if excl and result.shock_asset >= 0 else None
    return {
        "config_id": result.config_id,
        "seed": result.seed,
        "f_default": f_default,
        "cascade": int(f_default > gamma),
        "n_crashed_assets": len(crashes),
        "first_crash_step": first,
        "speed": speed,
        "onset_gap_steps": onset,
        "second_crash_gap_steps": second,
        "second_crash_gap_excl_steps": second_excl,
        "shock_asset_rank": result.shock_asset_rank
        if not math.isnan(result.shock_asset_rank) else None,
    }


METRICS_COLUMNS = ["config_id", "seed", "f_default", "cascade",
                   "n_crashed_assets", "first_crash_step", "speed",
                   "onset_gap_steps", "second_crash_gap_steps",
                   "second_crash_gap_excl_steps", "shock_asset_rank"]


def mean_ci(values, confidence: float = 0.95) -> tuple[float, float, float]:
    """Mean with a normal-approximation confidence interval."""
    vals = np.asarray([v for v in values if v is not None
                       and not (isinstance(v, float) and math.isinf(v))],
                      dtype=np.float64)
    if len(vals) == 0:
        return float("nan"), float("nan"), float("nan")
    mean = float(vals.mean())
    if len(vals) == 1:
        return mean, mean, mean
    half = 1.959963984540054 * float(vals.std(ddof=1)) / math.sqrt(len(vals))
    return mean, mean - half, mean + half


def proportion_ci(successes: int, n: int) -> tuple[float, float, float]:
    if n == 0:
        return float("nan"), float("nan"), float("nan")
    p = successes / n
    half = 1.959963984540054 * math.sqrt(max(p * (1 - p), 0.0) / n)
    return p, max(p - half, 0.0), min(p + half, 1.0)


def one_sided_proportion_test(s1: int, n1: int, s2: int, n2: int) -> float:
    """p-value for H1: p1 < p2 (pooled two-proportion z-test)."""
    p1, p2 = s1 / n1, s2 / n2
    pooled = (s1 + s2) / (n1 + n2)
    se = math.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2))
    if se == 0:
        return 1.0 if p1 >= p2 else 0.0
    z = (p1 - p2) / se
    return float(0.5 * math.erfc(-z / math.sqrt(2)))
