import math

import numpy as np
import pytest

from flashsim.metrics import (
    autocorrelation, contagion_stats, crash_window_steps, first_crash_step,
    flash_crash_flags, flash_crash_indicator, kurtosis, log_returns, mean_ci,
    one_sided_proportion_test, proportion_ci, propagation_speed,
    stylised_facts,
)
from oracles import (
    naive_contagion_stats, naive_flash_crash_indicator,
    naive_propagation_speed,
)

WINDOW = crash_window_steps(50)


class TestFlashCrashIndicator:
    def test_five_minute_window_is_6000_steps(self):
        assert WINDOW == 6_000

    def test_fall_below_threshold_detected(self):
        prices = np.full(7_000, 10_000)
        prices[6_500:] = 9_490    # -5.1% vs the price 5 minutes earlier
        assert flash_crash_indicator(prices, 6_999, WINDOW) == 1

    def test_strict_inequality(self):
        prices = np.full(7_000, 10_000)
        prices[6_500:] = 9_500    # exactly -5%
        assert flash_crash_indicator(prices, 6_999, WINDOW) == 0

    def test_early_times_clamp_reference_to_zero(self):
        prices = np.full(2_000, 10_000)
        prices[900:] = 9_400
        assert flash_crash_indicator(prices, 1_000, WINDOW) == 1

    def test_scale_invariance(self):
        rng = np.random.default_rng(0)
        prices = 10_000 * np.exp(np.cumsum(rng.normal(0, 0.002, 8_000)))
        flags = flash_crash_flags(prices, WINDOW)
        assert (flash_crash_flags(prices * 7.3, WINDOW) == flags).all()

    @pytest.mark.parametrize("seed", range(25))
    def test_matches_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        prices = 10_000 * np.exp(np.cumsum(rng.normal(0, 0.01, 500)))
        window = int(rng.integers(5, 80))
        flags = flash_crash_flags(prices, window)
        for t in range(len(prices)):
            assert flags[t] == naive_flash_crash_indicator(prices, t, window)
        hits = [t for t in range(len(prices))
                if naive_flash_crash_indicator(prices, t, window)]
        assert first_crash_step(prices, window) == (hits[0] if hits else None)


class TestPropagationSpeed:
    def test_conversion_constant(self):
        # dt = 50 ms -> c = 1200; the worked example: 11 crashes, zeta 0.8,
        # percentile gap 2400 steps -> 4 crashes per minute
        first = [1_000 + 300 * i for i in range(11)]
        assert first[7] - first[0] == 2_100
        first = [1_000, 1_200, 1_500, 1_800, 2_000, 2_200, 2_500, 3_400,
                 3_500, 3_600, 9_000]
        assert propagation_speed(first, 0.8, 50) == pytest.approx(
            1_200 * 0.8 * 10 / (3_400 - 1_000))

    def test_single_crash_undefined(self):
        assert propagation_speed([5_000]) is None
        assert propagation_speed([]) is None

    def test_simultaneous_crashes_are_infinite(self):
        assert propagation_speed([100, 100, 100]) == math.inf

    @pytest.mark.parametrize("seed", range(25))
    def test_matches_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(0, 10))
        times = rng.integers(0, 5_000, size=n).tolist()
        zeta = float(rng.choice([0.5, 0.8, 1.0]))
        assert propagation_speed(times, zeta, 50) == \
            naive_propagation_speed(times, zeta, 50)


class TestContagionStats:
    def test_worked_example(self):
        p, omega = contagion_stats([0.14, 0.06, 1.0], gamma=0.05)
        assert p == 1.0
        assert omega == pytest.approx(0.4)

    def test_no_defaults(self):
        p, omega = contagion_stats([0.0, 0.0, 0.0])
        assert p == 0.0 and omega is None

    def test_boundary_is_strict(self):
        p, omega = contagion_stats([0.05], gamma=0.05)
        assert p == 0.0 and omega is None

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            contagion_stats([])

    @pytest.mark.parametrize("seed", range(25))
    def test_matches_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        fractions = rng.random(int(rng.integers(1, 12))).round(2).tolist()
        assert contagion_stats(fractions, 0.05) == \
            naive_contagion_stats(fractions, 0.05)


class TestStylisedFacts:
    def test_gaussian_baseline(self):
        rng = np.random.default_rng(42)
        prices = 10_000 * np.exp(np.cumsum(rng.normal(0, 0.001, 60_000)))
        facts = stylised_facts(prices, horizons=(1, 10, 100), max_lag=50)
        for h, k in facts.kurtosis_by_horizon.items():
            assert k == pytest.approx(3.0, abs=0.35), h
        assert facts.return_acf[0] == pytest.approx(1.0)
        assert np.abs(facts.return_acf[1:]).max() < 0.05

    def test_crash_series_has_heavy_one_step_tails(self):
        rng = np.random.default_rng(7)
        returns = rng.normal(0, 0.0005, 30_000)
        returns[15_000:15_050] = -0.002     # concentrated crash episode
        prices = 10_000 * np.exp(np.cumsum(returns))
        facts = stylised_facts(prices, horizons=(1,), max_lag=20)
        assert facts.kurtosis_by_horizon[1] > 3.0

    def test_volatility_clustering_shows_in_abs_acf(self):
        rng = np.random.default_rng(3)
        vol = np.repeat(rng.uniform(0.0002, 0.002, 150), 200)
        returns = vol * rng.standard_normal(len(vol))
        prices = 10_000 * np.exp(np.cumsum(returns))
        facts = stylised_facts(prices, horizons=(1,), max_lag=20)
        assert facts.abs_return_acf[10] > facts.return_acf[10]

    def test_requires_enough_samples(self):
        with pytest.raises(ValueError):
            stylised_facts(np.full(100, 10_000.0))

    def test_kurtosis_and_returns_helpers(self):
        assert kurtosis(np.array([1.0, 1.0, 1.0])) != kurtosis(np.array([1.0, 2.0]))
        r = log_returns(np.array([100.0, 110.0, 121.0]), 1)
        assert r == pytest.approx(np.log(1.1) * np.ones(2))
        acf = autocorrelation(np.sin(np.arange(1_000) * 0.5), 10)
        assert acf[0] == pytest.approx(1.0)


class TestEnsembleHelpers:
    def test_mean_ci_drops_undefined_and_infinite(self):
        mean, lo, hi = mean_ci([1.0, None, 3.0, math.inf])
        assert mean == 2.0 and lo < 2.0 < hi

    def test_mean_ci_empty(self):
        mean, lo, hi = mean_ci([None])
        assert math.isnan(mean)

    def test_proportion_ci(self):
        p, lo, hi = proportion_ci(8, 10)
        assert p == 0.8 and 0 <= lo < p < hi <= 1.0

    def test_one_sided_test_direction(self):
        low = one_sided_proportion_test(1, 30, 28, 30)
        high = one_sided_proportion_test(28, 30, 1, 30)
        assert low < 0.001
        assert high > 0.999
