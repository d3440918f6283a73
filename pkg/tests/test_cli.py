import csv
import math
from pathlib import Path

import pytest

from flashsim.cli import main, run_experiment
from flashsim.config import (
    ConfigError, THETA_PRESETS, format_spec, parse_config, replicate_spec,
)
from flashsim.metrics import METRICS_COLUMNS


FAST_CONFIG = """
# tiny experiment for tests
name = tiny
trials = 2
seed = 7
steps = 8000
assets = 2
funds = 2
network.rho = 1.0
theta.lambda0 = 3
theta.tau_c = 1.01
theta.c0 = 1000000
shock.quantity = 20000
"""


def write_config(tmp_path, text=FAST_CONFIG, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestParseConfig:
    def test_round_trip(self, tmp_path):
        spec = parse_config(write_config(tmp_path))
        assert spec.name == "tiny"
        assert spec.trials == 2
        assert spec.seed == 7
        assert spec.base.total_steps == 8_000
        assert spec.base.lambda0 == 3.0

    def test_theta_preset_values(self):
        assert THETA_PRESETS["theta1"] == {
            "theta.lambda0": 3.0, "theta.tau_c": 1.01, "theta.c0": 1e6}

    def test_unknown_key_rejected_with_line(self, tmp_path):
        path = write_config(tmp_path, FAST_CONFIG + "bogus.key = 3\n")
        with pytest.raises(ConfigError, match=r"bogus\.key"):
            parse_config(path)

    def test_domain_violation_rejected(self, tmp_path):
        path = write_config(tmp_path, FAST_CONFIG + "network.rho = 1.5\n")
        with pytest.raises(ConfigError, match="rho"):
            parse_config(path)

    def test_bad_value_names_key_and_line(self, tmp_path):
        path = write_config(tmp_path, FAST_CONFIG + "theta.lambda0 = wat\n")
        with pytest.raises(ConfigError, match=r":\d+.*theta\.lambda0"):
            parse_config(path)

    def test_missing_seed_derived_from_hash(self, tmp_path):
        text = FAST_CONFIG.replace("seed = 7\n", "")
        spec1 = parse_config(write_config(tmp_path, text, "a.cfg"))
        spec2 = parse_config(write_config(tmp_path, text, "a2.cfg"))
        spec2.name = spec1.name
        assert spec1.seed is None
        assert spec1.resolved_seed() == spec2.resolved_seed()

    def test_infinite_tau(self, tmp_path):
        path = write_config(tmp_path, FAST_CONFIG + "theta.tau_c = inf\n")
        spec = parse_config(path)
        assert math.isinf(spec.base.tau_c)

    def test_sweep_expansion(self, tmp_path):
        text = FAST_CONFIG + ("sweep.shock.eta = 0.02, 0.09\n"
                              "sweep.shock.delta = 1, 10, 60\n")
        spec = parse_config(write_config(tmp_path, text))
        points = spec.points()
        assert len(points) == 6
        ids = [cid for cid, _ in points]
        assert "shock.eta=0.02,shock.delta=1" in ids
        assert len(spec.trial_configs()) == 12

    def test_empty_sweep_single_point(self, tmp_path):
        spec = parse_config(write_config(tmp_path))
        assert [cid for cid, _ in spec.points()] == ["base"]

    def test_manifest_round_trip(self, tmp_path):
        spec = parse_config(write_config(tmp_path))
        manifest = format_spec(spec, resolved_seed=spec.resolved_seed())
        path = tmp_path / "manifest.txt"
        path.write_text(manifest)
        again = parse_config(path)
        assert again.trial_configs() == spec.trial_configs()


class TestReplicateSpecs:
    @pytest.mark.parametrize("figure", ["fig3", "fig4", "fig5", "fig6",
                                        "fig6b", "fig6c", "fig7", "fig8", "fig9"])
    def test_specs_parse(self, figure, tmp_path):
        path = tmp_path / f"{figure}.cfg"
        path.write_text(replicate_spec(figure))
        spec = parse_config(path)
        assert spec.trials >= 10

    def test_unknown_figure(self):
        with pytest.raises(ConfigError):
            replicate_spec("fig99")


class TestRunExperiment:
    @pytest.fixture(scope="class")
    def outdir(self, tmp_path_factory):
        tmp = tmp_path_factory.mktemp("exp")
        spec = parse_config(write_config(tmp, FAST_CONFIG
                                         + "record.prices = true\n"
                                           "record.trades = true\n"
                                           "record.network = true\n"))
        return run_experiment(spec, tmp / "out", workers=2)

    def test_metrics_csv_schema_and_rows(self, outdir):
        with (outdir / "metrics.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0].keys()) == METRICS_COLUMNS
        assert len(rows) == 2   # 1 point x 2 trials

    def test_summary_csv(self, outdir):
        with (outdir / "summary.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1
        assert rows[0]["trials"] == "2"
        assert 0.0 <= float(rows[0]["p_crash"]) <= 1.0

    def test_manifest_reproduces_metrics(self, outdir, tmp_path):
        spec = parse_config(outdir / "manifest.txt")
        again = run_experiment(spec, tmp_path / "again", workers=1)
        assert (again / "metrics.csv").read_text() == \
            (outdir / "metrics.csv").read_text()

    def test_price_and_trade_files(self, outdir):
        prices = sorted((outdir / "prices").glob("base_*.csv"))
        assert len(prices) == 2
        header = prices[0].read_text().splitlines()[0]
        assert header == "step,asset,price"
        trades = sorted((outdir / "trades").glob("*.csv"))
        assert trades and trades[0].read_text().splitlines()[0] == \
            "time,asset,price,qty,aggressor"

    def test_network_files(self, outdir):
        nets = sorted((outdir / "networks").glob("*.csv"))
        assert len(nets) == 2
        lines = nets[0].read_text().splitlines()
        assert lines[0] == "fund,asset,investment"
        assert len(lines) == 1 + 2 * 2   # rho=1: complete bipartite


class TestCliVerbs:
    def test_validate_ok(self, tmp_path, capsys):
        path = write_config(tmp_path)
        assert main(["validate", str(path)]) == 0
        assert "OK" in capsys.readouterr().out

    def test_validate_bad_config(self, tmp_path, capsys):
        path = write_config(tmp_path, FAST_CONFIG + "oops = 1\n")
        assert main(["validate", str(path)]) == 2
        assert "oops" in capsys.readouterr().err

    def test_presets_prints_thetas(self, capsys):
        assert main(["presets"]) == 0
        out = capsys.readouterr().out
        assert "theta1" in out and "theta.lambda0 = 3.0" in out

    def test_replicate_writes_spec(self, tmp_path, capsys):
        out = tmp_path / "fig7.cfg"
        assert main(["replicate", "fig7", "--out", str(out)]) == 0
        assert out.exists()
        spec = parse_config(out)
        assert len(spec.points()) == 30

    def test_run_tiny_experiment(self, tmp_path, capsys):
        config = write_config(tmp_path, FAST_CONFIG.replace("trials = 2", "trials = 1"))
        outdir = tmp_path / "run_out"
        assert main(["run", str(config), "--out", str(outdir), "--workers", "1"]) == 0
        assert (outdir / "metrics.csv").exists()
