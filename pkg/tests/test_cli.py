import csv
import json
import math

import pytest

from sparse_detect import cli
from sparse_detect.config import (
    CONFIGS,
    RiskConfig,
    config_from_dict,
    grid_hash,
    load_config,
    to_dict,
)
from sparse_detect.errors import InvalidConfigError


def run(tmp_path, command, config=None, *extra, name=None):
    args = [command, "--out", str(tmp_path / "out")]
    if config is not None:
        path = tmp_path / f"{command}.json"
        path.write_text(json.dumps(config))
        args += ["--config", str(path)]
    return cli.main(args + list(extra))


def read(tmp_path, name):
    text = (tmp_path / "out" / name).read_bytes().decode("utf-8")
    assert "\r" not in text
    lines = text.splitlines()
    assert lines[0].startswith("# schema_version=1 ")
    return lines[0], list(csv.DictReader(lines[1:]))


class TestConfig:
    @pytest.mark.parametrize("command", list(CONFIGS))
    def test_defaults_round_trip(self, command):
        cfg = config_from_dict(command, {})
        again = config_from_dict(command, json.loads(json.dumps(to_dict(cfg))))
        assert again == cfg
        assert grid_hash(again) == grid_hash(cfg)

    def test_unknown_field(self):
        with pytest.raises(InvalidConfigError, match="replicate"):
            config_from_dict("risk", {"replicate": 10})

    def test_missing_filled(self):
        cfg = config_from_dict("risk", {"n": 80})
        assert cfg.n == 80 and cfg.p == RiskConfig().p

    def test_schema_version(self):
        with pytest.raises(InvalidConfigError):
            config_from_dict("rates", {"schema_version": 2})

    @pytest.mark.parametrize(
        "data",
        [{"n": "500"}, {"n": True}, {"a_grid": []}, {"replicates": 10}, {"design": "cauchy"},
         {"alternatives": ["nope"]}, {"sigma": -1}],
    )
    def test_bad_values(self, data):
        with pytest.raises(InvalidConfigError):
            config_from_dict("risk", data)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InvalidConfigError):
            load_config("rates", tmp_path / "absent.json")


class TestRates:
    def test_single_point(self, tmp_path):
        assert run(tmp_path, "rates", {"n": [100], "p": [1], "s": [1], "sigma": [1.0]}, "--seed", "5") == 0
        meta, rows = read(tmp_path, "rates.csv")
        assert "seed=5" in meta and "grid_hash=" in meta
        assert len(rows) == 1 and float(rows[0]["psi"]) == 0.01
        assert list(rows[0]) == list(cli.RATES_HEADER)

    def test_sigma_zero(self, tmp_path):
        assert run(tmp_path, "rates", {"sigma": [0.0]}) == 0
        _, rows = read(tmp_path, "rates.csv")
        assert all(float(r[k]) == 0.0 for r in rows for k in cli.RATES_HEADER if k.startswith("lambda"))

    def test_skips_s_above_p(self, tmp_path):
        assert run(tmp_path, "rates", {"p": [4], "s": [1, 2, 8]}) == 0
        _, rows = read(tmp_path, "rates.csv")
        assert [r["s"] for r in rows] == ["1", "2"]

    def test_empty_grid(self, tmp_path):
        assert run(tmp_path, "rates", {"p": [2], "s": [5]}) == 2

    def test_byte_identical(self, tmp_path):
        run(tmp_path, "rates")
        first = (tmp_path / "out" / "rates.csv").read_bytes()
        run(tmp_path, "rates")
        assert (tmp_path / "out" / "rates.csv").read_bytes() == first

    def test_seventeen_digits(self, tmp_path):
        run(tmp_path, "rates", {"n": [1000], "p": [100], "s": [2]})
        _, rows = read(tmp_path, "rates.csv")
        assert rows[0]["psi"] == format(2 * math.log1p(100 / 4) / 1000, ".17g")


class TestRisk:
    small = {"n": 60, "p": 20, "s": 2, "replicates": 100, "a_grid": [0.5, 4.0]}

    def test_sigma_zero(self, tmp_path):
        assert run(tmp_path, "risk", dict(self.small, sigma=0.0)) == 0
        _, rows = read(tmp_path, "risk.csv")
        assert all(float(r["total"]) == 0.0 for r in rows)
        assert (tmp_path / "out" / "risk.gp").read_text().count("risk.csv") == 1

    def test_threads_env(self, tmp_path, monkeypatch):
        run(tmp_path, "risk", self.small, "--threads", "1")
        one = (tmp_path / "out" / "risk.csv").read_bytes()
        monkeypatch.setenv("SPARSE_DETECT_THREADS", "3")
        run(tmp_path, "risk", self.small)
        assert (tmp_path / "out" / "risk.csv").read_bytes() == one

    def test_bad_env_threads(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SPARSE_DETECT_THREADS", "zero")
        assert run(tmp_path, "risk", self.small) == 2

    @pytest.mark.slow
    def test_default_config_separates(self, tmp_path):
        assert run(tmp_path, "risk", None, "--seed", "11") == 0
        _, rows = read(tmp_path, "risk.csv")
        lo, hi = rows[0], rows[-1]
        slack = 2 * math.hypot(float(lo["half_width"]), float(hi["half_width"]))
        assert float(hi["total"]) < float(lo["total"]) - slack


class TestMse:
    def test_sigma_zero(self, tmp_path):
        assert run(tmp_path, "mse", {"sigma": 0.0, "replicates": 100, "s_grid": [1, 4]}) == 0
        _, rows = read(tmp_path, "mse.csv")
        assert all(float(r["mse"]) <= 1e-20 for r in rows)

    def test_empty_grid(self, tmp_path):
        assert run(tmp_path, "mse", {"s_grid": []}) == 2

    def test_columns(self, tmp_path):
        assert run(tmp_path, "mse", {"n": 60, "p": 20, "replicates": 100, "s_grid": [2]}) == 0
        _, rows = read(tmp_path, "mse.csv")
        r = rows[0]
        assert float(r["ratio"]) == pytest.approx(float(r["mse"]) / float(r["psi_scaled"]))


class TestLowerBound:
    def test_default(self, tmp_path):
        assert run(tmp_path, "lower-bound") == 0
        _, rows = read(tmp_path, "lower_bound.csv")
        assert {r["status"] for r in rows} <= {"ok", "heavy_tail"}
        first = rows[0]
        assert float(first["chi2_mc"]) < 0.01 and float(first["lecam_floor"]) > 0.9
        half = next(r for r in rows if float(r["A"]) == 0.5)
        assert float(half["chi2_mc"]) + float(half["half_width"]) < 1.0

    def test_heavy_tail_row_kept(self, tmp_path):
        cfg = {"a_grid": [0.5, 12.0], "pair_samples": 100, "design_samples": 100}
        assert run(tmp_path, "lower-bound", cfg) == 0
        _, rows = read(tmp_path, "lower_bound.csv")
        assert [r["status"] for r in rows] == ["ok", "heavy_tail"]
        assert rows[1]["chi2_mc"] == "nan"


class TestVerify:
    quick = {
        "singular_value_replicates": 200, "gram_identity_designs": 3, "tail_x": [1.0, 3.0],
        "correlation_samples": 20000, "correlation_rho": [0.5], "correlation_x": [1.0],
        "inner_product_n": [50], "inner_product_replicates": 200,
    }

    def test_report_and_exit(self, tmp_path, capsys):
        code = run(tmp_path, "verify-lemmas", self.quick)
        _, rows = read(tmp_path, "verify_lemmas.csv")
        ids = {r["lemma_id"] for r in rows}
        assert {
            "singular_value_concentration", "gram_diagonal_distance", "inverse_chi2_moment",
            "truncated_fourth_moment", "truncated_correlation", "inner_product_concentration",
        } <= ids
        failing = [r for r in rows if r["fitted_constant"] == "" and r["pass"] == "false"]
        assert code == (1 if failing else 0)
        assert all(r["lemma_id"] == "truncated_fourth_moment" for r in failing)
        assert "FAIL truncated_fourth_moment" in capsys.readouterr().err

    def test_one_over_105_row(self, tmp_path):
        run(tmp_path, "verify-lemmas", dict(self.quick, inverse_moment_d=[9], inverse_moment_m=[4]))
        _, rows = read(tmp_path, "verify_lemmas.csv")
        row = next(r for r in rows if r["lemma_id"] == "inverse_chi2_moment_bound")
        assert row["lhs"] == row["rhs_bound"] == format(1 / 105, ".17g")

    def test_passing_grid_exits_zero(self, tmp_path):
        assert run(tmp_path, "verify-lemmas", dict(self.quick, tail_x=[0.1, 0.2])) == 0

    def test_malformed(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{oops")
        assert cli.main(["verify-lemmas", "--config", str(bad), "--out", str(tmp_path)]) == 2


class TestArgs:
    def test_unknown_command(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["frobnicate"])
        assert exc.value.code == 2

    @pytest.mark.parametrize("seed", ["-1", str(2**64), "x"])
    def test_bad_seed(self, seed):
        with pytest.raises(SystemExit) as exc:
            cli.main(["rates", "--seed", seed])
        assert exc.value.code == 2

    def test_max_seed(self, tmp_path):
        assert cli.main(["rates", "--seed", str(2**64 - 1), "--out", str(tmp_path)]) == 0

    def test_console_script(self, tmp_path):
        import subprocess
        import sys

        out = subprocess.run(
            [sys.executable, "-m", "sparse_detect", "rates", "--out", str(tmp_path)],
            capture_output=True, text=True,
        )
        assert out.returncode == 0
        assert (tmp_path / "rates.csv").exists()
