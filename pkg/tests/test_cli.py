import csv
import json
import re
import subprocess
import sys

import numpy as np
import pytest

from compactformer.cli import main


def run(*argv):
    """Exit code of the CLI, whether it returns or raises SystemExit."""
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def sine_grid(tmp_path_factory):
    out = tmp_path_factory.mktemp("grid")
    code = run("bench", "run", "--families", "patchtst", "--signals", "sine", "--epochs", 1, "--out", out)
    return code, out


class TestParser:
    def test_help(self, capsys):
        assert run("--help") == 0
        assert "bench" in capsys.readouterr().out

    @pytest.mark.parametrize("argv", [[], ["bench"], ["bench", "run", "--patches", "x"], ["fly"],
                                      ["bench", "run", "--families", "lstm"]])
    def test_usage_errors(self, argv):
        assert run(*argv) == 1

    def test_bad_env_seed(self, monkeypatch, tmp_path):
        monkeypatch.setenv("COMPACTFORMER_SEED", "abc")
        assert run("dynsys", "simulate", "--system", "vdp", "--out", tmp_path / "x.csv") == 1

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "compactformer", "--help"], capture_output=True, text=True)
        assert proc.returncode == 0 and "signals" in proc.stdout


class TestSignalsGen:
    def test_all(self, tmp_path):
        assert run("signals", "gen", "--out", tmp_path) == 0
        files = sorted(tmp_path.glob("*.csv"))
        assert len(files) == 10
        rows = read_csv(tmp_path / "sine.csv")
        assert rows[0] == ["t", "value"] and len(rows) == 501
        assert rows[11] == ["10", "1.000000"]

    def test_noisy_seeded(self, tmp_path):
        for d in ("a", "b"):
            assert run("signals", "gen", "--id", "sine", "--noisy", "--seed", 7, "--out", tmp_path / d) == 0
        a, b = (tmp_path / d / "sine_noisy.csv" for d in ("a", "b"))
        assert a.read_bytes() == b.read_bytes()
        assert run("signals", "gen", "--id", "sine", "--out", tmp_path / "a") == 0
        assert a.read_bytes() != (tmp_path / "a" / "sine.csv").read_bytes()

    def test_normalize(self, tmp_path):
        assert run("signals", "gen", "--id", "cubic", "--normalize", "--out", tmp_path) == 0
        vals = np.array([float(r[1]) for r in read_csv(tmp_path / "cubic.csv")[1:]])
        assert vals.min() == 0.0 and vals.max() == 1.0

    def test_bad_id(self, tmp_path, capsys):
        assert run("signals", "gen", "--id", "square", "--out", tmp_path) == 1
        assert "square" in capsys.readouterr().err


class TestBenchRun:
    def test_filtered_grid_three_rows(self, tmp_path):
        assert run("bench", "run", "--families", "patchtst", "--signals", "sine", "--patches", 20, "--horizons", 8,
                   "--epochs", 2, "--out", tmp_path) == 0
        rows = read_csv(tmp_path / "results.csv")
        assert rows[0] == "signal,family,variant,patch,horizon,noise,rmse,mae,epochs,seed,wall_ms".split(",")
        assert [r[2] for r in rows[1:]] == ["minimal", "standard", "full"]
        assert not (tmp_path / "failures.csv").exists()
        assert json.loads((tmp_path / "config.json").read_text())["grid"]["epochs"] == 2

    def test_grid_outputs(self, sine_grid):
        code, out = sine_grid
        assert code == 0
        assert len(read_csv(out / "results.csv")) == 1 + 75
        agg = read_csv(out / "aggregate.csv")
        assert agg[0] == ["family", "variant", "patch", "horizon", "mean_rmse", "mean_mae"] and len(agg) == 76

    def test_heatmap_structure(self, sine_grid):
        _, out = sine_grid
        svg = (out / "heatmap_patchtst_clean_rmse.svg").read_text()
        panels = svg.split('<g class="heatmap"')[1:]
        assert len(panels) == 3
        for panel in panels:
            cells = re.findall(r'data-p="(\d+)" data-h="(\d+)"', panel)
            assert len(cells) == 25
            assert {int(p) for p, _ in cells} == {4, 8, 12, 16, 20}
            assert {int(h) for _, h in cells} == {2, 4, 8, 12, 20}
        assert (out / "heatmap_patchtst_clean_mae.svg").exists()

    def test_aggregate_and_best_table_from_results(self, sine_grid, tmp_path, capsys):
        _, out = sine_grid
        assert run("bench", "aggregate", "--results", out / "results.csv", "--out", tmp_path) == 0
        assert (tmp_path / "aggregate.csv").read_bytes() == (out / "aggregate.csv").read_bytes()
        capsys.readouterr()
        assert run("best-table", "--results", out / "results.csv") == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "signal,family,variant,patch,horizon,rmse,mae" and len(lines) == 2

    def test_partial_failure_exit_code(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"grid": {"length": 30, "patch_lengths": [4, 20], "horizons": [2, 20],
                                            "signals": ["sine"], "variants": ["minimal"], "epochs": 1}}))
        assert run("bench", "run", "--config", cfg, "--out", tmp_path / "o") == 2
        assert len(read_csv(tmp_path / "o" / "results.csv")) == 4
        fails = read_csv(tmp_path / "o" / "failures.csv")
        assert len(fails) == 2 and fails[1][3:5] == ["20", "20"]

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert run("bench", "run", "--signals", "sine", "--patches", 4, "--horizons", 2, "--epochs", 1,
                   "--out", blocker / "sub") == 1

    def test_bad_config_key(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"grid": {"epoch": 3}}')
        assert run("bench", "run", "--config", cfg, "--out", tmp_path / "o") == 1


class TestKoopformerTrain:
    def test_small_vdp_run(self, tmp_path):
        assert run("koopformer", "train", "--system", "vdp", "--epochs", 3, "--out", tmp_path) == 0
        loss = read_csv(tmp_path / "loss.csv")
        assert loss[0] == ["epoch", "mse", "lyapunov", "total", "max_singular_value"] and len(loss) == 4
        spectral = np.array(read_csv(tmp_path / "spectral.csv")[1:], dtype=float)
        assert spectral.shape == (3, 17) and np.all(spectral[:, 1:] <= 0.99)

    def test_lorenz_forecast_columns(self, tmp_path):
        assert run("koopformer", "train", "--system", "lorenz", "--patch", 10, "--epochs", 1, "--out", tmp_path) == 0
        rows = read_csv(tmp_path / "forecast.csv")
        assert rows[0] == ["window", "step", "true_x1", "true_x2", "true_x3", "pred_x1", "pred_x2", "pred_x3"]
        assert [r[1] for r in rows[1:6]] == ["1", "2", "3", "4", "5"]

    def test_invalid_backbone(self, tmp_path):
        assert run("koopformer", "train", "--backbone", "rnn", "--out", tmp_path) == 1


class TestDynsysSimulate:
    def test_header_and_rows(self, tmp_path):
        path = tmp_path / "l.csv"
        assert run("dynsys", "simulate", "--system", "lorenz", "--out", path) == 0
        rows = read_csv(path)
        assert rows[0] == ["t", "x1", "x2", "x3"] and len(rows) == 2001
        assert rows[1] == ["0.000000", "1.000000", "1.000000", "1.000000"]

    def test_stdout(self, capsys):
        assert run("dynsys", "simulate", "--system", "vdp", "--noise-sigma", 0) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "t,x1,x2" and lines[2] == "0.010000,2.000000,-0.020000"

    def test_env_seed_and_flag_precedence(self, tmp_path, monkeypatch):
        monkeypatch.setenv("COMPACTFORMER_SEED", "5")
        run("dynsys", "simulate", "--system", "vdp", "--out", tmp_path / "env.csv")
        run("dynsys", "simulate", "--system", "vdp", "--seed", 5, "--out", tmp_path / "flag.csv")
        run("dynsys", "simulate", "--system", "vdp", "--seed", 6, "--out", tmp_path / "other.csv")
        assert (tmp_path / "env.csv").read_bytes() == (tmp_path / "flag.csv").read_bytes()
        assert (tmp_path / "env.csv").read_bytes() != (tmp_path / "other.csv").read_bytes()

    def test_missing_system(self):
        assert run("dynsys", "simulate") == 1
