import json

import pytest

from risloc.cli import main


def write_fast_config(tmp_path, **extra):
    config = {
        "trials": 2,
        "snr_list_db": [10.0, 20.0],
        "k_list": [1],
        "methods": ["omp"],
        "solver": {"max_iters": 50},
        **extra,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return path


class TestCli:
    def test_simulate(self, tmp_path, capsys):
        cfg = write_fast_config(tmp_path)
        rc = main(["simulate", "--config", str(cfg), "--snr", "15", "--k", "1"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "omp" in out and "rmse_az" in out

    def test_simulate_noiseless_flag(self, tmp_path, capsys):
        cfg = write_fast_config(tmp_path)
        rc = main(["simulate", "--config", str(cfg), "--snr", "inf", "--k", "1"])
        assert rc == 0
        assert "inf" in capsys.readouterr().out

    def test_rmse_vs_snr_writes_artifacts(self, tmp_path, capsys):
        cfg = write_fast_config(tmp_path)
        out_dir = tmp_path / "out"
        rc = main(["rmse-vs-snr", "--config", str(cfg), "--out", str(out_dir)])
        assert rc == 0
        assert (out_dir / "rmse_vs_snr.csv").exists()
        assert (out_dir / "rmse_vs_snr_agg.csv").exists()
        assert (out_dir / "rmse_vs_snr_meta.json").exists()

    def test_error_vs_k_writes_artifacts(self, tmp_path):
        cfg = write_fast_config(tmp_path)
        out_dir = tmp_path / "out"
        rc = main(["error-vs-k", "--config", str(cfg), "--out", str(out_dir)])
        assert rc == 0
        assert (out_dir / "error_vs_k.csv").exists()

    def test_method_toggle_and_trials_override(self, tmp_path):
        import csv

        cfg = write_fast_config(tmp_path)
        out_dir = tmp_path / "out"
        rc = main(
            [
                "rmse-vs-snr",
                "--config",
                str(cfg),
                "--out",
                str(out_dir),
                "--trials",
                "1",
                "--methods",
                "omp,music",
            ]
        )
        assert rc == 0
        with open(out_dir / "rmse_vs_snr.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert {r["method"] for r in rows} == {"omp", "music"}
        assert len(rows) == 2 * 2  # 2 snr points x 2 methods x 1 trial

    def test_calibrate_subspace(self, capsys):
        rc = main(["calibrate-subspace", "--max-j", "3"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "worst_case_error" in out
        assert len([l for l in out.splitlines() if l.strip() and l.strip()[0].isdigit()]) == 3

    def test_bad_config_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"not_a_key": 1}))
        with pytest.raises(ValueError):
            main(["simulate", "--config", str(path)])

    def test_preset_flag(self, tmp_path):
        # reduced preset overrides trials/snr list; methods trimmed for speed
        cfg = write_fast_config(tmp_path)
        from risloc.harness import ExperimentConfig, apply_preset

        reduced = apply_preset(ExperimentConfig.from_file(cfg), "reduced")
        assert reduced.trials == 15
        assert len(reduced.snr_list_db) == 5
