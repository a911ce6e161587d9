"""Acceptance checks for the rendering package.

Uses benchmark CSVs produced by the harness CLI (the shared external
interface). Prefers reduced-preset artifacts left by the harness
acceptance run when present; otherwise generates small CSVs by invoking
the CLI with a fast configuration.
"""

import csv
import hashlib
import json
import os
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from plotkit import FigureSpec, aggregate, read_rows, render

ARTIFACT_DIR = Path(
    os.environ.get("RISLOC_ACCEPTANCE_OUT", Path(__file__).resolve().parents[2] / "out" / "acceptance")
)


def _generate_via_cli(tmp_path: Path) -> Path:
    """Produce raw/aggregate CSVs through the harness CLI."""
    if shutil.which("risloc") is None:
        pytest.skip("harness CLI not installed")
    config = {
        "trials": 2,
        "snr_list_db": [5.0, 15.0, 25.0],
        "k_list": [1, 2],
        "methods": ["omp", "music"],
        "solver": {"max_iters": 50},
        "scene": {"gain_model": "unit"},
    }
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(config))
    out_dir = tmp_path / "out"
    for cmd in ("rmse-vs-snr", "error-vs-k"):
        res = subprocess.run(
            ["risloc", cmd, "--config", str(cfg_path), "--out", str(out_dir)],
            capture_output=True,
            text=True,
            timeout=600,
        )
        assert res.returncode == 0, res.stderr
    return out_dir


@pytest.fixture(scope="module")
def csv_dir(tmp_path_factory):
    if (ARTIFACT_DIR / "rmse_vs_snr.csv").exists() and (ARTIFACT_DIR / "error_vs_k.csv").exists():
        return ARTIFACT_DIR
    return _generate_via_cli(tmp_path_factory.mktemp("harness"))


class TestSecondaryAcceptance:
    def test_renders_both_figure_kinds(self, csv_dir, tmp_path):
        for kind, name in (("rmse-vs-snr", "rmse_vs_snr.csv"), ("error-vs-k", "error_vs_k.csv")):
            out = tmp_path / f"{kind}.png"
            render(FigureSpec(csv_path=str(csv_dir / name), kind=kind, out_path=str(out)))
            assert out.exists() and out.stat().st_size > 10_000
            print(f"PASS secondary: rendered {kind} from {name}")

    def test_reaggregated_medians_match_harness(self, csv_dir):
        for name, agg_name in (
            ("rmse_vs_snr.csv", "rmse_vs_snr_agg.csv"),
            ("error_vs_k.csv", "error_vs_k_agg.csv"),
        ):
            ours = {
                (e["method"], e["snr_db"], e["k"]): e
                for e in aggregate(read_rows(csv_dir / name))
            }
            with open(csv_dir / agg_name, newline="") as fh:
                for row in csv.DictReader(fh):
                    key = (row["method"], float(row["snr_db"]), int(row["k"]))
                    assert key in ours
                    for metric in (
                        "rmse_azimuth_median",
                        "rmse_elevation_median",
                        "rmse_range_median",
                        "positioning_error_median",
                        "rmse_azimuth_rms",
                        "rmse_elevation_rms",
                        "rmse_range_rms",
                        "positioning_error_rms",
                    ):
                        assert abs(ours[key][metric] - float(row[metric])) <= 1e-12 * max(
                            1.0, abs(float(row[metric]))
                        )
        print("PASS secondary: re-aggregated medians and RMS match the harness tables to 1e-12")

    def test_golden_hash_stable(self, csv_dir, tmp_path):
        hashes = []
        for name in ("one.png", "two.png"):
            out = tmp_path / name
            render(
                FigureSpec(
                    csv_path=str(csv_dir / "rmse_vs_snr.csv"),
                    kind="rmse-vs-snr",
                    out_path=str(out),
                )
            )
            hashes.append(hashlib.sha256(out.read_bytes()).hexdigest())
        assert hashes[0] == hashes[1]
        print(f"PASS secondary: golden hash stable across runs ({hashes[0][:16]})")
