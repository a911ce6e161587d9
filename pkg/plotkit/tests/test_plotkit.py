import csv
import hashlib
import math

import numpy as np
import pytest

from plotkit import FigureSpec, SchemaError, aggregate, read_rows, render

HEADER = [
    "method",
    "snr_db",
    "k",
    "trial",
    "rmse_azimuth",
    "rmse_elevation",
    "rmse_range",
    "positioning_error",
    "solver_iters",
    "wall_time_s",
    "seed",
    "status",
]


def write_csv(path, rows, header=HEADER):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def synthetic_rows(methods=("proposed", "omp"), snrs=(0, 5, 10, 15, 20), trials=4, k=2):
    rng = np.random.default_rng(0)
    rows = []
    for m_i, method in enumerate(methods):
        for snr in snrs:
            for t in range(trials):
                scale = (m_i + 1) * 10 ** (-snr / 20)
                rows.append(
                    [
                        method,
                        repr(float(snr)),
                        k,
                        t,
                        repr(scale * (0.01 + 0.001 * rng.random())),
                        repr(scale * (0.02 + 0.001 * rng.random())),
                        repr(scale * (0.5 + 0.05 * rng.random())),
                        repr(scale * (0.6 + 0.05 * rng.random())),
                        100,
                        0.5,
                        12345,
                        "ok",
                    ]
                )
    return rows


class TestReadRows:
    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(SchemaError):
            read_rows(path)

    def test_header_only_rejected_and_no_output(self, tmp_path):
        path = tmp_path / "header.csv"
        write_csv(path, [])
        out = tmp_path / "fig.png"
        with pytest.raises(SchemaError):
            render(FigureSpec(csv_path=str(path), kind="rmse-vs-snr", out_path=str(out)))
        assert not out.exists()

    def test_missing_columns_listed(self, tmp_path):
        path = tmp_path / "bad.csv"
        write_csv(path, [["omp", "1"]], header=["method", "snr_db"])
        with pytest.raises(SchemaError) as err:
            read_rows(path)
        assert "rmse_azimuth" in str(err.value)
        assert "positioning_error" in str(err.value)

    def test_round_trip(self, tmp_path):
        path = tmp_path / "rows.csv"
        write_csv(path, synthetic_rows())
        rows = read_rows(path)
        assert len(rows) == 2 * 5 * 4
        assert rows[0]["method"] == "proposed"


class TestAggregate:
    def test_median_and_rms(self, tmp_path):
        path = tmp_path / "rows.csv"
        vals = [0.1, 0.2, 0.3, 0.4]
        rows = [
            ["m", "0.0", 2, t, repr(v), repr(v), repr(v), repr(v), 0, 0.0, 1, "ok"]
            for t, v in enumerate(vals)
        ]
        write_csv(path, rows)
        agg = aggregate(read_rows(path))
        assert len(agg) == 1
        assert agg[0]["rmse_azimuth_median"] == pytest.approx(0.25)
        arr = np.array(vals)
        assert agg[0]["rmse_azimuth_rms"] == pytest.approx(float(np.sqrt(np.mean(arr**2))))

    def test_failed_rows_skipped(self, tmp_path):
        path = tmp_path / "rows.csv"
        rows = [
            ["m", "0.0", 2, 0, "0.1", "0.1", "0.1", "0.1", 0, 0.0, 1, "ok"],
            ["m", "0.0", 2, 1, "nan", "nan", "nan", "nan", 0, 0.0, 1, "error: boom"],
        ]
        write_csv(path, rows)
        agg = aggregate(read_rows(path))
        assert agg[0]["n_trials"] == 1
        assert not math.isnan(agg[0]["rmse_azimuth_median"])


class TestRender:
    def test_rmse_vs_snr_renders(self, tmp_path):
        path = tmp_path / "rows.csv"
        write_csv(path, synthetic_rows())
        out = tmp_path / "fig1.png"
        render(FigureSpec(csv_path=str(path), kind="rmse-vs-snr", out_path=str(out)))
        assert out.exists() and out.stat().st_size > 10_000

    def test_error_vs_k_renders(self, tmp_path):
        path = tmp_path / "rows.csv"
        rows = []
        for k in (1, 2, 3):
            for method in ("proposed", "omp"):
                for t in range(3):
                    rows.append(
                        [method, "15.0", k, t, "0.01", "0.01", "0.5", repr(0.1 * k), 0, 0.0, 1, "ok"]
                    )
        write_csv(path, rows)
        out = tmp_path / "fig2.svg"
        render(FigureSpec(csv_path=str(path), kind="error-vs-k", out_path=str(out), log_y=True))
        assert out.exists() and out.stat().st_size > 1_000

    def test_rerender_is_byte_identical(self, tmp_path):
        path = tmp_path / "rows.csv"
        write_csv(path, synthetic_rows())
        hashes = []
        for name in ("a.png", "b.png"):
            out = tmp_path / name
            render(FigureSpec(csv_path=str(path), kind="rmse-vs-snr", out_path=str(out)))
            hashes.append(hashlib.sha256(out.read_bytes()).hexdigest())
        assert hashes[0] == hashes[1]

    def test_unknown_kind_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            FigureSpec(csv_path="x.csv", kind="pie-chart", out_path="x.png")

    def test_structure_two_methods_five_points(self, tmp_path):
        path = tmp_path / "rows.csv"
        write_csv(path, synthetic_rows(methods=("proposed", "omp"), snrs=(0, 5, 10, 15, 20)))
        agg = aggregate(read_rows(path))
        methods = {e["method"] for e in agg}
        assert methods == {"proposed", "omp"}
        for m in methods:
            assert len([e for e in agg if e["method"] == m]) == 5


class TestCli:
    def test_cli_round_trip(self, tmp_path, capsys):
        from plotkit.cli import main

        path = tmp_path / "rows.csv"
        write_csv(path, synthetic_rows())
        out = tmp_path / "fig.png"
        rc = main(["rmse-vs-snr", "--in", str(path), "--out", str(out)])
        assert rc == 0 and out.exists()

    def test_cli_error_exit_code(self, tmp_path):
        from plotkit.cli import main

        missing = tmp_path / "nope.csv"
        rc = main(["rmse-vs-snr", "--in", str(missing), "--out", str(tmp_path / "f.png")])
        assert rc == 2
