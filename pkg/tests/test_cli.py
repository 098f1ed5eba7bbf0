import csv
import json

import numpy as np
import pytest

from uwhfl.cli import (AGG_CSV_COLUMNS, SUMMARY_COLUMNS, aggregate_rows,
                       emit_csv, main)
from uwhfl.metrics import CSV_COLUMNS, RoundReport
from uwhfl.topology import Topology


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


class TestEmitCsv:
    def test_zero_rounds_header_only(self, tmp_path):
        target = tmp_path / "rounds.csv"
        emit_csv([], target)
        text = target.read_text(encoding="utf-8")
        assert text == ",".join(CSV_COLUMNS) + "\n"

    def test_parse_back_equality(self, tmp_path):
        reports = [RoundReport(round=0, e_s2f=0.1, e_f2f=0.02, e_f2g=0.3,
                               e_rx=0.001, e_comp=1.0 / 3.0, latency_s=2.5,
                               participation=0.9, mean_train_loss=12.25,
                               battery_min=499.0, battery_mean=499.5,
                               payload_bits_total=1292),
                   RoundReport(round=1)]
        target = tmp_path / "rounds.csv"
        emit_csv(reports, target)
        rows = read_csv(target)
        assert len(rows) == 2
        assert all(tuple(r) == CSV_COLUMNS for r in rows)
        assert float(rows[0]["e_comp"]) == 1.0 / 3.0  # full precision
        assert float(rows[0]["e_round"]) == 0.1 + 0.02 + 0.3
        assert int(rows[0]["payload_bits_total"]) == 1292

    def test_lf_line_endings(self, tmp_path):
        target = tmp_path / "rounds.csv"
        emit_csv([RoundReport(round=0)], target)
        assert b"\r" not in target.read_bytes()


class TestAggregateRows:
    def test_mean_std_oracle(self):
        rows = []
        for seed, e in ((0, 1.0), (1, 2.0), (2, 3.0)):
            row = {c: 0.0 for c in SUMMARY_COLUMNS}
            row.update(method="m", n_sensors=10, seed=seed, e_total=e)
            rows.append(row)
        agg = aggregate_rows(rows)
        assert len(agg) == 1
        assert agg[0]["e_total_mean"] == pytest.approx(2.0)
        assert agg[0]["e_total_std"] == pytest.approx(np.std([1.0, 2.0, 3.0]))
        assert agg[0]["n_seeds"] == 3

    def test_groups_by_method_and_scale(self):
        rows = []
        for method in ("a", "b"):
            for n in (10, 20):
                row = {c: 0.0 for c in SUMMARY_COLUMNS}
                row.update(method=method, n_sensors=n, seed=0)
                rows.append(row)
        assert len(aggregate_rows(rows)) == 4


class TestRunCommand:
    def test_single_run_files(self, tmp_path):
        out = tmp_path / "out"
        rc = main(["run", "--n-sensors", "10", "--rounds", "1",
                   "--seed", "0", "--out", str(out)])
        assert rc == 0
        rows = read_csv(out / "rounds.csv")
        assert len(rows) == 1
        doc = json.loads((out / "summary.json").read_text())
        assert set(doc["evaluation"]) >= {"f1", "pa_f1", "threshold"}
        assert set(doc["energy_j"]) == {"e_s2f", "e_f2f", "e_f2g", "e_rx",
                                        "e_comp", "e_round", "e_total"}

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("[nope]\nx = 1\n")
        rc = main(["run", "--config", str(bad)])
        assert rc == 2
        assert "config error" in capsys.readouterr().err


class TestGridCommand:
    def grid_args(self, out, jobs=1):
        return ["grid", "--n-sensors", "8", "--rounds", "1",
                "--methods", "hfl_nocoop", "--seeds", "0", "1",
                "--out", str(out), "--jobs", str(jobs)]

    def test_grid_outputs(self, tmp_path):
        out = tmp_path / "g"
        assert main(self.grid_args(out)) == 0
        rows = read_csv(out / "summary.csv")
        assert len(rows) == 2
        assert tuple(rows[0]) == SUMMARY_COLUMNS
        agg = read_csv(out / "summary_agg.csv")
        assert tuple(agg[0]) == AGG_CSV_COLUMNS
        assert (out / "hfl_nocoop_n8_s0" / "rounds.csv").is_file()
        assert (out / "hfl_nocoop_n8_s1" / "summary.json").is_file()
        assert not (out / "failures.json").exists()

    def test_agg_matches_recomputation(self, tmp_path):
        out = tmp_path / "g"
        main(self.grid_args(out))
        rows = read_csv(out / "summary.csv")
        agg = read_csv(out / "summary_agg.csv")[0]
        vals = [float(r["e_total"]) for r in rows]
        assert float(agg["e_total_mean"]) == pytest.approx(np.mean(vals), rel=1e-12)
        assert float(agg["e_total_std"]) == pytest.approx(np.std(vals), abs=1e-12)

    def test_rerun_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(self.grid_args(a))
        main(self.grid_args(b))
        for rel in ("summary.csv", "summary_agg.csv",
                    "hfl_nocoop_n8_s0/rounds.csv",
                    "hfl_nocoop_n8_s0/summary.json"):
            assert (a / rel).read_bytes() == (b / rel).read_bytes()


class TestReachCommand:
    def test_prints_statistics(self, capsys):
        rc = main(["reach", "--n-sensors", "30", "--trials", "2", "--seed", "0"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "direct_mean=" in out and "fog_mean=" in out


class TestDumpTopology:
    def test_writes_loadable_json(self, tmp_path):
        target = tmp_path / "topo.json"
        rc = main(["dump-topology", "--n-sensors", "15", "--seed", "2",
                   "--out", str(target)])
        assert rc == 0
        topo = Topology.load(target)
        assert topo.sensor_pos.shape == (15, 3)
        assert topo.seed == 2
