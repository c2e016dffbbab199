"""Command-line surface: exit codes, machine records, file outputs."""

import json

import pytest

from corpus import Q1, Q2

from tierquery.cli import main
from tierquery.columnar import deserialize_columnar, ingest_csv, schema_from_json


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    records = [json.loads(line) for line in captured.out.splitlines() if line]
    return code, records, captured.err


@pytest.fixture()
def store(tmp_path, capsys):
    """Generated laghos dataset put into a fresh store; returns paths."""
    prefix = tmp_path / "data" / "mesh"
    code, records, _ = run_cli(
        capsys, "gen", "laghos-box", "--rows", "20000", "--seed", "11",
        "--selectivity", "0.001", "--out", str(prefix))
    assert code == 0
    root = tmp_path / "store"
    code, records, err = run_cli(
        capsys, "--root", str(root), "put", "lab", "mesh",
        str(prefix) + ".csv", str(prefix) + ".schema.json")
    assert code == 0
    assert records[0]["rows"] == 20000
    return root, prefix


class TestGen:
    def test_deterministic_output(self, tmp_path, capsys):
        outs = []
        for name in ("a", "b"):
            prefix = tmp_path / name
            code, _, _ = run_cli(capsys, "gen", "deepwater-threshold",
                                 "--rows", "500", "--seed", "7",
                                 "--out", str(prefix))
            assert code == 0
            outs.append((prefix.with_suffix(".csv").read_bytes(),
                         prefix.with_suffix(".schema.json").read_bytes()))
        assert outs[0] == outs[1]

    def test_hep_list_lengths_match_multiplicity(self, tmp_path, capsys):
        prefix = tmp_path / "hep"
        code, _, _ = run_cli(capsys, "gen", "hep-dimuon", "--rows", "300",
                             "--seed", "3", "--out", str(prefix))
        assert code == 0
        schema = schema_from_json(prefix.with_suffix(".schema.json").read_text())
        table = ingest_csv(prefix.with_suffix(".csv").read_bytes(), schema)
        for row in table.to_pylist():
            n = row["nMuon"]
            for col in ("Muon_pt", "Muon_eta", "Muon_phi", "Muon_charge"):
                assert len(row[col]) == n

    def test_laghos_selectivity_knob(self, tmp_path, capsys):
        code, records, _ = run_cli(
            capsys, "gen", "laghos-box", "--rows", "200000", "--seed", "5",
            "--selectivity", "0.001", "--out", str(tmp_path / "m"))
        assert code == 0
        measured = records[0]["in_box_fraction"]
        assert 0.0005 <= measured <= 0.002


class TestPut:
    def test_stats_rate_warning(self, tmp_path, capsys, store):
        root, prefix = store
        code, _, err = run_cli(
            capsys, "--root", str(root), "put", "lab", "mesh2",
            str(prefix) + ".csv", str(prefix) + ".schema.json",
            "--stats-rate", "0.5")
        assert code == 0
        assert "warning" in err.lower()

    def test_bad_schema_file(self, tmp_path, capsys, store):
        root, prefix = store
        broken = tmp_path / "broken.json"
        broken.write_text('[{"name": "x"}]')
        code, _, err = run_cli(
            capsys, "--root", str(root), "put", "lab", "m3",
            str(prefix) + ".csv", str(broken))
        assert code == 1
        assert "schema" in err.lower()


class TestPlan:
    def test_q1_reports_cad_split(self, store, capsys):
        root, _ = store
        code, records, err = run_cli(
            capsys, "--root", str(root), "plan", "-e", Q1.sql, "lab/mesh")
        assert code == 0
        rec = records[0]
        assert rec["strategy"] == "CAD"
        assert rec["split_after"] == 3
        assert "sort" in err  # frontend plan text includes the sort node

    def test_invalid_sql_exit_2(self, store, capsys):
        root, _ = store
        code, _, err = run_cli(
            capsys, "--root", str(root), "plan", "-e", "SELECT FROM t",
            "lab/mesh")
        assert code == 2


class TestRun:
    def test_csv_result_and_report(self, store, tmp_path, capsys):
        root, _ = store
        out = tmp_path / "q1.csv"
        code, records, _ = run_cli(
            capsys, "--root", str(root), "run", "-e", Q1.sql, "lab/mesh",
            "--mode", "oasis", "--format", "csv", "--out", str(out))
        assert code == 0
        rec = records[0]
        assert rec["mode"] == "oasis"
        assert out.exists()
        header = out.read_text().splitlines()[0]
        assert header == "VID,X,Y,Z,E"
        assert rec["bytes_fe_to_client"] == out.stat().st_size

    def test_columnar_equals_csv_rows(self, store, tmp_path, capsys):
        root, _ = store
        out_col = tmp_path / "r.tcol"
        out_csv = tmp_path / "r.csv"
        for fmt, path in (("columnar", out_col), ("csv", out_csv)):
            code, _, _ = run_cli(
                capsys, "--root", str(root), "run", "-e", Q1.sql, "lab/mesh",
                "--format", fmt, "--out", str(path))
            assert code == 0
        table = deserialize_columnar(out_col.read_bytes())
        again = ingest_csv(out_csv.read_bytes(), table.schema)
        assert again.to_pylist() == table.to_pylist()

    def test_unknown_mode_usage_error(self, store, capsys):
        root, _ = store
        code, _, _ = run_cli(
            capsys, "--root", str(root), "run", "-e", Q1.sql, "lab/mesh",
            "--mode", "turbo")
        assert code == 2

    def test_missing_object_exit_1(self, store, capsys):
        root, _ = store
        code, _, err = run_cli(
            capsys, "--root", str(root), "run", "-e", Q1.sql, "lab/ghost")
        assert code == 1
        assert "does not exist" in err


class TestBench:
    def test_enumerate_splits_marks_choice(self, store, capsys):
        root, _ = store
        code, records, err = run_cli(
            capsys, "--root", str(root), "bench", "-e", Q1.sql, "lab/mesh",
            "--enumerate-splits")
        assert code == 0
        assert len(records) == 5
        chosen = [r for r in records if r["chosen"]]
        assert len(chosen) == 1
        best = min(r["bytes_array_to_fe"] for r in records)
        assert chosen[0]["bytes_array_to_fe"] == best

    def test_modes_all_identical_hashes(self, store, capsys):
        root, _ = store
        code, records, _ = run_cli(
            capsys, "--root", str(root), "bench", "-e", Q1.sql, "lab/mesh",
            "--modes", "all")
        assert code == 0
        assert len(records) == 4
        assert len({r["result_hash"] for r in records}) == 1

    def test_empty_object_zero_rows_all_modes(self, tmp_path, capsys):
        prefix = tmp_path / "tiny"
        run_cli(capsys, "gen", "deepwater-threshold", "--rows", "0",
                "--seed", "1", "--out", str(prefix))
        root = tmp_path / "store0"
        code, _, _ = run_cli(
            capsys, "--root", str(root), "put", "d", "empty",
            str(prefix) + ".csv", str(prefix) + ".schema.json")
        assert code == 0
        code, records, _ = run_cli(
            capsys, "--root", str(root), "bench", "-e", Q2.sql, "d/empty",
            "--modes", "all")
        assert code == 0
        assert all(r["rows"] == 0 for r in records)
        assert len({r["result_hash"] for r in records}) == 1


class TestConfigFile:
    def test_key_value_config(self, store, tmp_path, capsys):
        root, _ = store
        cfg = tmp_path / "cluster.conf"
        cfg.write_text("mode=cos\ninterconnect_bandwidth=1e6\n")
        code, records, _ = run_cli(
            capsys, "--root", str(root), "--config", str(cfg),
            "run", "-e", Q1.sql, "lab/mesh",
            "--out", str(tmp_path / "r.tcol"))
        assert code == 0
        assert records[0]["mode"] == "cos"
