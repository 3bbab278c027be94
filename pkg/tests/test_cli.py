import json

import numpy as np
import pytest

from gwishart_bd.cli import main, parse_count_config, parse_length_config
from gwishart_bd.graph import Graph


@pytest.fixture
def k3(tmp_path):
    path = tmp_path / "k3.json"
    path.write_text(Graph.complete(3).to_json())
    return path


def test_ratio_approx_k3(k3, capsys):
    assert main(["ratio", "--graph", str(k3), "--edge", "0,1", "--approx"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert round(out["value"], 5) == 0.21221
    assert out["B"] == 0.0 and out["d"] == 1
    assert out["manifest"]["subcommand"] == "ratio"


def test_ratio_rejects_missing_edge(tmp_path):
    path = tmp_path / "p3.json"
    path.write_text(Graph.path(3).to_json())
    assert main(["ratio", "--graph", str(path), "--edge", "0,2", "--approx"]) == 2


def test_config_encodings():
    p = parse_count_config("41")
    assert p.d == 4 and p.long_lengths == (2,)
    p = parse_length_config("11122")
    assert p.d == 3 and p.long_lengths == (2, 2)
    assert parse_count_config("40002").long_lengths == (5, 5)


def test_table1_row(capsys):
    assert main(["table1", "--delta", "3", "--config", "41", "--samples", "200000", "--seed", "1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert round(out["B"], 3) == 0.038
    assert abs(out["gap"] - 0.0136) < 0.005
    assert main(["table1", "--config", "41", "--lengths", "11112"]) == 2


def test_pipeline_with_manifests(tmp_path):
    g = tmp_path / "g.json"
    x = tmp_path / "x.csv"
    s = tmp_path / "s.json"
    tr = tmp_path / "t.jsonl"
    m = tmp_path / "m.csv"
    assert main(["gen-graph", "--kind", "cycle", "--p", "5", "--out", str(g)]) == 0
    assert main(["gen-data", "--graph", str(g), "--n", "200", "--out", str(x), "--k-out", str(tmp_path / "k.json")]) == 0
    assert np.loadtxt(x, delimiter=",").shape == (200, 5)
    assert main(["bdmcmc", "--data", str(x), "--iterations", "300", "--burn-in", "100", "--seed", "2",
                 "--out", str(s), "--trace-out", str(tr)]) == 0
    assert len(tr.read_text().splitlines()) == 200
    assert main(["evaluate", "--summary", str(s), "--truth", str(g), "--out", str(m)]) == 0
    header, row = m.read_text().splitlines()
    assert header.startswith("tp,tn,fp,fn")
    for f in (g, x, s, tr, m):
        man = json.loads((tmp_path / (f.name + ".manifest.json")).read_text())
        assert man["schema_version"] == 1 and "seed" in man


def test_rerun_from_manifest_is_bitwise(tmp_path):
    g = tmp_path / "g.json"
    g.write_text(Graph.path(4).to_json())
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["gen-data", "--graph", str(g), "--n", "20", "--out", str(a)]) == 0
    seed = json.loads((tmp_path / "a.csv.manifest.json").read_text())["seed"]
    assert main(["gen-data", "--graph", str(g), "--n", "20", "--seed", str(seed), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_const(tmp_path, capsys):
    path = tmp_path / "p3.json"
    path.write_text(Graph.path(3).to_json())
    assert main(["const", "--graph", str(path), "--exact"]) == 0
    exact = json.loads(capsys.readouterr().out)["log_value"]
    assert main(["const", "--graph", str(path), "--mc", "20000", "--seed", "3"]) == 0
    est = json.loads(capsys.readouterr().out)
    assert abs(est["log_value"] - exact) < 4 * est["std_error"] + 1e-9
    c4 = tmp_path / "c4.json"
    c4.write_text(Graph.cycle(4).to_json())
    assert main(["const", "--graph", str(c4), "--exact"]) == 1


def test_bench(capsys):
    assert main(["bench", "--p", "4", "--providers", "approximation", "--iterations", "20", "--seed", "0"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "p,provider,seconds_per_1k_iters"
    assert lines[1].startswith("4,approximation,")


@pytest.mark.parametrize("argv", [
    ["bdmcmc", "--data", "x.csv", "--iterations", "10", "--burn-in", "10"],
    ["frobnicate"],
    ["ratio", "--graph", "g.json", "--edge", "zero,one", "--approx"],
    ["evaluate", "--summary", "s.json", "--truth", "g.json", "--threshold", "1.5"],
    ["gen-graph", "--kind", "cycle", "--p", "4", "--threads", "0"],
])
def test_usage_errors_exit_2(argv):
    assert main(argv) == 2


def test_missing_file_exits_1(tmp_path):
    assert main(["const", "--graph", str(tmp_path / "nope.json"), "--exact"]) == 1
