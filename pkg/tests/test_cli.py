import csv

import numpy as np
import pytest
import yaml

from descobs.cli import analyze, main
from descobs.config import config_to_dict, dump_yaml, load_config, parse_config
from descobs.errors import InvalidInputError
from descobs.scenarios import builtin

CUSTOM = """
name: small
system:
  E: {shape: [3, 3], data: [1, 0, 0, 0, 1, 0, 0, 0, 0]}
  A: [[0, 1, 0], [-1, -0.2, 1], [1, 0, -2]]
  C: {csv: c.csv}
  partition: [1, 1]
graph:
  adjacency: [[0, 1], [1, 0]]
synthesis: {path: ddf, seed: 3}
simulation: {t_end: 1.0, dt: 0.001, x0: [1, 0, 0.5], record_stride: 10}
"""


@pytest.fixture
def custom(tmp_path):
    (tmp_path / "c.csv").write_text("1,0,0\n0,0,1\n")
    p = tmp_path / "small.yaml"
    p.write_text(CUSTOM)
    return p


def test_matrix_formats(custom):
    cfg = load_config(custom)
    assert np.array_equal(cfg.system.E, np.diag([1.0, 1.0, 0.0]))
    assert np.array_equal(cfg.system.C, [[1, 0, 0], [0, 0, 1]])
    assert cfg.system.output_partition == (1, 1)


def test_round_trip_idempotent(custom, tmp_path):
    once = dump_yaml(config_to_dict(load_config(custom)))
    (tmp_path / "again.yaml").write_text(once)
    twice = dump_yaml(config_to_dict(load_config(tmp_path / "again.yaml")))
    assert once == twice
    for name in ("hydraulic", "electrical", "comparison"):
        t1 = dump_yaml(config_to_dict(parse_config(yaml.safe_load(
            dump_yaml({"builtin": name, "params": {}})))))
        t2 = dump_yaml(config_to_dict(parse_config(yaml.safe_load(t1))))
        assert t1 == t2


def test_builtin_matrices_are_pinned():
    a, b = builtin("electrical").system, builtin("electrical").system
    assert np.array_equal(a.A, b.A) and np.array_equal(a.E, b.E)
    c1 = parse_config({"builtin": "hydraulic"}).config_hash()
    c2 = parse_config({"builtin": "hydraulic"}).config_hash()
    assert c1 == c2


@pytest.mark.parametrize("bad", [
    {"system": {"E": [[1]], "A": [[1, 2]], "C": [[1]]}, "graph": {"adjacency": [[0]]}},
    {"system": {"E": [[1]], "A": [[1]]}, "graph": {"adjacency": [[0]]}},
    {"system": {"E": [[1]], "A": [[1]], "C": [[1]]}, "graph": {"adjacency": [[0, 1], [1, 0]]}},
    {"builtin": "nope"},
    {"builtin": "hydraulic", "synthesis": {"bogus": 1}},
    ["not", "a", "mapping"],
])
def test_parse_errors(bad):
    with pytest.raises(InvalidInputError):
        parse_config(bad)


def test_analyze_report_fixture():
    sc = builtin("comparison")
    rep = analyze(sc.system, sc.adjacency)
    assert rep["R_observable"] and not rep["ddf_slow_observable"]
    assert rep["regular"] and rep["regularity_witness"] is not None
    assert rep["strongly_connected"] and len(rep["perron_weights"]) == 3


def test_analyze_non_regular_is_a_verdict():
    from descobs.scenarios import electrical_system

    sys, _, _ = electrical_system(regularize=False)
    rep = analyze(sys, np.zeros((3, 3)) + np.eye(3)[[1, 2, 0]])
    assert rep["regular"] is False and "n1" not in rep


def test_cli_analyze_chain(tmp_path, capsys):
    p = tmp_path / "chain.yaml"
    p.write_text(dump_yaml({"builtin": "hydraulic",
                            "graph": {"adjacency": [[0, 0, 0], [1, 0, 0], [0, 1, 0]]}}))
    assert main(["analyze", str(p), "--json"]) == 0
    import json

    rep = json.loads(capsys.readouterr().out)
    assert rep["strongly_connected"] is False
    assert main(["synthesize", str(p), "-o", str(tmp_path / "d.yaml")]) == 1


def test_cli_pipeline(custom, tmp_path, capsys):
    design = tmp_path / "design.yaml"
    assert main(["analyze", str(custom)]) == 0
    assert "regular: yes" in capsys.readouterr().out
    assert main(["synthesize", str(custom), "-o", str(design)]) == 0
    assert yaml.safe_load(design.read_text())["config_hash"] == load_config(custom).config_hash()
    out1, out2 = tmp_path / "run1", tmp_path / "run2"
    assert main(["simulate", str(custom), str(design), "-o", str(out1)]) == 0
    assert main(["simulate", str(custom), str(design), "-o", str(out2)]) == 0
    files = sorted(f.name for f in out1.iterdir())
    assert files == ["agent_1.csv", "agent_2.csv", "events.csv", "summary.csv"]
    for f in files:
        assert (out1 / f).read_text() == (out2 / f).read_text()
    rows = list(csv.reader(open(out1 / "agent_1.csv")))
    assert rows[0][:4] == ["t", "x1", "x2", "x3"] and rows[0][-1] == "omega"
    assert len(rows) - 1 == 1000 // 10 + 1


def test_cli_overrides_and_stale_design(custom, tmp_path):
    design = tmp_path / "design.yaml"
    assert main(["synthesize", str(custom), "-o", str(design)]) == 0
    out = tmp_path / "o"
    assert main(["simulate", str(custom), str(design), "-o", str(out), "--t-end", "0.5",
                 "--gain-mode", "adaptive", "--dt", "0.01"]) == 0
    rows = list(csv.reader(open(out / "agent_1.csv")))
    assert len(rows) - 1 == 50 // 10 + 1
    assert float(rows[-1][-1]) >= float(rows[1][-1])
    assert main(["simulate", str(custom), str(design), "-o", str(out), "--seed", "9"]) == 1


def test_cli_precondition_and_numeric_exit_codes(tmp_path):
    p = tmp_path / "cmp.yaml"
    p.write_text(dump_yaml({"builtin": "comparison",
                            "synthesis": {"path": "ddf", "ddf_basis": "svd"}}))
    assert main(["synthesize", str(p), "-o", str(tmp_path / "d.yaml")]) == 1
    q = tmp_path / "unobs.yaml"
    q.write_text(dump_yaml({"system": {"E": [[1, 0], [0, 1]], "A": [[1, 0], [0, 1]],
                                       "C": [[1, 0]]}, "graph": {"adjacency": [[0]]}}))
    assert main(["synthesize", str(q), "-o", str(tmp_path / "d2.yaml")]) == 1
    r = tmp_path / "fast.yaml"
    r.write_text(dump_yaml({"builtin": "hydraulic",
                            "synthesis": {"decay": 1e9, "sweep_max_exp": 1}}))
    assert main(["synthesize", str(r), "-o", str(tmp_path / "d3.yaml")]) == 2
    assert main(["analyze", str(tmp_path / "missing.yaml")]) == 1


def test_cli_scenarios(tmp_path, capsys):
    assert main(["scenario", "list"]) == 0
    assert capsys.readouterr().out.split() == ["hydraulic", "electrical", "comparison"]
    out = tmp_path / "h.yaml"
    assert main(["scenario", "emit", "hydraulic", "-o", str(out)]) == 0
    assert load_config(out).system.n == 8
    assert main(["scenario", "emit", "nope"]) == 1
