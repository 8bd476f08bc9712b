import json

import pytest

from horolab import cli
from horolab.errors import ConfigError

SMALL_RELATIONS = """
[relations]
grid = 4
chart_pairs = 3
"""


def _write(tmp_path, text, name="cfg.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_unknown_section_and_key(tmp_path):
    with pytest.raises(ConfigError):
        cli.ExperimentConfig.load("relations", _write(tmp_path, "[nope]\na = 1\n"))
    with pytest.raises(ConfigError):
        cli.ExperimentConfig.load("relations", _write(tmp_path, "[relations]\nbogus = 1\n"))
    with pytest.raises(ConfigError):
        cli.ExperimentConfig.load("relations", _write(tmp_path, "[relations]\ngrid = many\n"))


def test_config_overrides_and_types(tmp_path):
    cfg = cli.ExperimentConfig.load("relations", _write(tmp_path, SMALL_RELATIONS), seed=3)
    assert cfg.section("relations")["grid"] == 4
    assert isinstance(cfg.section("relations")["tol"], float)
    assert cfg.to_dict()["seed"] == 3
    assert "out" not in cfg.to_dict()


def test_rng_streams_are_independent():
    cfg = cli.ExperimentConfig.load("relations", seed=7)
    assert cfg.rng(1).random() == cfg.rng(1).random()
    assert cfg.rng(1).random() != cfg.rng(2).random()


def test_gate_semantics():
    rec = cli.ExperimentRecord("x", {})
    assert rec.gate("a", 0.5, 1.0)
    assert not rec.gate("b", float("nan"), 1.0)
    assert rec.gate("c", 0, 0, "==")
    assert not rec.passed
    assert [g["threshold"] for g in rec.gates] == [1.0, 1.0, 0]


def test_exit_codes(tmp_path, capsys):
    out = str(tmp_path / "o")
    cfg = _write(tmp_path, SMALL_RELATIONS)
    assert cli.main(["relations", "--config", cfg, "--out", out]) == 0
    assert "PASS relations.renormalization" in capsys.readouterr().out
    bad = _write(tmp_path, SMALL_RELATIONS + "tol = 1e-30\n", "bad.ini")
    assert cli.main(["relations", "--config", bad, "--out", out]) == 1
    assert cli.main(["relations", "--config", _write(tmp_path, "[x]\n", "u.ini")]) == 2
    assert cli.main(["relations", "--threads", "0", "--out", out]) == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["relations", "--backend", "flat"])
    assert exc.value.code == 2


def test_outputs_byte_reproducible(tmp_path):
    cfg = _write(tmp_path, SMALL_RELATIONS)
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert cli.main(["relations", "--config", cfg, "--out", str(out), "--seed", "5"]) == 0
        outs.append(out)
    for name in ("relations.json", "relations.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    assert (outs[0] / "relations.timing.json").exists()
    summary = json.loads((outs[0] / "relations.json").read_text())
    assert summary["passed"] and summary["config"]["seed"] == 5


def test_zero_rows_are_exact(tmp_path):
    cfg = cli.ExperimentConfig.load("relations", _write(tmp_path, "[relations]\ngrid = 3\n"))
    rec = cli.cmd_relations(cfg)
    zero = [r for r in rec.rows if r["kind"] == "renormalization" and r["s"] == 0 and r["t"] == 0]
    assert zero and zero[0]["res_h"] == 0.0 and zero[0]["res_k"] == 0.0


def test_holonomy_t_zero_rows(tmp_path):
    cfg = cli.ExperimentConfig.load("holonomy", _write(tmp_path, "[holonomy]\ngrid = 3\n"))
    rec = cli.cmd_holonomy(cfg)
    for r in rec.rows:
        if r["t"] == 0.0:
            assert r["rho"] == 0.0 and r["sigma"] == r["s"]
    assert rec.passed


def test_standardness_single_cell(tmp_path):
    text = """
[standardness]
shape = 1, 1, 1
R = 10, 20
samples = 30
parts = cover
"""
    cfg = cli.ExperimentConfig.load("standardness", _write(tmp_path, text))
    rec = cli.cmd_standardness(cfg)
    assert rec.scalars["covers"] == [1, 1]
    assert rec.passed


def test_standardness_rejects_variable_and_unknown_parts(tmp_path):
    cfg = cli.ExperimentConfig.load("standardness", backend="variable")
    with pytest.raises(ConfigError):
        cli.cmd_standardness(cfg)
    cfg = cli.ExperimentConfig.load("standardness",
                                    _write(tmp_path, "[standardness]\nparts = cover, magic\n"))
    with pytest.raises(ConfigError):
        cli.cmd_standardness(cfg)


def test_margulis_zero_arc():
    from horolab.variable import VariableBackend, state
    assert VariableBackend().margulis_arc_measure(state(0.0, 1.0, 0.0), 0.0).value == 0.0
