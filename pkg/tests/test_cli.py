import csv
import json

import pytest

from pathhj.cli import ConfigError, compile_expression, load_config, main

BANG = {"problem": {"preset": "bang-linear"}, "grid": {"N": 8}, "anchors": [{"s": 0, "x": 0}]}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_value_row(tmp_path):
    out = tmp_path / "out"
    assert main(["value", "--config", write(tmp_path, BANG), "--out", str(out), "--quiet"]) == 0
    rows = read_csv(out / "value.csv")
    assert float(rows[0]["value"]) == pytest.approx(-0.606531, abs=1e-6)
    assert rows[0]["argmin"].split() == ["-1.0"] * 8
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["bundle"]["L"] == 1.0 and report["config"]["tolerances"]["kappa"] == 3.0


def test_psi_subcommand(tmp_path):
    out = tmp_path / "out"
    assert main(["psi", "--config", write(tmp_path, BANG), "--out", str(out), "--seed", "11", "--quiet"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["results"]["suite"]["pairs"] == 1000
    assert report["results"]["suite"]["violations"] == 0
    assert len(read_csv(out / "psi.csv")) == 1000


def test_minimax_switch(tmp_path):
    cfg = {"problem": {"preset": "switch"}, "grid": {"N": 8}, "anchors": [{"s": 0, "x": 0}, {"s": 0.5, "x": 0.25}]}
    out = tmp_path / "out"
    assert main(["minimax", "--config", write(tmp_path, cfg), "--out", str(out), "--quiet"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert set(report["checks"]) == {"supersolution", "subsolution", "sandwich", "dpp"}


@pytest.mark.parametrize("sub", ["dpp", "perron", "probe", "audit"])
def test_other_subcommands_succeed(tmp_path, sub):
    cfg = dict(BANG, audit={"samples": 200})
    out = tmp_path / "out"
    assert main([sub, "--config", write(tmp_path, cfg), "--out", str(out), "--quiet"]) == 0
    assert (out / f"{sub}.csv").exists()


def test_check_failure_exit_code(tmp_path):
    # declared z-Lipschitz constant too small for the dynamics
    cfg = {"problem": {"inline": {"controls": [-3, 3], "f": "a", "lam": "0", "ell": "0", "h": "x",
                                  "C_f": 1, "C_lambda": 0, "L_f": 0, "memory": 0}}, "audit": {"samples": 100}}
    assert main(["audit", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 1


def test_config_errors(tmp_path):
    bad_json = tmp_path / "bad.json"
    bad_json.write_text("{not json")
    assert main(["value", "--config", str(bad_json), "--quiet"]) == 2
    assert main(["value", "--config", str(tmp_path / "missing.json"), "--quiet"]) == 2
    assert main(["value", "--config", write(tmp_path, {"problem": {"preset": "nope"}}), "--quiet"]) == 2
    assert main(["value", "--config", write(tmp_path, dict(BANG, grid={"N": 0})), "--quiet"]) == 2
    assert main(["value", "--config", write(tmp_path, dict(BANG, anchors=[{"s": 0.3, "x": 0}])), "--quiet"]) == 2
    # T/2 must be a node for the time-discontinuous preset
    assert main(["value", "--config", write(tmp_path, {"problem": {"preset": "switch"}, "grid": {"N": 5}}), "--quiet"]) == 2


def test_budget_exit_code(tmp_path):
    cfg = dict(BANG, problem={"preset": "delay-drag"}, grid={"N": 64}, value={"budget": 5})
    assert main(["value", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 3


def test_inline_problem_matches_preset(tmp_path):
    inline = {"problem": {"inline": {"controls": [-1, 1], "f": "a", "lam": "0.5", "ell": "0", "h": "x",
                                     "C_f": 1, "C_lambda": 0.5, "L_f": 0, "memory": 0}},
              "grid": {"N": 8}, "anchors": [{"s": 0, "x": 0}, {"s": 0.5, "nodes": [[0, 0], [1, -1]]}]}
    preset = dict(inline, problem={"preset": "bang-linear"})
    for name, cfg in (("a", inline), ("b", preset)):
        assert main(["value", "--config", write(tmp_path, cfg, f"{name}.json"), "--out", str(tmp_path / name), "--quiet"]) == 0
    assert (tmp_path / "a" / "value.csv").read_text() == (tmp_path / "b" / "value.csv").read_text()


def test_inline_delay_uses_lag(tmp_path):
    from pathhj.control import value
    from pathhj.presets import delay_drag

    cfg = {"problem": {"inline": {"controls": [0], "f": "a - lag(0.25)", "lam": "0.5", "ell": "0", "h": "x",
                                  "C_f": 1, "C_lambda": 0.5, "L_f": 1, "memory": 0.25}},
           "grid": {"N": 16}, "anchors": [{"s": 0, "x": 1}]}
    exp = load_config(cfg)
    v_inline, _ = value(exp.problem, 0.0, exp.anchors[0], exp.grid)
    v_preset, _ = value(delay_drag(), 0.0, exp.anchors[0], exp.grid)
    assert v_inline == pytest.approx(v_preset, abs=1e-14)


def test_step_anchor():
    exp = load_config(dict(BANG, anchors=[{"s": 0.5, "nodes": [[0, 0], [0.25, 1]], "mode": "step"}]))
    hist = exp.anchors[0].history
    assert hist.mode == "step" and hist.at(0.125)[0] == 0.0 and hist.at(0.25)[0] == 1.0


@pytest.mark.parametrize("src", ["__import__('os')", "x.real", "(lambda: 1)()", "[i for i in x]", "open", "'s'"])
def test_expression_whitelist(src):
    with pytest.raises(ConfigError):
        compile_expression(src, {"x"})


def test_expression_evaluates():
    f = compile_expression("1 if t < 0.5 else 2*exp(-abs(x))", {"t", "x"})
    assert f({"t": 0.2, "x": 3.0}) == 1
    assert f({"t": 0.7, "x": 0.0}) == 2.0
