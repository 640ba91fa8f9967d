import json
import subprocess
import sys

import numpy as np
import pytest

from colombeau import expr as E
from colombeau.cli import main, parse_box
from colombeau.errors import ScenarioError
from colombeau.scenario import parse_scenario, run

SPEC_EXAMPLE = ('{"grid":{"base":0.5,"k":[4,24]},"items":["delta_radial_2d"],'
                '"tasks":[{"classify":{"box":[[-1,1],[-1,1]]}}]}')


def scenario(tasks, items=None, **extra):
    doc = {"schema_version": 1, "grid": {"base": 0.5, "k": [4, 24]},
           "items": items or ["delta_radial_2d", "bump_asym_2d"], "tasks": tasks}
    doc.update(extra)
    return parse_scenario(json.dumps(doc))


def summary(out):
    return json.loads((out / "summary.json").read_text())


def test_spec_example_runs(tmp_path):
    sc = parse_scenario(SPEC_EXAMPLE)
    res = run(sc, tmp_path)
    assert res.exit_code == 0
    assert res.outcomes[0].outcome == "Moderate(2)"
    report = json.loads((tmp_path / "01_classify_delta_radial_2d.json").read_text())
    assert report["label"] == "Moderate(2)"
    assert report["schema_version"] == 1
    assert report["thresholds"]["m_max"] == 3


def test_inline_expression_partials():
    sc = parse_scenario(json.dumps({"grid": {"base": 0.5, "k": [4, 24]},
                                    "items": [{"name": "u", "expr": "x1^2 + x2^2"}], "tasks": []}))
    u = sc.build()["u"]
    X = np.random.default_rng(0).uniform(-2, 2, (10, 2))
    np.testing.assert_allclose(u.partial(0.0625, (1, 0), X), 2 * X[:, 0], rtol=1e-15)
    assert u.max_order == 2


def test_unknown_symbol_reports_position():
    text = '{"grid": {"base": 0.5, "k": [4, 24]},\n "items": [{"name": "g", "expr": "gamma(x1)"}],\n "tasks": []}'
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text)
    msg = str(info.value)
    assert "gamma" in msg and "line 2" in msg


def test_json_syntax_error_has_line():
    with pytest.raises(ScenarioError) as info:
        parse_scenario('{"grid": {"base": 0.5,\n "k": [4, 24]}, "items": [,]}')
    assert "line 2" in str(info.value)


@pytest.mark.parametrize("doc", [
    {"items": ["no_such_net"], "tasks": []},
    {"items": ["delta_radial_2d"], "tasks": [{"sing": {}}]},
    {"items": ["delta_radial_2d"], "tasks": [{"classify": {"item": "other"}}]},
    {"items": ["delta_radial_2d"], "tasks": [{"classify": {"bogus": 1}}]},
    {"items": ["delta_radial_2d"], "tasks": [], "schema_version": 99},
    {"items": ["delta_radial_2d"], "tasks": [], "colour": "red"},
])
def test_invalid_scenarios(doc):
    with pytest.raises(ScenarioError):
        parse_scenario(json.dumps(doc))


def test_counterexample_exits_one(tmp_path):
    sc = scenario([{"invariance": {"item": "bump_asym_2d", "methods": ["standard_rotations"]}}])
    res = run(sc, tmp_path)
    assert res.exit_code == 1
    rep = json.loads((tmp_path / "01_invariance_bump_asym_2d.json").read_text())
    assert rep["passed"] is False
    assert rep["verdicts"][0]["worst_class"]["verdict"] == "Bounded"


def test_empty_task_list(tmp_path):
    out = tmp_path / "empty"
    res = run(scenario([]), out)
    assert res.exit_code == 0 and res.outcomes == []
    assert not out.exists()


def test_execution_error_exits_two(tmp_path):
    sc = scenario([{"flow": {"item": "inv_eps_d_x_1d", "t_span": [0, 1], "override": True,
                             "safety_box": 10, "x0": [0.0], "box": [[-1, 1]]}}],
                  items=["inv_eps_d_x_1d"])
    res = run(sc, tmp_path)
    assert res.exit_code == 2 and "flow" in res.error
    err = json.loads((tmp_path / "01_flow_inv_eps_d_x_1d_error.json").read_text())
    assert err["type"] == "BlowUpError" and err["eps"] is not None
    assert summary(tmp_path)["exit_code"] == 2


def test_expect_inverts_outcome(tmp_path):
    sc = scenario([{"invariance": {"item": "bump_asym_2d", "methods": ["standard_rotations"],
                                   "expect": False}},
                   {"classify": {"item": "delta_radial_2d", "expect": "Moderate(2)"}}])
    assert run(sc, tmp_path).exit_code == 0


def test_exit_code_is_conjunction_of_reports(tmp_path):
    sc = scenario([{"classify": {"item": "delta_radial_2d"}},
                   {"reduce": {"item": "delta_radial_2d"}},
                   {"reduce": {"item": "bump_asym_2d"}}])
    res = run(sc, tmp_path)
    s = summary(tmp_path)
    assert [t["passed"] for t in s["tasks"]] == [True, True, False]
    assert res.exit_code == s["exit_code"] == 1


FULL = [{"classify": {"item": "delta_radial_2d", "order": 1}},
        {"invariance": {"item": "bump_asym_2d", "methods": ["standard_rotations", "translation"]}},
        {"reduce": {"item": "delta_radial_2d"}},
        {"flow": {"item": "xi_12_rotation", "t_span": [-1, 1], "x0": [1, 0], "h0": 0.01}}]


def _outputs(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_runs_are_byte_identical(tmp_path, monkeypatch):
    items = ["delta_radial_2d", "bump_asym_2d", "xi_12_rotation"]
    a = _outputs(run(scenario(FULL, items), tmp_path / "a").out_dir)
    monkeypatch.setenv("COLOMBEAU_THREADS", "1")
    b = _outputs(run(scenario(FULL, items), tmp_path / "b").out_dir)
    assert a.keys() == b.keys()
    assert any(k.endswith(".csv") for k in a)
    assert a == b


def test_parse_box():
    assert parse_box("-1:1,0.5:2") == [[-1.0, 1.0], [0.5, 2.0]]
    assert parse_box("[[0, 1]]") == [[0.0, 1.0]]


def test_cli_gallery_list(capsys):
    assert main(["gallery", "list"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 33 and lines[0].split("\t")[0] == "bump_asym_2d"


def test_cli_classify_inline(tmp_path, capsys):
    code = main(["classify", "--expr", "eps^5 * sin(x1)", "--dim", "1", "--order", "1",
                 "--expect", "Negligible", "--out", str(tmp_path)])
    assert code == 0
    assert "Negligible" in capsys.readouterr().out


def test_cli_invariance_fails_for_bump(tmp_path):
    assert main(["invariance", "bump_asym_2d", "--method", "standard_rotations",
                 "--out", str(tmp_path)]) == 1
    assert main(["invariance", "bump_asym_2d", "--method", "standard_rotations",
                 "--box=0.5:1,-1:1", "--out", str(tmp_path / "b")]) == 0


def test_cli_translation_axis_is_one_based(tmp_path):
    assert main(["invariance", "coord_x2_2d", "--method", "translation", "--axis", "1",
                 "--out", str(tmp_path)]) == 0
    assert main(["invariance", "coord_x2_2d", "--method", "translation", "--axis", "2",
                 "--out", str(tmp_path / "b")]) == 1


def test_cli_errors_exit_two(tmp_path, capsys):
    assert main(["classify", "--expr", "gamma(x1)", "--out", str(tmp_path)]) == 2
    assert "gamma" in capsys.readouterr().err
    assert main(["classify", "nope", "--out", str(tmp_path)]) == 2
    assert main(["run", str(tmp_path / "missing.json")]) == 2


def test_cli_flow_and_reduce(tmp_path):
    assert main(["flow", "xi_12_rotation", "--t-span", "-1", "1", "--h0", "0.01",
                 "--x0", "1", "0", "--group-law", "0.5", "0.25", "--out", str(tmp_path)]) == 0
    header = (tmp_path / "01_flow_xi_12_rotation_trajectory.csv").read_text().splitlines()[0]
    assert header == "epsilon,t,x1,x2"
    assert main(["flow", "inv_sqrt_eps_d_x_1d", "--out", str(tmp_path / "f")]) == 1
    assert main(["reduce", "delta_radial_2d", "--out", str(tmp_path / "r")]) == 0


def test_cli_run_scenario_file(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(SPEC_EXAMPLE)
    assert main(["run", str(path), "--out", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "summary.json").exists()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "colombeau", "gallery", "list"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "delta_radial_2d" in proc.stdout
