import json

import pytest
import yaml

from onionlab.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_PASS, EXIT_RUNTIME, main, rows_to_csv
from onionlab.config import expand_grid, load_config, parse_config, set_dotted
from onionlab.experiments import evaluate_checks, run_experiment
from onionlab.protocols.params import ConfigError

MINIMAL = {
    "experiment": "metrics", "trials": 3, "seed": 0,
    "params": {"protocol": "pi_p", "N": 32, "n": 4, "L": 5},
    "checks": {"blowup.max": {"eq": 6}, "latency.max": {"eq": 6}},
}


def write(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def test_parse_and_digest_stable():
    a, b = parse_config(MINIMAL), parse_config(dict(MINIMAL, outputs={"dir": "x"}))
    assert a.digest() == b.digest()
    assert parse_config(dict(MINIMAL, seed=1)).digest() != a.digest()
    assert a.adversary.kappa == a.params.kappa


@pytest.mark.parametrize("patch,field", [
    ({"params": {"protocol": "pi_p", "N": 32, "n": 4, "L": 5, "kappa": 1.2}}, "params.kappa"),
    ({"adversary": {"kappa": 1.2}}, "adversary.kappa"),
    ({"trials": 0}, "trials"),
    ({"experiment": "teleport"}, "experiment"),
    ({"colour": "red"}, "colour"),
    ({"experiment": "tv"}, "inputs.kind"),
    ({"params": {"protocol": "tor"}}, "params.protocol"),
    ({"adversary": {"kind": "active", "strategy": {"kind": "drop_all_from"}}},
     "adversary.strategy.target"),
])
def test_config_errors_name_the_field(patch, field):
    with pytest.raises(ConfigError) as err:
        parse_config(dict(MINIMAL, **patch))
    assert err.value.field == field


def test_cli_bad_config_exit_2(tmp_path, capsys):
    bad = dict(MINIMAL, params=dict(MINIMAL["params"], kappa=1.2))
    assert main(["run", "-c", write(tmp_path, bad), "-o", str(tmp_path)]) == EXIT_CONFIG
    assert "params.kappa" in capsys.readouterr().err
    assert main(["run", "-c", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG


def test_cli_run_is_byte_identical(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    outs = []
    for name in ("a", "b"):
        assert main(["run", "-c", cfg, "-o", str(tmp_path / name)]) == EXIT_PASS
        outs.append(((tmp_path / name / "report.json").read_bytes(),
                     (tmp_path / name / "trials.csv").read_bytes()))
    assert outs[0] == outs[1]
    report = json.loads(outs[0][0])
    assert report["passed"] and report["trials_completed"] == 3
    assert report["summary"]["blowup"]["mean"] == 6


def test_workers_do_not_change_results():
    cfg = parse_config(MINIMAL)
    assert run_experiment(cfg, workers=1).rows == run_experiment(cfg, workers=2).rows


def test_failed_check_exit_1(tmp_path):
    data = dict(MINIMAL, checks={"blowup.max": {"eq": 99}})
    assert main(["run", "-c", write(tmp_path, data), "-o", str(tmp_path)]) == EXIT_FAIL


def test_budget_gives_partial_and_exit_3(tmp_path):
    data = dict(MINIMAL, trials=200, budget_seconds=1e-6)
    assert main(["run", "-c", write(tmp_path, data), "-o", str(tmp_path)]) == EXIT_RUNTIME
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["partial"] and report["trials_completed"] < 200


def test_one_point_grid_equals_run(tmp_path):
    data = dict(MINIMAL, grid={"params.L": [5]})
    assert main(["sweep", "-c", write(tmp_path, data), "-o", str(tmp_path / "s")]) == EXIT_PASS
    assert main(["run", "-c", write(tmp_path, MINIMAL, "m.yaml"), "-o", str(tmp_path / "r")]) == EXIT_PASS
    sweep = json.loads((tmp_path / "s" / "sweep.json").read_text())["points"][0]
    run = json.loads((tmp_path / "r" / "report.json").read_text())
    assert sweep["summary"] == run["summary"] and sweep["config_hash"] == run["config_hash"]


def test_grid_expansion():
    pts = expand_grid({"grid": {"a.b": [1, 2], "c": [3, 4, 5]}})
    assert len(pts) == 6 and pts[0][1]["a"]["b"] == 1
    zipped = expand_grid({"grid": {"x, y": [[1, 2], [3, 4]]}})
    assert [p for p, _ in zipped] == [{"x": 1, "y": 2}, {"x": 3, "y": 4}]
    with pytest.raises(ConfigError):
        expand_grid({"grid": {"x": list(range(300))}})
    with pytest.raises(ConfigError):
        expand_grid({"grid": {"x,y": [[1]]}})
    assert set_dotted({}, "a.b", 1) == {"a": {"b": 1}}


def test_params_subcommand(capsys):
    assert main(["params", "--kappa", "0.2"]) == EXIT_PASS
    out = json.loads(capsys.readouterr().out)
    assert out["alpha_beta_min"] == pytest.approx(2105.4, rel=1e-3)
    assert out["alpha"] == out["beta"] == 46


def test_check_ops():
    summary = {"a": {"b": 2.0}, "flag": True}
    v = evaluate_checks({"a.b": {"within": [2.1, 0.1], "lt": 2}, "flag": {"eq": True},
                         "nope": {"eq": 1}}, summary)
    assert [(x["op"], x["passed"]) for x in v] == [("lt", False), ("within", True), ("eq", True), ("eq", False)]


def test_csv_cells():
    text = rows_to_csv([{"a": True, "b": 0.1}, {"c": None}])
    assert text == "a,b,c\ntrue,0.1,\n,,\n"


def test_shipped_configs_parse():
    from pathlib import Path
    for path in sorted(Path(__file__).parent.parent.joinpath("configs").glob("*.yaml")):
        data = yaml.safe_load(path.read_text())
        for _, raw in expand_grid(data):
            load = parse_config(raw)
            assert load.trials >= 1, path


def test_load_config_roundtrip(tmp_path):
    assert load_config(write(tmp_path, MINIMAL)) == parse_config(MINIMAL)
