import json
from importlib import resources

import pytest

from cylevy.cli import main
from cylevy.config import ConfigError, validate_config
from cylevy.experiments import run_experiment

BUNDLED = sorted(p.name for p in resources.files("cylevy.configs").iterdir() if p.name.endswith(".json"))


def bundled(name):
    return json.loads(resources.files("cylevy.configs").joinpath(name).read_text())


def paths(errors):
    return [e.path for e in errors]


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_configs_validate(name):
    assert validate_config(bundled(name)) == []


def test_out_of_range_alpha_points_at_the_field():
    cfg = bundled("cf-stable.json")
    cfg["model"]["params"]["alpha"] = 2.5
    assert "$.model.params.alpha" in paths(validate_config(cfg))


def test_missing_required_field():
    cfg = bundled("cf-gaussian.json")
    del cfg["model"]
    assert "$.model" in paths(validate_config(cfg))


def test_too_few_replicas_for_statistical_kind():
    cfg = bundled("gauss-dom-gaussian.json")
    cfg["replicas"] = 10
    assert "$.replicas" in paths(validate_config(cfg))


def test_unknown_top_level_key():
    cfg = bundled("cf-gaussian.json")
    cfg["replica"] = 5
    assert validate_config(cfg)


def test_semantic_dimension_mismatch():
    cfg = bundled("cf-gaussian.json")
    cfg["operators"][0]["d_U"] = 5
    assert validate_config(cfg)


def test_non_dyadic_levels():
    cfg = bundled("refine-constant.json")
    cfg["levels"] = [8, 12]
    assert validate_config(cfg)


def test_stable_refine_is_a_capability_error():
    cfg = bundled("refine-exp-decay.json")
    cfg["model"] = {"family": "stable", "d_U": 4, "params": {"alpha": 1.5}}
    errs = validate_config(cfg)
    assert errs and errs[0].path == "$.model" and "capability" in errs[0].message
    with pytest.raises(ConfigError):
        run_experiment(cfg)


def test_seed_override_is_recorded():
    report, _ = run_experiment(bundled("prokhorov-suite.json"), seed=12345)
    assert report["seeds"]["master_seed"] == 12345
    assert report["config"]["master_seed"] == 12345


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_cli_validate_exit_codes(tmp_path, capsys):
    assert main(["validate", "--config", write(tmp_path, bundled("cf-gaussian.json"))]) == 0
    bad = bundled("cf-stable.json")
    bad["model"]["params"]["alpha"] = 2.5
    assert main(["validate", "--config", write(tmp_path, bad)]) == 2
    assert "$.model.params.alpha" in capsys.readouterr().err
    assert main(["validate", "--config", str(tmp_path / "missing.json")]) == 2
    (tmp_path / "broken.json").write_text("{")
    assert main(["validate", "--config", str(tmp_path / "broken.json")]) == 2


def test_cli_run_pass_and_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["run", "--config", write(tmp_path, bundled("prokhorov-suite.json")), "--out", str(out),
                 "--threads", "2"])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["passed"] and "generated_at" in report
    assert main(["report", str(out)]) == 0
    assert "prokhorov-suite" in capsys.readouterr().out


def test_cli_run_assertion_failure_exits_1(tmp_path, capsys):
    cfg = bundled("refine-exp-decay.json")
    cfg["levels"] = [8, 16]
    cfg["replicas"] = 1000
    cfg["tolerances"] = {"pairwise_last": 1e-9}
    assert main(["run", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 1
    assert "FAILED" in capsys.readouterr().err


def test_cli_run_capability_error_exits_2(tmp_path):
    cfg = bundled("boundedness-gaussian.json")
    cfg["model"] = {"family": "stable", "d_U": 4, "params": {"alpha": 1.5}}
    cfg.pop("fixture")
    assert main(["run", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2


def test_cli_rejects_bad_seed_and_threads(tmp_path):
    path = write(tmp_path, bundled("prokhorov-suite.json"))
    with pytest.raises(SystemExit):
        main(["run", "--config", path, "--seed", "-1"])
    with pytest.raises(SystemExit):
        main(["run", "--config", path, "--threads", "0"])
