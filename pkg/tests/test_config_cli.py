import json

import pytest

from fuzzmpc.cli import main
from fuzzmpc.config import ConfigError, ExperimentConfig


def test_defaults_valid_and_roundtrip(tmp_path):
    cfg = ExperimentConfig(seed=7, mpc={"budget": 50})
    cfg.save(tmp_path / "c.json")
    back = ExperimentConfig.load(tmp_path / "c.json")
    assert back.to_dict() == json.loads(json.dumps(cfg.to_dict()))
    assert back.mpc_config().budget == 50 and back.mpc_config().seed == 7


@pytest.mark.parametrize("kw", [
    dict(model_class=3, mode="coordinated"),
    dict(model_class=3, mode="decentralized"),
    dict(model_class=4),
    dict(mode="adaptive"),
    dict(identification_fraction=1.0),
    dict(repetitions=0),
    dict(mpc={"horizon": 2}),
    dict(tuning={"sigma": -1.0}),
    dict(cost={"vehicle_weight": -1.0}),
])
def test_invalid_configs(kw):
    with pytest.raises(ValueError):
        ExperimentConfig(**kw)


def test_class3_allowed_without_control():
    assert ExperimentConfig(model_class=3, mode="fixed").model_class == 3


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_dict({"horizon": 3})


def test_cli_collect_and_empty_compare(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["collect", "--out", str(out)]) == 0
    assert (out / "dataset.csv").exists() and (out / "collection_scenario.json").exists()
    assert main(["compare", "--out", str(out), "--data", str(out / "dataset.csv"), "--scenarios", ""]) == 0
    lines = (out / "table_decentralized.csv").read_text().splitlines()
    assert len(lines) == 1 and lines[0].startswith("scenario,")
    assert json.loads((out / "manifest.json").read_text())["ttt_minutes"] == {}


def test_cli_error_codes(tmp_path, capsys):
    assert main(["run", "--mode", "coordinated", "--class", "3", "--out", str(tmp_path)]) == 2
    assert "class-3" in capsys.readouterr().err
    assert main(["identify", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == 3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    assert main(["collect", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["run", "--mode", "fixed", "--scenarios", "nowhere", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_cli_fixed_run(tmp_path, capsys):
    assert main(["run", "--mode", "fixed", "--scenarios", "light", "--repetitions", "1",
                 "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "run_fixed_class2.json").read_text())
    assert list(data["ttt_minutes"]) == ["light"] and len(data["ttt_minutes"]["light"]) == 1
    assert "light" in capsys.readouterr().out
