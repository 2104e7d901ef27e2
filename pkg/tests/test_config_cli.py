import json
import shutil

import pytest

from grid_surrogate import cli
from grid_surrogate.config import CONFIG_ENV, load_config, parse_config
from grid_surrogate.errors import ConfigurationError

TINY = """
seed = 42
[simulation]
duration = 0.05
[pipeline]
window = 10
stride = 5
[gbm]
n_estimators = 10
[cnn]
epochs = 2
[cnn_arch]
filters = [4, 4, 4]
dense_units = 4
[bench]
repetitions = 3
warmup = 0
"""


def test_defaults_and_path_resolution(tmp_path):
    cfg = parse_config({}, tmp_path)
    assert cfg.simulation.duration == 1.0 and cfg.pipeline.window == 100 and cfg.gbm.learning_rate == 0.05
    assert cfg.paths.data_dir == tmp_path / "data"
    cfg = parse_config({"paths": {"model_dir": "out/m"}, "seed": 7}, tmp_path)
    assert cfg.paths.model_dir == tmp_path / "out/m" and cfg.gbm.seed == 7 and cfg.cnn.seed == 7


@pytest.mark.parametrize("data", [
    {"simulation": {"duration": -1.0}},
    {"simulation": {"dt_sim": 2e-4}},
    {"simulation": {"scenarios": ["normal", "bogus"]}},
    {"simulation": {"typo": 1}},
    {"unknown": {}},
    {"gbm": {"learning_rate": 0.0}},
    {"pipeline": {"window": 20}, "cnn_arch": {"window": 10}},
    {"ood": {"channel_mask": ["nope"]}},
    {"bench": {"repetitions": 2}},
    {"seed": -3},
])
def test_invalid_configs_are_rejected(data, tmp_path):
    with pytest.raises(ConfigurationError):
        parse_config(data, tmp_path)


def test_env_var_and_hashes(tmp_path, monkeypatch):
    path = tmp_path / "c.toml"
    path.write_text("[simulation]\nduration = 0.5\n")
    monkeypatch.setenv(CONFIG_ENV, str(path))
    cfg = load_config()
    assert cfg.simulation.duration == 0.5
    base = parse_config({}, tmp_path)
    assert base.data_hash() != cfg.data_hash()
    other = parse_config({"gbm": {"n_estimators": 5}}, tmp_path)
    assert other.data_hash() == base.data_hash() and other.model_hash("cnn") == base.model_hash("cnn")
    assert other.model_hash("gbm") != base.model_hash("gbm")
    assert base.with_seed(3).data_hash() != base.data_hash()


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY)
    return path


def run(*argv):
    return cli.main(list(argv))


def test_exit_codes_for_bad_inputs(tiny, tmp_path):
    assert run("train", "--config", str(tmp_path / "absent.toml")) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("[simulation]\nduration = 'long'\n")
    assert run("generate", "--config", str(bad)) == 4
    bad.write_text("[simulation\n")
    assert run("generate", "--config", str(bad)) == 4
    assert run("featurize", "--config", str(tiny)) == 3
    blocker = tmp_path / "file"
    blocker.write_text("x")
    unwritable = tmp_path / "u.toml"
    unwritable.write_text(TINY + "[paths]\ndata_dir = 'file/data'\n")
    assert run("generate", "--config", str(unwritable), "--scenario", "normal") == 2
    assert run("generate", "--config", str(tiny), "--scenario", "nope") == 4


def test_single_scenario_and_byte_identical_rerun(tiny, tmp_path):
    assert run("generate", "--config", str(tiny), "--scenario", "load_step") == 0
    files = sorted(p.name for p in (tmp_path / "data").glob("*.csv"))
    assert files == ["load_step.csv"]
    first = (tmp_path / "data" / "load_step.csv").read_bytes()
    assert run("generate", "--config", str(tiny), "--scenario", "1") == 0
    assert (tmp_path / "data" / "load_step.csv").read_bytes() == first


@pytest.mark.slow
def test_full_pipeline_smoke(tiny, tmp_path, capsys):
    assert run("generate", "--config", str(tiny)) == 0
    data = tmp_path / "data"
    assert len(list(data.glob("*.csv"))) == 11
    assert run("featurize", "--config", str(tiny)) == 0
    manifest = json.loads((data / "features.json").read_text())
    assert set(manifest["counts"]) == {"train", "val", "ood_delay", "ood_noise"}
    # hybrid needs both base models
    assert run("train", "--config", str(tiny), "--model", "hybrid") == 3
    assert run("train", "--config", str(tiny), "--model", "gbm") == 0
    assert run("train", "--config", str(tiny), "--model", "cnn") == 0
    assert run("train", "--config", str(tiny), "--model", "hybrid") == 0
    assert run("eval", "--config", str(tiny)) == 0
    report = json.loads((tmp_path / "reports" / "metrics_all.json").read_text())
    assert len(report["records"]) == 3 * 3 * 4
    assert run("bench", "--config", str(tiny)) == 0
    bench = json.loads((tmp_path / "reports" / "bench.json").read_text())
    assert [r["method"] for r in bench["records"]][:4] == ["simulator", "gbm", "cnn", "hybrid"]
    # a changed setting makes downstream artifacts stale rather than silently reused
    stale = tmp_path / "stale.toml"
    stale.write_text(TINY.replace("n_estimators = 10", "n_estimators = 11"))
    assert run("eval", "--config", str(stale), "--model", "gbm") == 4
    capsys.readouterr()


def test_seed_override_changes_generated_data(tiny, tmp_path):
    assert run("generate", "--config", str(tiny), "--scenario", "normal") == 0
    a = (tmp_path / "data" / "normal.csv").read_bytes()
    shutil.rmtree(tmp_path / "data")
    assert run("generate", "--config", str(tiny), "--scenario", "normal", "--seed", "5") == 0
    assert (tmp_path / "data" / "normal.csv").read_bytes() != a
