import csv
import json

import numpy as np
import pytest

from blockrandom import cli, config, experiment
from blockrandom.checkpoint import load_checkpoint

TINY = {
    "extends": "emnist-analog",
    "dataset": {"n_classes": 3, "n_c": 40, "dim": 4},
    "network": {"hidden": [16]},
    "train": {"n_e": 2, "n_b": 8},
}

TINY_REG = {
    "extends": "channel-analog",
    "dataset": {"grid": [8, 8, 8]},
    "partition": {"extent": [4, 4, 4]},
    "network": {"hidden": [8, 8], "activations": ["leaky_relu", "tanh"]},
    "train": {"n_e": 2, "n_b": 16, "eta": 1e-3},
}


def _cfg(base, tmp_path, **over):
    return config.load(config.deep_merge(base, over), out=str(tmp_path))


def test_presets_load():
    assert {"emnist-analog", "channel-analog"} <= set(config.preset_names())
    cfg = config.load("emnist-analog")
    assert cfg["train"]["n_b"] == 64 and cfg["train"]["n_e"] == 50
    ch = config.load("channel-analog")
    assert ch["train"]["n_b"] == 256 and ch["train"]["eta"] == 1e-4


@pytest.mark.parametrize("over, path", [
    ({"train": {"n_b": 0}}, "config.train.n_b"),
    ({"train": {"optimizer": "rmsprop"}}, "config.train.optimizer"),
    ({"strategies": ["sorted"]}, "config.strategies.0"),
    ({"network": {"dropout": 1.5}}, "config.network.dropout"),
    ({"bogus": 1}, "config"),
    ({"network": {"output": "identity"}}, "config.network.output"),
])
def test_validation_paths(over, path):
    with pytest.raises(config.ConfigError) as e:
        config.load(config.deep_merge({"extends": "emnist-analog"}, over))
    assert e.value.path == path


def test_unknown_preset_and_missing_file():
    with pytest.raises(config.ConfigError):
        config.load({"extends": "nope"})
    with pytest.raises(config.ConfigError):
        config.load("/no/such/file.json")


def test_run_writes_artifacts(tmp_path):
    cfg = _cfg(TINY, tmp_path)
    r = experiment.run(cfg, "block-random")
    names = {p.name for p in tmp_path.iterdir()}
    assert {"metrics.csv", "epochs.csv", "jsd.csv", "trace.csv", "summary.json", "timings.json",
            "model.ckpt"} <= names
    rows = list(csv.reader(open(tmp_path / "epochs.csv")))
    assert rows[0] == ["epoch", "train_metric", "valid_metric"] and len(rows) == 3
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["final"]["valid"] == r.valid_metric and s["config"]["seed"] == 0 and s["version"]
    assert s["access"]["mean_nodes"] == 1.0
    net, seed = load_checkpoint(tmp_path / "model.ckpt")
    assert np.array_equal(net.weights[0], r.network.weights[0])


def test_summary_byte_identical(tmp_path):
    cfg = _cfg(TINY, tmp_path / "a")
    experiment.run(cfg, "shuffled")
    first = (tmp_path / "a" / "summary.json").read_bytes()
    experiment.run(cfg, "shuffled")
    assert (tmp_path / "a" / "summary.json").read_bytes() == first


def test_compare_same_init_and_table(tmp_path):
    cfg = _cfg(TINY, tmp_path)
    rows = experiment.compare(cfg)
    assert [r["strategy"] for r in rows] == ["shuffled", "block-unshuffled", "block-random"]
    assert set(rows[0]) >= {"alpha_train", "alpha_valid"}
    header = (tmp_path / "comparison.csv").read_text().splitlines()[0]
    assert header.startswith("strategy,alpha_train,alpha_valid")
    # with zero epochs every strategy reports the shared initial network
    z = experiment.compare(_cfg(TINY, tmp_path / "z", train={"n_e": 0}), write=False)
    assert len({r["alpha_valid"] for r in z}) == 1


def test_compare_regression_columns(tmp_path):
    rows = experiment.compare(_cfg(TINY_REG, tmp_path))
    assert set(rows[0]) >= {"eps_t", "eps_v"}
    assert all(r["eps_v"] > 0 for r in rows)


def test_sweep_ratio_skips_non_integer(tmp_path):
    cfg = _cfg(TINY, tmp_path, dataset={"n_c": 40})  # 32 training samples per class
    rows = experiment.sweep_ratio(cfg, ["1/16", "1/3", "1/4", "1"])
    assert [r["n_b"] for r in rows] == [2, None, 8, 32]
    assert rows[1]["status"].startswith("skipped")
    assert rows[0]["alpha_valid"] is not None and rows[1]["alpha_valid"] is None
    assert (tmp_path / "sweep_ratio.csv").exists()


def test_sweep_batchsize_rows(tmp_path):
    rows = experiment.sweep_batchsize(_cfg(TINY, tmp_path), [4, 8])
    assert [(r["n_b"], r["strategy"]) for r in rows] == [
        (4, "shuffled"), (4, "block-unshuffled"), (4, "block-random"),
        (8, "shuffled"), (8, "block-unshuffled"), (8, "block-random")]


def test_batch_size_over_block_is_config_error(tmp_path):
    cfg = _cfg(TINY, tmp_path, train={"n_b": 33})
    with pytest.raises(config.ConfigError, match="smallest block"):
        experiment.run(cfg, "block-random")


def test_cli_exit_codes(tmp_path, capsys):
    good = tmp_path / "c.json"
    good.write_text(json.dumps(TINY))
    assert cli.main(["run", "--config", str(good), "--out", str(tmp_path / "r"), "--quiet"]) == 0
    assert capsys.readouterr().out == ""
    assert (tmp_path / "r" / "summary.json").exists()
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**TINY, "train": {"n_b": -1}}))
    assert cli.main(["run", "--config", str(bad), "--quiet"]) == cli.EXIT_CONFIG
    bad.write_text("{not json")
    assert cli.main(["run", "--config", str(bad), "--quiet"]) == cli.EXIT_CONFIG
    csvcfg = tmp_path / "csv.json"
    csvcfg.write_text(json.dumps({**TINY, "dataset": {"kind": "csv", "path": str(tmp_path / "missing.csv")}}))
    assert cli.main(["run", "--config", str(csvcfg), "--quiet"]) == cli.EXIT_IO
    broken = tmp_path / "broken.csv"
    broken.write_text("f0,label\n1.0,0\nx,1\n")
    csvcfg.write_text(json.dumps({**TINY, "dataset": {"kind": "csv", "path": str(broken)}}))
    assert cli.main(["run", "--config", str(csvcfg), "--quiet"]) == cli.EXIT_DATA


def test_cli_seed_override_and_sweeps(tmp_path, capsys):
    good = tmp_path / "c.json"
    good.write_text(json.dumps(TINY))
    out = tmp_path / "s"
    assert cli.main(["sweep-ratio", "--config", str(good), "--ratios", "1/4,1", "--out", str(out),
                     "--seed", "3"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert [r["n_b"] for r in rows] == [8, 32]
    assert cli.main(["sweep-batchsize", "--config", str(good), "--sizes", "8", "--out", str(out),
                     "--quiet"]) == 0
    assert cli.main(["compare", "--config", str(good), "--out", str(out), "--quiet"]) == 0
    with pytest.raises(SystemExit):
        cli.main(["sweep-batchsize", "--config", str(good), "--sizes", "a,b"])
