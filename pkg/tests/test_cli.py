"""Command line tests: each subcommand end to end on tiny inputs.

Covers the exit-code contract (0 success, 2 usage, 3 data, 4 training),
the RULEHOUND_OUT fallback, config-file precedence, manifest contents,
and that a repeated compare run writes byte-identical outputs.
"""

import csv
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from rulehound.cli import METRICS_COLUMNS, _load_oracle, main
from rulehound.dqn import QAgent
from rulehound.pbre import RuleSet
from rulehound.rxncm import RxNCMExtractor
from rulehound.smarthome import EnvConfig, make_agent


def _write_toy(dir_path: Path, n: int = 48, seed: int = 7) -> Path:
    """A linearly separable two-input CSV with its schema sidecar."""
    rng = np.random.default_rng(seed)
    xs = rng.random((n, 2))
    lines = ["x1,x2,y"]
    for x1, x2 in xs:
        label = "hi" if x1 > 0.5 else "lo"
        lines.append(f"{float(x1)!r},{float(x2)!r},{label}")
    data = dir_path / "toy.csv"
    data.write_text("\n".join(lines) + "\n")
    schema = {
        "fields": [
            {"name": "x1", "kind": "continuous", "role": "input"},
            {"name": "x2", "kind": "continuous", "role": "input"},
            {"name": "y", "kind": "discrete", "role": "target", "categories": ["hi", "lo"]},
        ]
    }
    (dir_path / "toy.schema.json").write_text(json.dumps(schema))
    return data


TRAIN_FLAGS = ["--hidden", "8", "--epochs", "120", "--lr", "0.05", "--seed", "0"]


@pytest.fixture(scope="module")
def toy_setup(tmp_path_factory):
    """Toy dataset plus a model checkpoint trained on it once."""
    root = tmp_path_factory.mktemp("cli_toy")
    data = _write_toy(root)
    out = root / "model"
    assert main(["train", "--data", str(data), "--out", str(out), *TRAIN_FLAGS]) == 0
    return data, out / "model.json"


def _read_metrics(path: Path) -> list[list[str]]:
    with path.open(newline="") as fh:
        return list(csv.reader(fh))


def test_train_outputs_and_manifest(toy_setup, tmp_path, capsys):
    data, _ = toy_setup
    out = tmp_path / "run"
    rc = main(["train", "--data", str(data), "--out", str(out), *TRAIN_FLAGS])
    captured = capsys.readouterr()
    assert rc == 0
    assert "train accuracy" in captured.out

    payload = json.loads((out / "model.json").read_text())
    assert payload["kind"] == "classifier"

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "train"
    assert manifest["seed"] == 0
    assert manifest["outputs"] == ["model.json"]
    digest = hashlib.sha256(data.read_bytes()).hexdigest()
    assert manifest["inputs"][str(data)] == digest
    assert set(manifest["versions"]) == {"package", "python", "numpy"}


def test_train_schema_override(tmp_path):
    data = _write_toy(tmp_path)
    moved = tmp_path / "elsewhere.json"
    (tmp_path / "toy.schema.json").rename(moved)
    out = tmp_path / "run"
    args = ["train", "--data", str(data), "--out", str(out), *TRAIN_FLAGS]
    assert main(args) == 2
    assert main(args + ["--schema", str(moved)]) == 0


def test_missing_data_exits_2(tmp_path, capsys):
    rc = main(["train", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "usage error" in capsys.readouterr().err


def test_missing_out_exits_2(toy_setup, monkeypatch, capsys):
    data, _ = toy_setup
    monkeypatch.delenv("RULEHOUND_OUT", raising=False)
    rc = main(["train", "--data", str(data)])
    assert rc == 2
    assert "RULEHOUND_OUT" in capsys.readouterr().err


def test_out_env_fallback(toy_setup, tmp_path, monkeypatch):
    data, _ = toy_setup
    out = tmp_path / "from_env"
    monkeypatch.setenv("RULEHOUND_OUT", str(out))
    rc = main(["train", "--data", str(data), *TRAIN_FLAGS])
    assert rc == 0
    assert (out / "model.json").is_file()


def test_bad_hidden_exits_2(toy_setup, tmp_path, capsys):
    data, _ = toy_setup
    rc = main(["train", "--data", str(data), "--out", str(tmp_path), "--hidden", "8,x"])
    assert rc == 2
    assert "--hidden" in capsys.readouterr().err


def test_divergent_training_exits_4(toy_setup, tmp_path, capsys):
    data, _ = toy_setup
    args = ["train", "--data", str(data), "--out", str(tmp_path), "--lr", "1e308"]
    with np.errstate(all="ignore"):
        rc = main(args)
    assert rc == 4
    assert "training error" in capsys.readouterr().err


def test_malformed_csv_exits_3(tmp_path, capsys):
    data = _write_toy(tmp_path)
    data.write_text("x1,x2,y\noops,0.2,hi\n")
    rc = main(["train", "--data", str(data), "--out", str(tmp_path / "o")])
    assert rc == 3
    assert "data error" in capsys.readouterr().err


def test_unknown_subcommand_exits_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_extract_pbre_outputs(toy_setup, tmp_path):
    data, model = toy_setup
    out = tmp_path / "run"
    rc = main(["extract", "--data", str(data), "--model", str(model), "--out", str(out)])
    assert rc == 0

    ruleset = RuleSet.load(out / "rules.json")
    assert len(ruleset) >= 1

    report = json.loads((out / "report.json").read_text())
    assert [row["split"] for row in report["rows"]] == ["seen", "unseen"]

    rows = _read_metrics(out / "metrics.csv")
    assert rows[0] == list(METRICS_COLUMNS)
    assert len(rows) == 3
    assert rows[1][0] == "toy" and rows[1][1] == "pbre"

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["settings"]["tolerance"] == 0.05
    assert manifest["settings"]["epsilon"] == 1e-3
    assert sorted(manifest["outputs"]) == ["metrics.csv", "report.json", "rules.json"]


def test_extract_rxncm_outputs(toy_setup, tmp_path):
    data, model = toy_setup
    out = tmp_path / "run"
    rc = main(
        ["extract", "--data", str(data), "--model", str(model), "--out", str(out), "--method", "rxncm"]
    )
    assert rc == 0
    est = RxNCMExtractor.load(out / "rules.json")
    assert est.num_rules_ >= 1


def test_extract_missing_model_exits_2(toy_setup, tmp_path):
    data, _ = toy_setup
    rc = main(
        ["extract", "--data", str(data), "--model", str(tmp_path / "no.json"), "--out", str(tmp_path)]
    )
    assert rc == 2


def test_extract_unknown_checkpoint_kind_exits_3(toy_setup, tmp_path, capsys):
    data, _ = toy_setup
    bogus = tmp_path / "bogus.json"
    bogus.write_text(json.dumps({"kind": "mystery"}))
    rc = main(["extract", "--data", str(data), "--model", str(bogus), "--out", str(tmp_path)])
    assert rc == 3
    assert "unknown kind" in capsys.readouterr().err


def test_extract_invalid_checkpoint_json_exits_3(toy_setup, tmp_path):
    data, _ = toy_setup
    bogus = tmp_path / "bogus.json"
    bogus.write_text("{not json")
    rc = main(["extract", "--data", str(data), "--model", str(bogus), "--out", str(tmp_path)])
    assert rc == 3


def test_extract_unknown_extraction_setting_exits_3(toy_setup, tmp_path, capsys):
    data, model = toy_setup
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"extraction": {"bogus": 1}}))
    rc = main(
        ["extract", "--data", str(data), "--model", str(model), "--out", str(tmp_path), "--config", str(cfg)]
    )
    assert rc == 3
    assert "bogus" in capsys.readouterr().err


def test_extract_config_precedence(toy_setup, tmp_path):
    # Config file applies when the flag is absent; the flag wins otherwise.
    data, model = toy_setup
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"extraction": {"tolerance_fraction": 0.2}}))
    base = ["extract", "--data", str(data), "--model", str(model), "--config", str(cfg)]

    out_a = tmp_path / "a"
    assert main(base + ["--out", str(out_a)]) == 0
    assert json.loads((out_a / "manifest.json").read_text())["settings"]["tolerance"] == 0.2

    out_b = tmp_path / "b"
    assert main(base + ["--out", str(out_b), "--tolerance", "0.01"]) == 0
    assert json.loads((out_b / "manifest.json").read_text())["settings"]["tolerance"] == 0.01


def test_load_oracle_dispatches_qagent(tmp_path):
    agent = make_agent(EnvConfig(), np.random.default_rng(0), hidden_layer_sizes=(4,))
    path = tmp_path / "agent.json"
    path.write_text(json.dumps(agent.to_dict()))
    loaded = _load_oracle(path)
    assert isinstance(loaded, QAgent)


def test_compare_outputs_and_rerun_identical(toy_setup, tmp_path):
    data, _ = toy_setup
    args = [
        "compare",
        "--data", str(data),
        "--seeds", "0,1",
        "--hidden", "8",
        "--epochs", "80",
        "--lr", "0.05",
    ]
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(args + ["--out", str(out_a)]) == 0
    assert main(args + ["--out", str(out_b)]) == 0

    rows = _read_metrics(out_a / "metrics.csv")
    assert rows[0] == list(METRICS_COLUMNS)
    # 1 dataset x 2 methods x 2 splits, averaged over seeds.
    assert len(rows) == 5
    assert {row[1] for row in rows[1:]} == {"pbre", "rxncm"}

    details = json.loads((out_a / "details.json").read_text())
    assert len(details["runs"]) == 8

    saved = sorted(p.name for p in (out_a / "rules").iterdir())
    assert saved == ["toy_pbre_s0.json", "toy_pbre_s1.json", "toy_rxncm_s0.json", "toy_rxncm_s1.json"]

    assert (out_a / "metrics.csv").read_bytes() == (out_b / "metrics.csv").read_bytes()
    assert (out_a / "details.json").read_bytes() == (out_b / "details.json").read_bytes()


def test_compare_unknown_method_exits_2(toy_setup, tmp_path, capsys):
    data, _ = toy_setup
    rc = main(["compare", "--data", str(data), "--out", str(tmp_path), "--methods", "pbre,magic"])
    assert rc == 2
    assert "magic" in capsys.readouterr().err


def test_simulate_v1_end_to_end(tmp_path, capsys):
    out = tmp_path / "run"
    rc = main(["simulate", "--variant", "v1", "--seed", "0", "--out", str(out)])
    captured = capsys.readouterr()
    assert rc == 0
    assert "converged" in captured.out

    ruleset = RuleSet.load(out / "rules.json")
    assert len(ruleset) == 4

    lines = (out / "rules.txt").read_text().splitlines()
    assert len(lines) == 4
    assert all(line.startswith("when the inhabitant is") for line in lines)

    rows = _read_metrics(out / "metrics.csv")
    assert len(rows) == 3
    assert rows[1][0] == "v1" and [r[2] for r in rows[1:]] == ["seen", "unseen"]

    transitions = (out / "transitions.csv").read_text().splitlines()
    assert len(transitions) == 289

    assert isinstance(_load_oracle(out / "checkpoint.json"), QAgent)

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["settings"]["variant"] == "v1"
    assert manifest["settings"]["num_rules"] == 4
    assert manifest["settings"]["episodes_run"] >= 1


def test_simulate_rxncm_writes_no_text_rules(tmp_path):
    out = tmp_path / "run"
    rc = main(["simulate", "--variant", "v1", "--seed", "0", "--out", str(out), "--method", "rxncm"])
    assert rc == 0
    est = RxNCMExtractor.load(out / "rules.json")
    assert est.num_rules_ >= 1
    assert not (out / "rules.txt").exists()


def test_simulate_budget_exhausted_exits_4(tmp_path, capsys):
    out = tmp_path / "run"
    rc = main(["simulate", "--variant", "v1", "--episodes", "1", "--out", str(out)])
    assert rc == 4
    assert "training error" in capsys.readouterr().err
    assert not (out / "rules.json").exists()


def test_simulate_unknown_config_section_exits_3(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": {}}))
    rc = main(["simulate", "--variant", "v1", "--out", str(tmp_path), "--config", str(cfg)])
    assert rc == 3
    assert "config section" in capsys.readouterr().err


def test_simulate_unknown_env_key_exits_3(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"env": {"bogus": 1}}))
    rc = main(["simulate", "--variant", "v1", "--out", str(tmp_path), "--config", str(cfg)])
    assert rc == 3


def test_simulate_unknown_agent_key_exits_3(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"agent": {"bogus": 1}}))
    rc = main(["simulate", "--variant", "v1", "--out", str(tmp_path), "--config", str(cfg)])
    assert rc == 3
    assert "agent settings" in capsys.readouterr().err


def test_simulate_config_overrides(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(
        json.dumps(
            {
                "training": {"episodes": 80},
                "agent": {"hidden_layer_sizes": [16, 16], "sync_every": 100},
            }
        )
    )
    out = tmp_path / "run"
    rc = main(["simulate", "--variant", "v1", "--seed", "0", "--out", str(out), "--config", str(cfg)])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["settings"]["episodes_run"] <= 80
    assert str(cfg) in manifest["inputs"]
