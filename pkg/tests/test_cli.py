from __future__ import annotations

import json
import shutil

import pytest
import yaml

from synthab.cli import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main
from synthab.config import load_config
from synthab.errors import MissingStageInput, StaleManifest
from synthab.pipeline import Pipeline
from synthab.synthetic import write_fixture


@pytest.fixture(scope="module")
def one_shop(tmp_path_factory):
    root = tmp_path_factory.mktemp("one")
    return write_fixture(root, n_shops=1, n_buyers=30, agents_per_shop=10, seed=1, repeat=1, treatments=["deeper"])


def _copy(cfg, tmp_path):
    """A fresh copy of a fixture directory, without any outputs."""
    dest = tmp_path / "fx"
    shutil.copytree(cfg.parent, dest, ignore=shutil.ignore_patterns("out"))
    return dest / "config.yaml"


def _edit(cfg, **changes):
    raw = yaml.safe_load(cfg.read_text())
    raw.update(changes)
    cfg.write_text(yaml.safe_dump(raw, sort_keys=False))


def test_cluster_before_ingest(one_shop, tmp_path, capsys):
    cfg = _copy(one_shop, tmp_path)
    with pytest.raises(MissingStageInput):
        Pipeline(load_config(cfg)).run_stage("cluster")
    assert main(["--config", str(cfg), "cluster"]) == EXIT_RUNTIME
    assert "ingest" in capsys.readouterr().err


def test_missing_config_is_validation_error(tmp_path):
    assert main(["--config", str(tmp_path / "nope.yaml"), "ingest"]) == EXIT_VALIDATION


def test_bad_config_value(one_shop, tmp_path):
    cfg = _copy(one_shop, tmp_path)
    _edit(cfg, agents_per_shop=1)
    assert main(["--config", str(cfg), "ingest"]) == EXIT_VALIDATION


def test_full_run_then_up_to_date(one_shop, tmp_path, capsys):
    cfg = _copy(one_shop, tmp_path)
    assert main(["--config", str(cfg), "run"]) == EXIT_OK
    first = capsys.readouterr().out
    assert "simulate: ran" in first and "alignment probability" in first
    out = cfg.parent / "out"
    logs = [line for p in (out / "simulate/run0").glob("*.jsonl") for line in p.read_text().splitlines()]
    assert len(logs) == 20  # 10 agents on each of two themes
    assert main(["--config", str(cfg), "run"]) == EXIT_OK
    second = capsys.readouterr().out
    assert all(f"{s}: up-to-date" in second for s in ("ingest", "cluster", "personas", "simulate", "evaluate", "report"))


def test_edited_input_reruns(one_shop, tmp_path, capsys):
    cfg = _copy(one_shop, tmp_path)
    main(["--config", str(cfg), "ingest"])
    events = next((cfg.parent / "shops").glob("*.events.jsonl"))
    events.write_text(events.read_text() + events.read_text().splitlines()[0] + "\n")
    capsys.readouterr()
    main(["--config", str(cfg), "ingest"])
    assert "ingest: ran" in capsys.readouterr().out


def test_corrupt_manifest(one_shop, tmp_path, capsys):
    cfg = _copy(one_shop, tmp_path)
    main(["--config", str(cfg), "ingest"])
    manifest = cfg.parent / "out" / "manifest.json"
    manifest.write_text("{ not json")
    with pytest.raises(StaleManifest) as info:
        Pipeline(load_config(cfg))
    assert "--force" in info.value.hint
    capsys.readouterr()
    assert main(["--config", str(cfg), "ingest"]) == EXIT_RUNTIME
    assert main(["--config", str(cfg), "ingest", "--force"]) == EXIT_OK
    json.loads(manifest.read_text())


def test_repeat_runs_use_distinct_seeds(one_shop, tmp_path):
    cfg = _copy(one_shop, tmp_path)
    for stage in ("ingest", "cluster", "personas"):
        assert main(["--config", str(cfg), stage]) == EXIT_OK
    assert main(["--config", str(cfg), "--workers", "2", "simulate", "--repeat", "2"]) == EXIT_OK
    out = cfg.parent / "out" / "simulate"
    seeds = [
        {json.loads(line)["seed"] for line in (out / f"run{r}" / "shop00__control.jsonl").read_text().splitlines()}
        for r in (0, 1)
    ]
    assert len(seeds[0]) == 10 and not seeds[0] & seeds[1]


def test_identical_configs_identical_logs(one_shop, tmp_path):
    a = _copy(one_shop, tmp_path / "a")
    b = _copy(one_shop, tmp_path / "b")
    assert main(["--config", str(a), "run"]) == EXIT_OK
    assert main(["--config", str(b), "--workers", "3", "run"]) == EXIT_OK
    for p in sorted((a.parent / "out" / "simulate").rglob("*.jsonl")):
        q = b.parent / "out" / "simulate" / p.relative_to(a.parent / "out" / "simulate")
        assert p.read_bytes() == q.read_bytes()


def test_null_fixture_within_noise(tmp_path):
    cfg = write_fixture(tmp_path, n_shops=1, n_buyers=30, agents_per_shop=60, seed=2, treatments=["identical"])
    _edit(cfg, shops=[dict(yaml.safe_load(cfg.read_text())["shops"][0], human_delta=0.01)])
    assert main(["--config", str(cfg), "run"]) == EXIT_OK
    report = json.loads((tmp_path / "out" / "evaluate" / "report.json").read_text())
    row = report["runs"][0]["per_shop"][0]
    assert row["within_noise"] and abs(row["agent_delta"]) <= row["noise_band"]


def test_bootstrap_rows(tmp_path):
    cfg = write_fixture(tmp_path, n_shops=2, n_buyers=30, agents_per_shop=10, seed=3, repeat=2)
    _edit(cfg, bootstrap={"sizes": list(range(50, 701, 50)), "iterations": 20})
    assert main(["--config", str(cfg), "run"]) == EXIT_OK
    boot = json.loads((tmp_path / "out" / "bootstrap" / "bootstrap.json").read_text())["bootstrap"]
    assert len(boot["rows"]) == 14 and boot["sizes"][0] == 50 and boot["sizes"][-1] == 700
    assert len((tmp_path / "out" / "bootstrap" / "bands.csv").read_text().splitlines()) == 1 + 2 * 14


def test_bootstrap_needs_two_runs(one_shop, tmp_path):
    cfg = _copy(one_shop, tmp_path)
    main(["--config", str(cfg), "run"])
    assert main(["--config", str(cfg), "bootstrap"]) == EXIT_RUNTIME


def test_synth_command(tmp_path, capsys):
    assert main(["--seed", "4", "synth", str(tmp_path / "syn"), "--shops", "2", "--agents", "10"]) == EXIT_OK
    cfg = load_config(tmp_path / "syn" / "config.yaml")
    assert len(cfg.shops) == 2 and cfg.run_seed == 4 and cfg.agents_per_shop == 10
