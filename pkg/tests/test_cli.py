"""End-to-end CLI behavior: exit codes, refusals, error channels."""

import json
import os

import pytest

from vpbench import cli


def _write_config(path, **overrides):
    doc = {
        "protocol": "homography_linear_eval",
        "trials": 1,
        "master_seed": 5,
        "alphas": [0.0, 0.4],
        "side": 16,
        "lambda": 1e-3,
    }
    doc.update(overrides)
    with open(path, "w") as f:
        json.dump(doc, f)
    return str(path)


@pytest.fixture()
def data_dir(tmp_path):
    d = tmp_path / "data"
    assert cli.main(["synth", "--out", str(d), "--per-class", "4", "--size", "24"]) == 0
    return d


def test_full_pipeline(tmp_path, data_dir, capsys):
    cfg = _write_config(tmp_path / "config.json")
    run = tmp_path / "run"
    assert (
        cli.main(
            ["plan", "--manifest", str(data_dir / "manifest.json"), "--config", cfg, "--out", str(run)]
        )
        == 0
    )
    out = capsys.readouterr().out
    assert "planned 18 jobs (6 train, 12 test)" in out
    assert (run / "config.json").is_file() and (run / "plan.json").is_file()

    assert cli.main(["warp", "--run", str(run), "--data", str(data_dir)]) == 0
    assert (run / "warped/stripes/clean/horizontal_00.png").is_file()
    assert (run / "warped/stripes/0.4/0/horizontal_02.png").is_file()

    assert cli.main(["embed", "--run", str(run)]) == 0
    assert (run / "embeddings/train.emb1").is_file()
    assert (run / "embeddings/test_alpha=0.4_trial=0.emb1").is_file()

    assert cli.main(["eval", "--run", str(run)]) == 0
    out = capsys.readouterr().out
    assert "alpha=0.0: mean accuracy" in out
    assert (run / "results/trials.csv").read_text().startswith(
        "protocol,dataset,model,model_type,condition,trial,accuracy\n"
    )
    assert (run / "results/results.json").is_file()

    assert cli.main(["report", "--run", str(run)]) == 0
    for name in ("table.csv", "table.svg", "table.json", "relative_decrease.csv"):
        assert (run / "results" / name).is_file()

    # EMB1 and manifest validation succeed on the run's own artifacts
    assert cli.main(["validate", "--emb", str(run / "embeddings/train.emb1")]) == 0
    assert (
        cli.main(
            ["validate", "--manifest", str(data_dir / "manifest.json"), "--data", str(data_dir)]
        )
        == 0
    )


def test_plan_bytes_are_deterministic(tmp_path, data_dir):
    cfg = _write_config(tmp_path / "config.json")
    man = str(data_dir / "manifest.json")
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["plan", "--manifest", man, "--config", cfg, "--out", str(a)]) == 0
    assert cli.main(["plan", "--manifest", man, "--config", cfg, "--out", str(b)]) == 0
    assert (a / "plan.json").read_bytes() == (b / "plan.json").read_bytes()
    assert (a / "config.json").read_bytes() == (b / "config.json").read_bytes()


def test_plan_seed_override(tmp_path, data_dir):
    cfg = _write_config(tmp_path / "config.json")
    man = str(data_dir / "manifest.json")
    run = tmp_path / "r"
    assert cli.main(["plan", "--manifest", man, "--config", cfg, "--out", str(run), "--seed", "123"]) == 0
    assert json.loads((run / "config.json").read_text())["master_seed"] == 123


def test_plan_refuses_overwrite_without_force(tmp_path, data_dir, capsys):
    cfg = _write_config(tmp_path / "config.json")
    man = str(data_dir / "manifest.json")
    run = str(tmp_path / "run")
    assert cli.main(["plan", "--manifest", man, "--config", cfg, "--out", run]) == 0
    assert cli.main(["plan", "--manifest", man, "--config", cfg, "--out", run]) == 1
    assert "pass --force to overwrite" in capsys.readouterr().err
    assert cli.main(["plan", "--manifest", man, "--config", cfg, "--out", run, "--force"]) == 0


def test_plan_rejects_other_protocols(tmp_path, data_dir, capsys):
    cfg = _write_config(
        tmp_path / "config.json",
        protocol="support_sweep",
        support_counts=[1, 5],
    )
    rc = cli.main(
        ["plan", "--manifest", str(data_dir / "manifest.json"), "--config", cfg, "--out", str(tmp_path / "r")]
    )
    assert rc == 1
    assert "usage error" in capsys.readouterr().err


def test_eval_before_embed_names_missing_embedding(tmp_path, data_dir, capsys):
    cfg = _write_config(tmp_path / "config.json")
    run = str(tmp_path / "run")
    assert cli.main(["plan", "--manifest", str(data_dir / "manifest.json"), "--config", cfg, "--out", run]) == 0
    assert cli.main(["eval", "--run", run]) == 2
    err = capsys.readouterr().err
    assert "MissingEmbedding" in err
    assert "run `embed` first" in err


def test_warp_without_plan_exits_two(tmp_path, capsys):
    assert cli.main(["warp", "--run", str(tmp_path / "nope"), "--data", str(tmp_path)]) == 2
    assert "run `plan` first" in capsys.readouterr().err


def test_json_errors_are_machine_readable(tmp_path, capsys):
    rc = cli.main(["--json-errors", "plan", "--manifest", "missing.json", "--config", "x", "--out", "y"])
    assert rc == 2
    doc = json.loads(capsys.readouterr().err)
    assert doc["kind"] == "data" and doc["error"] == "IoError"

    rc = cli.main(["--json-errors", "plan"])  # parse failure before handlers
    assert rc == 1
    doc = json.loads(capsys.readouterr().err)
    assert doc["kind"] == "usage" and doc["error"] == "UsageError"


def test_missing_and_unknown_subcommands(capsys):
    assert cli.main([]) == 1
    assert "missing subcommand" in capsys.readouterr().err
    assert cli.main(["frobnicate"]) == 1
    assert "invalid choice" in capsys.readouterr().err


def test_embed_unknown_backend(tmp_path, data_dir, capsys):
    cfg = _write_config(tmp_path / "config.json")
    run = str(tmp_path / "run")
    assert cli.main(["plan", "--manifest", str(data_dir / "manifest.json"), "--config", cfg, "--out", run]) == 0
    assert cli.main(["embed", "--run", run, "--backend", "resnet"]) == 1
    assert "unknown backend" in capsys.readouterr().err


def test_thread_env_validation(tmp_path, data_dir, capsys, monkeypatch):
    cfg = _write_config(tmp_path / "config.json")
    run = str(tmp_path / "run")
    assert cli.main(["plan", "--manifest", str(data_dir / "manifest.json"), "--config", cfg, "--out", run]) == 0
    monkeypatch.setenv("VPB_THREADS", "many")
    assert cli.main(["warp", "--run", run, "--data", str(data_dir)]) == 1
    assert "VPB_THREADS" in capsys.readouterr().err
    monkeypatch.setenv("VPB_THREADS", "0")
    assert cli.main(["warp", "--run", run, "--data", str(data_dir)]) == 1
    monkeypatch.setenv("VPB_THREADS", "2")
    assert cli.main(["warp", "--run", run, "--data", str(data_dir)]) == 0
    assert cli.main(["warp", "--run", run, "--data", str(data_dir), "--threads", "0"]) == 1


def test_inscribe_prints_rect_json(tmp_path, capsys):
    poly = tmp_path / "poly.json"
    poly.write_text(json.dumps({"vertices": [[0, 0], [2, 0], [2, 2], [0, 2]]}))
    assert cli.main(["inscribe", "--polygon", str(poly)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["area"] == pytest.approx(4.0, abs=1e-6)
    assert doc["x0"] == pytest.approx(0.0, abs=1e-6)
    assert doc["x1"] == pytest.approx(2.0, abs=1e-6)

    poly.write_text(json.dumps({"corners": []}))
    assert cli.main(["inscribe", "--polygon", str(poly)]) == 2
    # clockwise winding is structurally fine JSON but geometrically invalid
    poly.write_text(json.dumps({"vertices": [[0, 0], [0, 2], [2, 2], [2, 0]]}))
    assert cli.main(["inscribe", "--polygon", str(poly)]) == 2
    capsys.readouterr()


def test_validate_argument_exclusivity(tmp_path, data_dir, capsys):
    man = str(data_dir / "manifest.json")
    assert cli.main(["validate"]) == 1
    assert cli.main(["validate", "--manifest", man, "--emb", "x.emb1"]) == 1
    capsys.readouterr()


def test_validate_reports_violations_on_stderr(tmp_path, data_dir, capsys):
    man = json.loads((data_dir / "manifest.json").read_text())
    man["images"][0]["path"] = "images/ghost.png"
    bad = tmp_path / "bad_manifest.json"
    bad.write_text(json.dumps(man))
    rc = cli.main(["validate", "--manifest", str(bad), "--data", str(data_dir)])
    assert rc == 2
    err = capsys.readouterr().err
    assert "MissingFile" in err


def test_synth_refuses_overwrite(tmp_path, capsys):
    out = str(tmp_path / "d")
    assert cli.main(["synth", "--out", out, "--per-class", "2", "--size", "16"]) == 0
    assert cli.main(["synth", "--out", out, "--per-class", "2", "--size", "16"]) == 1
    assert cli.main(["synth", "--out", out, "--per-class", "2", "--size", "16", "--force"]) == 0
    capsys.readouterr()


def test_internal_errors_exit_three(tmp_path, capsys, monkeypatch):
    def boom(args):
        raise RuntimeError("wires crossed")

    monkeypatch.setitem(cli._HANDLERS, "synth", boom)
    assert cli.main(["synth", "--out", str(tmp_path / "x")]) == 3
    assert "internal error" in capsys.readouterr().err
    assert cli.main(["--json-errors", "synth", "--out", str(tmp_path / "x")]) == 3
    doc = json.loads(capsys.readouterr().err)
    assert doc == {"kind": "internal", "error": "RuntimeError", "message": "wires crossed"}
