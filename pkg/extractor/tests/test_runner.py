"""Run extraction against handcrafted plan.json files."""

import json
import os

import numpy as np
import pytest
from PIL import Image
from vpbench.embedio import read_embedding_set

from extractor.cli import main
from extractor.errors import DimMismatch, InvalidPlan, RefusedOverwrite
from extractor.runner import extract_run, load_plan

_TEST_KEY = "alpha=0.0/trial=0"


def write_png(path, arr):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    Image.fromarray(np.ascontiguousarray(arr, dtype=np.uint8), mode="RGB").save(path)


def patterned(side, seed):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(side, side, 3), dtype=np.uint8)


def write_json(path, doc):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, sort_keys=True, indent=2)
        f.write("\n")


def _job(image_id, output_path, split, label, alpha=None, trial=None):
    return {
        "image_id": image_id,
        "input_path": f"images/{image_id}.png",
        "output_path": output_path,
        "split": split,
        "label": label,
        "alpha": alpha,
        "trial": trial,
        "homography": None,
    }


def _mini_run(root, side=16):
    """Two train images, three test images (third duplicates the first)."""
    run = str(root / "run")
    plan = {
        "dataset": "mini",
        "num_classes": 2,
        "side": side,
        "warp_mode": "default",
        "master_seed": 0,
        "jobs": [
            _job("a", "warped/mini/clean/a.png", "train", 0),
            _job("b", "warped/mini/clean/b.png", "train", 1),
            _job("c", "warped/mini/0.0/0/c.png", "test", 0, 0.0, 0),
            _job("d", "warped/mini/0.0/0/d.png", "test", 1, 0.0, 0),
            _job("c2", "warped/mini/0.0/0/c2.png", "test", 0, 0.0, 0),
        ],
        "embeddings": {
            "train": "embeddings/train.emb1",
            "test": {_TEST_KEY: f"embeddings/test_{_TEST_KEY.replace('/', '_')}.emb1"},
        },
    }
    write_json(os.path.join(run, "plan.json"), plan)
    dup = patterned(side, seed=30)
    write_png(os.path.join(run, "warped/mini/clean/a.png"), patterned(side, seed=10))
    write_png(os.path.join(run, "warped/mini/clean/b.png"), patterned(side, seed=20))
    write_png(os.path.join(run, "warped/mini/0.0/0/c.png"), dup)
    write_png(os.path.join(run, "warped/mini/0.0/0/d.png"), patterned(side, seed=40))
    write_png(os.path.join(run, "warped/mini/0.0/0/c2.png"), dup)
    return run


def test_extract_groups_and_row_order(tmp_path):
    run = _mini_run(tmp_path)
    written, n_images = extract_run(run, "pixelstat")
    assert n_images == 5
    assert sorted(written) == sorted(["train", _TEST_KEY])

    train = read_embedding_set(written["train"])
    assert train.meta.model_name == "pixelstat"
    assert train.meta.dataset == "mini"
    assert train.meta.num_classes == 2
    assert list(train.labels) == [0, 1]

    test = read_embedding_set(written[_TEST_KEY])
    assert list(test.labels) == [0, 1, 0]
    # Duplicate image bytes embed to identical rows; distinct ones do not.
    assert np.array_equal(test.matrix[0], test.matrix[2])
    assert not np.allclose(test.matrix[0], test.matrix[1])


def test_refuses_then_forces_overwrite(tmp_path):
    run = _mini_run(tmp_path)
    extract_run(run, "pixelstat")
    with pytest.raises(RefusedOverwrite, match="--force"):
        extract_run(run, "pixelstat")
    written, _ = extract_run(run, "pixelstat", force=True)
    assert all(os.path.exists(p) for p in written.values())


def test_wrong_size_image_is_dim_mismatch(tmp_path):
    run = _mini_run(tmp_path)
    write_png(os.path.join(run, "warped/mini/0.0/0/d.png"), patterned(8, seed=40))
    with pytest.raises(DimMismatch, match="8x8"):
        extract_run(run, "pixelstat")


def test_hub_spec_asserts_preprocessed_side(tmp_path):
    run = _mini_run(tmp_path)
    # Fails before any model loading, so it works offline.
    with pytest.raises(DimMismatch, match="224"):
        extract_run(run, "supervised_rn50")


def test_missing_plan_and_malformed_plan(tmp_path):
    with pytest.raises(InvalidPlan, match="plan.json"):
        load_plan(str(tmp_path))
    (tmp_path / "plan.json").write_text("{nope", encoding="utf-8")
    with pytest.raises(InvalidPlan, match="unreadable"):
        load_plan(str(tmp_path))


def test_undeclared_group_is_invalid_plan(tmp_path):
    run = _mini_run(tmp_path)
    path = os.path.join(run, "plan.json")
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    doc["jobs"][2]["alpha"] = 0.25
    write_json(path, doc)
    with pytest.raises(InvalidPlan, match="alpha=0.25"):
        extract_run(run, "pixelstat")


def test_cli_happy_path_and_exit_codes(tmp_path, capsys):
    run = _mini_run(tmp_path)
    assert main(["--run", run, "--backend", "pixelstat"]) == 0
    out = capsys.readouterr().out
    assert "embedded 5 images into 2 sets" in out

    # Rerun without --force is a usage error, with it a success.
    assert main(["--run", run, "--backend", "pixelstat"]) == 1
    assert main(["--run", run, "--backend", "pixelstat", "--force"]) == 0

    assert main(["--run", run, "--backend", "resnet9000"]) == 1
    assert main(["--backend", "pixelstat"]) == 1
    assert main(["--run", run, "--backend", "pixelstat", "--batch-size", "0"]) == 1
    assert main(["--run", str(tmp_path / "nowhere"), "--backend", "pixelstat"]) == 2


def test_cli_missing_image_is_data_error(tmp_path, capsys):
    run = _mini_run(tmp_path)
    os.remove(os.path.join(run, "warped/mini/clean/b.png"))
    assert main(["--run", run, "--backend", "pixelstat"]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_json_errors(tmp_path, capsys):
    assert main(["--run", str(tmp_path), "--backend", "pixelstat", "--json-errors"]) == 2
    doc = json.loads(capsys.readouterr().err)
    assert doc["error"] == "InvalidPlan"
    assert doc["kind"] == "data"


def test_cli_list_backends(capsys):
    assert main(["--list-backends"]) == 0
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.strip()]
    assert len(lines) == 17
    assert any("SWaV (RN50w2)" in ln for ln in lines)


def test_cli_small_batches_match_single_batch(tmp_path):
    run = _mini_run(tmp_path)
    extract_run(run, "pixelstat", batch_size=1)
    one = read_embedding_set(os.path.join(run, "embeddings/train.emb1")).matrix
    extract_run(run, "pixelstat", batch_size=64, force=True)
    big = read_embedding_set(os.path.join(run, "embeddings/train.emb1")).matrix
    assert np.array_equal(one, big)
