"""Run-level extraction: plan.json and PNG trees in, EMB1 files out.

The harness's `plan` step records every warped image plus the embedding
files its `eval` step will look for. This module replays that contract
from the outside: jobs are grouped into the train set and one test set
per (alpha, trial), each group's images are pushed through a backend in
plan order, and the features land exactly where plan.json points. No
geometry happens here; images are consumed as the harness wrote them.
"""

import json
import os

import numpy as np
from PIL import Image

from . import backends
from .emb1 import write_emb1
from .errors import DimMismatch, InvalidPlan, RefusedOverwrite

__all__ = ["load_plan", "extract_run"]


def load_plan(run_dir):
    """Read and sanity-check run_dir/plan.json.

    Raises:
        InvalidPlan: file missing, unparseable, or structurally wrong.
    """
    path = os.path.join(run_dir, "plan.json")
    if not os.path.exists(path):
        raise InvalidPlan(
            f"no plan.json under {run_dir!r}; run the harness's `plan` and "
            "`warp` steps first"
        )
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise InvalidPlan(f"unreadable plan.json: {e}") from e
    for key in ("dataset", "num_classes", "side", "jobs", "embeddings"):
        if key not in doc:
            raise InvalidPlan(f"plan.json is missing {key!r}")
    if not doc["jobs"]:
        raise InvalidPlan("plan.json lists no jobs")
    emb = doc["embeddings"]
    if not isinstance(emb, dict) or "train" not in emb or "test" not in emb:
        raise InvalidPlan("plan.json embeddings must map train and test outputs")
    return doc


def _test_key(alpha, trial):
    # Must match the harness's group naming or eval cannot find the files.
    return f"alpha={float(alpha)!r}/trial={trial}"


def _group_jobs(plan):
    """Jobs per embedding group, plan order preserved within each."""
    groups = {"train": []}
    for key in plan["embeddings"]["test"]:
        groups[key] = []
    for job in plan["jobs"]:
        if job["split"] == "train":
            key = "train"
        else:
            key = _test_key(job["alpha"], job["trial"])
        if key not in groups:
            raise InvalidPlan(
                f"job {job['image_id']!r} belongs to group {key!r} but the plan "
                "declares no such embedding file"
            )
        groups[key].append(job)
    for key, jobs in groups.items():
        if not jobs:
            raise InvalidPlan(f"embedding group {key!r} has no jobs")
    return groups


def _load_batch(run_dir, jobs, side):
    imgs = []
    for job in jobs:
        path = os.path.join(run_dir, job["output_path"])
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
        h, w = arr.shape[:2]
        if h != side or w != side:
            raise DimMismatch(
                f"{job['output_path']}: image is {w}x{h}, plan says {side}x{side}"
            )
        imgs.append(arr)
    return np.stack(imgs)


def extract_run(run_dir, backend_name, *, batch_size=64, force=False):
    """Embed every image of a planned run with the named backend.

    Outputs overwrite nothing unless force is set; a partial previous
    run (any target file present) is treated the same as a complete
    one, since silently mixing producers would corrupt the eval.

    Args:
        run_dir: directory holding plan.json and the warped PNG tree.
        backend_name: registry slug, see backends.names().
        batch_size: images per forward pass.
        force: replace existing embedding files.

    Returns:
        (written, n_images): dict of group key to absolute output path,
        and the total number of images embedded.

    Raises:
        UnknownBackend, InvalidPlan, RefusedOverwrite, DimMismatch,
        HubUnavailable, ChecksumMismatch, OSError.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    spec = backends.get(backend_name)
    plan = load_plan(run_dir)
    side = int(plan["side"])
    if spec.input_side is not None and side != spec.input_side:
        raise DimMismatch(
            f"{spec.name} expects {spec.input_side}px inputs preprocessed by the "
            f"harness, but this run was warped at side {side}; re-plan with "
            f'"side": {spec.input_side} in the config'
        )
    groups = _group_jobs(plan)

    targets = {}
    for key in groups:
        rel = plan["embeddings"]["train"] if key == "train" else plan["embeddings"]["test"][key]
        targets[key] = os.path.join(run_dir, rel)
    existing = sorted(p for p in targets.values() if os.path.exists(p))
    if existing and not force:
        raise RefusedOverwrite(
            f"{len(existing)} embedding file(s) already exist under {run_dir!r} "
            f"(first: {os.path.relpath(existing[0], run_dir)}); pass --force to overwrite"
        )

    batch_fn = backends.load(spec)
    written = {}
    n_images = 0
    for key, jobs in groups.items():
        chunks = [
            batch_fn(_load_batch(run_dir, jobs[i : i + batch_size], side))
            for i in range(0, len(jobs), batch_size)
        ]
        matrix = np.concatenate(chunks, axis=0) if len(chunks) > 1 else chunks[0]
        labels = np.asarray([j["label"] for j in jobs], dtype=np.uint32)
        write_emb1(
            targets[key],
            matrix,
            labels,
            dataset=plan["dataset"],
            model_name=spec.display_name,
            model_type=spec.model_type,
            num_classes=int(plan["num_classes"]),
        )
        written[key] = targets[key]
        n_images += len(jobs)
    return written, n_images
