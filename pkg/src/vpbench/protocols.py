"""Seeded trial orchestration for the evaluation protocols.

Plans are pure data (JSON-serializable, byte-deterministic for a given
config), so warping and embedding can run anywhere; the runners consume
EmbeddingSet values regardless of which embedder produced them. Every
random choice flows from derive_seed(master_seed, label) with a
canonical label, making single jobs reproducible in isolation.
"""

import dataclasses
import enum
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .embedio import EmbeddingSet, ModelMeta, ModelType, pixel_embedder, write_embedding_set
from .errors import (
    ClassTooSmall,
    EmptyInput,
    InsufficientViews,
    InvalidManifest,
    IoError,
    MissingEmbedding,
    ShapeMismatch,
)
from .geometry import Homography, sample_homography
from .imageops import WarpMode, bounded_view, load_png, rcc, save_png, warp_image
from .knn import Metric, l2_normalize, nearest
from .probe import LbfgsOptions, accuracy, predict, train_probe
from .rng import Rng, derive_seed

__all__ = [
    "Protocol",
    "ProtocolConfig",
    "TrialResult",
    "WarpJob",
    "JobPlan",
    "Rng",
    "derive_seed",
    "plan_homography_jobs",
    "run_warp_jobs",
    "embed_plan",
    "run_linear_eval",
    "run_mvc",
    "run_support_sweep",
    "run_split_sweep",
    "config_to_dict",
    "config_from_dict",
    "plan_to_dict",
    "plan_from_dict",
    "write_trial_results_csv",
    "write_results_bundle",
    "test_embedding_key",
    "parse_test_embedding_key",
]

log = logging.getLogger(__name__)

MVC_DELTAS = tuple(30 * n for n in range(1, 12))


class Protocol(enum.Enum):
    HOMOGRAPHY_LINEAR_EVAL = "homography_linear_eval"
    MVC_AZIMUTH = "mvc_azimuth"
    SUPPORT_SWEEP = "support_sweep"
    SPLIT_SWEEP = "split_sweep"


@dataclasses.dataclass(frozen=True)
class ProtocolConfig:
    """Everything a protocol run depends on, in one serializable value."""

    protocol: Protocol
    trials: int = 1
    master_seed: int = 0
    alphas: tuple = (0.0, 0.2, 0.4, 0.6, 0.8)
    warp_mode: WarpMode = WarpMode.DEFAULT
    side: int = 224
    metric: Metric = Metric.COSINE
    normalize: bool = True
    lam: float = 1e-4
    lbfgs: LbfgsOptions = LbfgsOptions()
    support_counts: tuple = ()
    test_fractions: tuple = ()

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in u64")
        if self.side < 8:
            raise ValueError(f"side must be >= 8, got {self.side}")
        for a in self.alphas:
            if not 0.0 <= a <= 1.0:
                raise ValueError(f"alpha {a} outside [0, 1]")
        if self.protocol is Protocol.HOMOGRAPHY_LINEAR_EVAL and not self.alphas:
            raise ValueError("homography protocol needs at least one alpha")
        if self.protocol is Protocol.SUPPORT_SWEEP:
            if not self.support_counts or any(int(s) < 1 for s in self.support_counts):
                raise ValueError(f"bad support_counts {self.support_counts}")
        if self.protocol is Protocol.SPLIT_SWEEP:
            if not self.test_fractions or any(not 0.0 < p <= 0.95 for p in self.test_fractions):
                raise ValueError(f"test fractions must lie in (0, 0.95], got {self.test_fractions}")


@dataclasses.dataclass(frozen=True)
class TrialResult:
    """One protocol measurement: condition value, trial index, accuracy."""

    condition: float
    trial: int
    accuracy: float

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")


@dataclasses.dataclass(frozen=True)
class WarpJob:
    """One image transformation: load, resize+crop, warp, save."""

    image_id: str
    input_path: str
    output_path: str
    split: str
    label: int
    alpha: float = None
    trial: int = None
    homography: tuple = None


@dataclasses.dataclass(frozen=True)
class JobPlan:
    """All warp jobs of a run plus the embedding files eval expects."""

    dataset: str
    num_classes: int
    side: int
    warp_mode: WarpMode
    master_seed: int
    jobs: tuple
    train_embedding: str
    test_embeddings: dict

    def __post_init__(self):
        outs = [j.output_path for j in self.jobs]
        if len(set(outs)) != len(outs):
            raise ValueError("job output paths are not unique")


def test_embedding_key(alpha, trial):
    return f"alpha={float(alpha)!r}/trial={trial}"


def parse_test_embedding_key(key):
    """Inverse of test_embedding_key; raises InvalidManifest on junk."""
    try:
        a_part, t_part = key.split("/")
        if not (a_part.startswith("alpha=") and t_part.startswith("trial=")):
            raise ValueError(key)
        return float(a_part[len("alpha="):]), int(t_part[len("trial="):])
    except ValueError as e:
        raise InvalidManifest(f"bad test-embedding key {key!r}") from e


def config_to_dict(config):
    return {
        "protocol": config.protocol.value,
        "trials": config.trials,
        "master_seed": config.master_seed,
        "alphas": [float(a) for a in config.alphas],
        "warp_mode": config.warp_mode.value,
        "side": config.side,
        "metric": config.metric.value,
        "normalize": config.normalize,
        "lambda": config.lam,
        "lbfgs": {
            "memory": config.lbfgs.memory,
            "max_iters": config.lbfgs.max_iters,
            "grad_tol": config.lbfgs.grad_tol,
        },
        "support_counts": [int(s) for s in config.support_counts],
        "test_fractions": [float(p) for p in config.test_fractions],
    }


def config_from_dict(doc):
    try:
        lb = doc.get("lbfgs", {})
        return ProtocolConfig(
            protocol=Protocol(doc["protocol"]),
            trials=doc.get("trials", 1),
            master_seed=doc.get("master_seed", 0),
            alphas=tuple(doc.get("alphas", (0.0, 0.2, 0.4, 0.6, 0.8))),
            warp_mode=WarpMode(doc.get("warp_mode", "default")),
            side=doc.get("side", 224),
            metric=Metric(doc.get("metric", "cosine")),
            normalize=doc.get("normalize", True),
            lam=doc.get("lambda", 1e-4),
            lbfgs=LbfgsOptions(
                memory=lb.get("memory", 10),
                max_iters=lb.get("max_iters", 500),
                grad_tol=lb.get("grad_tol", 1e-6),
            ),
            support_counts=tuple(doc.get("support_counts", ())),
            test_fractions=tuple(doc.get("test_fractions", ())),
        )
    except (KeyError, ValueError, TypeError) as e:
        raise InvalidManifest(f"bad protocol config: {e}") from e


def _job_to_dict(job):
    return {
        "image_id": job.image_id,
        "input_path": job.input_path,
        "output_path": job.output_path,
        "split": job.split,
        "label": job.label,
        "alpha": job.alpha,
        "trial": job.trial,
        "homography": list(job.homography) if job.homography is not None else None,
    }


def plan_to_dict(plan):
    return {
        "dataset": plan.dataset,
        "num_classes": plan.num_classes,
        "side": plan.side,
        "warp_mode": plan.warp_mode.value,
        "master_seed": plan.master_seed,
        "jobs": [_job_to_dict(j) for j in plan.jobs],
        "embeddings": {"train": plan.train_embedding, "test": dict(plan.test_embeddings)},
    }


def plan_from_dict(doc):
    try:
        jobs = tuple(
            WarpJob(
                image_id=j["image_id"],
                input_path=j["input_path"],
                output_path=j["output_path"],
                split=j["split"],
                label=j["label"],
                alpha=j["alpha"],
                trial=j["trial"],
                homography=tuple(j["homography"]) if j["homography"] is not None else None,
            )
            for j in doc["jobs"]
        )
        return JobPlan(
            dataset=doc["dataset"],
            num_classes=doc["num_classes"],
            side=doc["side"],
            warp_mode=WarpMode(doc["warp_mode"]),
            master_seed=doc["master_seed"],
            jobs=jobs,
            train_embedding=doc["embeddings"]["train"],
            test_embeddings=dict(doc["embeddings"]["test"]),
        )
    except (KeyError, ValueError, TypeError) as e:
        raise InvalidManifest(f"bad job plan: {e}") from e


def _dump_canonical(doc, path):
    blob = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(blob)
    except OSError as e:
        raise IoError(f"{path}: {e}") from e


def plan_homography_jobs(manifest, config):
    """Build the warp-job plan for the homography linear-eval protocol.

    Test images get one job per (alpha, trial) with a homography sampled
    from derive_seed(master, "trial=T/alpha=A/image=ID") over the
    side x side post-crop canvas. Train images pass through clean (one
    identity job each); the probe always trains on unwarped data.

    Raises:
        InvalidManifest: duplicate ids, missing train/test splits, or
            labels outside the class range.
    """
    if config.protocol is not Protocol.HOMOGRAPHY_LINEAR_EVAL:
        raise ValueError(f"plan_homography_jobs needs the homography protocol, got {config.protocol}")
    ids = [rec.id for rec in manifest.images]
    if len(set(ids)) != len(ids):
        raise InvalidManifest("manifest has duplicate image ids")
    for rec in manifest.images:
        if not 0 <= rec.label < len(manifest.class_names):
            raise InvalidManifest(f"image {rec.id}: label {rec.label} out of range")
    for split in ("train", "test"):
        if split not in manifest.splits:
            raise InvalidManifest(f"manifest lacks a {split!r} split")
    by_id = {rec.id: rec for rec in manifest.images}
    for split, id_list in manifest.splits.items():
        for i in id_list:
            if i not in by_id:
                raise InvalidManifest(f"split {split!r} references unknown id {i!r}")

    ds = manifest.dataset
    jobs = []
    for image_id in manifest.splits["train"]:
        rec = by_id[image_id]
        jobs.append(
            WarpJob(
                image_id=rec.id,
                input_path=rec.path,
                output_path=f"warped/{ds}/clean/{rec.id}.png",
                split="train",
                label=rec.label,
            )
        )
    test_embeddings = {}
    for alpha in config.alphas:
        a = float(alpha)
        for trial in range(config.trials):
            for image_id in manifest.splits["test"]:
                rec = by_id[image_id]
                seed = derive_seed(config.master_seed, f"trial={trial}/alpha={a!r}/image={rec.id}")
                h = sample_homography(config.side, config.side, a, Rng(seed))
                jobs.append(
                    WarpJob(
                        image_id=rec.id,
                        input_path=rec.path,
                        output_path=f"warped/{ds}/{a!r}/{trial}/{rec.id}.png",
                        split="test",
                        label=rec.label,
                        alpha=a,
                        trial=trial,
                        homography=tuple(float(v) for v in h.m.ravel()),
                    )
                )
            key = test_embedding_key(a, trial)
            test_embeddings[key] = f"embeddings/test_alpha={a!r}_trial={trial}.emb1"
    return JobPlan(
        dataset=ds,
        num_classes=len(manifest.class_names),
        side=config.side,
        warp_mode=config.warp_mode,
        master_seed=config.master_seed,
        jobs=tuple(jobs),
        train_embedding="embeddings/train.emb1",
        test_embeddings=test_embeddings,
    )


def _run_one_job(job, plan, manifest_root, run_dir):
    img = load_png(os.path.join(manifest_root, job.input_path))
    img = rcc(img, plan.side)
    if job.split == "test":
        h = Homography(np.array(job.homography, dtype=np.float64).reshape(3, 3), alpha=job.alpha)
        if plan.warp_mode is WarpMode.BOUNDED:
            img = bounded_view(img, h, plan.side)
        else:
            img = warp_image(img, h)
    out = os.path.join(run_dir, job.output_path)
    os.makedirs(os.path.dirname(out), exist_ok=True)
    save_png(img, out)


def run_warp_jobs(plan, manifest_root, run_dir, threads=1):
    """Execute every warp job, writing the PNG tree under run_dir.

    Jobs are independent (distinct output files), so the thread count
    never changes any output byte.
    """
    if threads <= 1:
        for job in plan.jobs:
            _run_one_job(job, plan, manifest_root, run_dir)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_run_one_job, job, plan, manifest_root, run_dir) for job in plan.jobs
            ]
            for f in futures:
                f.result()
    return len(plan.jobs)


def embed_plan(plan, run_dir, embed_fn=None, model_name="pixel", model_type=ModelType.SSL_PT):
    """Embed the plan's warped images into the expected EMB1 files.

    Rows follow job order within each group (train, then each (alpha,
    trial) set), so files are byte-deterministic. embed_fn maps a uint8
    image to a 1-D vector; the built-in pixel embedder is the default.

    Returns:
        Dict of the written file paths keyed like the plan expects.
    """
    embed_fn = embed_fn or pixel_embedder
    groups = {"train": []}
    for key in plan.test_embeddings:
        groups[key] = []
    for job in plan.jobs:
        key = "train" if job.split == "train" else test_embedding_key(job.alpha, job.trial)
        groups[key].append(job)

    written = {}
    for key, jobs in groups.items():
        if not jobs:
            raise MissingEmbedding(f"plan has no jobs for embedding group {key!r}")
        vecs = []
        labels = []
        for job in jobs:
            img = load_png(os.path.join(run_dir, job.output_path))
            vecs.append(np.asarray(embed_fn(img), dtype=np.float32))
            labels.append(job.label)
        matrix = np.stack(vecs)
        meta = ModelMeta(
            model_name=model_name,
            model_type=model_type,
            dataset=plan.dataset,
            num_classes=plan.num_classes,
            dim=matrix.shape[1],
        )
        rel = plan.train_embedding if key == "train" else plan.test_embeddings[key]
        out = os.path.join(run_dir, rel)
        os.makedirs(os.path.dirname(out), exist_ok=True)
        write_embedding_set(EmbeddingSet(matrix, labels, meta), out)
        written[key] = out
    return written


def run_linear_eval(train_emb, test_embs, config):
    """Linear evaluation: clean-trained probe, warped-test accuracy.

    Args:
        train_emb: EmbeddingSet of clean training data.
        test_embs: dict mapping (alpha, trial) to the warped test
            EmbeddingSet for that condition.
        config: homography-protocol config (trials, alphas, lambda, ...).

    Returns:
        TrialResults sorted by (alpha, trial), one per condition pair.

    Raises:
        MissingEmbedding: a planned (alpha, trial) set is absent.
    """
    for alpha in config.alphas:
        for trial in range(config.trials):
            if (float(alpha), trial) not in test_embs:
                raise MissingEmbedding(test_embedding_key(alpha, trial))
    results = []
    x_tr = train_emb.matrix.astype(np.float64)
    y_tr = train_emb.labels.astype(np.int64)
    for trial in range(config.trials):
        seed = derive_seed(config.master_seed, f"probe/trial={trial}")
        model = train_probe(x_tr, y_tr, config.lam, config.lbfgs, seed=seed)
        for alpha in config.alphas:
            test = test_embs[(float(alpha), trial)]
            if test.dim != train_emb.dim:
                raise ShapeMismatch(f"test dim {test.dim} != train dim {train_emb.dim}")
            if test.meta.num_classes != train_emb.meta.num_classes:
                raise ShapeMismatch("train/test label spaces differ")
            acc = accuracy(predict(model, test.matrix.astype(np.float64)), test.labels.astype(np.int64))
            results.append(TrialResult(float(alpha), trial, acc))
    results.sort(key=lambda r: (r.condition, r.trial))
    return results


def _knn_label_accuracy(train_x, train_y, test_x, test_y, config):
    if config.normalize:
        train_x = l2_normalize(train_x)
        test_x = l2_normalize(test_x)
    idx = nearest(test_x, train_x, 1, config.metric)[:, 0]
    return float(np.mean(train_y[idx] == test_y))


def _circular_diff(a, b):
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def run_mvc(es, config):
    """Azimuth-pair multi-view recognition over object embeddings.

    For each angular offset delta in {30..330} and each trial, every
    object contributes one train view at a randomly chosen available
    azimuth a and one test view at the azimuth nearest (a+delta) mod 360
    (within 5 degrees; objects with no such view are skipped and
    logged). Train and test sets therefore both have one row per object,
    labeled by object, and accuracy is 1-NN object identification.

    Raises:
        InsufficientViews: more than 10% of objects skipped for some
            (delta, trial).
    """
    if "azimuth_deg" not in es.per_sample or "object_id" not in es.per_sample:
        raise ValueError("MVC needs azimuth_deg and object_id per-sample fields")
    azimuth = es.per_sample["azimuth_deg"].astype(np.float64)
    objects = es.per_sample["object_id"]
    object_ids = sorted(set(int(o) for o in objects))
    views = {}
    for obj in object_ids:
        rows = np.flatnonzero(objects == obj)
        order = np.lexsort((rows, azimuth[rows]))
        views[obj] = rows[order]

    x = es.matrix.astype(np.float64)
    results = []
    for delta in MVC_DELTAS:
        for trial in range(config.trials):
            rng = Rng(derive_seed(config.master_seed, f"mvc/delta={delta}/trial={trial}"))
            train_rows = []
            test_rows = []
            skipped = 0
            for obj in object_ids:
                rows = views[obj]
                pick = rng.below(len(rows))
                a = azimuth[rows[pick]]
                target = (a + delta) % 360.0
                diffs = [_circular_diff(azimuth[r], target) for r in rows]
                j = int(np.argmin(diffs))
                if diffs[j] > 5.0:
                    skipped += 1
                    continue
                train_rows.append(rows[pick])
                test_rows.append(rows[j])
            if skipped > 0.1 * len(object_ids):
                raise InsufficientViews(
                    f"delta={delta} trial={trial}: {skipped}/{len(object_ids)} objects lack a view"
                )
            if skipped:
                log.warning("mvc delta=%d trial=%d: skipped %d objects", delta, trial, skipped)
            labels = np.arange(len(train_rows))
            acc = _knn_label_accuracy(x[train_rows], labels, x[test_rows], labels, config)
            results.append(TrialResult(float(delta), trial, acc))
    results.sort(key=lambda r: (r.condition, r.trial))
    return results


def _class_indices(labels):
    classes = sorted(set(int(v) for v in labels))
    return [(c, np.flatnonzero(labels == c)) for c in classes]


def run_support_sweep(es, config):
    """1-NN accuracy as the per-class support-sample count varies.

    For each support count s and trial, s train rows per class are drawn
    without replacement (trial-seeded) and every remaining row is a
    query.

    Raises:
        ClassTooSmall: some class has <= max(support_counts) samples.
    """
    per_class = _class_indices(es.labels)
    smax = max(int(s) for s in config.support_counts)
    for c, idx in per_class:
        if len(idx) <= smax:
            raise ClassTooSmall(f"class {c} has {len(idx)} samples, need > {smax}")
    x = es.matrix.astype(np.float64)
    y = es.labels.astype(np.int64)
    results = []
    for s in config.support_counts:
        s = int(s)
        for trial in range(config.trials):
            rng = Rng(derive_seed(config.master_seed, f"support/s={s}/trial={trial}"))
            train_rows = []
            test_rows = []
            for c, idx in per_class:
                chosen = sorted(rng.sample(list(range(len(idx))), s))
                chosen_set = set(chosen)
                train_rows.extend(idx[i] for i in chosen)
                test_rows.extend(idx[i] for i in range(len(idx)) if i not in chosen_set)
            acc = _knn_label_accuracy(x[train_rows], y[train_rows], x[test_rows], y[test_rows], config)
            results.append(TrialResult(float(s), trial, acc))
    results.sort(key=lambda r: (r.condition, r.trial))
    return results


def run_split_sweep(es, config):
    """1-NN accuracy as the stratified test fraction grows.

    Per class, round(p * n) rows become queries, capped so at least one
    train row always remains.

    Raises:
        ClassTooSmall: a class has fewer than 2 samples.
        EmptyInput: a fraction yields zero test rows overall.
    """
    per_class = _class_indices(es.labels)
    for c, idx in per_class:
        if len(idx) < 2:
            raise ClassTooSmall(f"class {c} has {len(idx)} samples, need >= 2")
    x = es.matrix.astype(np.float64)
    y = es.labels.astype(np.int64)
    results = []
    for p in config.test_fractions:
        p = float(p)
        for trial in range(config.trials):
            rng = Rng(derive_seed(config.master_seed, f"split/p={p!r}/trial={trial}"))
            train_rows = []
            test_rows = []
            for c, idx in per_class:
                n = len(idx)
                n_test = min(int(np.floor(p * n + 0.5)), n - 1)
                chosen = sorted(rng.sample(list(range(n)), n_test))
                chosen_set = set(chosen)
                test_rows.extend(idx[i] for i in chosen)
                train_rows.extend(idx[i] for i in range(n) if i not in chosen_set)
            if not test_rows:
                raise EmptyInput(f"test fraction {p} selects no rows")
            acc = _knn_label_accuracy(x[train_rows], y[train_rows], x[test_rows], y[test_rows], config)
            results.append(TrialResult(p, trial, acc))
    results.sort(key=lambda r: (r.condition, r.trial))
    return results


def write_trial_results_csv(results, path, protocol, dataset, model, model_type):
    """Write per-trial results as CSV (deterministic bytes)."""
    import csv

    rows = sorted(results, key=lambda r: (r.condition, r.trial))
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["protocol", "dataset", "model", "model_type", "condition", "trial", "accuracy"])
            for r in rows:
                w.writerow(
                    [protocol.value, dataset, model, model_type.value, repr(r.condition), r.trial, repr(r.accuracy)]
                )
    except OSError as e:
        raise IoError(f"{path}: {e}") from e


def write_results_bundle(results, config, path, dataset, model, model_type):
    """Write results plus the full config as a canonical JSON bundle."""
    rows = sorted(results, key=lambda r: (r.condition, r.trial))
    doc = {
        "config": config_to_dict(config),
        "dataset": dataset,
        "model": model,
        "model_type": model_type.value,
        "results": [
            {"condition": r.condition, "trial": r.trial, "accuracy": r.accuracy} for r in rows
        ],
    }
    _dump_canonical(doc, path)
