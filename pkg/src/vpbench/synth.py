"""Bundled synthetic dataset: three stripe-orientation classes.

Each image is a sinusoidal grating (horizontal, vertical, or diagonal)
with jittered phase, amplitude, and pixel noise. Phase jitter is kept
inside one third of a period: full-circle phase would place each class
on an origin-centered circle in pixel space, which no linear probe can
separate. On clean images the classes are linearly separable, and
projective warps destroy the orientation cue progressively, which is
exactly the behaviors the end-to-end checks pin down.
"""

import math
import os

import numpy as np

from .embedio import DatasetManifest, ImageRecord, save_manifest
from .imageops import save_png
from .rng import Rng, derive_seed

__all__ = ["CLASS_NAMES", "stripe_image", "generate_dataset"]

CLASS_NAMES = ("horizontal", "vertical", "diagonal")

# Stripe direction per class: pattern varies along (dy, dx).
_DIRECTIONS = {
    "horizontal": (1.0, 0.0),
    "vertical": (0.0, 1.0),
    "diagonal": (math.sqrt(0.5), math.sqrt(0.5)),
}

_CYCLES = 4.0
_NOISE = 6.0


def stripe_image(class_name, size, rng):
    """One uint8 RGB grating image for the given class.

    Args:
        class_name: one of CLASS_NAMES.
        size: square side in pixels.
        rng: Rng consumed for phase, amplitude, and pixel noise.

    Returns:
        uint8 array of shape (size, size, 3), all channels equal.
    """
    dy, dx = _DIRECTIONS[class_name]
    phase = rng.uniform(0.0, 2.0 * math.pi / 3.0)
    amplitude = rng.uniform(90.0, 110.0)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    t = 2.0 * math.pi * _CYCLES * (yy * dy + xx * dx) / size
    pattern = 127.5 + amplitude * np.sin(t + phase)
    noise = np.empty((size, size), dtype=np.float64)
    for i in range(size):
        for j in range(size):
            noise[i, j] = rng.uniform(-_NOISE, _NOISE)
    gray = np.clip(pattern + noise, 0.0, 255.0)
    gray = np.floor(gray + 0.5).astype(np.uint8)
    return np.repeat(gray[:, :, None], 3, axis=2)


def generate_dataset(root, per_class=20, size=64, seed=7, train_fraction=0.5):
    """Write the stripe dataset (PNG tree plus manifest) under root.

    Per class the first round(train_fraction * per_class) images go to
    the train split and the rest to test. Every byte is a function of
    (per_class, size, seed, train_fraction): image i of class c is drawn
    from derive_seed(seed, "synth/<c>/<i>").

    Returns:
        The manifest, also saved as root/manifest.json.
    """
    if per_class < 2:
        raise ValueError(f"per_class must be >= 2, got {per_class}")
    img_dir = os.path.join(root, "images")
    os.makedirs(img_dir, exist_ok=True)
    n_train = int(np.floor(train_fraction * per_class + 0.5))
    n_train = min(max(n_train, 1), per_class - 1)
    records = []
    splits = {"train": [], "test": []}
    for label, name in enumerate(CLASS_NAMES):
        for i in range(per_class):
            image_id = f"{name}_{i:02d}"
            rng = Rng(derive_seed(seed, f"synth/{name}/{i}"))
            img = stripe_image(name, size, rng)
            save_png(img, os.path.join(img_dir, image_id + ".png"))
            records.append(ImageRecord(id=image_id, path=f"images/{image_id}.png", label=label))
            splits["train" if i < n_train else "test"].append(image_id)
    manifest = DatasetManifest(
        dataset="stripes", class_names=CLASS_NAMES, images=tuple(records), splits=splits
    )
    save_manifest(manifest, os.path.join(root, "manifest.json"))
    return manifest
