"""Embedding backends: offline feature functions and hub model specs.

A backend is a named recipe producing a batch function that maps a
uint8 (N, H, W, 3) image stack to float32 (N, dim) features. Two
builtin backends (pixelstat, convrand) need no downloaded weights and
let extraction run end to end offline. The fifteen hub specs cover the
pretrained models the benchmark tables report; they resolve through
torch hub, torchvision, or a trunk-weights URL when the weights are
reachable, and raise HubUnavailable otherwise.

Representation layer defaults, since checkpoints only fix the trunk:
ResNet family features are the global-average-pooled penultimate
activations (the classifier head is replaced with identity), ViT
features are the class token after the encoder, EfficientNet and RegNet
drop their classifier the same way as ResNets.
"""

import dataclasses
import urllib.error

import numpy as np

from .errors import ChecksumMismatch, DimMismatch, HubUnavailable, UnknownBackend

__all__ = ["BackendSpec", "SPECS", "get", "load", "names"]

# ImageNet channel statistics used by every hub model's preprocessing.
_IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


@dataclasses.dataclass(frozen=True)
class BackendSpec:
    """One embedding producer and how to load it.

    Attributes:
        name: CLI slug.
        display_name: model name recorded in EMB1 metadata; for hub
            models this matches the benchmark's result tables.
        model_type: "SSL (ID)", "SSL (PT)" or "Supervised".
        dim: feature width the forward pass must produce.
        source: "builtin", "torchhub", "torchvision" or "url".
        ref: loader arguments, meaning depends on source.
        input_side: required square input side, None accepts any size.
        layer: which activations count as the representation.
    """

    name: str
    display_name: str
    model_type: str
    dim: int
    source: str
    ref: tuple = ()
    input_side: int = None
    layer: str = "global-pooled penultimate"


_VISSL_ZOO = "https://dl.fbaipublicfiles.com/vissl"

SPECS = {
    s.name: s
    for s in [
        # Offline backends, weight-free and deterministic.
        BackendSpec("pixelstat", "pixelstat", "SSL (PT)", 192, "builtin",
                    layer="8x8 block means, centered, unit norm"),
        BackendSpec("convrand", "convrand", "SSL (PT)", 64, "builtin",
                    layer="pooled random conv stack"),
        # Instance-discrimination SSL.
        BackendSpec("swav_rn50", "SWaV (RN50)", "SSL (ID)", 2048, "torchhub",
                    ("facebookresearch/swav:main", "resnet50"), 224),
        BackendSpec("swav_rn50w2", "SWaV (RN50w2)", "SSL (ID)", 4096, "torchhub",
                    ("facebookresearch/swav:main", "resnet50w2"), 224),
        BackendSpec("simclr_rn50", "SimCLR (RN50)", "SSL (ID)", 2048, "url",
                    ("resnet50", f"{_VISSL_ZOO}/model_zoo/simclr_rn50_800ep_simclr_8node_resnet_16_07_20.7e8feed1/model_final_checkpoint_phase799.torch"), 224),
        BackendSpec("simclr_rn50w2", "SimCLR (RN50w2)", "SSL (ID)", 4096, "url",
                    ("resnet50w2", f"{_VISSL_ZOO}/model_zoo/simclr_rn50w2_1000ep_simclr_8node_resnet_16_07_20.e1e3bbf0/model_final_checkpoint_phase999.torch"), 224),
        BackendSpec("dino_vits16", "DINO (ViT)", "SSL (ID)", 384, "torchhub",
                    ("facebookresearch/dino:main", "dino_vits16"), 224,
                    layer="class token"),
        BackendSpec("dino_rn50", "DINO (RN50)", "SSL (ID)", 2048, "torchhub",
                    ("facebookresearch/dino:main", "dino_resnet50"), 224),
        BackendSpec("mocov2_rn50", "MoCov2 (RN50)", "SSL (ID)", 2048, "url",
                    ("resnet50", f"{_VISSL_ZOO}/model_zoo/moco_v2_1node_lr.03_step_b32_zero_init/model_final_checkpoint_phase199.torch"), 224),
        BackendSpec("barlowtwins_rn50", "Barlow Twins (RN50)", "SSL (ID)", 2048, "torchhub",
                    ("facebookresearch/barlowtwins:main", "resnet50"), 224),
        # Pretext-task SSL.
        BackendSpec("rotnet_rn50", "RotNet (RN50)", "SSL (PT)", 2048, "url",
                    ("resnet50", f"{_VISSL_ZOO}/model_zoo/rotnet_rn50_in1k_ep105_rotnet_8gpu_resnet_17_07_20.46bada9f/model_final_checkpoint_phase125.torch"), 224),
        BackendSpec("jigsaw_rn50", "Jigsaw (RN50)", "SSL (PT)", 2048, "url",
                    ("resnet50", f"{_VISSL_ZOO}/model_zoo/jigsaw_rn50_in1k_ep105_perm2k_jigsaw_8gpu_resnet_17_07_20.db174a43/model_final_checkpoint_phase104.torch"), 224),
        BackendSpec("colorization_rn50", "Colorization (RN50)", "SSL (PT)", 2048, "url",
                    ("resnet50", f"{_VISSL_ZOO}/model_zoo/converted_vissl_rn50_colorization_in22k_ep105.torch"), 224),
        # Supervised baselines, torchvision reference weights.
        BackendSpec("supervised_rn50", "Supervised (RN50)", "Supervised", 2048,
                    "torchvision", ("resnet50", "IMAGENET1K_V1"), 224),
        BackendSpec("supervised_vit", "Supervised (ViT)", "Supervised", 768,
                    "torchvision", ("vit_b_16", "IMAGENET1K_V1"), 224,
                    layer="class token"),
        BackendSpec("supervised_effnet", "Supervised EffNet", "Supervised", 1280,
                    "torchvision", ("efficientnet_b0", "IMAGENET1K_V1"), 224),
        BackendSpec("supervised_regnet", "Supervised RegNet", "Supervised", 3024,
                    "torchvision", ("regnet_y_16gf", "IMAGENET1K_V1"), 224),
    ]
}


def names():
    return sorted(SPECS)


def get(name):
    """Look up a BackendSpec by slug.

    Raises:
        UnknownBackend: with the available names in the message.
    """
    try:
        return SPECS[name]
    except KeyError:
        raise UnknownBackend(
            f"unknown backend {name!r}; available: {', '.join(names())}"
        ) from None


def _pixelstat(batch):
    """8x8 per-channel block means, mean-centered and L2-normalized."""
    x = batch.astype(np.float64) / 255.0
    n, h, w, c = x.shape
    if h < 8 or w < 8:
        raise DimMismatch(f"pixelstat needs images of side >= 8, got {h}x{w}")
    bh = h // 8
    bw = w // 8
    x = x[:, : bh * 8, : bw * 8, :]
    blocks = x.reshape(n, 8, bh, 8, bw, c).mean(axis=(2, 4))
    feats = blocks.reshape(n, -1)
    feats = feats - feats.mean(axis=1, keepdims=True)
    # Mean-centering a constant image leaves ~1e-17 rounding residue;
    # snap those rows to exact zero instead of normalizing noise.
    norms = np.linalg.norm(feats, axis=1, keepdims=True)
    out = np.where(norms > 1e-12, feats / np.where(norms > 0.0, norms, 1.0), 0.0)
    return out.astype(np.float32)


def _convrand(batch):
    """Random-weight conv features; seeded rebuild keeps runs identical."""
    try:
        import torch
    except ImportError as e:
        raise HubUnavailable(f"convrand needs torch: {e}") from e
    torch.manual_seed(0)
    net = torch.nn.Sequential(
        torch.nn.Conv2d(3, 16, 5, stride=2),
        torch.nn.ReLU(),
        torch.nn.Conv2d(16, 64, 3, stride=2),
        torch.nn.ReLU(),
        torch.nn.AdaptiveAvgPool2d(1),
        torch.nn.Flatten(),
    ).eval()
    with torch.no_grad():
        t = torch.from_numpy(batch).permute(0, 3, 1, 2).float().div_(255.0)
        return np.ascontiguousarray(net(t).numpy(), dtype=np.float32)


_BUILTINS = {"pixelstat": _pixelstat, "convrand": _convrand}


def _normalize_trunk_keys(state):
    """Unwrap common checkpoint nestings and prefixes to torchvision names."""
    for outer in ("classy_state_dict", "state_dict", "model"):
        if isinstance(state.get(outer), dict):
            state = state[outer]
    if isinstance(state.get("base_model"), dict):
        inner = state["base_model"]
        if isinstance(inner.get("model"), dict) and isinstance(
            inner["model"].get("trunk"), dict
        ):
            state = inner["model"]["trunk"]
    out = {}
    for key, value in state.items():
        for prefix in ("module.", "_feature_blocks.", "encoder.", "backbone."):
            if key.startswith(prefix):
                key = key[len(prefix):]
        out[key] = value
    return out


def _strip_head(model):
    import torch

    for attr in ("fc", "classifier", "heads", "head"):
        if hasattr(model, attr) and isinstance(getattr(model, attr), torch.nn.Module):
            setattr(model, attr, torch.nn.Identity())
    return model.eval()


def _load_torch_model(spec):
    try:
        import torch
    except ImportError as e:
        raise HubUnavailable(f"{spec.name} needs torch: {e}") from e
    try:
        if spec.source == "torchhub":
            repo, entry = spec.ref
            model = torch.hub.load(repo, entry, verbose=False)
        elif spec.source == "torchvision":
            import torchvision.models

            arch, weights = spec.ref
            model = getattr(torchvision.models, arch)(weights=weights)
        elif spec.source == "url":
            arch, url = spec.ref
            if arch != "resnet50":
                raise HubUnavailable(
                    f"{spec.name}: trunk {arch!r} is not buildable here (VISSL-only)"
                )
            import torchvision.models

            model = torchvision.models.resnet50(weights=None)
            state = torch.hub.load_state_dict_from_url(url, map_location="cpu")
            trunk = _normalize_trunk_keys(state)
            incompat = model.load_state_dict(trunk, strict=False)
            if "conv1.weight" in incompat.missing_keys:
                raise HubUnavailable(
                    f"{spec.name}: checkpoint keys do not match a resnet50 trunk; "
                    "convert the checkpoint before registering its URL"
                )
        else:
            raise UnknownBackend(f"bad source {spec.source!r}")
    except (urllib.error.URLError, OSError, RuntimeError, ValueError) as e:
        msg = str(e).lower()
        if "hash" in msg or "checksum" in msg or "digest" in msg:
            raise ChecksumMismatch(f"{spec.name}: {e}") from e
        raise HubUnavailable(f"{spec.name}: {e}") from e
    return _strip_head(model)


def _torch_batch_fn(model):
    import torch

    def fn(batch):
        x = (batch.astype(np.float32) / 255.0 - _IMAGENET_MEAN) / _IMAGENET_STD
        with torch.no_grad():
            feats = model(torch.from_numpy(x).permute(0, 3, 1, 2).contiguous())
        return np.ascontiguousarray(feats.numpy(), dtype=np.float32)

    return fn


def load(spec):
    """Resolve a spec into a dim-checked batch function.

    Returns:
        Callable mapping uint8 (N, H, W, 3) to float32 (N, spec.dim).

    Raises:
        HubUnavailable / ChecksumMismatch: weights cannot be obtained.
        DimMismatch: the model produced a different feature width.
    """
    if spec.source == "builtin":
        raw = _BUILTINS[spec.name]
    else:
        raw = _torch_batch_fn(_load_torch_model(spec))

    def checked(batch):
        out = np.asarray(raw(batch), dtype=np.float32)
        if out.ndim != 2 or out.shape[0] != batch.shape[0]:
            raise DimMismatch(
                f"{spec.name}: expected ({batch.shape[0]}, {spec.dim}), got {out.shape}"
            )
        if out.shape[1] != spec.dim:
            raise DimMismatch(
                f"{spec.name}: declared dim {spec.dim}, model produced {out.shape[1]}"
            )
        return out

    return checked
