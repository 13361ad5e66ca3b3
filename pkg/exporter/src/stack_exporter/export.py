"""Export the 16 convolutional activation maps of a VGG19 classifier.

The image is resized so its long side hits the target (aspect preserved),
normalized with the classifier's channel statistics, and pushed through the
convolutional stage only. Each post-ReLU conv activation is written as a
[channels, h, w] HFLT tensor; the manifest records layer order and the
resized input dims. Channel counts across the 16 layers total 5504.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torchvision import models

from . import hflt

LAYER_NAMES = [
    "conv1_1", "conv1_2",
    "conv2_1", "conv2_2",
    "conv3_1", "conv3_2", "conv3_3", "conv3_4",
    "conv4_1", "conv4_2", "conv4_3", "conv4_4",
    "conv5_1", "conv5_2", "conv5_3", "conv5_4",
]
EXPECTED_TOTAL_CHANNELS = 5504

_MEAN = (0.485, 0.456, 0.406)
_STD = (0.229, 0.224, 0.225)


class MissingWeightsError(FileNotFoundError):
    pass


@dataclass
class ExportSpec:
    target: int = 1100
    weights: str | None = None   # path to a state dict
    untrained: bool = False      # seeded random init, for pipeline checks
    out_dir: str = "stack"


def _build_model(spec: ExportSpec) -> torch.nn.Module:
    torch.manual_seed(0)
    model = models.vgg19(weights=None)
    if spec.weights is not None:
        path = Path(spec.weights)
        if not path.exists():
            raise MissingWeightsError(f"weights file not found: {path}")
        state = torch.load(path, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    elif not spec.untrained:
        raise MissingWeightsError(
            "no weights given: pass --weights <state_dict.pth>, or "
            "--untrained for a seeded random network (shape/pipeline "
            "validation only)")
    model.eval()
    return model.features


def _load_image(path, target: int) -> tuple[torch.Tensor, tuple[int, int]]:
    img = Image.open(path).convert("RGB")
    w, h = img.size
    scale = target / max(w, h)
    new_w = max(1, round(w * scale))
    new_h = max(1, round(h * scale))
    img = img.resize((new_w, new_h), Image.BILINEAR)
    arr = np.asarray(img, dtype=np.float32) / 255.0
    arr = (arr - np.asarray(_MEAN, dtype=np.float32)) / np.asarray(
        _STD, dtype=np.float32)
    tensor = torch.from_numpy(arr.transpose(2, 0, 1))[None]
    return tensor, (new_h, new_w)


def export(image_path, spec: ExportSpec) -> Path:
    """Run the image through the conv stage and write the stack directory.

    Returns the manifest path.
    """
    feats = _build_model(spec)
    x, input_dims = _load_image(image_path, spec.target)
    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    idx = 0
    with torch.no_grad():
        for module in feats:
            x = module(x)
            if isinstance(module, torch.nn.ReLU):
                name = LAYER_NAMES[idx]
                act = x[0].numpy()
                hflt.write_tensor(act, out_dir / f"{name}.hflt")
                records.append((name, act.shape[0], act.shape[1],
                                act.shape[2]))
                idx += 1
    if idx != len(LAYER_NAMES):
        raise RuntimeError(
            f"expected {len(LAYER_NAMES)} conv activations, saw {idx}")
    total = sum(r[1] for r in records)
    if total != EXPECTED_TOTAL_CHANNELS:
        raise RuntimeError(
            f"channel total {total} != {EXPECTED_TOTAL_CHANNELS}")
    manifest = out_dir / "manifest.txt"
    hflt.write_stack_manifest(manifest, input_dims, records)
    return manifest
