"""Bottleneck features: VGG-16 convolutional stack plus global pooling.

The canonical VGG-16 feature stack maps a 64x64 patch to 512 channels at
2x2; global average pooling yields a 512-dim descriptor.  Weights come
from a checkpoint when one is available (JQF_EMBEDDER_WEIGHTS or the
weights argument); otherwise a fixed-seed random initialization is used,
which keeps every downstream artifact deterministic and is sufficient for
frozen-backbone descriptors at small scale.
"""

import os
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torchvision.models import vgg16

PATCH_SIZE = 64
FEATURE_DIM = 512
_INIT_SEED = 90210

# channel statistics the backbone's training recipe assumes
_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


def _weights_path(explicit=None):
    if explicit:
        return Path(explicit)
    env = os.environ.get("JQF_EMBEDDER_WEIGHTS", "")
    return Path(env) if env else None


def build_backbone(weights=None):
    """Frozen VGG-16 feature stack in eval mode.

    Returns (module, weights_source) where weights_source is "checkpoint"
    or "seeded-random".
    """
    torch.manual_seed(_INIT_SEED)
    model = vgg16(weights=None)
    backbone = model.features
    source = "seeded-random"
    path = _weights_path(weights)
    if path is not None:
        if not path.is_file():
            raise FileNotFoundError("backbone weights not found: %s" % path)
        state = torch.load(path, map_location="cpu", weights_only=True)
        if any(k.startswith("features.") for k in state):
            state = {
                k[len("features."):]: v
                for k, v in state.items()
                if k.startswith("features.")
            }
        backbone.load_state_dict(state)
        source = "checkpoint"
    backbone.eval()
    for p in backbone.parameters():
        p.requires_grad_(False)
    return backbone, source


def _as_batches(patches, batch_size):
    arr = np.asarray(patches)
    if arr.ndim != 3 or arr.shape[1:] != (PATCH_SIZE, PATCH_SIZE):
        raise ValueError("expected (n, 64, 64) uint8 patches, got %s" % (arr.shape,))
    for start in range(0, arr.shape[0], batch_size):
        chunk = arr[start : start + batch_size].astype(np.float32) / 255.0
        # grayscale patches are replicated across the three input channels
        rgb = np.repeat(chunk[:, None, :, :], 3, axis=1)
        rgb = (rgb - _MEAN[None, :, None, None]) / _STD[None, :, None, None]
        yield torch.from_numpy(rgb)


def pooled_features(backbone, patches, batch_size=64):
    """(n, 512) float32: global average pool of the last conv activations."""
    outs = []
    with torch.no_grad():
        for batch in _as_batches(patches, batch_size):
            act = backbone(batch)
            outs.append(act.mean(dim=(2, 3)).numpy())
    return np.concatenate(outs, axis=0).astype(np.float32)


class GapExtractor(nn.Module):
    """Backbone plus pooling as a single module, for state serialization."""

    def __init__(self, backbone):
        super().__init__()
        self.backbone = backbone

    def forward(self, x):
        return self.backbone(x).mean(dim=(2, 3))
