"""Neural texture embeddings over a frozen convolutional backbone.

Embeds 64x64 grayscale patches with VGG-16 convolutional features pooled
to 512 dims, reduces them to 500 with PCA, and writes them in the binary
embedding-exchange format the quantization toolkit imports. A small dense
head on top of the reduced features classifies patches by texture.
"""

from .classify import (
    AccuracyReport,
    PatchClassifier,
    load_checkpoint,
    save_checkpoint,
    train_head,
)
from .exchange import ExchangeError, pack, read_file, unpack, write_file
from .features import FEATURE_DIM, PATCH_SIZE, build_backbone, pooled_features
from .pipeline import (
    EMBEDDER_ID,
    extract_features,
    load_patch_dir,
    predict_labels,
    tile_image,
    train_classifier,
)
from .reduce import TARGET_DIM, PcaModel, fit_pca

__version__ = "0.1.0"

__all__ = [
    "AccuracyReport",
    "EMBEDDER_ID",
    "ExchangeError",
    "FEATURE_DIM",
    "PATCH_SIZE",
    "PatchClassifier",
    "PcaModel",
    "TARGET_DIM",
    "build_backbone",
    "extract_features",
    "fit_pca",
    "load_checkpoint",
    "load_patch_dir",
    "pack",
    "pooled_features",
    "predict_labels",
    "read_file",
    "save_checkpoint",
    "tile_image",
    "train_classifier",
    "train_head",
    "unpack",
    "write_file",
]
