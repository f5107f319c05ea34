"""High-level operations: extract, train, predict on patch directories."""

import csv
from pathlib import Path

import numpy as np
from PIL import Image

from . import exchange
from .classify import (
    DEFAULT_BATCH,
    DEFAULT_EPOCHS,
    DEFAULT_LR,
    PatchClassifier,
    save_checkpoint,
    train_head,
)
from .features import PATCH_SIZE, build_backbone, pooled_features
from .reduce import fit_pca

EMBEDDER_ID = "vgg16-pca500"
PREDICT_MAX_DIM = 2048
PATCH_SUFFIXES = (".png", ".pgm", ".ppm", ".bmp", ".tif", ".tiff")


def load_patch_dir(patch_dir):
    """Sorted (names, (n, 64, 64) uint8) from a directory of patch images."""
    root = Path(patch_dir)
    if not root.is_dir():
        raise FileNotFoundError("patch directory %s does not exist" % root)
    files = sorted(
        p for p in root.iterdir() if p.suffix.lower() in PATCH_SUFFIXES and p.is_file()
    )
    if not files:
        raise ValueError("no patch images under %s" % root)
    patches = np.empty((len(files), PATCH_SIZE, PATCH_SIZE), dtype=np.uint8)
    for i, path in enumerate(files):
        try:
            with Image.open(path) as im:
                plane = np.asarray(im.convert("L"), dtype=np.uint8)
        except Exception as exc:
            raise ValueError("unreadable patch %s: %s" % (path.name, exc)) from exc
        if plane.shape != (PATCH_SIZE, PATCH_SIZE):
            raise ValueError(
                "patch %s is %sx%s, expected %dx%d"
                % (path.name, plane.shape[1], plane.shape[0], PATCH_SIZE, PATCH_SIZE)
            )
        patches[i] = plane
    return [p.name for p in files], patches


def extract_features(patch_dir, out_path, weights=None):
    """Embed every patch in a directory and write the exchange file.

    Returns (count, dim, explained_variance_ratio).
    """
    names, patches = load_patch_dir(patch_dir)
    backbone, _ = build_backbone(weights)
    feats = pooled_features(backbone, patches)
    pca = fit_pca(feats)
    vectors = pca.transform(feats)
    exchange.write_file(out_path, vectors, EMBEDDER_ID)
    return len(names), pca.dim, pca.explained_ratio


def read_labels_csv(path, names):
    """Label per patch file name; every patch must be covered exactly."""
    by_name = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row or row[0].startswith("#"):
                continue
            if row[0] in ("file", "patch", "name"):
                continue
            if len(row) < 2:
                raise ValueError("labels row needs file,label: %r" % (row,))
            by_name[row[0]] = int(row[-1])
    missing = [n for n in names if n not in by_name]
    if missing:
        raise ValueError(
            "labels missing for %d patches (first: %s)" % (len(missing), missing[0])
        )
    extra = set(by_name) - set(names)
    if extra:
        raise ValueError("labels for unknown patches: %s" % sorted(extra)[:3])
    return np.array([by_name[n] for n in names], dtype=np.int64)


def train_classifier(
    patch_dir,
    labels_csv,
    checkpoint_out,
    epochs=DEFAULT_EPOCHS,
    lr=DEFAULT_LR,
    batch_size=DEFAULT_BATCH,
    weights=None,
):
    """Fine-tune the dense head over frozen features; persist the checkpoint."""
    names, patches = load_patch_dir(patch_dir)
    labels = read_labels_csv(labels_csv, names)
    checkpoint, report = train_head(
        patches, labels, epochs=epochs, lr=lr, batch_size=batch_size, weights=weights
    )
    save_checkpoint(checkpoint, checkpoint_out)
    return report


def tile_image(path, max_dim=PREDICT_MAX_DIM):
    """Non-overlapping 64x64 luma patches of an image, downsampled if huge."""
    with Image.open(path) as im:
        plane = im.convert("L")
        longest = max(plane.size)
        if longest > max_dim:
            scale = max_dim / longest
            plane = plane.resize(
                (max(1, round(plane.width * scale)), max(1, round(plane.height * scale))),
                Image.BILINEAR,
            )
        arr = np.asarray(plane, dtype=np.uint8)
    ny = arr.shape[0] // PATCH_SIZE
    nx = arr.shape[1] // PATCH_SIZE
    if ny == 0 or nx == 0:
        raise ValueError("image smaller than one %dx%d patch" % (PATCH_SIZE, PATCH_SIZE))
    tiles = (
        arr[: ny * PATCH_SIZE, : nx * PATCH_SIZE]
        .reshape(ny, PATCH_SIZE, nx, PATCH_SIZE)
        .transpose(0, 2, 1, 3)
        .reshape(ny * nx, PATCH_SIZE, PATCH_SIZE)
    )
    return tiles


def predict_labels(image_path, checkpoint_path, out_path):
    """Classify an image's patches; write embeddings + label block.

    Returns (count, labels array).
    """
    classifier = PatchClassifier.from_file(checkpoint_path)
    tiles = tile_image(image_path)
    vectors, labels = classifier.predict(tiles)
    exchange.write_file(
        out_path, vectors, EMBEDDER_ID, labels=labels.astype(np.uint16)
    )
    return len(labels), labels
