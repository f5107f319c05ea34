"""Shared toy data for the embedder suite.

Two visually trivial patch classes (flat vs. wideband noise) with matched
brightness, so texture is the only separating signal.  Everything heavy
(backbone forwards, training) happens once per session.
"""

import numpy as np
import pytest
from PIL import Image

jqf_embedder = pytest.importorskip("jqf_embedder")

TOY_COUNT = 512
SCENE_GRID = 8
SCENE_FLAT_SHARE = 5 / 8  # 5 flat cells out of every 8


def flat_tile(rng):
    base = rng.uniform(80, 180)
    return np.clip(np.rint(base + rng.normal(0, 2.0, (64, 64))), 0, 255).astype(
        np.uint8
    )


def noisy_tile(rng):
    base = rng.uniform(80, 180)
    return np.clip(np.rint(base + rng.uniform(-70, 70, (64, 64))), 0, 255).astype(
        np.uint8
    )


@pytest.fixture(scope="session")
def toy_set(tmp_path_factory):
    """512 labeled patches: even index flat (0), odd index noisy (1)."""
    root = tmp_path_factory.mktemp("toy")
    patch_dir = root / "patches"
    patch_dir.mkdir()
    rng = np.random.default_rng(2024)
    rows = []
    labels = np.empty(TOY_COUNT, dtype=np.int64)
    for i in range(TOY_COUNT):
        cls = i % 2
        tile = flat_tile(rng) if cls == 0 else noisy_tile(rng)
        name = "p%03d.png" % i
        Image.fromarray(tile).save(patch_dir / name)
        rows.append("%s,%d" % (name, cls))
        labels[i] = cls
    labels_csv = root / "labels.csv"
    labels_csv.write_text("file,label\n" + "\n".join(rows) + "\n")
    return {
        "root": root,
        "patch_dir": patch_dir,
        "labels_csv": labels_csv,
        "labels": labels,
    }


@pytest.fixture(scope="session")
def toy_extraction(toy_set):
    out = toy_set["root"] / "toy.jqfe"
    count, dim, explained = jqf_embedder.extract_features(toy_set["patch_dir"], out)
    return {"path": out, "count": count, "dim": dim, "explained": explained}


@pytest.fixture(scope="session")
def toy_checkpoint(toy_set):
    path = toy_set["root"] / "classifier.pt"
    report = jqf_embedder.train_classifier(
        toy_set["patch_dir"], toy_set["labels_csv"], path
    )
    return {"path": path, "report": report}


@pytest.fixture(scope="session")
def scene(tmp_path_factory):
    """512x512 composite: 40 flat and 24 noisy 64px cells, known truth."""
    root = tmp_path_factory.mktemp("scene")
    rng = np.random.default_rng(77)
    img = np.empty((512, 512), dtype=np.uint8)
    truth = np.empty(SCENE_GRID * SCENE_GRID, dtype=np.int64)
    for r in range(SCENE_GRID):
        for c in range(SCENE_GRID):
            idx = r * SCENE_GRID + c
            if idx % 8 < 5:
                tile, lab = flat_tile(rng), 0
            else:
                tile, lab = noisy_tile(rng), 1
            img[r * 64 : (r + 1) * 64, c * 64 : (c + 1) * 64] = tile
            truth[idx] = lab
    path = root / "scene.png"
    Image.fromarray(img).save(path)
    return {"path": path, "truth": truth}


@pytest.fixture(scope="session")
def scene_prediction(scene, toy_checkpoint):
    out = scene["path"].parent / "scene-pred.jqfe"
    count, labels = jqf_embedder.predict_labels(
        scene["path"], toy_checkpoint["path"], out
    )
    return {"path": out, "count": count, "labels": labels}
