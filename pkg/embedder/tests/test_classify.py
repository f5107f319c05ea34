"""Classifier accuracy, checkpoint round trips, and cross-method agreement.

The last class covers the contract with the quantization toolkit: emitted
files feed its importer, its clustering runs on our embeddings, and the
classifier's label distribution matches nearest-centroid assignment on
clearly separable data.
"""

import numpy as np
import pytest

import jqf_embedder
from jqf_embedder import PatchClassifier
from jqf_embedder.classify import train_head

jqf_texture = pytest.importorskip("jqf.texture")
jqf_raster = pytest.importorskip("jqf.raster")


@pytest.fixture(scope="module")
def toolkit_model(toy_extraction):
    pairs = jqf_texture.import_embeddings(toy_extraction["path"])
    return jqf_texture.cluster([e for _, e in pairs], 2, seed=11)


@pytest.fixture(scope="module")
def cluster_to_class(toolkit_model, toy_extraction, toy_set):
    # clusters carry arbitrary ids; anchor them to classes by majority vote
    # over the labeled toy patches
    pairs = jqf_texture.import_embeddings(toy_extraction["path"])
    vecs = np.stack([e.vector for _, e in pairs]).astype(np.float64)
    cents = toolkit_model.centroids.astype(np.float64)
    assign = ((vecs[:, None, :] - cents[None]) ** 2).sum(axis=-1).argmin(axis=1)
    mapping = {}
    for cid in range(toolkit_model.k):
        members = toy_set["labels"][assign == cid]
        assert members.size > 0
        mapping[cid] = int(np.bincount(members, minlength=2).argmax())
    assert sorted(mapping.values()) == [0, 1], "clusters must split classes"
    return mapping


class TestTrainHead:
    def test_toy_two_class_accuracy(self, toy_checkpoint):
        report = toy_checkpoint["report"]
        assert report.classes == 2
        assert report.test_count >= 100
        assert report.top1 > 0.95
        assert report.top3 == 1.0

    def test_label_patch_mismatch(self, toy_set):
        from jqf_embedder.pipeline import load_patch_dir

        _, patches = load_patch_dir(toy_set["patch_dir"])
        with pytest.raises(ValueError, match="labels"):
            train_head(patches[:10], np.array([0, 1, 0]))

    def test_single_class_rejected(self):
        patches = np.zeros((6, 64, 64), dtype=np.uint8)
        with pytest.raises(ValueError, match="at least 2 classes"):
            train_head(patches, np.zeros(6, dtype=np.int64))


class TestCheckpoint:
    def test_reload_reproduces_predictions(self, toy_set, toy_checkpoint):
        from jqf_embedder.pipeline import load_patch_dir

        _, patches = load_patch_dir(toy_set["patch_dir"])
        first = PatchClassifier.from_file(toy_checkpoint["path"])
        second = PatchClassifier.from_file(toy_checkpoint["path"])
        vec_a, lab_a = first.predict(patches[:32])
        vec_b, lab_b = second.predict(patches[:32])
        assert np.array_equal(lab_a, lab_b)
        assert np.array_equal(vec_a, vec_b)

    def test_full_set_agreement(self, toy_set, toy_checkpoint):
        from jqf_embedder.pipeline import load_patch_dir

        _, patches = load_patch_dir(toy_set["patch_dir"])
        clf = PatchClassifier.from_file(toy_checkpoint["path"])
        _, labels = clf.predict(patches)
        assert (labels == toy_set["labels"]).mean() > 0.99

    def test_rejects_foreign_file(self, tmp_path):
        import torch

        path = tmp_path / "other.pt"
        torch.save({"format": "something-else"}, path)
        with pytest.raises(ValueError, match="not a classifier checkpoint"):
            PatchClassifier.from_file(path)

    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(OSError):
            PatchClassifier.from_file(tmp_path / "absent.pt")


class TestPredictLabels:
    def test_label_histogram_sums_to_patch_count(self, scene_prediction):
        assert scene_prediction["count"] == 64
        assert len(scene_prediction["labels"]) == 64

    def test_labels_match_scene_truth(self, scene, scene_prediction):
        agreement = (scene_prediction["labels"] == scene["truth"]).mean()
        assert agreement > 0.95

    def test_single_patch_image(self, toy_checkpoint, tmp_path):
        from PIL import Image

        path = tmp_path / "one.png"
        rng = np.random.default_rng(8)
        Image.fromarray(
            rng.integers(0, 256, (64, 64), dtype=np.uint8)
        ).save(path)
        count, labels = jqf_embedder.predict_labels(
            path, toy_checkpoint["path"], tmp_path / "one.jqfe"
        )
        assert count == 1
        assert labels.shape == (1,)

    def test_emitted_file_reads_back_in_toolkit(self, scene_prediction):
        vectors, ident, labels = jqf_texture.read_embedding_file(
            scene_prediction["path"]
        )
        assert vectors.shape == (64, 500)
        assert ident == jqf_embedder.EMBEDDER_ID
        assert np.array_equal(labels, scene_prediction["labels"])


class TestCrossMethodAgreement:
    def test_clustering_recovers_classes(
        self, toolkit_model, toy_extraction, toy_set
    ):
        pairs = jqf_texture.import_embeddings(toy_extraction["path"])
        vecs = np.stack([e.vector for _, e in pairs]).astype(np.float64)
        cents = toolkit_model.centroids.astype(np.float64)
        assign = (
            ((vecs[:, None, :] - cents[None]) ** 2).sum(axis=-1).argmin(axis=1)
        )
        truth = toy_set["labels"]
        purity = max((assign == truth).mean(), (assign == 1 - truth).mean())
        assert purity > 0.95

    def test_neural_vs_nearest_centroid_total_variation(
        self, scene, scene_prediction, toy_checkpoint, toolkit_model, cluster_to_class
    ):
        raster = jqf_raster.read_image(scene["path"])

        # neural route: labels exactly as the toolkit would read them back
        _, _, neural_labels = jqf_texture.read_embedding_file(
            scene_prediction["path"]
        )
        dist_neural = jqf_texture.predict_distribution(
            raster, toolkit_model, patch_labels=neural_labels.astype(np.int64)
        )

        # centroid route: embed the same tiles, assign to fitted centroids
        clf = PatchClassifier.from_file(toy_checkpoint["path"])
        tiles = jqf_embedder.tile_image(scene["path"])
        vecs = clf.embed(tiles).astype(np.float64)
        cents = toolkit_model.centroids.astype(np.float64)
        assign = (
            ((vecs[:, None, :] - cents[None]) ** 2).sum(axis=-1).argmin(axis=1)
        )
        mapped = np.array([cluster_to_class[c] for c in assign], dtype=np.int64)
        dist_centroid = jqf_texture.predict_distribution(
            raster, toolkit_model, patch_labels=mapped
        )

        tv = 0.5 * sum(
            abs(dist_neural.weights[t] - dist_centroid.weights[t])
            for t in range(toolkit_model.k)
        )
        assert tv <= 0.1
