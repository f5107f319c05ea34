"""Dimension reduction: component counts, orthonormality, warnings."""

import numpy as np
import pytest

from jqf_embedder import TARGET_DIM, fit_pca


def gaussian_features(n, dim=512, seed=0):
    return np.random.default_rng(seed).normal(size=(n, dim)).astype(np.float32)


class TestFitPca:
    def test_full_target_when_samples_suffice(self):
        model = fit_pca(gaussian_features(520))
        assert model.dim == TARGET_DIM
        assert model.components.shape == (TARGET_DIM, 512)

    def test_reduced_with_warning_when_samples_scarce(self):
        with pytest.warns(UserWarning, match="reducing components"):
            model = fit_pca(gaussian_features(40))
        assert model.dim == 39

    def test_components_orthonormal(self):
        model = fit_pca(gaussian_features(60, dim=30), target_dim=20)
        gram = model.components @ model.components.T
        assert np.allclose(gram, np.eye(model.dim), atol=1e-10)

    def test_transform_centers_the_mean(self):
        feats = gaussian_features(80, dim=20, seed=3)
        model = fit_pca(feats, target_dim=16)
        reduced = model.transform(feats)
        assert reduced.dtype == np.float32
        assert np.allclose(reduced.mean(axis=0), 0.0, atol=1e-4)

    def test_explained_ratio_bounds(self):
        model = fit_pca(gaussian_features(100, dim=50, seed=4), target_dim=32)
        assert 0.0 < model.explained_ratio <= 1.0 + 1e-12

    def test_low_rank_structure_recovered(self):
        # rank-3 data: three components should explain nearly everything
        rng = np.random.default_rng(5)
        basis = rng.normal(size=(3, 64))
        coords = rng.normal(size=(200, 3)) * np.array([10.0, 5.0, 2.0])
        feats = (coords @ basis + rng.normal(scale=1e-6, size=(200, 64))).astype(
            np.float32
        )
        with pytest.warns(UserWarning):
            model = fit_pca(feats, target_dim=199)
        var = np.square(model.transform(feats).astype(np.float64)).sum(axis=0)
        assert var[:3].sum() / var.sum() > 0.999999

    def test_projection_distance_preserving_on_spanned_data(self):
        rng = np.random.default_rng(6)
        feats = rng.normal(size=(30, 8)).astype(np.float32)
        with pytest.warns(UserWarning):
            model = fit_pca(feats, target_dim=29)
        # 8-dim data fits entirely inside the 8 kept components
        reduced = model.transform(feats).astype(np.float64)
        d_orig = np.linalg.norm(feats[:, None] - feats[None], axis=-1)
        d_red = np.linalg.norm(reduced[:, None] - reduced[None], axis=-1)
        assert np.allclose(d_orig, d_red, atol=1e-3)

    def test_rejects_single_sample(self):
        with pytest.raises(ValueError):
            fit_pca(gaussian_features(1))

    def test_rejects_non_matrix(self):
        with pytest.raises(ValueError):
            fit_pca(np.zeros(16, dtype=np.float32))
