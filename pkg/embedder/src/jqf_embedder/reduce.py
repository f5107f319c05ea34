"""PCA projection of pooled features down to the exchange dimension."""

import warnings
from dataclasses import dataclass

import numpy as np

TARGET_DIM = 500


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray          # (d,) float64
    components: np.ndarray    # (k, d) float64, orthonormal rows
    explained_ratio: float    # variance captured by the kept components

    @property
    def dim(self):
        return self.components.shape[0]

    def transform(self, features):
        x = np.asarray(features, dtype=np.float64) - self.mean
        return (x @ self.components.T).astype(np.float32)


def fit_pca(features, target_dim=TARGET_DIM):
    """Fit principal components on the given set, no whitening.

    The component count drops to what the sample count supports (with a
    warning) when there are fewer samples than requested components.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least 2 feature rows to fit a projection")
    n, d = x.shape
    rank_cap = min(n - 1, d)
    k = min(target_dim, rank_cap)
    if k < target_dim:
        warnings.warn(
            "only %d samples of dim %d: reducing components %d -> %d"
            % (n, d, target_dim, k),
            stacklevel=2,
        )
    mean = x.mean(axis=0)
    centered = x - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    var = s**2
    total = var.sum()
    explained = float(var[:k].sum() / total) if total > 0 else 1.0
    return PcaModel(mean=mean, components=vt[:k], explained_ratio=explained)
