"""Patch classifier: frozen backbone features, fine-tuned dense head."""

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .features import build_backbone, pooled_features
from .reduce import PcaModel, fit_pca

DEFAULT_EPOCHS = 30
DEFAULT_LR = 1e-4
DEFAULT_BATCH = 2048
_SPLIT_SEED = 7
_TRAIN_SEED = 13


@dataclass(frozen=True)
class AccuracyReport:
    top1: float
    top3: float
    train_count: int
    test_count: int
    classes: int


def _head(in_dim, classes):
    return nn.Sequential(
        nn.Linear(in_dim, 256),
        nn.ReLU(),
        nn.Linear(256, classes),
    )


def _standardize_params(x):
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    return mu, sd


def train_head(
    patches,
    labels,
    epochs=DEFAULT_EPOCHS,
    lr=DEFAULT_LR,
    batch_size=DEFAULT_BATCH,
    weights=None,
):
    """Train the dense head on frozen pooled features, 80/20 split.

    Returns (checkpoint dict, AccuracyReport).  The checkpoint carries the
    backbone state, the fitted projection, standardization constants, and
    the head weights, so predictions reload bit-identically.
    """
    labels = np.asarray(labels, dtype=np.int64)
    patches = np.asarray(patches)
    if labels.shape != (patches.shape[0],):
        raise ValueError(
            "have %d patches but %d labels" % (patches.shape[0], labels.shape[0])
        )
    classes = int(labels.max()) + 1 if labels.size else 0
    if classes < 2:
        raise ValueError("need at least 2 classes to train")

    backbone, source = build_backbone(weights)
    feats = pooled_features(backbone, patches)
    # The head consumes the pooled activations directly, standing in for
    # the backbone's dense layers.  The projection is fitted alongside it
    # only so the checkpoint can emit reduced embeddings later; routing the
    # head through it hurts badly when samples barely outnumber components.
    pca = fit_pca(feats)
    full = feats.astype(np.float64)
    mu, sd = _standardize_params(full)
    x = ((full - mu) / sd).astype(np.float32)

    rng = np.random.default_rng(_SPLIT_SEED)
    order = rng.permutation(len(x))
    cut = max(1, int(round(len(x) * 0.8)))
    if cut >= len(x):
        cut = len(x) - 1
    train_idx, test_idx = order[:cut], order[cut:]

    torch.manual_seed(_TRAIN_SEED)
    head = _head(x.shape[1], classes)
    opt = torch.optim.Adam(head.parameters(), lr=lr)
    loss_fn = nn.CrossEntropyLoss()
    xt = torch.from_numpy(x[train_idx])
    yt = torch.from_numpy(labels[train_idx])
    head.train()
    for _ in range(epochs):
        perm = torch.randperm(len(xt))
        for start in range(0, len(xt), batch_size):
            sel = perm[start : start + batch_size]
            opt.zero_grad()
            loss = loss_fn(head(xt[sel]), yt[sel])
            loss.backward()
            opt.step()
    head.eval()

    with torch.no_grad():
        logits = head(torch.from_numpy(x[test_idx]))
    top1 = float(
        (logits.argmax(dim=1).numpy() == labels[test_idx]).mean()
    )
    k3 = min(3, classes)
    top3_hits = (
        torch.topk(logits, k=k3, dim=1).indices.numpy()
        == labels[test_idx][:, None]
    ).any(axis=1)
    report = AccuracyReport(
        top1=top1,
        top3=float(top3_hits.mean()),
        train_count=len(train_idx),
        test_count=len(test_idx),
        classes=classes,
    )
    checkpoint = {
        "format": "jqf-embedder-checkpoint",
        "version": 1,
        "classes": classes,
        "weights_source": source,
        "backbone_state": backbone.state_dict(),
        "pca_mean": pca.mean,
        "pca_components": pca.components,
        "pca_explained": pca.explained_ratio,
        "feature_mean": mu,
        "feature_scale": sd,
        "head_state": head.state_dict(),
        "hyperparameters": {"epochs": epochs, "lr": lr, "batch_size": batch_size},
    }
    return checkpoint, report


def save_checkpoint(checkpoint, path):
    torch.save(checkpoint, path)


def load_checkpoint(path):
    ckpt = torch.load(path, map_location="cpu", weights_only=False)
    if ckpt.get("format") != "jqf-embedder-checkpoint":
        raise ValueError("not a classifier checkpoint: %s" % path)
    return ckpt


class PatchClassifier:
    """Reloaded checkpoint: embeds patches and predicts their classes."""

    def __init__(self, checkpoint):
        backbone, _ = build_backbone()
        backbone.load_state_dict(checkpoint["backbone_state"])
        backbone.eval()
        self.backbone = backbone
        self.pca = PcaModel(
            mean=np.asarray(checkpoint["pca_mean"], dtype=np.float64),
            components=np.asarray(checkpoint["pca_components"], dtype=np.float64),
            explained_ratio=float(checkpoint["pca_explained"]),
        )
        self.feature_mean = np.asarray(checkpoint["feature_mean"], dtype=np.float64)
        self.feature_scale = np.asarray(checkpoint["feature_scale"], dtype=np.float64)
        self.classes = int(checkpoint["classes"])
        self.head = _head(len(self.feature_mean), self.classes)
        self.head.load_state_dict(checkpoint["head_state"])
        self.head.eval()

    @classmethod
    def from_file(cls, path):
        return cls(load_checkpoint(path))

    def embed(self, patches):
        feats = pooled_features(self.backbone, patches)
        return self.pca.transform(feats)

    def predict(self, patches):
        """Returns (embeddings (n, dim) float32, labels (n,) int64)."""
        feats = pooled_features(self.backbone, patches)
        x = (
            (feats.astype(np.float64) - self.feature_mean) / self.feature_scale
        ).astype(np.float32)
        with torch.no_grad():
            logits = self.head(torch.from_numpy(x))
        return self.pca.transform(feats), logits.argmax(dim=1).numpy()
