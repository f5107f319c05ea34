"""Texture pipeline: patches, embeddings, clustering, mosaics, prediction.

Images are cropped into 64x64 luminance patches, embedded as DCT-energy
statistics, clustered with K-means, and stitched into per-cluster mosaic
images for the annealer.  At prediction time an image's patches vote for
their nearest centroid, giving a per-texture weight distribution used to
fuse quantization tables.  Embeddings can be exchanged with out-of-process
embedders through a small binary format (see write_embedding_file).
"""

import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.fft import dctn
from scipy.spatial.distance import cdist

from .codec.tables import ZIGZAG_TO_NATURAL
from .errors import FormatError, InvalidArgumentError
from .qtable import QuantTable, parse_table_text
from .raster import GRAY, RasterImage, resize_max_dim

PATCH_SIZE = 64
EMBEDDER_ID = "dct-stats-v1"
EMBED_DIM = 66
PREDICT_MAX_DIM = 2048
PREDICT_STRIDE = 64

_MAGIC = b"JQFE"
_LABEL_MAGIC = b"LBLS"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TexturePatch:
    """One 64x64 luminance patch and where it came from."""

    pixels: np.ndarray
    source_image: str
    origin: tuple

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.shape != (PATCH_SIZE, PATCH_SIZE):
            raise InvalidArgumentError(
                "patch must be %dx%d, got %s" % (PATCH_SIZE, PATCH_SIZE, px.shape)
            )
        object.__setattr__(self, "pixels", px)


@dataclass(frozen=True)
class Embedding:
    vector: np.ndarray
    embedder_id: str

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float32)
        if v.ndim != 1:
            raise InvalidArgumentError("embedding vector must be 1-D")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("embedding vector has non-finite entries")
        object.__setattr__(self, "vector", v)


@dataclass(frozen=True)
class TextureModel:
    """Cluster centroids plus (once annealed) one luminance table per texture."""

    centroids: np.ndarray
    embedder_id: str
    anneal_quality: int = 50
    tables: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=np.float32)
        if c.ndim != 2 or c.shape[0] < 1:
            raise InvalidArgumentError("centroids must be a (k, dim) array, k >= 1")
        if not np.all(np.isfinite(c)):
            raise InvalidArgumentError("centroids must be finite")
        if len(np.unique(c, axis=0)) != c.shape[0]:
            raise InvalidArgumentError("centroids must be pairwise distinct")
        object.__setattr__(self, "centroids", c)
        tables = dict(self.tables)
        for tid, table in tables.items():
            if not 0 <= int(tid) < c.shape[0]:
                raise InvalidArgumentError("table id %r out of range" % (tid,))
            if not isinstance(table, QuantTable):
                raise InvalidArgumentError("tables must map texture id to QuantTable")
        object.__setattr__(self, "tables", tables)

    @property
    def k(self):
        return self.centroids.shape[0]

    @property
    def dim(self):
        return self.centroids.shape[1]

    def with_tables(self, tables, anneal_quality=None):
        q = self.anneal_quality if anneal_quality is None else anneal_quality
        return replace(self, tables=dict(tables), anneal_quality=q)


@dataclass(frozen=True)
class TextureDistribution:
    """Per-texture weights for one image; non-negative, summing to 1."""

    weights: dict

    def __post_init__(self):
        w = {int(k): float(v) for k, v in self.weights.items()}
        if not w:
            raise InvalidArgumentError("distribution is empty")
        if any(v < 0.0 for v in w.values()):
            raise InvalidArgumentError("weights must be non-negative")
        if abs(sum(w.values()) - 1.0) > 1e-9:
            raise InvalidArgumentError("weights must sum to 1")
        object.__setattr__(self, "weights", w)

    def top(self, n):
        """The n heaviest (texture-id, weight) pairs, heaviest first."""
        items = sorted(self.weights.items(), key=lambda kv: (-kv[1], kv[0]))
        return items[:n]


# ----------------------------------------------------------------- extraction


def extract_patches(image, stride, source_id=""):
    """All 64x64 patches at origins (j*stride, k*stride) fully inside the image."""
    if stride < 1:
        raise InvalidArgumentError("stride must be >= 1, got %r" % (stride,))
    plane = image.luma_u8() if isinstance(image, RasterImage) else np.asarray(image)
    h, w = plane.shape
    if h < PATCH_SIZE or w < PATCH_SIZE:
        raise InvalidArgumentError(
            "image %dx%d smaller than one %dx%d patch" % (w, h, PATCH_SIZE, PATCH_SIZE)
        )
    patches = []
    for y in range(0, h - PATCH_SIZE + 1, stride):
        for x in range(0, w - PATCH_SIZE + 1, stride):
            patches.append(
                TexturePatch(
                    pixels=plane[y : y + PATCH_SIZE, x : x + PATCH_SIZE],
                    source_image=source_id,
                    origin=(x, y),
                )
            )
    return patches


def _patch_array(patches):
    if isinstance(patches, np.ndarray):
        arr = patches
    else:
        arr = np.stack([p.pixels for p in patches])
    if arr.ndim != 3 or arr.shape[1:] != (PATCH_SIZE, PATCH_SIZE):
        raise InvalidArgumentError("expected (n, 64, 64) patches")
    return arr


def embed_batch(patches):
    """Embeddings for many patches at once, (n, 66) float32.

    Feature layout: 64 values log1p(mean |DCT coefficient|) per zigzag
    position, averaged over the patch's 64 blocks (DCT taken on raw sample
    values, no level shift, so a flat patch keeps a positive DC feature),
    then the patch mean and standard deviation.
    """
    arr = _patch_array(patches).astype(np.float64)
    n = arr.shape[0]
    blocks = (
        arr.reshape(n, 8, 8, 8, 8).transpose(0, 1, 3, 2, 4).reshape(n, 64, 8, 8)
    )
    coef = dctn(blocks, axes=(2, 3), norm="ortho")
    mean_abs = np.abs(coef).mean(axis=1).reshape(n, 64)
    feats = np.empty((n, EMBED_DIM), dtype=np.float64)
    feats[:, :64] = np.log1p(mean_abs[:, ZIGZAG_TO_NATURAL])
    feats[:, 64] = arr.mean(axis=(1, 2))
    feats[:, 65] = arr.std(axis=(1, 2))
    return feats.astype(np.float32)


def embed(patch):
    """Embedding of a single patch; see embed_batch for the feature layout."""
    pixels = patch.pixels if isinstance(patch, TexturePatch) else np.asarray(patch)
    vec = embed_batch(pixels[None])[0]
    return Embedding(vector=vec, embedder_id=EMBEDDER_ID)


# ------------------------------------------------------------------ exchange


def pack_embeddings(vectors, embedder_id, labels=None):
    """Serialize embeddings (and optional u16 labels) to the exchange bytes."""
    vec = np.ascontiguousarray(vectors, dtype="<f4")
    if vec.ndim != 2:
        raise InvalidArgumentError("vectors must be (count, dim)")
    if not np.all(np.isfinite(vec)):
        raise InvalidArgumentError("embedding vectors must be finite")
    try:
        ident = embedder_id.encode("ascii")
    except UnicodeEncodeError:
        raise InvalidArgumentError("embedder_id must be ASCII") from None
    count, dim = vec.shape
    out = bytearray()
    out += _MAGIC
    out += struct.pack("<H", _FORMAT_VERSION)
    out += struct.pack("<H", len(ident))
    out += ident
    out += struct.pack("<II", count, dim)
    out += vec.tobytes()
    if labels is not None:
        lab = np.ascontiguousarray(labels, dtype="<u2")
        if lab.shape != (count,):
            raise InvalidArgumentError("labels must be one u16 per embedding")
        out += _LABEL_MAGIC
        out += struct.pack("<I", count)
        out += lab.tobytes()
    return bytes(out)


def unpack_embeddings(data):
    """Inverse of pack_embeddings; returns (vectors, embedder_id, labels-or-None)."""
    if len(data) < 14 or data[:4] != _MAGIC:
        raise FormatError("bad embedding file magic")
    version = struct.unpack_from("<H", data, 4)[0]
    if version != _FORMAT_VERSION:
        raise FormatError("unsupported embedding format version %d" % version)
    id_len = struct.unpack_from("<H", data, 6)[0]
    pos = 8
    if pos + id_len > len(data):
        raise FormatError("truncated embedder id")
    try:
        embedder_id = data[pos : pos + id_len].decode("ascii")
    except UnicodeDecodeError:
        raise FormatError("embedder id is not ASCII") from None
    pos += id_len
    if pos + 8 > len(data):
        raise FormatError("truncated embedding header")
    count, dim = struct.unpack_from("<II", data, pos)
    pos += 8
    if dim == 0:
        raise FormatError("embedding dimension must be positive")
    need = count * dim * 4
    if pos + need > len(data):
        raise FormatError("embedding payload shorter than count*dim")
    vectors = (
        np.frombuffer(data, dtype="<f4", count=count * dim, offset=pos)
        .reshape(count, dim)
        .copy()
    )
    if not np.all(np.isfinite(vectors)):
        raise FormatError("embedding payload has non-finite values")
    pos += need
    labels = None
    if pos < len(data):
        if data[pos : pos + 4] != _LABEL_MAGIC:
            raise FormatError("trailing bytes are not a label block")
        lab_count = struct.unpack_from("<I", data, pos + 4)[0]
        if lab_count != count:
            raise FormatError(
                "label count %d does not match embedding count %d" % (lab_count, count)
            )
        pos += 8
        if pos + 2 * count > len(data):
            raise FormatError("truncated label block")
        labels = np.frombuffer(data, dtype="<u2", count=count, offset=pos).copy()
        pos += 2 * count
        if pos != len(data):
            raise FormatError("unexpected trailing bytes after label block")
    return vectors, embedder_id, labels


def write_embedding_file(path, vectors, embedder_id, labels=None):
    with open(path, "wb") as fh:
        fh.write(pack_embeddings(vectors, embedder_id, labels))


def read_embedding_file(path):
    with open(path, "rb") as fh:
        return unpack_embeddings(fh.read())


def import_embeddings(path):
    """Embeddings from an exchange file as (patch-id, Embedding) pairs."""
    vectors, embedder_id, _ = read_embedding_file(path)
    return [
        (i, Embedding(vector=vectors[i], embedder_id=embedder_id))
        for i in range(vectors.shape[0])
    ]


# ----------------------------------------------------------------- clustering


def _as_matrix(embeddings):
    if isinstance(embeddings, np.ndarray):
        mat = embeddings.astype(np.float64)
        ident = EMBEDDER_ID
    else:
        items = list(embeddings)
        if not items:
            raise InvalidArgumentError("no embeddings given")
        ids = {e.embedder_id for e in items}
        if len(ids) != 1:
            raise InvalidArgumentError("embeddings mix embedder ids: %s" % sorted(ids))
        ident = items[0].embedder_id
        mat = np.stack([e.vector for e in items]).astype(np.float64)
    if mat.ndim != 2:
        raise InvalidArgumentError("embeddings must form a (n, dim) matrix")
    return mat, ident


def _kmeans_pp_init(points, k, rng):
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = points[first]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            choice = int(rng.choice(n, p=d2 / total))
        else:
            choice = int(rng.integers(n))
        centroids[j] = points[choice]
        d2 = np.minimum(d2, ((points - centroids[j]) ** 2).sum(axis=1))
    return centroids


def kmeans(points, k, seed, max_iter=300):
    """K-means with k-means++ seeding; returns centroids in canonical order.

    Points are sorted lexicographically before seeding, so permuting the
    input order never changes the result for a fixed seed.  Empty clusters
    are re-seeded with the point farthest from its assigned centroid.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if k < 1:
        raise InvalidArgumentError("k must be >= 1, got %r" % (k,))
    if n < k:
        raise InvalidArgumentError("need at least k=%d points, got %d" % (k, n))
    order = np.lexsort(pts.T[::-1])
    pts = pts[order]

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(pts, k, rng)
    labels = None
    for _ in range(max_iter):
        d2 = cdist(pts, centroids, "sqeuclidean")
        new_labels = d2.argmin(axis=1)
        dist_own = d2[np.arange(n), new_labels].copy()
        counts = np.bincount(new_labels, minlength=k)
        for empty in np.nonzero(counts == 0)[0]:
            steal = int(dist_own.argmax())
            counts[new_labels[steal]] -= 1
            new_labels[steal] = empty
            counts[empty] += 1
            dist_own[steal] = 0.0
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, pts)
        centroids = sums / counts[:, None]

    canon = np.lexsort(centroids.T[::-1])
    return centroids[canon]


def cluster(embeddings, k, seed):
    """Fit a centroids-only TextureModel from embeddings."""
    mat, ident = _as_matrix(embeddings)
    centroids = kmeans(mat, k, seed).astype(np.float32)
    return TextureModel(centroids=centroids, embedder_id=ident)


def nearest_centroids(vectors, centroids):
    """Index of the closest centroid for every vector (brute force, ties low)."""
    d2 = cdist(
        np.asarray(vectors, dtype=np.float64),
        np.asarray(centroids, dtype=np.float64),
        "sqeuclidean",
    )
    return d2.argmin(axis=1)


# -------------------------------------------------------------------- mosaic


def stitch_mosaic(patches, max_patches, seed):
    """Square mosaic of randomly selected patches, row-major, cyclic fill."""
    if max_patches < 1:
        raise InvalidArgumentError("max_patches must be >= 1")
    if len(patches) == 0:
        raise InvalidArgumentError("no patches to stitch")
    arr = _patch_array(patches)
    n = arr.shape[0]
    m = min(n, max_patches)
    rng = np.random.default_rng(seed)
    selected = rng.choice(n, size=m, replace=False)
    g = math.isqrt(m)
    if g * g < m:
        g += 1
    canvas = np.empty((g * PATCH_SIZE, g * PATCH_SIZE), dtype=np.uint8)
    for cell in range(g * g):
        src = arr[selected[cell % m]]
        r, c = divmod(cell, g)
        canvas[
            r * PATCH_SIZE : (r + 1) * PATCH_SIZE,
            c * PATCH_SIZE : (c + 1) * PATCH_SIZE,
        ] = src
    return RasterImage(canvas, GRAY)


# ---------------------------------------------------------------- prediction


def predict_distribution(image, model, patch_labels=None):
    """Texture weight distribution of an image under a model.

    Large images are downsampled so their longest side is 2048 before
    patching (stride 64, non-overlapping).  patch_labels, when given,
    overrides nearest-centroid assignment with precomputed labels (e.g.
    from an out-of-process embedder) and must match the patch count.
    """
    img = resize_max_dim(image, PREDICT_MAX_DIM)
    patches = extract_patches(img, PREDICT_STRIDE)
    arr = _patch_array(patches)
    if patch_labels is None:
        feats = embed_batch(arr).astype(np.float64)
        labels = nearest_centroids(feats, model.centroids)
    else:
        labels = np.asarray(patch_labels, dtype=np.int64)
        if labels.shape != (arr.shape[0],):
            raise InvalidArgumentError(
                "expected %d patch labels, got %s" % (arr.shape[0], labels.shape)
            )
        if labels.min() < 0 or labels.max() >= model.k:
            raise InvalidArgumentError("patch label out of range")
    counts = np.bincount(labels, minlength=model.k)
    weights = counts / counts.sum()
    return TextureDistribution(weights={t: float(weights[t]) for t in range(model.k)})


# ------------------------------------------------------------- model storage


def save_model(model, path):
    """Persist a model: text header, centroid exchange block, inline tables."""
    centroid_block = pack_embeddings(model.centroids, model.embedder_id)
    lines = [
        "jqf-model 1",
        "k %d" % model.k,
        "dim %d" % model.dim,
        "embedder %s" % model.embedder_id,
        "anneal-quality %d" % model.anneal_quality,
        "tables %d" % len(model.tables),
        "centroids %d" % len(centroid_block),
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        fh.write(centroid_block)
        fh.write(b"\n")
        for tid in sorted(model.tables):
            table = model.tables[tid]
            fh.write(("texture %d\n" % tid).encode("ascii"))
            fh.write(("%s %d\n" % (table.component_kind, model.anneal_quality)).encode("ascii"))
            for r in range(8):
                row = table.values[r * 8 : (r + 1) * 8]
                fh.write((" ".join("%3d" % v for v in row) + "\n").encode("ascii"))


def load_model(path):
    with open(path, "rb") as fh:
        data = fh.read()
    header = {}
    pos = 0
    try:
        for _ in range(100):
            eol = data.index(b"\n", pos)
            key, _, value = data[pos:eol].decode("ascii").partition(" ")
            header[key] = value
            pos = eol + 1
            if key == "centroids":
                break
        else:
            raise FormatError("model header missing centroid block")
    except (ValueError, UnicodeDecodeError):
        raise FormatError("truncated or non-text model header") from None
    if header.get("jqf-model") != "1":
        raise FormatError("not a jqf model file")
    try:
        k = int(header["k"])
        dim = int(header["dim"])
        quality = int(header["anneal-quality"])
        n_tables = int(header["tables"])
        block_len = int(header["centroids"])
    except (KeyError, ValueError):
        raise FormatError("bad model header fields") from None

    block = data[pos : pos + block_len]
    if len(block) != block_len:
        raise FormatError("truncated centroid block")
    vectors, embedder_id, _ = unpack_embeddings(block)
    if vectors.shape != (k, dim):
        raise FormatError(
            "centroid block is %s, header says (%d, %d)" % (vectors.shape, k, dim)
        )
    if embedder_id != header.get("embedder"):
        raise FormatError("embedder id mismatch between header and centroid block")
    pos += block_len
    if data[pos : pos + 1] == b"\n":
        pos += 1

    try:
        text = data[pos:].decode("ascii")
    except UnicodeDecodeError:
        raise FormatError("non-text table section") from None
    tables = {}
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) != n_tables * 10:
        raise FormatError(
            "expected %d table blocks (10 lines each), got %d lines"
            % (n_tables, len(lines))
        )
    for b in range(n_tables):
        head = lines[b * 10].split()
        if len(head) != 2 or head[0] != "texture":
            raise FormatError("bad table block header %r" % lines[b * 10])
        tid = int(head[1])
        table, table_quality = parse_table_text("\n".join(lines[b * 10 + 1 : b * 10 + 10]))
        if table_quality != quality:
            raise FormatError(
                "table %d stored at quality %d, model says %d"
                % (tid, table_quality, quality)
            )
        tables[tid] = table
    return TextureModel(
        centroids=vectors,
        embedder_id=embedder_id,
        anneal_quality=quality,
        tables=tables,
    )
