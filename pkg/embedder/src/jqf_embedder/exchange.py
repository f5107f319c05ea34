"""Embedding exchange file: "JQFE" magic, f32 vectors, optional u16 labels.

Independent implementation of the wire format shared with the texture
toolkit; files written here parse in that package's importer and vice
versa.  Layout, little-endian throughout:

    b"JQFE"  u16 version=1  u16 id_len  id_len bytes ASCII embedder id
    u32 count  u32 dim  count*dim float32 row-major
    optional: b"LBLS"  u32 count  count u16 labels
"""

import struct

import numpy as np

MAGIC = b"JQFE"
LABEL_MAGIC = b"LBLS"
FORMAT_VERSION = 1


class ExchangeError(ValueError):
    """Malformed or internally inconsistent exchange payload."""


def pack(vectors, embedder_id, labels=None):
    vec = np.ascontiguousarray(vectors, dtype="<f4")
    if vec.ndim != 2 or vec.shape[0] == 0 or vec.shape[1] == 0:
        raise ExchangeError("vectors must be a non-empty (count, dim) array")
    if not np.all(np.isfinite(vec)):
        raise ExchangeError("vectors must be finite")
    try:
        ident = embedder_id.encode("ascii")
    except UnicodeEncodeError:
        raise ExchangeError("embedder id must be ASCII") from None
    count, dim = vec.shape
    out = bytearray()
    out += MAGIC
    out += struct.pack("<HH", FORMAT_VERSION, len(ident))
    out += ident
    out += struct.pack("<II", count, dim)
    out += vec.tobytes()
    if labels is not None:
        lab = np.ascontiguousarray(labels, dtype="<u2")
        if lab.shape != (count,):
            raise ExchangeError("labels must be one u16 per vector")
        out += LABEL_MAGIC
        out += struct.pack("<I", count)
        out += lab.tobytes()
    return bytes(out)


def unpack(data):
    """Returns (vectors float32 (count, dim), embedder_id, labels or None)."""
    if len(data) < 16 or data[:4] != MAGIC:
        raise ExchangeError("bad magic")
    version, id_len = struct.unpack_from("<HH", data, 4)
    if version != FORMAT_VERSION:
        raise ExchangeError("unsupported version %d" % version)
    pos = 8
    try:
        embedder_id = data[pos : pos + id_len].decode("ascii")
    except UnicodeDecodeError:
        raise ExchangeError("embedder id must be ASCII") from None
    pos += id_len
    count, dim = struct.unpack_from("<II", data, pos)
    pos += 8
    need = count * dim * 4
    if pos + need > len(data):
        raise ExchangeError("truncated vector payload")
    vectors = (
        np.frombuffer(data, dtype="<f4", count=count * dim, offset=pos)
        .reshape(count, dim)
        .copy()
    )
    if not np.all(np.isfinite(vectors)):
        raise ExchangeError("vector payload has non-finite values")
    pos += need
    labels = None
    if pos < len(data):
        if data[pos : pos + 4] != LABEL_MAGIC:
            raise ExchangeError("unexpected trailing bytes")
        (lab_count,) = struct.unpack_from("<I", data, pos + 4)
        if lab_count != count:
            raise ExchangeError("label count mismatch")
        pos += 8
        if pos + 2 * count > len(data):
            raise ExchangeError("truncated label block")
        labels = np.frombuffer(data, dtype="<u2", count=count, offset=pos).copy()
        pos += 2 * count
    if pos != len(data):
        raise ExchangeError("unexpected trailing bytes")
    return vectors, embedder_id, labels


def write_file(path, vectors, embedder_id, labels=None):
    with open(path, "wb") as fh:
        fh.write(pack(vectors, embedder_id, labels=labels))


def read_file(path):
    with open(path, "rb") as fh:
        return unpack(fh.read())
