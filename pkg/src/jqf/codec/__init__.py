"""Self-contained baseline JPEG codec with swappable quantization tables."""

from .reader import decode, read_quant_tables
from .writer import SUBSAMPLING_MODES, EncodePlan, JpegBlob, encode

__all__ = [
    "EncodePlan",
    "JpegBlob",
    "SUBSAMPLING_MODES",
    "compressed_size",
    "decode",
    "encode",
    "read_quant_tables",
]


def compressed_size(blob):
    """Total size in bytes of an encoded stream (headers included)."""
    if isinstance(blob, JpegBlob):
        return blob.size_bytes
    return len(blob)
