"""Content-adaptive JPEG quantization tables.

Cluster corpus patches into textures, anneal a quantization table per
texture against a perceptual quality floor, then fuse the per-texture
tables per image at encode time.
"""

from .annealer import (
    AnnealConfig,
    AnnealTrace,
    TraceRecord,
    accept_probability,
    anneal,
    anneal_all,
    energy,
    propose,
    temperature,
)
from .codec import JpegBlob, compressed_size, decode, encode, read_quant_tables
from .errors import (
    DegenerateEnergyError,
    DegenerateScaleError,
    DimensionMismatchError,
    FormatError,
    InvalidArgumentError,
    JpegParseError,
    JqfError,
)
from .metrics import fsim, psnr, quality_within_tolerance, ssim
from .qtable import (
    FusionWeights,
    QuantTable,
    fuse,
    read_table,
    scale_factor,
    scale_table,
    standard_tables,
    unscale_table,
    write_table,
)
from .raster import RasterImage, read_image, resize_max_dim, write_png
from .texture import (
    Embedding,
    TextureDistribution,
    TextureModel,
    TexturePatch,
    cluster,
    embed,
    extract_patches,
    import_embeddings,
    load_model,
    predict_distribution,
    read_embedding_file,
    save_model,
    stitch_mosaic,
    write_embedding_file,
)

__version__ = "0.1.0"

__all__ = [
    "AnnealConfig",
    "AnnealTrace",
    "TraceRecord",
    "accept_probability",
    "anneal",
    "anneal_all",
    "energy",
    "propose",
    "temperature",
    "JpegBlob",
    "compressed_size",
    "decode",
    "encode",
    "read_quant_tables",
    "DegenerateEnergyError",
    "DegenerateScaleError",
    "DimensionMismatchError",
    "FormatError",
    "InvalidArgumentError",
    "JpegParseError",
    "JqfError",
    "fsim",
    "psnr",
    "quality_within_tolerance",
    "ssim",
    "FusionWeights",
    "QuantTable",
    "fuse",
    "read_table",
    "scale_factor",
    "scale_table",
    "standard_tables",
    "unscale_table",
    "write_table",
    "RasterImage",
    "read_image",
    "resize_max_dim",
    "write_png",
    "Embedding",
    "TextureDistribution",
    "TextureModel",
    "TexturePatch",
    "cluster",
    "embed",
    "extract_patches",
    "import_embeddings",
    "load_model",
    "predict_distribution",
    "read_embedding_file",
    "save_model",
    "stitch_mosaic",
    "write_embedding_file",
    "__version__",
]
