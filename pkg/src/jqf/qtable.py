"""Quantization tables: representation, quality scaling, fusion, file I/O.

Tables hold 64 values in natural (row-major) order, index 0 being the DC
term. Quality scaling follows the libjpeg integer formulas so that a table
scaled here is byte-identical to the DQT a libjpeg-style encoder embeds at
the same quality setting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateScaleError, FormatError, InvalidArgumentError

LUMINANCE = "luminance"
CHROMINANCE = "chrominance"

# JPEG Annex K reference tables, natural row-major order.
STANDARD_LUMINANCE = (
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
)
STANDARD_CHROMINANCE = (
    17, 18, 24, 47, 99, 99, 99, 99,
    18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
)


@dataclass(frozen=True)
class QuantTable:
    """64 quantization values for one component, natural order."""

    values: tuple
    component_kind: str

    def __post_init__(self):
        if self.component_kind not in (LUMINANCE, CHROMINANCE):
            raise InvalidArgumentError(
                f"unknown component kind {self.component_kind!r}")
        vals = tuple(int(v) for v in self.values)
        if len(vals) != 64:
            raise InvalidArgumentError(f"expected 64 values, got {len(vals)}")
        if any(v < 1 or v > 255 for v in vals):
            raise InvalidArgumentError("table values must lie in [1, 255]")
        object.__setattr__(self, "values", vals)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.int64).reshape(8, 8)


@dataclass(frozen=True)
class QualityScale:
    """A quality setting and its libjpeg integer scale percent."""

    quality: int
    scale_percent: int

    @property
    def factor(self) -> float:
        return self.scale_percent / 100.0


@dataclass(frozen=True)
class FusionWeights:
    """Per-texture fusion weights, normalized to sum to 1."""

    weights: dict

    def __post_init__(self):
        w = {int(k): float(v) for k, v in self.weights.items()}
        if not w:
            raise InvalidArgumentError("fusion weights are empty")
        if any(v < 0.0 or v > 1.0 for v in w.values()):
            raise InvalidArgumentError("weights must lie in [0, 1]")
        total = sum(w.values())
        if abs(total - 1.0) > 1e-9:
            raise InvalidArgumentError(f"weights sum to {total}, expected 1")
        object.__setattr__(self, "weights", w)


def standard_tables() -> tuple[QuantTable, QuantTable]:
    """The Annex K luminance and chrominance tables."""
    return (
        QuantTable(STANDARD_LUMINANCE, LUMINANCE),
        QuantTable(STANDARD_CHROMINANCE, CHROMINANCE),
    )


def scale_factor(quality: int) -> QualityScale:
    """Scaling factor for a quality setting, libjpeg integer semantics.

    Quality below 50 maps to 5000/Q percent (truncating division), 50 and
    above to 200 - 2Q percent, so Q=50 is the identity and Q=100 collapses
    to zero.
    """
    quality = _check_quality(quality)
    if quality < 50:
        percent = 5000 // quality
    else:
        percent = 200 - 2 * quality
    return QualityScale(quality=quality, scale_percent=percent)


def scale_table(base: QuantTable, quality: int) -> QuantTable:
    """Scale a base table to a target quality.

    Uses the libjpeg integer formula (v * percent + 50) // 100 clamped to
    [1, 255], applied to all 64 entries including DC.
    """
    percent = scale_factor(quality).scale_percent
    scaled = tuple(
        min(max((v * percent + 50) // 100, 1), 255) for v in base.values)
    return QuantTable(scaled, base.component_kind)


def unscale_table(scaled: QuantTable, quality: int) -> QuantTable:
    """Estimate the base table that scales to `scaled` at `quality`.

    Inverse of scale_table up to clamping: rescaling the result reproduces
    the input wherever neither direction clamped.
    """
    percent = scale_factor(quality).scale_percent
    if percent == 0:
        raise DegenerateScaleError(
            f"quality {quality} has zero scale percent; base is unrecoverable")
    base = tuple(
        min(max(_round_half_up(v * 100 / percent), 1), 255)
        for v in scaled.values)
    return QuantTable(base, scaled.component_kind)


def fuse(tables: list[QuantTable], weights: FusionWeights) -> QuantTable:
    """Weighted elementwise average of per-texture tables.

    Tables are indexed positionally by the texture ids appearing in
    `weights`; the result is rounded half-up and clamped to [1, 255].
    """
    if not tables:
        raise InvalidArgumentError("no tables to fuse")
    ids = sorted(weights.weights)
    if len(ids) != len(tables):
        raise InvalidArgumentError(
            f"{len(tables)} tables but {len(ids)} weights")
    kinds = {t.component_kind for t in tables}
    if len(kinds) != 1:
        raise InvalidArgumentError("tables mix component kinds")
    acc = np.zeros(64, dtype=np.float64)
    for table, tid in zip(tables, ids):
        acc += np.asarray(table.values, dtype=np.float64) * weights.weights[tid]
    fused = tuple(min(max(_round_half_up(v), 1), 255) for v in acc)
    return QuantTable(fused, tables[0].component_kind)


def write_table(table: QuantTable, quality: int, path) -> None:
    """Write a table as text: a header line, then 8 rows of 8 values."""
    lines = [f"{table.component_kind} {quality}"]
    for r in range(8):
        row = table.values[r * 8:(r + 1) * 8]
        lines.append(" ".join(f"{v:3d}" for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_table(path) -> tuple[QuantTable, int]:
    """Parse a table file; returns the table and the quality it is expressed at."""
    with open(path) as fh:
        text = fh.read()
    return parse_table_text(text)


def parse_table_text(text: str) -> tuple[QuantTable, int]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) != 9:
        raise FormatError(f"expected header plus 8 rows, got {len(lines)} lines")
    head = lines[0].split()
    if len(head) != 2 or head[0] not in (LUMINANCE, CHROMINANCE):
        raise FormatError(f"bad table header {lines[0]!r}")
    try:
        quality = int(head[1])
    except ValueError:
        raise FormatError(f"bad quality in header {lines[0]!r}") from None
    values = []
    for ln in lines[1:]:
        cells = ln.split()
        if len(cells) != 8:
            raise FormatError(f"expected 8 values per row, got {ln!r}")
        try:
            values.extend(int(c) for c in cells)
        except ValueError:
            raise FormatError(f"non-integer table value in {ln!r}") from None
    return QuantTable(tuple(values), head[0]), quality


def read_weights(path) -> FusionWeights:
    """Read fusion weights from text, one "texture_id weight" pair per line."""
    weights = {}
    with open(path) as fh:
        for lineno, ln in enumerate(fh, 1):
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            parts = ln.split()
            if len(parts) != 2:
                raise FormatError(f"line {lineno}: expected 'texture_id weight'")
            try:
                weights[int(parts[0])] = float(parts[1])
            except ValueError:
                raise FormatError(f"line {lineno}: bad number in {ln!r}") from None
    return FusionWeights(weights)


def write_weights(weights: FusionWeights, path) -> None:
    with open(path, "w") as fh:
        for tid in sorted(weights.weights):
            fh.write(f"{tid} {weights.weights[tid]:.12g}\n")


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _check_quality(quality) -> int:
    if not isinstance(quality, (int, np.integer)):
        raise InvalidArgumentError(f"quality must be an integer, got {quality!r}")
    if not 1 <= quality <= 100:
        raise InvalidArgumentError(f"quality {quality} outside [1, 100]")
    return int(quality)
