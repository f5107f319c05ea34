"""Baseline sequential JPEG encoder.

The encoder is split in two stages so that repeated encodes of the same
image with different quantization tables stay cheap: EncodePlan caches the
color conversion, block layout, and forward DCT once, and finish() only
quantizes and entropy-codes.  Output is 8-bit JFIF with the fixed Huffman
tables every baseline decoder ships.
"""

from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn

from ..errors import InvalidArgumentError
from ..qtable import QuantTable
from ..raster import GRAY, rgb_to_ycbcr
from .tables import (
    AC_CHROMA_BITS,
    AC_CHROMA_CODES,
    AC_CHROMA_VALS,
    AC_LUMA_BITS,
    AC_LUMA_CODES,
    AC_LUMA_VALS,
    DC_CHROMA_BITS,
    DC_CHROMA_CODES,
    DC_CHROMA_VALS,
    DC_LUMA_BITS,
    DC_LUMA_CODES,
    DC_LUMA_VALS,
    ZIGZAG_TO_NATURAL,
)

SUBSAMPLING_MODES = ("4:2:0", "4:4:4")

_POW2 = np.left_shift(1, np.arange(17, dtype=np.int64))


@dataclass(frozen=True)
class JpegBlob:
    """An encoded JPEG bitstream plus the geometry it was produced from."""

    data: bytes
    width: int
    height: int
    subsampling: str

    @property
    def size_bytes(self):
        return len(self.data)


def _bit_length(values):
    # category of |v|: number of bits needed, 0 for v == 0
    return np.searchsorted(_POW2, values, side="right").astype(np.int64)


def _amplitude(values, nbits):
    # one's-complement style amplitude field for negative values
    return np.where(values >= 0, values, values + np.left_shift(1, nbits) - 1)


def _blockify(plane):
    """Split a (H, W) plane with H, W multiples of 8 into (n, 8, 8) raster-order blocks."""
    h, w = plane.shape
    return (
        plane.reshape(h // 8, 8, w // 8, 8)
        .transpose(0, 2, 1, 3)
        .reshape(-1, 8, 8)
    )


def _pad_edge(plane, mult_v, mult_h):
    h, w = plane.shape
    ph = (-h) % mult_v
    pw = (-w) % mult_h
    if ph or pw:
        plane = np.pad(plane, ((0, ph), (0, pw)), mode="edge")
    return plane


def _subsample2(plane):
    """2x2 box average with edge replication for odd dimensions."""
    p = _pad_edge(plane, 2, 2)
    h, w = p.shape
    return p.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


class EncodePlan:
    """Image-dependent, table-independent half of the encoder.

    Holds the zigzag-ordered DCT coefficients of every block in entropy-scan
    order plus the assembled header template.  finish() produces a complete
    bitstream for a given pair of tables; reconstruct_luma() decodes just the
    luminance plane without re-running the entropy stage.
    """

    def __init__(self, image, subsampling="4:2:0"):
        if subsampling not in SUBSAMPLING_MODES:
            raise InvalidArgumentError(
                "subsampling must be one of %s, got %r" % (SUBSAMPLING_MODES, subsampling)
            )
        if image.height < 8 or image.width < 8:
            raise InvalidArgumentError(
                "image must be at least 8x8, got %dx%d" % (image.width, image.height)
            )
        self.width = image.width
        self.height = image.height
        self.subsampling = subsampling

        if image.colorspace == GRAY:
            y = image.pixels.astype(np.float64)
            cb = np.full_like(y, 128.0)
            cr = np.full_like(y, 128.0)
        else:
            ycc = np.rint(np.clip(rgb_to_ycbcr(image.pixels), 0.0, 255.0))
            y, cb, cr = ycc[..., 0], ycc[..., 1], ycc[..., 2]

        if subsampling == "4:2:0":
            self.h_max, self.v_max = 2, 2
            cb = np.rint(_subsample2(cb))
            cr = np.rint(_subsample2(cr))
        else:
            self.h_max, self.v_max = 1, 1

        luma_pad = _pad_edge(y, 8 * self.v_max, 8 * self.h_max)
        cb_pad = _pad_edge(cb, 8, 8)
        cr_pad = _pad_edge(cr, 8, 8)
        self._luma_pad_shape = luma_pad.shape

        # raster-order blocks, then a permutation into entropy-scan order
        planes = (luma_pad, cb_pad, cr_pad)
        self._coeffs = []
        self._perms = []
        for ci, plane in enumerate(planes):
            blocks = _blockify(plane) - 128.0
            coef = dctn(blocks, axes=(1, 2), norm="ortho")
            self._coeffs.append(coef.reshape(-1, 64))
            bv = plane.shape[0] // 8
            bh = plane.shape[1] // 8
            if ci == 0 and self.h_max == 2:
                by, bx = np.divmod(np.arange(bv * bh, dtype=np.int64), bh)
                order = np.empty(bv * bh, dtype=np.int64)
                mcu = (by // 2) * (bh // 2) + (bx // 2)
                within = (by % 2) * 2 + (bx % 2)
                order[mcu * 4 + within] = np.arange(bv * bh, dtype=np.int64)
                self._perms.append(order)
            else:
                self._perms.append(np.arange(bv * bh, dtype=np.int64))
        self._luma_grid = (luma_pad.shape[0] // 8, luma_pad.shape[1] // 8)

        self._header = self._build_header()
        self._emit_layout = None

    # ------------------------------------------------------------------ header

    def _build_header(self):
        out = bytearray()
        out += b"\xff\xd8"  # SOI
        out += b"\xff\xe0" + (16).to_bytes(2, "big") + b"JFIF\x00\x01\x01\x00"
        out += (1).to_bytes(2, "big") + (1).to_bytes(2, "big") + b"\x00\x00"
        self._dqt_offset = len(out)
        out += bytes(2 + 67)  # DQT slot, luma
        out += bytes(2 + 67)  # DQT slot, chroma
        # SOF0
        sof = bytearray()
        sof += b"\x08"
        sof += int(self.height).to_bytes(2, "big")
        sof += int(self.width).to_bytes(2, "big")
        sof += b"\x03"
        sof += bytes((1, (self.h_max << 4) | self.v_max, 0))
        sof += bytes((2, 0x11, 1))
        sof += bytes((3, 0x11, 1))
        out += b"\xff\xc0" + (len(sof) + 2).to_bytes(2, "big") + sof
        for tc_th, bits, vals in (
            (0x00, DC_LUMA_BITS, DC_LUMA_VALS),
            (0x10, AC_LUMA_BITS, AC_LUMA_VALS),
            (0x01, DC_CHROMA_BITS, DC_CHROMA_VALS),
            (0x11, AC_CHROMA_BITS, AC_CHROMA_VALS),
        ):
            body = bytes((tc_th,)) + bytes(bits) + bytes(vals)
            out += b"\xff\xc4" + (len(body) + 2).to_bytes(2, "big") + body
        sos = bytes((3, 1, 0x00, 2, 0x11, 3, 0x11, 0, 63, 0))
        out += b"\xff\xda" + (len(sos) + 2).to_bytes(2, "big") + sos
        return bytes(out)

    def _header_with_tables(self, luma_table, chroma_table):
        header = bytearray(self._header)
        off = self._dqt_offset
        for tq, table in ((0, luma_table), (1, chroma_table)):
            zz = table.as_array().reshape(64)[ZIGZAG_TO_NATURAL]
            header[off : off + 2] = b"\xff\xdb"
            header[off + 2 : off + 4] = (67).to_bytes(2, "big")
            header[off + 4] = tq
            header[off + 5 : off + 69] = zz.astype(np.uint8).tobytes()
            off += 69
        return bytes(header)

    # ----------------------------------------------------------------- symbols

    def _quantize(self, comp, table):
        q = table.as_array().reshape(64).astype(np.float64)
        return np.rint(self._coeffs[comp] / q).astype(np.int64)

    def _component_emissions(self, qnat, perm, dc_codes, ac_codes):
        """Huffman emission stream (values, bit lengths) for one component.

        qnat: (n, 64) quantized coefficients in raster block order.
        perm: permutation mapping entropy-scan position -> raster index.
        """
        dc_code, dc_len = dc_codes
        ac_code, ac_len = ac_codes
        qzz = qnat[perm][:, ZIGZAG_TO_NATURAL]
        n = qzz.shape[0]

        dc = qzz[:, 0]
        diff = dc - np.concatenate(([0], dc[:-1]))
        dc_nbits = _bit_length(np.abs(diff))
        dc_amp = _amplitude(diff, dc_nbits)

        ac = qzz[:, 1:]
        rows, cols = np.nonzero(ac)
        vals = ac[rows, cols]
        nnz = len(rows)
        if nnz:
            first = np.ones(nnz, dtype=bool)
            first[1:] = rows[1:] != rows[:-1]
            prev_col = np.concatenate(([0], cols[:-1]))
            run = np.where(first, cols, cols - prev_col - 1)
            zrl = run >> 4
            ac_nbits = _bit_length(np.abs(vals))
            ac_amp = _amplitude(vals, ac_nbits)
            symbol = ((run & 15) << 4) | ac_nbits
            group = zrl + 2  # emissions per nonzero: ZRLs + code + amplitude
        else:
            first = np.zeros(0, dtype=bool)
            zrl = group = np.zeros(0, dtype=np.int64)
            ac_nbits = ac_amp = symbol = np.zeros(0, dtype=np.int64)

        last_col = np.full(n, -1, dtype=np.int64)
        last_col[rows] = cols  # rows sorted ascending, final write is max col
        need_eob = last_col != 62

        per_block_nz = np.zeros(n + 1, dtype=np.int64)
        np.add.at(per_block_nz, rows + 1, group)
        cnt = 2 + per_block_nz[1:] + need_eob
        block_start = np.concatenate(([0], np.cumsum(cnt)[:-1]))
        total = int(cnt.sum())

        out_vals = np.zeros(total, dtype=np.int64)
        out_lens = np.zeros(total, dtype=np.int64)

        # DC: huffman code for the category, then the amplitude bits
        out_vals[block_start] = dc_code[dc_nbits]
        out_lens[block_start] = dc_len[dc_nbits]
        out_vals[block_start + 1] = dc_amp
        out_lens[block_start + 1] = dc_nbits

        if nnz:
            gcum = np.concatenate(([0], np.cumsum(group)[:-1]))
            base = np.zeros(n, dtype=np.int64)
            idx_first = np.nonzero(first)[0]
            base[rows[idx_first]] = gcum[idx_first]
            pos = block_start[rows] + 2 + (gcum - base[rows])

            total_zrl = int(zrl.sum())
            if total_zrl:
                zstart = np.concatenate(([0], np.cumsum(zrl)[:-1]))
                zoff = np.arange(total_zrl) - np.repeat(zstart, zrl)
                zrl_pos = np.repeat(pos, zrl) + zoff
                out_vals[zrl_pos] = ac_code[0xF0]
                out_lens[zrl_pos] = ac_len[0xF0]
            out_vals[pos + zrl] = ac_code[symbol & 0xFF]
            out_lens[pos + zrl] = ac_len[symbol & 0xFF]
            out_vals[pos + zrl + 1] = ac_amp
            out_lens[pos + zrl + 1] = ac_nbits

        eob_idx = np.nonzero(need_eob)[0]
        out_vals[block_start[eob_idx] + cnt[eob_idx] - 1] = ac_code[0x00]
        out_lens[block_start[eob_idx] + cnt[eob_idx] - 1] = ac_len[0x00]

        return out_vals, out_lens, cnt

    def _interleave(self, streams):
        """Merge per-component emission streams into global MCU order."""
        if self._emit_layout is None:
            if self.h_max == 2:
                pattern = [(0, 4), (1, 1), (2, 1)]
            else:
                pattern = [(0, 1), (1, 1), (2, 1)]
            self._emit_layout = (pattern, self._coeffs[1].shape[0])
        pattern, n_mcu = self._emit_layout

        # global block sequence: component id per block slot, per MCU
        comp_ids = np.concatenate(
            [np.full(k, c, dtype=np.int64) for c, k in pattern]
        )
        slots = np.tile(comp_ids, n_mcu)

        counts = np.zeros(len(slots), dtype=np.int64)
        for c, (vals, lens, cnt) in enumerate(streams):
            counts[slots == c] = cnt
        out_start = np.concatenate(([0], np.cumsum(counts)[:-1]))
        total = int(counts.sum())
        out_vals = np.empty(total, dtype=np.int64)
        out_lens = np.empty(total, dtype=np.int64)
        for c, (vals, lens, cnt) in enumerate(streams):
            starts = out_start[slots == c]
            seg = np.concatenate(([0], np.cumsum(cnt)[:-1]))
            idx = np.repeat(starts, cnt) + (np.arange(len(vals)) - np.repeat(seg, cnt))
            out_vals[idx] = vals
            out_lens[idx] = lens
        return out_vals, out_lens

    @staticmethod
    def _pack(vals, lens):
        """Pack (value, bitlength) emissions MSB-first, pad with 1s, stuff 0xFF."""
        keep = lens > 0
        vals = vals[keep]
        lens = lens[keep]
        total = int(lens.sum())
        if total == 0:
            return b""
        starts = np.concatenate(([0], np.cumsum(lens)[:-1]))
        offs = np.arange(total, dtype=np.int64) - np.repeat(starts, lens)
        shift = np.repeat(lens, lens) - 1 - offs
        bits = (np.repeat(vals, lens) >> shift) & 1
        pad = (-total) % 8
        if pad:
            bits = np.concatenate([bits, np.ones(pad, dtype=bits.dtype)])
        packed = np.packbits(bits.astype(np.uint8))
        ff = np.nonzero(packed == 0xFF)[0]
        if len(ff):
            packed = np.insert(packed, ff + 1, 0)
        return packed.tobytes()

    # ------------------------------------------------------------------ public

    def finish(self, luma_table, chroma_table):
        """Quantize with the given tables and emit the complete bitstream."""
        qy = self._quantize(0, luma_table)
        qcb = self._quantize(1, chroma_table)
        qcr = self._quantize(2, chroma_table)
        streams = [
            self._component_emissions(qy, self._perms[0], DC_LUMA_CODES, AC_LUMA_CODES),
            self._component_emissions(qcb, self._perms[1], DC_CHROMA_CODES, AC_CHROMA_CODES),
            self._component_emissions(qcr, self._perms[2], DC_CHROMA_CODES, AC_CHROMA_CODES),
        ]
        vals, lens = self._interleave(streams)
        body = self._pack(vals, lens)
        data = self._header_with_tables(luma_table, chroma_table) + body + b"\xff\xd9"
        return JpegBlob(
            data=data,
            width=self.width,
            height=self.height,
            subsampling=self.subsampling,
        )

    def reconstruct_luma(self, luma_table):
        """Decoded luminance plane for this image under the given luma table.

        Matches the luminance a full decode of finish(...) would produce; the
        entropy stage is lossless so it can be skipped.
        """
        q = luma_table.as_array().reshape(64).astype(np.float64)
        qnat = np.rint(self._coeffs[0] / q)
        rec = idctn((qnat * q).reshape(-1, 8, 8), axes=(1, 2), norm="ortho") + 128.0
        bv, bh = self._luma_grid
        plane = (
            rec.reshape(bv, bh, 8, 8)
            .transpose(0, 2, 1, 3)
            .reshape(self._luma_pad_shape)
        )
        plane = np.clip(np.rint(plane), 0, 255)
        return plane[: self.height, : self.width].astype(np.uint8)


def encode(image, luma_table, chroma_table, subsampling="4:2:0"):
    """One-shot encode of a raster image with explicit quantization tables."""
    if not isinstance(luma_table, QuantTable) or not isinstance(chroma_table, QuantTable):
        raise InvalidArgumentError("luma_table and chroma_table must be QuantTable")
    return EncodePlan(image, subsampling=subsampling).finish(luma_table, chroma_table)
