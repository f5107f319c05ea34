"""Baseline sequential JPEG decoder.

Accepts 8-bit baseline JFIF/EXIF streams with 1 to 3 components, Huffman
entropy coding, optional restart intervals, and per-component sampling
factors of 1 or 2.  Progressive and arithmetic-coded streams are rejected.
Malformed input raises JpegParseError carrying the byte offset of the
problem.
"""

import numpy as np
from scipy.fft import idctn

from ..errors import JpegParseError
from ..raster import RasterImage, ycbcr_to_rgb
from .tables import ZIGZAG_TO_NATURAL

_RST0, _RST7 = 0xD0, 0xD7

_Z2N = [int(v) for v in ZIGZAG_TO_NATURAL]


class _HuffTable:
    """Peek-16 lookup: the top 16 unread bits index symbol and code length."""

    def __init__(self, bits, vals, offset):
        sym = np.zeros(1 << 16, dtype=np.uint8)
        ln = np.zeros(1 << 16, dtype=np.uint8)
        code = 0
        k = 0
        for length in range(1, 17):
            for _ in range(bits[length - 1]):
                if k >= len(vals):
                    raise JpegParseError("huffman value list too short", offset=offset)
                lo = code << (16 - length)
                hi = lo + (1 << (16 - length))
                sym[lo:hi] = vals[k]
                ln[lo:hi] = length
                code += 1
                k += 1
            if code > (1 << length):
                raise JpegParseError("invalid huffman code counts", offset=offset)
            code <<= 1
        self.sym = sym.tolist()
        self.len = ln.tolist()


class _BitReader:
    """MSB-first bit reader over a destuffed entropy segment."""

    def __init__(self, data, base_offset):
        buf = data + b"\x00\x00\x00\x00"
        arr = np.frombuffer(buf, dtype=np.uint8).astype(np.int64)
        self.words = (
            (arr[:-3] << 24) | (arr[1:-2] << 16) | (arr[2:-1] << 8) | arr[3:]
        ).tolist()
        self.nbits = 8 * len(data)
        self.pos = 0
        self.base_offset = base_offset

    def peek16(self):
        p = self.pos
        return (self.words[p >> 3] >> (16 - (p & 7))) & 0xFFFF

    def read(self, n):
        p = self.pos
        if p + n > self.nbits:
            raise JpegParseError(
                "entropy data exhausted", offset=self.base_offset + (p >> 3)
            )
        self.pos = p + n
        return (self.words[p >> 3] >> (32 - (p & 7) - n)) & ((1 << n) - 1)

    def offset(self):
        return self.base_offset + (self.pos >> 3)


def _extend(value, nbits):
    if nbits and value < (1 << (nbits - 1)):
        return value - (1 << nbits) + 1
    return value


def _u16(data, pos):
    if pos + 2 > len(data):
        raise JpegParseError("unexpected end of stream", offset=pos)
    return (data[pos] << 8) | data[pos + 1]


class _Component:
    __slots__ = ("cid", "h", "v", "tq", "dc_table", "ac_table", "blocks", "grid")

    def __init__(self, cid, h, v, tq):
        self.cid = cid
        self.h = h
        self.v = v
        self.tq = tq


def decode(data):
    """Decode a JPEG bitstream to a RasterImage.

    Returns grayscale for single-component streams, RGB otherwise.
    """
    if isinstance(data, (bytearray, memoryview)):
        data = bytes(data)
    if len(data) < 4 or data[0] != 0xFF or data[1] != 0xD8:
        raise JpegParseError("missing SOI marker", offset=0)

    qtables = {}
    htables = {}
    components = []
    height = width = 0
    restart_interval = 0
    pos = 2
    scan_done = False

    while True:
        if pos >= len(data):
            raise JpegParseError("unexpected end of stream", offset=pos)
        if data[pos] != 0xFF:
            raise JpegParseError(
                "expected marker, got 0x%02x" % data[pos], offset=pos
            )
        while pos < len(data) and data[pos] == 0xFF:
            pos += 1
        if pos >= len(data):
            raise JpegParseError("unexpected end of stream", offset=pos)
        marker = data[pos]
        marker_pos = pos - 1
        pos += 1

        if marker == 0xD9:  # EOI
            if not scan_done:
                raise JpegParseError("EOI before scan data", offset=marker_pos)
            break
        if marker == 0x01 or _RST0 <= marker <= _RST7:
            continue

        length = _u16(data, pos)
        if length < 2:
            raise JpegParseError("invalid segment length", offset=pos)
        seg_start = pos + 2
        seg_end = pos + length
        if seg_end > len(data):
            raise JpegParseError("segment runs past end of stream", offset=pos)

        if 0xE0 <= marker <= 0xEF or marker == 0xFE:  # APPn / COM
            pos = seg_end
        elif marker == 0xDB:  # DQT
            p = seg_start
            while p < seg_end:
                pq = data[p] >> 4
                tq = data[p] & 15
                if pq != 0:
                    raise JpegParseError("16-bit quantization tables unsupported", offset=p)
                if p + 65 > seg_end:
                    raise JpegParseError("truncated quantization table", offset=p)
                table = np.zeros(64, dtype=np.int64)
                table[_Z2N] = np.frombuffer(data, dtype=np.uint8, count=64, offset=p + 1)
                qtables[tq] = table
                p += 65
            pos = seg_end
        elif marker == 0xC4:  # DHT
            p = seg_start
            while p < seg_end:
                if p + 17 > seg_end:
                    raise JpegParseError("truncated huffman table", offset=p)
                tc = data[p] >> 4
                th = data[p] & 15
                bits = list(data[p + 1 : p + 17])
                n = sum(bits)
                if p + 17 + n > seg_end:
                    raise JpegParseError("truncated huffman table", offset=p)
                vals = list(data[p + 17 : p + 17 + n])
                htables[(tc, th)] = _HuffTable(bits, vals, p)
                p += 17 + n
            pos = seg_end
        elif marker == 0xC0 or marker == 0xC1:  # SOF0 / SOF1
            if data[seg_start] != 8:
                raise JpegParseError("only 8-bit precision supported", offset=seg_start)
            height = _u16(data, seg_start + 1)
            width = _u16(data, seg_start + 3)
            ncomp = data[seg_start + 5]
            if height == 0 or width == 0:
                raise JpegParseError("zero image dimension", offset=seg_start + 1)
            if not 1 <= ncomp <= 3:
                raise JpegParseError(
                    "unsupported component count %d" % ncomp, offset=seg_start + 5
                )
            components = []
            p = seg_start + 6
            for _ in range(ncomp):
                cid, hv, tq = data[p], data[p + 1], data[p + 2]
                h, v = hv >> 4, hv & 15
                if h not in (1, 2) or v not in (1, 2):
                    raise JpegParseError(
                        "sampling factors %dx%d unsupported" % (h, v), offset=p + 1
                    )
                components.append(_Component(cid, h, v, tq))
                p += 3
            pos = seg_end
        elif marker in (0xC2, 0xC3, 0xC5, 0xC6, 0xC7, 0xC9, 0xCA, 0xCB, 0xCD, 0xCE, 0xCF):
            raise JpegParseError(
                "unsupported SOF marker 0x%02x (baseline sequential only)" % marker,
                offset=marker_pos,
            )
        elif marker == 0xDD:  # DRI
            restart_interval = _u16(data, seg_start)
            pos = seg_end
        elif marker == 0xDA:  # SOS
            if not components:
                raise JpegParseError("SOS before SOF", offset=marker_pos)
            ns = data[seg_start]
            if ns != len(components):
                raise JpegParseError("partial scans unsupported", offset=seg_start)
            by_id = {c.cid: c for c in components}
            p = seg_start + 1
            for _ in range(ns):
                cid, tt = data[p], data[p + 1]
                if cid not in by_id:
                    raise JpegParseError("scan references unknown component", offset=p)
                comp = by_id[cid]
                comp.dc_table = (0, tt >> 4)
                comp.ac_table = (1, tt & 15)
                p += 2
            pos = _decode_scan(
                data, seg_end, components, qtables, htables, height, width,
                restart_interval,
            )
            scan_done = True
        else:
            raise JpegParseError(
                "unsupported marker 0x%02x" % marker, offset=marker_pos
            )

    return _reconstruct(components, qtables, height, width)


def _split_entropy(data, start):
    """Destuffed entropy segments from `start` up to the next real marker.

    Returns (segments, end_pos) where each segment is (bytes, base_offset)
    and end_pos points at the 0xFF of the terminating marker.  Only 0xFF
    bytes are visited individually; runs between them are bulk slices.
    """
    n = len(data)
    arr = np.frombuffer(data, dtype=np.uint8)
    ff_positions = np.nonzero(arr[start:] == 0xFF)[0] + start
    segments = []
    pieces = []
    seg_base = start
    cur = start
    for p in ff_positions:
        p = int(p)
        if p < cur:
            continue
        if p + 1 >= n:
            raise JpegParseError("entropy data not terminated", offset=p)
        nxt = data[p + 1]
        if nxt == 0x00:
            pieces.append(data[cur : p + 1])  # stuffed: keep FF, drop 00
            cur = p + 2
        elif _RST0 <= nxt <= _RST7:
            pieces.append(data[cur:p])
            segments.append((b"".join(pieces), seg_base))
            pieces = []
            cur = p + 2
            seg_base = cur
        else:
            pieces.append(data[cur:p])
            segments.append((b"".join(pieces), seg_base))
            return segments, p
    raise JpegParseError("entropy data not terminated", offset=n)


def _decode_scan(data, start, components, qtables, htables, height, width,
                 restart_interval):
    h_max = max(c.h for c in components)
    v_max = max(c.v for c in components)
    if len(components) == 1:
        # single-component scans are laid out on that component's own grid
        components[0].h = components[0].v = h_max = v_max = 1
    mcu_w = 8 * h_max
    mcu_h = 8 * v_max
    mcus_x = -(-width // mcu_w)
    mcus_y = -(-height // mcu_h)
    n_mcu = mcus_x * mcus_y

    for c in components:
        bh = mcus_x * c.h
        bv = mcus_y * c.v
        c.grid = (bv, bh)
        c.blocks = np.zeros((bv * bh, 64), dtype=np.float64)
        if c.dc_table not in htables or c.ac_table not in htables:
            raise JpegParseError("scan references missing huffman table", offset=start)
        if c.tq not in qtables:
            raise JpegParseError("scan references missing quantization table", offset=start)

    segments, end_pos = _split_entropy(data, start)
    seg_iter = iter(segments)
    seg_bytes, seg_base = next(seg_iter)
    reader = _BitReader(seg_bytes, seg_base)
    preds = {c.cid: 0 for c in components}

    mcu_index = 0
    for my in range(mcus_y):
        for mx in range(mcus_x):
            if restart_interval and mcu_index and mcu_index % restart_interval == 0:
                try:
                    seg_bytes, seg_base = next(seg_iter)
                except StopIteration:
                    raise JpegParseError(
                        "missing restart marker", offset=reader.offset()
                    ) from None
                reader = _BitReader(seg_bytes, seg_base)
                preds = {c.cid: 0 for c in components}
            for c in components:
                dc_tab = htables[c.dc_table]
                ac_tab = htables[c.ac_table]
                for by in range(c.v):
                    for bx in range(c.h):
                        row = my * c.v + by
                        col = mx * c.h + bx
                        block = c.blocks[row * c.grid[1] + col]
                        preds[c.cid] = _decode_block(
                            reader, dc_tab, ac_tab, preds[c.cid], block
                        )
            mcu_index += 1
    return end_pos


def _decode_block(reader, dc_tab, ac_tab, pred, block):
    s = reader.peek16()
    n = dc_tab.len[s]
    if n == 0:
        raise JpegParseError("invalid huffman code", offset=reader.offset())
    cat = dc_tab.sym[s]
    reader.pos += n
    if reader.pos > reader.nbits:
        raise JpegParseError("entropy data exhausted", offset=reader.offset())
    diff = _extend(reader.read(cat), cat) if cat else 0
    pred += diff
    block[0] = pred

    k = 1
    z2n = _Z2N
    while k < 64:
        s = reader.peek16()
        n = ac_tab.len[s]
        if n == 0:
            raise JpegParseError("invalid huffman code", offset=reader.offset())
        sym = ac_tab.sym[s]
        reader.pos += n
        if reader.pos > reader.nbits:
            raise JpegParseError("entropy data exhausted", offset=reader.offset())
        run = sym >> 4
        size = sym & 15
        if size == 0:
            if run == 15:
                k += 16
                continue
            break  # end of block
        k += run
        if k > 63:
            raise JpegParseError("coefficient index out of range", offset=reader.offset())
        block[z2n[k]] = _extend(reader.read(size), size)
        k += 1
    return pred


def _reconstruct(components, qtables, height, width):
    h_max = max(c.h for c in components)
    v_max = max(c.v for c in components)
    planes = []
    for c in components:
        q = qtables[c.tq].astype(np.float64)
        rec = idctn(
            (c.blocks * q).reshape(-1, 8, 8), axes=(1, 2), norm="ortho"
        ) + 128.0
        bv, bh = c.grid
        plane = (
            rec.reshape(bv, bh, 8, 8).transpose(0, 2, 1, 3).reshape(bv * 8, bh * 8)
        )
        comp_h = -(-height * c.v // v_max)
        comp_w = -(-width * c.h // h_max)
        plane = plane[:comp_h, :comp_w]
        if c.v != v_max or c.h != h_max:
            plane = np.repeat(np.repeat(plane, v_max // c.v, axis=0), h_max // c.h, axis=1)
        planes.append(plane[:height, :width])

    if len(planes) == 1:
        gray = np.clip(np.rint(planes[0]), 0, 255).astype(np.uint8)
        return RasterImage(gray, "gray")
    if len(planes) == 2:
        raise JpegParseError("two-component images unsupported", offset=0)
    rgb = ycbcr_to_rgb(planes[0], planes[1], planes[2])
    return RasterImage(rgb, "rgb")


def read_quant_tables(data):
    """Extract quantization tables from a JPEG stream without full decode.

    Returns a dict mapping table id to a (64,) int array in natural order.
    """
    if isinstance(data, (bytearray, memoryview)):
        data = bytes(data)
    if len(data) < 4 or data[0] != 0xFF or data[1] != 0xD8:
        raise JpegParseError("missing SOI marker", offset=0)
    tables = {}
    pos = 2
    while pos + 1 < len(data):
        if data[pos] != 0xFF:
            raise JpegParseError("expected marker, got 0x%02x" % data[pos], offset=pos)
        while pos < len(data) and data[pos] == 0xFF:
            pos += 1
        if pos >= len(data):
            break
        marker = data[pos]
        pos += 1
        if marker in (0xD8, 0xD9, 0x01) or _RST0 <= marker <= _RST7:
            if marker == 0xD9:
                break
            continue
        length = _u16(data, pos)
        if marker == 0xDB:
            p = pos + 2
            seg_end = pos + length
            while p < seg_end:
                tq = data[p] & 15
                if data[p] >> 4 != 0:
                    raise JpegParseError("16-bit quantization tables unsupported", offset=p)
                table = np.zeros(64, dtype=np.int64)
                table[_Z2N] = np.frombuffer(data, dtype=np.uint8, count=64, offset=p + 1)
                tables[tq] = table
                p += 65
        elif marker == 0xDA:
            break
        pos += length
    return tables
