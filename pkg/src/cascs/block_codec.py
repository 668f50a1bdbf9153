"""Block layout, per-block sampling, and the measurement container.

Images are cut into non-overlapping B x B blocks (reflect-padded up to a
multiple of B), each block flattened column-major into a length-N vector.
Sampling a block with q coefficients multiplies it by the first q rows of
the generating matrix; residual sampling reuses rows q_b+1 .. q_i so the
two passes concatenate into exactly the rows a single pass would use.
"""

import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import FormatError
from .matrix_bank import GeneratingMatrix

MEAS_MAGIC = b"CASY"
MEAS_VERSION = 1
_HASH_BYTES = 16


@dataclass(frozen=True, eq=False)
class BlockGrid:
    """Vectorized blocks of one image.

    data has shape (N, l): column i is block i (row-major block order),
    flattened column-major within the block.  image_shape is the original
    size before padding.
    """

    data: np.ndarray
    block_size: int
    image_shape: tuple
    grid_shape: tuple

    @property
    def padded_shape(self):
        return (self.grid_shape[0] * self.block_size, self.grid_shape[1] * self.block_size)

    @property
    def cells(self):
        return self.grid_shape[0] * self.grid_shape[1]

    def with_data(self, data):
        data = np.asarray(data, dtype=np.float64)
        if data.shape != self.data.shape:
            raise ValueError("replacement data shape %r != %r" % (data.shape, self.data.shape))
        return replace(self, data=data)


def unfold(image, block_size):
    """Cut an image into vectorized B x B blocks, reflect-padding the edges."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("expected a 2-D image, got shape %r" % (img.shape,))
    b = int(block_size)
    if b < 1:
        raise ValueError("block_size must be positive")
    h, w = img.shape
    gh, gw = math.ceil(h / b), math.ceil(w / b)
    ph, pw = gh * b, gw * b
    if (ph - h) >= h or (pw - w) >= w:
        if ph != h or pw != w:
            raise ValueError(
                "image %dx%d too small to reflect-pad to %dx%d" % (h, w, ph, pw)
            )
    pad = np.pad(img, ((0, ph - h), (0, pw - w)), mode="reflect")
    data = pad.reshape(gh, b, gw, b).transpose(3, 1, 0, 2).reshape(b * b, gh * gw)
    return BlockGrid(np.ascontiguousarray(data), b, (h, w), (gh, gw))


def fold(grid, crop=True):
    """Reassemble the image from a BlockGrid; inverse of unfold."""
    b = grid.block_size
    gh, gw = grid.grid_shape
    img = grid.data.reshape(b, b, gh, gw).transpose(2, 1, 3, 0).reshape(gh * b, gw * b)
    if crop:
        h, w = grid.image_shape
        img = img[:h, :w]
    return np.ascontiguousarray(img)


@dataclass(frozen=True, eq=False)
class BlockMeasurementSet:
    """Per-block measurement vectors plus the rows of the bank that made them.

    vectors[i] holds the measurements of block i; row_ranges[i] = (start,
    stop) are 0-based row bounds into the generating matrix, so
    vectors[i] = rows[start:stop] @ block_i.
    """

    vectors: tuple
    row_ranges: np.ndarray
    block_size: int
    image_shape: tuple
    grid_shape: tuple
    matrix_hash: bytes

    def __post_init__(self):
        rr = np.ascontiguousarray(np.asarray(self.row_ranges, dtype=np.int64))
        object.__setattr__(self, "row_ranges", rr)
        object.__setattr__(self, "vectors", tuple(
            np.ascontiguousarray(np.asarray(v, dtype=np.float64)) for v in self.vectors
        ))
        l = self.grid_shape[0] * self.grid_shape[1]
        if len(self.vectors) != l or rr.shape != (l, 2):
            raise ValueError("measurement set inconsistent with grid %r" % (self.grid_shape,))
        n = self.block_size ** 2
        for i, v in enumerate(self.vectors):
            start, stop = rr[i]
            if not (0 <= start <= stop <= n):
                raise ValueError("row range %r outside 0..%d" % ((start, stop), n))
            if v.ndim != 1 or len(v) != stop - start:
                raise ValueError(
                    "block %d has %d measurements for row range %r" % (i, len(v), (start, stop))
                )

    @property
    def cells(self):
        return len(self.vectors)

    def counts(self):
        return self.row_ranges[:, 1] - self.row_ranges[:, 0]

    def total_measurements(self):
        return int(self.counts().sum())


def _as_size_grid(sizes, grid_shape, n):
    if np.isscalar(sizes):
        g = np.full(grid_shape, int(sizes), dtype=np.int64)
    elif hasattr(sizes, "grid"):
        g = np.asarray(sizes.grid, dtype=np.int64)
    else:
        g = np.asarray(sizes, dtype=np.int64)
    if g.shape != grid_shape:
        raise ValueError("size grid shape %r != block grid %r" % (g.shape, grid_shape))
    if np.any(g < 0) or np.any(g > n):
        raise ValueError("measurement sizes outside [0, %d]" % n)
    return g


def _grouped_ranges(starts, stops):
    groups = {}
    for i, (a, b) in enumerate(zip(starts, stops)):
        groups.setdefault((int(a), int(b)), []).append(i)
    return groups


def _measure(grid, bank, starts, stops):
    data = grid.data
    vectors = [None] * grid.cells
    for (a, b), idx in _grouped_ranges(starts, stops).items():
        cols = np.asarray(idx)
        if b > a:
            block_y = bank.rows[a:b] @ data[:, cols]
        else:
            block_y = np.zeros((0, len(cols)))
        for j, i in enumerate(idx):
            vectors[i] = block_y[:, j]
    return vectors


def _check_bank(grid, bank):
    if not isinstance(bank, GeneratingMatrix):
        raise TypeError("expected a GeneratingMatrix")
    if bank.block_size != grid.block_size:
        raise ValueError(
            "bank block size %d != grid block size %d" % (bank.block_size, grid.block_size)
        )


def sample_blocks(grid, bank, sizes):
    """Measure every block with the first q_i rows of the bank."""
    _check_bank(grid, bank)
    szg = _as_size_grid(sizes, grid.grid_shape, bank.n)
    stops = szg.ravel()
    starts = np.zeros_like(stops)
    vectors = _measure(grid, bank, starts, stops)
    return BlockMeasurementSet(
        tuple(vectors),
        np.stack([starts, stops], axis=1),
        grid.block_size,
        grid.image_shape,
        grid.grid_shape,
        bank.content_hash()[:_HASH_BYTES],
    )


def residual_sample_blocks(grid, bank, q_basic, sizes):
    """Measure rows q_basic+1 .. q_i of each block, on top of a basic pass.

    sizes holds the full target size q_i per block and must be >= q_basic
    everywhere; blocks with q_i == q_basic get empty vectors.
    """
    _check_bank(grid, bank)
    q_basic = int(q_basic)
    if not 0 <= q_basic <= bank.n:
        raise ValueError("q_basic=%d outside [0, %d]" % (q_basic, bank.n))
    szg = _as_size_grid(sizes, grid.grid_shape, bank.n)
    if np.any(szg < q_basic):
        raise ValueError("size grid has entries below the basic size %d" % q_basic)
    stops = szg.ravel()
    starts = np.full_like(stops, q_basic)
    vectors = _measure(grid, bank, starts, stops)
    return BlockMeasurementSet(
        tuple(vectors),
        np.stack([starts, stops], axis=1),
        grid.block_size,
        grid.image_shape,
        grid.grid_shape,
        bank.content_hash()[:_HASH_BYTES],
    )


def concat_measurements(basic, residual):
    """Join a basic and a residual pass into one contiguous measurement set."""
    if basic.grid_shape != residual.grid_shape or basic.block_size != residual.block_size:
        raise ValueError("measurement sets cover different block grids")
    if basic.image_shape != residual.image_shape:
        raise ValueError("measurement sets cover different images")
    if basic.matrix_hash != residual.matrix_hash:
        raise ValueError("measurement sets come from different banks")
    vectors = []
    ranges = []
    for i in range(basic.cells):
        a0, a1 = basic.row_ranges[i]
        b0, b1 = residual.row_ranges[i]
        if a1 != b0:
            raise ValueError(
                "block %d: basic rows end at %d but residual rows start at %d" % (i, a1, b0)
            )
        vectors.append(np.concatenate([basic.vectors[i], residual.vectors[i]]))
        ranges.append((a0, b1))
    return BlockMeasurementSet(
        tuple(vectors),
        np.asarray(ranges, dtype=np.int64),
        basic.block_size,
        basic.image_shape,
        basic.grid_shape,
        basic.matrix_hash,
    )


def transpose_initialize(meas, bank, crop=True):
    """Back-project measurements: x0_i = rows_used^T @ y_i, folded to an image.

    Linear in the measurements, so initializing a basic and a residual set
    separately and adding the images equals initializing their
    concatenation.
    """
    if bank.block_size != meas.block_size:
        raise ValueError("bank block size does not match the measurement set")
    if meas.matrix_hash != bank.content_hash()[:_HASH_BYTES]:
        raise FormatError("measurements were produced by a different bank")
    n = bank.n
    out = np.zeros((n, meas.cells))
    rr = meas.row_ranges
    for (a, b), idx in _grouped_ranges(rr[:, 0], rr[:, 1]).items():
        if b == a:
            continue
        cols = np.asarray(idx)
        yg = np.stack([meas.vectors[i] for i in idx], axis=1)
        out[:, cols] = bank.rows[a:b].T @ yg
    grid = BlockGrid(out, meas.block_size, meas.image_shape, meas.grid_shape)
    return fold(grid, crop=crop)


def measurements_to_bytes(meas):
    """Serialize to the measurement wire format.

    Layout: magic "CASY", u32 version, u32 H, u32 W, u32 B, u32
    row_start, 16-byte bank hash, then per block in row-major order a u16
    count followed by count little-endian float32 values.  All blocks
    must share one starting row (0 for full sets, q_b for residual sets).
    """
    starts = meas.row_ranges[:, 0]
    row_start = int(starts[0]) if len(starts) else 0
    if np.any(starts != row_start):
        raise ValueError("cannot serialize a set with mixed starting rows")
    h, w = meas.image_shape
    head = MEAS_MAGIC + struct.pack("<IIIII", MEAS_VERSION, h, w, meas.block_size, row_start)
    head += meas.matrix_hash
    parts = [head]
    for v in meas.vectors:
        if len(v) > 0xFFFF:
            raise ValueError("per-block measurement count exceeds the u16 field")
        parts.append(struct.pack("<H", len(v)))
        parts.append(v.astype("<f4", copy=False).tobytes())
    return b"".join(parts)


def measurements_from_bytes(blob):
    """Parse the measurement wire format back into a BlockMeasurementSet."""
    head = 4 + 20 + _HASH_BYTES
    if len(blob) < head:
        raise FormatError("measurement blob truncated before header end")
    if blob[:4] != MEAS_MAGIC:
        raise FormatError("bad magic %r, expected %r" % (blob[:4], MEAS_MAGIC))
    version, h, w, b, row_start = struct.unpack("<IIIII", blob[4:24])
    if version != MEAS_VERSION:
        raise FormatError("unsupported measurement format version %d" % version)
    if b < 1 or h < 1 or w < 1:
        raise FormatError("invalid geometry %dx%d block %d" % (h, w, b))
    mhash = blob[24:24 + _HASH_BYTES]
    n = b * b
    if not 0 <= row_start <= n:
        raise FormatError("row_start %d outside 0..%d" % (row_start, n))
    gh, gw = math.ceil(h / b), math.ceil(w / b)
    cells = gh * gw
    vectors = []
    ranges = []
    pos = head
    for i in range(cells):
        if pos + 2 > len(blob):
            raise FormatError("measurement blob truncated in block %d" % i)
        (count,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        if row_start + count > n:
            raise FormatError("block %d count %d overruns the bank" % (i, count))
        end = pos + 4 * count
        if end > len(blob):
            raise FormatError("measurement blob truncated in block %d payload" % i)
        v = np.frombuffer(blob[pos:end], dtype="<f4").astype(np.float64)
        pos = end
        vectors.append(v)
        ranges.append((row_start, row_start + count))
    if pos != len(blob):
        raise FormatError("%d trailing bytes after last block" % (len(blob) - pos))
    return BlockMeasurementSet(
        tuple(vectors), np.asarray(ranges, dtype=np.int64), b, (h, w), (gh, gw), mhash
    )


def save_measurements(meas, path):
    from ._util import atomic_write_bytes

    atomic_write_bytes(path, measurements_to_bytes(meas))


def load_measurements(path):
    with open(path, "rb") as fh:
        return measurements_from_bytes(fh.read())
