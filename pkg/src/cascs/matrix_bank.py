"""Ordered bank of sampling rows shared by every measurement ratio.

A single N x N generating matrix stores the sampling operators for all
ratios at once: the operator for a block measured with q coefficients is
simply the first q rows.  Rows are ordered by decreasing importance, so
truncation is optimal when the bank comes from the SVD of representative
image blocks (Eckart-Young-Mirsky).
"""

import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np

from ._util import atomic_write_bytes
from .errors import FormatError

MATRIX_MAGIC = b"CASM"
MATRIX_VERSION = 1

# above this many data columns svd_init switches to the Gram-matrix path
_GRAM_CUTOFF = 4096
_GRAM_CHUNK = 8192


@dataclass(frozen=True, eq=False)
class GeneratingMatrix:
    """N x N ordered bank of sampling rows for one block size.

    Attributes
    ----------
    rows : ndarray
        (N, N) float64 array.  Row k (0-based) is the k-th most important
        sampling vector; the operator at measurement size q is rows[:q].
    block_size : int
        Side length B of the square blocks, with N = B * B.
    """

    rows: np.ndarray
    block_size: int

    def __post_init__(self):
        rows = np.ascontiguousarray(np.asarray(self.rows, dtype=np.float64))
        object.__setattr__(self, "rows", rows)
        if rows.ndim != 2 or rows.shape[0] != rows.shape[1]:
            raise ValueError("generating matrix must be square, got %r" % (rows.shape,))
        if self.block_size < 1 or self.block_size ** 2 != rows.shape[0]:
            raise ValueError(
                "row count %d is not block_size**2 (block_size=%d)"
                % (rows.shape[0], self.block_size)
            )
        if not np.all(np.isfinite(rows)):
            raise ValueError("generating matrix has non-finite entries")
        object.__setattr__(self, "_hash_cache", None)

    @property
    def n(self):
        return self.rows.shape[0]

    def content_hash(self):
        """SHA-256 over (u32 N, row-major float64 payload); identifies the bank."""
        cached = getattr(self, "_hash_cache", None)
        if cached is None:
            h = hashlib.sha256()
            h.update(struct.pack("<I", self.n))
            h.update(self.rows.astype("<f8", copy=False).tobytes())
            cached = h.digest()
            object.__setattr__(self, "_hash_cache", cached)
        return cached


def vectorize_blocks(blocks):
    """Stack B x B blocks as columns of an N x m matrix.

    Each block is flattened column-major, the same convention the block
    codec uses, so a bank trained here acts on codec output directly.
    """
    blocks = np.asarray(blocks, dtype=np.float64)
    if blocks.ndim == 2:
        blocks = blocks[None]
    if blocks.ndim != 3 or blocks.shape[1] != blocks.shape[2]:
        raise ValueError("expected (m, B, B) block stack, got %r" % (blocks.shape,))
    m, b, _ = blocks.shape
    # column-major within each block: entry (r, c) lands at position c*B + r
    return blocks.transpose(2, 1, 0).reshape(b * b, m)


def svd_init(blocks, block_size=None):
    """Build a bank from representative blocks via the SVD.

    Parameters
    ----------
    blocks : array_like
        Either an (m, B, B) stack of square training blocks, or an
        (N, m) matrix whose columns are blocks already vectorized the
        way the block codec emits them.  Needs m >= N = B * B.
    block_size : int, optional
        Expected B; validated against the data when given, required
        for (N, m) input only when N has several square roots (never).

    Returns
    -------
    GeneratingMatrix
        rows = U^T where blocks-as-columns D = U S V^T with singular
        values sorted descending.  Truncating to q rows then gives the
        best rank-q row space for the training data.
    """
    blocks = np.asarray(blocks, dtype=np.float64)
    if blocks.ndim == 3:
        if blocks.shape[1] != blocks.shape[2]:
            raise ValueError("expected square blocks, got %r" % (blocks.shape,))
        b = blocks.shape[1]
        if block_size is not None and block_size != b:
            raise ValueError("blocks are %dx%d but block_size=%d"
                             % (b, b, block_size))
        d = vectorize_blocks(blocks)
    elif blocks.ndim == 2:
        b = int(math.isqrt(blocks.shape[0])) if block_size is None else block_size
        if b * b != blocks.shape[0]:
            raise ValueError("column length %d is not a square block size"
                             % blocks.shape[0])
        d = blocks
    else:
        raise ValueError("expected (m, B, B) blocks or (N, m) columns, got %r"
                         % (blocks.shape,))
    n = b * b
    m = d.shape[1]
    if m < n:
        raise ValueError("need at least N=%d training blocks, got %d" % (n, m))
    if m <= _GRAM_CUTOFF:
        u, _, _ = np.linalg.svd(d, full_matrices=False)
    else:
        # accumulate D D^T in chunks; eigh ascending -> reverse for descending
        g = np.zeros((n, n))
        for lo in range(0, m, _GRAM_CHUNK):
            dc = d[:, lo:lo + _GRAM_CHUNK]
            g += dc @ dc.T
        _, vecs = np.linalg.eigh(g)
        u = vecs[:, ::-1]
    return GeneratingMatrix(u.T, b)


def truncate(bank, q):
    """First q rows of the bank: the sampling operator at measurement size q."""
    if not 0 <= q <= bank.n:
        raise ValueError("q=%d outside [0, %d]" % (q, bank.n))
    return bank.rows[:q]


def row_slice(bank, first, last):
    """Rows first..last of the bank, 1-based inclusive.

    first = last + 1 yields an empty slice; used for residual sampling
    where a block already measured with q_b rows receives rows
    q_b+1 .. q_i.
    """
    if not (1 <= first <= last + 1 <= bank.n + 1):
        raise ValueError(
            "row slice %d..%d outside 1..%d" % (first, last, bank.n)
        )
    return bank.rows[first - 1:last]


@dataclass(frozen=True, eq=False)
class MatrixDiagnostics:
    """Summary statistics from orthogonality_report."""

    eta: float
    max_offdiag: float
    row_near_zero: np.ndarray
    hist_counts: np.ndarray
    hist_edges: np.ndarray

    def to_dict(self):
        return {
            "eta": self.eta,
            "max_offdiag": self.max_offdiag,
            "row_near_zero": self.row_near_zero.tolist(),
            "hist_counts": self.hist_counts.tolist(),
            "hist_edges": self.hist_edges.tolist(),
        }


def orthogonality_report(bank, bins=64):
    """Measure how close the bank is to a scaled orthonormal basis.

    Returns eta (mean squared row norm), the largest off-diagonal of the
    eta-normalized Gram matrix, the per-row fraction of near-zero entries
    (below 1e-3 of the max absolute entry), and an entry histogram.
    """
    a = bank.rows
    gram = a @ a.T
    eta = float(np.mean(np.diag(gram)))
    if eta > 0:
        norm_gram = gram / eta
        off = norm_gram - np.diag(np.diag(norm_gram))
        max_offdiag = float(np.max(np.abs(off)))
    else:
        max_offdiag = 0.0
    peak = np.max(np.abs(a))
    thresh = 1e-3 * peak
    row_near_zero = np.mean(np.abs(a) < thresh, axis=1) if peak > 0 else np.ones(bank.n)
    counts, edges = np.histogram(a, bins=bins)
    return MatrixDiagnostics(eta, max_offdiag, row_near_zero, counts, edges)


def save_matrix(bank, path, precision=64):
    """Serialize to the binary matrix format.

    Layout: magic "CASM", u32 version, u32 N, u8 precision flag (4 for
    float32, 8 for float64), then the N*N row-major little-endian payload.
    Exactly N*N scalars are stored regardless of how many ratios the bank
    serves.
    """
    if precision not in (32, 64):
        raise ValueError("precision must be 32 or 64, got %r" % (precision,))
    width = precision // 8
    payload = bank.rows.astype("<f%d" % width, copy=False).tobytes()
    header = MATRIX_MAGIC + struct.pack("<IIB", MATRIX_VERSION, bank.n, width)
    atomic_write_bytes(path, header + payload)


def load_matrix(path):
    """Parse a binary matrix file back into a GeneratingMatrix."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 13:
        raise FormatError("matrix file truncated before header end")
    if blob[:4] != MATRIX_MAGIC:
        raise FormatError("bad magic %r, expected %r" % (blob[:4], MATRIX_MAGIC))
    version, n, width = struct.unpack("<IIB", blob[4:13])
    if version != MATRIX_VERSION:
        raise FormatError("unsupported matrix format version %d" % version)
    if width not in (4, 8):
        raise FormatError("bad precision flag %d (expected 4 or 8)" % width)
    b = int(round(n ** 0.5))
    if b * b != n:
        raise FormatError("stored N=%d is not a perfect square" % n)
    payload = blob[13:]
    if len(payload) != n * n * width:
        raise FormatError(
            "payload is %d bytes, expected %d" % (len(payload), n * n * width)
        )
    rows = np.frombuffer(payload, dtype="<f%d" % width).reshape(n, n)
    return GeneratingMatrix(rows.astype(np.float64), b)
