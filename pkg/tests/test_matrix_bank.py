import numpy as np
import pytest

from cascs import (
    FormatError,
    GeneratingMatrix,
    load_matrix,
    orthogonality_report,
    row_slice,
    save_matrix,
    svd_init,
    truncate,
    vectorize_blocks,
)


def test_vectorize_blocks_column_major_order():
    # entry (row, col) of a block lands at position col*B + row
    block = np.array([[1.0, 3.0], [2.0, 4.0]])
    cols = vectorize_blocks(block)
    assert cols.shape == (4, 1)
    assert np.array_equal(cols[:, 0], [1.0, 2.0, 3.0, 4.0])


def test_vectorize_blocks_stack():
    rng = np.random.default_rng(0)
    blocks = rng.normal(size=(5, 3, 3))
    cols = vectorize_blocks(blocks)
    assert cols.shape == (9, 5)
    for i in range(5):
        assert np.array_equal(cols[:, i], blocks[i].T.reshape(-1))


def test_vectorize_blocks_rejects_rectangles():
    with pytest.raises(ValueError):
        vectorize_blocks(np.zeros((4, 2, 3)))


def test_generating_matrix_validation():
    with pytest.raises(ValueError):
        GeneratingMatrix(np.zeros((4, 5)), 2)
    with pytest.raises(ValueError):
        GeneratingMatrix(np.zeros((5, 5)), 2)
    with pytest.raises(ValueError):
        GeneratingMatrix(np.full((4, 4), np.nan), 2)


def test_svd_init_rows_orthonormal():
    rng = np.random.default_rng(3)
    bank = svd_init(rng.normal(size=(24, 4, 4)))
    gram = bank.rows @ bank.rows.T
    assert np.max(np.abs(gram - np.eye(16))) < 1e-10
    assert bank.n == 16
    assert bank.block_size == 4


def test_svd_init_accepts_vectorized_columns():
    rng = np.random.default_rng(4)
    blocks = rng.normal(size=(20, 4, 4))
    a = svd_init(blocks)
    b = svd_init(vectorize_blocks(blocks), block_size=4)
    assert np.allclose(np.abs(a.rows), np.abs(b.rows))


def test_svd_init_truncation_error_matches_tail_energy():
    # the first q rows must give the best possible rank-q projection
    rng = np.random.default_rng(5)
    data = rng.normal(size=(16, 48))
    bank = svd_init(data, block_size=4)
    sigma = np.linalg.svd(data, compute_uv=False)
    for q in range(17):
        part = truncate(bank, q)
        err = np.linalg.norm(part.T @ (part @ data) - data, "fro") ** 2
        tail = float(np.sum(sigma[q:] ** 2))
        assert abs(err - tail) <= 1e-8 * max(tail, 1.0)


def test_svd_init_gram_path_spans_same_subspaces():
    # past the cutoff the bank comes from the Gram eigendecomposition;
    # subspaces must match the direct SVD path on the same data
    import cascs.matrix_bank as mb

    rng = np.random.default_rng(6)
    data = rng.normal(size=(4, 24))
    direct = svd_init(data, block_size=2)
    old = mb._GRAM_CUTOFF
    mb._GRAM_CUTOFF = 8
    try:
        gram = svd_init(data, block_size=2)
    finally:
        mb._GRAM_CUTOFF = old
    for q in range(1, 5):
        pd = truncate(direct, q)
        pg = truncate(gram, q)
        ed = np.linalg.norm(pd.T @ (pd @ data) - data)
        eg = np.linalg.norm(pg.T @ (pg @ data) - data)
        assert abs(ed - eg) < 1e-9


def test_svd_init_needs_enough_blocks():
    with pytest.raises(ValueError):
        svd_init(np.zeros((3, 2, 2)))


def test_truncate_bounds():
    bank = GeneratingMatrix(np.eye(4), 2)
    assert truncate(bank, 0).shape == (0, 4)
    assert truncate(bank, 4).shape == (4, 4)
    with pytest.raises(ValueError):
        truncate(bank, 5)
    with pytest.raises(ValueError):
        truncate(bank, -1)


def test_row_slice_one_based_inclusive():
    bank = GeneratingMatrix(np.diag([1.0, 2.0, 3.0, 4.0]), 2)
    part = row_slice(bank, 2, 3)
    assert np.array_equal(np.diag(part, k=-1)[:0], [])
    assert part.shape == (2, 4)
    assert part[0, 1] == 2.0 and part[1, 2] == 3.0
    # empty residual slice: first = last + 1
    assert row_slice(bank, 3, 2).shape == (0, 4)
    with pytest.raises(ValueError):
        row_slice(bank, 0, 2)
    with pytest.raises(ValueError):
        row_slice(bank, 2, 5)


def test_save_load_roundtrip_f64(tmp_path, bank4):
    path = str(tmp_path / "bank.casm")
    save_matrix(bank4, path)
    again = load_matrix(path)
    assert np.array_equal(again.rows, bank4.rows)
    assert again.block_size == bank4.block_size
    assert again.content_hash() == bank4.content_hash()


def test_save_load_roundtrip_f32(tmp_path, bank4):
    path = str(tmp_path / "bank32.casm")
    save_matrix(bank4, path, precision=32)
    again = load_matrix(path)
    expected = bank4.rows.astype(np.float32).astype(np.float64)
    assert np.array_equal(again.rows, expected)


def test_load_rejects_bad_magic(tmp_path):
    path = str(tmp_path / "bad.casm")
    with open(path, "wb") as fh:
        fh.write(b"NOPE" + b"\0" * 32)
    with pytest.raises(FormatError):
        load_matrix(path)


def test_load_rejects_truncated_payload(tmp_path, bank4):
    path = str(tmp_path / "cut.casm")
    save_matrix(bank4, path)
    with open(path, "rb") as fh:
        blob = fh.read()
    with open(path, "wb") as fh:
        fh.write(blob[:-8])
    with pytest.raises(FormatError):
        load_matrix(path)


def test_load_rejects_bad_version(tmp_path, bank4):
    path = str(tmp_path / "ver.casm")
    save_matrix(bank4, path)
    with open(path, "rb") as fh:
        blob = bytearray(fh.read())
    blob[4] = 99
    with open(path, "wb") as fh:
        fh.write(bytes(blob))
    with pytest.raises(FormatError):
        load_matrix(path)


def test_content_hash_tracks_payload(bank4):
    twin = GeneratingMatrix(bank4.rows.copy(), bank4.block_size)
    assert twin.content_hash() == bank4.content_hash()
    rows = bank4.rows.copy()
    rows[0, 0] += 1e-9
    other = GeneratingMatrix(rows, bank4.block_size)
    assert other.content_hash() != bank4.content_hash()


def test_orthogonality_report_on_orthonormal_bank(bank4):
    diag = orthogonality_report(bank4)
    assert abs(diag.eta - 1.0) < 1e-12
    assert diag.max_offdiag < 1e-12
    doc = diag.to_dict()
    assert set(doc) == {"eta", "max_offdiag", "row_near_zero",
                        "hist_counts", "hist_edges"}
    assert len(doc["hist_counts"]) == 64


def test_orthogonality_report_flags_scaled_rows():
    bank = GeneratingMatrix(np.eye(4) * 2.0, 2)
    diag = orthogonality_report(bank)
    assert abs(diag.eta - 4.0) < 1e-12
