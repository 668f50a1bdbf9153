import os

import numpy as np
import pytest

from cascs._util import atomic_write_bytes, atomic_write_text, round_half_away


def test_round_half_away_table():
    cases = {
        0.0: 0.0, 0.4: 0.0, 0.5: 1.0, 0.6: 1.0,
        1.5: 2.0, 2.5: 3.0, 3.49: 3.0,
        -0.4: 0.0, -0.5: -1.0, -1.5: -2.0, -2.5: -3.0,
    }
    for x, want in cases.items():
        assert round_half_away(x) == want, "round(%r)" % x


def test_round_half_away_differs_from_bankers():
    # numpy rounds half to even; 2.5 is where the two conventions split
    assert round_half_away(2.5) == 3.0
    assert np.round(2.5) == 2.0


def test_round_half_away_vectorized():
    x = np.array([[0.5, -0.5], [1.49, -1.5]])
    out = round_half_away(x)
    assert out.dtype == np.float64
    assert np.array_equal(out, [[1.0, -1.0], [1.0, -2.0]])


def test_atomic_write_bytes_replaces(tmp_path):
    path = str(tmp_path / "blob.bin")
    atomic_write_bytes(path, b"one")
    atomic_write_bytes(path, b"two")
    with open(path, "rb") as fh:
        assert fh.read() == b"two"
    # no stray temp files left behind
    assert os.listdir(str(tmp_path)) == ["blob.bin"]


def test_atomic_write_text(tmp_path):
    path = str(tmp_path / "doc.txt")
    atomic_write_text(path, "hello\n")
    with open(path, "r", encoding="utf-8") as fh:
        assert fh.read() == "hello\n"


def test_atomic_write_missing_directory(tmp_path):
    with pytest.raises(OSError):
        atomic_write_bytes(str(tmp_path / "nope" / "x.bin"), b"data")
