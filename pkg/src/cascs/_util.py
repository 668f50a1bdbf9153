"""Small shared helpers."""

import os
import tempfile

import numpy as np


def round_half_away(x):
    """Round to nearest integer, halves away from zero.

    numpy.round ties to even, which breaks the correction-step analysis
    (a residual of exactly 1/2 must round to 1).  Works on scalars and
    arrays, returns floats.
    """
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def atomic_write_bytes(path, data):
    """Write a file via a temp sibling and rename, so readers never see a torn file."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp.", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))
