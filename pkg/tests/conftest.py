import numpy as np
import pytest

from cascs import GeneratingMatrix, svd_init, unfold

# Orthonormal 4x4 bank with simple rational entries; every dot product
# against small integer blocks is exact in floating point, so expected
# measurement values can be written down by hand.
HADAMARD_ROWS = np.array([
    [0.5, 0.5, 0.5, 0.5],
    [0.5, 0.5, -0.5, -0.5],
    [0.5, -0.5, 0.5, -0.5],
    [0.5, -0.5, -0.5, 0.5],
])


@pytest.fixture(scope="session")
def hadamard_bank():
    return GeneratingMatrix(HADAMARD_ROWS.copy(), 2)


@pytest.fixture(scope="session")
def bank4():
    rng = np.random.default_rng(101)
    return svd_init(rng.normal(size=(16, 96)), block_size=4)


def textured_quadrant(size=60, corner=0, freq=2.1, amp=0.35, seed=0):
    """Flat gray canvas with one high-frequency textured quadrant."""
    rng = np.random.default_rng(seed)
    img = np.full((size, size), 0.5)
    h = size // 2
    yy, xx = np.mgrid[0:h, 0:h]
    tex = 0.5 + amp * np.sin(freq * xx) * np.cos(1.3 * freq * yy)
    tex += 0.05 * rng.standard_normal((h, h))
    sl = {
        0: (slice(0, h), slice(0, h)),
        1: (slice(0, h), slice(h, None)),
        2: (slice(h, None), slice(0, h)),
        3: (slice(h, None), slice(h, None)),
    }[corner]
    img[sl] = tex
    return np.clip(img, 0.0, 1.0)


@pytest.fixture(scope="session")
def bank10():
    """Block size 10 (N=100) bank trained on the textured-quadrant family."""
    patches = []
    for s in range(8):
        im = textured_quadrant(60, corner=s % 4, freq=1.7 + 0.3 * s, seed=100 + s)
        patches.append(unfold(im, 10).data)
    return svd_init(np.concatenate(patches, axis=1), block_size=10)


@pytest.fixture(scope="session")
def quadrant_suite():
    return [
        textured_quadrant(60, corner=c, freq=f, seed=10 * c + int(f * 10))
        for c in range(4)
        for f in (1.9, 2.6)
    ]
