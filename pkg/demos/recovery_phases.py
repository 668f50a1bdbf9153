"""Reconstruction quality versus phase count and sampling ratio.

Trains a small generating matrix on synthetic patches, samples a test
image uniformly at several ratios, and reconstructs with a growing
number of proximal-gradient phases.
"""

import numpy as np

from cascs import (
    RecoveryConfig,
    parse_prox,
    psnr,
    reconstruct,
    sample_blocks,
    ssim,
    svd_init,
    unfold,
)


def textured(size, freq, seed):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size]
    img = 0.5 + 0.3 * np.sin(freq * xx / 7.0) * np.cos(freq * yy / 5.0)
    img += 0.04 * rng.standard_normal((size, size))
    return np.clip(img, 0.0, 1.0)


def main():
    block = 8
    n = block * block

    # a few training images of the same family, unfolded into columns
    data = np.concatenate(
        [unfold(textured(64, f, s), block).data for s, f in enumerate((3, 5, 8, 11))],
        axis=1,
    )
    bank = svd_init(data, block_size=block)
    image = textured(64, 6.5, seed=99)
    grid = unfold(image, block)

    # light threshold: phases refine detail at moderate and high ratios,
    # while at very low ratios the sparsity prior trades away a little PSNR
    prox = parse_prox("dct:lambda=0.005")

    print("ratio  q   phases=0  phases=4  phases=13       ssim@13")
    for ratio in (0.1, 0.25, 0.5):
        q = int(round(ratio * n))
        meas = sample_blocks(grid, bank, q)
        row = ["%.2f  %3d" % (ratio, q)]
        for phases in (0, 4, 13):
            cfg = RecoveryConfig(phases=phases, prox=prox)
            rec = reconstruct(meas, bank, config=cfg)
            row.append("%8.2f" % psnr(image, rec.image))
        row.append("%12.4f" % ssim(image, rec.image))
        print("  ".join(row))

    print("\nfidelity trace at ratio 0.25, 13 phases:")
    meas = sample_blocks(grid, bank, n // 4)
    rec = reconstruct(meas, bank, config=RecoveryConfig(phases=13, prox=prox))
    print("  " + "  ".join("%.3g" % f for f in rec.fidelity))


if __name__ == "__main__":
    main()
