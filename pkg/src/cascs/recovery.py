"""Proximal-gradient reconstruction from block measurements.

Each phase runs one gradient step on the block-wise data-fidelity term
followed by a pluggable proximal stage that returns an image-domain
residual.  The default proximal stage soft-thresholds 8x8 tile DCT
coefficients (DC excluded) with a threshold that shrinks as the local
measurement ratio grows, so fully sampled regions pass through untouched.
Optionally every phase is wrapped in a random symmetry of the square and
its inverse, which randomizes any orientation bias of the proximal stage.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .allocator import RatioMap, expand_ratio_map
from .block_codec import fold, transpose_initialize, unfold


class DihedralTransform:
    """One of the 8 symmetries of the square: k quarter turns, then an
    optional left-right flip.  Quarter turns (k odd) require square input."""

    def __init__(self, quarter_turns, flip):
        self.quarter_turns = int(quarter_turns) % 4
        self.flip = bool(flip)

    @classmethod
    def all_elements(cls):
        return tuple(cls(k, f) for f in (False, True) for k in range(4))

    @classmethod
    def shape_preserving(cls):
        return tuple(t for t in cls.all_elements() if t.quarter_turns % 2 == 0)

    @property
    def name(self):
        base = "rot%d" % (self.quarter_turns * 90)
        return base + "+flip" if self.flip else base

    def _check(self, x):
        if self.quarter_turns % 2 and x.shape[0] != x.shape[1]:
            raise ValueError(
                "quarter-turn transform needs a square array, got %r" % (x.shape,)
            )

    def apply(self, x):
        x = np.asarray(x)
        self._check(x)
        y = np.rot90(x, self.quarter_turns)
        return np.fliplr(y) if self.flip else y

    def invert(self, y):
        y = np.asarray(y)
        self._check(y)
        if self.flip:
            y = np.fliplr(y)
        return np.rot90(y, -self.quarter_turns)


def dihedral_wrap(phase_fn, transform):
    """Wrap phase_fn(z, ratio_pixels) in a transform and its inverse."""

    def wrapped(z, ratio_pixels):
        tz = transform.apply(z)
        tr = transform.apply(ratio_pixels)
        return transform.invert(np.asarray(phase_fn(tz, tr)))

    return wrapped


class ProximalOperator:
    """Interface for the proximal stage: image in, image-domain residual out."""

    def residual(self, z, ratio_pixels):
        raise NotImplementedError

    def spec(self):
        raise NotImplementedError


class ZeroResidual(ProximalOperator):
    """No-op proximal stage; phases reduce to pure gradient steps."""

    def residual(self, z, ratio_pixels):
        return np.zeros_like(np.asarray(z, dtype=np.float64))

    def spec(self):
        return "zero"


def _soft(c, lam):
    return np.sign(c) * np.maximum(np.abs(c) - lam, 0.0)


class TileDctSoftThreshold(ProximalOperator):
    """Soft-threshold tile DCT coefficients, sparing the DC term.

    The per-tile threshold is base_threshold * (1 - ratio) averaged over
    the tile, so heavily measured tiles are barely touched and a fully
    measured tile (ratio 1) passes through exactly.  This solves the
    proximal subproblem for an l1 prior on the orthonormal tile-DCT
    coefficients.
    """

    def __init__(self, base_threshold=0.02, tile=8):
        if base_threshold < 0:
            raise ValueError("base_threshold must be >= 0")
        if tile < 1:
            raise ValueError("tile must be >= 1")
        self.base_threshold = float(base_threshold)
        self.tile = int(tile)

    def spec(self):
        return "dct:lambda=%g,tile=%d" % (self.base_threshold, self.tile)

    def threshold_map(self, ratio_pixels):
        """Per-tile thresholds; non-increasing in the measurement ratio."""
        rp = np.asarray(ratio_pixels, dtype=np.float64)
        t = self.tile
        h, w = rp.shape
        th, tw = -(-h // t), -(-w // t)
        out = np.empty((th, tw))
        lam = self.base_threshold * (1.0 - rp)
        for i in range(th):
            for j in range(tw):
                out[i, j] = lam[i * t:(i + 1) * t, j * t:(j + 1) * t].mean()
        return out

    def residual(self, z, ratio_pixels):
        z = np.asarray(z, dtype=np.float64)
        rp = np.asarray(ratio_pixels, dtype=np.float64)
        if z.shape != rp.shape:
            raise ValueError("ratio map shape %r != image shape %r" % (rp.shape, z.shape))
        t = self.tile
        h, w = z.shape
        lam_tiles = self.threshold_map(rp)
        if h % t == 0 and w % t == 0:
            th, tw = h // t, w // t
            tiles = z.reshape(th, t, tw, t).transpose(0, 2, 1, 3)
            c = scipy.fft.dctn(tiles, axes=(2, 3), norm="ortho")
            dc = c[:, :, 0, 0].copy()
            c = _soft(c, lam_tiles[:, :, None, None])
            c[:, :, 0, 0] = dc
            den = scipy.fft.idctn(c, axes=(2, 3), norm="ortho")
            out = den.transpose(0, 2, 1, 3).reshape(h, w)
        else:
            # ragged edge tiles keep their true size
            out = np.empty_like(z)
            for i in range(lam_tiles.shape[0]):
                for j in range(lam_tiles.shape[1]):
                    sl = (slice(i * t, min((i + 1) * t, h)), slice(j * t, min((j + 1) * t, w)))
                    c = scipy.fft.dctn(z[sl], norm="ortho")
                    dc = c[0, 0]
                    c = _soft(c, lam_tiles[i, j])
                    c[0, 0] = dc
                    out[sl] = scipy.fft.idctn(c, norm="ortho")
        return out - z


def parse_prox(text):
    """Build a proximal operator from a CLI-style spec string.

    Formats: "zero" (aliases "none", "identity"), or
    "dct[:lambda=V][,tile=T]" with keys in any order.
    """
    head, _, tail = text.strip().partition(":")
    head = head.lower()
    if head in ("zero", "none", "identity"):
        if tail:
            raise ValueError("%r takes no parameters" % head)
        return ZeroResidual()
    if head != "dct":
        raise ValueError("unknown proximal operator %r" % text)
    kwargs = {}
    if tail:
        for item in tail.split(","):
            key, _, val = item.partition("=")
            key = key.strip()
            if not val:
                raise ValueError("bad proximal parameter %r" % item)
            if key == "lambda":
                kwargs["base_threshold"] = float(val)
            elif key == "tile":
                kwargs["tile"] = int(val)
            else:
                raise ValueError("unknown proximal parameter %r" % key)
    return TileDctSoftThreshold(**kwargs)


@dataclass(frozen=True, eq=False)
class RecoveryConfig:
    """Configuration of the phase loop.

    phases may be 0, in which case reconstruct returns the transpose
    initialization untouched.  step_size is a scalar or one value per
    phase, all positive.
    """

    phases: int = 13
    step_size: object = 1.0
    prox: ProximalOperator = field(default_factory=TileDctSoftThreshold)
    random_transforms: bool = False
    transform_seed: int = 0

    def __post_init__(self):
        if self.phases < 0:
            raise ValueError("phases must be >= 0")
        steps = self.resolved_steps()
        if np.any(steps <= 0):
            raise ValueError("step sizes must be positive")

    def resolved_steps(self):
        s = np.asarray(self.step_size, dtype=np.float64)
        if s.ndim == 0:
            return np.full(self.phases, float(s))
        if s.shape != (self.phases,):
            raise ValueError(
                "need one step size per phase (%d), got shape %r" % (self.phases, s.shape)
            )
        return s


def block_gradient_step(estimate, meas, bank, rho, crop=True):
    """One gradient step on the summed per-block data-fidelity term.

    Per block: z_i = x_i - rho * A_i^T (A_i x_i - y_i) with A_i the rows
    of the bank recorded in the measurement set.  Blocks without
    measurements pass through unchanged.  rho = 0 is allowed and returns
    the estimate (useful as an identity check).
    """
    if rho < 0:
        raise ValueError("rho must be >= 0")
    grid = unfold(estimate, meas.block_size)
    if grid.grid_shape != meas.grid_shape:
        raise ValueError(
            "estimate covers %r blocks but measurements cover %r"
            % (grid.grid_shape, meas.grid_shape)
        )
    data = grid.data.copy()
    rr = meas.row_ranges
    groups = {}
    for i, (a, b) in enumerate(zip(rr[:, 0], rr[:, 1])):
        groups.setdefault((int(a), int(b)), []).append(i)
    for (a, b), idx in groups.items():
        if b == a:
            continue
        cols = np.asarray(idx)
        rows = bank.rows[a:b]
        yg = np.stack([meas.vectors[i] for i in idx], axis=1)
        resid = rows @ data[:, cols] - yg
        data[:, cols] -= rho * (rows.T @ resid)
    return fold(grid.with_data(data), crop=crop)


def data_fidelity(estimate, meas, bank):
    """Sum over blocks of ||A_i x_i - y_i||^2 for the current estimate."""
    grid = unfold(estimate, meas.block_size)
    if grid.grid_shape != meas.grid_shape:
        raise ValueError("estimate and measurements cover different block grids")
    total = 0.0
    rr = meas.row_ranges
    for i in range(meas.cells):
        a, b = int(rr[i, 0]), int(rr[i, 1])
        if b == a:
            continue
        r = bank.rows[a:b] @ grid.data[:, i] - meas.vectors[i]
        total += float(r @ r)
    return total


def proximal_step(z, ratio_pixels, prox):
    """Apply the proximal stage: z plus its image-domain residual."""
    z = np.asarray(z, dtype=np.float64)
    res = np.asarray(prox.residual(z, ratio_pixels))
    if res.shape != z.shape:
        raise ValueError(
            "proximal residual shape %r does not match input %r" % (res.shape, z.shape)
        )
    if not np.all(np.isfinite(res)):
        raise ValueError("proximal residual has non-finite entries")
    return z + res


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    image: np.ndarray
    fidelity: np.ndarray
    transforms: tuple


def reconstruct(meas, bank, rmap=None, config=None, x0=None):
    """Run the full phase loop on one measurement set.

    Parameters
    ----------
    meas : BlockMeasurementSet
    bank : GeneratingMatrix
    rmap : RatioMap, optional
        Per-block measurement ratios steering the proximal thresholds.
        Derived from the measurement row ranges when omitted.
    config : RecoveryConfig, optional
    x0 : ndarray, optional
        Initial estimate on the padded canvas; defaults to the transpose
        initialization of meas.

    Returns
    -------
    ReconstructionResult
        Cropped image, data-fidelity after initialization and after each
        phase, and the names of any symmetry transforms applied.
    """
    config = config or RecoveryConfig()
    n = bank.n
    if rmap is None:
        stops = meas.row_ranges[:, 1].reshape(meas.grid_shape)
        budget = int(round(float(stops.mean())))
        rmap = RatioMap(stops / float(n), meas.block_size, budget, n)
    if rmap.grid.shape != meas.grid_shape:
        raise ValueError(
            "ratio map grid %r does not cover the %r block grid"
            % (rmap.grid.shape, meas.grid_shape)
        )
    if rmap.block_size != meas.block_size:
        raise ValueError("ratio map block size does not match the measurements")

    x = transpose_initialize(meas, bank, crop=False) if x0 is None else np.asarray(x0, dtype=np.float64)
    gh, gw = meas.grid_shape
    padded = (gh * meas.block_size, gw * meas.block_size)
    if x.shape != padded:
        raise ValueError("initial estimate shape %r != padded canvas %r" % (x.shape, padded))
    ratio_pixels = expand_ratio_map(rmap)

    steps = config.resolved_steps()
    fidelity = [data_fidelity(x, meas, bank)]
    names = []
    if config.random_transforms:
        rng = np.random.default_rng(config.transform_seed)
        pool = (
            DihedralTransform.all_elements()
            if padded[0] == padded[1]
            else DihedralTransform.shape_preserving()
        )
    prox_fn = lambda z, rp: proximal_step(z, rp, config.prox)
    for k in range(config.phases):
        z = block_gradient_step(x, meas, bank, steps[k], crop=False)
        if config.random_transforms:
            t = pool[int(rng.integers(len(pool)))]
            names.append(t.name)
            x = dihedral_wrap(prox_fn, t)(z, ratio_pixels)
        else:
            x = prox_fn(z, ratio_pixels)
        fidelity.append(data_fidelity(x, meas, bank))

    h, w = meas.image_shape
    return ReconstructionResult(
        np.ascontiguousarray(x[:h, :w]), np.asarray(fidelity), tuple(names)
    )
