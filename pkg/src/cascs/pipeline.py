"""End-to-end sampling and reconstruction deployments.

The deployed protocol splits the budget between a content-blind basic
pass and a content-adaptive residual pass:

1. every block is sampled uniformly with q_b = round(gamma * r * N) rows;
2. the reconstruction end back-projects the basic measurements, computes
   saliency on that estimate, and allocates the remaining budget across
   blocks;
3. the sampling end measures each block with the extra rows the
   allocation asks for (rows q_b+1 .. q_i);
4. both passes are joined and run through the full phase recovery with
   the summed initialization and the combined ratio map.

Every message between the two ends travels through the serialized wire
formats, also in process, so results match a file-based handoff bit for
bit.  run_ideal allocates from the clean image in one pass; run_uniform
spends the budget evenly and is the content-blind reference.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._util import round_half_away
from .allocator import (
    MeasurementSizeMap,
    RatioMap,
    block_ratio_aggregation,
    local_std_saliency,
)
from .block_codec import (
    concat_measurements,
    fold,
    measurements_from_bytes,
    measurements_to_bytes,
    residual_sample_blocks,
    sample_blocks,
    transpose_initialize,
    unfold,
)
from .matrix_bank import GeneratingMatrix
from .metrics_io import psnr
from .recovery import RecoveryConfig, reconstruct

DEFAULT_BASIC_FRACTION = 0.2822


@dataclass(frozen=True, eq=False)
class PipelineConfig:
    """Shared knobs of one deployment run."""

    bank: GeneratingMatrix
    ratio: float
    gamma: float = DEFAULT_BASIC_FRACTION
    recovery: RecoveryConfig = field(default_factory=RecoveryConfig)
    seed: int = 0
    saliency_window: int = 7

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError("ratio must lie in [0, 1], got %r" % (self.ratio,))
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1], got %r" % (self.gamma,))

    @property
    def q_total(self):
        """Per-block budget round(r * N); the basic size never exceeds it."""
        return int(round_half_away(self.ratio * self.bank.n))

    @property
    def q_basic(self):
        return int(round_half_away(self.gamma * self.ratio * self.bank.n))


@dataclass(frozen=True, eq=False)
class ExchangeMessage:
    name: str
    direction: str
    payload: bytes

    @property
    def size(self):
        return len(self.payload)


@dataclass(frozen=True, eq=False)
class ExchangeLog:
    messages: tuple

    @property
    def total_bytes(self):
        return sum(m.size for m in self.messages)

    def summary(self):
        return [
            {"name": m.name, "direction": m.direction, "bytes": m.size}
            for m in self.messages
        ]


@dataclass(frozen=True, eq=False)
class PipelineResult:
    image: np.ndarray
    mode: str
    rmap: RatioMap
    qmap: object
    measurements: object
    initial: np.ndarray
    fidelity: np.ndarray
    q_basic: int
    q_total: int
    exchange: object = None
    trace: object = None

    def report(self, reference=None):
        doc = {
            "mode": self.mode,
            "q_basic": self.q_basic,
            "q_total": self.q_total,
            "measurements_total": self.measurements.total_measurements(),
            "allocation_iterations": self.trace.iterations if self.trace else None,
            "fidelity": [float(f) for f in self.fidelity],
        }
        if self.exchange is not None:
            doc["exchange"] = self.exchange.summary()
        if reference is not None:
            doc["psnr"] = psnr(reference, self.image)
        return doc


def _wire(meas):
    """Serialize and reparse a measurement set, like a real handoff would."""
    blob = measurements_to_bytes(meas)
    return measurements_from_bytes(blob), blob


def run_deployed(image, cfg):
    """Four-stage deployment: basic pass, allocation, residual pass, recovery."""
    bank = cfg.bank
    b = bank.block_size
    n = bank.n
    grid = unfold(image, b)
    q_b = cfg.q_basic
    q_total = cfg.q_total
    q_res = q_total - q_b
    bound_res = n - q_b

    basic_tx = sample_blocks(grid, bank, q_b)
    basic, basic_blob = _wire(basic_tx)

    x_basic = transpose_initialize(basic, bank, crop=False)
    saliency = local_std_saliency(x_basic, cfg.saliency_window)
    res_request, _, trace = block_ratio_aggregation(
        saliency, b, q_res, bound_res, seed=cfg.seed
    )
    request_blob = replace(res_request, row_start=q_b).to_json().encode("utf-8")
    res_rmap = RatioMap.from_json(request_blob.decode("utf-8"))

    sizes_full = q_b + res_rmap.to_sizes().grid
    residual_tx = residual_sample_blocks(grid, bank, q_b, sizes_full)
    residual, residual_blob = _wire(residual_tx)

    x_res = transpose_initialize(residual, bank, crop=False)
    x0 = x_basic + x_res
    combined = concat_measurements(basic, residual)
    final_rmap = RatioMap(res_rmap.grid + q_b / n, b, q_total, n)
    rec = reconstruct(combined, bank, final_rmap, cfg.recovery, x0=x0)

    exchange = ExchangeLog((
        ExchangeMessage("basic_measurements", "sampling->reconstruction", basic_blob),
        ExchangeMessage("ratio_map_request", "reconstruction->sampling", request_blob),
        ExchangeMessage("residual_measurements", "sampling->reconstruction", residual_blob),
    ))
    return PipelineResult(
        rec.image, "deployed", final_rmap, final_rmap.to_sizes(), combined, x0,
        rec.fidelity, q_b, q_total, exchange=exchange, trace=trace,
    )


def run_ideal(image, cfg):
    """Allocate from the clean image itself: the saliency upper bound."""
    bank = cfg.bank
    b = bank.block_size
    grid = unfold(image, b)
    canvas = fold(grid, crop=False)
    saliency = local_std_saliency(canvas, cfg.saliency_window)
    rmap, qmap, trace = block_ratio_aggregation(
        saliency, b, cfg.q_total, bank.n, seed=cfg.seed
    )
    meas, _ = _wire(sample_blocks(grid, bank, qmap))
    x0 = transpose_initialize(meas, bank, crop=False)
    rec = reconstruct(meas, bank, rmap, cfg.recovery, x0=x0)
    return PipelineResult(
        rec.image, "ideal", rmap, qmap, meas, x0, rec.fidelity,
        0, cfg.q_total, trace=trace,
    )


def run_uniform(image, cfg):
    """Content-blind reference: the budget is spread evenly over blocks.

    The grid total is round(r * N * l); any remainder after the even
    split goes to the earliest blocks in row-major order.
    """
    bank = cfg.bank
    b = bank.block_size
    n = bank.n
    grid = unfold(image, b)
    cells = grid.cells
    total = int(round_half_away(cfg.ratio * n * cells))
    base, rem = divmod(total, cells)
    sizes = np.full(cells, base, dtype=np.int64)
    sizes[:rem] += 1
    qmap = MeasurementSizeMap(sizes.reshape(grid.grid_shape), b, cfg.q_total, n)
    meas, _ = _wire(sample_blocks(grid, bank, qmap))
    x0 = transpose_initialize(meas, bank, crop=False)
    rec = reconstruct(meas, bank, qmap.to_ratios(), cfg.recovery, x0=x0)
    return PipelineResult(
        rec.image, "uniform", qmap.to_ratios(), qmap, meas, x0, rec.fidelity,
        0, cfg.q_total,
    )


_MODES = {"deployed": run_deployed, "ideal": run_ideal, "uniform": run_uniform}


def run_mode(image, cfg, mode):
    try:
        fn = _MODES[mode]
    except KeyError:
        raise ValueError("unknown pipeline mode %r" % (mode,)) from None
    return fn(image, cfg)


def _child_seed(seed, *indices):
    ss = np.random.SeedSequence(entropy=(int(seed),) + tuple(int(i) for i in indices))
    return int(ss.generate_state(1)[0])


def gamma_sweep(images, bank, ratios, gammas, recovery=None, seed=0, threads=1):
    """Mean reconstruction quality per (ratio, gamma) and per reference mode.

    Runs the deployed protocol on every image for every gamma in the
    grid, plus the ideal and uniform references once per (image, ratio).
    Tasks are independent and may run on a thread pool; results are
    keyed, so the worker count never changes the numbers.

    Returns a list of row dicts with keys ratio, gamma, psnr_deployed,
    psnr_ideal, psnr_uniform.
    """
    recovery = recovery or RecoveryConfig()
    images = [np.asarray(im, dtype=np.float64) for im in images]
    gammas = [float(g) for g in gammas]
    ratios = [float(r) for r in ratios]

    tasks = {}
    for ri, r in enumerate(ratios):
        for ii, image in enumerate(images):
            base = PipelineConfig(
                bank, r, recovery=recovery, seed=_child_seed(seed, ri, ii)
            )
            tasks[("uniform", ri, ii)] = (run_uniform, image, base)
            tasks[("ideal", ri, ii)] = (run_ideal, image, base)
            for gi, g in enumerate(gammas):
                cfg = replace(base, gamma=g, seed=_child_seed(seed, ri, ii, gi))
                tasks[("deployed", ri, ii, gi)] = (run_deployed, image, cfg)

    def run(item):
        key, (fn, image, cfg) = item
        return key, psnr(image, fn(image, cfg).image)

    results = {}
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for key, value in pool.map(run, tasks.items()):
                results[key] = value
    else:
        for item in tasks.items():
            key, value = run(item)
            results[key] = value

    rows = []
    n_img = len(images)
    for ri, r in enumerate(ratios):
        ideal = np.mean([results[("ideal", ri, ii)] for ii in range(n_img)])
        uniform = np.mean([results[("uniform", ri, ii)] for ii in range(n_img)])
        for gi, g in enumerate(gammas):
            deployed = np.mean(
                [results[("deployed", ri, ii, gi)] for ii in range(n_img)]
            )
            rows.append({
                "ratio": r,
                "gamma": g,
                "psnr_deployed": float(deployed),
                "psnr_ideal": float(ideal),
                "psnr_uniform": float(uniform),
            })
    return rows


def sweep_to_csv(rows):
    lines = ["ratio,gamma,psnr_deployed,psnr_ideal,psnr_uniform"]
    for row in rows:
        lines.append(
            "%.10g,%.10g,%.10g,%.10g,%.10g"
            % (row["ratio"], row["gamma"], row["psnr_deployed"],
               row["psnr_ideal"], row["psnr_uniform"])
        )
    return "\n".join(lines) + "\n"
