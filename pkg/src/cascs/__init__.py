"""Block-based compressed sensing with content-adaptive allocation.

Images are cut into B x B blocks, each measured by the first q_i rows
of a single orthonormal generating matrix.  A saliency-driven exact
integer allocation decides the per-block q_i, and a proximal gradient
solver with optional random-transform phases reconstructs the image.
"""

__version__ = "0.1.0"

from .allocator import (
    CorrectionTrace,
    MeasurementSizeMap,
    RatioMap,
    block_ratio_aggregation,
    clip_round,
    expand_ratio_map,
    local_std_saliency,
    simulate_correction,
    softmax,
    uniform_descent,
)
from .block_codec import (
    BlockGrid,
    BlockMeasurementSet,
    concat_measurements,
    fold,
    load_measurements,
    residual_sample_blocks,
    sample_blocks,
    save_measurements,
    transpose_initialize,
    unfold,
)
from .errors import ConvergenceError, FormatError
from .matrix_bank import (
    GeneratingMatrix,
    load_matrix,
    orthogonality_report,
    row_slice,
    save_matrix,
    svd_init,
    truncate,
    vectorize_blocks,
)
from .metrics_io import (
    config_digest,
    emit_report,
    load_image,
    load_pgm,
    luminance,
    mse,
    pgm_bytes,
    psnr,
    quality_record,
    quantize_u8,
    save_image,
    save_pgm,
    ssim,
    write_report,
)
from .pipeline import (
    PipelineConfig,
    PipelineResult,
    gamma_sweep,
    run_deployed,
    run_ideal,
    run_mode,
    run_uniform,
)
from .recovery import (
    DihedralTransform,
    RecoveryConfig,
    TileDctSoftThreshold,
    ZeroResidual,
    block_gradient_step,
    data_fidelity,
    dihedral_wrap,
    parse_prox,
    reconstruct,
)

__all__ = [
    "BlockGrid",
    "BlockMeasurementSet",
    "ConvergenceError",
    "CorrectionTrace",
    "DihedralTransform",
    "FormatError",
    "GeneratingMatrix",
    "MeasurementSizeMap",
    "PipelineConfig",
    "PipelineResult",
    "RatioMap",
    "RecoveryConfig",
    "TileDctSoftThreshold",
    "ZeroResidual",
    "block_gradient_step",
    "block_ratio_aggregation",
    "clip_round",
    "concat_measurements",
    "config_digest",
    "data_fidelity",
    "dihedral_wrap",
    "emit_report",
    "expand_ratio_map",
    "fold",
    "gamma_sweep",
    "load_image",
    "load_matrix",
    "load_measurements",
    "load_pgm",
    "local_std_saliency",
    "luminance",
    "mse",
    "orthogonality_report",
    "parse_prox",
    "pgm_bytes",
    "psnr",
    "quality_record",
    "quantize_u8",
    "reconstruct",
    "residual_sample_blocks",
    "row_slice",
    "run_deployed",
    "run_ideal",
    "run_mode",
    "run_uniform",
    "sample_blocks",
    "save_image",
    "save_matrix",
    "save_measurements",
    "save_pgm",
    "simulate_correction",
    "softmax",
    "ssim",
    "svd_init",
    "transpose_initialize",
    "truncate",
    "uniform_descent",
    "unfold",
    "vectorize_blocks",
    "write_report",
]
