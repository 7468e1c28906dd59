"""foldcodec: folding-based point cloud attribute codec.

Folds a 2D grid onto a point cloud with a small network overfit per cloud,
refines the fold, maps colors onto the grid with occupancy regularization,
and compresses the resulting image. The decoder rebuilds the fold from
geometry alone, so no network weights are transmitted.
"""

from ._kernels import BACKEND as kernel_backend
from ._kernels import get_num_threads, set_num_threads
from .cloud import (
    NormalizeTransform,
    PointCloud,
    normalize,
    normalize_positions,
    segment_blocks,
    segment_indices,
)
from .grid import Grid, make_grid, neighbor_table
from .imagecodec import (
    CODEC_BPG,
    CODEC_LOSSLESS,
    CodecChoice,
    CodecError,
    CompressedImage,
    bits_per_point,
    compress,
    decompress,
    external_codec_available,
    y_psnr,
)
from .mapping import (
    AttributeImage,
    ExpansionState,
    InsertionRecord,
    MappingTable,
    build_mapping,
    decode_attributes,
    expand_grid,
    map_attributes,
    occupancy_stats,
    replay_expansion,
)
from .model import FoldingError, FoldingModel, ModelDims, encode_cloud, fold, init_model
from .neighbors import SpatialIndex, build_index, nearest
from .pipeline import (
    AblationReport,
    Bitstream,
    BitstreamError,
    ChecksumMismatchError,
    DeterminismError,
    PatchRecord,
    PatchState,
    PipelineConfig,
    StageError,
    StageReport,
    decode,
    decode_with_state,
    encode,
    encode_with_state,
    fnv1a64,
    geometry_checksum,
    quantize_positions,
    run_stage_ablation,
)
from .plyio import PlyParseError, load_geometry, load_ply, save_ply
from .refine import RefineConfig, refine, refine_step
from .selftest import run_selftest
from .training import (
    LossReport,
    TrainConfig,
    TrainingError,
    chamfer,
    loss_and_grad,
    repulsion,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AblationReport",
    "AttributeImage",
    "Bitstream",
    "BitstreamError",
    "CODEC_BPG",
    "CODEC_LOSSLESS",
    "ChecksumMismatchError",
    "CodecChoice",
    "CodecError",
    "CompressedImage",
    "DeterminismError",
    "ExpansionState",
    "FoldingError",
    "FoldingModel",
    "Grid",
    "InsertionRecord",
    "LossReport",
    "MappingTable",
    "ModelDims",
    "NormalizeTransform",
    "PatchRecord",
    "PatchState",
    "PipelineConfig",
    "PlyParseError",
    "PointCloud",
    "RefineConfig",
    "SpatialIndex",
    "StageError",
    "StageReport",
    "TrainConfig",
    "TrainingError",
    "bits_per_point",
    "build_index",
    "build_mapping",
    "chamfer",
    "compress",
    "decode",
    "decode_attributes",
    "decode_with_state",
    "decompress",
    "encode",
    "encode_cloud",
    "encode_with_state",
    "expand_grid",
    "external_codec_available",
    "fnv1a64",
    "fold",
    "geometry_checksum",
    "get_num_threads",
    "init_model",
    "kernel_backend",
    "load_geometry",
    "load_ply",
    "loss_and_grad",
    "make_grid",
    "map_attributes",
    "nearest",
    "neighbor_table",
    "normalize",
    "normalize_positions",
    "occupancy_stats",
    "quantize_positions",
    "refine",
    "refine_step",
    "replay_expansion",
    "repulsion",
    "run_selftest",
    "run_stage_ablation",
    "save_ply",
    "segment_blocks",
    "segment_indices",
    "set_num_threads",
    "train",
    "y_psnr",
]
