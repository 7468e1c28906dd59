"""End-to-end encoder and decoder with a weight-free bitstream.

The bitstream carries no network parameters: the decoder re-runs
normalize/train/refine/expand from the geometry and the serialized config,
and the determinism contract (fixed reduction orders, fixed seeds, geometry
quantized to float32 at entry) makes that reconstruction bit-identical to
the encoder's on the same build. Divergence is detected, never silent: the
header stores a geometry checksum and the grid dims the encoder produced.

Byte layout (little endian), version 1:

    magic   4s   b"FPCA"
    version u8   1
    config  <IdQdIIdIBBI>
            train iterations u32, learning rate f64, seed u64,
            refine alpha f64, refine iterations u32, mapping k u32,
            delta_r_min f64, max expansion rounds u32,
            codec id u8 (0 lossless / 1 external), qp u8 (0 when lossless),
            segmentation max points u32 (0 = whole cloud)
    count   u32  patch count
    patch   w u32, h u32, w_exp u32, h_exp u32,
            geometry checksum u64 (FNV-1a over float32 LE coordinates),
            payload length u64, payload bytes
"""

from __future__ import annotations

import struct
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .cloud import PointCloud, normalize_positions, segment_indices
from .grid import Grid
from .imagecodec import (
    CODEC_BPG,
    CODEC_LOSSLESS,
    CodecChoice,
    CompressedImage,
    compress,
    decompress,
    y_psnr,
)
from .mapping import (
    AttributeImage,
    ExpansionState,
    MappingTable,
    build_mapping,
    decode_attributes,
    expand_grid,
    map_attributes,
)
from .refine import RefineConfig, refine
from .training import TrainConfig, train

MAGIC = b"FPCA"
VERSION = 1

_CONFIG_STRUCT = struct.Struct("<IdQdIIdIBBI")
_PATCH_STRUCT = struct.Struct("<IIIIQQ")
_COUNT_STRUCT = struct.Struct("<I")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


class BitstreamError(Exception):
    pass


class ChecksumMismatchError(Exception):
    pass


class DeterminismError(Exception):
    pass


class StageError(Exception):
    """A pipeline stage failed; names the stage and patch, chains the cause."""

    def __init__(self, patch: int, stage: str, cause: Exception):
        super().__init__(f"patch {patch}, stage {stage}: {cause}")
        self.patch = patch
        self.stage = stage


@contextmanager
def _stage(patch: int, name: str):
    try:
        yield
    except (ChecksumMismatchError, DeterminismError, BitstreamError, StageError):
        raise
    except Exception as exc:
        raise StageError(patch, name, exc) from exc


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _U64
    return h


def quantize_positions(positions: np.ndarray) -> np.ndarray:
    """Snap coordinates to float32 (the PLY storage precision) so encoder
    and decoder agree bit-for-bit on the geometry they compute from."""
    return np.ascontiguousarray(
        np.asarray(positions).astype("<f4").astype(np.float64)
    )


def geometry_checksum(positions: np.ndarray) -> int:
    return fnv1a64(np.ascontiguousarray(np.asarray(positions).astype("<f4")).tobytes())


@dataclass(frozen=True)
class PipelineConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    k: int = 9
    delta_r_min: float = 1e-6
    max_rounds: int = 64
    codec: CodecChoice = field(default_factory=lambda: CodecChoice(CODEC_LOSSLESS))
    segment_max_points: int = 0  # 0 = never split

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.delta_r_min < 0.0:
            raise ValueError("delta_r_min must be >= 0")
        if self.max_rounds < 0:
            raise ValueError("max_rounds must be >= 0")
        if self.segment_max_points < 0:
            raise ValueError("segment_max_points must be >= 0")

    @property
    def seed(self) -> int:
        return self.train.seed


@dataclass(frozen=True)
class PatchRecord:
    w: int
    h: int
    w_exp: int
    h_exp: int
    checksum: int
    payload: bytes


@dataclass(frozen=True)
class Bitstream:
    config: PipelineConfig
    patches: tuple[PatchRecord, ...]

    def serialize(self) -> bytes:
        parts = [MAGIC, bytes([VERSION]), _serialize_config(self.config),
                 _COUNT_STRUCT.pack(len(self.patches))]
        for p in self.patches:
            parts.append(_PATCH_STRUCT.pack(p.w, p.h, p.w_exp, p.h_exp,
                                            p.checksum, len(p.payload)))
            parts.append(p.payload)
        return b"".join(parts)

    @classmethod
    def parse(cls, data: bytes) -> "Bitstream":
        head = len(MAGIC) + 1 + _CONFIG_STRUCT.size + _COUNT_STRUCT.size
        if len(data) < head:
            raise BitstreamError("truncated header")
        if data[:4] != MAGIC:
            raise BitstreamError("bad magic (not a foldcodec bitstream)")
        if data[4] != VERSION:
            raise BitstreamError(f"unsupported version {data[4]}")
        config = _parse_config(data[5:5 + _CONFIG_STRUCT.size])
        (count,) = _COUNT_STRUCT.unpack_from(data, 5 + _CONFIG_STRUCT.size)
        pos = head
        patches = []
        for i in range(count):
            if len(data) < pos + _PATCH_STRUCT.size:
                raise BitstreamError(f"truncated patch header {i}")
            w, h, w_exp, h_exp, checksum, payload_len = _PATCH_STRUCT.unpack_from(data, pos)
            pos += _PATCH_STRUCT.size
            if min(w, h, w_exp, h_exp) < 1 or w_exp < w or h_exp < h:
                raise BitstreamError(f"invalid grid dims in patch {i}")
            if len(data) < pos + payload_len:
                raise BitstreamError(f"truncated payload in patch {i}")
            patches.append(PatchRecord(w=w, h=h, w_exp=w_exp, h_exp=h_exp,
                                       checksum=checksum,
                                       payload=bytes(data[pos:pos + payload_len])))
            pos += payload_len
        if pos != len(data):
            raise BitstreamError(f"{len(data) - pos} trailing bytes after last patch")
        return cls(config=config, patches=tuple(patches))


def _serialize_config(config: PipelineConfig) -> bytes:
    pinned = TrainConfig()
    t = config.train
    if (t.beta1, t.beta2, t.eps) != (pinned.beta1, pinned.beta2, pinned.eps):
        raise BitstreamError("version 1 pins the Adam moment constants; "
                             "custom beta1/beta2/eps are not serializable")
    if not 0 <= t.seed <= _U64:
        raise BitstreamError("seed must fit in 64 bits")
    for name, value in (("train iterations", t.iterations), ("k", config.k),
                        ("max_rounds", config.max_rounds),
                        ("segment_max_points", config.segment_max_points),
                        ("refine iterations", config.refine.iterations)):
        if not 0 <= value < 2 ** 32:
            raise BitstreamError(f"{name} must fit in 32 bits")
    codec_id = 0 if config.codec.id == CODEC_LOSSLESS else 1
    qp = config.codec.qp if config.codec.qp is not None else 0
    return _CONFIG_STRUCT.pack(
        t.iterations, t.learning_rate, t.seed,
        config.refine.alpha, config.refine.iterations,
        config.k, config.delta_r_min, config.max_rounds,
        codec_id, qp, config.segment_max_points,
    )


def _parse_config(block: bytes) -> PipelineConfig:
    (iterations, learning_rate, seed, alpha, refine_iterations, k,
     delta_r_min, max_rounds, codec_id, qp, segment_max_points) = _CONFIG_STRUCT.unpack(block)
    if codec_id == 0:
        if qp != 0:
            raise BitstreamError("lossless codec must carry qp 0")
        codec = CodecChoice(CODEC_LOSSLESS)
    elif codec_id == 1:
        codec = CodecChoice(CODEC_BPG, qp=qp)
    else:
        raise BitstreamError(f"unknown codec id {codec_id}")
    try:
        return PipelineConfig(
            train=TrainConfig(iterations=iterations, learning_rate=learning_rate,
                              seed=seed),
            refine=RefineConfig(alpha=alpha, iterations=refine_iterations),
            k=k,
            delta_r_min=delta_r_min,
            max_rounds=max_rounds,
            codec=codec,
            segment_max_points=segment_max_points,
        )
    except ValueError as exc:
        raise BitstreamError(f"invalid config field: {exc}") from None


@dataclass(frozen=True)
class PatchState:
    """Everything a patch pipeline produced; used by tests and ablation."""

    index_map: np.ndarray
    grid: Grid
    recon_folded: np.ndarray
    recon_refined: np.ndarray
    grid_expanded: Grid
    recon_expanded: np.ndarray
    table: MappingTable
    image: AttributeImage
    expansion: ExpansionState


def _patch_indices(positions: np.ndarray, config: PipelineConfig) -> list[np.ndarray]:
    if config.segment_max_points > 0:
        return segment_indices(positions, config.segment_max_points)
    return [np.arange(positions.shape[0], dtype=np.int64)]


def _reconstruct_patch(patch_index: int, norm_pos: np.ndarray, config: PipelineConfig):
    """The deterministic geometry path shared by encoder and decoder:
    train the fold, refine it, expand the grid, rebuild the mapping."""
    with _stage(patch_index, "train"):
        model, grid, recon = train(norm_pos, config.train)
    with _stage(patch_index, "refine"):
        refined = refine(recon, norm_pos, grid.w, grid.h, config.refine)
    with _stage(patch_index, "expand"):
        grid_exp, recon_exp, table, state = expand_grid(
            grid, refined, norm_pos, config.k, config.delta_r_min, config.max_rounds
        )
    return grid, recon, refined, grid_exp, recon_exp, table, state


def encode_with_state(pc: PointCloud, config: PipelineConfig):
    """encode() plus the per-patch intermediate state, for inspection."""
    pos_q = quantize_positions(pc.positions)
    records: list[PatchRecord] = []
    states: list[PatchState] = []
    for i, idx in enumerate(_patch_indices(pos_q, config)):
        patch_pos = pos_q[idx]
        checksum = geometry_checksum(patch_pos)
        with _stage(i, "normalize"):
            norm_pos, _ = normalize_positions(patch_pos)
        grid, recon, refined, grid_exp, recon_exp, table, state = _reconstruct_patch(
            i, norm_pos, config
        )
        patch_pc = PointCloud(norm_pos, pc.attributes[idx])
        with _stage(i, "map"):
            image = map_attributes(patch_pc, table, grid_exp.w, grid_exp.h, recon_exp)
        with _stage(i, "compress"):
            blob = compress(image, config.codec)
        records.append(PatchRecord(w=grid.w, h=grid.h, w_exp=grid_exp.w,
                                   h_exp=grid_exp.h, checksum=checksum,
                                   payload=blob.payload))
        states.append(PatchState(index_map=idx, grid=grid, recon_folded=recon,
                                 recon_refined=refined, grid_expanded=grid_exp,
                                 recon_expanded=recon_exp, table=table,
                                 image=image, expansion=state))
    return Bitstream(config=config, patches=tuple(records)), states


def encode(pc: PointCloud, config: PipelineConfig | None = None) -> Bitstream:
    """Compress a cloud's attributes. Deterministic per (cloud, config)."""
    if config is None:
        config = PipelineConfig()
    bs, _ = encode_with_state(pc, config)
    return bs


def decode_with_state(geometry, bs: Bitstream):
    """decode() plus the per-patch recomputed state, for inspection."""
    positions = geometry.positions if isinstance(geometry, PointCloud) else geometry
    pos_q = quantize_positions(positions)
    if pos_q.ndim != 2 or pos_q.shape[1] != 3 or pos_q.shape[0] == 0:
        raise ValueError("geometry must be a nonempty (n, 3) array")
    indices = _patch_indices(pos_q, bs.config)
    if len(indices) != len(bs.patches):
        raise ChecksumMismatchError(
            f"geometry yields {len(indices)} patches, bitstream has {len(bs.patches)}"
        )
    attrs = np.zeros((pos_q.shape[0], 3), dtype=np.uint8)
    states: list[PatchState] = []
    for i, (idx, record) in enumerate(zip(indices, bs.patches)):
        patch_pos = pos_q[idx]
        if geometry_checksum(patch_pos) != record.checksum:
            raise ChecksumMismatchError(
                f"patch {i}: geometry checksum mismatch, refusing to decode"
            )
        with _stage(i, "normalize"):
            norm_pos, _ = normalize_positions(patch_pos)
        grid, recon, refined, grid_exp, recon_exp, table, state = _reconstruct_patch(
            i, norm_pos, bs.config
        )
        if (grid.w, grid.h) != (record.w, record.h):
            raise DeterminismError(
                f"patch {i}: determinism violation: recomputed grid "
                f"{grid.w}x{grid.h} != header {record.w}x{record.h}"
            )
        if (grid_exp.w, grid_exp.h) != (record.w_exp, record.h_exp):
            raise DeterminismError(
                f"patch {i}: determinism violation: recomputed expanded grid "
                f"{grid_exp.w}x{grid_exp.h} != header {record.w_exp}x{record.h_exp}"
            )
        blob = CompressedImage(codec_id=bs.config.codec.id, qp=bs.config.codec.qp,
                               width=record.w_exp, height=record.h_exp,
                               payload=record.payload)
        with _stage(i, "decompress"):
            pixels = decompress(blob)
        image = AttributeImage(
            width=grid_exp.w, height=grid_exp.h, pixels=pixels,
            occupancy=table.occupancy.reshape(grid_exp.h, grid_exp.w).copy(),
            provenance=np.arange(grid_exp.n, dtype=np.int64).reshape(grid_exp.h, grid_exp.w),
        )
        with _stage(i, "inverse-map"):
            attrs[idx] = decode_attributes(image, table)
        states.append(PatchState(index_map=idx, grid=grid, recon_folded=recon,
                                 recon_refined=refined, grid_expanded=grid_exp,
                                 recon_expanded=recon_exp, table=table,
                                 image=image, expansion=state))
    return attrs, states


def decode(geometry, bs: Bitstream) -> np.ndarray:
    """Recover per-point attributes from geometry plus a bitstream.

    Reconstruction is recomputed from scratch; a checksum or grid-dimension
    mismatch aborts with an error instead of producing garbage colors.
    """
    attrs, _ = decode_with_state(geometry, bs)
    return attrs


@dataclass(frozen=True)
class StageReport:
    label: str
    y_psnr_db: float
    occupancy_histogram: tuple[tuple[int, int], ...]  # (occupancy, cell count)


@dataclass(frozen=True)
class AblationReport:
    stages: tuple[StageReport, ...]  # folded, refined, optimized


def run_stage_ablation(pc: PointCloud, config: PipelineConfig | None = None) -> AblationReport:
    """Mapping-only distortion after each pipeline stage, no image codec.

    Stages: (a) the raw fold, (b) after refinement, (c) after grid
    expansion. Reports Y-PSNR of decode(map(attributes)) against the
    original colors plus an occupancy histogram per stage.
    """
    if config is None:
        config = PipelineConfig()
    pos_q = quantize_positions(pc.positions)
    labels = ("folded", "refined", "optimized")
    decoded = {label: np.zeros((pc.n, 3), dtype=np.uint8) for label in labels}
    histograms = {label: Counter() for label in labels}

    for i, idx in enumerate(_patch_indices(pos_q, config)):
        with _stage(i, "normalize"):
            norm_pos, _ = normalize_positions(pos_q[idx])
        grid, recon, refined, grid_exp, recon_exp, table_c, _ = _reconstruct_patch(
            i, norm_pos, config
        )
        patch_pc = PointCloud(norm_pos, pc.attributes[idx])
        per_stage = (
            ("folded", grid, recon, None),
            ("refined", grid, refined, None),
            ("optimized", grid_exp, recon_exp, table_c),
        )
        for label, g, r, table in per_stage:
            with _stage(i, f"map[{label}]"):
                if table is None:
                    table = build_mapping(norm_pos, r, config.k)
                image = map_attributes(patch_pc, table, g.w, g.h, r)
                decoded[label][idx] = decode_attributes(image, table)
            histograms[label].update(int(o) for o in table.occupancy)

    stages = tuple(
        StageReport(
            label=label,
            y_psnr_db=y_psnr(decoded[label], pc.attributes),
            occupancy_histogram=tuple(sorted(histograms[label].items())),
        )
        for label in labels
    )
    return AblationReport(stages=stages)
