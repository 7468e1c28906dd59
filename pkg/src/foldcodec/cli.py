"""Command-line front end: encode, decode, QP sweeps, stage ablation and
the embedded selftest.

Exit codes: 0 ok, 1 generic failure (including selftest failures), 2 parse
errors (command line, PLY, bitstream), 3 geometry checksum mismatch,
4 external codec failure, 5 determinism violation.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
import time
from pathlib import Path

from ._kernels import set_num_threads
from .cloud import PointCloud
from .imagecodec import (
    CODEC_BPG,
    CODEC_LOSSLESS,
    CodecChoice,
    CodecError,
    bits_per_point,
    compress,
    decompress,
    y_psnr,
)
from .mapping import AttributeImage, decode_attributes
from .pipeline import (
    Bitstream,
    BitstreamError,
    ChecksumMismatchError,
    DeterminismError,
    PipelineConfig,
    decode,
    encode_with_state,
    run_stage_ablation,
)
from .plyio import PlyParseError, load_geometry, load_ply, save_ply
from .refine import RefineConfig
from .selftest import run_selftest
from .training import TrainConfig

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_PARSE = 2
EXIT_CHECKSUM = 3
EXIT_EXTERNAL_CODEC = 4
EXIT_DETERMINISM = 5

DEFAULT_QPS = (20, 25, 30, 35, 40, 45, 50)

STAGES = ("folded", "refined", "optimized")


def _classify(exc: BaseException) -> int:
    seen = set()
    current: BaseException | None = exc
    while current is not None and id(current) not in seen:
        seen.add(id(current))
        if isinstance(current, ChecksumMismatchError):
            return EXIT_CHECKSUM
        if isinstance(current, DeterminismError):
            return EXIT_DETERMINISM
        if isinstance(current, CodecError):
            return EXIT_EXTERNAL_CODEC
        if isinstance(current, (BitstreamError, PlyParseError)):
            return EXIT_PARSE
        current = current.__cause__ or current.__context__
    return EXIT_FAILURE


def _add_config_flags(parser: argparse.ArgumentParser, with_codec: bool = True) -> None:
    group = parser.add_argument_group("pipeline configuration")
    group.add_argument("--iterations", type=int, default=TrainConfig.iterations,
                       help="training iterations (default: %(default)s)")
    group.add_argument("--learning-rate", type=float, default=TrainConfig.learning_rate,
                       help="Adam learning rate (default: %(default)s)")
    group.add_argument("--seed", type=int, default=TrainConfig.seed,
                       help="weight init seed (default: %(default)s)")
    group.add_argument("--alpha", type=float, default=RefineConfig.alpha,
                       help="refinement inertia factor (default: 1/3)")
    group.add_argument("--refine-iterations", type=int, default=RefineConfig.iterations,
                       help="refinement iterations (default: %(default)s)")
    group.add_argument("--k", type=int, default=9,
                       help="mapping candidate neighbors (default: %(default)s)")
    group.add_argument("--delta-r-min", type=float, default=1e-6,
                       help="expansion stop threshold (default: %(default)s)")
    group.add_argument("--max-rounds", type=int, default=64,
                       help="expansion round cap (default: %(default)s)")
    group.add_argument("--segment-max-points", type=int, default=0,
                       help="split clouds larger than this; 0 keeps one patch")
    if with_codec:
        group.add_argument("--codec", choices=("lossless", "bpg"), default="lossless",
                           help="image codec (default: %(default)s)")
        group.add_argument("--qp", type=int, default=None,
                           help="quantization parameter, required with --codec bpg")


def _config_from_args(args, codec: CodecChoice | None = None) -> PipelineConfig:
    if codec is None:
        if args.codec == "bpg":
            if args.qp is None:
                raise BitstreamError("--codec bpg requires --qp")
            codec = CodecChoice(CODEC_BPG, qp=args.qp)
        else:
            if args.qp is not None:
                raise BitstreamError("--qp only applies to --codec bpg")
            codec = CodecChoice(CODEC_LOSSLESS)
    return PipelineConfig(
        train=TrainConfig(iterations=args.iterations,
                          learning_rate=args.learning_rate, seed=args.seed),
        refine=RefineConfig(alpha=args.alpha, iterations=args.refine_iterations),
        k=args.k,
        delta_r_min=args.delta_r_min,
        max_rounds=args.max_rounds,
        codec=codec,
        segment_max_points=args.segment_max_points,
    )


def _stage_config(config: PipelineConfig, stage: str) -> PipelineConfig:
    """Cut the pipeline short for a stage label by zeroing later stages."""
    if stage == "folded":
        return dataclasses.replace(
            config,
            refine=RefineConfig(alpha=config.refine.alpha, iterations=0),
            max_rounds=0,
        )
    if stage == "refined":
        return dataclasses.replace(config, max_rounds=0)
    return config


def cmd_encode(args) -> int:
    config = _config_from_args(args)
    pc = load_ply(args.input)
    start = time.perf_counter()
    bs, _ = encode_with_state(pc, config)
    data = bs.serialize()
    elapsed = time.perf_counter() - start
    Path(args.output).write_bytes(data)
    print(f"points={pc.n} patches={len(bs.patches)} bytes={len(data)} "
          f"bpp={bits_per_point(len(data), pc.n):.4f} seconds={elapsed:.2f}")
    return EXIT_OK


def cmd_decode(args) -> int:
    positions = load_geometry(args.geometry)
    bs = Bitstream.parse(Path(args.bitstream).read_bytes())
    start = time.perf_counter()
    attrs = decode(positions, bs)
    elapsed = time.perf_counter() - start
    save_ply(PointCloud(positions, attrs), args.output)
    print(f"points={positions.shape[0]} patches={len(bs.patches)} "
          f"seconds={elapsed:.2f} output={args.output}")
    return EXIT_OK


def _format_psnr(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.4f}"


def cmd_sweep(args) -> int:
    try:
        qps = [int(q) for q in args.qps.split(",") if q]
    except ValueError:
        raise BitstreamError(f"--qps must be a comma-separated integer list, "
                             f"got {args.qps!r}") from None
    if not qps:
        raise BitstreamError("--qps is empty")
    pc = load_ply(args.input)
    config = _stage_config(_config_from_args(args, codec=CodecChoice(CODEC_LOSSLESS)),
                           args.stage)
    bs, states = encode_with_state(pc, config)

    rows = []
    n = pc.n
    for qp in qps:
        try:
            choice = CodecChoice(CODEC_BPG, qp=qp)
            attrs = pc.attributes.copy()
            records = []
            for state, record in zip(states, bs.patches):
                blob = compress(state.image, choice)
                pixels = decompress(blob)
                image = AttributeImage(
                    width=state.image.width, height=state.image.height,
                    pixels=pixels, occupancy=state.image.occupancy,
                    provenance=state.image.provenance,
                )
                attrs[state.index_map] = decode_attributes(image, state.table)
                records.append(dataclasses.replace(record, payload=blob.payload))
            stream = Bitstream(config=dataclasses.replace(config, codec=choice),
                               patches=tuple(records))
            rows.append({
                "qp": qp,
                "bpp": f"{bits_per_point(len(stream.serialize()), n):.6f}",
                "y_psnr": _format_psnr(y_psnr(attrs, pc.attributes)),
                "stage": args.stage,
            })
        except CodecError as exc:
            print(f"qp {qp}: {exc}", file=sys.stderr)

    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=["qp", "bpp", "y_psnr", "stage"])
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()
    if not rows:
        return EXIT_EXTERNAL_CODEC
    return EXIT_OK


def cmd_ablation(args) -> int:
    pc = load_ply(args.input)
    # the ablation never touches an image codec; any valid choice works
    config = _config_from_args(args, codec=CodecChoice(CODEC_LOSSLESS))
    report = run_stage_ablation(pc, config)
    payload = {
        "stages": [
            {
                "label": stage.label,
                "y_psnr_db": ("inf" if math.isinf(stage.y_psnr_db)
                              else round(stage.y_psnr_db, 4)),
                "occupancy_histogram": {str(occ): count
                                        for occ, count in stage.occupancy_histogram},
            }
            for stage in report.stages
        ]
    }
    text = json.dumps(payload, indent=2)
    if args.output:
        Path(args.output).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_selftest(args) -> int:
    failures = run_selftest(print)
    return EXIT_OK if failures == 0 else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foldcodec",
        description="Point cloud attribute codec based on grid folding.",
    )
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for neighbor queries (default: 1); "
                             "results are identical for any value")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="compress attributes of a PLY cloud")
    p.add_argument("input", help="input .ply with colors")
    p.add_argument("output", help="output bitstream file")
    _add_config_flags(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="recover attributes from geometry + bitstream")
    p.add_argument("geometry", help="geometry .ply (positions; colors ignored)")
    p.add_argument("bitstream", help="bitstream file from encode")
    p.add_argument("output", help="output .ply with decoded colors")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("sweep", help="rate-distortion sweep over QP values (CSV)")
    p.add_argument("input", help="input .ply with colors")
    p.add_argument("--qps", default=",".join(str(q) for q in DEFAULT_QPS),
                   help="comma-separated QP list (default: %(default)s)")
    p.add_argument("--stage", choices=STAGES, default="optimized",
                   help="pipeline stage to evaluate (default: %(default)s)")
    p.add_argument("--output", default=None, help="CSV path (default: stdout)")
    _add_config_flags(p, with_codec=False)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablation", help="per-stage mapping distortion report (JSON)")
    p.add_argument("input", help="input .ply with colors")
    p.add_argument("--output", default=None, help="JSON path (default: stdout)")
    _add_config_flags(p, with_codec=False)
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("selftest", help="run the embedded oracle suite")
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        set_num_threads(args.threads)
        return args.func(args)
    except SystemExit:
        raise
    except KeyboardInterrupt:
        return EXIT_FAILURE
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _classify(exc)


if __name__ == "__main__":
    sys.exit(main())
