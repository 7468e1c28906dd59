"""Image compression backends and rate/distortion measures.

Two codecs: a bundled lossless baseline (16-byte dimension header plus a
deflate stream, always available) and an adapter that shells out to an
external BPG/HEVC-intra encoder pair in 4:4:4 mode. The adapter hands
images over as binary PPM files; binaries default to bpgenc/bpgdec and can
be overridden with FOLDCODEC_BPGENC / FOLDCODEC_BPGDEC (values are
shell-split, so interpreters work too).
"""

from __future__ import annotations

import math
import os
import shlex
import shutil
import struct
import subprocess
import tempfile
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CODEC_LOSSLESS = "lossless-baseline"
CODEC_BPG = "external-bpg"

_MAGIC = b"FIMG"
_HEADER = struct.Struct("<4sIII")  # magic, width, height, channels


class CodecError(Exception):
    pass


@dataclass(frozen=True)
class CodecChoice:
    id: str
    qp: int | None = None

    def __post_init__(self):
        if self.id == CODEC_LOSSLESS:
            if self.qp is not None:
                raise ValueError("lossless baseline takes no qp")
        elif self.id == CODEC_BPG:
            if self.qp is None or not 0 <= self.qp <= 51:
                raise ValueError("external codec needs qp in [0, 51]")
        else:
            raise ValueError(f"unknown codec id: {self.id!r}")


@dataclass(frozen=True)
class CompressedImage:
    codec_id: str
    qp: int | None
    width: int
    height: int
    payload: bytes

    @property
    def payload_length(self) -> int:
        return len(self.payload)


def _check_pixels(pixels: np.ndarray) -> np.ndarray:
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
        raise ValueError("pixels must be a (h, w, 3) uint8 array")
    return np.ascontiguousarray(pixels)


def _encoder_command() -> list[str]:
    return shlex.split(os.environ.get("FOLDCODEC_BPGENC", "bpgenc"))


def _decoder_command() -> list[str]:
    return shlex.split(os.environ.get("FOLDCODEC_BPGDEC", "bpgdec"))


def external_codec_available() -> bool:
    """True when both external codec binaries resolve on PATH."""
    return (shutil.which(_encoder_command()[0]) is not None
            and shutil.which(_decoder_command()[0]) is not None)


def _run(cmd: list[str]) -> None:
    try:
        proc = subprocess.run(cmd, capture_output=True, text=True)
    except FileNotFoundError:
        raise CodecError(f"external codec binary not found: {cmd[0]}") from None
    if proc.returncode != 0:
        raise CodecError(
            f"{cmd[0]} exited with status {proc.returncode}: {proc.stderr.strip()}"
        )


def write_ppm(path: str | Path, pixels: np.ndarray) -> None:
    pixels = _check_pixels(pixels)
    h, w = pixels.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


def read_ppm(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    # header: P6, width, height, maxval as whitespace-separated tokens,
    # possibly interleaved with # comments
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise CodecError("truncated PPM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    if tokens[0] != b"P6":
        raise CodecError("not a binary PPM file")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise CodecError("malformed PPM header") from None
    if maxval != 255:
        raise CodecError(f"unsupported PPM maxval {maxval}")
    raw = data[pos:pos + w * h * 3]
    if len(raw) != w * h * 3:
        raise CodecError("truncated PPM pixel data")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3).copy()


def _compress_lossless(pixels: np.ndarray) -> bytes:
    h, w = pixels.shape[:2]
    header = _HEADER.pack(_MAGIC, w, h, 3)
    return header + zlib.compress(pixels.tobytes(), 9)


def _decompress_lossless(payload: bytes, width: int, height: int) -> np.ndarray:
    if len(payload) < _HEADER.size:
        raise CodecError("payload shorter than its header")
    magic, w, h, channels = _HEADER.unpack_from(payload)
    if magic != _MAGIC or channels != 3:
        raise CodecError("bad payload header")
    if (w, h) != (width, height):
        raise CodecError("payload header dims disagree with container")
    try:
        raw = zlib.decompress(payload[_HEADER.size:])
    except zlib.error as exc:
        raise CodecError(f"corrupt deflate stream: {exc}") from None
    if len(raw) != w * h * 3:
        raise CodecError("decompressed size does not match dims")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3).copy()


def _compress_external(pixels: np.ndarray, qp: int) -> bytes:
    with tempfile.TemporaryDirectory(prefix="foldcodec-") as tmp:
        src = Path(tmp) / "in.ppm"
        dst = Path(tmp) / "out.bpg"
        write_ppm(src, pixels)
        _run(_encoder_command() + ["-q", str(qp), "-f", "444", "-o", str(dst), str(src)])
        try:
            return dst.read_bytes()
        except FileNotFoundError:
            raise CodecError("external encoder produced no output file") from None


def _decompress_external(payload: bytes, width: int, height: int) -> np.ndarray:
    with tempfile.TemporaryDirectory(prefix="foldcodec-") as tmp:
        src = Path(tmp) / "in.bpg"
        dst = Path(tmp) / "out.ppm"
        src.write_bytes(payload)
        _run(_decoder_command() + ["-o", str(dst), str(src)])
        try:
            pixels = read_ppm(dst)
        except FileNotFoundError:
            raise CodecError("external decoder produced no output file") from None
    if pixels.shape[:2] != (height, width):
        raise CodecError(
            f"external codec changed dims from {width}x{height} "
            f"to {pixels.shape[1]}x{pixels.shape[0]}"
        )
    return pixels


def compress(image, choice: CodecChoice) -> CompressedImage:
    """Compress an AttributeImage (or bare pixel array) with the chosen codec."""
    pixels = _check_pixels(getattr(image, "pixels", image))
    h, w = pixels.shape[:2]
    if choice.id == CODEC_LOSSLESS:
        payload = _compress_lossless(pixels)
    else:
        payload = _compress_external(pixels, choice.qp)
    return CompressedImage(codec_id=choice.id, qp=choice.qp, width=w, height=h,
                           payload=payload)


def decompress(blob: CompressedImage) -> np.ndarray:
    """Recover (h, w, 3) uint8 pixels from a CompressedImage."""
    if blob.codec_id == CODEC_LOSSLESS:
        return _decompress_lossless(blob.payload, blob.width, blob.height)
    if blob.codec_id == CODEC_BPG:
        return _decompress_external(blob.payload, blob.width, blob.height)
    raise CodecError(f"unknown codec id: {blob.codec_id!r}")


def y_psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB over BT.709 luma (peak 255). Returns inf when equal."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim < 1 or a.shape[-1] != 3:
        raise ValueError("attributes must have a trailing RGB axis")
    weights = np.array([0.2126, 0.7152, 0.0722])
    ya = a @ weights
    yb = b @ weights
    mse = float(np.mean((ya - yb) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def bits_per_point(payload_bytes: int, n: int) -> float:
    """Rate in bits per point for a payload of the given size."""
    if n < 1:
        raise ValueError("point count must be >= 1")
    if payload_bytes < 0:
        raise ValueError("payload size cannot be negative")
    return 8.0 * payload_bytes / n
