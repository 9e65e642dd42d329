"""File formats: rasters (8-bit PGM and the lossless FRAS container),
kernel text files, region masks, and trace CSVs.

FRAS layout: magic "FRAS", 32-bit little-endian unsigned width and height,
then width * height IEEE-754 float64 little-endian values, row-major.
CSV values use '.' decimals and 17 significant digits, locale independent.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import ConvergenceTrace, FormatError, Raster, TraceRecord
from .metrics import RoiMask
from .operators import Kernel

_FRAS_MAGIC = b"FRAS"
TRACE_HEADER = "iter,f,g,h,residual_sq,psnr"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


# -- PGM ---------------------------------------------------------------------

def _read_pgm_tokens(data: bytes, count: int):
    """Yield `count` header tokens, honoring '#' comments."""
    tokens = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise FormatError("truncated PGM header")
        c = data[i:i + 1]
        if c == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace():
                j += 1
            tokens.append(data[i:j])
            i = j
    return tokens, i + 1  # single whitespace byte separates header from payload


def load_pgm(path) -> Raster:
    data = Path(path).read_bytes()
    tokens, offset = _read_pgm_tokens(data, 4)
    if tokens[0] != b"P5":
        raise FormatError(f"not a binary PGM file: magic {tokens[0]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"bad PGM header in {path}") from exc
    if width <= 0 or height <= 0:
        raise FormatError("PGM dimensions must be positive")
    if not 0 < maxval < 256:
        raise FormatError(f"only 8-bit PGM supported, maxval {maxval}")
    payload = data[offset:offset + width * height]
    if len(payload) < width * height:
        raise FormatError(f"truncated PGM payload in {path}")
    vals = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / maxval
    return Raster(width, height, vals)


def save_pgm(path, raster: Raster, peak: float = 1.0):
    """Clamp to [0, peak], quantize to 8 bits with round-half-up."""
    clipped = np.clip(raster.values / peak, 0.0, 1.0)
    quantized = np.floor(clipped * 255.0 + 0.5).astype(np.uint8)
    header = f"P5\n{raster.width} {raster.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + quantized.tobytes())


# -- FRAS --------------------------------------------------------------------

def load_fras(path) -> Raster:
    data = Path(path).read_bytes()
    if data[:4] != _FRAS_MAGIC:
        raise FormatError(f"not a FRAS file: magic {data[:4]!r}")
    if len(data) < 12:
        raise FormatError("truncated FRAS header")
    width, height = struct.unpack("<II", data[4:12])
    n = width * height
    payload = data[12:12 + 8 * n]
    if len(payload) < 8 * n:
        raise FormatError(f"truncated FRAS payload in {path}")
    return Raster(width, height, np.frombuffer(payload, dtype="<f8"))


def save_fras(path, raster: Raster):
    header = _FRAS_MAGIC + struct.pack("<II", raster.width, raster.height)
    Path(path).write_bytes(header + raster.values.astype("<f8").tobytes())


def load_raster(path) -> Raster:
    """Dispatch on magic bytes: FRAS or binary PGM."""
    head = Path(path).open("rb").read(4)
    if head[:4] == _FRAS_MAGIC:
        return load_fras(path)
    if head[:2] == b"P5":
        return load_pgm(path)
    raise FormatError(f"unrecognized raster magic {head!r} in {path}")


def save_raster(path, raster: Raster, format: str | None = None, peak: float = 1.0):
    """Write PGM (lossy 8-bit) or FRAS (lossless); inferred from the suffix."""
    if format is None:
        format = Path(path).suffix.lstrip(".").lower()
    if format == "pgm":
        save_pgm(path, raster, peak)
    elif format == "fras":
        save_fras(path, raster)
    else:
        raise FormatError(f"unknown raster format {format!r}")


# -- masks and kernels -------------------------------------------------------

def load_roi_mask(path, label: str = "") -> RoiMask:
    """PGM mask: nonzero bytes are inside the region."""
    raster = load_pgm(path)
    return RoiMask(raster.width, raster.height, raster.values > 0, label)


def load_kernel(path) -> Kernel:
    text = Path(path).read_text()
    tokens = text.split()
    if len(tokens) < 2:
        raise FormatError(f"kernel file {path} lacks a size line")
    try:
        width, height = int(tokens[0]), int(tokens[1])
        weights = np.array([float(t) for t in tokens[2:]])
    except ValueError as exc:
        raise FormatError(f"malformed kernel file {path}") from exc
    if weights.size != width * height:
        raise FormatError(
            f"kernel file {path} advertises {width * height} weights, has {weights.size}"
        )
    return Kernel(width, height, weights)


def save_kernel(path, kernel: Kernel):
    lines = [f"{kernel.width} {kernel.height}"]
    for row in kernel.grid:
        lines.append(" ".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


# -- traces ------------------------------------------------------------------

def save_trace_csv(path, trace: ConvergenceTrace):
    lines = [TRACE_HEADER]
    for r in trace:
        lines.append(",".join([
            str(r.iteration), _fmt(r.f_value), _fmt(r.g_value), _fmt(r.h_value),
            _fmt(r.residual_sq), _fmt(r.psnr),
        ]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_trace_csv(path) -> ConvergenceTrace:
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0].strip() != TRACE_HEADER:
        raise FormatError(f"unexpected trace header in {path}")
    trace = ConvergenceTrace()
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 6:
            raise FormatError(f"malformed trace row: {line!r}")
        try:
            trace.append(TraceRecord(int(parts[0]), *(float(p) for p in parts[1:])))
        except ValueError as exc:
            raise FormatError(f"malformed trace row: {line!r}") from exc
    return trace
