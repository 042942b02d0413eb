"""
Middlebury .flo files.

Layout (little-endian): 4-byte magic "PIEH" (float32 202021.25), int32 width,
int32 height, then height rows of width interleaved float32 (u, v) pairs.
"""
from pathlib import Path
from typing import Union

import numpy as np

from src.core.errors import FlowFormatError, GridError
from src.core.grid import FlowField

TAG_FLOAT = 202021.25
TAG_BYTES = b"PIEH"
HEADER_BYTES = 12
# 2^28 pixels keeps the payload under 2 GiB
MAX_PIXELS = 1 << 28

# marker for unknown flow in ground truth files
UNKNOWN_FLOW = 1e10


def decode_flo(data: bytes, source: str = "<bytes>") -> FlowField:
    if len(data) < HEADER_BYTES:
        raise FlowFormatError(f"{source}: truncated header ({len(data)} bytes)")
    if data[:4] != TAG_BYTES:
        magic = np.frombuffer(data[:4], dtype="<f4")[0]
        raise FlowFormatError(f"{source}: bad magic {magic!r}, expected {TAG_FLOAT}")
    w, h = (int(x) for x in np.frombuffer(data[4:12], dtype="<i4"))
    if w <= 0 or h <= 0 or w * h > MAX_PIXELS:
        raise FlowFormatError(f"{source}: implausible dimensions {w}x{h}")
    expected = HEADER_BYTES + 8 * w * h
    if len(data) < expected:
        raise FlowFormatError(f"{source}: truncated payload ({len(data)} of {expected} bytes)")
    uv = np.frombuffer(data[HEADER_BYTES:expected], dtype="<f4").reshape(h, w, 2)
    try:
        return FlowField(uv[..., 0].astype(np.float64), uv[..., 1].astype(np.float64))
    except GridError as e:
        raise FlowFormatError(f"{source}: {e}") from e


def encode_flo(v: FlowField) -> bytes:
    h, w = v.shape
    uv = np.stack([v.vx, v.vy], axis=-1).astype("<f4")
    header = TAG_BYTES + np.array([w, h], dtype="<i4").tobytes()
    return header + uv.tobytes()


def read_flo(path: Union[str, Path]) -> FlowField:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise FlowFormatError(f"flow file not found: {path}") from None
    return decode_flo(data, str(path))


def write_flo(path: Union[str, Path], v: FlowField) -> None:
    Path(path).write_bytes(encode_flo(v))
