"""On-disk formats: 16-bit PGM depth maps and raw float32 grid containers.

Depth PGMs follow the KITTI-style convention: pixel = round(depth_m * 256),
0 marks an invalid pixel, stored as binary P5 with maxval 65535 (big endian).
Raw grids carry a 16-byte header (4-byte magic, uint32 width/height/channels,
little endian) followed by float32 data in row-major (H, W, C) order.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Union

import numpy as np

from .association import NeighborhoodSpec, PdaVolume
from .depth import DepthImage
from .errors import DataError
from .mer import MerImage

GRID_MAGIC = b"FGR1"
PDA_MAGIC = b"PDAV"
LABEL_MAGIC = b"PDAB"
MER_MAGIC = b"MER1"

PathLike = Union[str, Path]


def write_pgm16(path: PathLike, depth: DepthImage, scale: float = 256.0) -> None:
    """Write a depth image as a 16-bit binary PGM (0 = invalid)."""
    q = np.round(depth.values * scale)
    q[~depth.valid_mask] = 0
    q = np.clip(q, 0, 65535).astype(">u2")
    header = f"P5\n{depth.width} {depth.height}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + q.tobytes())


def read_pgm16(path: PathLike, scale: float = 256.0) -> DepthImage:
    raw = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        nxt = raw.index(b"\n", pos)
        token = raw[pos:nxt]
        if token.startswith(b"#"):
            pos = nxt + 1
            continue
        fields.extend(token.split())
        pos = nxt + 1
    if fields[0] != b"P5":
        raise DataError(f"{path}: not a binary PGM")
    width, height, maxval = (int(f) for f in fields[1:4])
    if maxval != 65535:
        raise DataError(f"{path}: expected 16-bit PGM, got maxval {maxval}")
    data = np.frombuffer(raw[pos:], dtype=">u2", count=width * height)
    return DepthImage(data.reshape(height, width).astype(float) / scale)


def write_pgm8(path: PathLike, gray: np.ndarray) -> None:
    """Write an 8-bit grayscale raster (used by the plot command)."""
    g = np.asarray(gray)
    if g.dtype != np.uint8:
        g = np.clip(g, 0, 255).astype(np.uint8)
    h, w = g.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + g.tobytes())


def read_pgm8(path: PathLike) -> np.ndarray:
    raw = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        nxt = raw.index(b"\n", pos)
        token = raw[pos:nxt]
        if token.startswith(b"#"):
            pos = nxt + 1
            continue
        fields.extend(token.split())
        pos = nxt + 1
    width, height, maxval = (int(f) for f in fields[1:4])
    if fields[0] != b"P5" or maxval != 255:
        raise DataError(f"{path}: not an 8-bit binary PGM")
    data = np.frombuffer(raw[pos:], dtype=np.uint8, count=width * height)
    return data.reshape(height, width).copy()


def write_float_grid(path: PathLike, array: np.ndarray) -> None:
    """Write an (H, W) or (H, W, C) array as a raw float32 grid."""
    a = np.asarray(array, dtype=np.float32)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise DataError("grid must be 2-D or 3-D")
    h, w, c = a.shape
    header = GRID_MAGIC + struct.pack("<III", w, h, c)
    Path(path).write_bytes(header + np.ascontiguousarray(a).tobytes())


def read_float_grid(path: PathLike) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != GRID_MAGIC:
        raise DataError(f"{path}: bad grid magic {raw[:4]!r}")
    w, h, c = struct.unpack("<III", raw[4:16])
    data = np.frombuffer(raw[16:], dtype=np.float32, count=w * h * c)
    return data.reshape(h, w, c).copy()


def _pack_spec(spec: NeighborhoodSpec) -> bytes:
    return struct.pack(
        "<6i", spec.width, spec.height, spec.up, spec.down, spec.left, spec.right
    )


def _unpack_spec(blob: bytes) -> NeighborhoodSpec:
    w, h, up, down, left, right = struct.unpack("<6i", blob)
    return NeighborhoodSpec(w, h, up, down, left, right)


def write_pda_volume(path: PathLike, pda: PdaVolume) -> None:
    """Serialize an association volume (float32 payload, spec in the header)."""
    h, w, n = pda.values.shape
    header = PDA_MAGIC + struct.pack("<III", h, w, n) + _pack_spec(pda.spec)
    data = np.ascontiguousarray(pda.values, dtype=np.float32)
    Path(path).write_bytes(header + data.tobytes())


def read_pda_volume(path: PathLike) -> PdaVolume:
    raw = Path(path).read_bytes()
    if raw[:4] != PDA_MAGIC:
        raise DataError(f"{path}: bad association-volume magic {raw[:4]!r}")
    h, w, n = struct.unpack("<III", raw[4:16])
    spec = _unpack_spec(raw[16:40])
    data = np.frombuffer(raw[40:], dtype=np.float32, count=h * w * n)
    return PdaVolume(data.reshape(h, w, n).copy(), spec)


def write_label_volumes(
    path: PathLike, labels: PdaVolume, weights: np.ndarray
) -> None:
    """Serialize binary labels and weights as packed bitsets."""
    h, w, n = labels.values.shape
    bits_a = np.packbits(labels.values.reshape(-1).astype(bool))
    bits_w = np.packbits(np.asarray(weights, dtype=bool).reshape(-1))
    header = LABEL_MAGIC + struct.pack("<III", h, w, n) + _pack_spec(labels.spec)
    Path(path).write_bytes(header + bits_a.tobytes() + bits_w.tobytes())


def read_label_volumes(path: PathLike):
    raw = Path(path).read_bytes()
    if raw[:4] != LABEL_MAGIC:
        raise DataError(f"{path}: bad label-volume magic {raw[:4]!r}")
    h, w, n = struct.unpack("<III", raw[4:16])
    spec = _unpack_spec(raw[16:40])
    total = h * w * n
    nbytes = (total + 7) // 8
    bits_a = np.frombuffer(raw[40 : 40 + nbytes], dtype=np.uint8)
    bits_w = np.frombuffer(raw[40 + nbytes : 40 + 2 * nbytes], dtype=np.uint8)
    labels = np.unpackbits(bits_a, count=total).reshape(h, w, n)
    weights = np.unpackbits(bits_w, count=total).reshape(h, w, n).astype(bool)
    return PdaVolume(labels.astype(np.float32), spec), weights


def write_mer(path: PathLike, mer: MerImage) -> None:
    """Serialize a MER stack with its thresholds."""
    h, w, ne = mer.channels.shape
    header = MER_MAGIC + struct.pack("<III", h, w, ne)
    th = np.asarray(mer.thresholds, dtype=np.float32).tobytes()
    data = np.ascontiguousarray(mer.channels, dtype=np.float32)
    Path(path).write_bytes(header + th + data.tobytes())


def read_mer(path: PathLike) -> MerImage:
    raw = Path(path).read_bytes()
    if raw[:4] != MER_MAGIC:
        raise DataError(f"{path}: bad MER magic {raw[:4]!r}")
    h, w, ne = struct.unpack("<III", raw[4:16])
    th = np.frombuffer(raw[16 : 16 + 4 * ne], dtype=np.float32)
    data = np.frombuffer(raw[16 + 4 * ne :], dtype=np.float32, count=h * w * ne)
    return MerImage(data.reshape(h, w, ne).astype(float), tuple(float(t) for t in th))
