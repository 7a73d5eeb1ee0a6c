"""On-disk formats: VTEN tensors, frame directories, trajectory point files.

VTEN layout (all integers little-endian)::

    b"VTEN" | u8 version=1 | u8 dtype (0=f32, 1=f64) | u32 rank | rank x u32 dims | payload

The payload is the row-major array in little-endian byte order.
"""
from __future__ import annotations

import io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .core import FrameSequence
from .errors import FormatError

VTEN_MAGIC = b"VTEN"
VTEN_VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}

FRAME_SUFFIXES = (".png", ".pgm", ".ppm", ".pnm")


def vten_bytes(array, dtype=np.float32):
    a = np.array(array, dtype=np.dtype(dtype).newbyteorder("<"), order="C")
    code = _CODES.get(a.dtype)
    if code is None:
        raise FormatError(f"VTEN stores float32 or float64, not {dtype}")
    header = VTEN_MAGIC + struct.pack("<BBI", VTEN_VERSION, code, a.ndim)
    header += struct.pack(f"<{a.ndim}I", *a.shape)
    return header + a.tobytes(order="C")


def vten_from_bytes(buf):
    if len(buf) < 10 or buf[:4] != VTEN_MAGIC:
        raise FormatError("not a VTEN tensor (bad magic)")
    version, code, rank = struct.unpack_from("<BBI", buf, 4)
    if version != VTEN_VERSION:
        raise FormatError(f"unsupported VTEN version {version}")
    if code not in _DTYPES:
        raise FormatError(f"unknown VTEN dtype code {code}")
    offset = 10
    if len(buf) < offset + 4 * rank:
        raise FormatError("truncated VTEN header")
    dims = struct.unpack_from(f"<{rank}I", buf, offset)
    offset += 4 * rank
    dtype = _DTYPES[code]
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    if len(buf) - offset != count * dtype.itemsize:
        raise FormatError(f"VTEN payload is {len(buf) - offset} bytes, "
                          f"expected {count * dtype.itemsize}")
    return np.frombuffer(buf, dtype=dtype, count=count, offset=offset).reshape(dims).copy()


def atomic_write_bytes(path, data):
    """Write via a temp file in the same directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def write_vten(path, array, dtype=np.float32):
    atomic_write_bytes(path, vten_bytes(array, dtype))


def read_vten(path):
    return vten_from_bytes(Path(path).read_bytes())


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def list_frame_files(directory):
    """Image files in ``directory``; lexicographic order is temporal order."""
    directory = Path(directory)
    return sorted(p for p in directory.iterdir()
                  if p.is_file() and p.suffix.lower() in FRAME_SUFFIXES)


def read_frames(directory, frame_rate=None):
    files = list_frame_files(directory)
    if not files:
        raise FormatError(f"no frame images in {directory}")
    frames = []
    for p in files:
        with Image.open(p) as im:
            im.load()
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB" if "A" in im.mode or im.mode == "P" else "L")
            frames.append(np.asarray(im, dtype=np.uint8))
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise FormatError(f"frames in {directory} have differing shapes {sorted(shapes)}")
    return FrameSequence(np.stack(frames), frame_rate)


def write_frames(directory, frames, prefix="frame_", fmt="png"):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, frame in enumerate(np.asarray(frames)):
        p = directory / f"{prefix}{k:05d}.{fmt}"
        buf = io.BytesIO()
        Image.fromarray(np.asarray(frame, dtype=np.uint8)).save(buf, format="PNG" if fmt == "png" else "PPM")
        atomic_write_bytes(p, buf.getvalue())
        paths.append(p)
    return paths


def read_trajectory_points(path):
    """Parse ``frame_index x y trajectory_id`` lines into {frame: (n, 3) array of x, y, id}."""
    per_frame = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            try:
                frame, x, y, tid = int(parts[0]), float(parts[1]), float(parts[2]), int(parts[3])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            per_frame.setdefault(frame, []).append((x, y, tid))
    return {k: np.asarray(v, dtype=np.float64).reshape(-1, 3) for k, v in sorted(per_frame.items())}


def write_trajectory_points(path, point_sets):
    lines = []
    for ps in point_sets:
        for x, y, tid in ps.points:
            lines.append(f"{ps.frame_index} {float(x)!r} {float(y)!r} {int(tid)}")
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))
