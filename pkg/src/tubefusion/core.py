"""Shared domain types, video segmentation and seeded random streams."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptyVideo, ShapeError

DEFAULT_SEGMENT_LENGTH = 15
DEFAULT_STRIDE = 10


@dataclass(frozen=True)
class Segment:
    start_frame: int
    end_frame: int
    segment_index: int

    @property
    def length(self):
        return self.end_frame - self.start_frame

    def frames(self):
        return range(self.start_frame, self.end_frame)


@dataclass(frozen=True)
class FrameSequence:
    """Ordered frames of one video, stored as a (T, H, W) or (T, H, W, C) uint8 array."""

    frames: np.ndarray
    frame_rate: Optional[float] = None

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim not in (3, 4) or frames.shape[0] < 1:
            raise ShapeError(f"expected (T, H, W[, C]) frames, got shape {frames.shape}")
        frames = np.ascontiguousarray(frames)
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    def __len__(self):
        return self.frames.shape[0]

    @property
    def height(self):
        return self.frames.shape[1]

    @property
    def width(self):
        return self.frames.shape[2]

    def gray(self):
        """Float64 grayscale frames in [0, 1], shape (T, H, W)."""
        if self.frames.ndim == 4:
            return np.stack([to_gray(f) for f in self.frames])
        return self.frames.astype(np.float64) / 255.0


_LUMA = np.array([0.299, 0.587, 0.114])


def to_gray(image):
    """Convert one uint8 gray (H, W) or RGB(A) (H, W, C) image to float64 in [0, 1]."""
    a = np.asarray(image)
    if a.ndim == 3:
        a = a[..., :3].astype(np.float64) @ _LUMA
    elif a.ndim != 2:
        raise ShapeError(f"expected a 2-D or 3-D image, got shape {a.shape}")
    if np.issubdtype(np.asarray(image).dtype, np.integer):
        return a.astype(np.float64) / 255.0
    return a.astype(np.float64)


def segment_video(frame_count, segment_length=DEFAULT_SEGMENT_LENGTH, stride=DEFAULT_STRIDE):
    """Split ``frame_count`` frames into overlapping fixed-length segments.

    Trailing frames that cannot fill a whole segment are dropped.
    """
    if stride < 1 or stride >= segment_length:
        raise ValueError(f"need 1 <= stride < segment_length, got stride={stride}, "
                         f"segment_length={segment_length}")
    if frame_count < 1:
        raise ValueError("frame_count must be >= 1")
    if frame_count < segment_length:
        raise EmptyVideo(f"{frame_count} frames is shorter than one "
                         f"{segment_length}-frame segment")
    starts = range(0, frame_count - segment_length + 1, stride)
    return [Segment(s, s + segment_length, t) for t, s in enumerate(starts)]


def make_rng(seed, *stream):
    """Independent numpy Generator for ``seed`` and an optional stream key.

    String keys (e.g. a video path) are hashed so each video gets its own
    reproducible stream regardless of processing order.
    """
    words = []
    for key in stream:
        if isinstance(key, str):
            digest = hashlib.sha256(key.encode("utf-8")).digest()
            words.extend(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))
        else:
            words.append(int(key))
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), *words]))


@dataclass
class StageTimer:
    """Accumulates wall time per named pipeline stage."""

    seconds: dict = field(default_factory=dict)

    def add(self, name, dt):
        self.seconds[name] = self.seconds.get(name, 0.0) + dt
