"""Per-video feature extraction: from frames to HOOF sets and static vectors."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..clustering import ClusteringParams, frame_action_boxes
from ..core import FrameSequence, segment_video
from ..descriptors import extract_segment_hoofs, parse_static_provider, static_descriptor
from ..errors import NoMotion
from ..trajectory import TrackerParams, point_sets_from_file, track_points, video_flows
from ..tubes import segment_tubes

TRAJECTORY_SIDECAR = "trajectories.txt"


@dataclass
class VideoFeatures:
    """Everything cached for one video.

    ``hoofs`` stacks the HOOF vectors of all segments; ``hoof_segment[i]``
    is the segment that row i came from.  ``static`` has one row per segment.
    """

    hoofs: np.ndarray
    hoof_segment: np.ndarray
    static: np.ndarray
    n_frames: int
    n_segments: int
    no_motion_segments: list = field(default_factory=list)
    tube_counts: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def segment_hoofs(self, t):
        return self.hoofs[self.hoof_segment == t]


def tracker_params(config):
    return TrackerParams(config.grid_step, config.mag_threshold, config.max_trajectory_length,
                         config.max_jump, config.min_displacement)


def per_frame_boxes(point_sets, frame_size, config):
    params = ClusteringParams(config.eps, config.min_points, config.min_box_side)
    return [frame_action_boxes(ps.xy, ps.frame_index, frame_size, params).boxes
            for ps in point_sets]


def extract_frames(video, config, video_dir=None):
    """Run the motion and static chains over a ``FrameSequence``."""
    timings = {}
    t0 = time.perf_counter()
    segments = segment_video(len(video), config.segment_length, config.stride)
    gray = video.gray()
    flows = video_flows(gray, config.flow_window, config.pyramid_levels, config.eig_threshold)
    # flow leaving each frame; the last frame reuses the final pair
    flow_by_frame = flows + flows[-1:]
    timings["flow"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    sidecar = Path(video_dir) / TRAJECTORY_SIDECAR if video_dir is not None else None
    if sidecar is not None and sidecar.exists():
        point_sets = point_sets_from_file(sidecar, len(video), video.width, video.height)
    else:
        point_sets = track_points(flows, tracker_params(config))
    timings["trajectories"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    frame_size = (video.width, video.height)
    boxes = per_frame_boxes(point_sets, frame_size, config)
    timings["clustering"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    hoof_rows, hoof_seg, no_motion, tube_counts = [], [], [], []
    for seg in segments:
        frames = list(seg.frames())
        try:
            _, tubes = segment_tubes([boxes[k] for k in frames], frames, frame_size)
        except NoMotion:
            no_motion.append(seg.segment_index)
            tube_counts.append(0)
            continue
        tube_counts.append(len(tubes))
        h = extract_segment_hoofs(tubes, flow_by_frame, config.hoof_bins)
        hoof_rows.append(h)
        hoof_seg.append(np.full(len(h), seg.segment_index))
    timings["tubes_hoof"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    provider = parse_static_provider(config.static_provider, config.codebook_k, video_dir)
    static = np.array([static_descriptor(video.frames[seg.start_frame:seg.end_frame], provider,
                                         list(seg.frames())) for seg in segments])
    timings["static"] = time.perf_counter() - t0

    hoofs = np.concatenate(hoof_rows) if hoof_rows else np.zeros((0, config.hoof_bins))
    hoof_segment = np.concatenate(hoof_seg) if hoof_seg else np.zeros(0, dtype=int)
    return VideoFeatures(hoofs, hoof_segment.astype(int), static, len(video), len(segments),
                         no_motion, tube_counts, timings)


def motion_series(features, codebook, normalize="l1"):
    """(n_segments, k) bag-of-HOOF histograms; segments without motion stay zero."""
    from ..descriptors import encode_bow

    k = codebook.k
    out = np.zeros((features.n_segments, k))
    for t in range(features.n_segments):
        h = features.segment_hoofs(t)
        if len(h):
            out[t] = encode_bow(h, codebook)
    if normalize == "l1":
        sums = out.sum(axis=1, keepdims=True)
        out = np.divide(out, sums, out=np.zeros_like(out), where=sums > 0)
    return out


def load_video(video_dir):
    from ..formats import read_frames

    return read_frames(video_dir)


def extract_video(video_dir, config):
    return extract_frames(load_video(video_dir), config, video_dir)


def frames_to_sequence(frames):
    return FrameSequence(np.asarray(frames, dtype=np.uint8))
