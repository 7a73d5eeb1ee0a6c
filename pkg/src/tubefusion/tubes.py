"""Link per-frame action boxes of a segment into motion tubes."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .clustering import ActionBox
from .errors import NoMotion, ShapeError
from .formats import read_json, read_vten, write_json, write_vten


@dataclass(frozen=True)
class MotionTube:
    index: int
    boxes: tuple  # one ActionBox per frame, in frame order

    def __len__(self):
        return len(self.boxes)


@dataclass(frozen=True)
class TubeMatrix:
    """(z * N, 5) rows of (frame, tube, x, y, r), grouped by frame."""

    rows: np.ndarray
    n_frames: int
    n_tubes: int

    def __post_init__(self):
        if self.rows.shape != (self.n_frames * self.n_tubes, 5):
            raise ShapeError(f"tube matrix has shape {self.rows.shape}, expected "
                             f"({self.n_frames * self.n_tubes}, 5)")

    def save(self, path, metadata=None):
        write_vten(path, self.rows, dtype=np.float64)
        sidecar = {"n_frames": self.n_frames, "n_tubes": self.n_tubes,
                   "columns": ["frame", "tube", "x", "y", "r"]}
        sidecar.update(metadata or {})
        write_json(str(path) + ".json", sidecar)

    @classmethod
    def load(cls, path):
        meta = read_json(str(path) + ".json")
        return cls(read_vten(path), meta["n_frames"], meta["n_tubes"])


def _centroids(boxes):
    return np.array([b.centroid for b in boxes], dtype=np.float64).reshape(-1, 2)


def distance_matrix(boxes_a, boxes_b):
    """Euclidean distances between box centroids, rows = ``boxes_a``."""
    ca, cb = _centroids(boxes_a), _centroids(boxes_b)
    return np.sqrt(((ca[:, None, :] - cb[None, :, :]) ** 2).sum(axis=2))


def greedy_link(distances):
    """Row-order greedy matching on a (rows <= cols) distance matrix.

    Row 0 takes its nearest column, that row and column are removed, and
    the next row repeats on what is left.  Ties go to the lowest column.
    """
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] > d.shape[1]:
        raise ShapeError(f"need a rows <= cols matrix, got {d.shape}")
    free = np.ones(d.shape[1], dtype=bool)
    out = np.empty(d.shape[0], dtype=int)
    for i in range(d.shape[0]):
        row = np.where(free, d[i], np.inf)
        j = int(np.argmin(row))
        out[i] = j
        free[j] = False
    return out


def link_boxes(boxes_k, boxes_k1):
    """Assignment ``a`` with box i at frame k linked to box ``a[i]`` at frame k+1."""
    if len(boxes_k) != len(boxes_k1):
        raise ShapeError(f"cannot link {len(boxes_k)} boxes to {len(boxes_k1)}")
    if not boxes_k:
        raise ShapeError("cannot link empty box sets")
    return greedy_link(distance_matrix(boxes_k, boxes_k1))


def _round(v):
    return int(math.floor(v + 0.5))


def _clamped_box(x, y, r, f, frame_size):
    r = max(_round(r), 1)
    x, y = _round(x), _round(y)
    if frame_size is not None:
        width, height = frame_size
        r = min(r, width, height)
        x = min(max(x, 0), width - r)
        y = min(max(y, 0), height - r)
    return ActionBox(x, y, r, f)


def _extrapolate(history, frame, frame_size):
    """OLS fit of x, y and r against frame index, evaluated at ``frame``."""
    if len(history) < 2:
        src = min(history, key=lambda b: abs(b.f - frame))
        return _clamped_box(src.x, src.y, src.r, frame, frame_size)
    t = np.array([b.f for b in history], dtype=np.float64)
    vals = np.array([b.as_row() for b in history], dtype=np.float64)
    design = np.column_stack([np.ones_like(t), t])
    coef, *_ = np.linalg.lstsq(design, vals, rcond=None)
    x, y, r = coef[0] + coef[1] * frame
    return _clamped_box(x, y, r, frame, frame_size)


def _drop_excess(boxes, reference, n):
    """Keep ``n`` boxes, dropping those farthest (min centroid distance) from ``reference``."""
    if len(boxes) <= n:
        return list(boxes)
    if not reference:
        return list(boxes[:n])
    nearest = distance_matrix(boxes, reference).min(axis=1)
    keep = np.sort(np.argsort(nearest, kind="stable")[:n])
    return [boxes[i] for i in keep]


def equalize_box_counts(per_frame_boxes, frame_indices=None, frame_size=None):
    """Give every frame of a segment the same number N of boxes.

    N is the floored mean count.  Starting from the first frame holding
    exactly N boxes, frames are processed outwards; surplus boxes farthest
    from the neighbouring processed frame are dropped, and missing boxes are
    synthesised by per-coordinate linear regression over their chain's
    history.  Returns ``(frames, N)``; each output frame lists its N boxes
    in chain order.  Raises ``NoMotion`` when N is 0.
    """
    z = len(per_frame_boxes)
    if z == 0:
        raise ValueError("segment has no frames")
    if frame_indices is None:
        frame_indices = list(range(z))
    counts = np.array([len(b) for b in per_frame_boxes])
    n = int(counts.sum() // z)
    if n == 0:
        raise NoMotion("floored mean action-box count is 0")

    exact = np.flatnonzero(counts == n)
    if len(exact):
        anchor = int(exact[0])
    else:
        # no frame holds exactly N boxes: closest nonempty count, earliest on ties
        candidates = np.flatnonzero(counts > 0)
        anchor = int(candidates[np.argmin(np.abs(counts[candidates] - n))])

    chains = [[None] * z for _ in range(n)]

    def place(j, ordered):
        for c, box in enumerate(ordered):
            chains[c][j] = ActionBox(box.x, box.y, box.r, frame_indices[j])

    anchor_boxes = list(per_frame_boxes[anchor])
    if len(anchor_boxes) > n:
        neighbour = next((per_frame_boxes[j] for j in (anchor + 1, anchor - 1)
                          if 0 <= j < z and per_frame_boxes[j]), [])
        anchor_boxes = _drop_excess(anchor_boxes, list(neighbour), n)
    while len(anchor_boxes) < n:
        anchor_boxes.append(anchor_boxes[len(anchor_boxes) % len(per_frame_boxes[anchor])])
    place(anchor, anchor_boxes)

    order = list(range(anchor + 1, z)) + list(range(anchor - 1, -1, -1))
    for j in order:
        ref_j = j - 1 if j > anchor else j + 1
        reference = [chains[c][ref_j] for c in range(n)]
        current = _drop_excess(list(per_frame_boxes[j]), reference, n)
        ordered = [None] * n
        if current:
            # rows = observed boxes, columns = chains
            link = greedy_link(distance_matrix(current, reference))
            for row, c in enumerate(link):
                ordered[c] = current[row]
        for c in range(n):
            if ordered[c] is None:
                history = [b for b in chains[c] if b is not None]
                ordered[c] = _extrapolate(history, frame_indices[j], frame_size)
        place(j, ordered)

    return [[chains[c][j] for c in range(n)] for j in range(z)], n


def build_motion_tubes(frames, assignments):
    """Compose frame-to-frame assignments into N disjoint tubes.

    ``frames`` holds N boxes per frame; ``assignments[k]`` links frame k to
    frame k+1.  Returns ``(TubeMatrix, tubes)``.
    """
    z = len(frames)
    n = len(frames[0])
    if len(assignments) != z - 1:
        raise ShapeError(f"need {z - 1} assignments for {z} frames, got {len(assignments)}")
    idx = np.arange(n)
    members = [idx.copy()]
    for a in assignments:
        idx = np.asarray(a)[idx]
        members.append(idx.copy())
    tubes = [MotionTube(t, tuple(frames[k][members[k][t]] for k in range(z))) for t in range(n)]
    rows = np.array([(tube.boxes[k].f, tube.index, *tube.boxes[k].as_row())
                     for k in range(z) for tube in tubes], dtype=np.float64)
    return TubeMatrix(rows.reshape(-1, 5), z, n), tubes


def normalize_tube_boxes(tube, frame_size=None):
    """Redraw every box of the tube as an R-sided square about its centroid,
    R being the largest side in the tube."""
    if not tube.boxes:
        raise ValueError("empty tube")
    side = max(b.r for b in tube.boxes)
    boxes = []
    for b in tube.boxes:
        cx, cy = b.centroid
        boxes.append(_clamped_box(cx - side / 2.0, cy - side / 2.0, side, b.f, frame_size))
    return MotionTube(tube.index, tuple(boxes))


def segment_tubes(per_frame_boxes, frame_indices=None, frame_size=None):
    """Equalize, link, compose and normalize: all tubes of one segment."""
    frames, _ = equalize_box_counts(per_frame_boxes, frame_indices, frame_size)
    assignments = [link_boxes(frames[k], frames[k + 1]) for k in range(len(frames) - 1)]
    matrix, tubes = build_motion_tubes(frames, assignments)
    return matrix, [normalize_tube_boxes(t, frame_size) for t in tubes]
