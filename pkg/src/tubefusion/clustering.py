"""Per-frame isolation of significant moving regions as square action boxes."""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .formats import atomic_write_text

DBSCAN_EPS = 8.0
DBSCAN_MIN_POINTS = 10
SIGNIFICANCE_FRACTION = 0.5
TRIM_KEEP_FRACTION = 0.8
MIN_BOX_SIDE = 8


@dataclass
class PointCluster:
    points: np.ndarray  # (n, 2) of x, y
    frame_index: int = 0
    radius: Optional[float] = None  # Chebyshev radius after trimming
    degenerate: bool = False

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)

    @property
    def centroid(self):
        return self.points.mean(axis=0)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class ActionBox:
    """Square region: top-left corner (x, y), side r, frame f."""

    x: float
    y: float
    r: float
    f: int

    @property
    def centroid(self):
        return (self.x + self.r / 2.0, self.y + self.r / 2.0)

    def as_row(self):
        return (self.x, self.y, self.r)


def dbscan(points, eps=DBSCAN_EPS, min_points=DBSCAN_MIN_POINTS, frame_index=0):
    """Density clustering with Euclidean eps-neighbourhoods.

    A point is a core point when its neighbourhood (itself included) holds at
    least ``min_points`` points.  Border points join the first cluster that
    reaches them.  Returns ``(clusters, noise)`` where ``noise`` is an (m, 2)
    array; together they partition the input.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_points < 1:
        raise ValueError("min_points must be >= 1")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        return [], np.zeros((0, 2))
    neighbours = cKDTree(pts).query_ball_point(pts, eps)
    labels = np.full(n, -1)
    visited = np.zeros(n, dtype=bool)
    cluster_id = 0
    for i in range(n):
        if visited[i]:
            continue
        visited[i] = True
        if len(neighbours[i]) < min_points:
            continue
        labels[i] = cluster_id
        queue = deque(neighbours[i])
        while queue:
            j = queue.popleft()
            if not visited[j]:
                visited[j] = True
                if len(neighbours[j]) >= min_points:
                    queue.extend(neighbours[j])
            if labels[j] == -1:
                labels[j] = cluster_id
        cluster_id += 1
    clusters = [PointCluster(pts[labels == c], frame_index) for c in range(cluster_id)]
    return clusters, pts[labels == -1]


def filter_significant(clusters, fraction=SIGNIFICANCE_FRACTION):
    """Keep clusters holding at least ``fraction`` of the largest cluster's points."""
    if not clusters:
        return []
    largest = max(len(c) for c in clusters)
    return [c for c in clusters if len(c) >= fraction * largest]


def chebyshev_to(points, center):
    return np.max(np.abs(np.asarray(points) - np.asarray(center)), axis=1)


def trim_boundary(cluster, keep_fraction=TRIM_KEEP_FRACTION, step=1.0):
    """Shrink the Chebyshev radius about the centroid until fewer than
    ``keep_fraction`` of the points remain, and keep those points.

    The starting radius is the largest observed distance.  If shrinking
    would empty the cluster (all points coincide, or sit on one ring) the
    full cluster is returned with ``degenerate=True``.
    """
    if len(cluster) == 0:
        raise ValueError("cannot trim an empty cluster")
    pts = cluster.points
    dist = chebyshev_to(pts, cluster.centroid)
    radius = float(dist.max())
    total = len(pts)
    current = dist <= radius
    while not current.sum() < total * keep_fraction:
        radius -= step
        current = dist <= radius
    if not current.any():
        return PointCluster(pts.copy(), cluster.frame_index, float(dist.max()), degenerate=True)
    return PointCluster(pts[current], cluster.frame_index, radius)


def fit_action_box(cluster, min_side=MIN_BOX_SIDE, frame_size=None):
    """Square box centred on the cluster centroid with side twice its radius.

    ``frame_size`` is ``(width, height)``; when given the side is capped at
    the shorter frame side and the box is shifted (not shrunk) inside.
    """
    if len(cluster) == 0:
        raise ValueError("cannot fit a box to an empty cluster")
    radius = cluster.radius
    if radius is None:
        radius = float(chebyshev_to(cluster.points, cluster.centroid).max())
    side = max(int(math.floor(2.0 * radius + 0.5)), min_side)
    cx, cy = cluster.centroid
    x = int(math.floor(cx - side / 2.0 + 0.5))
    y = int(math.floor(cy - side / 2.0 + 0.5))
    if frame_size is not None:
        width, height = frame_size
        side = min(side, width, height)
        x = min(max(x, 0), width - side)
        y = min(max(y, 0), height - side)
    else:
        x, y = max(x, 0), max(y, 0)
    return ActionBox(x, y, side, cluster.frame_index)


@dataclass
class ClusteringParams:
    eps: float = DBSCAN_EPS
    min_points: int = DBSCAN_MIN_POINTS
    min_box_side: int = MIN_BOX_SIDE


@dataclass
class FrameClusters:
    frame_index: int
    clusters: list = field(default_factory=list)
    boxes: list = field(default_factory=list)
    noise_count: int = 0


def frame_action_boxes(points, frame_index, frame_size, params=None):
    """Full per-frame chain: cluster, drop insignificant clusters, trim, fit boxes."""
    params = params or ClusteringParams()
    clusters, noise = dbscan(points, params.eps, params.min_points, frame_index)
    trimmed = [trim_boundary(c) for c in filter_significant(clusters)]
    boxes = [fit_action_box(c, params.min_box_side, frame_size) for c in trimmed]
    return FrameClusters(frame_index, trimmed, boxes, len(noise))


def dump_clusters_jsonl(path, frames):
    """Debug dump: one JSON object per frame with memberships and boxes."""
    lines = []
    for fc in frames:
        lines.append(json.dumps({
            "frame": fc.frame_index,
            "noise": fc.noise_count,
            "clusters": [{"points": c.points.tolist(), "radius": c.radius,
                          "degenerate": c.degenerate} for c in fc.clusters],
            "boxes": [[b.x, b.y, b.r] for b in fc.boxes],
        }))
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))
