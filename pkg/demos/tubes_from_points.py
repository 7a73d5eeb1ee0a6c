"""
From tracked points to motion tubes
===================================

Two blobs of points drift across fifteen frames.  One frame misses a blob
and another picks up clutter; the tube builder still returns two tubes.
Run with ``python demos/tubes_from_points.py``.
"""
import numpy as np

from tubefusion.clustering import ClusteringParams, frame_action_boxes
from tubefusion.descriptors import compute_hoof
from tubefusion.tubes import segment_tubes

rng = np.random.default_rng(0)
size = (96, 96)


def blob(cx, cy, n=40):
    return np.c_[cx, cy] + rng.uniform(-4, 4, (n, 2))


# Per frame: cluster the points and fit a square box per significant cluster.
per_frame = []
for k in range(15):
    pts = [blob(15 + 2 * k, 20), blob(70, 20 + 3 * k)]
    if k == 6:
        pts = pts[:1]                 # missed detection
    if k == 9:
        pts.append(blob(85, 85))      # clutter
    boxes = frame_action_boxes(np.vstack(pts), k, size, ClusteringParams()).boxes
    per_frame.append(boxes)
print("boxes per frame:", [len(b) for b in per_frame])

# Equalize counts, link frame to frame, then give each tube one box size.
matrix, tubes = segment_tubes(per_frame, list(range(15)), size)
for t in tubes:
    path = [tuple(round(c) for c in b.centroid) for b in t.boxes]
    print(f"tube {t.index}: side {t.boxes[0].r}, {path[0]} -> {path[-1]}")
print("tube matrix rows (frame, tube, x, y, r):", matrix.rows.shape)

# A HOOF folds opposite directions together and weights by magnitude.
flow = np.array([[3.0, 0.0], [-3.0, 0.0], [0.0, 1.0]])
print("HOOF with 4 bins:", compute_hoof(flow, bins=4).round(3).tolist())
