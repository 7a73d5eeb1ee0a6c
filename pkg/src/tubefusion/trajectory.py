"""Dense Lucas-Kanade flow and a grid-seeded point tracker.

The tracker is a lightweight substitute for full dense trajectories: it only
has to report, for every frame, where the moving points are.  Precomputed
trajectory files can replace it entirely (see ``point_sets_from_file``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .core import to_gray
from .errors import ShapeError
from .formats import read_trajectory_points

EIG_THRESHOLD = 1e-3


@dataclass(frozen=True)
class FlowField:
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise ShapeError(f"flow components must be equal 2-D arrays, "
                             f"got {self.u.shape} and {self.v.shape}")

    @property
    def height(self):
        return self.u.shape[0]

    @property
    def width(self):
        return self.u.shape[1]

    @property
    def magnitude(self):
        return np.hypot(self.u, self.v)

    def stacked(self):
        """(2, H, W) array, u then v."""
        return np.stack([self.u, self.v])

    @classmethod
    def zeros(cls, height, width):
        return cls(np.zeros((height, width)), np.zeros((height, width)))


@dataclass(frozen=True)
class Trajectory:
    id: int
    points: tuple  # ((frame_index, x, y), ...)
    alive: bool = True

    @property
    def last(self):
        return self.points[-1]

    def __len__(self):
        return len(self.points)


@dataclass
class TrajectoryPointSet:
    frame_index: int
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))  # rows of x, y, id

    @property
    def xy(self):
        return self.points[:, :2]

    def __len__(self):
        return len(self.points)


def _as_gray(image):
    a = np.asarray(image)
    if a.dtype == np.float64 and a.ndim == 2:
        return a
    return to_gray(a)


def _pyramid(image, levels, min_side=8):
    pyr = [image]
    for _ in range(levels - 1):
        prev = pyr[-1]
        if min(prev.shape) // 2 < min_side:
            break
        pyr.append(ndimage.gaussian_filter(prev, 1.0, mode="nearest")[::2, ::2])
    return pyr


def _min_eigenvalue(sxx, sxy, syy):
    half_trace = 0.5 * (sxx + syy)
    return half_trace - np.sqrt(np.maximum(0.25 * (sxx - syy) ** 2 + sxy ** 2, 0.0))


def _lk_level(prev, nxt, u, v, window, iterations, eig_threshold):
    iy, ix = np.gradient(prev)
    area = float(window * window)
    sxx = ndimage.uniform_filter(ix * ix, window, mode="nearest") * area
    sxy = ndimage.uniform_filter(ix * iy, window, mode="nearest") * area
    syy = ndimage.uniform_filter(iy * iy, window, mode="nearest") * area
    det = sxx * syy - sxy * sxy
    ok = _min_eigenvalue(sxx, sxy, syy) >= eig_threshold
    safe_det = np.where(ok, det, 1.0)
    rows, cols = np.mgrid[0:prev.shape[0], 0:prev.shape[1]].astype(np.float64)
    for _ in range(iterations):
        warped = ndimage.map_coordinates(nxt, [rows + v, cols + u], order=1, mode="nearest")
        it = warped - prev
        sxt = ndimage.uniform_filter(ix * it, window, mode="nearest") * area
        syt = ndimage.uniform_filter(iy * it, window, mode="nearest") * area
        du = (-syy * sxt + sxy * syt) / safe_det
        dv = (sxy * sxt - sxx * syt) / safe_det
        # per-pixel warps amplify noise across iterations unless smoothed
        u = ndimage.median_filter(u + np.where(ok, du, 0.0), 3, mode="nearest")
        v = ndimage.median_filter(v + np.where(ok, dv, 0.0), 3, mode="nearest")
    return u, v, ok


def compute_flow(prev, next, window=5, pyramid_levels=3, iterations=3,
                 eig_threshold=EIG_THRESHOLD):
    """Pyramidal Lucas-Kanade flow from ``prev`` to ``next``.

    Pixels whose structure tensor is near-singular (minimum eigenvalue below
    ``eig_threshold`` at full resolution) get zero flow.  Fewer than
    ``pyramid_levels`` levels are used when a level would be narrower than
    four windows.
    """
    a = _as_gray(prev)
    b = _as_gray(next)
    if a.shape != b.shape:
        raise ShapeError(f"frame shapes differ: {a.shape} vs {b.shape}")
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd number")
    # coarse levels much smaller than the window are dominated by border clamping
    pa = _pyramid(a, max(1, pyramid_levels), min_side=4 * window)
    pb = _pyramid(b, len(pa))
    u = np.zeros_like(pa[-1])
    v = np.zeros_like(pa[-1])
    ok = None
    for level in range(len(pa) - 1, -1, -1):
        if u.shape != pa[level].shape:
            zoom = (pa[level].shape[0] / u.shape[0], pa[level].shape[1] / u.shape[1])
            u = 2.0 * ndimage.zoom(u, zoom, order=1, mode="nearest", grid_mode=True)
            v = 2.0 * ndimage.zoom(v, zoom, order=1, mode="nearest", grid_mode=True)
        u, v, ok = _lk_level(pa[level], pb[level], u, v, window, iterations, eig_threshold)
    u = np.where(ok, u, 0.0)
    v = np.where(ok, v, 0.0)
    u[~np.isfinite(u)] = 0.0
    v[~np.isfinite(v)] = 0.0
    return FlowField(u, v)


def _neighborhood_median(field_, xs, ys):
    h, w = field_.shape
    cx = np.clip(np.rint(xs).astype(int), 0, w - 1)
    cy = np.clip(np.rint(ys).astype(int), 0, h - 1)
    offs = np.arange(-1, 2)
    nx = np.clip(cx[:, None, None] + offs[None, None, :], 0, w - 1)
    ny = np.clip(cy[:, None, None] + offs[None, :, None], 0, h - 1)
    return np.median(field_[ny, nx].reshape(len(xs), -1), axis=1)


def advance_trajectories(live, flow, frame_index, max_length=15, max_jump=8.0):
    """Move every live trajectory to ``frame_index`` along the median local flow.

    Returns ``(updated_live, terminated)``.  Trajectories that would leave
    the frame, jump further than ``max_jump`` pixels, or are already
    ``max_length`` points long are terminated instead.
    """
    if not live:
        return [], []
    xs = np.array([t.last[1] for t in live], dtype=np.float64)
    ys = np.array([t.last[2] for t in live], dtype=np.float64)
    du = _neighborhood_median(flow.u, xs, ys)
    dv = _neighborhood_median(flow.v, xs, ys)
    nx, ny = xs + du, ys + dv
    updated, terminated = [], []
    for t, x, y, step in zip(live, nx, ny, np.hypot(du, dv)):
        if t.last[0] != frame_index - 1:
            raise ValueError(f"trajectory {t.id} ends at frame {t.last[0]}, "
                             f"cannot advance to {frame_index}")
        inside = 0.0 <= x <= flow.width - 1 and 0.0 <= y <= flow.height - 1
        if len(t) >= max_length or not inside or step > max_jump:
            terminated.append(Trajectory(t.id, t.points, alive=False))
        else:
            updated.append(Trajectory(t.id, t.points + ((frame_index, float(x), float(y)),)))
    return updated, terminated


def seed_points(flow, live, grid_step=5, mag_threshold=0.5, frame_index=0, first_id=0):
    """Start new trajectories in unoccupied grid cells with enough motion.

    Each qualifying cell gets one seed at its maximum-magnitude pixel.
    """
    if grid_step < 1:
        raise ValueError("grid_step must be >= 1")
    h, w = flow.height, flow.width
    ny, nx = -(-h // grid_step), -(-w // grid_step)
    occupied = np.zeros((ny, nx), dtype=bool)
    for t in live:
        _, x, y = t.last
        cy = min(int(np.floor(y)) // grid_step, ny - 1)
        cx = min(int(np.floor(x)) // grid_step, nx - 1)
        occupied[cy, cx] = True
    # pad the magnitude image to whole cells, then view it as (ny, g, nx, g)
    mag = np.full((ny * grid_step, nx * grid_step), -np.inf)
    mag[:h, :w] = flow.magnitude
    cells = mag.reshape(ny, grid_step, nx, grid_step).transpose(0, 2, 1, 3).reshape(ny, nx, -1)
    best = cells.argmax(axis=2)
    best_mag = np.take_along_axis(cells, best[..., None], axis=2)[..., 0]
    seeds = []
    next_id = first_id
    for cy, cx in zip(*np.nonzero((best_mag >= mag_threshold) & ~occupied)):
        r, c = divmod(int(best[cy, cx]), grid_step)
        seeds.append(Trajectory(next_id, ((frame_index, float(cx * grid_step + c),
                                           float(cy * grid_step + r)),)))
        next_id += 1
    return seeds


@dataclass
class TrackerParams:
    grid_step: int = 5
    mag_threshold: float = 0.5
    max_length: int = 15
    max_jump: float = 8.0
    min_displacement: float = 0.4


def track_points(flows, params=None):
    """Run the grid tracker over consecutive flows.

    ``flows[k]`` is the flow from frame k to k+1.  Returns one
    ``TrajectoryPointSet`` per frame (``len(flows) + 1`` sets).  Frame 0
    reports points by their first forward step; every later frame reports
    points by the step that brought them there.
    """
    params = params or TrackerParams()
    n_frames = len(flows) + 1
    sets = [TrajectoryPointSet(k) for k in range(n_frames)]
    live = []
    next_id = 0
    for k, flow in enumerate(flows):
        seeds = seed_points(flow, live, params.grid_step, params.mag_threshold,
                            frame_index=k, first_id=next_id)
        next_id += len(seeds)
        live, _ = advance_trajectories(live + seeds, flow, k + 1,
                                       params.max_length, params.max_jump)
        rows = []
        first_rows = []
        for t in live:
            (_, x0, y0), (_, x1, y1) = t.points[-2], t.points[-1]
            if np.hypot(x1 - x0, y1 - y0) >= params.min_displacement:
                rows.append((x1, y1, t.id))
                if k == 0:
                    first_rows.append((x0, y0, t.id))
        sets[k + 1] = TrajectoryPointSet(k + 1, np.asarray(rows, dtype=np.float64).reshape(-1, 3))
        if k == 0:
            sets[0] = TrajectoryPointSet(0, np.asarray(first_rows, dtype=np.float64).reshape(-1, 3))
    return sets


def point_sets_from_file(path, n_frames, width=None, height=None):
    """Per-frame point sets from a ``frame_index x y trajectory_id`` text file.

    Points outside the frame (when dimensions are given) are dropped.
    """
    per_frame = read_trajectory_points(path)
    sets = []
    for k in range(n_frames):
        pts = per_frame.get(k, np.zeros((0, 3)))
        if width is not None and height is not None and len(pts):
            keep = ((pts[:, 0] >= 0) & (pts[:, 0] <= width - 1)
                    & (pts[:, 1] >= 0) & (pts[:, 1] <= height - 1))
            pts = pts[keep]
        sets.append(TrajectoryPointSet(k, pts))
    return sets


def video_flows(gray_frames, window=5, pyramid_levels=3, eig_threshold=EIG_THRESHOLD):
    """Flow between every consecutive frame pair of a (T, H, W) float stack."""
    return [compute_flow(gray_frames[k], gray_frames[k + 1], window, pyramid_levels,
                         eig_threshold=eig_threshold)
            for k in range(len(gray_frames) - 1)]
