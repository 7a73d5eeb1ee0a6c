"""Segment descriptors: HOOF histograms, bag-of-HOOF encoding, static vectors."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataGap, ShapeError, SmallCorpus
from .formats import read_vten, write_json, write_vten, read_json

HOOF_BINS = 100
CODEBOOK_SIZE = 1000
CODEBOOK_SAMPLE = 100_000
DESCRIPTOR_DIM = 1000


def hoof_bin_edges(bins):
    """Bin b (0-based) covers edges[b] <= theta < edges[b + 1]."""
    return -np.pi / 2 + np.pi * np.arange(bins + 1) / bins


def primary_angles(vectors):
    """Angle from the horizontal axis folded into [-pi/2, pi/2).

    Each vector is first flipped into the right half-plane, so z and -z get
    the same angle bit for bit.
    """
    v = np.asarray(vectors, dtype=np.float64).reshape(-1, 2)
    x, y = v[:, 0], v[:, 1]
    flip = (x < 0) | ((x == 0) & (y > 0))
    x = np.where(flip, -x, x)
    y = np.where(flip, -y, y)
    theta = np.arctan2(y, x)
    # near-vertical vectors can round up to +pi/2, which folds onto -pi/2
    return np.where(theta >= np.pi / 2, -np.pi / 2, theta)


def compute_hoof(flow_vectors, bins=HOOF_BINS):
    """Magnitude-weighted histogram of folded flow angles, L1-normalised.

    Returns all zeros when there is no flow at all.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    v = np.asarray(flow_vectors, dtype=np.float64).reshape(-1, 2)
    hist = np.zeros(bins)
    if len(v) == 0:
        return hist
    weights = np.hypot(v[:, 0], v[:, 1])
    idx = np.searchsorted(hoof_bin_edges(bins), primary_angles(v), side="right") - 1
    idx = np.clip(idx, 0, bins - 1)
    hist = np.bincount(idx, weights=weights, minlength=bins)
    total = hist.sum()
    if total > 0:
        hist /= total
    return hist


def box_flow_vectors(flow, box):
    """Flow vectors at the pixels covered by ``box``, as an (n, 2) array."""
    x0, y0 = max(int(box.x), 0), max(int(box.y), 0)
    x1 = min(int(box.x + box.r), flow.width)
    y1 = min(int(box.y + box.r), flow.height)
    if x1 <= x0 or y1 <= y0:
        return np.zeros((0, 2))
    return np.column_stack([flow.u[y0:y1, x0:x1].ravel(), flow.v[y0:y1, x0:x1].ravel()])


def extract_segment_hoofs(tubes, flows, bins=HOOF_BINS):
    """One HOOF per (tube, frame) box, tube-major, as a (tubes * frames, bins) array.

    ``flows`` maps a frame index to the flow field leaving that frame.
    """
    rows = [compute_hoof(box_flow_vectors(flows[box.f], box), bins)
            for tube in tubes for box in tube.boxes]
    return np.asarray(rows, dtype=np.float64).reshape(-1, bins)


@dataclass
class Codebook:
    centers: np.ndarray
    train_sample_count: int = 0
    seed: int = 0
    objective_history: list = field(default_factory=list)

    @property
    def k(self):
        return self.centers.shape[0]

    def save(self, path):
        write_vten(path, self.centers, dtype=np.float64)
        write_json(str(path) + ".json", {"train_sample_count": self.train_sample_count,
                                         "seed": self.seed,
                                         "objective_history": self.objective_history})

    @classmethod
    def load(cls, path):
        meta_path = Path(str(path) + ".json")
        meta = read_json(meta_path) if meta_path.exists() else {}
        return cls(read_vten(path).astype(np.float64), meta.get("train_sample_count", 0),
                   meta.get("seed", 0), meta.get("objective_history", []))


def _sq_distances(x, centers, chunk=2048):
    c2 = (centers ** 2).sum(axis=1)
    out = np.empty((len(x), len(centers)))
    for s in range(0, len(x), chunk):
        xs = x[s:s + chunk]
        d = (xs ** 2).sum(axis=1)[:, None] - 2.0 * xs @ centers.T + c2[None, :]
        out[s:s + chunk] = np.maximum(d, 0.0)
    return out


def _kmeans_pp(x, k, rng):
    n = len(x)
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            # remaining points all coincide with chosen centers
            centers[j:] = centers[0]
            break
        i = rng.choice(n, p=closest / total)
        centers[j] = x[i]
        closest = np.minimum(closest, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def kmeans(x, k, rng, max_iter=100, tol=1e-6):
    """Lloyd's algorithm with k-means++ seeding.

    Returns ``(centers, labels, objective_history)``; the history holds the
    within-cluster sum of squares after seeding and after every update.
    """
    x = np.asarray(x, dtype=np.float64)
    centers = _kmeans_pp(x, k, rng)
    labels = _sq_distances(x, centers).argmin(axis=1)
    history = [float(((x - centers[labels]) ** 2).sum())]
    for _ in range(max_iter):
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, x)
        counts = np.bincount(labels, minlength=k)
        nonempty = counts > 0
        centers = centers.copy()
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        labels = _sq_distances(x, centers).argmin(axis=1)
        obj = float(((x - centers[labels]) ** 2).sum())
        prev = history[-1]
        history.append(obj)
        if prev == 0 or (prev - obj) / prev < tol:
            break
    return centers, labels, history


def build_codebook(hoofs, k=CODEBOOK_SIZE, sample_n=CODEBOOK_SAMPLE, seed=0,
                   max_iter=100, tol=1e-6):
    """k-means codebook over a uniform random sample of the HOOF corpus.

    Raises ``SmallCorpus`` (carrying the achievable k) when the sample holds
    fewer than k distinct vectors.
    """
    corpus = np.asarray(hoofs, dtype=np.float64)
    if corpus.ndim != 2 or len(corpus) == 0:
        raise ValueError("codebook corpus must be a nonempty 2-D array")
    rng = np.random.default_rng(seed)
    m = min(sample_n, len(corpus))
    sample = corpus[np.sort(rng.choice(len(corpus), size=m, replace=False))]
    distinct = len(np.unique(sample, axis=0))
    if distinct < k:
        raise SmallCorpus(distinct, k)
    centers, _, history = kmeans(sample, k, rng, max_iter, tol)
    return Codebook(centers, m, seed, history)


def nearest_centers(vectors, centers, chunk=256):
    """Index of the nearest center for each vector; ties go to the lowest index."""
    v = np.asarray(vectors, dtype=np.float64).reshape(-1, centers.shape[1])
    out = np.empty(len(v), dtype=int)
    for s in range(0, len(v), chunk):
        d = ((v[s:s + chunk, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        out[s:s + chunk] = d.argmin(axis=1)
    return out


def encode_bow(segment_hoofs, codebook):
    """Histogram of nearest-codeword counts; sums to the number of HOOFs."""
    centers = codebook.centers if isinstance(codebook, Codebook) else np.asarray(codebook)
    hist = np.zeros(len(centers))
    if len(segment_hoofs) == 0:
        return hist
    return np.bincount(nearest_centers(segment_hoofs, centers),
                       minlength=len(centers)).astype(np.float64)


class ToyStaticProvider:
    """Deterministic stand-in for CNN frame features.

    Each frame gives an 8x8 spatial grid x 8 intensity-bin histogram (512
    bins), projected by a fixed nonnegative random matrix and L1-normalised.
    """

    grid = 8
    levels = 8

    def __init__(self, seed=0, dim=DESCRIPTOR_DIM):
        self.seed = int(seed)
        self.dim = int(dim)
        rng = np.random.default_rng(self.seed)
        self.projection = rng.random((self.grid * self.grid * self.levels, self.dim))

    def __repr__(self):
        return f"toy:{self.seed}"

    def frame_histogram(self, frame):
        a = np.asarray(frame)
        if a.ndim == 3:
            a = np.rint(a[..., :3].astype(np.float64) @ [0.299, 0.587, 0.114])
        a = np.clip(a, 0, 255).astype(np.int64)
        h, w = a.shape
        row_cell = (np.arange(h) * self.grid) // h
        col_cell = (np.arange(w) * self.grid) // w
        cell = row_cell[:, None] * self.grid + col_cell[None, :]
        level = (a * self.levels) // 256
        idx = (cell * self.levels + level).ravel()
        hist = np.bincount(idx, minlength=self.grid * self.grid * self.levels).astype(np.float64)
        return hist / hist.sum()

    def frame_vectors(self, frames, frame_indices=None):
        out = np.array([self.frame_histogram(f) for f in frames]) @ self.projection
        return out / out.sum(axis=1, keepdims=True)


class FileStaticProvider:
    """Per-frame feature rows read from a VTEN (frames x D) file.

    When ``dim`` differs from D, rows are mapped to ``dim`` by a fixed
    nonnegative random projection that preserves each row's L1 mass.
    """

    def __init__(self, path, dim=None, seed=0):
        self.path = Path(path)
        self.rows = np.asarray(read_vten(self.path), dtype=np.float64)
        if self.rows.ndim != 2:
            raise ShapeError(f"{path}: static features must be (frames, D)")
        self.dim = self.rows.shape[1] if dim is None else int(dim)
        self.projection = None
        if self.dim != self.rows.shape[1]:
            rng = np.random.default_rng(seed)
            p = rng.random((self.rows.shape[1], self.dim))
            self.projection = p / p.sum(axis=1, keepdims=True)

    def __repr__(self):
        return f"file:{self.path}"

    def frame_vectors(self, frames, frame_indices=None):
        if frame_indices is None:
            frame_indices = range(len(frames))
        frame_indices = list(frame_indices)
        for k in frame_indices:
            if not 0 <= k < len(self.rows):
                raise DataGap(k, f"{self.path} has no static feature row for frame {k}")
        out = self.rows[frame_indices]
        if not np.all(np.isfinite(out)):
            bad = frame_indices[int(np.flatnonzero(~np.isfinite(out).all(axis=1))[0])]
            raise DataGap(bad, f"{self.path}: non-finite static row for frame {bad}")
        return out @ self.projection if self.projection is not None else out


def parse_static_provider(spec, dim=DESCRIPTOR_DIM, base_dir=None):
    """Build a provider from ``toy:<seed>`` or ``file:<path>``.

    A relative file path is resolved against ``base_dir`` (the video folder).
    """
    kind, _, arg = str(spec).partition(":")
    if kind == "toy":
        return ToyStaticProvider(int(arg or 0), dim)
    if kind == "file":
        path = Path(arg)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return FileStaticProvider(path, dim)
    raise ValueError(f"unknown static provider {spec!r}; use toy:<seed> or file:<path>")


def static_descriptor(frames, provider, frame_indices=None):
    """Component-wise mean of the provider's per-frame vectors over a segment."""
    return provider.frame_vectors(frames, frame_indices).mean(axis=0)
