"""Fusion of a static and a motion vector into one descriptor.

Three schemes are provided:

* ``fuse_cholesky``: ``C = w_m * M + sqrt(1 - w_m**2) * S``.  Because the two
  coefficients are the rows of a 2x2 Cholesky factor, the correlation of C
  with M is exactly ``w_m`` for uncorrelated unit-variance inputs, so a
  requested motion:static contribution maps directly to weights
  (``rho_from_ratio``).
* ``fuse_variance``: each vector is treated as a histogram over its indices;
  the flatter one (larger spread) gets the smaller weight.
* ``fuse_pca``: the index-aligned pairs (s_i, m_i) are projected onto their
  first principal axis.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWarning, NotAHistogram, ShapeError

STANDARD_RATIOS = ((100, 0), (80, 20), (60, 40), (50, 50), (40, 60), (20, 80), (0, 100))
"""Contribution ratios swept in the experiments, written static:motion."""


@dataclass(frozen=True)
class ContributionRatio:
    motion_pct: float
    static_pct: float

    def __post_init__(self):
        if not (0 <= self.motion_pct <= 100 and 0 <= self.static_pct <= 100):
            raise ValueError("percentages must lie in [0, 100]")
        if not math.isclose(self.motion_pct + self.static_pct, 100.0, abs_tol=1e-9):
            raise ValueError(f"percentages must sum to 100, got "
                             f"{self.motion_pct} + {self.static_pct}")

    @classmethod
    def from_static_motion(cls, text):
        """Parse ``"80:20"`` as 80% static, 20% motion."""
        s, _, m = str(text).partition(":")
        return cls(float(m), float(s))

    @property
    def static_motion_label(self):
        return f"{self.static_pct:g}:{self.motion_pct:g}"

    @property
    def motion_static_label(self):
        return f"{self.motion_pct:g}:{self.static_pct:g}"


@dataclass(frozen=True)
class FusionWeights:
    w_motion: float
    w_static: float
    method: str = "cholesky"
    degenerate: bool = False

    def to_dict(self):
        return {"w_motion": self.w_motion, "w_static": self.w_static,
                "method": self.method, "degenerate": self.degenerate}


@dataclass(frozen=True)
class HistogramMoments:
    mu: float
    sigma: float


def rho_from_ratio(ratio):
    """Cholesky weights for a motion:static contribution ratio.

    With m, s the percentages, rho_1 = m / sqrt(m^2 + s^2) and the static
    weight is sqrt(1 - rho_1^2) = s / sqrt(m^2 + s^2).
    """
    m, s = float(ratio.motion_pct), float(ratio.static_pct)
    norm = math.hypot(m, s)
    return FusionWeights(m / norm, s / norm, "cholesky")


def _pair(S, M):
    s = np.asarray(S, dtype=np.float64)
    m = np.asarray(M, dtype=np.float64)
    if s.shape != m.shape or s.ndim != 1:
        raise ShapeError(f"static and motion vectors differ: {s.shape} vs {m.shape}")
    return s, m


def fuse_cholesky(S, M, weights):
    s, m = _pair(S, M)
    rho = float(weights.w_motion)
    return rho * m + math.sqrt(max(0.0, 1.0 - rho * rho)) * s


def histogram_moments(v):
    """Mean and standard deviation of the bin index under ``v / sum(v)``."""
    p = np.asarray(v, dtype=np.float64)
    if p.ndim != 1 or np.any(p < 0) or not np.all(np.isfinite(p)):
        raise NotAHistogram("histogram entries must be finite and nonnegative")
    total = p.sum()
    if total <= 0:
        raise NotAHistogram("histogram has no mass")
    p = p / total
    idx = np.arange(len(p), dtype=np.float64)
    mu = float(idx @ p)
    var = float(((idx - mu) ** 2) @ p)
    return HistogramMoments(mu, math.sqrt(max(var, 0.0)))


def variance_weights(S, M):
    """Weights sigma_s/(sigma_s+sigma_m) for motion, sigma_m/(...) for static."""
    s, m = _pair(S, M)
    sig_s = histogram_moments(s).sigma
    sig_m = histogram_moments(m).sigma
    total = sig_s + sig_m
    if total == 0:
        warnings.warn("both histograms are single-bin deltas; using 0.5/0.5",
                      DegenerateWarning, stacklevel=3)
        return FusionWeights(0.5, 0.5, "variance", degenerate=True)
    return FusionWeights(sig_s / total, sig_m / total, "variance")


def fuse_variance(S, M):
    """Scale each vector by the other's relative spread and add.

    Returns ``(C, weights)``.
    """
    s, m = _pair(S, M)
    w = variance_weights(s, m)
    return w.w_motion * m + w.w_static * s, w


def pca_2x2(cov):
    """Closed-form eigendecomposition of a symmetric 2x2 matrix.

    Returns ``(lam1, lam2, v1)`` with lam1 >= lam2 and v1 the unit eigenvector
    of lam1.
    """
    a, b, c = float(cov[0, 0]), float(cov[0, 1]), float(cov[1, 1])
    mean = 0.5 * (a + c)
    rad = math.hypot(0.5 * (a - c), b)
    lam1, lam2 = mean + rad, mean - rad
    if b == 0.0:
        v1 = np.array([1.0, 0.0]) if a >= c else np.array([0.0, 1.0])
    elif a >= c:
        v1 = np.array([lam1 - c, b])
    else:
        v1 = np.array([b, lam1 - a])
    return lam1, lam2, v1 / np.linalg.norm(v1)


def fuse_pca(S, M):
    """Project centred (s_i, m_i) pairs onto their first principal axis.

    Returns ``(C, share)`` with share = lam1 / (lam1 + lam2), the fraction
    of variance kept.  The axis sign is chosen so the static loading is
    nonnegative.
    """
    s, m = _pair(S, M)
    if len(s) < 2:
        raise ShapeError("PCA fusion needs at least 2 components")
    pairs = np.column_stack([s, m])
    centred = pairs - pairs.mean(axis=0)
    cov = centred.T @ centred / len(s)
    # constant inputs can leave rounding residue after centring
    if not np.any(cov) or (np.ptp(s) == 0 and np.ptp(m) == 0):
        warnings.warn("zero covariance; returning the static vector", DegenerateWarning,
                      stacklevel=2)
        return s.copy(), 1.0
    lam1, lam2, v1 = pca_2x2(cov)
    if v1[0] < 0 or (v1[0] == 0 and v1[1] < 0):
        v1 = -v1
    lam2 = max(lam2, 0.0)
    return centred @ v1, lam1 / (lam1 + lam2)


def fuse(S, M, method="cholesky", ratio=None):
    """Dispatch on ``method``; returns ``(C, info)`` where info is a dict for reports."""
    if method == "cholesky":
        w = rho_from_ratio(ratio or ContributionRatio(50, 50))
        return fuse_cholesky(S, M, w), {"weights": w}
    if method == "variance":
        c, w = fuse_variance(S, M)
        return c, {"weights": w}
    if method == "pca":
        c, share = fuse_pca(S, M)
        return c, {"pca_share": share}
    raise ValueError(f"unknown fusion method {method!r}")
